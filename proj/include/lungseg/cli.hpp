#pragma once

// `lungseg` command line: segment, seeds, eval, eval-batch, corr, phantom,
// serve. Exit codes: 0 success, 1 operational error, 2 usage error. Every
// error prints one line "error: <Code>: <message>" to stderr.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "lungseg/fuzzy_connectedness.hpp"
#include "lungseg/metrics.hpp"
#include "lungseg/phantom.hpp"
#include "lungseg/seed_selection.hpp"
#include "lungseg/service.hpp"
#include "lungseg/volume_io.hpp"

namespace lungseg::cli {

inline std::string one_decimal(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.1f", v);
  return buf;
}

inline std::string read_text(const std::string& path) {
  const auto bytes = io::read_file(path);
  return {bytes.begin(), bytes.end()};
}

/// "<dir>/<stem><suffix><ext>" where ext is ".nii.gz", ".nii", ... of `path`.
inline std::string sibling_path(const std::string& path, const std::string& suffix) {
  for (const char* ext : {".nii.gz", ".nii", ".hdr.gz", ".hdr", ".img.gz", ".img"}) {
    if (io::ends_with(path, ext)) {
      const std::size_t n = std::char_traits<char>::length(ext);
      return path.substr(0, path.size() - n) + suffix + ext;
    }
  }
  return path + suffix + ".nii.gz";
}

struct SegmentArgs {
  std::string input;
  std::string output;
  std::string seeds_path;
  double mean = -550.0;
  double sigma = 150.0;
  double theta = kDefaultTheta;
  int adjacency = 6;
  bool per_side = false;
};

inline int do_segment(const SegmentArgs& a, std::ostream& out, std::ostream& err) {
  const HUVolume volume = io::load_volume(a.input);
  const AffinityParams params{a.mean, a.sigma, a.adjacency};
  FcResult result;
  if (a.seeds_path.empty()) {
    result = segment_auto(volume, params, a.theta);
  } else {
    SeedSet seeds = service::seeds_from_json(service::json::parse(read_text(a.seeds_path)));
    seeds = validate_manual_seeds(volume, seeds);
    for (const auto& w : seeds.warnings) err << "warning: " << w << "\n";
    result = segment_lungs(volume, seeds, params, a.theta);
  }
  if (a.per_side) io::save_labels(side_labels(result), a.output);
  else io::save_mask(result.combined_mask, a.output);
  out << "left_ml: " << one_decimal(metrics::volume_ml(result.left_mask)) << "\n";
  out << "right_ml: " << one_decimal(metrics::volume_ml(result.right_mask)) << "\n";
  out << "combined_ml: " << one_decimal(metrics::volume_ml(result.combined_mask)) << "\n";
  return 0;
}

inline int do_seeds(const std::string& input, std::ostream& out) {
  const HUVolume volume = io::load_volume(input);
  const AutoSeedResult r = auto_seeds(volume);
  out << service::seed_document(r.seeds, volume).dump(2) << "\n";
  return 0;
}

inline int do_eval(const std::string& ref, const std::string& pred, std::optional<int> ref_label,
                   std::optional<int> pred_label, std::ostream& out) {
  const BinaryMask a = io::load_mask(ref, ref_label);
  const BinaryMask b = io::load_mask(pred, pred_label);
  out << "overlap " << metrics::fixed3(metrics::overlap_coefficient(a, b)) << "\n";
  out << "dice " << metrics::fixed3(metrics::dice_coefficient(a, b)) << "\n";
  return 0;
}

inline int do_eval_batch(const std::string& manifest_path, unsigned jobs, std::ostream& out) {
  const auto rows = metrics::parse_overlap_manifest(read_text(manifest_path));
  if (rows.empty()) throw Error(ErrorCode::EmptyInput, "manifest has no cases");
  const auto base = std::filesystem::path(manifest_path).parent_path();
  auto resolve = [&](const std::string& p) {
    std::filesystem::path path(p);
    return (path.is_absolute() ? path : base / path).string();
  };

  std::vector<double> overlaps(rows.size());
  jobs = std::max(1u, jobs);
  for (std::size_t start = 0; start < rows.size(); start += jobs) {
    std::vector<std::future<double>> batch;
    for (std::size_t i = start; i < std::min(rows.size(), start + jobs); ++i) {
      batch.push_back(std::async(std::launch::async, [&, i] {
        const auto& row = rows[i];
        return metrics::overlap_coefficient(io::load_mask(resolve(row.reference_path), row.reference_label),
                                            io::load_mask(resolve(row.predicted_path), row.label));
      }));
    }
    for (std::size_t k = 0; k < batch.size(); ++k) overlaps[start + k] = batch[k].get();
  }

  std::vector<std::string> objects;
  for (const auto& row : rows) {
    if (std::find(objects.begin(), objects.end(), row.object_name) == objects.end()) objects.push_back(row.object_name);
  }
  std::vector<metrics::OverlapSummary> summaries;
  for (const auto& object : objects) {
    std::vector<double> values;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].object_name == object) values.push_back(overlaps[i]);
    }
    summaries.push_back(metrics::summary_stats(values, object));
  }
  out << metrics::format_overlap_table(summaries);
  return 0;
}

inline int do_corr(const std::string& path, std::ostream& out) {
  const auto table = metrics::parse_volume_table(read_text(path));
  out << metrics::format_correlation_table(metrics::pearson_correlation_matrix(table));
  return 0;
}

struct PhantomArgs {
  std::string output;
  int size = 128;
  double noise = 50.0;
  std::uint64_t rng_seed = 0;
  double spacing = 1.0;
};

inline int do_phantom(const PhantomArgs& a, std::ostream& out) {
  PhantomSpec spec;
  spec.dims = {a.size, a.size, a.size};
  spec.spacing = {a.spacing, a.spacing, a.spacing};
  spec.lung_noise_sd = a.noise;
  spec.rng_seed = a.rng_seed;
  const Phantom p = generate_thorax_phantom(spec);
  const std::string left = sibling_path(a.output, "_truth_left");
  const std::string right = sibling_path(a.output, "_truth_right");
  io::save_volume(p.volume, a.output);
  io::save_mask(p.truth_left, left);
  io::save_mask(p.truth_right, right);
  out << "volume: " << a.output << "\n" << "truth_left: " << left << "\n" << "truth_right: " << right << "\n";
  return 0;
}

struct ServeArgs {
  std::string host = "0.0.0.0";
  int port = 8080;
  std::string static_dir;
  std::string cors_origin = "*";
};

inline int do_serve(const ServeArgs& a, std::ostream& out) {
  service::AnnotationService svc;
  httplib::Server server;
  service::install_routes(server, svc, {a.cors_origin, a.static_dir});
  out << "listening on " << a.host << ":" << a.port << std::endl;
  if (!server.listen(a.host, a.port)) throw Error(ErrorCode::IoError, "cannot listen on port " + std::to_string(a.port));
  return 0;
}

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Lung-field annotation toolkit for CT volumes", "lungseg"};
  app.require_subcommand(1);

  SegmentArgs seg;
  auto* segment = app.add_subcommand("segment", "Segment both lungs and write the mask");
  segment->add_option("input", seg.input, "CT volume (NIfTI-1 / ANALYZE 7.5)")->required();
  segment->add_option("-o,--output", seg.output, "Output mask path (.nii or .nii.gz)")->required();
  segment->add_option("--seeds", seg.seeds_path, "JSON seed file (as printed by `seeds`) instead of automatic seeds");
  segment->add_option("--mean", seg.mean, "Affinity mean (HU)");
  segment->add_option("--sigma", seg.sigma, "Affinity sigma (HU)")->check(CLI::PositiveNumber);
  segment->add_option("--theta", seg.theta, "Connectivity threshold in (0, 1]")->check(CLI::Range(0.0, 1.0));
  segment->add_option("--adjacency", seg.adjacency, "6 or 26")->check(CLI::IsMember({6, 26}));
  segment->add_flag("--per-side", seg.per_side, "Write labels 1 (right) and 2 (left) instead of 0/1");

  std::string seeds_input;
  auto* seeds = app.add_subcommand("seeds", "Print automatic seeds as JSON");
  seeds->add_option("input", seeds_input, "CT volume")->required();

  std::string ref, pred;
  std::optional<int> eval_label, eval_ref_label;
  auto* eval = app.add_subcommand("eval", "Overlap and Dice between two masks");
  eval->add_option("reference", ref)->required();
  eval->add_option("predicted", pred)->required();
  eval->add_option("--label", eval_label, "Take predicted voxels equal to this label instead of nonzero");
  eval->add_option("--ref-label", eval_ref_label, "Take reference voxels equal to this label instead of nonzero");

  std::string manifest;
  unsigned jobs = std::max(1u, std::thread::hardware_concurrency());
  auto* eval_batch = app.add_subcommand("eval-batch", "Cohort overlap report from a manifest CSV");
  eval_batch->add_option("manifest", manifest, "CSV: case_id,reference_path,predicted_path[,object,label,reference_label]")->required();
  eval_batch->add_option("-j,--jobs", jobs, "Cases evaluated in parallel")->check(CLI::PositiveNumber);

  std::string volumes_csv;
  auto* corr = app.add_subcommand("corr", "Pearson correlation of per-method volumes");
  corr->add_option("volumes", volumes_csv, "CSV: case_id,method,volume_ml")->required();

  PhantomArgs ph;
  auto* phantom = app.add_subcommand("phantom", "Write a synthetic thorax phantom and its truth masks");
  phantom->add_option("-o,--output", ph.output, "Volume path; truth masks go next to it")->required();
  phantom->add_option("--size", ph.size, "Voxels per axis (>= 32)");
  phantom->add_option("--noise", ph.noise, "Lung noise standard deviation (HU)");
  phantom->add_option("--rng-seed", ph.rng_seed, "Noise seed");
  phantom->add_option("--spacing", ph.spacing, "Isotropic voxel spacing (mm)")->check(CLI::PositiveNumber);

  ServeArgs sv;
  if (const char* env = std::getenv("LUNGSEG_PORT")) sv.port = std::atoi(env);
  auto* serve = app.add_subcommand("serve", "Run the annotation HTTP service");
  serve->add_option("--port", sv.port, "TCP port (default $LUNGSEG_PORT or 8080)");
  serve->add_option("--host", sv.host, "Bind address");
  serve->add_option("--static", sv.static_dir, "Directory served at / (web UI build)");
  serve->add_option("--cors-origin", sv.cors_origin, "Access-Control-Allow-Origin value");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    std::string msg = e.what();
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    err << "error: UsageError: " << msg << "\n";
    return 2;
  }

  try {
    if (*segment) return do_segment(seg, out, err);
    if (*seeds) return do_seeds(seeds_input, out);
    if (*eval) return do_eval(ref, pred, eval_ref_label, eval_label, out);
    if (*eval_batch) return do_eval_batch(manifest, jobs, out);
    if (*corr) return do_corr(volumes_csv, out);
    if (*phantom) return do_phantom(ph, out);
    if (*serve) return do_serve(sv, out);
  } catch (const Error& e) {
    std::string msg = e.what();
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    err << "error: " << e.code_name() << ": " << msg << (e.side().empty() ? "" : " (side=" + e.side() + ")") << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::string msg = e.what();
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    err << "error: Internal: " << msg << "\n";
    return 1;
  }
  return 2;
}

}  // namespace lungseg::cli
