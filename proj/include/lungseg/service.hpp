#pragma once

// Session-oriented annotation backend. `AnnotationService` owns the sessions
// and speaks JSON; `install_routes` exposes it over HTTP.

#include <atomic>
#include <chrono>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <shared_mutex>
#include <string>

#include "httplib.h"
#include "json.hpp"
#include "lungseg/error.hpp"
#include "lungseg/fuzzy_connectedness.hpp"
#include "lungseg/mask_edit.hpp"
#include "lungseg/metrics.hpp"
#include "lungseg/render.hpp"
#include "lungseg/seed_selection.hpp"
#include "lungseg/volume_io.hpp"

namespace lungseg::service {

using json = nlohmann::json;
using Clock = std::chrono::steady_clock;

struct ServiceConfig {
  std::chrono::seconds idle_timeout{30 * 60};
  std::chrono::seconds segment_timeout{120};
};

struct Session {
  std::string id;
  std::shared_ptr<const HUVolume> volume;
  BinaryMask mask;
  // Side ownership from the latest segmentation; voxels added later outside
  // both are attributed by which side of the body centroid they fall on.
  BinaryMask segmented_left;
  BinaryMask segmented_right;
  double midline_leftness = 0.0;
  LateralAxis lateral;
  std::optional<SeedSet> seeds;
  SeedSet stroke_seeds;
  EditHistory history;
  AffinityParams params;
  double theta = kDefaultTheta;
  std::chrono::system_clock::time_point created_at;
  Clock::time_point last_access;
  mutable std::shared_mutex mutex;
};

struct SideVolumes {
  double left = 0.0;
  double right = 0.0;
  double combined = 0.0;
};

inline json seeds_to_json(const SeedSet& seeds, const HUVolume& volume) {
  json list = json::array();
  for (Side side : {Side::Left, Side::Right}) {
    for (const Coord& c : seeds.side(side)) {
      list.push_back({{"side", to_string(side)}, {"x", c.x}, {"y", c.y}, {"z", c.z}, {"hu", volume.at(c)}});
    }
  }
  return list;
}

/// Accepts {"left": [...], "right": [...]} whose entries are [x,y,z] or
/// {"x","y","z"} objects, or a flat list of {"side","x","y","z"} objects.
inline SeedSet seeds_from_json(const json& j) {
  SeedSet seeds;
  seeds.provenance = SeedProvenance::ManualClick;
  auto coord = [](const json& p) -> Coord {
    if (p.is_array() && p.size() == 3) return {p[0].get<int>(), p[1].get<int>(), p[2].get<int>()};
    if (p.is_object()) return {p.at("x").get<int>(), p.at("y").get<int>(), p.at("z").get<int>()};
    throw Error(ErrorCode::ParseError, "seed coordinates must be [x,y,z] or {x,y,z}");
  };
  if (j.is_object()) {
    for (Side side : {Side::Left, Side::Right}) {
      if (!j.contains(to_string(side))) continue;
      for (const auto& p : j.at(to_string(side))) seeds.side(side).push_back(coord(p));
    }
    return seeds;
  }
  if (j.is_array()) {
    for (const auto& p : j) {
      const std::string side = p.at("side").get<std::string>();
      if (side != "left" && side != "right") throw Error(ErrorCode::ParseError, "seed side must be left or right");
      (side == "left" ? seeds.left : seeds.right).push_back(coord(p));
    }
    return seeds;
  }
  throw Error(ErrorCode::ParseError, "unrecognised seed document");
}

/// {"provenance", "left": [{x,y,z,hu}], "right": [...], "warnings"}
inline json seed_document(const SeedSet& seeds, const HUVolume& volume) {
  json doc = {{"provenance", to_string(seeds.provenance)}, {"warnings", seeds.warnings}};
  for (Side side : {Side::Left, Side::Right}) {
    json list = json::array();
    for (const Coord& c : seeds.side(side)) list.push_back({{"x", c.x}, {"y", c.y}, {"z", c.z}, {"hu", volume.at(c)}});
    doc[to_string(side)] = list;
  }
  return doc;
}

inline AffinityParams params_from_json(const json& p, AffinityParams base, double& theta) {
  if (!p.is_object()) throw Error(ErrorCode::ParseError, "params must be an object");
  if (p.contains("mean")) base.mean_hu = p["mean"].get<double>();
  if (p.contains("sigma")) base.sigma_hu = p["sigma"].get<double>();
  if (p.contains("adjacency")) base.adjacency = p["adjacency"].get<int>();
  if (p.contains("theta")) theta = p["theta"].get<double>();
  validate(base);
  validate_theta(theta);
  return base;
}

inline Stroke stroke_from_json(const json& j) {
  try {
    Stroke s;
    const auto plane = parse_plane(j.at("plane").get<std::string>());
    if (!plane) throw Error(ErrorCode::InvalidStroke, "plane must be axial, coronal or sagittal");
    s.plane = *plane;
    s.slice_index = j.at("slice_index").get<int>();
    for (const auto& p : j.at("points")) {
      if (!p.is_array() || p.size() != 2) throw Error(ErrorCode::InvalidStroke, "points must be [[x,y],...]");
      s.points.push_back({p[0].get<double>(), p[1].get<double>()});
    }
    s.radius_px = j.contains("radius_px") ? j["radius_px"].get<int>() : 0;
    const auto mode = parse_stroke_mode(j.at("mode").get<std::string>());
    if (!mode) throw Error(ErrorCode::InvalidStroke, "mode must be add, delete, seed-left or seed-right");
    s.mode = *mode;
    return s;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidStroke, std::string("malformed stroke: ") + e.what());
  }
}

class AnnotationService {
 public:
  explicit AnnotationService(ServiceConfig config = {}) : config_(config) {}

  json create_session(HUVolume volume) {
    auto s = std::make_shared<Session>();
    s->id = new_id();
    s->volume = std::make_shared<const HUVolume>(std::move(volume));
    const auto& g = s->volume->geometry;
    s->mask = BinaryMask(g, "combined");
    s->segmented_left = BinaryMask(g, "left-lung");
    s->segmented_right = BinaryMask(g, "right-lung");
    s->lateral = lateral_axis(g);
    s->midline_leftness = s->lateral.leftness((g.dims[s->lateral.axis] - 1) / 2.0);
    s->created_at = std::chrono::system_clock::now();
    s->last_access = Clock::now();
    const auto [lo, hi] = std::minmax_element(s->volume->values.begin(), s->volume->values.end());
    const auto codes = g.axis_codes();
    json out = {{"session_id", s->id},
                {"dims", g.dims},
                {"spacing", g.spacing},
                {"hu_min", *lo},
                {"hu_max", *hi},
                {"axis_codes", std::string(codes.begin(), codes.end())}};
    std::lock_guard lock(sessions_mutex_);
    evict_idle_locked();
    sessions_[s->id] = std::move(s);
    return out;
  }

  json create_session_from_bytes(std::span<const std::uint8_t> bytes) { return create_session(io::decode_nifti(bytes)); }
  json create_session_from_path(const std::string& path) { return create_session(io::load_volume(path)); }

  std::vector<std::uint8_t> render_slice_png(const std::string& id, const std::string& plane_name, int index,
                                             double window_center, double window_width, bool overlay) {
    auto s = get(id);
    const auto plane = parse_plane(plane_name);
    if (!plane) throw Error(ErrorCode::IndexOutOfRange, "unknown plane '" + plane_name + "'");
    std::shared_lock lock(s->mutex);
    return render::encode_png(render::render_slice(*s->volume, &s->mask, *plane, index, window_center, window_width, overlay));
  }

  json run_segmentation(const std::string& id, const json& request) {
    auto s = get(id);
    std::unique_lock lock(s->mutex);
    const auto start = Clock::now();
    const std::string mode = request.value("mode", std::string("auto"));
    // Omitted parameters take their defaults, not the previous run's values.
    double theta = kDefaultTheta;
    const AffinityParams params =
        request.contains("params") ? params_from_json(request["params"], AffinityParams{}, theta) : AffinityParams{};

    const HUVolume& volume = *s->volume;
    FcOptions options;
    options.deadline = start + config_.segment_timeout;
    FcResult result;
    SeedSet used;
    if (mode == "auto") {
      AutoSeedResult autos = auto_seeds(volume);
      used = autos.seeds;
      result = segment_lungs(volume, used, params, theta, &autos.body, options);
    } else if (mode == "seeded") {
      used = request.contains("seeds") ? seeds_from_json(request["seeds"]) : s->stroke_seeds;
      for (Side side : {Side::Left, Side::Right}) {
        if (used.side(side).empty()) {
          throw Error(ErrorCode::MissingSide, "no " + to_string(side) + " seed supplied", to_string(side));
        }
      }
      used = validate_manual_seeds(volume, used);
      result = segment_lungs(volume, used, params, theta, nullptr, options);
    } else {
      throw Error(ErrorCode::ParseError, "mode must be auto or seeded");
    }

    s->mask = result.combined_mask;
    s->segmented_left = result.left_mask;
    s->segmented_right = result.right_mask;
    s->midline_leftness = s->lateral.leftness(centroid(result.body)[s->lateral.axis]);
    s->seeds = used;
    s->params = params;
    s->theta = theta;
    s->history.clear();

    const auto volumes = side_volumes(*s);
    const auto elapsed = std::chrono::duration<double, std::milli>(Clock::now() - start).count();
    return {{"volumes_ml", {{"left", volumes.left}, {"right", volumes.right}, {"combined", volumes.combined}}},
            {"seeds", seeds_to_json(used, volume)},
            {"provenance", to_string(used.provenance)},
            {"warnings", used.warnings},
            {"elapsed_ms", elapsed}};
  }

  json submit_stroke(const std::string& id, const json& body) {
    auto s = get(id);
    const Stroke stroke = stroke_from_json(body);
    std::unique_lock lock(s->mutex);
    if (stroke.mode == StrokeMode::SeedLeft || stroke.mode == StrokeMode::SeedRight) {
      SeedSet partial = seeds_from_stroke(stroke, s->volume->geometry);
      const Side side = stroke.mode == StrokeMode::SeedLeft ? Side::Left : Side::Right;
      s->stroke_seeds.side(side) = partial.side(side);
      s->stroke_seeds.provenance = SeedProvenance::ManualStroke;
      return {{"changed", 0},
              {"volume_ml", metrics::volume_ml(s->mask)},
              {"seed_counts", {{"left", s->stroke_seeds.left.size()}, {"right", s->stroke_seeds.right.size()}}}};
    }
    const EditRecord& record = s->history.apply(s->mask, stroke);
    return {{"changed", record.changed_voxels.size()}, {"volume_ml", metrics::volume_ml(s->mask)}};
  }

  json undo(const std::string& id) {
    auto s = get(id);
    std::unique_lock lock(s->mutex);
    const auto record = s->history.undo_last(s->mask);
    return {{"changed", record ? record->changed_voxels.size() : 0}, {"volume_ml", metrics::volume_ml(s->mask)}};
  }

  /// gzip-compressed single-file NIfTI of the current combined mask.
  std::vector<std::uint8_t> export_mask(const std::string& id) {
    auto s = get(id);
    std::shared_lock lock(s->mutex);
    return io::gzip(io::encode_mask(s->mask));
  }

  json get_metrics(const std::string& id) {
    auto s = get(id);
    std::shared_lock lock(s->mutex);
    const auto v = side_volumes(*s);
    return {{"left", v.left}, {"right", v.right}, {"combined", v.combined}};
  }

  /// Snapshot of the current mask (tests and CLI parity checks).
  BinaryMask mask(const std::string& id) {
    auto s = get(id);
    std::shared_lock lock(s->mutex);
    return s->mask;
  }

  std::size_t session_count() {
    std::lock_guard lock(sessions_mutex_);
    return sessions_.size();
  }

  void evict_idle() {
    std::lock_guard lock(sessions_mutex_);
    evict_idle_locked();
  }

 private:
  std::shared_ptr<Session> get(const std::string& id) {
    std::lock_guard lock(sessions_mutex_);
    evict_idle_locked();
    auto it = sessions_.find(id);
    if (it == sessions_.end()) throw Error(ErrorCode::WrongSession, "unknown session " + id);
    it->second->last_access = Clock::now();
    return it->second;
  }

  void evict_idle_locked() {
    const auto now = Clock::now();
    for (auto it = sessions_.begin(); it != sessions_.end();) {
      if (now - it->second->last_access > config_.idle_timeout) it = sessions_.erase(it);
      else ++it;
    }
  }

  std::string new_id() {
    std::lock_guard lock(rng_mutex_);
    std::uniform_int_distribution<std::uint64_t> dist;
    char buf[33];
    std::snprintf(buf, sizeof(buf), "%016llx%016llx", static_cast<unsigned long long>(dist(rng_)),
                  static_cast<unsigned long long>(dist(rng_)));
    return buf;
  }

  static SideVolumes side_volumes(const Session& s) {
    const auto& g = s.mask.geometry;
    std::size_t left = 0, right = 0;
    for (std::size_t i = 0; i < s.mask.size(); ++i) {
      if (!s.mask.values[i]) continue;
      bool is_left;
      if (s.segmented_left.values[i]) is_left = true;
      else if (s.segmented_right.values[i]) is_left = false;
      else is_left = s.lateral.leftness(g.coord(i)[s.lateral.axis]) > s.midline_leftness;
      (is_left ? left : right) += 1;
    }
    const double voxel_ml = g.voxel_volume_mm3() / 1000.0;
    return {left * voxel_ml, right * voxel_ml, static_cast<double>(left + right) * voxel_ml};
  }

  ServiceConfig config_;
  std::mutex sessions_mutex_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::mutex rng_mutex_;
  std::mt19937_64 rng_{std::random_device{}()};
};

// ---------------------------------------------------------------------------
// HTTP
// ---------------------------------------------------------------------------

inline int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::WrongSession:
    case ErrorCode::FileNotFound: return 404;
    case ErrorCode::NoMask: return 409;
    case ErrorCode::Timeout: return 504;
    case ErrorCode::IoError: return 500;
    default: return 422;
  }
}

inline json error_body(const Error& e) {
  json err = {{"code", std::string(e.code_name())}, {"message", e.what()}};
  if (!e.side().empty()) err["side"] = e.side();
  if (e.code() == ErrorCode::MissingSide) err["action"] = "paint a seed-" + e.side() + " stroke and run mode=seeded";
  return {{"error", err}};
}

namespace detail {

template <typename Fn>
void guarded(httplib::Response& res, Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    res.status = http_status(e.code());
    res.set_content(error_body(e).dump(), "application/json");
  } catch (const json::exception& e) {
    const Error wrapped(ErrorCode::ParseError, std::string("malformed JSON: ") + e.what());
    res.status = 422;
    res.set_content(error_body(wrapped).dump(), "application/json");
  } catch (const std::exception& e) {
    res.status = 500;
    res.set_content(json{{"error", {{"code", "Internal"}, {"message", e.what()}}}}.dump(), "application/json");
  }
}

inline json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  return json::parse(req.body);
}

inline double query_double(const httplib::Request& req, const char* key, double fallback) {
  if (!req.has_param(key)) return fallback;
  return metrics::parse_number(req.get_param_value(key), key);
}

}  // namespace detail

struct HttpOptions {
  std::string cors_origin = "*";
  std::string static_dir;  // optional directory served at "/"
};

inline void install_routes(httplib::Server& server, AnnotationService& service, const HttpOptions& options = {}) {
  using httplib::Request;
  using httplib::Response;
  server.set_default_headers({{"Access-Control-Allow-Origin", options.cors_origin},
                              {"Access-Control-Allow-Headers", "Content-Type"},
                              {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
  server.Options(R"(/api/.*)", [](const Request&, Response& res) { res.status = 204; });

  server.Post("/api/sessions", [&service](const Request& req, Response& res) {
    detail::guarded(res, [&] {
      json out;
      if (req.is_multipart_form_data()) {
        if (!req.has_file("file")) throw Error(ErrorCode::ParseError, "multipart upload needs a 'file' part");
        const auto& file = req.get_file_value("file");
        out = service.create_session_from_bytes(
            std::span(reinterpret_cast<const std::uint8_t*>(file.content.data()), file.content.size()));
      } else if (req.get_header_value("Content-Type").find("application/json") != std::string::npos) {
        out = service.create_session_from_path(detail::parse_body(req).at("path").get<std::string>());
      } else {
        out = service.create_session_from_bytes(
            std::span(reinterpret_cast<const std::uint8_t*>(req.body.data()), req.body.size()));
      }
      res.status = 201;
      res.set_content(out.dump(), "application/json");
    });
  });

  server.Get(R"(/api/sessions/([0-9a-f]+)/slice)", [&service](const Request& req, Response& res) {
    detail::guarded(res, [&] {
      const std::string plane = req.has_param("plane") ? req.get_param_value("plane") : "axial";
      const int index = static_cast<int>(detail::query_double(req, "index", 0));
      const double wc = detail::query_double(req, "wc", -500);
      const double ww = detail::query_double(req, "ww", 1400);
      const bool overlay = !req.has_param("overlay") || req.get_param_value("overlay") != "false";
      const auto png = service.render_slice_png(req.matches[1], plane, index, wc, ww, overlay);
      res.set_content(std::string(png.begin(), png.end()), "image/png");
    });
  });

  server.Post(R"(/api/sessions/([0-9a-f]+)/segment)", [&service](const Request& req, Response& res) {
    detail::guarded(res, [&] { res.set_content(service.run_segmentation(req.matches[1], detail::parse_body(req)).dump(), "application/json"); });
  });

  server.Post(R"(/api/sessions/([0-9a-f]+)/strokes)", [&service](const Request& req, Response& res) {
    detail::guarded(res, [&] {
      json body;
      try {
        body = detail::parse_body(req);
      } catch (const json::exception& e) {
        throw Error(ErrorCode::InvalidStroke, std::string("malformed stroke: ") + e.what());
      }
      res.set_content(service.submit_stroke(req.matches[1], body).dump(), "application/json");
    });
  });

  server.Post(R"(/api/sessions/([0-9a-f]+)/undo)", [&service](const Request& req, Response& res) {
    detail::guarded(res, [&] { res.set_content(service.undo(req.matches[1]).dump(), "application/json"); });
  });

  server.Get(R"(/api/sessions/([0-9a-f]+)/mask)", [&service](const Request& req, Response& res) {
    detail::guarded(res, [&] {
      const auto bytes = service.export_mask(req.matches[1]);
      res.set_header("Content-Disposition", "attachment; filename=\"mask.nii.gz\"");
      res.set_content(std::string(bytes.begin(), bytes.end()), "application/gzip");
    });
  });

  server.Get(R"(/api/sessions/([0-9a-f]+)/metrics)", [&service](const Request& req, Response& res) {
    detail::guarded(res, [&] { res.set_content(service.get_metrics(req.matches[1]).dump(), "application/json"); });
  });

  if (!options.static_dir.empty()) server.set_mount_point("/", options.static_dir);
}

}  // namespace lungseg::service
