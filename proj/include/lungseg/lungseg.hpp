#pragma once

#include "lungseg/error.hpp"
#include "lungseg/fuzzy_connectedness.hpp"
#include "lungseg/mask_edit.hpp"
#include "lungseg/metrics.hpp"
#include "lungseg/morphology.hpp"
#include "lungseg/phantom.hpp"
#include "lungseg/render.hpp"
#include "lungseg/seed_selection.hpp"
#include "lungseg/volume.hpp"
#include "lungseg/volume_io.hpp"
