#pragma once

#include "semloc/camera_geometry.hpp"
#include "semloc/errors.hpp"
#include "semloc/evaluation.hpp"
#include "semloc/geometry.hpp"
#include "semloc/map_model.hpp"
#include "semloc/matcher.hpp"
#include "semloc/report.hpp"
#include "semloc/semantic_tree.hpp"
#include "semloc/ssl_descriptor.hpp"
#include "semloc/synth.hpp"
#include "semloc/tile_index.hpp"
