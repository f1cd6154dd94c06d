#pragma once

#include "fitdeblur/adam.hpp"
#include "fitdeblur/archive.hpp"
#include "fitdeblur/autodiff.hpp"
#include "fitdeblur/blur.hpp"
#include "fitdeblur/checkpoint.hpp"
#include "fitdeblur/commands.hpp"
#include "fitdeblur/config.hpp"
#include "fitdeblur/error.hpp"
#include "fitdeblur/flow.hpp"
#include "fitdeblur/frame_selection.hpp"
#include "fitdeblur/image.hpp"
#include "fitdeblur/inference.hpp"
#include "fitdeblur/meta.hpp"
#include "fitdeblur/metrics.hpp"
#include "fitdeblur/nn.hpp"
#include "fitdeblur/ops.hpp"
#include "fitdeblur/patches.hpp"
#include "fitdeblur/png_io.hpp"
#include "fitdeblur/random.hpp"
#include "fitdeblur/report.hpp"
#include "fitdeblur/scene.hpp"
#include "fitdeblur/tensor.hpp"
#include "fitdeblur/training.hpp"
