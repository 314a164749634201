#pragma once

#include "vlk/centerline.hpp"
#include "vlk/error.hpp"
#include "vlk/labeling.hpp"
#include "vlk/metrics.hpp"
#include "vlk/parallel.hpp"
#include "vlk/phantom.hpp"
#include "vlk/prediction.hpp"
#include "vlk/predictor.hpp"
#include "vlk/preprocess.hpp"
#include "vlk/rng.hpp"
#include "vlk/stats.hpp"
#include "vlk/transforms.hpp"
#include "vlk/uncertainty.hpp"
#include "vlk/volume.hpp"
#include "vlk/volume_io.hpp"
