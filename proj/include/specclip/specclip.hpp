#pragma once

#include "specclip/analysis.hpp"
#include "specclip/clipping.hpp"
#include "specclip/harness/config.hpp"
#include "specclip/harness/records.hpp"
#include "specclip/harness/run.hpp"
#include "specclip/harness/svg.hpp"
#include "specclip/matrix.hpp"
#include "specclip/noise.hpp"
#include "specclip/optim.hpp"
#include "specclip/problems.hpp"
#include "specclip/rng.hpp"
#include "specclip/svd.hpp"
#include "specclip/threshold.hpp"

namespace specclip {
inline constexpr const char* kVersion = "0.1.0";
}
