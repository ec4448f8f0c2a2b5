#pragma once

#include "lbdp/benchmark.hpp"
#include "lbdp/core.hpp"
#include "lbdp/error.hpp"
#include "lbdp/estimate.hpp"
#include "lbdp/gw.hpp"
#include "lbdp/io.hpp"
#include "lbdp/mv_saddlepoint.hpp"
#include "lbdp/quasi_gaussian.hpp"
#include "lbdp/saddlepoint.hpp"
#include "lbdp/simulate.hpp"

namespace lbdp {

inline constexpr std::string_view artifact_version = "1.0.0";

}  // namespace lbdp
