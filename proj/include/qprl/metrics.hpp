#pragma once

#include "qprl/frame.hpp"

namespace qprl {

/// Mean squared error between two equally sized frames.
double mse(const Frame& a, const Frame& b);

/// 10*log10(255^2 / MSE), capped at 100 dB when MSE < 255^2 * 1e-10.
double psnr(const Frame& a, const Frame& b);

/// Mean per-macroblock normalized covariance, a bounded stand-in for SSIM.
/// Equals 1 for identical frames.
double ssim_proxy(const Frame& a, const Frame& b);

}  // namespace qprl
