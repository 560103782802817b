#include "qprl/metrics.hpp"

#include <cmath>
#include <stdexcept>

namespace qprl {

double mse(const Frame& a, const Frame& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("mse: frame shapes differ");
    double acc = 0.0;
    for (size_t i = 0; i < a.samples.size(); ++i) {
        double d = static_cast<double>(a.samples[i]) - b.samples[i];
        acc += d * d;
    }
    return acc / static_cast<double>(a.samples.size());
}

double psnr(const Frame& a, const Frame& b) {
    double e = mse(a, b);
    if (e < 255.0 * 255.0 * 1e-10) return 100.0;
    return 10.0 * std::log10(255.0 * 255.0 / e);
}

double ssim_proxy(const Frame& a, const Frame& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("ssim_proxy: frame shapes differ");
    const double c2 = (0.03 * 255.0) * (0.03 * 255.0);
    double acc = 0.0;
    int blocks = 0;
    for (int br = 0; br < a.mb_rows(); ++br) {
        for (int bc = 0; bc < a.mb_cols(); ++bc) {
            double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
            for (int y = br * kMbSize; y < (br + 1) * kMbSize; ++y) {
                for (int x = bc * kMbSize; x < (bc + 1) * kMbSize; ++x) {
                    double px = a.at(y, x), py = b.at(y, x);
                    sx += px;
                    sy += py;
                    sxx += px * px;
                    syy += py * py;
                    sxy += px * py;
                }
            }
            const double n = kMbSize * kMbSize;
            double vx = sxx / n - (sx / n) * (sx / n);
            double vy = syy / n - (sy / n) * (sy / n);
            double cov = sxy / n - (sx / n) * (sy / n);
            acc += (2.0 * cov + c2) / (vx + vy + c2);
            ++blocks;
        }
    }
    return acc / blocks;
}

}  // namespace qprl
