#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "qprl/grid.hpp"

namespace qprl {

inline constexpr int kMbSize = 16;

/// Luma-only raster. Samples are intensities in [0, 255]; reconstructions may
/// carry fractional values, sources are integer-valued.
struct Frame {
    int width = 0;
    int height = 0;
    int64_t index = 0;
    std::vector<float> samples;

    Frame() = default;
    Frame(int w, int h, int64_t idx = 0, float fill = 0.f)
        : width(w), height(h), index(idx), samples(static_cast<size_t>(w) * h, fill) {
        if (w <= 0 || h <= 0 || w % kMbSize != 0 || h % kMbSize != 0)
            throw std::invalid_argument("frame dimensions must be positive multiples of 16");
    }

    float& at(int y, int x) { return samples[static_cast<size_t>(y) * width + x]; }
    const float& at(int y, int x) const { return samples[static_cast<size_t>(y) * width + x]; }

    int mb_rows() const { return height / kMbSize; }
    int mb_cols() const { return width / kMbSize; }

    bool same_shape(const Frame& o) const { return width == o.width && height == o.height; }
};

}  // namespace qprl
