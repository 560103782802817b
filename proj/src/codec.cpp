#include "qprl/codec.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <stdexcept>

namespace qprl::codec {

namespace {

struct DctTables {
    // basis[k][n] = c_k * cos((2n+1) k pi / 16)
    std::array<std::array<double, 8>, 8> basis;
    std::array<int, 64> zigzag;

    DctTables() {
        const double pi = 3.14159265358979323846264338327950288;
        for (int k = 0; k < 8; ++k) {
            double ck = (k == 0) ? std::sqrt(1.0 / 8.0) : std::sqrt(2.0 / 8.0);
            for (int n = 0; n < 8; ++n) basis[k][n] = ck * std::cos((2 * n + 1) * k * pi / 16.0);
        }
        int idx = 0;
        for (int d = 0; d < 15; ++d) {
            if (d % 2 == 0) {  // up-right
                for (int r = std::min(d, 7); r >= std::max(0, d - 7); --r) zigzag[idx++] = r * 8 + (d - r);
            } else {  // down-left
                for (int r = std::max(0, d - 7); r <= std::min(d, 7); ++r) zigzag[idx++] = r * 8 + (d - r);
            }
        }
    }
};

const DctTables& tables() {
    static const DctTables t;
    return t;
}

double block_sad(const Frame& a, int ay, int ax, const Frame& b, int by, int bx, int size,
                 double bail_above) {
    double acc = 0.0;
    for (int y = 0; y < size; ++y) {
        const float* pa = &a.at(ay + y, ax);
        const float* pb = &b.at(by + y, bx);
        for (int x = 0; x < size; ++x) acc += std::abs(static_cast<double>(pa[x]) - pb[x]);
        if (acc > bail_above) return acc;
    }
    return acc;
}

}  // namespace

double qp_to_step(int qp) {
    if (qp < kQpMin || qp > kQpMax) throw std::domain_error("qp_to_step: qp out of [0,51]");
    return std::pow(2.0, (qp - 4) / 6.0);
}

void dct8(const double* block, double* coeffs) {
    const auto& c = tables().basis;
    double tmp[64];
    for (int u = 0; u < 8; ++u)
        for (int n = 0; n < 8; ++n) {
            double s = 0.0;
            for (int m = 0; m < 8; ++m) s += c[u][m] * block[m * 8 + n];
            tmp[u * 8 + n] = s;
        }
    for (int u = 0; u < 8; ++u)
        for (int v = 0; v < 8; ++v) {
            double s = 0.0;
            for (int n = 0; n < 8; ++n) s += tmp[u * 8 + n] * c[v][n];
            coeffs[u * 8 + v] = s;
        }
}

void idct8(const double* coeffs, double* block) {
    const auto& c = tables().basis;
    double tmp[64];
    for (int m = 0; m < 8; ++m)
        for (int v = 0; v < 8; ++v) {
            double s = 0.0;
            for (int u = 0; u < 8; ++u) s += c[u][m] * coeffs[u * 8 + v];
            tmp[m * 8 + v] = s;
        }
    for (int m = 0; m < 8; ++m)
        for (int n = 0; n < 8; ++n) {
            double s = 0.0;
            for (int v = 0; v < 8; ++v) s += tmp[m * 8 + v] * c[v][n];
            block[m * 8 + n] = s;
        }
}

int quantize(double coeff, double step) {
    double q = std::floor(std::abs(coeff) / step + 0.5);
    int level = static_cast<int>(q);
    return coeff < 0 ? -level : level;
}

double dequantize(int level, double step) { return level * step; }

int ue_golomb_len(uint32_t k) {
    return 2 * (std::bit_width(static_cast<uint64_t>(k) + 1) - 1) + 1;
}

int se_golomb_len(int32_t v) {
    uint32_t k = v > 0 ? 2u * static_cast<uint32_t>(v) - 1u
                       : 2u * static_cast<uint32_t>(-static_cast<int64_t>(v));
    return ue_golomb_len(k);
}

int64_t estimate_bits(const int* levels64) {
    const auto& zz = tables().zigzag;
    int64_t bits = 0;
    uint32_t run = 0;
    for (int i = 0; i < 64; ++i) {
        int level = levels64[zz[i]];
        if (level == 0) {
            ++run;
        } else {
            bits += ue_golomb_len(run) + se_golomb_len(level);
            run = 0;
        }
    }
    return bits + 1;  // terminator
}

EncodedFrame encode_frame(const Frame& frame, FrameType type, const Frame* reference,
                          const QpMap& qp_map, const CodecParams& params) {
    const int mbr = frame.mb_rows(), mbc = frame.mb_cols();
    if (qp_map.rows() != mbr || qp_map.cols() != mbc)
        throw std::invalid_argument("encode_frame: qp_map does not match macroblock grid");
    for (int v : qp_map)
        if (v < kQpMin || v > kQpMax) throw std::domain_error("encode_frame: qp out of [0,51]");
    const bool inter = type == FrameType::P;
    if (inter && reference == nullptr)
        throw std::invalid_argument("encode_frame: P frame requires a reference");
    if (!inter && reference != nullptr)
        throw std::invalid_argument("encode_frame: I frame must not carry a reference");
    if (inter && !reference->same_shape(frame))
        throw std::invalid_argument("encode_frame: reference dimensions differ");

    EncodedFrame out;
    out.type = type;
    out.header_bits = params.header_bits;
    out.per_block_bits = Grid<int>(mbr, mbc);
    out.modes = Grid<BlockMode>(mbr, mbc, BlockMode::Intra);
    out.mv_x = Grid<int>(mbr, mbc);
    out.mv_y = Grid<int>(mbr, mbc);
    out.reconstruction = Frame(frame.width, frame.height, frame.index);

    double pred[kMbSize * kMbSize];
    double resid[kMbSize * kMbSize];
    int levels[64];
    double coeffs[64], rec8[64];

    for (int br = 0; br < mbr; ++br) {
        for (int bc = 0; bc < mbc; ++bc) {
            const int y0 = br * kMbSize, x0 = bc * kMbSize;
            const double step = qp_to_step(qp_map.at(br, bc));
            int mvx = 0, mvy = 0;

            if (inter) {
                double best = block_sad(frame, y0, x0, *reference, y0, x0, kMbSize, 1e300);
                const int r = params.motion_radius;
                for (int dy = -r; dy <= r; ++dy) {
                    int ry = y0 + dy;
                    if (ry < 0 || ry + kMbSize > frame.height) continue;
                    for (int dx = -r; dx <= r; ++dx) {
                        if (dx == 0 && dy == 0) continue;
                        int rx = x0 + dx;
                        if (rx < 0 || rx + kMbSize > frame.width) continue;
                        double sad = block_sad(frame, y0, x0, *reference, ry, rx, kMbSize, best);
                        if (sad < best) {
                            best = sad;
                            mvx = dx;
                            mvy = dy;
                        }
                    }
                }
                for (int y = 0; y < kMbSize; ++y)
                    for (int x = 0; x < kMbSize; ++x)
                        pred[y * kMbSize + x] = reference->at(y0 + mvy + y, x0 + mvx + x);
            } else {
                std::fill(pred, pred + kMbSize * kMbSize, 128.0);
            }

            for (int y = 0; y < kMbSize; ++y)
                for (int x = 0; x < kMbSize; ++x)
                    resid[y * kMbSize + x] = frame.at(y0 + y, x0 + x) - pred[y * kMbSize + x];

            int64_t coeff_bits = 0;
            bool all_zero = true;
            for (int sb = 0; sb < 4; ++sb) {
                const int sy = (sb / 2) * 8, sx = (sb % 2) * 8;
                double sub[64];
                for (int y = 0; y < 8; ++y)
                    for (int x = 0; x < 8; ++x) sub[y * 8 + x] = resid[(sy + y) * kMbSize + sx + x];
                dct8(sub, coeffs);
                for (int i = 0; i < 64; ++i) {
                    levels[i] = quantize(coeffs[i], step);
                    if (levels[i] != 0) all_zero = false;
                    coeffs[i] = dequantize(levels[i], step);
                }
                coeff_bits += estimate_bits(levels);
                idct8(coeffs, rec8);
                for (int y = 0; y < 8; ++y)
                    for (int x = 0; x < 8; ++x) {
                        double v = pred[(sy + y) * kMbSize + sx + x] + rec8[y * 8 + x];
                        out.reconstruction.at(y0 + sy + y, x0 + sx + x) =
                            static_cast<float>(std::clamp(v, 0.0, 255.0));
                    }
            }

            int64_t block_bits;
            if (inter && all_zero && mvx == 0 && mvy == 0) {
                out.modes.at(br, bc) = BlockMode::Skip;
                block_bits = 1;
                // decoded residual is zero, reconstruction already equals predictor
            } else if (inter) {
                out.modes.at(br, bc) = BlockMode::Inter;
                int mv_bits = se_golomb_len(mvx) + se_golomb_len(mvy);
                out.motion_bits += mv_bits;
                out.coeff_bits += coeff_bits;
                block_bits = 1 + mv_bits + coeff_bits;
            } else {
                out.modes.at(br, bc) = BlockMode::Intra;
                out.coeff_bits += coeff_bits;
                block_bits = coeff_bits;
            }
            out.mv_x.at(br, bc) = mvx;
            out.mv_y.at(br, bc) = mvy;
            out.per_block_bits.at(br, bc) = static_cast<int>(block_bits);
            out.total_bits += block_bits;
        }
    }
    out.total_bits += out.header_bits;
    return out;
}

}  // namespace qprl::codec
