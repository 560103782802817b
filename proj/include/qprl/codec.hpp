#pragma once

#include <cstdint>
#include <optional>

#include "qprl/frame.hpp"
#include "qprl/grid.hpp"

namespace qprl::codec {

inline constexpr int kQpMin = 0;
inline constexpr int kQpMax = 51;

/// Per-macroblock integer QP values, one entry per 16x16 block.
using QpMap = Grid<int>;

enum class FrameType : uint8_t { I, P };

enum class BlockMode : uint8_t { Intra, Inter, Skip };

struct CodecParams {
    int motion_radius = 4;  // 0 disables search, MV pinned to (0,0)
    int header_bits = 16;
};

struct EncodedFrame {
    int64_t total_bits = 0;
    int header_bits = 0;
    Grid<int> per_block_bits;
    Frame reconstruction;
    FrameType type = FrameType::I;
    Grid<BlockMode> modes;
    Grid<int> mv_x, mv_y;
    int64_t motion_bits = 0;
    int64_t coeff_bits = 0;
};

/// H.264-flavored quantizer step: 2^((qp-4)/6). +6 QP doubles the step.
double qp_to_step(int qp);

/// Orthonormal 8x8 type-II DCT and its inverse, on row-major 64-element blocks.
void dct8(const double* block, double* coeffs);
void idct8(const double* coeffs, double* block);

/// Uniform quantizer, round half away from zero.
int quantize(double coeff, double step);
double dequantize(int level, double step);

/// Exp-Golomb code lengths (unsigned / signed mapping).
int ue_golomb_len(uint32_t k);
int se_golomb_len(int32_t v);

/// Bit cost of an 8x8 level grid: zig-zag run/level pairs coded with
/// exp-Golomb plus a 1-bit terminator. All-zero grid costs 1 bit.
int64_t estimate_bits(const int* levels64);

/// Encodes one frame. I frames predict each block from flat mid-gray; P
/// frames run an exhaustive integer-pel motion search (+-radius) on the
/// reference reconstruction and may mark blocks as skip (zero MV, all-zero
/// levels, 1 bit). A reference must be present iff the type is P.
EncodedFrame encode_frame(const Frame& frame, FrameType type, const Frame* reference,
                          const QpMap& qp_map, const CodecParams& params = {});

}  // namespace qprl::codec
