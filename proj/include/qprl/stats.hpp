#pragma once

#include <array>
#include <span>

#include "qprl/codec.hpp"

namespace qprl::codec {

/// Indices into EncoderStats::global.
enum GlobalStat : int {
    kNextQp = 0,           // controller QP planned for the next frame
    kFrameNumber,          // index of the next frame to encode
    kBitstreamSize,        // cumulative bits so far
    kCurrentQp,            // frame QP of the most recently encoded frame
    kAverageQp,            // mean frame QP over encoded frames
    kFracIntra,            // macroblock mode fractions of the last frame
    kFracInter,
    kFracSkip,
    kPsnr,                 // of the last reconstruction
    kSsimProxy,
    kMotionBitsFrac,       // of the last frame's total bits
    kCoeffBitsFrac,
    kProgress,             // next frame index / stream length
    kBitrateError,         // ln(cumulative average bit-rate / target), 0 before any bits
    kNextFrameType,        // 0 = I, 1 = P
    kNextFrameComplexity,  // mean per-pixel lookahead SAD of the next frame
    kGlobalStatCount
};

/// Indices into EncoderStats::per_block.
enum BlockPlane : int {
    kEnergy = 0,     // variance * block area of the raw block
    kIntraCost,      // SAD versus the block's flat-mean predictor
    kPropagateCost,  // decay-weighted co-located SAD over the lookahead
    kInvQuantScale,  // 1 / qp_to_step(planned frame QP)
    kBlockPlaneCount
};

/// The MDP state: 16 global scalars plus 4 per-macroblock feature planes.
/// Planes are min-max normalized to [0,1] per frame (all zero when constant).
struct EncoderStats {
    std::array<double, kGlobalStatCount> global{};
    std::array<Grid<double>, kBlockPlaneCount> per_block;

    int mb_rows() const { return per_block[0].rows(); }
    int mb_cols() const { return per_block[0].cols(); }
};

/// Running-encode context the environment maintains between frames.
struct EncodeProgress {
    int next_frame_index = 0;
    int stream_length = 0;
    int next_frame_qp = 30;
    bool next_is_intra = true;
    int last_frame_qp = 30;
    double qp_sum = 0.0;
    int frames_encoded = 0;
    int64_t cumulative_bits = 0;
    double fps = 30.0;
    double target_bitrate = 1.0;
    double frac_intra = 1.0, frac_inter = 0.0, frac_skip = 0.0;
    double last_psnr = 0.0, last_ssim = 0.0;
    double motion_bits_frac = 0.0, coeff_bits_frac = 0.0;
};

struct StatsParams {
    int lookahead = 10;
    double propagate_beta = 0.5;
};

/// Normalizes a plane to [0,1]; a constant plane maps to all zeros.
void minmax_normalize(Grid<double>& plane);

/// Builds the state for `frame` (the next frame to encode) from raw lookahead
/// frames and the running-encode context.
EncoderStats compute_stats(const Frame& frame, std::span<const Frame> lookahead,
                           const EncodeProgress& progress, const StatsParams& params = {});

}  // namespace qprl::codec
