#include "qprl/stats.hpp"

#include <algorithm>
#include <cmath>

namespace qprl::codec {

void minmax_normalize(Grid<double>& plane) {
    if (plane.empty()) return;
    auto [mn_it, mx_it] = std::minmax_element(plane.begin(), plane.end());
    double mn = *mn_it, mx = *mx_it;
    if (mx - mn <= 0.0) {
        plane.fill(0.0);
        return;
    }
    for (auto& v : plane) v = (v - mn) / (mx - mn);
}

EncoderStats compute_stats(const Frame& frame, std::span<const Frame> lookahead,
                           const EncodeProgress& progress, const StatsParams& params) {
    const int mbr = frame.mb_rows(), mbc = frame.mb_cols();
    EncoderStats st;
    for (auto& p : st.per_block) p = Grid<double>(mbr, mbc);

    const int use_la = std::min<int>(params.lookahead, static_cast<int>(lookahead.size()));
    const double area = kMbSize * kMbSize;

    for (int br = 0; br < mbr; ++br) {
        for (int bc = 0; bc < mbc; ++bc) {
            const int y0 = br * kMbSize, x0 = bc * kMbSize;
            double sum = 0, sum2 = 0;
            for (int y = 0; y < kMbSize; ++y)
                for (int x = 0; x < kMbSize; ++x) {
                    double v = frame.at(y0 + y, x0 + x);
                    sum += v;
                    sum2 += v * v;
                }
            double mean = sum / area;
            double var = std::max(0.0, sum2 / area - mean * mean);
            st.per_block[kEnergy].at(br, bc) = var * area;

            double intra_sad = 0;
            for (int y = 0; y < kMbSize; ++y)
                for (int x = 0; x < kMbSize; ++x)
                    intra_sad += std::abs(frame.at(y0 + y, x0 + x) - mean);
            st.per_block[kIntraCost].at(br, bc) = intra_sad;

            double prop = 0, w = 1.0;
            for (int k = 0; k < use_la; ++k) {
                const Frame& fut = lookahead[k];
                double sad = 0;
                for (int y = 0; y < kMbSize; ++y)
                    for (int x = 0; x < kMbSize; ++x)
                        sad += std::abs(static_cast<double>(frame.at(y0 + y, x0 + x)) -
                                        fut.at(y0 + y, x0 + x));
                prop += w * sad;
                w *= params.propagate_beta;
            }
            st.per_block[kPropagateCost].at(br, bc) = prop;
            st.per_block[kInvQuantScale].at(br, bc) = 1.0 / qp_to_step(progress.next_frame_qp);
        }
    }
    for (auto& p : st.per_block) minmax_normalize(p);

    auto& g = st.global;
    g[kNextQp] = progress.next_frame_qp;
    g[kFrameNumber] = progress.next_frame_index;
    g[kBitstreamSize] = static_cast<double>(progress.cumulative_bits);
    g[kCurrentQp] = progress.last_frame_qp;
    g[kAverageQp] =
        progress.frames_encoded > 0 ? progress.qp_sum / progress.frames_encoded : progress.next_frame_qp;
    g[kFracIntra] = progress.frac_intra;
    g[kFracInter] = progress.frac_inter;
    g[kFracSkip] = progress.frac_skip;
    g[kPsnr] = progress.last_psnr;
    g[kSsimProxy] = progress.last_ssim;
    g[kMotionBitsFrac] = progress.motion_bits_frac;
    g[kCoeffBitsFrac] = progress.coeff_bits_frac;
    g[kProgress] = progress.stream_length > 0
                       ? static_cast<double>(progress.next_frame_index) / progress.stream_length
                       : 0.0;
    if (progress.frames_encoded > 0 && progress.cumulative_bits > 0) {
        double avg_rate =
            static_cast<double>(progress.cumulative_bits) * progress.fps / progress.frames_encoded;
        g[kBitrateError] = std::log(avg_rate / progress.target_bitrate);
    } else {
        g[kBitrateError] = 0.0;
    }
    g[kNextFrameType] = progress.next_is_intra ? 0.0 : 1.0;
    if (use_la > 0) {
        double sad = 0;
        const Frame& nxt = lookahead[0];
        for (size_t i = 0; i < frame.samples.size(); ++i)
            sad += std::abs(static_cast<double>(frame.samples[i]) - nxt.samples[i]);
        g[kNextFrameComplexity] = sad / static_cast<double>(frame.samples.size());
    } else {
        g[kNextFrameComplexity] = 0.0;
    }
    return st;
}

}  // namespace qprl::codec
