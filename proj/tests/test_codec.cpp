#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "qprl/codec.hpp"
#include "qprl/rng.hpp"
#include "qprl/stats.hpp"

using namespace qprl;
using namespace qprl::codec;

namespace {

Frame random_frame(Rng& rng, int w, int h, int64_t index = 0) {
    Frame f(w, h, index);
    for (auto& s : f.samples) s = static_cast<float>(rng.range(0, 255));
    return f;
}

QpMap uniform_qp(const Frame& f, int qp) { return QpMap(f.mb_rows(), f.mb_cols(), qp); }

}  // namespace

TEST_CASE("qp_to_step anchor values and monotonicity") {
    CHECK(qp_to_step(4) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(qp_to_step(10) == doctest::Approx(2.0).epsilon(1e-15));
    CHECK(qp_to_step(22) == doctest::Approx(8.0).epsilon(1e-15));  // 2^(18/6)
    for (int qp = 1; qp <= 51; ++qp) CHECK(qp_to_step(qp) > qp_to_step(qp - 1));
    CHECK_THROWS_AS(qp_to_step(-1), std::domain_error);
    CHECK_THROWS_AS(qp_to_step(52), std::domain_error);
}

TEST_CASE("dct8 constant block concentrates in DC") {
    double block[64], coeffs[64];
    std::fill(block, block + 64, 5.25);
    dct8(block, coeffs);
    CHECK(coeffs[0] == doctest::Approx(8.0 * 5.25).epsilon(1e-12));
    for (int i = 1; i < 64; ++i) CHECK(std::abs(coeffs[i]) < 1e-9);

    std::fill(block, block + 64, 0.0);
    dct8(block, coeffs);
    for (int i = 0; i < 64; ++i) CHECK(std::abs(coeffs[i]) < 1e-12);
}

TEST_CASE("dct8 round trip and energy preservation") {
    Rng rng(42);
    for (int trial = 0; trial < 50; ++trial) {
        double block[64], coeffs[64], back[64];
        double energy_in = 0;
        for (int i = 0; i < 64; ++i) {
            block[i] = rng.uniform(-255, 255);
            energy_in += block[i] * block[i];
        }
        dct8(block, coeffs);
        idct8(coeffs, back);
        double energy_out = 0;
        for (int i = 0; i < 64; ++i) {
            CHECK(std::abs(back[i] - block[i]) < 1e-9);
            energy_out += coeffs[i] * coeffs[i];
        }
        CHECK(energy_out == doctest::Approx(energy_in).epsilon(1e-12));  // Parseval
    }
}

TEST_CASE("quantize basics and monotonicity in step") {
    CHECK(quantize(0.0, 3.7) == 0);
    CHECK(quantize(3.4, 1.0) == 3);
    CHECK(dequantize(quantize(3.4, 1.0), 1.0) == doctest::Approx(3.0));
    CHECK(quantize(-3.5, 1.0) == -4);  // round half away from zero

    Rng rng(7);
    for (int trial = 0; trial < 2000; ++trial) {
        double c = rng.uniform(-500, 500);
        double s1 = rng.uniform(0.1, 64.0);
        double s2 = s1 * rng.uniform(1.0, 8.0);
        CHECK(std::abs(quantize(c, s2)) <= std::abs(quantize(c, s1)));
    }
}

TEST_CASE("exp-Golomb code lengths") {
    CHECK(ue_golomb_len(0) == 1);
    CHECK(ue_golomb_len(1) == 3);
    CHECK(ue_golomb_len(2) == 3);
    CHECK(ue_golomb_len(3) == 5);
    CHECK(ue_golomb_len(6) == 5);
    CHECK(ue_golomb_len(7) == 7);
    CHECK(se_golomb_len(1) == 3);   // maps to k=1
    CHECK(se_golomb_len(-1) == 3);  // maps to k=2
    CHECK(se_golomb_len(2) == 5);
    CHECK(se_golomb_len(0) == 1);
    for (int v = 1; v < 300; ++v) CHECK(se_golomb_len(v + 1) >= se_golomb_len(v));
}

TEST_CASE("estimate_bits anchors") {
    int levels[64] = {0};
    CHECK(estimate_bits(levels) == 1);  // terminator only

    levels[0] = 1;  // DC
    // (run=0, level=1) -> ue(0)=1 + se(1)=3, plus terminator
    CHECK(estimate_bits(levels) == 5);
}

TEST_CASE("estimate_bits never decreases when levels double") {
    Rng rng(123);
    for (int trial = 0; trial < 500; ++trial) {
        int levels[64], doubled[64];
        for (int i = 0; i < 64; ++i) {
            levels[i] = rng.uniform() < 0.7 ? 0 : static_cast<int>(rng.range(-40, 40));
            doubled[i] = 2 * levels[i];
        }
        CHECK(estimate_bits(doubled) >= estimate_bits(levels));
    }
}

TEST_CASE("encode_frame skip path: frame identical to reference") {
    Rng rng(9);
    Frame ref = random_frame(rng, 64, 48);
    // reference reconstruction is the frame itself here
    Frame cur = ref;
    cur.index = 1;
    for (int qp : {4, 20, 38, 51}) {
        auto enc = encode_frame(cur, FrameType::P, &ref, uniform_qp(cur, qp));
        CHECK(enc.type == FrameType::P);
        for (auto m : enc.modes) CHECK(m == BlockMode::Skip);
        for (int b : enc.per_block_bits) CHECK(b == 1);
        CHECK(enc.total_bits == enc.header_bits + enc.per_block_bits.size());
        for (size_t i = 0; i < cur.samples.size(); ++i)
            CHECK(enc.reconstruction.samples[i] == ref.samples[i]);
    }
}

TEST_CASE("encode_frame bit monotonicity under uniform QP-6") {
    Rng rng(31);
    for (int trial = 0; trial < 8; ++trial) {
        Frame f = random_frame(rng, 64, 64);
        Frame ref = random_frame(rng, 64, 64);
        for (int qp : {16, 28, 40}) {
            auto hi = encode_frame(f, FrameType::P, &ref, uniform_qp(f, qp));
            auto lo = encode_frame(f, FrameType::P, &ref, uniform_qp(f, qp - 6));
            CHECK(lo.total_bits >= hi.total_bits);
            auto hi_i = encode_frame(f, FrameType::I, nullptr, uniform_qp(f, qp));
            auto lo_i = encode_frame(f, FrameType::I, nullptr, uniform_qp(f, qp - 6));
            CHECK(lo_i.total_bits >= hi_i.total_bits);
        }
    }
}

TEST_CASE("I-frame of a constant image at qp=4 reconstructs within 0.5") {
    Frame f(32, 32);
    for (auto& s : f.samples) s = 137.f;
    auto enc = encode_frame(f, FrameType::I, nullptr, uniform_qp(f, 4));
    for (size_t i = 0; i < f.samples.size(); ++i)
        CHECK(std::abs(enc.reconstruction.samples[i] - 137.f) <= 0.5f);
}

TEST_CASE("encode_frame error paths") {
    Rng rng(5);
    Frame f = random_frame(rng, 32, 32);
    CHECK_THROWS(encode_frame(f, FrameType::P, nullptr, uniform_qp(f, 30)));
    Frame small = random_frame(rng, 16, 16);
    CHECK_THROWS(encode_frame(f, FrameType::P, &small, uniform_qp(f, 30)));
    QpMap bad(f.mb_rows(), f.mb_cols(), 60);
    CHECK_THROWS(encode_frame(f, FrameType::I, nullptr, bad));
    QpMap wrong_shape(1, 1, 30);
    CHECK_THROWS(encode_frame(f, FrameType::I, nullptr, wrong_shape));
}

TEST_CASE("encode_frame determinism") {
    Rng rng(64);
    Frame f = random_frame(rng, 48, 48);
    Frame ref = random_frame(rng, 48, 48);
    auto a = encode_frame(f, FrameType::P, &ref, uniform_qp(f, 26));
    auto b = encode_frame(f, FrameType::P, &ref, uniform_qp(f, 26));
    CHECK(a.total_bits == b.total_bits);
    CHECK(a.reconstruction.samples == b.reconstruction.samples);
    CHECK(a.per_block_bits == b.per_block_bits);
    CHECK(a.mv_x == b.mv_x);
    CHECK(a.mv_y == b.mv_y);
}

TEST_CASE("motion search tracks a pure translation") {
    Rng rng(77);
    Frame ref = random_frame(rng, 64, 64);
    Frame cur(64, 64, 1);
    // shift content by (+2, +1): cur(y,x) = ref(y-1, x-2) away from borders
    for (int y = 0; y < 64; ++y)
        for (int x = 0; x < 64; ++x)
            cur.at(y, x) = ref.at(std::clamp(y - 1, 0, 63), std::clamp(x - 2, 0, 63));
    auto enc = encode_frame(cur, FrameType::P, &ref, uniform_qp(cur, 20));
    // interior blocks should find the exact motion vector
    CHECK(enc.mv_x.at(1, 1) == -2);
    CHECK(enc.mv_y.at(1, 1) == -1);
    CHECK(enc.mv_x.at(2, 2) == -2);
}

TEST_CASE("compute_stats planes and globals") {
    Frame constant(32, 32);
    for (auto& s : constant.samples) s = 55.f;

    codec::EncodeProgress prog;
    prog.stream_length = 10;
    prog.next_frame_index = 0;
    prog.next_frame_qp = 30;

    std::vector<Frame> look{constant, constant};
    auto st = compute_stats(constant, look, prog);
    for (double v : st.per_block[kEnergy]) CHECK(v == 0.0);
    for (double v : st.per_block[kPropagateCost]) CHECK(v == 0.0);
    CHECK(st.global[kProgress] == 0.0);
    CHECK(st.global[kBitrateError] == 0.0);
    CHECK(st.global[kNextFrameComplexity] == 0.0);

    Rng rng(4);
    Frame f = random_frame(rng, 64, 64);
    std::vector<Frame> look2{random_frame(rng, 64, 64), random_frame(rng, 64, 64)};
    prog.next_frame_index = 3;
    prog.frames_encoded = 3;
    prog.cumulative_bits = 30000;
    prog.fps = 30;
    prog.target_bitrate = 300000;
    auto st2 = compute_stats(f, look2, prog);
    for (const auto& plane : st2.per_block)
        for (double v : plane) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
    CHECK(st2.global[kProgress] == doctest::Approx(0.3));
    CHECK(st2.global[kBitrateError] ==
          doctest::Approx(std::log(30000.0 * 30 / 3 / 300000.0)).epsilon(1e-12));
    CHECK(st2.global[kFracIntra] + st2.global[kFracInter] + st2.global[kFracSkip] ==
          doctest::Approx(1.0));
}
