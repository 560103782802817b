#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "qprl/env.hpp"
#include "qprl/rng.hpp"

using namespace qprl;
using namespace qprl::env;

namespace {

io::StreamPtr tiny_roi_stream(uint64_t seed = 1, int frames = 12, int dim = 64) {
    return io::synth_scene(io::WorldKind::RoiWorld, seed, frames, dim, dim);
}

EnvConfig tiny_cfg() {
    EnvConfig cfg;
    cfg.target_bitrate = 30000;
    cfg.fps = 30;
    cfg.gop = 8;
    cfg.coarsen = 2;
    cfg.lambda = 20;
    return cfg;
}

}  // namespace

TEST_CASE("upsample_bilinear preserves constants and matches hand-derived 2x2 case") {
    Grid<double> c1(3, 5, 2.5);
    auto up = upsample_bilinear(c1, 6, 10);
    for (double v : up) CHECK(v == doctest::Approx(2.5).epsilon(1e-15));

    Grid<double> single(1, 1, 7.3);
    auto up1 = upsample_bilinear(single, 4, 4);
    for (double v : up1) CHECK(v == 7.3);

    // [[0,4],[4,8]] -> 4x4 at cell centers; coords clamp to [0,1] so the
    // interpolant is f(u,v) = 4u+4v sampled at {0, .25, .75, 1}
    Grid<double> c2(2, 2);
    c2.at(0, 0) = 0;
    c2.at(0, 1) = 4;
    c2.at(1, 0) = 4;
    c2.at(1, 1) = 8;
    auto up2 = upsample_bilinear(c2, 4, 4);
    const double coords[4] = {0.0, 0.25, 0.75, 1.0};
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x)
            CHECK(up2.at(y, x) == doctest::Approx(4 * coords[y] + 4 * coords[x]).epsilon(1e-12));
    CHECK(up2.at(0, 1) == doctest::Approx(1.0));
    CHECK(up2.at(1, 1) == doctest::Approx(2.0));
    CHECK(up2.at(2, 2) == doctest::Approx(6.0));
}

TEST_CASE("upsample_bilinear is linear before rounding") {
    Rng rng(5);
    Grid<double> g(3, 4);
    for (auto& v : g) v = rng.uniform(-8, 8);
    auto base = upsample_bilinear(g, 9, 12);
    for (double a : {0.5, 2.0, -3.0}) {
        Grid<double> scaled = g;
        for (auto& v : scaled) v *= a;
        auto up = upsample_bilinear(scaled, 9, 12);
        for (size_t i = 0; i < up.size(); ++i)
            CHECK(up[i] == doctest::Approx(a * base[i]).epsilon(1e-12));
    }
}

TEST_CASE("upsample_action rounds and clamps") {
    Grid<double> g(2, 2, 11.7);  // beyond delta_max
    auto out = upsample_action(g, 4, 4, 8);
    for (int v : out) CHECK(v == 8);
    Grid<double> h(2, 2, -0.4);
    auto out2 = upsample_action(h, 4, 4, 8);
    for (int v : out2) CHECK(v == 0);
    Grid<double> bad(2, 2, std::nan(""));
    CHECK_THROWS(upsample_action(bad, 4, 4, 8));
}

TEST_CASE("bitrate_reward formula") {
    CHECK(bitrate_reward(1000, 1000) == 0.0);
    CHECK(bitrate_reward(2000, 1000) == doctest::Approx(-std::log(2.0)).epsilon(1e-12));
    CHECK(bitrate_reward(500, 1000) == doctest::Approx(-std::log(2.0)).epsilon(1e-12));
    CHECK_THROWS(bitrate_reward(0, 1000));
    CHECK_THROWS(bitrate_reward(100, -1));
    Rng rng(3);
    for (int i = 0; i < 100; ++i) {
        double r = bitrate_reward(rng.uniform(1, 1e6), rng.uniform(1, 1e6));
        CHECK(r <= 0.0);
    }
}

TEST_CASE("combine_reward") {
    CHECK(combine_reward(0, 0, 20) == 0.0);
    CHECK(combine_reward(-0.5, 0.1, 20) == doctest::Approx(1.5));
    CHECK(combine_reward(-0.7, 123.0, 0) == doctest::Approx(-0.7));
    CHECK_THROWS(combine_reward(0, 0, -1));
}

TEST_CASE("rate controller updates") {
    RateController rc(30, 30000, 30, 4.0, 0.4, 30);
    CHECK(rc.qp() == 30);
    rc.update(1000);  // 1000 bits * 30fps = 30000 = target -> e = 0
    CHECK(rc.qp() == 30);

    // persistent 2x overshoot: qp strictly increases until clamp
    RateController rc2(30, 30000, 30, 4.0, 0.4, 30);
    int prev = rc2.qp();
    for (int i = 0; i < 40; ++i) {
        rc2.update(2000);
        if (prev < 51) CHECK(rc2.qp() > prev);
        CHECK(rc2.qp() >= 0);
        CHECK(rc2.qp() <= 51);
        prev = rc2.qp();
    }
    CHECK(rc2.qp() == 51);
}

TEST_CASE("reset produces a valid initial state") {
    Environment e(tiny_roi_stream(), tiny_cfg());
    auto st = e.reset();
    CHECK(st.global[codec::kProgress] == 0.0);
    CHECK(st.global[codec::kBitrateError] == 0.0);
    for (const auto& plane : st.per_block)
        for (double v : plane) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
    CHECK(st.global[codec::kNextFrameType] == 0.0);  // first frame is I
}

TEST_CASE("environment rejects bad construction") {
    auto s = tiny_roi_stream();
    auto one = std::make_shared<io::LoadedStream>();
    one->frames.push_back(s->frames[0]);
    one->saliency.push_back(s->saliency[0]);
    CHECK_THROWS(Environment(one, tiny_cfg()));

    EnvConfig bad = tiny_cfg();
    bad.delta_max = 0;
    CHECK_THROWS(Environment(s, bad));
}

TEST_CASE("step determinism and accounting") {
    auto stream = tiny_roi_stream(3);
    Environment a(stream, tiny_cfg());
    Environment b(stream, tiny_cfg());
    a.reset();
    b.reset();
    ActionGrid act(a.action_rows(), a.action_cols(), 0.0);

    int64_t sum_bits = 0;
    for (int t = 0; !a.done(); ++t) {
        auto ra = a.step(act);
        auto rb = b.step(act);
        CHECK(ra.reward == rb.reward);
        CHECK(ra.info.frame_bits == rb.info.frame_bits);
        CHECK(ra.info.frame_qp == rb.info.frame_qp);
        sum_bits += ra.info.frame_bits;
        CHECK(ra.info.cumulative_bits == sum_bits);  // episode accounting
        if (t == static_cast<int>(stream->frames.size()) - 1) CHECK(ra.done);
        else CHECK(!ra.done);
    }
    CHECK_THROWS(a.step(act));  // step after done
}

TEST_CASE("zero action gives constant qp map at frame qp; bounds always hold") {
    auto stream = tiny_roi_stream(4);
    Environment e(stream, tiny_cfg());
    e.reset();
    ActionGrid zero(e.action_rows(), e.action_cols(), 0.0);
    auto r = e.step(zero);
    for (int qp : e.last_qp_map()) CHECK(qp == r.info.frame_qp);

    // extreme actions never push qp out of [0,51]
    ActionGrid lo(e.action_rows(), e.action_cols(), -100.0);
    e.step(lo);
    for (int qp : e.last_qp_map()) {
        CHECK(qp >= 0);
        CHECK(qp <= 51);
    }
}

TEST_CASE("all-(-delta_max) action spends at least the bits of the zero action") {
    auto stream = tiny_roi_stream(6);
    EnvConfig cfg = tiny_cfg();
    Environment a(stream, cfg), b(stream, cfg);
    a.reset();
    b.reset();
    ActionGrid zero(a.action_rows(), a.action_cols(), 0.0);
    ActionGrid neg(a.action_rows(), a.action_cols(), -static_cast<double>(cfg.delta_max));
    auto rz = a.step(zero);
    auto rn = b.step(neg);
    CHECK(rn.info.frame_bits >= rz.info.frame_bits);
}

TEST_CASE("lambda=0 reward ignores the task score") {
    auto stream = tiny_roi_stream(9);
    EnvConfig cfg = tiny_cfg();
    cfg.lambda = 0;
    Environment e(stream, cfg);
    e.reset();
    ActionGrid zero(e.action_rows(), e.action_cols(), 0.0);
    auto r = e.step(zero);
    CHECK(r.reward == doctest::Approx(-std::abs(r.info.bitrate_error)).epsilon(1e-12));
}
