// Numerical kernel tests. Expected constants were frozen from an
// independent float32 re-implementation (scripts/gen_expected.py); values
// whose computation is pure +-*/ are asserted bitwise, values that pass
// through exp/expm1 get a few ulp of slack for libm variation.

#include "catch_amalgamated.hpp"

#include <cmath>
#include <random>
#include <vector>

#include "hnemu/kernels.hpp"
#include "testutil.hpp"

using namespace hnemu;
using testutil::ulp_distance;

namespace {

// Frozen by scripts/gen_expected.py. Regenerate with:
//   python3 scripts/gen_expected.py
constexpr float kRateAlphaM_m65 = 0x1.c9dbc6p-3f;
constexpr float kRateBetaH_m65 = 0x1.848344p-5f;
constexpr float kRateAlphaN_m65 = 0x1.dcc15cp-5f;
constexpr float kSteadyM_m65 = 0x1.b19f76p-5f;
constexpr float kSteadyH_m65 = 0x1.3136bep-1f;
constexpr float kSteadyN_m65 = 0x1.454d18p-2f;
constexpr float kHHStep1V = -0x1.03ffd4p+6f;
constexpr double kRestFixedPoint = -64.99637933119206;
constexpr int kTonicSpikeCount = 69;
constexpr float kStpStep49U = 0x1.f4a09ep-4f;
constexpr float kStpStep49X = 0x1.afe674p-1f;
constexpr float kStpStep49S = 0x1.2c3a94p-10f;
constexpr float kStpSpike2U = 0x1.2fec9cp-2f;
constexpr float kStpSpike2X = 0x1.2ffe50p-1f;
constexpr float kStpSpike2S = 0x1.01ab8ap-2f;
constexpr float kStdpTrace10 = 0x1.ea7c36p-5f;
constexpr float kStdpPairPotW = 0x1.00fd8ep-1f;
constexpr float kStdpPairPotX = 0x1.3cf0cep-4f;
constexpr float kStdpPairDepW = 0x1.fe04e6p-2f;
constexpr float kDecay12Tau4 = 0x1.037e20p-5f;

} // namespace

TEST_CASE("gate rates: removable singularities take their analytic limits",
          "[kernels]") {
    CHECK(hh_gate_rates(-40.0f).alpha_m == 1.0f);
    CHECK(hh_gate_rates(-55.0f).alpha_n == 0.1f);

    // Just off the singular points (one float ulp of V away) the generic
    // path must agree with the limit; this is where a naive
    // 1 - exp(-x/10) evaluation loses most of its digits.
    const float below = std::nextafter(-40.0f, -100.0f);
    const float above = std::nextafter(-40.0f, 0.0f);
    CHECK_THAT(hh_gate_rates(below).alpha_m,
               Catch::Matchers::WithinRel(1.0f, 1e-5f));
    CHECK_THAT(hh_gate_rates(above).alpha_m,
               Catch::Matchers::WithinRel(1.0f, 1e-5f));
    CHECK_THAT(hh_gate_rates(std::nextafter(-55.0f, 0.0f)).alpha_n,
               Catch::Matchers::WithinRel(0.1f, 1e-5f));
}

TEST_CASE("gate rates: positive and finite across and beyond the "
          "physiological range",
          "[kernels]") {
    for (float V = -120.0f; V <= 80.0f; V += 0.01f) {
        const GateRates r = hh_gate_rates(V);
        for (float v : {r.alpha_m, r.beta_m, r.alpha_h, r.beta_h, r.alpha_n,
                        r.beta_n}) {
            REQUIRE(std::isfinite(v));
            REQUIRE(v >= 0.0f);
        }
    }
    for (float V : {-1e6f, 1e6f, -1e30f, 1e30f}) {
        const GateRates r = hh_gate_rates(V);
        CHECK(std::isfinite(r.alpha_m));
        CHECK(std::isfinite(r.beta_m));
        CHECK(std::isfinite(r.alpha_h));
        CHECK(std::isfinite(r.beta_h));
        CHECK(std::isfinite(r.alpha_n));
        CHECK(std::isfinite(r.beta_n));
    }
}

TEST_CASE("gate rates at V = -65 match the frozen reference", "[kernels]") {
    const GateRates r = hh_gate_rates(-65.0f);
    // exp(-0) = 1 exactly, so these three are exact products.
    CHECK(r.beta_m == 4.0f);
    CHECK(r.alpha_h == 0.07f);
    CHECK(r.beta_n == 0.125f);
    CHECK(ulp_distance(r.alpha_m, kRateAlphaM_m65) <= 4);
    CHECK(ulp_distance(r.beta_h, kRateBetaH_m65) <= 4);
    CHECK(ulp_distance(r.alpha_n, kRateAlphaN_m65) <= 4);
}

TEST_CASE("gate steady state at V = -65", "[kernels]") {
    const SomaState s = soma_steady_state(-65.0f);
    CHECK(s.V == -65.0f);
    CHECK(ulp_distance(s.m, kSteadyM_m65) <= 4);
    CHECK(ulp_distance(s.h, kSteadyH_m65) <= 4);
    CHECK(ulp_distance(s.n, kSteadyN_m65) <= 4);
}

TEST_CASE("hh_step: voltage update is bitwise reproducible from pinned state",
          "[kernels]") {
    // Inputs pinned to the frozen steady-state floats; the V update touches
    // no transcendental, so it must match the reference bit for bit.
    SomaState s;
    s.V = -65.0f;
    s.m = kSteadyM_m65;
    s.h = kSteadyH_m65;
    s.n = kSteadyN_m65;
    const NeuronAttrs attrs = classic_neuron_attrs();
    const SomaState s1 = hh_step(s, attrs, 0.0f, 0.04f);
    CHECK(s1.V == kHHStep1V);
    // Gate updates go through the rate functions: small slack.
    CHECK(ulp_distance(s1.m, kSteadyM_m65) <= 4);
    CHECK(ulp_distance(s1.h, kSteadyH_m65) <= 4);
    CHECK(ulp_distance(s1.n, kSteadyN_m65) <= 4);
}

TEST_CASE("hh_step: no channels means pure forward-Euler on I_ext",
          "[kernels]") {
    NeuronAttrs attrs; // no channels, C_m = 1
    SomaState s;
    s.V = 0.0f;
    const SomaState s1 = hh_step(s, attrs, 1.0f, 0.04f);
    CHECK(s1.V == 0.04f);
    const SomaState s2 = hh_step(s1, attrs, 1.0f, 0.04f);
    CHECK(s2.V == 0.08f);
}

TEST_CASE("hh_step: gates stay inside [0,1] under hard drive", "[kernels]") {
    const NeuronAttrs attrs = classic_neuron_attrs();
    SomaState s = soma_steady_state(-65.0f);
    std::mt19937 rng(7);
    for (int i = 0; i < 200000; ++i) {
        const float I = -60.0f + float(rng() % 2400001) * 1e-4f; // [-60,180]
        s = hh_step(s, attrs, I, 0.04f);
        REQUIRE(soma_finite(s));
        REQUIRE(s.m >= 0.0f);
        REQUIRE(s.m <= 1.0f);
        REQUIRE(s.h >= 0.0f);
        REQUIRE(s.h <= 1.0f);
        REQUIRE(s.n >= 0.0f);
        REQUIRE(s.n <= 1.0f);
    }
}

TEST_CASE("tonic drive: frozen spike count over one second", "[kernels]") {
    const NeuronAttrs attrs = classic_neuron_attrs();
    SomaState s = soma_steady_state(-65.0f);
    int count = 0;
    int first = -1;
    for (int t = 0; t < 1000; ++t) {
        bool fired = false;
        for (int k = 0; k < 25; ++k) {
            const float Vp = s.V;
            s = hh_step(s, attrs, 10.0f, 0.04f);
            if (detect_spike(Vp, s.V)) fired = true;
        }
        if (fired) {
            ++count;
            if (first < 0) first = t;
        }
    }
    CHECK(count == kTonicSpikeCount);
    CHECK(first >= 0);
    CHECK(first <= 2); // reference says step 1; allow one step of slack
}

TEST_CASE("zero drive: membrane settles onto the bisected fixed point",
          "[kernels]") {
    const NeuronAttrs attrs = classic_neuron_attrs();
    SomaState s = soma_steady_state(-65.0f);
    for (int k = 0; k < 12500; ++k) s = hh_step(s, attrs, 0.0f, 0.04f);
    CHECK(std::fabs(double(s.V) - kRestFixedPoint) < 0.01);
}

TEST_CASE("detect_spike: upward zero crossing only", "[kernels]") {
    CHECK(detect_spike(-0.1f, 0.0f));
    CHECK(detect_spike(-40.0f, 12.0f));
    CHECK_FALSE(detect_spike(-0.1f, -0.05f)); // still below
    CHECK_FALSE(detect_spike(0.0f, 10.0f));   // was not below
    CHECK_FALSE(detect_spike(5.0f, 40.0f));
    CHECK_FALSE(detect_spike(10.0f, -70.0f)); // downward
}

TEST_CASE("stp_step: first spike from rest releases exactly (0.2, 0.8, 0.2)",
          "[kernels]") {
    StpAttrs a;
    a.U = 0.2f;
    a.A = 1.0f;
    const StpState r = stp_step(StpState{}, a, true, 1.0f);
    CHECK(r.u == 0.2f);
    CHECK(r.x == 0.8f);
    CHECK(r.s == 0.2f);
}

TEST_CASE("stp_step: decay chain and second spike match the frozen reference",
          "[kernels]") {
    StpAttrs a;
    a.U = 0.2f;
    a.A = 1.0f;
    a.tau_f = 100.0f;
    a.tau_d = 200.0f;
    a.tau_s = 10.0f;
    StpState s;
    for (int t = 0; t <= 50; ++t) {
        s = stp_step(s, a, t == 0 || t == 50, 1.0f);
        if (t == 49) {
            CHECK(s.u == kStpStep49U);
            CHECK(s.x == kStpStep49X);
            CHECK(s.s == kStpStep49S);
        }
    }
    CHECK(s.u == kStpSpike2U);
    CHECK(s.x == kStpSpike2X);
    CHECK(s.s == kStpSpike2S);
}

TEST_CASE("stp_step: state stays bounded under random spike trains",
          "[kernels]") {
    StpAttrs a;
    a.U = 1.0f; // worst case utilization
    a.A = 2.0f;
    a.tau_f = 1.01f; // just above the validity floor
    a.tau_d = 1.01f;
    a.tau_s = 1.01f;
    StpState s;
    std::mt19937 rng(11);
    for (int t = 0; t < 100000; ++t) {
        s = stp_step(s, a, (rng() & 3u) == 0u, 1.0f);
        REQUIRE(std::isfinite(s.u));
        REQUIRE(std::isfinite(s.x));
        REQUIRE(std::isfinite(s.s));
        REQUIRE(s.u >= 0.0f);
        REQUIRE(s.u <= 1.0f);
        REQUIRE(s.x >= 0.0f);
        REQUIRE(s.x <= 1.0f);
        REQUIRE(s.s >= 0.0f);
    }
}

TEST_CASE("stdp_step: pre-trace decay chain is bitwise", "[kernels]") {
    StdpAttrs sa;
    sa.tau_plus = 20.0f;
    sa.a_plus = 0.1f;
    NeuronAttrs na;
    float x = 0.0f, y = 0.0f, w = 0.5f;
    StdpUpdate u = stdp_step(x, y, w, sa, na, true, false, 1.0f);
    CHECK(u.w == 0.5f); // y was zero: depression is an exact no-op
    CHECK(u.x_j == 0.1f);
    for (int t = 0; t < 10; ++t)
        u = stdp_step(u.x_j, u.y, u.w, sa, na, false, false, 1.0f);
    CHECK(u.x_j == kStdpTrace10);

    // Same chain written as literal multiplications.
    float lit = 0.1f;
    for (int t = 0; t < 10; ++t) lit = lit * 0.95f;
    CHECK(ulp_distance(u.x_j, lit) <= 1);
}

TEST_CASE("stdp_step: pre-post pairing potentiates by the decayed trace",
          "[kernels]") {
    StdpAttrs sa;
    sa.tau_plus = 20.0f;
    sa.a_plus = 0.1f;
    sa.eta_plus = 0.05f;
    sa.eta_minus = 0.05f;
    sa.w_max = 1.0f;
    NeuronAttrs na;
    na.tau_minus = 20.0f;
    na.a_minus = 0.1f;
    float x = 0.0f, y = 0.0f, w = 0.5f;
    for (int t = 0; t <= 5; ++t) {
        const StdpUpdate u =
            stdp_step(x, y, w, sa, na, t == 0, t == 5, 1.0f);
        x = u.x_j;
        y = u.y;
        w = u.w;
    }
    CHECK(w == kStdpPairPotW);
    CHECK(w > 0.5f);
}

TEST_CASE("stdp_step: post-pre pairing depresses by the decayed trace",
          "[kernels]") {
    StdpAttrs sa;
    sa.tau_plus = 20.0f;
    sa.a_plus = 0.1f;
    sa.eta_plus = 0.05f;
    sa.eta_minus = 0.05f;
    sa.w_max = 1.0f;
    NeuronAttrs na;
    na.tau_minus = 20.0f;
    na.a_minus = 0.1f;
    float x = 0.0f, y = 0.0f, w = 0.5f;
    for (int t = 0; t <= 5; ++t) {
        const StdpUpdate u =
            stdp_step(x, y, w, sa, na, t == 5, t == 0, 1.0f);
        x = u.x_j;
        y = u.y;
        w = u.w;
    }
    CHECK(w == kStdpPairDepW);
    CHECK(w < 0.5f);
    // Decayed traces are symmetric between the two scenarios.
    CHECK(y == kStdpPairPotX);
}

TEST_CASE("stdp_step: weight never leaves [0, w_max]", "[kernels]") {
    StdpAttrs sa;
    sa.tau_plus = 1.01f;
    sa.a_plus = 0.99f; // eta * a close to the validity ceiling
    sa.eta_plus = 1.0f;
    sa.eta_minus = 1.0f;
    sa.w_max = 2.0f;
    NeuronAttrs na;
    na.tau_minus = 1.01f;
    na.a_minus = 0.99f;
    float x = 0.0f, y = 0.0f, w = 1.0f;
    std::mt19937 rng(13);
    for (int t = 0; t < 100000; ++t) {
        const StdpUpdate u = stdp_step(x, y, w, sa, na, (rng() & 1u) != 0u,
                                       (rng() & 1u) != 0u, 1.0f);
        x = u.x_j;
        y = u.y;
        w = u.w;
        REQUIRE(std::isfinite(w));
        REQUIRE(w >= 0.0f);
        REQUIRE(w <= sa.w_max);
    }
}

TEST_CASE("synaptic_current: worked value and sign convention", "[kernels]") {
    SynapseMembraneAttrs a;
    a.g_syn = 1.0f;
    a.E_syn = 0.0f;
    // 0.5 * 0.25 * 1 * (0 - (-65)) = 8.125, every factor exact.
    CHECK(synaptic_current(0.5f, 0.25f, a, -65.0f) == 8.125f);
    // Depolarized past the reversal potential: current flips sign.
    CHECK(synaptic_current(0.5f, 0.25f, a, 10.0f) < 0.0f);
    CHECK(synaptic_current(0.0f, 0.25f, a, -65.0f) == 0.0f);
}

TEST_CASE("decay_step: reset on spike, frozen 12-step chain, and agreement "
          "with trace_decay at dt = 1",
          "[kernels]") {
    CHECK(decay_step(0.123f, 7.0f, true) == 1.0f);
    float d = 1.0f;
    for (int t = 0; t < 12; ++t) d = decay_step(d, 4.0f, false);
    CHECK(d == kDecay12Tau4);
    CHECK(decay_step(1.0f, 10.0f, false) == 0.9f); // 1 - 1/10 rounds to 0.9f

    // The release variable of stp_step and decay_step share one decay
    // expression; they must agree bitwise for equal tau.
    for (float x : {0.0f, 1e-20f, 0.37f, 0.5f, 0.999f, 1.0f}) {
        for (float tau : {1.01f, 2.0f, 4.0f, 10.0f, 333.0f}) {
            CHECK(decay_step(x, tau, false) == trace_decay(x, tau, 1.0f));
        }
    }
}

TEST_CASE("classic channel set parameters", "[kernels]") {
    const auto ch = classic_channels();
    REQUIRE(ch.size() == 3);
    CHECK(ch[0].g_bar == 120.0f);
    CHECK(ch[0].V_eq == 50.0f);
    CHECK(ch[0].p == 3);
    CHECK(ch[0].q == 1);
    CHECK(ch[1].g_bar == 36.0f);
    CHECK(ch[1].V_eq == -77.0f);
    CHECK(ch[1].p == 4);
    CHECK(ch[2].g_bar == 0.3f);
    CHECK(ch[2].V_eq == -54.387f);
    CHECK(ch[2].p == 0);
    CHECK(ch[2].q == 0);
}
