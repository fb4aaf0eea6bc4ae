#pragma once

// Per-neuron and per-synapse numerical kernels: Hodgkin-Huxley membrane
// update, spike detection, short-term plasticity, spike-timing weight
// plasticity, synaptic current, and the single-pole conductance decay.
//
// All state arithmetic is 32-bit float with one rounding per operation.
// Operand order inside every expression is part of the contract: the
// pipeline engine and the dense reference simulator both call these
// kernels and must produce bit-identical state.

#include <cmath>
#include <cstdint>
#include <vector>

namespace hnemu {

// ---------------------------------------------------------------- soma ----

enum class GateVar : std::uint8_t { none = 0, m = 1, h = 2, n = 3 };

struct IonChannelSpec {
    float g_bar = 0.0f;  // peak conductance, mS/cm^2
    float V_eq = 0.0f;   // reversal potential, mV
    std::int32_t p = 0;  // activation exponent
    std::int32_t q = 0;  // inactivation exponent
    GateVar act = GateVar::none;
    GateVar inact = GateVar::none;
};

struct NeuronAttrs {
    float C_m = 1.0f;        // uF/cm^2
    float I_bias = 0.0f;     // tonic drive, uA/cm^2
    float tau_minus = 20.0f; // post-trace time constant, ms (> 1)
    float a_minus = 1.0f;    // post-trace increment per spike
    std::vector<IonChannelSpec> channels;
};

struct SomaState {
    float V = -65.0f; // mV
    float m = 0.0f;
    float h = 0.0f;
    float n = 0.0f;
};

struct GateRates {
    float alpha_m = 0.0f, beta_m = 0.0f;
    float alpha_h = 0.0f, beta_h = 0.0f;
    float alpha_n = 0.0f, beta_n = 0.0f;
};

// Classical squid-axon channel set: transient Na+ (m^3 h), delayed-rectifier
// K+ (n^4), and an ungated leak.
inline std::vector<IonChannelSpec> classic_channels() {
    return {
        {120.0f, 50.0f, 3, 1, GateVar::m, GateVar::h},
        {36.0f, -77.0f, 4, 0, GateVar::n, GateVar::none},
        {0.3f, -54.387f, 0, 0, GateVar::none, GateVar::none},
    };
}

inline NeuronAttrs classic_neuron_attrs() {
    NeuronAttrs a;
    a.channels = classic_channels();
    return a;
}

namespace detail {

// expf overflows for arguments above ~88.7; the clamp keeps every rate
// finite for any finite voltage without touching the physical range
// (arguments stay far below the cap for |V| < 1500 mV).
inline float safe_exp(float x) {
    if (x > 87.0f) x = 87.0f;
    return std::exp(x);
}

// x / (1 - e^(-x/scale)): removable 0/0 at x = 0. expm1 avoids the
// catastrophic cancellation of 1 - e^(-x/scale) near zero, so only the
// singular point itself needs the analytic limit.
inline float ratio_gate(float x, float scale, float limit_at_zero) {
    if (std::fabs(x) < 1e-6f) return limit_at_zero;
    if (-x / scale > 87.0f) return 0.0f; // denominator -> -inf side
    return x / (-std::expm1(-x / scale));
}

inline float clamp01(float x) {
    // NaN falls through both branches and propagates to the caller.
    if (x < 0.0f) return 0.0f;
    if (x > 1.0f) return 1.0f;
    return x;
}

// Left-fold integer power; exponents here are tiny (<= 4 classically).
inline float ipow(float base, std::int32_t e) {
    float r = 1.0f;
    for (std::int32_t i = 0; i < e; ++i) r = r * base;
    return r;
}

inline float gate_value(const SomaState& s, GateVar g) {
    switch (g) {
        case GateVar::m: return s.m;
        case GateVar::h: return s.h;
        case GateVar::n: return s.n;
        default: return 1.0f;
    }
}

} // namespace detail

// Voltage-dependent opening/closing rates of the three gate variables,
// 1/ms. Total over finite V; the 0/0 points of alpha_m and alpha_n are
// replaced by their analytic limits.
inline GateRates hh_gate_rates(float V) {
    GateRates r;
    // alpha_m = 0.1 (V+40) / (1 - e^(-(V+40)/10)), limit 1.0 at V = -40.
    {
        const float x = V + 40.0f;
        r.alpha_m = std::fabs(x) < 1e-6f ? 1.0f
                                         : 0.1f * detail::ratio_gate(x, 10.0f, 10.0f);
    }
    r.beta_m = 4.0f * detail::safe_exp(-(V + 65.0f) / 18.0f);
    r.alpha_h = 0.07f * detail::safe_exp(-(V + 65.0f) / 20.0f);
    r.beta_h = 1.0f / (1.0f + detail::safe_exp(-(V + 35.0f) / 10.0f));
    // alpha_n = 0.01 (V+55) / (1 - e^(-(V+55)/10)), limit 0.1 at V = -55.
    {
        const float x = V + 55.0f;
        r.alpha_n = std::fabs(x) < 1e-6f ? 0.1f
                                         : 0.01f * detail::ratio_gate(x, 10.0f, 10.0f);
    }
    r.beta_n = 0.125f * detail::safe_exp(-(V + 65.0f) / 80.0f);
    return r;
}

inline float gate_steady(float alpha, float beta) {
    return alpha / (alpha + beta);
}

// Gate fixed point at a clamped voltage; used for state initialization.
inline SomaState soma_steady_state(float V) {
    const GateRates r = hh_gate_rates(V);
    SomaState s;
    s.V = V;
    s.m = gate_steady(r.alpha_m, r.beta_m);
    s.h = gate_steady(r.alpha_h, r.beta_h);
    s.n = gate_steady(r.alpha_n, r.beta_n);
    return s;
}

// One forward-Euler step of the membrane equation and the three gate
// kinetics. Derivatives are evaluated on the incoming state; gates are
// clamped to [0,1] after the update. Finiteness is the caller's check
// (the caller knows which neuron this is).
inline SomaState hh_step(const SomaState& s, const NeuronAttrs& attrs,
                         float I_ext, float dt) {
    const GateRates r = hh_gate_rates(s.V);
    float I_ion = 0.0f;
    for (const IonChannelSpec& c : attrs.channels) {
        const float g = c.g_bar * detail::ipow(detail::gate_value(s, c.act), c.p)
                                * detail::ipow(detail::gate_value(s, c.inact), c.q);
        I_ion = I_ion + g * (s.V - c.V_eq);
    }
    SomaState out;
    out.V = s.V + dt * ((I_ext - I_ion) / attrs.C_m);
    out.m = detail::clamp01(s.m + dt * (r.alpha_m * (1.0f - s.m) - r.beta_m * s.m));
    out.h = detail::clamp01(s.h + dt * (r.alpha_h * (1.0f - s.h) - r.beta_h * s.h));
    out.n = detail::clamp01(s.n + dt * (r.alpha_n * (1.0f - s.n) - r.beta_n * s.n));
    return out;
}

inline bool soma_finite(const SomaState& s) {
    return std::isfinite(s.V) && std::isfinite(s.m) && std::isfinite(s.h) &&
           std::isfinite(s.n);
}

// Upward zero crossing.
inline bool detect_spike(float V_prev, float V_now) {
    return V_prev < 0.0f && V_now >= 0.0f;
}

// ------------------------------------------------------------- synapse ----

struct StpAttrs {
    float U = 0.2f;       // utilization increment, in [0,1]
    float A = 1.0f;       // release scale
    float tau_f = 100.0f; // ms, > 1
    float tau_d = 200.0f; // ms, > 1
    float tau_s = 10.0f;  // ms, > 1
};

struct StpState {
    float u = 0.0f; // facilitation
    float x = 1.0f; // recovered resource
    float s = 0.0f; // release variable
};

struct StdpAttrs {
    float tau_plus = 20.0f;  // pre-trace time constant, ms (> 1)
    float a_plus = 1.0f;     // pre-trace increment
    float eta_plus = 0.01f;  // potentiation rate
    float eta_minus = 0.01f; // depression rate
    float w_max = 1.0f;      // weight ceiling
};

struct SynapseMembraneAttrs {
    float g_syn = 1.0f; // mS/cm^2
    float E_syn = 0.0f; // mV
};

inline float trace_decay(float x, float tau, float dt) {
    return x * (1.0f - dt / tau);
}

// Facilitation/depression dynamics: linear decays first, then the jump
// terms if a presynaptic spike arrived this step. The resource jump is
// depletion (x loses u+ * x-), and the release jump uses post-jump u and
// pre-jump x.
inline StpState stp_step(const StpState& s, const StpAttrs& a, bool pre_spike,
                         float dt) {
    StpState o;
    o.u = trace_decay(s.u, a.tau_f, dt);
    o.x = s.x + (1.0f - s.x) * (dt / a.tau_d);
    o.s = trace_decay(s.s, a.tau_s, dt);
    if (pre_spike) {
        const float x_before = o.x;
        o.u = o.u + a.U * (1.0f - o.u);
        o.x = o.x - o.u * x_before;
        o.s = o.s + a.A * o.u * x_before;
    }
    return o;
}

namespace detail {

// Weight moves of the soft-bound rule, clamped so any spike train keeps
// w inside [0, w_max] even when accumulated traces exceed 1/eta.
inline float stdp_depress(float w, float eta_minus, float y) {
    const float r = w - w * eta_minus * y;
    return r < 0.0f ? 0.0f : r;
}

inline float stdp_potentiate(float w, float w_max, float eta_plus, float x_j) {
    const float r = w + (w_max - w) * eta_plus * x_j;
    return r > w_max ? w_max : r;
}

} // namespace detail

struct StdpUpdate {
    float x_j; // pre-trace
    float y;   // post-trace
    float w;   // weight
};

// One network-timestep update of the pre-trace, post-trace, and weight.
// Order within the step: both traces decay; weight moves use the decayed,
// not-yet-incremented traces (depression before potentiation when both
// spikes coincide); trace increments last.
inline StdpUpdate stdp_step(float x_j, float y, float w, const StdpAttrs& sa,
                            const NeuronAttrs& na, bool pre_spike,
                            bool post_spike, float dt) {
    x_j = trace_decay(x_j, sa.tau_plus, dt);
    y = trace_decay(y, na.tau_minus, dt);
    if (pre_spike) w = detail::stdp_depress(w, sa.eta_minus, y);
    if (post_spike) w = detail::stdp_potentiate(w, sa.w_max, sa.eta_plus, x_j);
    if (pre_spike) x_j = x_j + sa.a_plus;
    if (post_spike) y = y + na.a_minus;
    return {x_j, y, w};
}

// I_syn = S * w * g_syn * (E_syn - V_post), multiplied left to right.
inline float synaptic_current(float s, float w, const SynapseMembraneAttrs& a,
                              float V_post) {
    return s * w * a.g_syn * (a.E_syn - V_post);
}

// Single-pole conductance decay with reset-to-one on a spike.
inline float decay_step(float x, float tau, bool spike) {
    return spike ? 1.0f : x * (1.0f - 1.0f / tau);
}

} // namespace hnemu
