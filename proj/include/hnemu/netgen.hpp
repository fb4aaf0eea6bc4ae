// Seeded random network construction. mt19937_64 output is pinned by the
// standard, and all value mapping is done here with plain arithmetic, so
// a (params, seed) pair names the same network on every platform.

#pragma once

#include <cstdint>
#include <random>
#include <string>

#include "hnemu/network.hpp"

namespace hnemu {

struct GenParams {
    std::uint32_t n_neurons = 100;
    std::uint32_t n_synapses = 1000;
    std::uint16_t n_neuron_sets = 2;
    std::uint16_t n_synapse_sets = 2;
    float inhibitory_fraction = 0.2f; // of synapse sets, E_syn = -80
    std::uint16_t max_acdn = 4;
    std::uint16_t max_acds = 4;
    float ibias_lo = 4.0f; // the upper half of the range fires tonically
    float ibias_hi = 12.0f;
    std::uint64_t seed = 1;
};

namespace detail {

// [0, 1) with 24 significant bits; enough for attribute jitter.
inline float unit_float(std::mt19937_64& g) {
    return float(g() >> 40) * 0x1p-24f;
}
inline float in_range(std::mt19937_64& g, float lo, float hi) {
    return lo + (hi - lo) * unit_float(g);
}
inline std::uint64_t below(std::mt19937_64& g, std::uint64_t n) {
    return g() % n;
}

} // namespace detail

inline NetworkModel generate_network(const GenParams& gp) {
    using detail::below;
    using detail::in_range;
    if (gp.n_neurons == 0) throw validation_error("n_neurons must be > 0");
    if (gp.n_neuron_sets == 0 || gp.n_synapse_sets == 0)
        throw validation_error("attribute set counts must be > 0");
    if (gp.max_acdn > kMaxNeuronDelay)
        throw validation_error("max_acdn exceeds the delay limit of " +
                               std::to_string(kMaxNeuronDelay));
    if (gp.max_acds > kMaxSynapseDelay)
        throw validation_error("max_acds exceeds the delay limit of " +
                               std::to_string(kMaxSynapseDelay));
    std::mt19937_64 g(gp.seed);

    NetworkModel m;
    m.name = "gen-" + std::to_string(gp.seed);

    for (std::uint16_t k = 0; k < gp.n_neuron_sets; ++k) {
        NeuronSetDecl d;
        d.id = k;
        d.cm = in_range(g, 0.8f, 1.2f);
        d.ibias = in_range(g, gp.ibias_lo, gp.ibias_hi);
        d.tau_minus = in_range(g, 10.0f, 40.0f);
        d.a_minus = in_range(g, 0.02f, 0.2f);
        m.neuron_sets.push_back(d);
    }
    for (std::uint16_t k = 0; k < gp.n_synapse_sets; ++k) {
        SynapseSetDecl d;
        d.id = k;
        d.stp.U = in_range(g, 0.1f, 0.9f);
        d.stp.A = in_range(g, 0.5f, 2.0f);
        d.stp.tau_f = in_range(g, 50.0f, 500.0f);
        d.stp.tau_d = in_range(g, 100.0f, 800.0f);
        d.stp.tau_s = in_range(g, 3.0f, 20.0f);
        d.stdp.tau_plus = in_range(g, 10.0f, 40.0f);
        d.stdp.a_plus = in_range(g, 0.02f, 0.2f);
        d.stdp.eta_plus = in_range(g, 0.005f, 0.05f);
        d.stdp.eta_minus = in_range(g, 0.005f, 0.05f);
        d.stdp.w_max = in_range(g, 0.5f, 2.0f);
        d.mem.g_syn = in_range(g, 0.01f, 0.08f);
        const bool inhib =
            float(k) < gp.inhibitory_fraction * float(gp.n_synapse_sets);
        d.mem.E_syn = inhib ? -80.0f : 0.0f;
        m.synapse_sets.push_back(d);
    }

    m.neurons.reserve(gp.n_neurons);
    for (std::uint32_t i = 0; i < gp.n_neurons; ++i) {
        NeuronDecl d;
        d.id = i;
        d.attr_set = std::uint16_t(below(g, gp.n_neuron_sets));
        d.acdn = std::uint16_t(below(g, std::uint64_t(gp.max_acdn) + 1));
        d.v_init = in_range(g, -70.0f, -60.0f);
        m.neurons.push_back(d);
    }

    m.synapses.reserve(gp.n_synapses);
    for (std::uint32_t j = 0; j < gp.n_synapses; ++j) {
        SynapseDecl d;
        d.pre = std::uint32_t(below(g, gp.n_neurons));
        d.post = std::uint32_t(below(g, gp.n_neurons));
        d.attr_set = std::uint16_t(below(g, gp.n_synapse_sets));
        d.acds = std::uint8_t(below(g, std::uint64_t(gp.max_acds) + 1));
        const float w_max = m.synapse_sets[d.attr_set].stdp.w_max;
        d.w_init = in_range(g, 0.0f, w_max);
        m.synapses.push_back(d);
    }
    return m;
}

} // namespace hnemu
