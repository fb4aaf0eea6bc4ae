#pragma once

// Dense reference simulator. Walks every neuron and synapse in plain
// loops with no machine structure, so its behavior is easy to audit; the
// pipeline engine must reproduce its state bit for bit. Keeps the full
// spike history (sparsely), which is fine at verification scale.
//
// Timing contract shared with the engine:
//   - a spike raw at step T is visible to a synapse with source delay dn
//     and slot delay ds at step T + 1 + dn + ds (one step of bus latency);
//   - the synapse phase of step t reads membrane voltages as of the end
//     of step t-1 and writes accumulators the membrane phase integrates
//     in step t+1 (accumulator double buffering);
//   - plasticity's postsynaptic input is the raw spike of step t-1;
//   - injected current applies during the membrane phase of its step.

#include <algorithm>
#include <cstdint>
#include <vector>

#include "hnemu/common.hpp"
#include "hnemu/kernels.hpp"
#include "hnemu/network.hpp"

namespace hnemu {

class DenseReference {
  public:
    explicit DenseReference(const ResolvedNetwork& net) : net_(&net) {
        const std::uint32_t n = net.n_neurons();
        soma_.resize(n);
        for (std::uint32_t i = 0; i < n; ++i) {
            soma_[i] = soma_steady_state(net.neurons[i].v_init);
        }
        y_.assign(n, 0.0f);
        netsum_read_.assign(n, 0.0f);
        netsum_write_.assign(n, 0.0f);
        stp_.assign(net.n_synapses(), StpState{});
        xj_.assign(net.n_synapses(), 0.0f);
        w_.resize(net.n_synapses());
        for (std::uint32_t j = 0; j < net.n_synapses(); ++j)
            w_[j] = net.synapses[j].w_init;
    }

    void set_stimulus(StimulusSchedule schedule) {
        stim_ = std::move(schedule);
    }

    void set_substep_trace(std::vector<std::uint32_t> neurons) {
        trace_neurons_ = std::move(neurons);
        trace_v_.assign(trace_neurons_.size(),
                        std::vector<float>(kSubstepsPerTimestep, 0.0f));
    }

    // Advances one network timestep; throws instability_error when a
    // membrane update produced a non-finite value (the step's synapse and
    // membrane state is kept, its spikes are not recorded).
    void step() {
        const ResolvedNetwork& net = *net_;
        const std::int64_t t = t_;

        // Post traces decay once per step, before any slot looks at them.
        for (std::uint32_t i = 0; i < net.n_neurons(); ++i)
            y_[i] = trace_decay(y_[i], net.nsets[net.neurons[i].attr_set]
                                           .tau_minus, kTimestepDtMs);

        for (std::uint32_t i = 0; i < net.n_neurons(); ++i) {
            const bool post_raw_prev = raw_spike(t - 1, i);
            float acc = 0.0f;
            for (const std::uint32_t jn : net.incoming[i]) {
                const ResolvedSynapse& syn = net.synapses[jn];
                const SynapseAttrSet& sa = net.ssets[syn.attr_set];
                const std::int64_t look =
                    t - 1 - net.neurons[syn.pre].acdn - syn.acds;
                const bool spike_in = raw_spike(look, syn.pre);

                stp_[jn] = stp_step(stp_[jn], sa.stp, spike_in,
                                    kTimestepDtMs);

                float xj = trace_decay(xj_[jn], sa.stdp.tau_plus,
                                       kTimestepDtMs);
                float w = w_[jn];
                if (spike_in)
                    w = detail::stdp_depress(w, sa.stdp.eta_minus, y_[i]);
                if (post_raw_prev)
                    w = detail::stdp_potentiate(w, sa.stdp.w_max,
                                                sa.stdp.eta_plus, xj);
                if (spike_in) xj = xj + sa.stdp.a_plus;
                xj_[jn] = xj;
                w_[jn] = w;

                acc = acc + synaptic_current(stp_[jn].s, w, sa.mem,
                                             soma_[i].V);
            }
            netsum_write_[i] = acc;
        }

        for (std::uint32_t i = 0; i < net.n_neurons(); ++i)
            if (raw_spike(t - 1, i))
                y_[i] =
                    y_[i] + net.nsets[net.neurons[i].attr_set].a_minus;

        // Membrane phase: 25 substeps under a current held for the step.
        std::vector<std::uint32_t> fired;
        std::int64_t bad_neuron = -1;
        for (std::uint32_t i = 0; i < net.n_neurons(); ++i) {
            const NeuronAttrs& na = net.nsets[net.neurons[i].attr_set];
            float I = netsum_read_[i] + na.I_bias;
            if (const auto* entries = stim_.at(t)) {
                for (const auto& [idx, cur] : *entries)
                    if (idx == i) I = I + cur;
            }
            SomaState s = soma_[i];
            bool spiked = false;
            const std::int64_t traced = trace_slot(i);
            for (int k = 0; k < kSubstepsPerTimestep; ++k) {
                const float v_prev = s.V;
                s = hh_step(s, na, I, kSubstepDtMs);
                if (detect_spike(v_prev, s.V)) spiked = true;
                if (traced >= 0) trace_v_[traced][k] = s.V;
            }
            soma_[i] = s;
            if (!soma_finite(s) && bad_neuron < 0) bad_neuron = i;
            if (spiked) fired.push_back(i);
        }
        if (bad_neuron >= 0)
            throw instability_error(net.neurons[bad_neuron].id, t);

        spikes_.push_back(std::move(fired));
        std::swap(netsum_read_, netsum_write_);
        ++t_;
    }

    void run(std::int64_t steps) {
        for (std::int64_t s = 0; s < steps; ++s) step();
    }

    // ---- state access (dense indices; synapses in declaration order) ----

    std::int64_t timestep() const { return t_; }
    const SomaState& soma(std::uint32_t i) const { return soma_[i]; }
    float post_trace(std::uint32_t i) const { return y_[i]; }
    // Accumulator the next membrane phase will integrate.
    float netsum(std::uint32_t i) const { return netsum_read_[i]; }
    const StpState& stp(std::uint32_t j) const { return stp_[j]; }
    float pre_trace(std::uint32_t j) const { return xj_[j]; }
    float weight(std::uint32_t j) const { return w_[j]; }

    bool raw_spike(std::int64_t t, std::uint32_t i) const {
        if (t < 0 || t >= std::int64_t(spikes_.size())) return false;
        const auto& v = spikes_[std::size_t(t)];
        return std::binary_search(v.begin(), v.end(), i);
    }
    // Raw spikes of the most recently completed step, ascending.
    const std::vector<std::uint32_t>& spikes_at(std::int64_t t) const {
        return spikes_.at(std::size_t(t));
    }

    const std::vector<float>& substep_voltages(std::uint32_t k) const {
        return trace_v_.at(k);
    }

  private:
    std::int64_t trace_slot(std::uint32_t i) const {
        for (std::size_t k = 0; k < trace_neurons_.size(); ++k)
            if (trace_neurons_[k] == i) return std::int64_t(k);
        return -1;
    }

    const ResolvedNetwork* net_;
    std::int64_t t_ = 0;
    std::vector<SomaState> soma_;
    std::vector<float> y_;
    std::vector<float> netsum_read_, netsum_write_;
    std::vector<StpState> stp_;
    std::vector<float> xj_;
    std::vector<float> w_;
    std::vector<std::vector<std::uint32_t>> spikes_; // per step, ascending
    StimulusSchedule stim_;
    std::vector<std::uint32_t> trace_neurons_;
    std::vector<std::vector<float>> trace_v_;
};

} // namespace hnemu
