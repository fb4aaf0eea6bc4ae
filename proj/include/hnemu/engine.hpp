// Multi-node emulator. State is sharded per node exactly as the layout
// places it; worker threads advance whole nodes. Arithmetic and update
// order inside each node are identical to the dense reference, so every
// observable float is bitwise-equal to DenseReference at every step, for
// any node count, lane count, or worker count.
//
// Cross-node spike traffic flows through a 26-deep published-bit ring:
// row t mod 26 holds, for every neuron, its raw spike of step t delayed
// by that neuron's source-side delay (raw at t - acdn). Slot lookups at
// step t read rows t-1-acds with acds <= 24, so a row is dead for a full
// step before it is overwritten and writers never collide with readers.
// Raw spikes themselves sit in a per-neuron 257-bit ring, deep enough
// for the 256-step source delay plus the current step.
//
// Threading: one std::barrier, two waits per step. Between the end of
// one step and the start of the next, only the coordinating thread runs
// (commit: instability check, spike collection, accumulator swap). A
// worker touches only its own nodes' state plus read-only attributes,
// published rows of completed steps, and its own published row slice.

#pragma once

#include <atomic>
#include <barrier>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <thread>
#include <utility>
#include <vector>

#include "hnemu/common.hpp"
#include "hnemu/kernels.hpp"
#include "hnemu/layout.hpp"
#include "hnemu/network.hpp"

namespace hnemu {

inline constexpr char kCheckpointFormatTag[] = "nmckpt-1";

class Engine {
  public:
    // net and layout must outlive the engine and belong together
    // (layout produced by compile_layout over this net). n_workers = 0
    // picks min(n_hn, hardware threads); any value is clamped to n_hn.
    Engine(const ResolvedNetwork& net, const MachineLayout& layout,
           unsigned n_workers = 0)
        : net_(&net), layout_(&layout) {
        if (layout.n_neurons != net.n_neurons())
            throw validation_error("layout does not match the network");
        const std::uint32_t n = net.n_neurons();

        hns_.resize(layout.n_hn);
        hn_of_.resize(n);
        for (std::uint32_t h = 0; h < layout.n_hn; ++h) {
            const HnLayout& L = layout.hns[h];
            HnState& s = hns_[h];
            s.first = L.first_neuron;
            s.count = L.n_neurons;
            s.soma.resize(s.count);
            for (std::uint32_t i = 0; i < s.count; ++i) {
                s.soma[i] =
                    soma_steady_state(net.neurons[s.first + i].v_init);
                hn_of_[s.first + i] = h;
            }
            s.y.assign(s.count, 0.0f);
            s.netsum_read.assign(s.count, 0.0f);
            s.netsum_write.assign(s.count, 0.0f);
            s.raw_ring.assign(std::size_t(s.count) * kRingWords, 0);
            const std::size_t slots = L.slots.size();
            s.stp.assign(slots, StpState{});
            s.xj.assign(slots, 0.0f);
            s.w.resize(slots);
            for (std::size_t k = 0; k < slots; ++k)
                s.w[k] = L.slots[k].is_null() ? 0.0f : L.slots[k].w_init;
        }
        for (auto& row : published_) row.assign(n, 0);

        syn_slot_.assign(net.n_synapses(), {0, 0});
        for (std::uint32_t h = 0; h < layout.n_hn; ++h)
            for (std::size_t k = 0; k < layout.hns[h].slots.size(); ++k)
                if (!layout.hns[h].slots[k].is_null())
                    syn_slot_[layout.hns[h].slots[k].syn_index] = {h, k};

        unsigned w = n_workers;
        if (w == 0) w = std::thread::hardware_concurrency();
        if (w == 0) w = 1;
        n_workers_ = std::min<unsigned>(std::max(1u, w), layout.n_hn);
        stats_.resize(n_workers_);
        barrier_.emplace(std::ptrdiff_t(n_workers_) + 1);
        workers_.reserve(n_workers_);
        for (unsigned k = 0; k < n_workers_; ++k)
            workers_.emplace_back([this, k] { worker_main(k); });
    }

    // The engine keeps pointers to both; temporaries would dangle.
    Engine(const ResolvedNetwork&, MachineLayout&&, unsigned = 0) = delete;
    Engine(ResolvedNetwork&&, const MachineLayout&, unsigned = 0) = delete;
    Engine(ResolvedNetwork&&, MachineLayout&&, unsigned = 0) = delete;

    Engine(const Engine&) = delete;
    Engine& operator=(const Engine&) = delete;

    ~Engine() {
        stop_ = true;
        barrier_->arrive_and_wait();
        for (std::thread& th : workers_) th.join();
    }

    void set_stimulus(StimulusSchedule schedule) {
        stim_ = std::move(schedule);
    }

    // Captures per-substep voltages of the given dense indices each step.
    void set_substep_trace(std::vector<std::uint32_t> neurons) {
        trace_neurons_ = std::move(neurons);
        trace_v_.assign(trace_neurons_.size(),
                        std::vector<float>(kSubstepsPerTimestep, 0.0f));
    }

    // Called on the coordinating thread after each committed step.
    void set_on_step(
        std::function<void(std::int64_t, const std::vector<std::uint32_t>&)>
            fn) {
        on_step_ = std::move(fn);
    }

    // Advances one timestep. Throws instability_error when a membrane
    // went non-finite; the step's state mutations are kept but it is not
    // committed (no spike record, timestep() unchanged) and the engine
    // must not be stepped again.
    void step() {
        barrier_->arrive_and_wait(); // release workers into the step
        barrier_->arrive_and_wait(); // wait for every node to finish

        const std::int64_t t = t_;
        for (const HnState& s : hns_)
            if (s.bad >= 0)
                throw instability_error(
                    net_->neurons[s.first + std::uint32_t(s.bad)].id, t);

        std::vector<std::uint32_t> fired;
        for (HnState& s : hns_) {
            fired.insert(fired.end(), s.fired.begin(), s.fired.end());
            std::swap(s.netsum_read, s.netsum_write);
        }
        spikes_.push_back(std::move(fired));
        ++t_;
        if (on_step_) on_step_(t, spikes_.back());
    }

    void run(std::int64_t steps) {
        for (std::int64_t s = 0; s < steps; ++s) step();
    }

    // ---- state access, mirroring DenseReference (dense indices) ----

    std::int64_t timestep() const { return t_; }
    const SomaState& soma(std::uint32_t i) const {
        const HnState& s = hns_[hn_of_[i]];
        return s.soma[i - s.first];
    }
    float post_trace(std::uint32_t i) const {
        const HnState& s = hns_[hn_of_[i]];
        return s.y[i - s.first];
    }
    float netsum(std::uint32_t i) const {
        const HnState& s = hns_[hn_of_[i]];
        return s.netsum_read[i - s.first];
    }
    const StpState& stp(std::uint32_t j) const {
        return hns_[syn_slot_[j].first].stp[syn_slot_[j].second];
    }
    float pre_trace(std::uint32_t j) const {
        return hns_[syn_slot_[j].first].xj[syn_slot_[j].second];
    }
    float weight(std::uint32_t j) const {
        return hns_[syn_slot_[j].first].w[syn_slot_[j].second];
    }

    // Raster since construction (or since a checkpoint load, whose past
    // steps read as silent).
    bool raw_spike(std::int64_t t, std::uint32_t i) const {
        if (t < first_recorded_ || t >= t_) return false;
        const auto& v = spikes_[std::size_t(t - first_recorded_)];
        return std::binary_search(v.begin(), v.end(), i);
    }
    const std::vector<std::uint32_t>& spikes_at(std::int64_t t) const {
        return spikes_.at(std::size_t(t - first_recorded_));
    }

    const std::vector<float>& substep_voltages(std::uint32_t k) const {
        return trace_v_.at(k);
    }

    // ---- throughput counters (criterion: slot updates per second) ----

    // Wall seconds summed over workers, synapse phase only.
    double synapse_phase_seconds() const {
        double s = 0.0;
        for (const WorkerStats& w : stats_) s += w.phase_a_sec;
        return s;
    }
    // Non-null slots processed across all steps so far.
    std::uint64_t slot_updates() const {
        std::uint64_t n = 0;
        for (const WorkerStats& w : stats_) n += w.slots;
        return n;
    }

    unsigned n_workers() const { return n_workers_; }

    // ---- checkpointing -------------------------------------------------
    // A checkpoint freezes every bit of dynamic state (somata, traces,
    // weights, accumulators, delay rings) plus the timestep counter. It
    // is only loadable into an engine over the same network and layout.

    void save_checkpoint(const std::filesystem::path& file) const {
        detail::BinWriter w(file.string());
        for (const char* c = kCheckpointFormatTag; *c; ++c)
            w.u8(std::uint8_t(*c));
        w.u32(layout_->n_hn);
        w.u32(layout_->p);
        w.u32(net_->n_neurons());
        w.u32(net_->n_synapses());
        w.u64(std::uint64_t(t_));
        for (const HnState& s : hns_) {
            for (std::uint32_t i = 0; i < s.count; ++i) {
                w.f32(s.soma[i].V);
                w.f32(s.soma[i].m);
                w.f32(s.soma[i].h);
                w.f32(s.soma[i].n);
                w.f32(s.y[i]);
                w.f32(s.netsum_read[i]);
            }
            for (const std::uint64_t word : s.raw_ring) w.u64(word);
            for (std::size_t k = 0; k < s.stp.size(); ++k) {
                w.f32(s.stp[k].u);
                w.f32(s.stp[k].x);
                w.f32(s.stp[k].s);
                w.f32(s.xj[k]);
                w.f32(s.w[k]);
            }
        }
        for (const auto& row : published_)
            for (const std::uint8_t b : row) w.u8(b);
        w.close();
    }

    void load_checkpoint(const std::filesystem::path& file) {
        detail::BinReader r(file.string());
        for (const char* c = kCheckpointFormatTag; *c; ++c)
            if (r.u8() != std::uint8_t(*c))
                throw io_error("not a checkpoint file: " + file.string());
        if (r.u32() != layout_->n_hn || r.u32() != layout_->p ||
            r.u32() != net_->n_neurons() || r.u32() != net_->n_synapses())
            throw io_error("checkpoint does not match this machine: " +
                           file.string());
        t_ = std::int64_t(r.u64());
        for (HnState& s : hns_) {
            for (std::uint32_t i = 0; i < s.count; ++i) {
                s.soma[i].V = r.f32();
                s.soma[i].m = r.f32();
                s.soma[i].h = r.f32();
                s.soma[i].n = r.f32();
                s.y[i] = r.f32();
                s.netsum_read[i] = r.f32();
            }
            for (std::uint64_t& word : s.raw_ring) word = r.u64();
            for (std::size_t k = 0; k < s.stp.size(); ++k) {
                s.stp[k].u = r.f32();
                s.stp[k].x = r.f32();
                s.stp[k].s = r.f32();
                s.xj[k] = r.f32();
                s.w[k] = r.f32();
            }
        }
        for (auto& row : published_)
            for (std::uint8_t& b : row) b = r.u8();
        r.expect_eof();
        spikes_.clear();
        first_recorded_ = t_;
    }

  private:
    static constexpr std::size_t kRingWords =
        (kRawSpikeRingSteps + 63) / 64; // 257 bits -> 5 words per neuron

    struct alignas(64) WorkerStats {
        double phase_a_sec = 0.0;
        std::uint64_t slots = 0;
    };

    struct HnState {
        std::uint32_t first = 0, count = 0;
        std::vector<SomaState> soma;
        std::vector<float> y, netsum_read, netsum_write;
        std::vector<std::uint64_t> raw_ring; // count * kRingWords
        std::vector<StpState> stp;           // per slot, row-major
        std::vector<float> xj, w;            // per slot, row-major
        std::vector<std::uint32_t> fired;    // dense, ascending
        std::int64_t bad = -1; // first non-finite local index, or -1
    };

    bool ring_bit(const HnState& s, std::uint32_t local,
                  std::int64_t t) const {
        const std::size_t b = std::size_t(t % kRawSpikeRingSteps);
        const std::uint64_t word =
            s.raw_ring[local * kRingWords + b / 64];
        return (word >> (b % 64)) & 1u;
    }
    static void ring_set(HnState& s, std::uint32_t local, std::int64_t t,
                         bool v) {
        const std::size_t b = std::size_t(t % kRawSpikeRingSteps);
        std::uint64_t& word = s.raw_ring[local * kRingWords + b / 64];
        const std::uint64_t mask = std::uint64_t(1) << (b % 64);
        word = v ? (word | mask) : (word & ~mask);
    }

    void worker_main(unsigned k) {
        const std::uint32_t lo =
            std::uint32_t(std::uint64_t(k) * layout_->n_hn / n_workers_);
        const std::uint32_t hi = std::uint32_t(std::uint64_t(k + 1) *
                                               layout_->n_hn / n_workers_);
        for (;;) {
            barrier_->arrive_and_wait();
            if (stop_) return;
            const std::int64_t t = t_;
            const auto a0 = std::chrono::steady_clock::now();
            for (std::uint32_t h = lo; h < hi; ++h)
                synapse_phase(hns_[h], layout_->hns[h], t, stats_[k]);
            stats_[k].phase_a_sec +=
                std::chrono::duration<double>(
                    std::chrono::steady_clock::now() - a0)
                    .count();
            for (std::uint32_t h = lo; h < hi; ++h)
                membrane_phase(hns_[h], t);
            barrier_->arrive_and_wait();
        }
    }

    void synapse_phase(HnState& s, const HnLayout& L, std::int64_t t,
                       WorkerStats& st) {
        const ResolvedNetwork& net = *net_;
        const std::uint32_t p = layout_->p;

        for (std::uint32_t i = 0; i < s.count; ++i)
            s.y[i] = trace_decay(
                s.y[i], net.nsets[net.neurons[s.first + i].attr_set]
                            .tau_minus, kTimestepDtMs);

        for (std::uint32_t i = 0; i < s.count; ++i) {
            const bool post_raw_prev = t >= 1 && ring_bit(s, i, t - 1);
            const float v_post = s.soma[i].V;
            float acc = 0.0f;
            for (std::uint32_t r = L.neuron_row_begin[i];
                 r < L.neuron_row_begin[i + 1]; ++r) {
                for (std::uint32_t l = 0; l < p; ++l) {
                    const SynapseSlot& sl = L.slots[r * p + l];
                    if (sl.is_null()) continue;
                    ++st.slots;
                    const SynapseAttrSet& sa = net.ssets[sl.attr_set];
                    const std::int64_t look = t - 1 - sl.acds;
                    const bool spike_in =
                        look >= 0 &&
                        published_[std::size_t(look %
                                               kSpikeHistoryDepth)]
                                  [sl.pre] != 0;

                    const std::size_t slot = r * p + l;
                    s.stp[slot] = stp_step(s.stp[slot], sa.stp, spike_in,
                                           kTimestepDtMs);
                    float xj = trace_decay(s.xj[slot], sa.stdp.tau_plus,
                                           kTimestepDtMs);
                    float w = s.w[slot];
                    if (spike_in)
                        w = detail::stdp_depress(w, sa.stdp.eta_minus,
                                                 s.y[i]);
                    if (post_raw_prev)
                        w = detail::stdp_potentiate(
                            w, sa.stdp.w_max, sa.stdp.eta_plus, xj);
                    if (spike_in) xj = xj + sa.stdp.a_plus;
                    s.xj[slot] = xj;
                    s.w[slot] = w;

                    acc = acc + synaptic_current(s.stp[slot].s, w, sa.mem,
                                                 v_post);
                }
            }
            s.netsum_write[i] = acc;
        }

        for (std::uint32_t i = 0; i < s.count; ++i)
            if (t >= 1 && ring_bit(s, i, t - 1))
                s.y[i] = s.y[i] +
                         net.nsets[net.neurons[s.first + i].attr_set]
                             .a_minus;
    }

    void membrane_phase(HnState& s, std::int64_t t) {
        const ResolvedNetwork& net = *net_;
        s.fired.clear();
        s.bad = -1;
        const auto* entries = stim_.at(t);
        auto& published = published_[std::size_t(t % kSpikeHistoryDepth)];

        for (std::uint32_t i = 0; i < s.count; ++i) {
            const std::uint32_t g = s.first + i;
            const ResolvedNeuron& d = net.neurons[g];
            const NeuronAttrs& na = net.nsets[d.attr_set];
            float I = s.netsum_read[i] + na.I_bias;
            if (entries)
                for (const auto& [idx, cur] : *entries)
                    if (idx == g) I = I + cur;

            SomaState soma = s.soma[i];
            bool spiked = false;
            const std::int64_t traced = trace_slot(g);
            for (int k = 0; k < kSubstepsPerTimestep; ++k) {
                const float v_prev = soma.V;
                soma = hh_step(soma, na, I, kSubstepDtMs);
                if (detect_spike(v_prev, soma.V)) spiked = true;
                if (traced >= 0) trace_v_[std::size_t(traced)][k] = soma.V;
            }
            s.soma[i] = soma;
            if (!soma_finite(soma) && s.bad < 0) s.bad = i;

            ring_set(s, i, t, spiked);
            const std::int64_t src = t - d.acdn;
            published[g] = src >= 0 && ring_bit(s, i, src) ? 1 : 0;
            if (spiked) s.fired.push_back(g);
        }
    }

    std::int64_t trace_slot(std::uint32_t g) const {
        for (std::size_t k = 0; k < trace_neurons_.size(); ++k)
            if (trace_neurons_[k] == g) return std::int64_t(k);
        return -1;
    }

    const ResolvedNetwork* net_;
    const MachineLayout* layout_;
    std::int64_t t_ = 0;
    std::int64_t first_recorded_ = 0;
    std::vector<HnState> hns_;
    std::vector<std::uint32_t> hn_of_;
    std::vector<std::pair<std::uint32_t, std::size_t>> syn_slot_;
    std::vector<std::uint8_t> published_[kSpikeHistoryDepth];
    std::vector<std::vector<std::uint32_t>> spikes_;
    StimulusSchedule stim_;
    std::vector<std::uint32_t> trace_neurons_;
    std::vector<std::vector<float>> trace_v_;
    std::function<void(std::int64_t, const std::vector<std::uint32_t>&)>
        on_step_;

    unsigned n_workers_ = 1;
    std::vector<WorkerStats> stats_;
    std::optional<std::barrier<>> barrier_;
    std::vector<std::thread> workers_;
    std::atomic<bool> stop_{false};
};

} // namespace hnemu
