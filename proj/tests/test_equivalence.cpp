// Engine vs dense reference: every observable float must be bitwise
// identical at every step, for every machine shape and worker count.

#include "catch_amalgamated.hpp"

#include <cstdio>
#include <filesystem>
#include <string>

#include "hnemu/engine.hpp"
#include "hnemu/layout.hpp"
#include "hnemu/netgen.hpp"
#include "hnemu/network.hpp"
#include "hnemu/oracle.hpp"

using namespace hnemu;

namespace {

// Returns a description of the first divergence, or empty if none.
std::string compare_state(const DenseReference& ref, const Engine& eng,
                          const ResolvedNetwork& net) {
    char buf[160];
    for (std::uint32_t i = 0; i < net.n_neurons(); ++i) {
        const SomaState &a = ref.soma(i), &b = eng.soma(i);
        if (a.V != b.V || a.m != b.m || a.h != b.h || a.n != b.n) {
            std::snprintf(buf, sizeof buf,
                          "neuron %u soma: ref V=%a got V=%a", i, a.V, b.V);
            return buf;
        }
        if (ref.post_trace(i) != eng.post_trace(i)) {
            std::snprintf(buf, sizeof buf, "neuron %u y: ref=%a got=%a", i,
                          ref.post_trace(i), eng.post_trace(i));
            return buf;
        }
        if (ref.netsum(i) != eng.netsum(i)) {
            std::snprintf(buf, sizeof buf, "neuron %u netsum: ref=%a got=%a",
                          i, ref.netsum(i), eng.netsum(i));
            return buf;
        }
    }
    for (std::uint32_t j = 0; j < net.n_synapses(); ++j) {
        const StpState &a = ref.stp(j), &b = eng.stp(j);
        if (a.u != b.u || a.x != b.x || a.s != b.s) {
            std::snprintf(buf, sizeof buf, "synapse %u stp: ref s=%a got s=%a",
                          j, a.s, b.s);
            return buf;
        }
        if (ref.pre_trace(j) != eng.pre_trace(j) ||
            ref.weight(j) != eng.weight(j)) {
            std::snprintf(buf, sizeof buf, "synapse %u w: ref=%a got=%a", j,
                          ref.weight(j), eng.weight(j));
            return buf;
        }
    }
    return "";
}

void run_lockstep(const ResolvedNetwork& net, std::uint32_t n_hn,
                  std::uint32_t p, unsigned workers, int steps,
                  const StimulusSchedule* stim = nullptr) {
    const MachineLayout layout = compile_layout(net, n_hn, p);
    DenseReference ref(net);
    Engine eng(net, layout, workers);
    if (stim) {
        ref.set_stimulus(*stim);
        eng.set_stimulus(*stim);
    }
    for (int t = 0; t < steps; ++t) {
        ref.step();
        eng.step();
        const std::string diff = compare_state(ref, eng, net);
        CAPTURE(n_hn, p, workers, t, diff);
        REQUIRE(diff.empty());
        REQUIRE(ref.spikes_at(t) == eng.spikes_at(t));
    }
}

} // namespace

TEST_CASE("engine equals the dense reference across machine shapes",
          "[equivalence]") {
    GenParams gp;
    gp.n_neurons = 60;
    gp.n_synapses = 600;
    gp.max_acdn = 6;
    gp.max_acds = 4;
    gp.seed = 11;
    const ResolvedNetwork net = resolve_network(generate_network(gp));

    struct Shape {
        std::uint32_t n_hn, p;
        unsigned workers;
    };
    for (const Shape s :
         {Shape{1, 1, 1}, Shape{1, 4, 1}, Shape{2, 2, 2}, Shape{4, 1, 4},
          Shape{4, 4, 3}, Shape{8, 2, 4}, Shape{60, 1, 4}}) {
        run_lockstep(net, s.n_hn, s.p, s.workers, 150);
    }
}

TEST_CASE("engine equals the dense reference across network draws",
          "[equivalence]") {
    for (std::uint64_t seed = 101; seed < 107; ++seed) {
        GenParams gp;
        gp.n_neurons = 30 + std::uint32_t(seed % 5) * 11;
        gp.n_synapses = gp.n_neurons * 8;
        gp.max_acdn = std::uint16_t(seed % 3 == 0 ? 0 : 9);
        gp.max_acds = std::uint8_t(seed % 2 ? 5 : 0);
        gp.seed = seed;
        const ResolvedNetwork net = resolve_network(generate_network(gp));
        run_lockstep(net, 3, 2, 2, 120);
    }
}

TEST_CASE("engine equals the dense reference under stimulus",
          "[equivalence]") {
    GenParams gp;
    gp.n_neurons = 24;
    gp.n_synapses = 140;
    gp.ibias_lo = 0.0f; // quiet unless poked
    gp.ibias_hi = 3.0f;
    gp.seed = 7;
    const ResolvedNetwork net = resolve_network(generate_network(gp));
    std::vector<StimulusEvent> ev;
    for (std::int64_t t = 5; t < 90; t += 7)
        for (std::uint32_t i = 0; i < gp.n_neurons; i += 5)
            ev.push_back({t, i, 9.0f + float(i % 3)});
    const StimulusSchedule stim(net, ev);
    run_lockstep(net, 4, 2, 2, 100, &stim);
}

TEST_CASE("extreme delays arrive identically in both implementations",
          "[equivalence]") {
    // One driver with the maximum source delay feeding two targets over
    // the slot-delay extremes.
    NetworkModel m;
    NeuronSetDecl drive;
    drive.id = 0;
    drive.ibias = 10.0f;
    m.neuron_sets.push_back(drive);
    NeuronSetDecl quiet;
    quiet.id = 1;
    m.neuron_sets.push_back(quiet);
    SynapseSetDecl ss;
    ss.mem.g_syn = 0.05f;
    m.synapse_sets.push_back(ss);
    m.neurons.push_back(NeuronDecl{0, 0, 256, -65.0f});
    m.neurons.push_back(NeuronDecl{1, 1, 0, -65.0f});
    m.neurons.push_back(NeuronDecl{2, 1, 0, -65.0f});
    m.synapses.push_back(SynapseDecl{0, 1, 0, 0, 0.8f});
    m.synapses.push_back(SynapseDecl{0, 2, 0, 24, 0.8f});
    const ResolvedNetwork net = resolve_network(m);
    run_lockstep(net, 3, 1, 2, 360);
    run_lockstep(net, 1, 2, 1, 360);
}

TEST_CASE("checkpoint round trip resumes bit-exactly", "[equivalence]") {
    GenParams gp;
    gp.n_neurons = 40;
    gp.n_synapses = 320;
    gp.max_acdn = 5;
    gp.max_acds = 3;
    gp.seed = 42;
    const ResolvedNetwork net = resolve_network(generate_network(gp));
    const MachineLayout layout = compile_layout(net, 4, 2);

    DenseReference ref(net);
    Engine a(net, layout, 2);
    for (int t = 0; t < 37; ++t) {
        ref.step();
        a.step();
    }
    const auto file =
        std::filesystem::temp_directory_path() / "hnemu_ckpt_test.bin";
    a.save_checkpoint(file);

    Engine b(net, layout, 1);
    b.load_checkpoint(file);
    REQUIRE(b.timestep() == 37);
    for (int t = 37; t < 110; ++t) {
        ref.step();
        a.step();
        b.step();
        const std::string diff_a = compare_state(ref, a, net);
        const std::string diff_b = compare_state(ref, b, net);
        CAPTURE(t, diff_a, diff_b);
        REQUIRE(diff_a.empty());
        REQUIRE(diff_b.empty());
        REQUIRE(a.spikes_at(t) == b.spikes_at(t));
    }
    std::filesystem::remove(file);
}

TEST_CASE("instability reports the same culprit and step in both",
          "[equivalence]") {
    NetworkModel m;
    m.neuron_sets.push_back(NeuronSetDecl{});
    NeuronSetDecl doomed;
    doomed.id = 1;
    doomed.ibias = 1e38f;
    doomed.channels.push_back(ChannelDecl{ChannelKind::leak, 0.0f, 0.0f});
    m.neuron_sets.push_back(doomed);
    for (std::uint32_t i = 0; i < 6; ++i)
        m.neurons.push_back(NeuronDecl{i, std::uint16_t(i == 4), 0, -65.0f});
    const ResolvedNetwork net = resolve_network(m);
    const MachineLayout layout = compile_layout(net, 3, 1);

    DenseReference ref(net);
    Engine eng(net, layout, 2);
    std::uint32_t ref_neuron = 0, eng_neuron = 1;
    std::int64_t ref_step = -1, eng_step = -2;
    try {
        ref.run(50);
        FAIL("reference never went unstable");
    } catch (const instability_error& e) {
        ref_neuron = e.neuron;
        ref_step = e.timestep;
    }
    try {
        eng.run(50);
        FAIL("engine never went unstable");
    } catch (const instability_error& e) {
        eng_neuron = e.neuron;
        eng_step = e.timestep;
    }
    CHECK(ref_neuron == 4);
    CHECK(eng_neuron == 4);
    CHECK(ref_step == eng_step);
    CHECK(ref.timestep() == eng.timestep());
}
