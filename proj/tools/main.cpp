// hnemu command line: compile networks to machine images, run them on
// the emulator or the dense reference, and compare the results.
//
// Exit codes: 0 success, 1 input/validation error or raster divergence,
// 2 usage error, 3 numerical instability during a run.

#include <cstdint>
#include <cstdio>
#include <exception>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "hnemu/engine.hpp"
#include "hnemu/layout.hpp"
#include "hnemu/netgen.hpp"
#include "hnemu/network.hpp"
#include "hnemu/oracle.hpp"
#include "hnemu/recordings.hpp"

using namespace hnemu;

namespace {

struct RunOutputs {
    std::string raster, trace, whist, save_state;
    std::vector<std::uint32_t> trace_neurons, trace_synapses;
    std::vector<std::uint32_t> substep_neurons;
};

// Shared between `run` (engine) and `oracle` (dense reference): drive
// `sim` for `steps`, stream the raster, sample traces, then write the
// weight histogram and final outputs.
template <typename Sim>
int drive(Sim& sim, const ResolvedNetwork& net, std::int64_t steps,
          const RunOutputs& out) {
    std::unique_ptr<RasterWriter> raster;
    if (!out.raster.empty())
        raster = std::make_unique<RasterWriter>(out.raster);
    std::unique_ptr<TraceWriter> trace;
    if (!out.trace.empty())
        trace = std::make_unique<TraceWriter>(out.trace);

    if (!out.substep_neurons.empty())
        sim.set_substep_trace(out.substep_neurons);

    const std::int64_t t0 = sim.timestep();
    for (std::int64_t k = 0; k < steps; ++k) {
        sim.step();
        const std::int64_t t = sim.timestep() - 1;
        if (raster)
            for (const std::uint32_t i : sim.spikes_at(t))
                raster->append(t, net.neurons[i].id);
        if (trace) {
            for (const std::uint32_t i : out.trace_neurons) {
                const SomaState& s = sim.soma(i);
                trace->row(t, "neuron " + std::to_string(net.neurons[i].id),
                           {{"v", s.V},
                            {"m", s.m},
                            {"h", s.h},
                            {"n", s.n},
                            {"y", sim.post_trace(i)},
                            {"netsum", sim.netsum(i)}});
            }
            for (const std::uint32_t j : out.trace_synapses) {
                const StpState& s = sim.stp(j);
                trace->row(t, "synapse " + std::to_string(j),
                           {{"u", s.u},
                            {"x", s.x},
                            {"s", s.s},
                            {"xj", sim.pre_trace(j)},
                            {"w", sim.weight(j)}});
            }
            for (std::uint32_t k2 = 0; k2 < out.substep_neurons.size();
                 ++k2) {
                std::vector<std::pair<std::string, float>> fields;
                const auto& v = sim.substep_voltages(k2);
                char name[8];
                for (int s = 0; s < kSubstepsPerTimestep; ++s) {
                    std::snprintf(name, sizeof name, "s%02d", s);
                    fields.emplace_back(name, v[std::size_t(s)]);
                }
                trace->row(
                    t,
                    "neuron " +
                        std::to_string(
                            net.neurons[out.substep_neurons[k2]].id) +
                        " substeps",
                    fields);
            }
        }
    }

    if (!out.whist.empty()) {
        WeightHistogram h;
        for (std::uint32_t j = 0; j < net.n_synapses(); ++j)
            h.add(sim.weight(j) /
                  net.ssets[net.synapses[j].attr_set].stdp.w_max);
        detail::AtomicFile f(out.whist);
        h.write(f.stream());
        f.commit();
    }

    std::uint64_t n_spikes = 0;
    if (raster) {
        n_spikes = raster->count();
        raster->close();
    }
    if (trace) trace->close();

    std::printf("ran %lld steps (t=%lld..%lld), %llu spikes\n",
                (long long)steps, (long long)t0,
                (long long)(sim.timestep() - 1),
                (unsigned long long)n_spikes);
    return 0;
}

// Dense index of a neuron id, with a friendly error.
std::uint32_t dense_of(const ResolvedNetwork& net, std::uint32_t id) {
    const auto it = net.index_of_id.find(id);
    if (it == net.index_of_id.end())
        throw validation_error("no neuron with id " + std::to_string(id));
    return it->second;
}

void check_synapse_index(const ResolvedNetwork& net, std::uint32_t j) {
    if (j >= net.n_synapses())
        throw validation_error("synapse index " + std::to_string(j) +
                               " out of range (network has " +
                               std::to_string(net.n_synapses()) + ")");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"neuron machine emulator"};
    app.require_subcommand(1);

    // ---- compile ----
    std::string c_net, c_out;
    std::uint32_t c_nodes = 1, c_lanes = 2;
    auto* compile = app.add_subcommand(
        "compile", "compile a network file into a machine image");
    compile->add_option("network", c_net, "network description file")
        ->required();
    compile->add_option("-o,--out", c_out, "image directory")->required();
    compile->add_option("--nodes", c_nodes, "hardware node count")
        ->required();
    compile->add_option("--lanes", c_lanes, "synapse lanes per node")
        ->required();

    // ---- run / oracle (shared output flags) ----
    std::string r_image, o_net, stim_file, load_state;
    std::int64_t steps = 0;
    unsigned workers = 0;
    RunOutputs out;
    std::vector<std::uint32_t> trace_neuron_ids, substep_ids;

    auto add_run_flags = [&](CLI::App* cmd, bool engine) {
        cmd->add_option("--steps", steps, "timesteps to run")->required();
        cmd->add_option("--stim", stim_file, "stimulus event file");
        cmd->add_option("--raster", out.raster, "write spike raster here");
        cmd->add_option("--trace", out.trace, "write state trace here");
        cmd->add_option("--trace-neuron", trace_neuron_ids,
                        "neuron id to trace each step (repeatable)");
        cmd->add_option("--trace-synapse", out.trace_synapses,
                        "synapse index to trace each step (repeatable)");
        cmd->add_option("--trace-substeps", substep_ids,
                        "neuron id to trace per substep (repeatable)");
        cmd->add_option("--whist", out.whist,
                        "write final weight histogram here");
        if (engine) {
            cmd->add_option("--workers", workers,
                            "worker threads (0 = one per hardware thread, "
                            "capped at the node count)");
            cmd->add_option("--save-state", out.save_state,
                            "write a checkpoint after the last step");
            cmd->add_option("--load-state", load_state,
                            "resume from a checkpoint before stepping");
        }
    };

    auto* run = app.add_subcommand("run", "run a compiled image");
    run->add_option("image", r_image, "machine image directory")->required();
    add_run_flags(run, true);

    auto* oracle = app.add_subcommand(
        "oracle", "run the dense reference over a network file");
    oracle->add_option("network", o_net, "network description file")
        ->required();
    add_run_flags(oracle, false);

    // ---- diff ----
    std::string d_a, d_b;
    auto* diff =
        app.add_subcommand("diff", "compare two spike raster files");
    diff->add_option("a", d_a, "first raster")->required();
    diff->add_option("b", d_b, "second raster")->required();

    // ---- perf ----
    std::string p_image;
    std::uint64_t p_neurons = 0, p_synapses = 0;
    std::uint32_t p_nodes = 0, p_lanes = 0;
    double p_clock = kDefaultClockHz;
    auto* perf = app.add_subcommand(
        "perf", "seconds of wall time per second of model time");
    perf->add_option("image", p_image,
                     "machine image directory (omit to use --neurons)");
    perf->add_option("--neurons", p_neurons, "neuron count");
    perf->add_option("--synapses", p_synapses, "synapse count");
    perf->add_option("--nodes", p_nodes, "hardware node count");
    perf->add_option("--lanes", p_lanes, "synapse lanes per node");
    perf->add_option("--clock", p_clock, "node clock in Hz");

    // ---- inspect ----
    std::string i_image;
    auto* inspect =
        app.add_subcommand("inspect", "describe a compiled image");
    inspect->add_option("image", i_image, "machine image directory")
        ->required();

    // ---- gen ----
    GenParams gp;
    std::string g_out;
    auto* gen = app.add_subcommand(
        "gen", "generate a random network deterministically from a seed");
    gen->add_option("-o,--out", g_out, "output network file")->required();
    gen->add_option("--neurons", gp.n_neurons, "neuron count");
    gen->add_option("--synapses", gp.n_synapses, "synapse count");
    gen->add_option("--seed", gp.seed, "generator seed");
    gen->add_option("--nsets", gp.n_neuron_sets, "neuron attribute sets");
    gen->add_option("--ssets", gp.n_synapse_sets, "synapse attribute sets");
    gen->add_option("--max-acdn", gp.max_acdn,
                    "max source-side delay, timesteps");
    gen->add_option("--max-acds", gp.max_acds,
                    "max slot-side delay, timesteps");
    gen->add_option("--ibias-lo", gp.ibias_lo, "bias current range low");
    gen->add_option("--ibias-hi", gp.ibias_hi, "bias current range high");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*compile) {
            const NetworkModel model = load_network(c_net);
            CompiledImage img;
            img.net = resolve_network(model);
            img.layout = compile_layout(img.net, c_nodes, c_lanes);
            save_image(img, c_out);
            std::printf(
                "%u neurons, %u synapses -> %u nodes x %u lanes, "
                "%u rows deep, %llu slots (%.4g s per model second)\n",
                img.net.n_neurons(), img.net.n_synapses(), img.layout.n_hn,
                img.layout.p, img.layout.max_rows(),
                (unsigned long long)img.layout.total_slots(),
                perf_of_layout(img.layout));
            return 0;
        }

        if (*run || *oracle) {
            if (*run) {
                const CompiledImage img = load_image(r_image);
                for (const std::uint32_t id : trace_neuron_ids)
                    out.trace_neurons.push_back(dense_of(img.net, id));
                for (const std::uint32_t id : substep_ids)
                    out.substep_neurons.push_back(dense_of(img.net, id));
                for (const std::uint32_t j : out.trace_synapses)
                    check_synapse_index(img.net, j);
                Engine eng(img.net, img.layout, workers);
                if (!stim_file.empty())
                    eng.set_stimulus(StimulusSchedule(
                        img.net, load_stimulus(stim_file)));
                if (!load_state.empty()) eng.load_checkpoint(load_state);
                const int rc = drive(eng, img.net, steps, out);
                if (!out.save_state.empty())
                    eng.save_checkpoint(out.save_state);
                return rc;
            }
            const ResolvedNetwork net = resolve_network(load_network(o_net));
            for (const std::uint32_t id : trace_neuron_ids)
                out.trace_neurons.push_back(dense_of(net, id));
            for (const std::uint32_t id : substep_ids)
                out.substep_neurons.push_back(dense_of(net, id));
            for (const std::uint32_t j : out.trace_synapses)
                check_synapse_index(net, j);
            DenseReference ref(net);
            if (!stim_file.empty())
                ref.set_stimulus(
                    StimulusSchedule(net, load_stimulus(stim_file)));
            return drive(ref, net, steps, out);
        }

        if (*diff) {
            const auto a = load_raster(d_a);
            const auto b = load_raster(d_b);
            const std::string d = diff_rasters(a, b);
            if (d.empty()) {
                std::printf("identical: %zu spikes\n", a.size());
                return 0;
            }
            std::printf("rasters differ at %s\n", d.c_str());
            return 1;
        }

        if (*perf) {
            double seconds = 0.0;
            if (!p_image.empty()) {
                const CompiledImage img = load_image(p_image);
                seconds = perf_of_layout(img.layout, p_clock);
            } else {
                if (p_nodes == 0 || p_lanes == 0)
                    throw validation_error(
                        "perf needs an image or --neurons/--synapses/"
                        "--nodes/--lanes");
                seconds =
                    perf_estimate(p_neurons, p_synapses, p_nodes, p_lanes,
                                  p_clock);
            }
            std::printf("%.10g s per model second\n", seconds);
            return 0;
        }

        if (*inspect) {
            const CompiledImage img = load_image(i_image);
            std::printf("name: %s\n", img.net.name.empty()
                                          ? "(unnamed)"
                                          : img.net.name.c_str());
            std::printf("neurons: %u\nsynapses: %u\n", img.net.n_neurons(),
                        img.net.n_synapses());
            std::printf("nodes: %u, lanes: %u\n", img.layout.n_hn,
                        img.layout.p);
            std::uint64_t nulls = 0;
            for (const HnLayout& h : img.layout.hns)
                for (const SynapseSlot& s : h.slots)
                    if (s.is_null()) ++nulls;
            std::printf("slots: %llu (%llu padding)\n",
                        (unsigned long long)img.layout.total_slots(),
                        (unsigned long long)nulls);
            for (std::uint32_t h = 0; h < img.layout.n_hn; ++h)
                std::printf("  node %u: neurons [%u, %u), %u rows\n", h,
                            img.layout.hns[h].first_neuron,
                            img.layout.hns[h].first_neuron +
                                img.layout.hns[h].n_neurons,
                            img.layout.hns[h].n_rows);
            std::printf("%.10g s per model second\n",
                        perf_of_layout(img.layout));
            return 0;
        }

        if (*gen) {
            const NetworkModel m = generate_network(gp);
            const ResolvedNetwork net = resolve_network(m); // validate
            detail::AtomicFile f(g_out);
            serialize_network(m, f.stream());
            f.commit();
            std::printf("wrote %u neurons, %u synapses to %s\n",
                        net.n_neurons(), net.n_synapses(), g_out.c_str());
            return 0;
        }
    } catch (const instability_error& e) {
        std::fprintf(stderr,
                     "instability: neuron %u went non-finite at step %lld\n",
                     e.neuron, (long long)e.timestep);
        return 3;
    } catch (const parse_error& e) {
        std::fprintf(stderr, "parse error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 2;
}
