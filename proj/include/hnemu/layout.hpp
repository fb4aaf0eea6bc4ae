#pragma once

// Compilation of a resolved network onto the multi-node machine: contiguous
// neuron partition, per-node memory lanes of synapse slots, the analytic
// throughput model, and the on-disk compiled image.
//
// Placement contract, relied on by the engine and checked by the tests:
// node h owns the dense neuron range [h*ceil(N/n_hn), ...); within a node,
// neurons occupy rows in ascending order, each neuron i taking
// ceil(deg(i)/p) rows; its incoming synapse with per-neuron position j
// (declaration order) lands in lane j mod p, row begin(i) + j/p. Unused
// trailing slots of a neuron's last row carry the null id.

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "hnemu/common.hpp"
#include "hnemu/network.hpp"

namespace hnemu {

struct SynapseSlot {
    std::uint32_t pre_id = kNullNeuronId; // null id marks an empty slot
    std::uint32_t pre = 0;       // dense pre index; meaningless when null
    std::uint32_t syn_index = 0; // declaration-order index; ditto
    std::uint16_t attr_set = 0;
    std::uint8_t acds = 0;
    float w_init = 0.0f;

    bool is_null() const { return pre_id == kNullNeuronId; }
};

struct HnLayout {
    std::uint32_t first_neuron = 0; // dense index of first owned neuron
    std::uint32_t n_neurons = 0;
    std::uint32_t n_rows = 0; // length of every lane in this node
    // row -> owning neuron, as a node-local index.
    std::vector<std::uint32_t> row_neuron;
    // node-local neuron -> first row; size n_neurons + 1.
    std::vector<std::uint32_t> neuron_row_begin;
    // Row-major: slot(lane l, row r) = slots[r * p + l].
    std::vector<SynapseSlot> slots;
};

struct MachineLayout {
    std::uint32_t n_hn = 0;
    std::uint32_t p = 0; // lanes (synapse slots processed per cycle) per node
    std::uint32_t n_neurons = 0;
    std::vector<HnLayout> hns;

    std::uint64_t total_slots() const {
        std::uint64_t s = 0;
        for (const HnLayout& h : hns) s += h.slots.size();
        return s;
    }
    std::uint32_t max_rows() const {
        std::uint32_t r = 0;
        for (const HnLayout& h : hns) r = std::max(r, h.n_rows);
        return r;
    }
    std::uint32_t max_neurons_per_hn() const {
        std::uint32_t n = 0;
        for (const HnLayout& h : hns) n = std::max(n, h.n_neurons);
        return n;
    }
};

// Contiguous ceiling partition: node h owns dense indices
// [h*q, min(N, (h+1)*q)) with q = ceil(N/n_hn). Every node must own at
// least one neuron.
inline std::vector<std::uint32_t> partition_sizes(std::uint32_t n_neurons,
                                                  std::uint32_t n_hn) {
    if (n_hn == 0) throw compile_error("node count must be positive");
    if (n_hn > n_neurons)
        throw compile_error("more nodes (" + std::to_string(n_hn) +
                            ") than neurons (" + std::to_string(n_neurons) +
                            ")");
    const std::uint64_t q = (std::uint64_t(n_neurons) + n_hn - 1) / n_hn;
    std::vector<std::uint32_t> sizes(n_hn);
    for (std::uint32_t h = 0; h < n_hn; ++h) {
        const std::uint64_t lo = std::min<std::uint64_t>(h * q, n_neurons);
        const std::uint64_t hi =
            std::min<std::uint64_t>((h + 1) * q, n_neurons);
        sizes[h] = std::uint32_t(hi - lo);
        if (sizes[h] == 0)
            throw compile_error("partition leaves node " + std::to_string(h) +
                                " empty");
    }
    return sizes;
}

inline MachineLayout compile_layout(const ResolvedNetwork& net,
                                    std::uint32_t n_hn, std::uint32_t p) {
    if (p == 0) throw compile_error("lane count must be positive");
    const auto sizes = partition_sizes(net.n_neurons(), n_hn);

    MachineLayout ml;
    ml.n_hn = n_hn;
    ml.p = p;
    ml.n_neurons = net.n_neurons();
    ml.hns.resize(n_hn);

    std::uint32_t next = 0;
    for (std::uint32_t h = 0; h < n_hn; ++h) {
        HnLayout& hn = ml.hns[h];
        hn.first_neuron = next;
        hn.n_neurons = sizes[h];
        next += sizes[h];

        hn.neuron_row_begin.resize(hn.n_neurons + 1);
        std::uint32_t row = 0;
        for (std::uint32_t l = 0; l < hn.n_neurons; ++l) {
            hn.neuron_row_begin[l] = row;
            const std::uint32_t deg =
                std::uint32_t(net.incoming[hn.first_neuron + l].size());
            row += (deg + p - 1) / p;
        }
        hn.neuron_row_begin[hn.n_neurons] = row;
        hn.n_rows = row;

        hn.row_neuron.resize(hn.n_rows);
        hn.slots.assign(std::size_t(hn.n_rows) * p, SynapseSlot{});
        for (std::uint32_t l = 0; l < hn.n_neurons; ++l) {
            const std::uint32_t begin = hn.neuron_row_begin[l];
            for (std::uint32_t r = begin; r < hn.neuron_row_begin[l + 1]; ++r)
                hn.row_neuron[r] = l;
            const auto& in = net.incoming[hn.first_neuron + l];
            for (std::uint32_t j = 0; j < in.size(); ++j) {
                const ResolvedSynapse& s = net.synapses[in[j]];
                SynapseSlot& slot =
                    hn.slots[std::size_t(begin + j / p) * p + (j % p)];
                slot.pre_id = net.neurons[s.pre].id;
                slot.pre = s.pre;
                slot.syn_index = in[j];
                slot.attr_set = s.attr_set;
                slot.acds = s.acds;
                slot.w_init = s.w_init;
            }
        }
    }
    return ml;
}

// ---------------------------------------------------------- cost model ----

inline constexpr double kDefaultClockHz = 3.0e8;

// Cycles one node spends per 1 ms timestep: the membrane pipeline makes 25
// substep passes over its neurons while the synapse pipeline walks its
// lane rows; they overlap, so the longer one sets the cost.
inline std::uint64_t hn_cycles_per_timestep(std::uint64_t neurons,
                                            std::uint64_t rows) {
    return std::max(std::uint64_t(kSubstepsPerTimestep) * neurons, rows);
}

// Wall seconds per simulated second, from network totals under a balanced
// placement (rows approximated as ceil(S / (n_hn * p))).
inline double perf_estimate(std::uint64_t n_neurons, std::uint64_t n_synapses,
                            std::uint32_t n_hn, std::uint32_t p,
                            double clock_hz = kDefaultClockHz) {
    if (n_hn == 0 || p == 0 || clock_hz <= 0.0)
        throw compile_error("perf model needs positive n_hn, p, clock");
    const std::uint64_t neurons_per_hn = (n_neurons + n_hn - 1) / n_hn;
    const std::uint64_t rows_per_lane =
        (n_synapses + std::uint64_t(n_hn) * p - 1) / (std::uint64_t(n_hn) * p);
    const std::uint64_t cycles =
        hn_cycles_per_timestep(neurons_per_hn, rows_per_lane);
    const double timesteps_per_model_second = 1000.0;
    return double(cycles) * timesteps_per_model_second / clock_hz;
}

// Same figure for an actual placement: the slowest node sets the pace.
inline double perf_of_layout(const MachineLayout& ml,
                             double clock_hz = kDefaultClockHz) {
    std::uint64_t worst = 0;
    for (const HnLayout& h : ml.hns)
        worst = std::max(worst, hn_cycles_per_timestep(h.n_neurons, h.n_rows));
    return double(worst) * 1000.0 / clock_hz;
}

// -------------------------------------------------------- compiled image ----

inline constexpr std::string_view kImageFormatTag = "nmimg-1";

namespace detail {

struct BinWriter {
    explicit BinWriter(const std::string& path)
        : out(path, std::ios::binary) {
        if (!out) throw io_error("cannot create " + path);
        this->path = path;
    }
    void u8(std::uint8_t v) { out.put(char(v)); }
    void u16(std::uint16_t v) {
        const char b[2] = {char(v & 0xff), char(v >> 8)};
        out.write(b, 2);
    }
    void u32(std::uint32_t v) {
        char b[4];
        for (int i = 0; i < 4; ++i) b[i] = char((v >> (8 * i)) & 0xff);
        out.write(b, 4);
    }
    void u64(std::uint64_t v) {
        char b[8];
        for (int i = 0; i < 8; ++i) b[i] = char((v >> (8 * i)) & 0xff);
        out.write(b, 8);
    }
    void f32(float v) {
        std::uint32_t u;
        std::memcpy(&u, &v, 4);
        u32(u);
    }
    void close() {
        out.flush();
        if (!out) throw io_error("short write to " + path);
        out.close();
    }
    std::ofstream out;
    std::string path;
};

struct BinReader {
    explicit BinReader(const std::string& path)
        : in(path, std::ios::binary) {
        if (!in) throw io_error("cannot open " + path);
        this->path = path;
    }
    std::uint8_t u8() {
        const int c = in.get();
        if (c < 0) fail();
        return std::uint8_t(c);
    }
    std::uint16_t u16() {
        const std::uint16_t lo = u8();
        return std::uint16_t(lo | (u8() << 8));
    }
    std::uint32_t u32() {
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= std::uint32_t(u8()) << (8 * i);
        return v;
    }
    std::uint64_t u64() {
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= std::uint64_t(u8()) << (8 * i);
        return v;
    }
    float f32() {
        const std::uint32_t u = u32();
        float v;
        std::memcpy(&v, &u, 4);
        return v;
    }
    void expect_eof() {
        in.peek();
        if (!in.eof()) throw io_error("trailing bytes in " + path);
    }
    [[noreturn]] void fail() { throw io_error("truncated file " + path); }
    std::ifstream in;
    std::string path;
};

} // namespace detail

// A compiled image bundles everything a run needs: the resolved network
// tables plus the per-node lane layout. Layout of the directory:
//   manifest.txt  text, written last (its presence marks completeness)
//   tables.bin    attribute tables
//   neurons.bin   resolved neurons
//   hn<k>.bin     one per node: rows and slots
struct CompiledImage {
    ResolvedNetwork net;
    MachineLayout layout;
};

inline void save_image(const CompiledImage& img, const std::string& dir) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw io_error("cannot create directory " + dir);

    {
        detail::BinWriter w(dir + "/tables.bin");
        w.u32(std::uint32_t(img.net.nsets.size()));
        for (const NeuronAttrs& a : img.net.nsets) {
            w.f32(a.C_m);
            w.f32(a.I_bias);
            w.f32(a.tau_minus);
            w.f32(a.a_minus);
            w.u32(std::uint32_t(a.channels.size()));
            for (const IonChannelSpec& c : a.channels) {
                w.f32(c.g_bar);
                w.f32(c.V_eq);
                w.u32(std::uint32_t(c.p));
                w.u32(std::uint32_t(c.q));
                w.u8(std::uint8_t(c.act));
                w.u8(std::uint8_t(c.inact));
            }
        }
        w.u32(std::uint32_t(img.net.ssets.size()));
        for (const SynapseAttrSet& s : img.net.ssets) {
            w.f32(s.stp.U);
            w.f32(s.stp.A);
            w.f32(s.stp.tau_f);
            w.f32(s.stp.tau_d);
            w.f32(s.stp.tau_s);
            w.f32(s.stdp.tau_plus);
            w.f32(s.stdp.a_plus);
            w.f32(s.stdp.eta_plus);
            w.f32(s.stdp.eta_minus);
            w.f32(s.stdp.w_max);
            w.f32(s.mem.g_syn);
            w.f32(s.mem.E_syn);
        }
        w.close();
    }
    {
        detail::BinWriter w(dir + "/neurons.bin");
        w.u32(img.net.n_neurons());
        for (const ResolvedNeuron& n : img.net.neurons) {
            w.u32(n.id);
            w.u16(n.attr_set);
            w.u16(n.acdn);
            w.f32(n.v_init);
        }
        // Synapses in declaration order, endpoints as dense indices.
        w.u32(img.net.n_synapses());
        for (const ResolvedSynapse& s : img.net.synapses) {
            w.u32(s.pre);
            w.u32(s.post);
            w.u16(s.attr_set);
            w.u8(s.acds);
            w.u8(0);
            w.f32(s.w_init);
        }
        w.close();
    }
    for (std::uint32_t h = 0; h < img.layout.n_hn; ++h) {
        const HnLayout& hn = img.layout.hns[h];
        detail::BinWriter w(dir + "/hn" + std::to_string(h) + ".bin");
        w.u32(hn.first_neuron);
        w.u32(hn.n_neurons);
        w.u32(hn.n_rows);
        for (std::uint32_t r : hn.row_neuron) w.u32(r);
        for (const SynapseSlot& s : hn.slots) {
            w.u32(s.pre_id);
            w.u32(s.pre);
            w.u32(s.syn_index);
            w.u16(s.attr_set);
            w.u8(s.acds);
            w.u8(0);
            w.f32(s.w_init);
        }
        w.close();
    }
    {
        std::ofstream m(dir + "/manifest.txt");
        if (!m) throw io_error("cannot create manifest in " + dir);
        m << "format=" << kImageFormatTag << "\n"
          << "name=" << img.net.name << "\n"
          << "n_hn=" << img.layout.n_hn << "\n"
          << "p=" << img.layout.p << "\n"
          << "n_neurons=" << img.net.n_neurons() << "\n"
          << "n_synapses=" << img.net.n_synapses() << "\n";
        m.flush();
        if (!m) throw io_error("short write to manifest in " + dir);
    }
}

inline CompiledImage load_image(const std::string& dir) {
    std::uint32_t n_hn = 0, p = 0, n_neurons = 0, n_synapses = 0;
    std::string name;
    {
        std::ifstream m(dir + "/manifest.txt");
        if (!m)
            throw io_error("no manifest in " + dir +
                           " (missing or incomplete image)");
        std::string line;
        bool tagged = false;
        int lineno = 0;
        while (std::getline(m, line)) {
            ++lineno;
            const auto eq = line.find('=');
            if (eq == std::string::npos)
                throw parse_error(lineno, "manifest expects key=value");
            const std::string key = line.substr(0, eq);
            const std::string val = line.substr(eq + 1);
            if (key == "format") {
                if (val != kImageFormatTag)
                    throw io_error("unsupported image format '" + val + "'");
                tagged = true;
            } else if (key == "name") {
                name = val;
            } else if (key == "n_hn") {
                n_hn = std::uint32_t(std::stoul(val));
            } else if (key == "p") {
                p = std::uint32_t(std::stoul(val));
            } else if (key == "n_neurons") {
                n_neurons = std::uint32_t(std::stoul(val));
            } else if (key == "n_synapses") {
                n_synapses = std::uint32_t(std::stoul(val));
            } else {
                throw io_error("unknown manifest key '" + key + "'");
            }
        }
        if (!tagged) throw io_error("manifest lacks format tag");
        if (n_hn == 0 || p == 0)
            throw io_error("manifest lacks machine shape");
    }

    CompiledImage img;
    img.net.name = name;
    {
        detail::BinReader r(dir + "/tables.bin");
        img.net.nsets.resize(r.u32());
        for (NeuronAttrs& a : img.net.nsets) {
            a.C_m = r.f32();
            a.I_bias = r.f32();
            a.tau_minus = r.f32();
            a.a_minus = r.f32();
            a.channels.resize(r.u32());
            for (IonChannelSpec& c : a.channels) {
                c.g_bar = r.f32();
                c.V_eq = r.f32();
                c.p = std::int32_t(r.u32());
                c.q = std::int32_t(r.u32());
                c.act = GateVar(r.u8());
                c.inact = GateVar(r.u8());
            }
        }
        img.net.ssets.resize(r.u32());
        for (SynapseAttrSet& s : img.net.ssets) {
            s.stp.U = r.f32();
            s.stp.A = r.f32();
            s.stp.tau_f = r.f32();
            s.stp.tau_d = r.f32();
            s.stp.tau_s = r.f32();
            s.stdp.tau_plus = r.f32();
            s.stdp.a_plus = r.f32();
            s.stdp.eta_plus = r.f32();
            s.stdp.eta_minus = r.f32();
            s.stdp.w_max = r.f32();
            s.mem.g_syn = r.f32();
            s.mem.E_syn = r.f32();
        }
        r.expect_eof();
    }
    {
        detail::BinReader r(dir + "/neurons.bin");
        img.net.neurons.resize(r.u32());
        if (img.net.neurons.size() != n_neurons)
            throw io_error("neuron count disagrees with manifest");
        for (ResolvedNeuron& n : img.net.neurons) {
            n.id = r.u32();
            n.attr_set = r.u16();
            n.acdn = r.u16();
            n.v_init = r.f32();
        }
        img.net.synapses.resize(r.u32());
        if (img.net.synapses.size() != n_synapses)
            throw io_error("synapse count disagrees with manifest");
        img.net.incoming.assign(img.net.neurons.size(), {});
        std::uint32_t idx = 0;
        for (ResolvedSynapse& s : img.net.synapses) {
            s.pre = r.u32();
            s.post = r.u32();
            s.attr_set = r.u16();
            s.acds = r.u8();
            r.u8();
            s.w_init = r.f32();
            if (s.pre >= n_neurons || s.post >= n_neurons)
                throw io_error("synapse endpoint out of range");
            img.net.incoming[s.post].push_back(idx++);
        }
        r.expect_eof();
        img.net.index_of_id.reserve(img.net.neurons.size());
        for (std::uint32_t i = 0; i < img.net.neurons.size(); ++i)
            img.net.index_of_id.emplace(img.net.neurons[i].id, i);
    }
    img.layout.n_hn = n_hn;
    img.layout.p = p;
    img.layout.n_neurons = n_neurons;
    img.layout.hns.resize(n_hn);
    for (std::uint32_t h = 0; h < n_hn; ++h) {
        HnLayout& hn = img.layout.hns[h];
        detail::BinReader r(dir + "/hn" + std::to_string(h) + ".bin");
        hn.first_neuron = r.u32();
        hn.n_neurons = r.u32();
        hn.n_rows = r.u32();
        hn.row_neuron.resize(hn.n_rows);
        for (std::uint32_t& x : hn.row_neuron) {
            x = r.u32();
            if (x >= hn.n_neurons) throw io_error("row maps beyond node");
        }
        hn.slots.resize(std::size_t(hn.n_rows) * p);
        for (SynapseSlot& s : hn.slots) {
            s.pre_id = r.u32();
            s.pre = r.u32();
            s.syn_index = r.u32();
            s.attr_set = r.u16();
            s.acds = r.u8();
            r.u8();
            s.w_init = r.f32();
        }
        r.expect_eof();
        hn.neuron_row_begin.assign(hn.n_neurons + 1, 0);
        for (std::uint32_t row = 0; row < hn.n_rows; ++row)
            hn.neuron_row_begin[hn.row_neuron[row] + 1] = row + 1;
        for (std::uint32_t l = 1; l <= hn.n_neurons; ++l)
            hn.neuron_row_begin[l] =
                std::max(hn.neuron_row_begin[l], hn.neuron_row_begin[l - 1]);
    }
    return img;
}

} // namespace hnemu
