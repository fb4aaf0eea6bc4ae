#pragma once

// Network description model: parse, serialize, validate, resolve.
//
// The on-disk form is a line-oriented sectioned text format (documented in
// docs/formats.md). Synapse declaration order is semantically meaningful:
// it fixes the per-neuron slot order used by both simulators for current
// accumulation, and the compiler's lane assignment.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "hnemu/common.hpp"
#include "hnemu/kernels.hpp"

namespace hnemu {

inline constexpr std::string_view kNetworkFormatTag = "hnnet-1";

// --------------------------------------------------------------- model ----

enum class ChannelKind : std::uint8_t { na, k, leak };

struct ChannelDecl {
    ChannelKind kind = ChannelKind::leak;
    float g = 0.0f;
    float E = 0.0f;
};

struct NeuronSetDecl {
    std::uint16_t id = 0;
    float cm = 1.0f;
    float ibias = 0.0f;
    float tau_minus = 20.0f;
    float a_minus = 1.0f;
    std::vector<ChannelDecl> channels; // empty means the classic trio
};

struct SynapseSetDecl {
    std::uint16_t id = 0;
    StpAttrs stp;
    StdpAttrs stdp;
    SynapseMembraneAttrs mem;
};

struct NeuronDecl {
    std::uint32_t id = 0;
    std::uint16_t attr_set = 0;
    std::uint16_t acdn = 0; // source-side delay, timesteps
    float v_init = -65.0f;
};

struct SynapseDecl {
    std::uint32_t pre = 0;
    std::uint32_t post = 0;
    std::uint16_t attr_set = 0;
    std::uint8_t acds = 0; // slot-side delay, timesteps
    float w_init = 0.0f;
};

struct NetworkModel {
    std::string name;
    std::vector<NeuronSetDecl> neuron_sets;
    std::vector<SynapseSetDecl> synapse_sets;
    std::vector<NeuronDecl> neurons;
    std::vector<SynapseDecl> synapses;
};

inline IonChannelSpec to_channel_spec(const ChannelDecl& c) {
    switch (c.kind) {
        case ChannelKind::na:
            return {c.g, c.E, 3, 1, GateVar::m, GateVar::h};
        case ChannelKind::k:
            return {c.g, c.E, 4, 0, GateVar::n, GateVar::none};
        default:
            return {c.g, c.E, 0, 0, GateVar::none, GateVar::none};
    }
}

inline NeuronAttrs to_neuron_attrs(const NeuronSetDecl& d) {
    NeuronAttrs a;
    a.C_m = d.cm;
    a.I_bias = d.ibias;
    a.tau_minus = d.tau_minus;
    a.a_minus = d.a_minus;
    if (d.channels.empty()) {
        a.channels = classic_channels();
    } else {
        for (const ChannelDecl& c : d.channels)
            a.channels.push_back(to_channel_spec(c));
    }
    return a;
}

struct SynapseAttrSet {
    StpAttrs stp;
    StdpAttrs stdp;
    SynapseMembraneAttrs mem;
};

// -------------------------------------------------------------- parsing ----

namespace detail {

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' ||
                          s.front() == '\r'))
        s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' ||
                          s.back() == '\r'))
        s.remove_suffix(1);
    return s;
}

inline std::vector<std::string_view> split_tokens(std::string_view s) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < s.size()) {
        while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
        std::size_t j = i;
        while (j < s.size() && s[j] != ' ' && s[j] != '\t') ++j;
        if (j > i) out.push_back(s.substr(i, j - i));
        i = j;
    }
    return out;
}

inline std::vector<std::string_view> split_on(std::string_view s, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= s.size(); ++i) {
        if (i == s.size() || s[i] == sep) {
            out.push_back(s.substr(start, i - start));
            start = i + 1;
        }
    }
    return out;
}

inline std::uint64_t parse_uint(std::string_view tok, std::uint64_t max_value,
                                const char* what, int line) {
    std::uint64_t v = 0;
    const auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc{} || p != tok.data() + tok.size())
        throw parse_error(line, std::string("bad ") + what + " '" +
                                    std::string(tok) + "'");
    if (v > max_value)
        throw parse_error(line, std::string(what) + " " + std::to_string(v) +
                                    " exceeds limit " +
                                    std::to_string(max_value));
    return v;
}

inline std::int64_t parse_int(std::string_view tok, std::int64_t min_value,
                              std::int64_t max_value, const char* what,
                              int line) {
    std::int64_t v = 0;
    const auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc{} || p != tok.data() + tok.size())
        throw parse_error(line, std::string("bad ") + what + " '" +
                                    std::string(tok) + "'");
    if (v < min_value || v > max_value)
        throw parse_error(line, std::string(what) + " " + std::to_string(v) +
                                    " out of range");
    return v;
}

inline float parse_float(std::string_view tok, const char* what, int line) {
    float v = 0.0f;
    const auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v,
                                         std::chars_format::general);
    if (ec != std::errc{} || p != tok.data() + tok.size())
        throw parse_error(line, std::string("bad ") + what + " '" +
                                    std::string(tok) + "'");
    if (!std::isfinite(v))
        throw parse_error(line, std::string(what) + " must be finite");
    return v;
}

// key=value fields of one record; every key must be consumed exactly once.
class FieldMap {
  public:
    FieldMap(const std::vector<std::string_view>& toks, std::size_t first,
             int line)
        : line_(line) {
        for (std::size_t i = first; i < toks.size(); ++i) {
            const auto eq = toks[i].find('=');
            if (eq == std::string_view::npos || eq == 0)
                throw parse_error(line, "expected key=value, got '" +
                                            std::string(toks[i]) + "'");
            const auto key = toks[i].substr(0, eq);
            if (!fields_.emplace(std::string(key), toks[i].substr(eq + 1))
                     .second)
                throw parse_error(line, "duplicate key '" + std::string(key) +
                                            "'");
        }
    }

    bool has(const std::string& key) {
        const auto it = fields_.find(key);
        if (it == fields_.end()) return false;
        return true;
    }

    std::string_view take(const std::string& key) {
        const auto it = fields_.find(key);
        if (it == fields_.end())
            throw parse_error(line_, "missing required key '" + key + "'");
        const std::string_view v = it->second;
        fields_.erase(it);
        return v;
    }

    bool take_opt(const std::string& key, std::string_view& out) {
        const auto it = fields_.find(key);
        if (it == fields_.end()) return false;
        out = it->second;
        fields_.erase(it);
        return true;
    }

    void finish() const {
        if (!fields_.empty())
            throw parse_error(line_, "unknown key '" + fields_.begin()->first +
                                         "'");
    }

  private:
    int line_;
    std::unordered_map<std::string, std::string_view> fields_;
};

inline std::vector<ChannelDecl> parse_channels(std::string_view v, int line) {
    std::vector<ChannelDecl> out;
    for (std::string_view item : split_on(v, ',')) {
        const auto parts = split_on(item, ':');
        if (parts.size() != 3)
            throw parse_error(line, "channel entry must be kind:g:E, got '" +
                                        std::string(item) + "'");
        ChannelDecl c;
        if (parts[0] == "na") c.kind = ChannelKind::na;
        else if (parts[0] == "k") c.kind = ChannelKind::k;
        else if (parts[0] == "leak") c.kind = ChannelKind::leak;
        else
            throw parse_error(line, "unknown channel kind '" +
                                        std::string(parts[0]) + "'");
        c.g = parse_float(parts[1], "channel conductance", line);
        c.E = parse_float(parts[2], "channel reversal", line);
        out.push_back(c);
    }
    return out;
}

} // namespace detail

inline NetworkModel parse_network(std::istream& in) {
    using namespace detail;
    NetworkModel model;
    std::string section;
    bool saw_format = false;
    std::unordered_set<std::string> seen_sections;
    std::string raw;
    int line = 0;
    while (std::getline(in, raw)) {
        ++line;
        std::string_view sv = raw;
        if (const auto hash = sv.find('#'); hash != std::string_view::npos)
            sv = sv.substr(0, hash);
        sv = trim(sv);
        if (sv.empty()) continue;

        if (sv.front() == '[') {
            if (sv.back() != ']')
                throw parse_error(line, "unterminated section header");
            section = std::string(sv.substr(1, sv.size() - 2));
            static const char* known[] = {"header", "neuron_attr_sets",
                                          "synapse_attr_sets", "neurons",
                                          "synapses"};
            if (std::find_if(std::begin(known), std::end(known),
                             [&](const char* k) { return section == k; }) ==
                std::end(known))
                throw parse_error(line, "unknown section [" + section + "]");
            if (!seen_sections.insert(section).second)
                throw parse_error(line, "section [" + section +
                                            "] appears twice");
            continue;
        }
        if (section.empty())
            throw parse_error(line, "content before any section header");

        const auto toks = split_tokens(sv);

        if (section == "header") {
            FieldMap f(toks, 0, line);
            std::string_view v;
            if (f.take_opt("format", v)) {
                if (v != kNetworkFormatTag)
                    throw parse_error(line, "unsupported format '" +
                                                std::string(v) + "'");
                saw_format = true;
            }
            if (f.take_opt("name", v)) model.name = std::string(v);
            f.finish();
            continue;
        }

        if (section == "neuron_attr_sets") {
            if (toks[0] != "nset")
                throw parse_error(line, "expected nset record");
            FieldMap f(toks, 1, line);
            NeuronSetDecl d;
            d.id = std::uint16_t(parse_uint(f.take("id"), kAttrTableSize - 1,
                                            "attr set id", line));
            std::string_view v;
            if (f.take_opt("cm", v)) d.cm = parse_float(v, "cm", line);
            if (f.take_opt("ibias", v)) d.ibias = parse_float(v, "ibias", line);
            if (f.take_opt("tau_minus", v))
                d.tau_minus = parse_float(v, "tau_minus", line);
            if (f.take_opt("a_minus", v))
                d.a_minus = parse_float(v, "a_minus", line);
            if (f.take_opt("channels", v))
                d.channels = parse_channels(v, line);
            f.finish();
            model.neuron_sets.push_back(std::move(d));
            continue;
        }

        if (section == "synapse_attr_sets") {
            if (toks[0] != "sset")
                throw parse_error(line, "expected sset record");
            FieldMap f(toks, 1, line);
            SynapseSetDecl d;
            d.id = std::uint16_t(parse_uint(f.take("id"), kAttrTableSize - 1,
                                            "attr set id", line));
            std::string_view v;
            if (f.take_opt("u", v)) d.stp.U = parse_float(v, "u", line);
            if (f.take_opt("a", v)) d.stp.A = parse_float(v, "a", line);
            if (f.take_opt("tau_f", v))
                d.stp.tau_f = parse_float(v, "tau_f", line);
            if (f.take_opt("tau_d", v))
                d.stp.tau_d = parse_float(v, "tau_d", line);
            if (f.take_opt("tau_s", v))
                d.stp.tau_s = parse_float(v, "tau_s", line);
            if (f.take_opt("tau_plus", v))
                d.stdp.tau_plus = parse_float(v, "tau_plus", line);
            if (f.take_opt("a_plus", v))
                d.stdp.a_plus = parse_float(v, "a_plus", line);
            if (f.take_opt("eta_plus", v))
                d.stdp.eta_plus = parse_float(v, "eta_plus", line);
            if (f.take_opt("eta_minus", v))
                d.stdp.eta_minus = parse_float(v, "eta_minus", line);
            if (f.take_opt("w_max", v))
                d.stdp.w_max = parse_float(v, "w_max", line);
            if (f.take_opt("g_syn", v))
                d.mem.g_syn = parse_float(v, "g_syn", line);
            if (f.take_opt("e_syn", v))
                d.mem.E_syn = parse_float(v, "e_syn", line);
            f.finish();
            model.synapse_sets.push_back(d);
            continue;
        }

        if (section == "neurons") {
            if (toks[0] != "neuron")
                throw parse_error(line, "expected neuron record");
            FieldMap f(toks, 1, line);
            NeuronDecl d;
            d.id = std::uint32_t(parse_uint(f.take("id"), kMaxNeuronId,
                                            "neuron id", line));
            std::string_view v;
            if (f.take_opt("attrs", v))
                d.attr_set = std::uint16_t(parse_uint(v, kAttrTableSize - 1,
                                                      "attr set id", line));
            if (f.take_opt("acdn", v))
                d.acdn = std::uint16_t(parse_int(v, 0, kMaxNeuronDelay,
                                                 "acdn", line));
            if (f.take_opt("v", v)) d.v_init = parse_float(v, "v", line);
            f.finish();
            model.neurons.push_back(d);
            continue;
        }

        // [synapses]
        if (toks[0] != "synapse")
            throw parse_error(line, "expected synapse record");
        FieldMap f(toks, 1, line);
        SynapseDecl d;
        d.pre = std::uint32_t(parse_uint(f.take("pre"), kMaxNeuronId,
                                         "neuron id", line));
        d.post = std::uint32_t(parse_uint(f.take("post"), kMaxNeuronId,
                                          "neuron id", line));
        d.w_init = detail::parse_float(f.take("w"), "w", line);
        std::string_view v;
        if (f.take_opt("attrs", v))
            d.attr_set = std::uint16_t(parse_uint(v, kAttrTableSize - 1,
                                                  "attr set id", line));
        if (f.take_opt("acds", v))
            d.acds = std::uint8_t(parse_int(v, 0, kMaxSynapseDelay, "acds",
                                            line));
        f.finish();
        model.synapses.push_back(d);
    }
    if (!saw_format)
        throw parse_error(line, "missing 'format=" +
                                    std::string(kNetworkFormatTag) +
                                    "' in [header]");
    return model;
}

inline NetworkModel parse_network_string(const std::string& text) {
    std::istringstream in(text);
    return parse_network(in);
}

inline NetworkModel load_network(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open network file: " + path);
    return parse_network(in);
}

// ------------------------------------------------------------ serialize ----

namespace detail {

inline std::string fmt_float(float v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9g", double(v));
    return buf;
}

inline const char* channel_kind_name(ChannelKind k) {
    switch (k) {
        case ChannelKind::na: return "na";
        case ChannelKind::k: return "k";
        default: return "leak";
    }
}

} // namespace detail

inline void serialize_network(const NetworkModel& m, std::ostream& out) {
    using detail::fmt_float;
    out << "[header]\n";
    out << "format=" << kNetworkFormatTag << "\n";
    if (!m.name.empty()) out << "name=" << m.name << "\n";
    out << "\n[neuron_attr_sets]\n";
    for (const NeuronSetDecl& d : m.neuron_sets) {
        out << "nset id=" << d.id << " cm=" << fmt_float(d.cm)
            << " ibias=" << fmt_float(d.ibias)
            << " tau_minus=" << fmt_float(d.tau_minus)
            << " a_minus=" << fmt_float(d.a_minus);
        if (!d.channels.empty()) {
            out << " channels=";
            for (std::size_t i = 0; i < d.channels.size(); ++i) {
                const ChannelDecl& c = d.channels[i];
                if (i) out << ',';
                out << detail::channel_kind_name(c.kind) << ':'
                    << fmt_float(c.g) << ':' << fmt_float(c.E);
            }
        }
        out << "\n";
    }
    out << "\n[synapse_attr_sets]\n";
    for (const SynapseSetDecl& d : m.synapse_sets) {
        out << "sset id=" << d.id << " u=" << fmt_float(d.stp.U)
            << " a=" << fmt_float(d.stp.A)
            << " tau_f=" << fmt_float(d.stp.tau_f)
            << " tau_d=" << fmt_float(d.stp.tau_d)
            << " tau_s=" << fmt_float(d.stp.tau_s)
            << " tau_plus=" << fmt_float(d.stdp.tau_plus)
            << " a_plus=" << fmt_float(d.stdp.a_plus)
            << " eta_plus=" << fmt_float(d.stdp.eta_plus)
            << " eta_minus=" << fmt_float(d.stdp.eta_minus)
            << " w_max=" << fmt_float(d.stdp.w_max)
            << " g_syn=" << fmt_float(d.mem.g_syn)
            << " e_syn=" << fmt_float(d.mem.E_syn) << "\n";
    }
    out << "\n[neurons]\n";
    for (const NeuronDecl& d : m.neurons) {
        out << "neuron id=" << d.id << " attrs=" << d.attr_set
            << " acdn=" << d.acdn << " v=" << fmt_float(d.v_init) << "\n";
    }
    out << "\n[synapses]\n";
    for (const SynapseDecl& d : m.synapses) {
        out << "synapse pre=" << d.pre << " post=" << d.post
            << " attrs=" << d.attr_set << " acds=" << int(d.acds)
            << " w=" << fmt_float(d.w_init) << "\n";
    }
}

inline std::string serialize_network_string(const NetworkModel& m) {
    std::ostringstream out;
    serialize_network(m, out);
    return out.str();
}

// ------------------------------------------------------------ validation ----

namespace detail {

inline void check_tau(std::vector<std::string>& issues, const char* ctx,
                      const char* field, float tau) {
    if (!(tau > 1.0f))
        issues.push_back(std::string(ctx) + ": " + field + " = " +
                         fmt_float(tau) + " (time constants must exceed 1 ms)");
}

} // namespace detail

// Structural and range checks on a parsed model. Returns human-readable
// problems; empty means the model can be resolved.
inline std::vector<std::string> validate_network(const NetworkModel& m) {
    using detail::fmt_float;
    std::vector<std::string> issues;

    for (char c : m.name) {
        const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
                        (c >= '0' && c <= '9') || c == '_' || c == '.' ||
                        c == '-';
        if (!ok) {
            issues.push_back("network name may only contain [A-Za-z0-9_.-]");
            break;
        }
    }

    std::unordered_map<std::uint16_t, const NeuronSetDecl*> nsets;
    for (const NeuronSetDecl& d : m.neuron_sets) {
        const std::string ctx = "nset " + std::to_string(d.id);
        if (!nsets.emplace(d.id, &d).second)
            issues.push_back(ctx + ": duplicate attr set id");
        if (!(d.cm > 0.0f))
            issues.push_back(ctx + ": cm must be positive");
        detail::check_tau(issues, ctx.c_str(), "tau_minus", d.tau_minus);
        if (d.a_minus < 0.0f)
            issues.push_back(ctx + ": a_minus must be non-negative");
        for (const ChannelDecl& c : d.channels)
            if (c.g < 0.0f)
                issues.push_back(ctx + ": channel conductance must be "
                                       "non-negative");
    }

    std::unordered_map<std::uint16_t, const SynapseSetDecl*> ssets;
    for (const SynapseSetDecl& d : m.synapse_sets) {
        const std::string ctx = "sset " + std::to_string(d.id);
        if (!ssets.emplace(d.id, &d).second)
            issues.push_back(ctx + ": duplicate attr set id");
        if (d.stp.U < 0.0f || d.stp.U > 1.0f)
            issues.push_back(ctx + ": u must lie in [0,1]");
        detail::check_tau(issues, ctx.c_str(), "tau_f", d.stp.tau_f);
        detail::check_tau(issues, ctx.c_str(), "tau_d", d.stp.tau_d);
        detail::check_tau(issues, ctx.c_str(), "tau_s", d.stp.tau_s);
        detail::check_tau(issues, ctx.c_str(), "tau_plus", d.stdp.tau_plus);
        if (d.stdp.a_plus < 0.0f)
            issues.push_back(ctx + ": a_plus must be non-negative");
        if (d.stdp.eta_plus < 0.0f || d.stdp.eta_minus < 0.0f)
            issues.push_back(ctx + ": learning rates must be non-negative");
        if (!(d.stdp.w_max > 0.0f))
            issues.push_back(ctx + ": w_max must be positive");
        if (d.stdp.eta_plus * d.stdp.a_plus > 1.0f)
            issues.push_back(ctx + ": eta_plus * a_plus = " +
                             fmt_float(d.stdp.eta_plus * d.stdp.a_plus) +
                             " exceeds 1 (single-step overshoot)");
        if (d.mem.g_syn < 0.0f)
            issues.push_back(ctx + ": g_syn must be non-negative");
    }

    std::unordered_map<std::uint32_t, const NeuronDecl*> declared;
    for (const NeuronDecl& d : m.neurons) {
        const std::string ctx = "neuron " + std::to_string(d.id);
        if (!declared.emplace(d.id, &d).second)
            issues.push_back(ctx + ": duplicate neuron id");
        if (!nsets.count(d.attr_set))
            issues.push_back(ctx + ": attr set " + std::to_string(d.attr_set) +
                             " is not declared");
        if (d.acdn > kMaxNeuronDelay)
            issues.push_back(ctx + ": acdn out of range");
    }

    bool implicit_neurons = false;
    std::size_t syn_idx = 0;
    for (const SynapseDecl& d : m.synapses) {
        const std::string ctx = "synapse #" + std::to_string(syn_idx++) +
                                " (" + std::to_string(d.pre) + " -> " +
                                std::to_string(d.post) + ")";
        const auto* sset = ssets.count(d.attr_set) ? ssets.at(d.attr_set)
                                                   : nullptr;
        if (!sset)
            issues.push_back(ctx + ": attr set " + std::to_string(d.attr_set) +
                             " is not declared");
        if (d.acds > kMaxSynapseDelay)
            issues.push_back(ctx + ": acds out of range");
        if (!declared.count(d.pre) || !declared.count(d.post))
            implicit_neurons = true;
        if (sset && (d.w_init < 0.0f || d.w_init > sset->stdp.w_max))
            issues.push_back(ctx + ": w = " + fmt_float(d.w_init) +
                             " outside [0, w_max]");
        // Depression couples the synapse learning rate with the post
        // neuron's trace increment.
        const NeuronDecl* post = declared.count(d.post) ? declared.at(d.post)
                                                        : nullptr;
        const std::uint16_t post_set = post ? post->attr_set : 0;
        if (sset && nsets.count(post_set)) {
            const float prod = sset->stdp.eta_minus * nsets.at(post_set)->a_minus;
            if (prod > 1.0f)
                issues.push_back(ctx + ": eta_minus * a_minus = " +
                                 fmt_float(prod) + " exceeds 1 against post "
                                 "neuron attr set " + std::to_string(post_set));
        }
    }

    if (implicit_neurons && !nsets.count(0))
        issues.push_back("synapses reference undeclared neurons, which "
                         "default to attr set 0, but no nset 0 exists");
    if (m.neurons.empty() && m.synapses.empty())
        issues.push_back("network has no neurons");
    return issues;
}

// -------------------------------------------------------------- resolve ----

struct ResolvedNeuron {
    std::uint32_t id = 0;
    std::uint16_t attr_set = 0;
    std::uint16_t acdn = 0;
    float v_init = -65.0f;
};

struct ResolvedSynapse {
    std::uint32_t pre = 0;  // dense neuron index
    std::uint32_t post = 0; // dense neuron index
    std::uint16_t attr_set = 0;
    std::uint8_t acds = 0;
    float w_init = 0.0f;
};

// Simulation-ready view: neurons densely indexed in ascending id order,
// synapses in declaration order, attribute tables expanded.
struct ResolvedNetwork {
    std::string name;
    std::vector<NeuronAttrs> nsets;      // indexed by attr set id
    std::vector<SynapseAttrSet> ssets;   // indexed by attr set id
    std::vector<ResolvedNeuron> neurons; // ascending id
    std::vector<ResolvedSynapse> synapses;
    std::vector<std::vector<std::uint32_t>> incoming; // post index -> syn idx
    std::unordered_map<std::uint32_t, std::uint32_t> index_of_id;

    std::uint32_t n_neurons() const {
        return std::uint32_t(neurons.size());
    }
    std::uint32_t n_synapses() const {
        return std::uint32_t(synapses.size());
    }
};

inline ResolvedNetwork resolve_network(const NetworkModel& m) {
    {
        const auto issues = validate_network(m);
        if (!issues.empty()) {
            std::string joined = "invalid network:";
            for (const std::string& s : issues) joined += "\n  " + s;
            throw validation_error(joined);
        }
    }
    ResolvedNetwork r;
    r.name = m.name;

    std::uint16_t max_nset = 0, max_sset = 0;
    for (const NeuronSetDecl& d : m.neuron_sets)
        max_nset = std::max(max_nset, d.id);
    for (const SynapseSetDecl& d : m.synapse_sets)
        max_sset = std::max(max_sset, d.id);
    r.nsets.resize(std::size_t(max_nset) + 1);
    r.ssets.resize(std::size_t(max_sset) + 1);
    for (const NeuronSetDecl& d : m.neuron_sets)
        r.nsets[d.id] = to_neuron_attrs(d);
    for (const SynapseSetDecl& d : m.synapse_sets)
        r.ssets[d.id] = SynapseAttrSet{d.stp, d.stdp, d.mem};

    // Declared neurons, then implicit endpoints with default attributes.
    std::unordered_map<std::uint32_t, ResolvedNeuron> by_id;
    for (const NeuronDecl& d : m.neurons)
        by_id.emplace(d.id, ResolvedNeuron{d.id, d.attr_set, d.acdn, d.v_init});
    for (const SynapseDecl& d : m.synapses) {
        by_id.try_emplace(d.pre, ResolvedNeuron{d.pre, 0, 0, -65.0f});
        by_id.try_emplace(d.post, ResolvedNeuron{d.post, 0, 0, -65.0f});
    }
    r.neurons.reserve(by_id.size());
    for (const auto& [id, n] : by_id) r.neurons.push_back(n);
    std::sort(r.neurons.begin(), r.neurons.end(),
              [](const ResolvedNeuron& a, const ResolvedNeuron& b) {
                  return a.id < b.id;
              });
    r.index_of_id.reserve(r.neurons.size());
    for (std::uint32_t i = 0; i < r.neurons.size(); ++i)
        r.index_of_id.emplace(r.neurons[i].id, i);

    r.synapses.reserve(m.synapses.size());
    r.incoming.resize(r.neurons.size());
    for (const SynapseDecl& d : m.synapses) {
        ResolvedSynapse s;
        s.pre = r.index_of_id.at(d.pre);
        s.post = r.index_of_id.at(d.post);
        s.attr_set = d.attr_set;
        s.acds = d.acds;
        s.w_init = d.w_init;
        r.incoming[s.post].push_back(std::uint32_t(r.synapses.size()));
        r.synapses.push_back(s);
    }
    return r;
}

// ------------------------------------------------------------- stimulus ----

struct StimulusEvent {
    std::int64_t timestep = 0;
    std::uint32_t neuron = 0; // neuron id, not dense index
    float current = 0.0f;
};

// Stimulus files are "timestep neuron_id current" lines; events at the
// same (timestep, neuron) add up.
inline std::vector<StimulusEvent> parse_stimulus(std::istream& in) {
    using namespace detail;
    std::vector<StimulusEvent> out;
    std::string raw;
    int line = 0;
    while (std::getline(in, raw)) {
        ++line;
        std::string_view sv = raw;
        if (const auto hash = sv.find('#'); hash != std::string_view::npos)
            sv = sv.substr(0, hash);
        sv = trim(sv);
        if (sv.empty()) continue;
        const auto toks = split_tokens(sv);
        if (toks.size() != 3)
            throw parse_error(line, "expected: timestep neuron_id current");
        StimulusEvent e;
        e.timestep = parse_int(toks[0], 0, (std::int64_t(1) << 62), "timestep",
                               line);
        e.neuron = std::uint32_t(parse_uint(toks[1], kMaxNeuronId, "neuron id",
                                            line));
        e.current = parse_float(toks[2], "current", line);
        out.push_back(e);
    }
    return out;
}

inline std::vector<StimulusEvent> load_stimulus(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open stimulus file: " + path);
    return parse_stimulus(in);
}

// Events must address neurons that exist in the resolved network.
inline void validate_stimulus(const ResolvedNetwork& net,
                              const std::vector<StimulusEvent>& events) {
    for (const StimulusEvent& e : events)
        if (!net.index_of_id.count(e.neuron))
            throw validation_error("stimulus addresses unknown neuron " +
                                   std::to_string(e.neuron));
}

// Per-timestep injection currents keyed by dense neuron index. Events for
// the same (timestep, neuron) fold into one value by float addition in
// file order, so both simulators see one identical current.
class StimulusSchedule {
  public:
    StimulusSchedule() = default;

    StimulusSchedule(const ResolvedNetwork& net,
                     const std::vector<StimulusEvent>& events) {
        validate_stimulus(net, events);
        for (const StimulusEvent& e : events) {
            auto& row = by_step_[e.timestep];
            auto it = std::find_if(row.begin(), row.end(),
                                   [&](const auto& pr) {
                                       return pr.first ==
                                              net.index_of_id.at(e.neuron);
                                   });
            if (it == row.end())
                row.emplace_back(net.index_of_id.at(e.neuron), e.current);
            else
                it->second = it->second + e.current;
        }
    }

    // Entries for one timestep; nullptr when nothing is scheduled.
    const std::vector<std::pair<std::uint32_t, float>>* at(
        std::int64_t t) const {
        const auto it = by_step_.find(t);
        return it == by_step_.end() ? nullptr : &it->second;
    }

    bool empty() const { return by_step_.empty(); }

  private:
    std::unordered_map<std::int64_t,
                       std::vector<std::pair<std::uint32_t, float>>>
        by_step_;
};

} // namespace hnemu
