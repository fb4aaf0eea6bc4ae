// Run outputs: spike rasters, state traces, weight histograms. All three
// are line-oriented text with a fixed header so files are greppable and
// diffable. Writers go through a temp file plus rename; readers reject
// anything they would misinterpret.

#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "hnemu/common.hpp"

namespace hnemu {

inline constexpr char kRasterHeader[] = "# hnraster-1 timestep,neuron_id";
inline constexpr char kTraceHeader[] = "# hntrace-1";

struct SpikeRecord {
    std::int64_t timestep = 0;
    std::uint32_t neuron = 0; // neuron id, not dense index

    bool operator==(const SpikeRecord&) const = default;
};

namespace detail {

class AtomicFile {
  public:
    explicit AtomicFile(const std::filesystem::path& target)
        : target_(target), tmp_(target) {
        tmp_ += ".tmp";
        out_.open(tmp_, std::ios::binary);
        if (!out_) throw io_error("cannot create " + tmp_.string());
    }
    std::ostream& stream() { return out_; }
    void commit() {
        out_.flush();
        if (!out_) throw io_error("short write to " + tmp_.string());
        out_.close();
        std::filesystem::rename(tmp_, target_);
    }
    ~AtomicFile() {
        if (out_.is_open()) {
            out_.close();
            std::error_code ec;
            std::filesystem::remove(tmp_, ec);
        }
    }

  private:
    std::filesystem::path target_, tmp_;
    std::ofstream out_;
};

} // namespace detail

// Streams "timestep,neuron_id" lines, one spike per line, in emission
// order (per-step batches arrive sorted, so the file is sorted too).
class RasterWriter {
  public:
    explicit RasterWriter(const std::filesystem::path& target)
        : file_(target) {
        file_.stream() << kRasterHeader << "\n";
    }
    void append(std::int64_t t, std::uint32_t neuron_id) {
        file_.stream() << t << "," << neuron_id << "\n";
        ++count_;
    }
    std::uint64_t count() const { return count_; }
    void close() { file_.commit(); }

  private:
    detail::AtomicFile file_;
    std::uint64_t count_ = 0;
};

inline std::vector<SpikeRecord> load_raster(
    const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw io_error("cannot open " + file.string());
    std::string line;
    if (!std::getline(in, line) || line != kRasterHeader)
        throw parse_error(1, "not a raster file: " + file.string());
    std::vector<SpikeRecord> out;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const std::size_t comma = line.find(',');
        if (comma == std::string::npos)
            throw parse_error(lineno, "expected timestep,neuron_id");
        try {
            SpikeRecord r;
            r.timestep = std::stoll(line.substr(0, comma));
            r.neuron =
                std::uint32_t(std::stoul(line.substr(comma + 1)));
            out.push_back(r);
        } catch (const std::exception&) {
            throw parse_error(lineno, "bad raster line: " + line);
        }
    }
    return out;
}

// First mismatch between two rasters as text, or empty when identical.
inline std::string diff_rasters(const std::vector<SpikeRecord>& a,
                                const std::vector<SpikeRecord>& b) {
    const std::size_t n = std::min(a.size(), b.size());
    for (std::size_t k = 0; k < n; ++k)
        if (!(a[k] == b[k])) {
            std::ostringstream os;
            os << "record " << k << ": " << a[k].timestep << ","
               << a[k].neuron << " vs " << b[k].timestep << ","
               << b[k].neuron;
            return os.str();
        }
    if (a.size() != b.size()) {
        std::ostringstream os;
        os << "lengths differ: " << a.size() << " vs " << b.size()
           << " spikes";
        return os.str();
    }
    return "";
}

// Per-step state samples: "t,<target>,name=value,...". Values are hex
// floats so a trace captures exactly the bits the run produced.
class TraceWriter {
  public:
    explicit TraceWriter(const std::filesystem::path& target)
        : file_(target) {
        file_.stream() << kTraceHeader << "\n";
    }
    // target is e.g. "neuron 17" or "synapse 4".
    void row(std::int64_t t, const std::string& target,
             const std::vector<std::pair<std::string, float>>& fields) {
        auto& os = file_.stream();
        os << t << "," << target;
        char buf[48];
        for (const auto& [name, v] : fields) {
            std::snprintf(buf, sizeof buf, "%a", double(v));
            os << "," << name << "=" << buf;
        }
        os << "\n";
    }
    void close() { file_.commit(); }

  private:
    detail::AtomicFile file_;
};

// Fixed-bin histogram of synaptic weights, normalized per synapse set's
// own maximum so mixed populations stay comparable.
struct WeightHistogram {
    static constexpr int kBins = 64;
    std::uint64_t bins[kBins] = {};
    std::uint64_t total = 0;

    // fraction must already be w / w_max, in [0, 1].
    void add(float fraction) {
        int b = int(fraction * kBins);
        if (b < 0) b = 0;
        if (b >= kBins) b = kBins - 1;
        ++bins[b];
        ++total;
    }
    void write(std::ostream& os) const {
        os << "# hnwhist-1 bin_lo,bin_hi,count (w / w_max)\n";
        for (int b = 0; b < kBins; ++b)
            os << double(b) / kBins << "," << double(b + 1) / kBins << ","
               << bins[b] << "\n";
    }
};

} // namespace hnemu
