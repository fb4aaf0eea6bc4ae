#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace hnemu {

// Architecture constants. The network advances in 1 ms timesteps; inside
// each timestep the membrane integrator runs 25 forward-Euler substeps of
// 0.04 ms. Synapse-side dynamics (plasticity, conductance decay) tick once
// per timestep.
inline constexpr int kSubstepsPerTimestep = 25;
inline constexpr float kSubstepDtMs = 0.04f;
inline constexpr float kTimestepDtMs = 1.0f;

// Neuron ids are 24-bit; the all-ones pattern marks an unused synapse slot.
inline constexpr std::uint32_t kNullNeuronId = 0xFFFFFFu;
inline constexpr std::uint32_t kMaxNeuronId = 0xFFFFFEu;

// Attribute tables hold up to 1024 entries (10-bit index).
inline constexpr std::uint32_t kAttrTableSize = 1024;

// Axonal delay ranges, whole timesteps. The per-neuron delay applies at
// the spike source, the per-synapse delay at the receiving slot.
inline constexpr int kMaxNeuronDelay = 256;
inline constexpr int kMaxSynapseDelay = 24;

// Published-spike history depth: a slot may look back up to kMaxSynapseDelay
// timesteps behind the bus, plus the step currently being written.
inline constexpr int kSpikeHistoryDepth = kMaxSynapseDelay + 2;

// Per-neuron raw spike ring: holds the current step plus kMaxNeuronDelay
// steps of lookback.
inline constexpr int kRawSpikeRingSteps = kMaxNeuronDelay + 1;

struct parse_error : std::runtime_error {
    parse_error(int line_, const std::string& what_)
        : std::runtime_error("line " + std::to_string(line_) + ": " + what_),
          line(line_) {}
    int line;
};

struct validation_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct io_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct compile_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Thrown when a membrane integration produces a non-finite value.
struct instability_error : std::runtime_error {
    instability_error(std::uint32_t neuron_, std::int64_t timestep_)
        : std::runtime_error("non-finite membrane state in neuron " +
                             std::to_string(neuron_) + " at timestep " +
                             std::to_string(timestep_)),
          neuron(neuron_), timestep(timestep_) {}
    std::uint32_t neuron;
    std::int64_t timestep;
};

} // namespace hnemu
