#pragma once

// Model snapshot persisted to disk. The file is self-describing: schema,
// quantile-transform knots, schedule state, and denoiser architecture all
// travel with the weights, so a checkpoint loads without the original
// training config.
//
// Layout (little-endian):
//   bytes 0..7    magic "TABGENCK"
//   u32           format version
//   u32           header length in bytes
//   ...           header: one JSON document (schema, transform, schedule
//                 metadata, architecture, training metadata, payload counts)
//   ...           payload: params, rho_raw, k_raw as raw IEEE-754 doubles
//   u64           FNV-1a hash of every preceding byte
//
// Serialization is deterministic (sorted JSON keys, shortest round-trip
// float text), so save -> load -> save reproduces the file byte for byte.

#include <cstdint>
#include <string>
#include <vector>

#include "tabgen/denoiser.hpp"
#include "tabgen/quantile.hpp"
#include "tabgen/schedule.hpp"
#include "tabgen/schema.hpp"

namespace tabgen {

struct Checkpoint {
    static constexpr uint32_t kVersion = 1;

    TableSchema schema;
    QuantileTransform qt;
    ScheduleSet schedules;
    DenoiserConfig config;
    std::vector<double> params;

    uint64_t seed = 0;
    int64_t epoch = 0;
    double loss = 0.0;

    std::vector<uint8_t> serialize() const;
    static Checkpoint deserialize(const std::vector<uint8_t>& bytes);

    void save(const std::string& path) const;
    static Checkpoint load(const std::string& path);

    // Builds the denoiser described by this checkpoint and installs the
    // saved weights.
    Denoiser make_denoiser() const;

    bool operator==(const Checkpoint&) const = default;
};

uint64_t fnv1a64(const uint8_t* data, std::size_t n);

}  // namespace tabgen
