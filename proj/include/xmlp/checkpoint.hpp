#pragma once

#include <string>

#include "xmlp/data.hpp"
#include "xmlp/model.hpp"
#include "xmlp/optim.hpp"

namespace xmlp {

// Checkpoint layout: "XMLPCKP1" magic, format version, tagged
// length-prefixed little-endian sections (model spec, train config, flat
// parameter values, BN running stats, optimizer state, RNG state,
// normalization statistics), closed by a CRC32 trailer over everything
// before it. The round trip is bitwise lossless: save -> load -> save
// produces identical bytes, and a resumed run continues exactly where the
// saved one stopped.

void save_checkpoint(Model& model, const TrainState& state,
                     const TrainConfig& cfg, const NormStats& stats,
                     const std::string& path);

struct LoadedCheckpoint {
  Model model;
  TrainState state;
  TrainConfig cfg;
  NormStats stats;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

uint32_t crc32(const uint8_t* data, size_t len);

}  // namespace xmlp
