#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>

#include "ctrlite/model.hpp"
#include "ctrlite/sparse.hpp"
#include "ctrlite/training.hpp"

namespace ctrlite {

// Binary checkpoint container, little-endian:
//   magic "CTRLCKPT", u32 version, u8 flavor (dense | sparse),
//   metadata block (key=value lines), tensor sections, trailing FNV-1a64
//   checksum of all preceding bytes.
// Dense (training) checkpoints store f64 tensors plus optional Adam state;
// compiled checkpoints store f32 with per-tensor encoding chosen by size
// (dense | CRS | sparse-rows). Loaders verify the checksum and report the
// section name on truncation.

using Metadata = std::map<std::string, std::string>;

struct LoadedCheckpoint {
    bool sparse = false;
    ModelParams params;              // dense flavor
    std::optional<AdamState> adam;   // dense flavor, when saved
    SparseModel model;               // sparse flavor
    Metadata metadata;
};

void save_checkpoint(const ModelParams& params, const AdamState* adam,
                     const std::string& path, const Metadata& metadata = {});

void save_sparse_checkpoint(const SparseModel& model, const std::string& path,
                            const Metadata& metadata = {});

LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace ctrlite
