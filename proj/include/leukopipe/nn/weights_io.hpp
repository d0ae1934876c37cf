#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "leukopipe/nn/module.hpp"

namespace leukopipe::nn {

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

/// Binary tensor archive: "LKPW", u32 version, u32 count, then per tensor
/// u32 name length, name bytes, u32 ndim, i64 dims, float32 data
/// (all little-endian).
void write_tensors(const std::filesystem::path& path, const NamedTensors& tensors);
NamedTensors read_tensors(const std::filesystem::path& path);

/// Snapshot of every parameter and buffer of `module`.
NamedTensors state_dict(Module& module);

struct LoadResult {
    std::vector<std::string> loaded;
    std::vector<std::string> missing;
    std::vector<std::string> unexpected;
};

/// Copies matching tensors into `module`. Names starting with any of
/// `skip_prefixes` are ignored on both sides. Shape disagreement throws
/// ShapeMismatch.
LoadResult load_state_dict(Module& module, const NamedTensors& tensors,
                           const std::vector<std::string>& skip_prefixes = {});

}  // namespace leukopipe::nn
