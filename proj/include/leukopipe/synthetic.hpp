#pragma once

#include <cstdint>
#include <filesystem>

#include "leukopipe/dataset.hpp"
#include "leukopipe/hashing.hpp"
#include "leukopipe/image.hpp"

namespace leukopipe {

/// Toy two-class data: one soft disc on a noisy pale background. HEM discs
/// lean red, ALL discs lean blue; position, radius and shade vary.
struct SyntheticOptions {
    std::size_t per_class = 200;
    int side = 64;
    std::uint64_t seed = 0;
    double noise = 0.04;
};

Image make_blob_image(ClassLabel label, Rng& rng, int side, double noise);

/// Writes `<root>/hem/hem_NNNN.png` and `<root>/all/all_NNNN.png`.
void generate_blob_dataset(const std::filesystem::path& root, const SyntheticOptions& options);

}  // namespace leukopipe
