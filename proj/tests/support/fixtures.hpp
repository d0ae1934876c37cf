#pragma once

#include <filesystem>
#include <string>

#include "leukopipe/dataset.hpp"
#include "leukopipe/image.hpp"

namespace fixture {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag = "leukopipe");
    ~TempDir();
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& rel) const { return path_ / rel; }

private:
    std::filesystem::path path_;
};

/// Uniform random pixels in [0, 1]; no symmetry.
leukopipe::Image random_image(int height, int width, std::uint64_t seed);

/// Smooth gradient-plus-texture image; closer to a photograph than noise.
leukopipe::Image smooth_image(int height, int width, std::uint64_t seed);

/// In-memory manifest of ORIGINAL, UNASSIGNED records with the given class
/// counts. Paths point nowhere.
leukopipe::DatasetManifest synthetic_manifest(std::size_t hem, std::size_t all, const std::string& prefix = "img");

/// Writes `hem` + `all` small PNGs under root/hem and root/all and returns
/// the ingested manifest.
leukopipe::DatasetManifest write_png_tree(const std::filesystem::path& root, std::size_t hem, std::size_t all,
                                          int side = 32, std::uint64_t seed = 1);

}  // namespace fixture
