#include "fixtures.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>

#include "leukopipe/hashing.hpp"
#include "leukopipe/synthetic.hpp"

namespace fixture {

TempDir::TempDir(const std::string& tag) {
    std::string tmpl = (std::filesystem::temp_directory_path() / (tag + "-XXXXXX")).string();
    if (!mkdtemp(tmpl.data())) throw std::runtime_error("mkdtemp failed");
    path_ = tmpl;
}

TempDir::~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
}

leukopipe::Image random_image(int height, int width, std::uint64_t seed) {
    leukopipe::Rng rng(seed);
    leukopipe::Image img(height, width);
    for (auto& v : img.pixels()) v = static_cast<float>(rng.unit());
    return img;
}

leukopipe::Image smooth_image(int height, int width, std::uint64_t seed) {
    leukopipe::Rng rng(seed);
    const double fx = rng.uniform(1.0, 4.0), fy = rng.uniform(1.0, 4.0), phase = rng.uniform(0.0, 6.0);
    leukopipe::Image img(height, width);
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x)
            for (int c = 0; c < 3; ++c) {
                const double u = static_cast<double>(x) / width, v = static_cast<double>(y) / height;
                const double val = 0.5 + 0.25 * std::sin(fx * 6.28 * u + phase + c) * std::cos(fy * 6.28 * v) +
                                   0.2 * (u - v) * (c - 1);
                img.at(y, x, c) = static_cast<float>(std::clamp(val, 0.0, 1.0));
            }
    return img;
}

leukopipe::DatasetManifest synthetic_manifest(std::size_t hem, std::size_t all, const std::string& prefix) {
    leukopipe::DatasetManifest m;
    m.created_at = "2020-01-01T00:00:00Z";
    auto add = [&](leukopipe::ClassLabel label, std::size_t n, const char* tag) {
        for (std::size_t i = 0; i < n; ++i) {
            char id[96];
            std::snprintf(id, sizeof id, "%s__%s__%06zu", prefix.c_str(), tag, i);
            leukopipe::ImageRecord r;
            r.id = id;
            r.path = std::filesystem::path("/nonexistent") / (std::string(id) + ".png");
            r.label = label;
            m.records.push_back(r);
        }
    };
    add(leukopipe::ClassLabel::ALL, all, "all");
    add(leukopipe::ClassLabel::HEM, hem, "hem");
    std::sort(m.records.begin(), m.records.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
    return m;
}

leukopipe::DatasetManifest write_png_tree(const std::filesystem::path& root, std::size_t hem, std::size_t all,
                                          int side, std::uint64_t seed) {
    for (auto [label, n] : {std::pair{leukopipe::ClassLabel::HEM, hem}, std::pair{leukopipe::ClassLabel::ALL, all}}) {
        const auto dir = root / (label == leukopipe::ClassLabel::HEM ? "hem" : "all");
        std::filesystem::create_directories(dir);
        for (std::size_t i = 0; i < n; ++i) {
            leukopipe::Rng rng(leukopipe::derive_seed(seed, "tree", {static_cast<std::uint64_t>(label), i}));
            char name[32];
            std::snprintf(name, sizeof name, "img_%04zu.png", i);
            leukopipe::write_png(leukopipe::make_blob_image(label, rng, side, 0.03), dir / name);
        }
    }
    return leukopipe::ingest({root}, leukopipe::LabelRule::cnmc_default());
}

}  // namespace fixture
