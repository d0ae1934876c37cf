#include "leukopipe/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace leukopipe {

Image make_blob_image(ClassLabel label, Rng& rng, int side, double noise) {
    Image img(side, side);
    const double bg = rng.uniform(0.75, 0.9);
    const double cx = rng.uniform(0.3, 0.7) * side, cy = rng.uniform(0.3, 0.7) * side;
    const double radius = rng.uniform(0.15, 0.3) * side;
    const double shade = rng.uniform(-0.08, 0.08);
    const std::array<double, 3> tint = label == ClassLabel::HEM ? std::array<double, 3>{0.70, 0.35, 0.45}
                                                                : std::array<double, 3>{0.45, 0.35, 0.70};
    for (int y = 0; y < side; ++y) {
        for (int x = 0; x < side; ++x) {
            const double d = std::hypot(x + 0.5 - cx, y + 0.5 - cy);
            const double w = std::clamp(radius + 1.0 - d, 0.0, 1.0);
            for (int c = 0; c < 3; ++c) {
                const double v = (1.0 - w) * bg + w * (tint[c] + shade) + noise * rng.normal();
                img.at(y, x, c) = static_cast<float>(std::clamp(v, 0.0, 1.0));
            }
        }
    }
    return img;
}

void generate_blob_dataset(const std::filesystem::path& root, const SyntheticOptions& options) {
    for (ClassLabel label : kClasses) {
        const std::string name = label == ClassLabel::HEM ? "hem" : "all";
        const auto dir = root / name;
        std::filesystem::create_directories(dir);
        for (std::size_t i = 0; i < options.per_class; ++i) {
            Rng rng(derive_seed(options.seed, "synthetic", {static_cast<std::uint64_t>(label), i}));
            char file[64];
            std::snprintf(file, sizeof file, "%s_%04zu.png", name.c_str(), i);
            write_png(make_blob_image(label, rng, options.side, options.noise), dir / file);
        }
    }
}

}  // namespace leukopipe
