#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>

#include "leukopipe/dataset.hpp"
#include "leukopipe/image.hpp"

namespace leukopipe {

struct Interval {
    double lo = 0.0;
    double hi = 0.0;
    bool operator==(const Interval&) const = default;
};

/// Parameters of the stochastic transform composition. Defaults are the
/// blood-smear training recipe.
struct AugmentationConfig {
    double hflip_p = 0.5;
    double vflip_p = 0.5;
    double rotation_deg = 25.0;
    double jitter_brightness = 0.3;
    double jitter_contrast = 0.3;
    double jitter_saturation = 0.3;
    double jitter_hue = 0.05;
    Interval crop_scale{0.7, 1.0};
    Interval crop_ratio{0.75, 1.33};
    int crop_size = kModelSide;
    double affine_translate = 0.05;
    Interval affine_scale{0.95, 1.05};
    double affine_shear_deg = 10.0;
    int blur_kernel = 3;
    Interval blur_sigma{0.1, 2.0};
    double sharp_factor = 2.0;
    double sharp_p = 0.3;
    double persp_distortion = 0.2;
    double persp_p = 0.3;

    bool operator==(const AugmentationConfig&) const = default;

    /// Every gate and stochastic range collapsed so the composition is the
    /// identity map.
    static AugmentationConfig identity();

    /// Throws InvalidConfig.
    void validate() const;
};

/// Applies HFlip, VFlip, Rotate, Jitter, ResizeCrop, Affine, Blur, Sharp and
/// RandPersp in that order. Pure in (img, seed, cfg). Input must be
/// crop_size x crop_size with values in [0, 1]; so is the output.
Image apply_transforms(const Image& img, std::uint64_t seed, const AugmentationConfig& cfg);

// Individual transforms, exposed for testing. Geometric ones resample
// bilinearly and fill uncovered pixels with black.
namespace transforms {
Image hflip(const Image& img);
Image vflip(const Image& img);
/// Counter-clockwise for positive angles.
Image rotate(const Image& img, double angle_deg);
Image adjust_brightness(const Image& img, double factor);
Image adjust_contrast(const Image& img, double factor);
Image adjust_saturation(const Image& img, double factor);
Image adjust_hue(const Image& img, double shift);
/// Crops [top, top+h) x [left, left+w) and resizes to side x side.
Image resized_crop(const Image& img, int top, int left, int h, int w, int side);
/// Translation in pixels, shear along x in degrees.
Image affine(const Image& img, double angle_deg, std::pair<double, double> translate, double scale, double shear_deg);
Image gaussian_blur(const Image& img, int kernel, double sigma);
Image adjust_sharpness(const Image& img, double factor);
/// Maps the output corners `endpoints` back onto the input corners
/// `startpoints` (tl, tr, br, bl order).
Image perspective(const Image& img, const std::array<std::pair<int, int>, 4>& startpoints,
                  const std::array<std::pair<int, int>, 4>& endpoints);
}  // namespace transforms

enum class ParentSampling { ROUND_ROBIN, UNIFORM_WITH_REPLACEMENT };

std::string to_string(ParentSampling sampling);
ParentSampling parse_sampling(std::string_view text);

struct BalancePlan {
    std::size_t target = 10000;
    std::map<ClassLabel, std::size_t> deficits;
    ParentSampling sampling = ParentSampling::ROUND_ROBIN;

    bool operator==(const BalancePlan&) const = default;
};

/// deficit[c] = max(0, target - |ORIGINAL TRAIN records of class c|).
/// INTERNAL_VAL and TEST records never count.
BalancePlan plan_balance(const DatasetManifest& manifest, std::size_t target,
                         ParentSampling sampling = ParentSampling::ROUND_ROBIN);

struct BalanceOptions {
    std::filesystem::path out_dir;
    unsigned workers = 1;
};

/// Generates exactly deficit[c] AUGMENTED TRAIN records per class and writes
/// each as `<parent_id>_aug<k>.png` under out_dir. Per-item seeds are
/// derived from (global_seed, class, sequence index), so output does not
/// depend on the worker count.
DatasetManifest execute_balance(const DatasetManifest& manifest, const BalancePlan& plan,
                                const AugmentationConfig& cfg, std::uint64_t global_seed,
                                const BalanceOptions& options);

}  // namespace leukopipe
