#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <string_view>

namespace leukopipe {

std::string sha256_hex(std::span<const std::byte> bytes);
std::string sha256_hex(std::string_view text);
std::string sha256_file(const std::filesystem::path& path);

/// Mixes a base seed with a label and up to a few integers into a new
/// 64-bit seed (FNV-1a over the label, SplitMix64 finalizer per step).
std::uint64_t derive_seed(std::uint64_t base, std::string_view label,
                          std::initializer_list<std::uint64_t> extra = {});

/// Seeded random source. Distribution sampling is done here rather than via
/// <random> distributions so sequences are identical across standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }
    /// Uniform double in [0, 1).
    double unit();
    /// Uniform double in [lo, hi]; returns lo when lo == hi.
    double uniform(double lo, double hi);
    bool bernoulli(double p);
    /// Uniform integer in [lo, hi) (hi > lo).
    std::int64_t randint(std::int64_t lo, std::int64_t hi);
    double normal();

    template <class It>
    void shuffle(It first, It last) {
        auto n = static_cast<std::int64_t>(last - first);
        for (std::int64_t i = n - 1; i > 0; --i) {
            auto j = randint(0, i + 1);
            std::iter_swap(first + i, first + j);
        }
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace leukopipe
