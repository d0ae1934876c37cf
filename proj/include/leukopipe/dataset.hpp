#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace leukopipe {

enum class ClassLabel : int { HEM = 0, ALL = 1 };
inline constexpr std::array<ClassLabel, 2> kClasses{ClassLabel::HEM, ClassLabel::ALL};

enum class Split { UNASSIGNED, TRAIN, INTERNAL_VAL, TEST };
enum class Origin { ORIGINAL, AUGMENTED };

std::string to_string(ClassLabel label);
std::string to_string(Split split);
std::string to_string(Origin origin);
ClassLabel parse_label(std::string_view text);
Split parse_split(std::string_view text);
Origin parse_origin(std::string_view text);

struct ImageRecord {
    std::string id;
    std::filesystem::path path;
    ClassLabel label = ClassLabel::HEM;
    Split split = Split::UNASSIGNED;
    Origin origin = Origin::ORIGINAL;
    std::optional<std::string> parent_id;
    std::optional<std::uint64_t> aug_seed;

    bool operator==(const ImageRecord&) const = default;
};

struct SourceDescriptor {
    std::filesystem::path root;
    std::size_t image_count = 0;

    bool operator==(const SourceDescriptor&) const = default;
};

/// Split/carve/balance bookkeeping recorded on the manifest so later stages
/// can reject out-of-order operations.
struct SplitInfo {
    double test_fraction = 0.0;
    std::uint64_t seed = 0;
    bool operator==(const SplitInfo&) const = default;
};

struct CarveInfo {
    double val_fraction = 0.0;
    std::uint64_t seed = 0;
    bool operator==(const CarveInfo&) const = default;
};

struct BalanceInfo {
    std::size_t target = 0;
    std::uint64_t global_seed = 0;
    std::string sampling;
    bool operator==(const BalanceInfo&) const = default;
};

/// The full dataset. Records are kept sorted by id. Operations never mutate a
/// manifest in place; they return a new one.
struct DatasetManifest {
    static constexpr int kSchemaVersion = 1;

    std::vector<ImageRecord> records;
    std::vector<SourceDescriptor> sources;
    std::uint64_t split_seed = 0;
    std::string created_at;
    std::optional<SplitInfo> split;
    std::optional<CarveInfo> carve;
    std::optional<BalanceInfo> balance;

    bool operator==(const DatasetManifest&) const = default;

    std::size_t count(ClassLabel label, Split split, std::optional<Origin> origin = std::nullopt) const;
    const ImageRecord* find(std::string_view id) const;
};

/// Maps directory-name patterns to labels. Exact (case-insensitive) name
/// matches win over substring matches; the deepest matching path component
/// relative to the source root decides a file's label.
class LabelRule {
public:
    struct Entry {
        std::string pattern;
        ClassLabel label;
        bool exact = false;
    };

    /// "hem" -> HEM, "all" -> ALL, substring and case-insensitive.
    static LabelRule cnmc_default();
    /// Lines of `[exact:]pattern = HEM|ALL`; '#' starts a comment.
    static LabelRule load(const std::filesystem::path& path);
    static LabelRule parse(std::string_view text);

    std::optional<ClassLabel> classify_component(std::string_view dir_name) const;
    const std::vector<Entry>& entries() const { return entries_; }

private:
    std::vector<Entry> entries_;
};

struct IngestOptions {
    std::vector<std::string> extensions{".bmp", ".png", ".jpg", ".jpeg"};
    /// Fully decode every file to reject unreadable images up front.
    bool verify_decode = true;
};

DatasetManifest ingest(const std::vector<std::filesystem::path>& source_dirs, const LabelRule& rule,
                       const IngestOptions& options = {});

/// Per-class test count = round-half-up(class_count * test_fraction); the
/// choice is a function of (seed, sorted ids) only.
DatasetManifest stratified_split(const DatasetManifest& manifest, double test_fraction, std::uint64_t seed);

/// Moves a stratified val_fraction of TRAIN originals to INTERNAL_VAL.
/// Must run before augmentation.
DatasetManifest carve_internal_val(const DatasetManifest& manifest, double val_fraction, std::uint64_t seed);

/// Round-half-up of count * fraction.
std::size_t stratified_count(std::size_t class_count, double fraction);

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);
/// Parses and checks record invariants; does not touch image files.
DatasetManifest load_manifest(const std::filesystem::path& path);

struct ValidateOptions {
    bool check_paths = true;
};

/// Throws InvariantViolation listing every offending record.
void validate_manifest(const DatasetManifest& manifest, const ValidateOptions& options = {});

std::string utc_timestamp();

}  // namespace leukopipe
