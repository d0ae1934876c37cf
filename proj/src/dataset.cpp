#include "leukopipe/dataset.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "leukopipe/error.hpp"
#include "leukopipe/hashing.hpp"
#include "leukopipe/image.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace leukopipe {

namespace {

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
    return out;
}

std::string trim(std::string_view s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

std::string sanitize_component(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    for (unsigned char c : s) out.push_back(std::isalnum(c) || c == '-' || c == '.' ? static_cast<char>(c) : '_');
    return out;
}

std::string make_record_id(const fs::path& root, const fs::path& rel) {
    std::string id = sanitize_component(root.filename().string());
    fs::path stem_rel = rel;
    stem_rel.replace_extension();
    for (const auto& part : stem_rel) id += "__" + sanitize_component(part.string());
    return id;
}

void sort_records(std::vector<ImageRecord>& records) {
    std::sort(records.begin(), records.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
}

}  // namespace

std::string to_string(ClassLabel label) { return label == ClassLabel::HEM ? "HEM" : "ALL"; }

std::string to_string(Split split) {
    switch (split) {
        case Split::UNASSIGNED: return "UNASSIGNED";
        case Split::TRAIN: return "TRAIN";
        case Split::INTERNAL_VAL: return "INTERNAL_VAL";
        case Split::TEST: return "TEST";
    }
    return "UNASSIGNED";
}

std::string to_string(Origin origin) { return origin == Origin::ORIGINAL ? "ORIGINAL" : "AUGMENTED"; }

ClassLabel parse_label(std::string_view text) {
    auto t = lower(trim(text));
    if (t == "hem" || t == "0") return ClassLabel::HEM;
    if (t == "all" || t == "1") return ClassLabel::ALL;
    throw Error(ErrorCode::ParseError, "unknown class label '" + std::string(text) + "'");
}

Split parse_split(std::string_view text) {
    if (text == "UNASSIGNED") return Split::UNASSIGNED;
    if (text == "TRAIN") return Split::TRAIN;
    if (text == "INTERNAL_VAL") return Split::INTERNAL_VAL;
    if (text == "TEST") return Split::TEST;
    throw Error(ErrorCode::ParseError, "unknown split '" + std::string(text) + "'");
}

Origin parse_origin(std::string_view text) {
    if (text == "ORIGINAL") return Origin::ORIGINAL;
    if (text == "AUGMENTED") return Origin::AUGMENTED;
    throw Error(ErrorCode::ParseError, "unknown origin '" + std::string(text) + "'");
}

std::size_t DatasetManifest::count(ClassLabel label, Split s, std::optional<Origin> origin) const {
    return static_cast<std::size_t>(std::count_if(records.begin(), records.end(), [&](const ImageRecord& r) {
        return r.label == label && r.split == s && (!origin || r.origin == *origin);
    }));
}

const ImageRecord* DatasetManifest::find(std::string_view id) const {
    auto it = std::lower_bound(records.begin(), records.end(), id,
                               [](const ImageRecord& r, std::string_view key) { return r.id < key; });
    if (it != records.end() && it->id == id) return &*it;
    // Fall back to a scan for manifests built without the sort invariant.
    auto lin = std::find_if(records.begin(), records.end(), [&](const auto& r) { return r.id == id; });
    return lin == records.end() ? nullptr : &*lin;
}

// --- label rules -----------------------------------------------------------

LabelRule LabelRule::cnmc_default() {
    LabelRule rule;
    rule.entries_ = {{"hem", ClassLabel::HEM, false}, {"all", ClassLabel::ALL, false}};
    return rule;
}

LabelRule LabelRule::parse(std::string_view text) {
    LabelRule rule;
    std::istringstream in{std::string(text)};
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw Error(ErrorCode::ParseError, "label rule line " + std::to_string(lineno) + ": expected 'pattern = LABEL'");
        Entry e;
        e.pattern = trim(line.substr(0, eq));
        if (e.pattern.rfind("exact:", 0) == 0) {
            e.exact = true;
            e.pattern = trim(e.pattern.substr(6));
        }
        e.pattern = lower(e.pattern);
        if (e.pattern.empty())
            throw Error(ErrorCode::ParseError, "label rule line " + std::to_string(lineno) + ": empty pattern");
        e.label = parse_label(line.substr(eq + 1));
        rule.entries_.push_back(std::move(e));
    }
    if (rule.entries_.empty()) throw Error(ErrorCode::ParseError, "label rule file has no entries");
    return rule;
}

LabelRule LabelRule::load(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoFailure, "cannot read label rule file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

std::optional<ClassLabel> LabelRule::classify_component(std::string_view dir_name) const {
    const auto name = lower(dir_name);
    for (const auto& e : entries_)
        if (e.exact && name == e.pattern) return e.label;
    for (const auto& e : entries_)
        if (!e.exact && name.find(e.pattern) != std::string::npos) return e.label;
    return std::nullopt;
}

// --- ingest ----------------------------------------------------------------

DatasetManifest ingest(const std::vector<fs::path>& source_dirs, const LabelRule& rule, const IngestOptions& options) {
    if (source_dirs.empty()) throw Error(ErrorCode::MissingDirectory, "no source directories given");

    DatasetManifest manifest;
    manifest.created_at = utc_timestamp();

    std::map<std::string, fs::path> seen_paths;  // canonical path -> source root
    std::set<std::string> seen_ids;
    std::vector<std::string> duplicates;
    std::vector<std::string> unreadable;
    std::vector<std::string> empty_classes;
    std::size_t unlabeled = 0;

    for (const auto& raw_root : source_dirs) {
        std::error_code ec;
        if (!fs::is_directory(raw_root, ec))
            throw Error(ErrorCode::MissingDirectory, "source directory does not exist: " + raw_root.string(),
                        {raw_root.string()});
        const fs::path root = fs::canonical(raw_root);

        // Labeled directories (with images anywhere beneath them) and per-class totals.
        std::map<fs::path, std::size_t> labeled_dirs;
        std::array<std::size_t, 2> per_class{0, 0};
        std::vector<ImageRecord> found;

        std::vector<fs::directory_entry> entries;
        for (auto it = fs::recursive_directory_iterator(root, fs::directory_options::follow_directory_symlink);
             it != fs::recursive_directory_iterator(); ++it)
            entries.push_back(*it);
        std::sort(entries.begin(), entries.end(),
                  [](const auto& a, const auto& b) { return a.path() < b.path(); });

        for (const auto& entry : entries) {
            const fs::path rel = fs::relative(entry.path(), root);
            if (entry.is_directory()) {
                if (rule.classify_component(entry.path().filename().string())) labeled_dirs.emplace(entry.path(), 0);
                continue;
            }
            if (!entry.is_regular_file() || !has_image_extension(entry.path(), options.extensions)) continue;

            std::optional<ClassLabel> label;
            const fs::path parent = entry.path().parent_path();
            for (fs::path walk = rel.parent_path(); !walk.empty(); walk = walk.parent_path()) {
                if ((label = rule.classify_component(walk.filename().string()))) break;
            }
            if (!label) label = rule.classify_component(root.filename().string());
            if (!label) {
                ++unlabeled;
                continue;
            }
            for (fs::path d = parent; d != root && d.has_relative_path(); d = d.parent_path())
                if (auto it = labeled_dirs.find(d); it != labeled_dirs.end()) ++it->second;
            ++per_class[static_cast<int>(*label)];

            const fs::path canonical = fs::weakly_canonical(entry.path());
            if (auto [it, inserted] = seen_paths.emplace(canonical.string(), root); !inserted) {
                duplicates.push_back(canonical.string());
                continue;
            }
            ImageRecord rec;
            rec.id = make_record_id(root, rel);
            rec.path = canonical;
            rec.label = *label;
            if (!seen_ids.insert(rec.id).second)
                throw Error(ErrorCode::DuplicateId, "two files map to record id '" + rec.id + "'", {canonical.string()});
            if (options.verify_decode) {
                try {
                    (void)decode_image(canonical);
                } catch (const Error&) {
                    unreadable.push_back(canonical.string());
                    continue;
                }
            }
            found.push_back(std::move(rec));
        }

        for (const auto& [dir, n] : labeled_dirs)
            if (n == 0) empty_classes.push_back(dir.string());
        for (auto label : kClasses)
            if (per_class[static_cast<int>(label)] == 0)
                empty_classes.push_back(root.string() + " (no " + to_string(label) + " images)");

        manifest.sources.push_back({root, found.size()});
        for (auto& r : found) manifest.records.push_back(std::move(r));
    }

    if (!duplicates.empty())
        throw Error(ErrorCode::DuplicatePath, std::to_string(duplicates.size()) + " path(s) appear in more than one source",
                    duplicates);
    if (!unreadable.empty())
        throw Error(ErrorCode::UnreadableImage, std::to_string(unreadable.size()) + " image(s) could not be decoded",
                    unreadable);
    if (!empty_classes.empty())
        throw Error(ErrorCode::EmptyClass, "labeled directories contributed no images", empty_classes);
    if (unlabeled > 0) spdlog::warn("ingest: skipped {} image(s) outside any labeled directory", unlabeled);

    sort_records(manifest.records);
    return manifest;
}

// --- split / carve -----------------------------------------------------------

std::size_t stratified_count(std::size_t class_count, double fraction) {
    return static_cast<std::size_t>(std::floor(static_cast<double>(class_count) * fraction + 0.5));
}

namespace {

// Chooses `fraction` of the ids in each class; the result depends only on
// the sorted ids and the seed.
std::set<std::string> stratified_pick(const std::vector<const ImageRecord*>& pool, double fraction,
                                      std::uint64_t seed, std::string_view purpose) {
    std::set<std::string> picked;
    for (auto label : kClasses) {
        std::vector<std::string> ids;
        for (const auto* r : pool)
            if (r->label == label) ids.push_back(r->id);
        std::sort(ids.begin(), ids.end());
        Rng rng(derive_seed(seed, purpose, {static_cast<std::uint64_t>(label)}));
        rng.shuffle(ids.begin(), ids.end());
        const std::size_t k = stratified_count(ids.size(), fraction);
        picked.insert(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(k));
    }
    return picked;
}

}  // namespace

DatasetManifest stratified_split(const DatasetManifest& manifest, double test_fraction, std::uint64_t seed) {
    if (manifest.split || std::any_of(manifest.records.begin(), manifest.records.end(), [](const auto& r) {
            return r.split != Split::UNASSIGNED || r.origin != Origin::ORIGINAL;
        }))
        throw Error(ErrorCode::AlreadySplit, "manifest already carries a split assignment");
    if (!(test_fraction > 0.0 && test_fraction < 1.0))
        throw Error(ErrorCode::FractionOutOfRange, "test fraction must lie in (0, 1), got " + std::to_string(test_fraction));

    std::vector<const ImageRecord*> pool;
    for (const auto& r : manifest.records) pool.push_back(&r);
    const auto test_ids = stratified_pick(pool, test_fraction, seed, "split");

    DatasetManifest out = manifest;
    for (auto& r : out.records) r.split = test_ids.count(r.id) ? Split::TEST : Split::TRAIN;
    out.split_seed = seed;
    out.split = SplitInfo{test_fraction, seed};
    return out;
}

DatasetManifest carve_internal_val(const DatasetManifest& manifest, double val_fraction, std::uint64_t seed) {
    if (!manifest.split) throw Error(ErrorCode::NoSplit, "carve requires a TRAIN/TEST split first");
    if (std::any_of(manifest.records.begin(), manifest.records.end(),
                    [](const auto& r) { return r.origin == Origin::AUGMENTED; }))
        throw Error(ErrorCode::AlreadyAugmented, "internal validation must be carved before augmentation");
    if (manifest.carve || std::any_of(manifest.records.begin(), manifest.records.end(),
                                      [](const auto& r) { return r.split == Split::INTERNAL_VAL; }))
        throw Error(ErrorCode::AlreadyCarved, "manifest already has an internal validation split");
    if (!(val_fraction >= 0.0 && val_fraction < 1.0))
        throw Error(ErrorCode::FractionOutOfRange, "val fraction must lie in [0, 1), got " + std::to_string(val_fraction));
    if (val_fraction == 0.0) {
        spdlog::warn("carve-val: fraction is 0, manifest left unchanged");
        return manifest;
    }

    std::vector<const ImageRecord*> pool;
    for (const auto& r : manifest.records)
        if (r.split == Split::TRAIN && r.origin == Origin::ORIGINAL) pool.push_back(&r);
    const auto val_ids = stratified_pick(pool, val_fraction, seed, "carve-val");

    DatasetManifest out = manifest;
    for (auto& r : out.records)
        if (val_ids.count(r.id)) r.split = Split::INTERNAL_VAL;
    out.carve = CarveInfo{val_fraction, seed};
    return out;
}

// --- persistence -------------------------------------------------------------

namespace {

json record_to_json(const ImageRecord& r) {
    json j = {{"id", r.id},
              {"path", r.path.generic_string()},
              {"label", to_string(r.label)},
              {"split", to_string(r.split)},
              {"origin", to_string(r.origin)}};
    if (r.parent_id) j["parent_id"] = *r.parent_id;
    if (r.aug_seed) j["aug_seed"] = *r.aug_seed;
    return j;
}

ImageRecord record_from_json(const json& j) {
    ImageRecord r;
    r.id = j.at("id").get<std::string>();
    r.path = j.at("path").get<std::string>();
    r.label = parse_label(j.at("label").get<std::string>());
    r.split = parse_split(j.at("split").get<std::string>());
    r.origin = parse_origin(j.at("origin").get<std::string>());
    if (j.contains("parent_id")) r.parent_id = j["parent_id"].get<std::string>();
    if (j.contains("aug_seed")) r.aug_seed = j["aug_seed"].get<std::uint64_t>();
    return r;
}

}  // namespace

void save_manifest(const DatasetManifest& m, const fs::path& path) {
    json header = {{"schema", "leukopipe.manifest"},
                   {"schema_version", DatasetManifest::kSchemaVersion},
                   {"created_at", m.created_at},
                   {"split_seed", m.split_seed},
                   {"record_count", m.records.size()}};
    header["sources"] = json::array();
    for (const auto& s : m.sources)
        header["sources"].push_back({{"root", s.root.generic_string()}, {"image_count", s.image_count}});
    header["split"] = m.split ? json{{"test_fraction", m.split->test_fraction}, {"seed", m.split->seed}} : json(nullptr);
    header["carve"] = m.carve ? json{{"val_fraction", m.carve->val_fraction}, {"seed", m.carve->seed}} : json(nullptr);
    header["balance"] = m.balance ? json{{"target", m.balance->target},
                                         {"global_seed", m.balance->global_seed},
                                         {"sampling", m.balance->sampling}}
                                  : json(nullptr);

    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(ErrorCode::IoFailure, "cannot write manifest " + path.string());
        out << header.dump() << '\n';
        for (const auto& r : m.records) out << record_to_json(r).dump() << '\n';
        out.flush();
        if (!out) throw Error(ErrorCode::IoFailure, "short write on manifest " + path.string());
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) throw Error(ErrorCode::IoFailure, "cannot replace " + path.string() + ": " + ec.message());
}

DatasetManifest load_manifest(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoFailure, "cannot open manifest " + path.string());

    std::string line;
    if (!std::getline(in, line) || line.empty())
        throw Error(ErrorCode::SchemaVersionMismatch, path.string() + " has no manifest header");
    json header;
    try {
        header = json::parse(line);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::SchemaVersionMismatch, path.string() + ": unreadable header: " + e.what());
    }
    if (!header.is_object() || header.value("schema", "") != "leukopipe.manifest" ||
        header.value("schema_version", -1) != DatasetManifest::kSchemaVersion)
        throw Error(ErrorCode::SchemaVersionMismatch,
                    path.string() + ": expected leukopipe.manifest schema version " +
                        std::to_string(DatasetManifest::kSchemaVersion));

    DatasetManifest m;
    try {
        m.created_at = header.at("created_at").get<std::string>();
        m.split_seed = header.at("split_seed").get<std::uint64_t>();
        for (const auto& s : header.at("sources"))
            m.sources.push_back({s.at("root").get<std::string>(), s.at("image_count").get<std::size_t>()});
        if (const auto& s = header.at("split"); !s.is_null())
            m.split = SplitInfo{s.at("test_fraction").get<double>(), s.at("seed").get<std::uint64_t>()};
        if (const auto& c = header.at("carve"); !c.is_null())
            m.carve = CarveInfo{c.at("val_fraction").get<double>(), c.at("seed").get<std::uint64_t>()};
        if (const auto& b = header.at("balance"); !b.is_null())
            m.balance = BalanceInfo{b.at("target").get<std::size_t>(), b.at("global_seed").get<std::uint64_t>(),
                                    b.at("sampling").get<std::string>()};

        const auto expected = header.at("record_count").get<std::size_t>();
        int lineno = 1;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.empty()) continue;
            try {
                m.records.push_back(record_from_json(json::parse(line)));
            } catch (const json::exception& e) {
                throw Error(ErrorCode::ParseError, path.string() + ":" + std::to_string(lineno) + ": " + e.what());
            }
        }
        if (m.records.size() != expected)
            throw Error(ErrorCode::ParseError, path.string() + ": expected " + std::to_string(expected) +
                                                   " records, found " + std::to_string(m.records.size()) +
                                                   " (truncated file?)");
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
    }

    validate_manifest(m, {.check_paths = false});
    return m;
}

void validate_manifest(const DatasetManifest& m, const ValidateOptions& options) {
    std::vector<std::string> problems;
    std::map<std::string, const ImageRecord*> by_id;
    for (const auto& r : m.records)
        if (!by_id.emplace(r.id, &r).second) problems.push_back(r.id + ": duplicate id");

    for (const auto& r : m.records) {
        if (r.origin == Origin::AUGMENTED) {
            if (!r.parent_id) {
                problems.push_back(r.id + ": augmented record without parent_id");
            } else {
                auto it = by_id.find(*r.parent_id);
                if (it == by_id.end())
                    problems.push_back(r.id + ": parent '" + *r.parent_id + "' not in manifest");
                else if (it->second->origin != Origin::ORIGINAL || it->second->label != r.label)
                    problems.push_back(r.id + ": parent must be an ORIGINAL record with the same label");
            }
            if (!r.aug_seed) problems.push_back(r.id + ": augmented record without aug_seed");
            if (r.split != Split::TRAIN) problems.push_back(r.id + ": augmented record outside TRAIN");
        } else if (r.parent_id || r.aug_seed) {
            problems.push_back(r.id + ": original record carries augmentation provenance");
        }
        if (options.check_paths) {
            std::error_code ec;
            if (!fs::exists(r.path, ec)) problems.push_back(r.id + ": missing file " + r.path.string());
        }
    }

    if (m.split) {
        for (auto label : kClasses) {
            std::size_t originals = 0;
            for (const auto& r : m.records)
                if (r.label == label && r.origin == Origin::ORIGINAL) ++originals;
            const std::size_t want = stratified_count(originals, m.split->test_fraction);
            const std::size_t got = m.count(label, Split::TEST);
            if (got + 1 < want || got > want + 1)
                problems.push_back("TEST has " + std::to_string(got) + " " + to_string(label) + " records, expected " +
                                   std::to_string(want));
        }
    }

    if (!problems.empty())
        throw Error(ErrorCode::InvariantViolation, std::to_string(problems.size()) + " manifest invariant violation(s)",
                    problems);
}

std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

}  // namespace leukopipe
