#include "leukopipe/config.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>

#include "json.hpp"
#include "leukopipe/error.hpp"
#include "leukopipe/hashing.hpp"

extern char** environ;

namespace leukopipe {

using nlohmann::json;

namespace {

const std::vector<std::string> kSections = {"dataset", "split", "augment", "preprocess", "model", "train", "report"};

json interval_json(const Interval& iv) { return json::array({iv.lo, iv.hi}); }

Interval interval_from(const json& j, const char* key) {
    const json& v = j.at(key);
    if (!v.is_array() || v.size() != 2) throw Error(ErrorCode::ConfigInvalid, std::string(key) + " must be [lo, hi]");
    return {v[0].get<double>(), v[1].get<double>()};
}

json aug_json(const AugmentationConfig& c) {
    return {{"hflip_p", c.hflip_p},
            {"vflip_p", c.vflip_p},
            {"rotation_deg", c.rotation_deg},
            {"jitter_brightness", c.jitter_brightness},
            {"jitter_contrast", c.jitter_contrast},
            {"jitter_saturation", c.jitter_saturation},
            {"jitter_hue", c.jitter_hue},
            {"crop_scale", interval_json(c.crop_scale)},
            {"crop_ratio", interval_json(c.crop_ratio)},
            {"crop_size", c.crop_size},
            {"affine_translate", c.affine_translate},
            {"affine_scale", interval_json(c.affine_scale)},
            {"affine_shear_deg", c.affine_shear_deg},
            {"blur_kernel", c.blur_kernel},
            {"blur_sigma", interval_json(c.blur_sigma)},
            {"sharp_factor", c.sharp_factor},
            {"sharp_p", c.sharp_p},
            {"persp_distortion", c.persp_distortion},
            {"persp_p", c.persp_p}};
}

json train_json(const TrainConfig& t) {
    return {{"batch_size", t.batch_size},
            {"learning_rate", t.learning_rate},
            {"max_epochs", t.max_epochs},
            {"early_stop_patience", t.early_stop_patience},
            {"improvement_tolerance", t.improvement_tolerance},
            {"prefetch_batches", t.prefetch_batches}};
}

json path_or_null(const std::optional<std::filesystem::path>& p) { return p ? json(p->string()) : json(nullptr); }

json to_json(const RunConfig& c) {
    json sources = json::array();
    for (const auto& s : c.dataset.sources) sources.push_back(s.string());
    json augment = aug_json(c.augment.transforms);
    augment["target"] = c.augment.target;
    augment["sampling"] = to_string(c.augment.sampling);
    augment["workers"] = c.augment.workers;
    return {{"seed", c.seed},
            {"run_dir", c.run_dir.string()},
            {"dataset",
             {{"sources", sources}, {"label_rules", path_or_null(c.dataset.label_rules)}, {"extensions", c.dataset.extensions}}},
            {"split", {{"test_fraction", c.split.test_fraction}, {"val_fraction", c.split.val_fraction}}},
            {"augment", augment},
            {"preprocess", {{"mean", c.preprocess.mean}, {"std", c.preprocess.std}}},
            {"model",
             {{"arch", to_string(c.model.arch)},
              {"pretrained", c.model.pretrained},
              {"freeze_backbone", c.model.freeze_backbone},
              {"head_seed", c.model.head_seed ? json(*c.model.head_seed) : json(nullptr)},
              {"weights_dir", c.model.weights_dir.string()}}},
            {"train", train_json(c.train)},
            {"report",
             {{"literature", path_or_null(c.report.literature)},
              {"format", c.report.format == TableFormat::CSV ? "csv" : "md"}}}};
}

RunConfig from_json(const json& j) {
    RunConfig c;
    c.seed = j.at("seed").get<std::uint64_t>();
    c.run_dir = j.at("run_dir").get<std::string>();

    const json& d = j.at("dataset");
    for (const auto& s : d.at("sources")) c.dataset.sources.emplace_back(s.get<std::string>());
    if (!d.at("label_rules").is_null()) c.dataset.label_rules = d.at("label_rules").get<std::string>();
    c.dataset.extensions = d.at("extensions").get<std::vector<std::string>>();

    c.split.test_fraction = j.at("split").at("test_fraction").get<double>();
    c.split.val_fraction = j.at("split").at("val_fraction").get<double>();

    const json& a = j.at("augment");
    c.augment.target = a.at("target").get<std::size_t>();
    c.augment.sampling = parse_sampling(a.at("sampling").get<std::string>());
    c.augment.workers = a.at("workers").get<unsigned>();
    auto& t = c.augment.transforms;
    t.hflip_p = a.at("hflip_p").get<double>();
    t.vflip_p = a.at("vflip_p").get<double>();
    t.rotation_deg = a.at("rotation_deg").get<double>();
    t.jitter_brightness = a.at("jitter_brightness").get<double>();
    t.jitter_contrast = a.at("jitter_contrast").get<double>();
    t.jitter_saturation = a.at("jitter_saturation").get<double>();
    t.jitter_hue = a.at("jitter_hue").get<double>();
    t.crop_scale = interval_from(a, "crop_scale");
    t.crop_ratio = interval_from(a, "crop_ratio");
    t.crop_size = a.at("crop_size").get<int>();
    t.affine_translate = a.at("affine_translate").get<double>();
    t.affine_scale = interval_from(a, "affine_scale");
    t.affine_shear_deg = a.at("affine_shear_deg").get<double>();
    t.blur_kernel = a.at("blur_kernel").get<int>();
    t.blur_sigma = interval_from(a, "blur_sigma");
    t.sharp_factor = a.at("sharp_factor").get<double>();
    t.sharp_p = a.at("sharp_p").get<double>();
    t.persp_distortion = a.at("persp_distortion").get<double>();
    t.persp_p = a.at("persp_p").get<double>();

    c.preprocess.mean = j.at("preprocess").at("mean").get<ChannelTriple>();
    c.preprocess.std = j.at("preprocess").at("std").get<ChannelTriple>();

    const json& m = j.at("model");
    c.model.arch = parse_arch(m.at("arch").get<std::string>());
    c.model.pretrained = m.at("pretrained").get<bool>();
    c.model.freeze_backbone = m.at("freeze_backbone").get<bool>();
    if (!m.at("head_seed").is_null()) c.model.head_seed = m.at("head_seed").get<std::uint64_t>();
    c.model.weights_dir = m.at("weights_dir").get<std::string>();

    const json& tr = j.at("train");
    c.train.batch_size = tr.at("batch_size").get<int>();
    c.train.learning_rate = tr.at("learning_rate").get<double>();
    c.train.max_epochs = tr.at("max_epochs").get<int>();
    c.train.early_stop_patience = tr.at("early_stop_patience").get<int>();
    c.train.improvement_tolerance = tr.at("improvement_tolerance").get<double>();
    c.train.prefetch_batches = tr.at("prefetch_batches").get<int>();

    const json& r = j.at("report");
    if (!r.at("literature").is_null()) c.report.literature = r.at("literature").get<std::string>();
    c.report.format = parse_table_format(r.at("format").get<std::string>());
    return c;
}

/// Overlays `layer` onto `base`; every key must already exist in `base`.
void merge_into(json& base, const json& layer, const std::string& where, std::vector<std::string>& problems) {
    if (!layer.is_object()) {
        problems.push_back(where + " must be an object");
        return;
    }
    for (const auto& [key, value] : layer.items()) {
        const std::string path = where.empty() ? key : where + "." + key;
        if (!base.contains(key)) {
            problems.push_back("unknown key '" + path + "'");
            continue;
        }
        if (base[key].is_object()) merge_into(base[key], value, path, problems);
        else base[key] = value;
    }
}

std::string resolve_path(const std::string& p, const std::filesystem::path& base_dir) {
    if (p.empty()) return p;
    const std::filesystem::path path(p);
    if (path.is_absolute() || base_dir.empty()) return path.lexically_normal().string();
    return (base_dir / path).lexically_normal().string();
}

/// Rewrites the path-valued keys present in `layer` relative to `base_dir`.
void resolve_layer_paths(json& layer, const std::filesystem::path& base_dir) {
    auto fix = [&](json& v) {
        if (v.is_string()) v = resolve_path(v.get<std::string>(), base_dir);
    };
    if (!layer.is_object()) return;
    if (layer.contains("run_dir")) fix(layer["run_dir"]);
    if (layer.contains("dataset") && layer["dataset"].is_object()) {
        json& d = layer["dataset"];
        if (d.contains("sources") && d["sources"].is_array())
            for (auto& s : d["sources"]) fix(s);
        if (d.contains("label_rules")) fix(d["label_rules"]);
    }
    if (layer.contains("model") && layer["model"].is_object() && layer["model"].contains("weights_dir"))
        fix(layer["model"]["weights_dir"]);
    if (layer.contains("report") && layer["report"].is_object() && layer["report"].contains("literature"))
        fix(layer["report"]["literature"]);
}

/// A scalar override value: JSON when it parses, else a string; arrays also
/// accept comma-separated lists.
json override_value(const std::string& text, const json& current) {
    try {
        json v = json::parse(text);
        if (!current.is_string() || v.is_string()) return v;
    } catch (const json::exception&) {
    }
    if (current.is_array()) {
        json arr = json::array();
        std::size_t pos = 0;
        while (pos <= text.size()) {
            const auto comma = text.find(',', pos);
            const std::string item = text.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
            try {
                arr.push_back(json::parse(item));
            } catch (const json::exception&) {
                arr.push_back(item);
            }
            if (comma == std::string::npos) break;
            pos = comma + 1;
        }
        return arr;
    }
    return text;
}

void apply_override(json& j, const std::string& section, const std::string& key, const std::string& value,
                    const std::string& origin, std::vector<std::string>& problems) {
    json* target = nullptr;
    if (section == "global") {
        if (key == "seed" || key == "run_dir") target = &j[key];
    } else if (j.contains(section) && j[section].contains(key)) {
        target = &j[section][key];
    }
    if (!target) {
        problems.push_back(origin + ": unknown key '" + section + "." + key + "'");
        return;
    }
    json v = override_value(value, *target);
    if (section == "global" && key == "run_dir" && v.is_string()) v = resolve_path(v.get<std::string>(), std::filesystem::current_path());
    if (section == "dataset" && key == "sources" && v.is_array())
        for (auto& s : v)
            if (s.is_string()) s = resolve_path(s.get<std::string>(), std::filesystem::current_path());
    if ((key == "label_rules" || key == "weights_dir" || key == "literature") && v.is_string())
        v = resolve_path(v.get<std::string>(), std::filesystem::current_path());
    *target = v;
}

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    return s;
}

}  // namespace

std::uint64_t RunConfig::split_seed() const { return derive_seed(seed, "stage:split"); }
std::uint64_t RunConfig::carve_seed() const { return derive_seed(seed, "stage:carve-val"); }
std::uint64_t RunConfig::balance_seed() const { return derive_seed(seed, "stage:augment"); }
std::uint64_t RunConfig::train_seed() const { return derive_seed(seed, "stage:train"); }
std::uint64_t RunConfig::head_seed() const { return model.head_seed ? *model.head_seed : derive_seed(seed, "stage:head"); }

ModelSpec RunConfig::model_spec() const {
    ModelSpec s = ModelSpec::make(model.arch, model.pretrained, head_seed());
    s.freeze_backbone = model.freeze_backbone;
    return s;
}

TrainConfig RunConfig::train_config() const {
    TrainConfig t = train;
    t.global_seed = train_seed();
    return t;
}

void RunConfig::validate() const {
    std::vector<std::string> problems;
    if (run_dir.empty()) problems.push_back("run_dir must be set");
    if (!(split.test_fraction > 0.0 && split.test_fraction < 1.0)) problems.push_back("split.test_fraction must lie in (0, 1)");
    if (!(split.val_fraction >= 0.0 && split.val_fraction < 1.0)) problems.push_back("split.val_fraction must lie in [0, 1)");
    if (augment.workers < 1) problems.push_back("augment.workers must be >= 1");
    if (augment.transforms.crop_size != kModelSide)
        problems.push_back("augment.crop_size must equal the model input side " + std::to_string(kModelSide));
    for (int c = 0; c < 3; ++c)
        if (preprocess.std[c] == 0.0f) problems.push_back("preprocess.std components must be nonzero");
    if (dataset.extensions.empty()) problems.push_back("dataset.extensions must not be empty");
    auto absorb = [&](auto&& check) {
        try {
            check();
        } catch (const Error& e) {
            if (e.details().empty()) problems.push_back(e.what());
            problems.insert(problems.end(), e.details().begin(), e.details().end());
        }
    };
    absorb([&] { augment.transforms.validate(); });
    absorb([&] { train_config().validate(); });
    if (!problems.empty()) throw Error(ErrorCode::ConfigInvalid, "invalid run config", problems);
}

EnvMap leukopipe_environment() {
    EnvMap env;
    for (char** e = environ; e && *e; ++e) {
        const std::string kv(*e);
        const auto eq = kv.find('=');
        if (eq == std::string::npos) continue;
        if (kv.rfind("LEUKOPIPE_", 0) == 0) env[kv.substr(0, eq)] = kv.substr(eq + 1);
    }
    return env;
}

RunConfig parse_run_config(const std::string& json_text, const std::filesystem::path& base_dir, const EnvMap& env,
                           const std::vector<std::string>& overrides) {
    std::vector<std::string> problems;
    json merged = to_json(RunConfig{});
    if (!json_text.empty()) {
        json file;
        try {
            file = json::parse(json_text, nullptr, true, true);
        } catch (const json::exception& e) {
            throw Error(ErrorCode::ConfigInvalid, std::string("config is not valid JSON: ") + e.what());
        }
        resolve_layer_paths(file, base_dir);
        merge_into(merged, file, "", problems);
    }
    for (const auto& [name, value] : env) {
        if (name.rfind("LEUKOPIPE_", 0) != 0) continue;
        const std::string rest = lower(name.substr(10));
        std::string section;
        for (const auto& s : kSections)
            if (rest.rfind(s + "_", 0) == 0) section = s;
        if (rest.rfind("global_", 0) == 0) section = "global";
        if (section.empty()) continue;
        apply_override(merged, section, rest.substr(section.size() + 1), value, name, problems);
    }
    for (const auto& o : overrides) {
        const auto eq = o.find('=');
        const auto dot = o.find('.');
        if (eq == std::string::npos) {
            problems.push_back("override '" + o + "' is not key=value");
            continue;
        }
        if (dot == std::string::npos || dot > eq) apply_override(merged, "global", o.substr(0, eq), o.substr(eq + 1), o, problems);
        else apply_override(merged, o.substr(0, dot), o.substr(dot + 1, eq - dot - 1), o.substr(eq + 1), o, problems);
    }
    if (!problems.empty()) throw Error(ErrorCode::ConfigInvalid, "invalid run config", problems);

    RunConfig cfg;
    try {
        cfg = from_json(merged);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ConfigInvalid, std::string("config value has the wrong type: ") + e.what());
    } catch (const Error& e) {
        throw Error(ErrorCode::ConfigInvalid, e.what(), e.details());
    }
    cfg.validate();
    return cfg;
}

RunConfig load_run_config(const std::optional<std::filesystem::path>& file, const EnvMap& env,
                          const std::vector<std::string>& overrides) {
    std::string text;
    std::filesystem::path base = std::filesystem::current_path();
    if (file) {
        std::ifstream is(*file);
        if (!is) throw Error(ErrorCode::ConfigInvalid, "cannot read config file " + file->string());
        text.assign(std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>());
        base = std::filesystem::absolute(*file).parent_path();
    }
    return parse_run_config(text, base, env, overrides);
}

std::string resolved_json(const RunConfig& cfg) {
    json j = to_json(cfg);
    j["model"]["head_seed"] = cfg.head_seed();
    return j.dump(2) + "\n";
}

std::string train_config_digest(const RunConfig& cfg) {
    json j = train_json(cfg.train_config());
    j["global_seed"] = cfg.train_config().global_seed;
    j["model"] = to_json(cfg)["model"];
    j["model"]["head_seed"] = cfg.head_seed();
    j["preprocess"] = to_json(cfg)["preprocess"];
    return sha256_hex(j.dump());
}

std::string aug_config_digest(const RunConfig& cfg) {
    json j = to_json(cfg)["augment"];
    j.erase("workers");
    j["balance_seed"] = cfg.balance_seed();
    return sha256_hex(j.dump());
}

}  // namespace leukopipe
