#include "leukopipe/pipeline.hpp"

#include <algorithm>
#include <fstream>

#include <spdlog/spdlog.h>

#include "json.hpp"
#include "leukopipe/error.hpp"
#include "leukopipe/hashing.hpp"
#include "leukopipe/report.hpp"

namespace leukopipe {

using nlohmann::json;

std::string to_string(Stage stage) {
    switch (stage) {
        case Stage::INGEST: return "ingest";
        case Stage::SPLIT: return "split";
        case Stage::CARVE_VAL: return "carve-val";
        case Stage::AUGMENT: return "augment";
        case Stage::TRAIN: return "train";
        case Stage::EVAL: return "eval";
        case Stage::REPORT: return "report";
    }
    return "unknown";
}

std::vector<Stage> parse_stages(std::string_view text) {
    if (text.empty()) return {kAllStages.begin(), kAllStages.end()};
    std::vector<Stage> out;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto comma = text.find(',', pos);
        std::string name(text.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos));
        name.erase(0, name.find_first_not_of(' '));
        name.erase(name.find_last_not_of(' ') + 1);
        if (name == "carve_val") name = "carve-val";
        auto it = std::find_if(kAllStages.begin(), kAllStages.end(), [&](Stage s) { return to_string(s) == name; });
        if (it == kAllStages.end()) throw Error(ErrorCode::ConfigInvalid, "unknown stage '" + name + "'");
        if (std::find(out.begin(), out.end(), *it) == out.end()) out.push_back(*it);
        if (comma == std::string_view::npos) break;
        pos = comma + 1;
    }
    std::sort(out.begin(), out.end());
    return out;
}

RunPaths::RunPaths(std::filesystem::path r)
    : root(std::move(r)),
      manifest_dir(root / "manifest"),
      augmented_dir(root / "augmented"),
      checkpoints_dir(root / "checkpoints"),
      logs_dir(root / "logs"),
      reports_dir(root / "reports"),
      stages_dir(root / ".stages") {}

void RunPaths::create() const {
    for (const auto& d : {root, manifest_dir, augmented_dir, checkpoints_dir, logs_dir, reports_dir, stages_dir})
        std::filesystem::create_directories(d);
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
    return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

void write_file_if_changed(const std::filesystem::path& path, const std::string& text) {
    if (std::filesystem::exists(path) && read_file(path) == text) return;
    const auto tmp = std::filesystem::path(path.string() + ".tmp");
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw Error(ErrorCode::IoFailure, "cannot write " + tmp.string());
        os << text;
        if (!os.flush()) throw Error(ErrorCode::IoFailure, "write failed: " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

std::string display_name(Arch arch) {
    switch (arch) {
        case Arch::RESNET50: return "ResNet50";
        case Arch::RESNET101: return "ResNet101";
        case Arch::EFFNET_B0: return "EfficientNet-B0";
        case Arch::EFFNET_B1: return "EfficientNet-B1";
        case Arch::EFFNET_B3: return "EfficientNet-B3";
        case Arch::TINY_CNN: return "TinyCNN";
    }
    return "unknown";
}

EvalResult evaluate_checkpoint(const std::filesystem::path& checkpoint_base, const DatasetManifest& manifest,
                               int batch_size, const PreprocessSection& preprocess,
                               const std::optional<std::string>& train_digest,
                               const std::optional<std::string>& aug_digest) {
    auto loaded = load_checkpoint(checkpoint_base, train_digest, aug_digest);
    std::vector<ImageRecord> test;
    for (const auto& r : manifest.records)
        if (r.split == Split::TEST) test.push_back(r);
    if (test.empty()) throw Error(ErrorCode::EmptySplit, "manifest has no TEST records");
    EvalResult out;
    out.predictions = predict_records(*loaded.model, test, batch_size, preprocess.mean, preprocess.std);
    out.metrics = evaluate(out.predictions);
    return out;
}

std::string write_reports(const std::filesystem::path& reports_dir, const std::string& model_name,
                          const MetricsReport& metrics, const std::filesystem::path& literature, TableFormat format) {
    std::filesystem::create_directories(reports_dir);
    const std::vector<MetricsRow> rows = {{model_name, metrics}};
    const auto lit = load_literature(literature);
    const std::string metrics_csv = emit_metrics_table(rows, TableFormat::CSV);
    const std::string metrics_md = emit_metrics_table(rows, TableFormat::MARKDOWN);
    const std::string cmp_csv = emit_comparison(metrics.macro_f1, lit, TableFormat::CSV);
    const std::string cmp_md = emit_comparison(metrics.macro_f1, lit, TableFormat::MARKDOWN);
    write_file_if_changed(reports_dir / "metrics.csv", metrics_csv);
    write_file_if_changed(reports_dir / "metrics.md", metrics_md);
    write_file_if_changed(reports_dir / "comparison.csv", cmp_csv);
    write_file_if_changed(reports_dir / "comparison.md", cmp_md);
    return format == TableFormat::CSV ? metrics_csv + "\n" + cmp_csv : metrics_md + "\n" + cmp_md;
}

namespace {

/// Per-stage fingerprints chained over the config sections each stage reads.
std::map<Stage, std::string> fingerprints(const RunConfig& cfg) {
    const json resolved = json::parse(resolved_json(cfg));
    std::map<Stage, std::string> out;
    std::string chain;
    auto add = [&](Stage s, const json& part) {
        chain = sha256_hex(chain + to_string(s) + part.dump());
        out[s] = chain;
    };
    add(Stage::INGEST, resolved["dataset"]);
    add(Stage::SPLIT, json{{"test_fraction", cfg.split.test_fraction}, {"seed", cfg.split_seed()}});
    add(Stage::CARVE_VAL, json{{"val_fraction", cfg.split.val_fraction}, {"seed", cfg.carve_seed()}});
    add(Stage::AUGMENT, json{{"digest", aug_config_digest(cfg)}});
    add(Stage::TRAIN, json{{"digest", train_config_digest(cfg)}});
    add(Stage::EVAL, json{{"digest", train_config_digest(cfg)}});
    add(Stage::REPORT, resolved["report"]);
    return out;
}

std::filesystem::path stage_input(const RunPaths& p, Stage s) {
    switch (s) {
        case Stage::INGEST: return {};
        case Stage::SPLIT: return p.ingested_manifest();
        case Stage::CARVE_VAL: return p.split_manifest();
        case Stage::AUGMENT: return p.carved_manifest();
        case Stage::TRAIN: return p.balanced_manifest();
        case Stage::EVAL: return p.checkpoint_base().string() + ".json";
        case Stage::REPORT: return p.metrics_json();
    }
    return {};
}

std::filesystem::path stage_output(const RunPaths& p, Stage s) {
    switch (s) {
        case Stage::INGEST: return p.ingested_manifest();
        case Stage::SPLIT: return p.split_manifest();
        case Stage::CARVE_VAL: return p.carved_manifest();
        case Stage::AUGMENT: return p.balanced_manifest();
        case Stage::TRAIN: return p.checkpoint_base().string() + ".json";
        case Stage::EVAL: return p.metrics_json();
        case Stage::REPORT: return p.reports_dir / "comparison.md";
    }
    return {};
}

std::string prereq_message(Stage s) {
    switch (s) {
        case Stage::SPLIT: return "split requires an ingested manifest";
        case Stage::CARVE_VAL: return "carve-val requires a split manifest";
        case Stage::AUGMENT: return "augment requires a manifest with an internal validation carve";
        case Stage::TRAIN: return "train requires a balanced manifest";
        case Stage::EVAL: return "eval requires a trained checkpoint";
        case Stage::REPORT: return "report requires evaluation metrics";
        default: return "missing prerequisite";
    }
}

void run_stage(Stage s, const RunConfig& cfg, const RunPaths& p) {
    switch (s) {
        case Stage::INGEST: {
            if (cfg.dataset.sources.empty()) throw Error(ErrorCode::ConfigInvalid, "dataset.sources is empty");
            const LabelRule rule = cfg.dataset.label_rules ? LabelRule::load(*cfg.dataset.label_rules) : LabelRule::cnmc_default();
            IngestOptions opts;
            opts.extensions = cfg.dataset.extensions;
            auto m = ingest(cfg.dataset.sources, rule, opts);
            save_manifest(m, p.ingested_manifest());
            break;
        }
        case Stage::SPLIT:
            save_manifest(stratified_split(load_manifest(p.ingested_manifest()), cfg.split.test_fraction, cfg.split_seed()),
                          p.split_manifest());
            break;
        case Stage::CARVE_VAL:
            save_manifest(carve_internal_val(load_manifest(p.split_manifest()), cfg.split.val_fraction, cfg.carve_seed()),
                          p.carved_manifest());
            break;
        case Stage::AUGMENT: {
            const auto carved = load_manifest(p.carved_manifest());
            const auto plan = plan_balance(carved, cfg.augment.target, cfg.augment.sampling);
            const auto balanced = execute_balance(carved, plan, cfg.augment.transforms, cfg.balance_seed(),
                                                  BalanceOptions{p.augmented_dir, cfg.augment.workers});
            save_manifest(balanced, p.balanced_manifest());
            break;
        }
        case Stage::TRAIN: {
            const auto manifest = load_manifest(p.balanced_manifest());
            if (!manifest.balance) throw Error(ErrorCode::StagePrereqMissing, prereq_message(Stage::TRAIN));
            validate_manifest(manifest);
            auto model = build_model(cfg.model_spec(), BuildOptions{cfg.model.weights_dir});
            TrainOptions opts;
            opts.checkpoint_base = p.checkpoint_base();
            opts.train_config_digest = train_config_digest(cfg);
            opts.aug_config_digest = aug_config_digest(cfg);
            opts.mean = cfg.preprocess.mean;
            opts.std = cfg.preprocess.std;
            const auto result = train_loop(*model, manifest, cfg.train_config(), opts);
            write_file_if_changed(p.train_log(), result.log.to_json() + "\n");
            break;
        }
        case Stage::EVAL: {
            const auto manifest = load_manifest(p.balanced_manifest());
            const auto result = evaluate_checkpoint(p.checkpoint_base(), manifest, cfg.train.batch_size, cfg.preprocess,
                                                    train_config_digest(cfg), aug_config_digest(cfg));
            write_predictions(result.predictions, p.predictions());
            write_file_if_changed(p.metrics_json(), report_to_json(result.metrics) + "\n");
            spdlog::info("test accuracy {:.4f}, macro F1 {:.4f}", result.metrics.accuracy, result.metrics.macro_f1);
            break;
        }
        case Stage::REPORT: {
            const auto metrics = report_from_json(read_file(p.metrics_json()));
            const auto lit = cfg.report.literature ? *cfg.report.literature : default_literature_path();
            write_reports(p.reports_dir, display_name(cfg.model.arch), metrics, lit, cfg.report.format);
            break;
        }
    }
}

}  // namespace

PipelineResult run_pipeline(const RunConfig& cfg, const std::vector<Stage>& requested, bool force) {
    cfg.validate();
    const RunPaths paths(cfg.run_dir);
    paths.create();
    write_file_if_changed(paths.config_resolved(), resolved_json(cfg));
    const auto prints = fingerprints(cfg);

    std::vector<Stage> stages = requested;
    std::sort(stages.begin(), stages.end());
    PipelineResult result;
    for (Stage s : stages) {
        const auto marker = paths.marker(s);
        const json expected = {{"stage", to_string(s)}, {"fingerprint", prints.at(s)}};
        const bool done = std::filesystem::exists(marker) && std::filesystem::exists(stage_output(paths, s)) &&
                          read_file(marker) == expected.dump() + "\n";
        if (done && !force) {
            spdlog::info("[{}] up to date, skipping", to_string(s));
            result.stages.emplace_back(s, StageOutcome::SKIPPED);
            continue;
        }
        const auto input = stage_input(paths, s);
        if (!input.empty() && !std::filesystem::exists(input))
            throw Error(ErrorCode::StagePrereqMissing, prereq_message(s), {input.string()}).with_stage(to_string(s));
        spdlog::info("[{}] running", to_string(s));
        for (Stage later : kAllStages)
            if (later >= s) std::filesystem::remove(paths.marker(later));
        try {
            run_stage(s, cfg, paths);
        } catch (const Error& e) {
            throw e.with_stage(to_string(s));
        }
        write_file_if_changed(marker, expected.dump() + "\n");
        result.stages.emplace_back(s, StageOutcome::RAN);
    }
    return result;
}

}  // namespace leukopipe
