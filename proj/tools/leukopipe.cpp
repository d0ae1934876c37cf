#include <iostream>
#include <optional>

#include <spdlog/sinks/basic_file_sink.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "leukopipe/augment.hpp"
#include "leukopipe/config.hpp"
#include "leukopipe/dataset.hpp"
#include "leukopipe/error.hpp"
#include "leukopipe/pipeline.hpp"
#include "leukopipe/report.hpp"
#include "leukopipe/synthetic.hpp"
#include "leukopipe/train.hpp"

namespace fs = std::filesystem;
using namespace leukopipe;

namespace {

void use_log_file(const fs::path& path) {
    fs::create_directories(path.parent_path());
    auto console = std::make_shared<spdlog::sinks::stderr_color_sink_mt>();
    auto file = std::make_shared<spdlog::sinks::basic_file_sink_mt>(path.string());
    auto logger = std::make_shared<spdlog::logger>("leukopipe", spdlog::sinks_init_list{console, file});
    logger->set_level(spdlog::default_logger()->level());
    spdlog::set_default_logger(logger);
}

void print_counts(const DatasetManifest& m) {
    for (Split s : {Split::UNASSIGNED, Split::TRAIN, Split::INTERNAL_VAL, Split::TEST}) {
        const auto hem = m.count(ClassLabel::HEM, s), all = m.count(ClassLabel::ALL, s);
        if (hem + all == 0) continue;
        std::cout << to_string(s) << ": HEM " << hem << ", ALL " << all << "\n";
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Blood-smear transfer-learning pipeline (Hem vs. ALL)"};
    app.require_subcommand(1);
    std::string log_level = "info";
    app.add_option("--log-level", log_level, "trace, debug, info, warn, error")->capture_default_str();

    // ingest
    auto* ingest_cmd = app.add_subcommand("ingest", "Scan source directories into a manifest");
    std::vector<std::string> sources;
    std::string labels_file, ingest_out;
    bool no_verify = false;
    ingest_cmd->add_option("--src", sources, "Source directory (repeatable)")->required();
    ingest_cmd->add_option("--labels", labels_file, "Label rule file (default: hem/all directory names)");
    ingest_cmd->add_option("--out", ingest_out, "Output manifest")->required();
    ingest_cmd->add_flag("--no-verify", no_verify, "Skip full decoding of every image");

    // split
    auto* split_cmd = app.add_subcommand("split", "Stratified TRAIN/TEST split");
    std::string split_manifest, split_out;
    double test_frac = 0.1;
    std::uint64_t split_seed = 0;
    split_cmd->add_option("--manifest", split_manifest)->required();
    split_cmd->add_option("--test-frac", test_frac)->capture_default_str();
    split_cmd->add_option("--seed", split_seed)->required();
    split_cmd->add_option("--out", split_out, "Output manifest (default: overwrite input)");

    // carve-val
    auto* carve_cmd = app.add_subcommand("carve-val", "Move a stratified share of TRAIN originals to INTERNAL_VAL");
    std::string carve_manifest, carve_out;
    double val_frac = 0.1;
    std::uint64_t carve_seed = 0;
    carve_cmd->add_option("--manifest", carve_manifest)->required();
    carve_cmd->add_option("--val-frac", val_frac)->capture_default_str();
    carve_cmd->add_option("--seed", carve_seed)->required();
    carve_cmd->add_option("--out", carve_out, "Output manifest (default: overwrite input)");

    // augment
    auto* aug_cmd = app.add_subcommand("augment", "Balance TRAIN classes with augmented copies");
    std::string aug_manifest, aug_out_dir, aug_out, aug_config, sampling = "round_robin";
    std::size_t target = 10000;
    std::uint64_t aug_seed = 0;
    unsigned workers = 1;
    aug_cmd->add_option("--manifest", aug_manifest)->required();
    aug_cmd->add_option("--target", target)->capture_default_str();
    aug_cmd->add_option("--seed", aug_seed)->required();
    aug_cmd->add_option("--out-dir", aug_out_dir, "Directory for generated PNGs")->required();
    aug_cmd->add_option("--workers", workers)->capture_default_str();
    aug_cmd->add_option("--sampling", sampling, "round_robin or uniform")->capture_default_str();
    aug_cmd->add_option("--config", aug_config, "Run config supplying augment.* parameters");
    aug_cmd->add_option("--out", aug_out, "Output manifest (default: overwrite input)");

    // train
    auto* train_cmd = app.add_subcommand("train", "Fine-tune a backbone on a balanced manifest");
    std::string train_manifest, train_config, train_arch, train_out;
    std::vector<std::string> train_sets;
    train_cmd->add_option("--manifest", train_manifest)->required();
    train_cmd->add_option("--config", train_config);
    train_cmd->add_option("--arch", train_arch, "resnet50, resnet101, effnet_b0, effnet_b1, effnet_b3, tiny_cnn");
    train_cmd->add_option("--out", train_out, "Run directory")->required();
    train_cmd->add_option("--set", train_sets, "Config override section.key=value (repeatable)");

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "Metrics on TEST records or on a prediction file");
    std::string eval_checkpoint, eval_manifest, eval_predictions, eval_out, eval_pred_out;
    int eval_batch = 32;
    eval_cmd->add_option("--checkpoint", eval_checkpoint, "Checkpoint base path (without extension)");
    eval_cmd->add_option("--manifest", eval_manifest);
    eval_cmd->add_option("--predictions", eval_predictions, "Prediction file to score directly");
    eval_cmd->add_option("--batch-size", eval_batch)->capture_default_str();
    eval_cmd->add_option("--out", eval_out, "Write metrics JSON here");
    eval_cmd->add_option("--write-predictions", eval_pred_out, "Write the prediction file here");

    // report
    auto* report_cmd = app.add_subcommand("report", "Metrics and comparison tables for a run");
    std::string report_run, report_compare, report_format = "md";
    report_cmd->add_option("--run", report_run)->required();
    report_cmd->add_option("--compare", report_compare, "Literature file (default: bundled)");
    report_cmd->add_option("--format", report_format, "csv or md")->capture_default_str();

    // run
    auto* run_cmd = app.add_subcommand("run", "Run pipeline stages from a config file");
    std::string run_config, run_stages;
    std::vector<std::string> run_sets;
    bool force = false;
    run_cmd->add_option("--config", run_config)->required();
    run_cmd->add_option("--stages", run_stages, "Comma-separated subset (default: all)");
    run_cmd->add_flag("--force", force, "Recompute completed stages");
    run_cmd->add_option("--set", run_sets, "Config override section.key=value (repeatable)");

    // synth
    auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic two-class blob dataset");
    std::string synth_out;
    SyntheticOptions synth;
    synth_cmd->add_option("--out", synth_out)->required();
    synth_cmd->add_option("--per-class", synth.per_class)->capture_default_str();
    synth_cmd->add_option("--side", synth.side)->capture_default_str();
    synth_cmd->add_option("--seed", synth.seed)->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : static_cast<int>(ExitStatus::ConfigError);
    }
    spdlog::set_level(spdlog::level::from_str(log_level));

    try {
        if (*ingest_cmd) {
            std::vector<fs::path> dirs(sources.begin(), sources.end());
            const LabelRule rule = labels_file.empty() ? LabelRule::cnmc_default() : LabelRule::load(labels_file);
            IngestOptions opts;
            opts.verify_decode = !no_verify;
            const auto m = ingest(dirs, rule, opts);
            save_manifest(m, ingest_out);
            print_counts(m);
        } else if (*split_cmd) {
            const auto m = stratified_split(load_manifest(split_manifest), test_frac, split_seed);
            save_manifest(m, split_out.empty() ? split_manifest : split_out);
            print_counts(m);
        } else if (*carve_cmd) {
            const auto m = carve_internal_val(load_manifest(carve_manifest), val_frac, carve_seed);
            save_manifest(m, carve_out.empty() ? carve_manifest : carve_out);
            print_counts(m);
        } else if (*aug_cmd) {
            AugmentationConfig cfg;
            if (!aug_config.empty()) cfg = load_run_config(fs::path(aug_config), leukopipe_environment()).augment.transforms;
            const auto m = load_manifest(aug_manifest);
            const auto plan = plan_balance(m, target, parse_sampling(sampling));
            const auto out = execute_balance(m, plan, cfg, aug_seed, BalanceOptions{aug_out_dir, workers});
            save_manifest(out, aug_out.empty() ? aug_manifest : aug_out);
            print_counts(out);
        } else if (*train_cmd) {
            std::vector<std::string> sets = train_sets;
            sets.push_back("run_dir=" + fs::absolute(train_out).string());
            if (!train_arch.empty()) sets.push_back("model.arch=" + train_arch);
            const auto cfg = load_run_config(train_config.empty() ? std::nullopt : std::optional<fs::path>(train_config),
                                             leukopipe_environment(), sets);
            const RunPaths paths(cfg.run_dir);
            paths.create();
            use_log_file(paths.logs_dir / "train.log");
            write_file_if_changed(paths.config_resolved(), resolved_json(cfg));
            const auto manifest = load_manifest(train_manifest);
            validate_manifest(manifest);
            auto model = build_model(cfg.model_spec(), BuildOptions{cfg.model.weights_dir});
            TrainOptions opts;
            opts.checkpoint_base = paths.checkpoint_base();
            opts.train_config_digest = train_config_digest(cfg);
            opts.aug_config_digest = aug_config_digest(cfg);
            opts.mean = cfg.preprocess.mean;
            opts.std = cfg.preprocess.std;
            const auto result = train_loop(*model, manifest, cfg.train_config(), opts);
            write_file_if_changed(paths.train_log(), result.log.to_json() + "\n");
            std::cout << "best epoch " << result.log.best_epoch << ", val macro F1 " << result.log.best_val_macro_f1
                      << ", stop " << to_string(result.log.stop_reason) << "\n";
        } else if (*eval_cmd) {
            EvalResult result;
            if (!eval_predictions.empty()) {
                result.predictions = read_predictions(eval_predictions);
                result.metrics = evaluate(result.predictions);
            } else {
                if (eval_checkpoint.empty() || eval_manifest.empty())
                    throw Error(ErrorCode::ConfigInvalid, "eval needs --predictions or both --checkpoint and --manifest");
                result = evaluate_checkpoint(eval_checkpoint, load_manifest(eval_manifest), eval_batch, PreprocessSection{});
            }
            if (!eval_pred_out.empty()) write_predictions(result.predictions, eval_pred_out);
            const std::string text = report_to_json(result.metrics) + "\n";
            if (!eval_out.empty()) write_file_if_changed(eval_out, text);
            std::cout << text;
        } else if (*report_cmd) {
            const RunPaths paths(report_run);
            if (!fs::exists(paths.metrics_json()))
                throw Error(ErrorCode::StagePrereqMissing, "report requires evaluation metrics",
                            {paths.metrics_json().string()});
            const auto metrics = report_from_json(read_file(paths.metrics_json()));
            std::string model_name = "model";
            const auto sidecar = fs::path(paths.checkpoint_base().string() + ".json");
            if (fs::exists(sidecar)) model_name = display_name(read_checkpoint_meta(paths.checkpoint_base()).spec.arch);
            const fs::path lit = report_compare.empty() ? default_literature_path() : fs::path(report_compare);
            std::cout << write_reports(paths.reports_dir, model_name, metrics, lit, parse_table_format(report_format));
        } else if (*run_cmd) {
            const auto cfg = load_run_config(fs::path(run_config), leukopipe_environment(), run_sets);
            use_log_file(RunPaths(cfg.run_dir).logs_dir / "pipeline.log");
            const auto result = run_pipeline(cfg, parse_stages(run_stages), force);
            for (const auto& [stage, outcome] : result.stages)
                std::cout << to_string(stage) << ": " << (outcome == StageOutcome::RAN ? "ran" : "skipped") << "\n";
        } else if (*synth_cmd) {
            generate_blob_dataset(synth_out, synth);
            std::cout << "wrote " << 2 * synth.per_class << " images under " << synth_out << "\n";
        }
    } catch (const Error& e) {
        spdlog::error("{}", e.what());
        for (const auto& d : e.details()) spdlog::error("  {}", d);
        return static_cast<int>(exit_status_for(e.code()));
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return static_cast<int>(ExitStatus::Failure);
    }
    return 0;
}
