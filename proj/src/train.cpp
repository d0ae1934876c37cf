#include "leukopipe/train.hpp"

#include <chrono>
#include <cmath>
#include <condition_variable>
#include <deque>
#include <exception>
#include <limits>
#include <mutex>
#include <numeric>
#include <thread>

#include <spdlog/spdlog.h>

#include "json.hpp"
#include "leukopipe/error.hpp"
#include "leukopipe/hashing.hpp"
#include "leukopipe/nn/optim.hpp"
#include "leukopipe/nn/weights_io.hpp"

namespace leukopipe {

using nlohmann::json;
using nn::Tensor;

void TrainConfig::validate() const {
    std::vector<std::string> problems;
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) problems.push_back("learning_rate must be > 0");
    if (batch_size < 1) problems.push_back("batch_size must be >= 1");
    if (max_epochs < 1) problems.push_back("max_epochs must be >= 1");
    if (early_stop_patience < 1 || early_stop_patience > max_epochs)
        problems.push_back("early_stop_patience must lie in [1, max_epochs]");
    if (!(improvement_tolerance >= 0.0)) problems.push_back("improvement_tolerance must be >= 0");
    if (prefetch_batches < 1) problems.push_back("prefetch_batches must be >= 1");
    if (!problems.empty()) throw Error(ErrorCode::InvalidConfig, "invalid train config", problems);
}

// --- loss --------------------------------------------------------------------------

LossAndGrad cross_entropy_with_grad(const Tensor& logits, const std::vector<ClassLabel>& labels) {
    if (logits.ndim() != 2 || logits.dim(1) != 2 || static_cast<std::size_t>(logits.dim(0)) != labels.size() ||
        labels.empty())
        throw Error(ErrorCode::ShapeMismatch, "cross_entropy expects N x 2 logits and N labels, got " +
                                                  nn::shape_string(logits.shape()) + " and " +
                                                  std::to_string(labels.size()));
    for (float v : logits.values())
        if (!std::isfinite(v)) throw Error(ErrorCode::NonFiniteLogits, "non-finite logit");
    const int n = logits.dim(0);
    LossAndGrad out;
    out.grad = Tensor({n, 2});
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
        const double z0 = logits[2 * i], z1 = logits[2 * i + 1];
        const double m = std::max(z0, z1);
        const double lse = m + std::log(std::exp(z0 - m) + std::exp(z1 - m));
        const int y = static_cast<int>(labels[i]);
        total += lse - (y == 0 ? z0 : z1);
        const double p0 = std::exp(z0 - lse), p1 = std::exp(z1 - lse);
        out.grad[2 * i] = static_cast<float>((p0 - (y == 0 ? 1.0 : 0.0)) / n);
        out.grad[2 * i + 1] = static_cast<float>((p1 - (y == 1 ? 1.0 : 0.0)) / n);
    }
    out.loss = total / n;
    return out;
}

double cross_entropy(const Tensor& logits, const std::vector<ClassLabel>& labels) {
    return cross_entropy_with_grad(logits, labels).loss;
}

// --- early stopping -------------------------------------------------------------------

std::string to_string(StopReason reason) { return reason == StopReason::EARLY_STOP ? "EARLY_STOP" : "MAX_EPOCHS"; }

EarlyStopping::EarlyStopping(int patience, double tolerance)
    : patience_(patience), tolerance_(tolerance), best_score_(-std::numeric_limits<double>::infinity()) {}

EarlyStopping::Decision EarlyStopping::update(int epoch, double score) {
    Decision d;
    if (best_epoch_ == 0 || score > best_score_ + tolerance_) {
        best_epoch_ = epoch;
        best_score_ = score;
        d.improved = true;
    } else if (epoch - best_epoch_ >= patience_) {
        d.stop = true;
    }
    return d;
}

TrainLog simulate_early_stopping(const std::vector<double>& val_scores, int patience, int max_epochs,
                                 double tolerance) {
    TrainLog log;
    EarlyStopping stopper(patience, tolerance);
    const int epochs = std::min<int>(max_epochs, static_cast<int>(val_scores.size()));
    for (int e = 1; e <= epochs; ++e) {
        const auto d = stopper.update(e, val_scores[e - 1]);
        EpochRecord rec;
        rec.epoch = e;
        rec.val_macro_f1 = val_scores[e - 1];
        rec.checkpointed = d.improved;
        log.epochs.push_back(rec);
        if (d.stop) {
            log.stop_reason = StopReason::EARLY_STOP;
            break;
        }
    }
    log.best_epoch = stopper.best_epoch();
    log.best_val_macro_f1 = stopper.best_score();
    return log;
}

std::string TrainLog::to_json() const {
    json j;
    j["schema"] = "leukopipe.trainlog";
    j["schema_version"] = 1;
    j["stop_reason"] = to_string(stop_reason);
    j["best_epoch"] = best_epoch;
    j["best_val_macro_f1"] = best_val_macro_f1;
    j["epochs"] = json::array();
    for (const auto& e : epochs)
        j["epochs"].push_back({{"epoch", e.epoch},
                               {"train_loss", e.train_loss},
                               {"val_accuracy", e.val_accuracy},
                               {"val_macro_f1", e.val_macro_f1},
                               {"wall_seconds", e.wall_seconds},
                               {"checkpointed", e.checkpointed},
                               {"batch_order_digest", e.batch_order_digest}});
    return j.dump(2);
}

TrainLog TrainLog::from_json(const std::string& text) {
    try {
        const json j = json::parse(text);
        TrainLog log;
        const auto reason = j.at("stop_reason").get<std::string>();
        if (reason != "EARLY_STOP" && reason != "MAX_EPOCHS")
            throw Error(ErrorCode::ParseError, "unknown stop_reason " + reason);
        log.stop_reason = reason == "EARLY_STOP" ? StopReason::EARLY_STOP : StopReason::MAX_EPOCHS;
        log.best_epoch = j.at("best_epoch").get<int>();
        log.best_val_macro_f1 = j.at("best_val_macro_f1").get<double>();
        for (const auto& e : j.at("epochs")) {
            EpochRecord r;
            r.epoch = e.at("epoch").get<int>();
            r.train_loss = e.at("train_loss").get<double>();
            r.val_accuracy = e.at("val_accuracy").get<double>();
            r.val_macro_f1 = e.at("val_macro_f1").get<double>();
            r.wall_seconds = e.at("wall_seconds").get<double>();
            r.checkpointed = e.at("checkpointed").get<bool>();
            r.batch_order_digest = e.value("batch_order_digest", "");
            log.epochs.push_back(r);
        }
        return log;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ParseError, std::string("bad train log: ") + e.what());
    }
}

// --- data loading -----------------------------------------------------------------------

namespace {

struct Batch {
    Tensor images;
    std::vector<ClassLabel> labels;
    std::vector<std::string> ids;
};

Batch load_batch(const std::vector<const ImageRecord*>& records, std::size_t begin, std::size_t end,
                 const ChannelTriple& mean, const ChannelTriple& std) {
    Batch b;
    std::vector<Image> images;
    images.reserve(end - begin);
    for (std::size_t i = begin; i < end; ++i) {
        images.push_back(load_model_image(records[i]->path));
        b.labels.push_back(records[i]->label);
        b.ids.push_back(records[i]->id);
    }
    b.images = to_batch(images, mean, std);
    return b;
}

/// Decodes batches on a background thread in a fixed order, at most
/// `capacity` ahead of the consumer.
class Prefetcher {
public:
    Prefetcher(std::vector<const ImageRecord*> records, int batch_size, int capacity, const ChannelTriple& mean,
               const ChannelTriple& std)
        : records_(std::move(records)), batch_size_(batch_size), capacity_(capacity), mean_(mean), std_(std) {
        worker_ = std::jthread([this](std::stop_token st) { run(st); });
    }

    ~Prefetcher() {
        worker_.request_stop();
        { std::lock_guard lock(mu_); }
        cv_.notify_all();
    }

    std::size_t batch_count() const { return (records_.size() + batch_size_ - 1) / batch_size_; }

    Batch next() {
        std::unique_lock lock(mu_);
        cv_.wait(lock, [&] { return !queue_.empty() || error_; });
        if (queue_.empty()) std::rethrow_exception(error_);
        Batch b = std::move(queue_.front());
        queue_.pop_front();
        cv_.notify_all();
        return b;
    }

private:
    void run(std::stop_token st) {
        try {
            for (std::size_t begin = 0; begin < records_.size(); begin += batch_size_) {
                const std::size_t end = std::min(records_.size(), begin + batch_size_);
                Batch b = load_batch(records_, begin, end, mean_, std_);
                std::unique_lock lock(mu_);
                cv_.wait(lock, [&] { return queue_.size() < static_cast<std::size_t>(capacity_) || st.stop_requested(); });
                if (st.stop_requested()) return;
                queue_.push_back(std::move(b));
                cv_.notify_all();
            }
        } catch (...) {
            std::lock_guard lock(mu_);
            error_ = std::current_exception();
            cv_.notify_all();
        }
    }

    std::vector<const ImageRecord*> records_;
    std::size_t batch_size_;
    int capacity_;
    ChannelTriple mean_, std_;
    std::mutex mu_;
    std::condition_variable cv_;
    std::deque<Batch> queue_;
    std::exception_ptr error_;
    std::jthread worker_;
};

std::vector<const ImageRecord*> records_in(const DatasetManifest& m, Split split) {
    std::vector<const ImageRecord*> out;
    for (const auto& r : m.records)
        if (r.split == split) out.push_back(&r);
    return out;
}

}  // namespace

PredictionSet predict_records(Classifier& model, const std::vector<ImageRecord>& records, int batch_size,
                              const ChannelTriple& mean, const ChannelTriple& std) {
    if (records.empty()) throw Error(ErrorCode::EmptySplit, "no records to predict");
    std::vector<const ImageRecord*> ptrs;
    for (const auto& r : records) ptrs.push_back(&r);
    Prefetcher loader(ptrs, batch_size, 2, mean, std);
    std::vector<std::string> ids;
    std::vector<ClassLabel> labels;
    std::vector<double> scores;
    for (std::size_t b = 0; b < loader.batch_count(); ++b) {
        Batch batch = loader.next();
        const auto probs = predict_proba(model, batch.images);
        for (std::size_t i = 0; i < probs.size(); ++i) {
            ids.push_back(batch.ids[i]);
            labels.push_back(batch.labels[i]);
            scores.push_back(probs[i][1]);
        }
    }
    return PredictionSet::from_scores(std::move(ids), std::move(labels), std::move(scores));
}

TrainResult train_loop(Classifier& model, const DatasetManifest& manifest, const TrainConfig& cfg,
                       const TrainOptions& options) {
    cfg.validate();
    const auto train = records_in(manifest, Split::TRAIN);
    const auto val_ptrs = records_in(manifest, Split::INTERNAL_VAL);
    if (train.empty()) throw Error(ErrorCode::EmptySplit, "no TRAIN records");
    if (val_ptrs.empty()) throw Error(ErrorCode::EmptySplit, "no INTERNAL_VAL records");
    std::vector<ImageRecord> val;
    for (const auto* r : val_ptrs) val.push_back(*r);

    nn::Adam optimizer(model.trainable_parameters(), nn::AdamOptions{.lr = cfg.learning_rate});
    EarlyStopping stopper(cfg.early_stop_patience, cfg.improvement_tolerance);
    TrainResult result;
    nn::NamedTensors best_state;

    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        std::vector<const ImageRecord*> order = train;
        Rng shuffle_rng(derive_seed(cfg.global_seed, "epoch-shuffle", {static_cast<std::uint64_t>(epoch)}));
        shuffle_rng.shuffle(order.begin(), order.end());
        Rng noise_rng(derive_seed(cfg.global_seed, "train-noise", {static_cast<std::uint64_t>(epoch)}));
        nn::ForwardContext ctx{true, &noise_rng};

        std::string id_stream;
        double loss_sum = 0.0;
        std::size_t seen = 0;
        Prefetcher loader(order, cfg.batch_size, cfg.prefetch_batches, options.mean, options.std);
        for (std::size_t b = 0; b < loader.batch_count(); ++b) {
            Batch batch = loader.next();
            for (const auto& id : batch.ids) id_stream += id + '\n';
            optimizer.zero_grad();
            const Tensor logits = model.forward(batch.images, ctx);
            LossAndGrad lg;
            try {
                lg = cross_entropy_with_grad(logits, batch.labels);
            } catch (const Error& e) {
                if (e.code() != ErrorCode::NonFiniteLogits) throw;
                throw Error(ErrorCode::DivergedLoss, "non-finite logits at epoch " + std::to_string(epoch));
            }
            if (!std::isfinite(lg.loss))
                throw Error(ErrorCode::DivergedLoss, "training loss became non-finite at epoch " + std::to_string(epoch));
            model.backward(lg.grad);
            optimizer.step();
            loss_sum += lg.loss * static_cast<double>(batch.labels.size());
            seen += batch.labels.size();
        }

        const MetricsReport val_report = evaluate(predict_records(model, val, cfg.batch_size, options.mean, options.std));
        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = loss_sum / static_cast<double>(seen);
        rec.val_accuracy = val_report.accuracy;
        rec.val_macro_f1 = val_report.macro_f1;
        rec.batch_order_digest = sha256_hex(id_stream);

        const auto decision = stopper.update(epoch, rec.val_macro_f1);
        if (decision.improved) {
            rec.checkpointed = true;
            result.best.spec = model.spec();
            result.best.train_config_digest = options.train_config_digest;
            result.best.aug_config_digest = options.aug_config_digest;
            result.best.epoch = epoch;
            result.best.best_val_macro_f1 = rec.val_macro_f1;
            result.best.global_seed = cfg.global_seed;
            best_state = nn::state_dict(model);
            if (options.checkpoint_base) {
                save_checkpoint(model, result.best, *options.checkpoint_base);
                result.best = read_checkpoint_meta(*options.checkpoint_base);
            }
        }
        rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        spdlog::info("epoch {:>3}  loss {:.5f}  val acc {:.4f}  val macro F1 {:.4f}{}", epoch, rec.train_loss,
                     rec.val_accuracy, rec.val_macro_f1, rec.checkpointed ? "  *" : "");
        result.log.epochs.push_back(rec);
        if (options.on_epoch) options.on_epoch(rec);
        if (decision.stop) {
            result.log.stop_reason = StopReason::EARLY_STOP;
            break;
        }
    }
    result.log.best_epoch = stopper.best_epoch();
    result.log.best_val_macro_f1 = stopper.best_score();
    nn::load_state_dict(model, best_state);
    return result;
}

}  // namespace leukopipe
