#include "busi/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>

#include <json.hpp>

#include "busi/errors.hpp"
#include "busi/metrics.hpp"

namespace busi {

namespace {

std::string format_ckpt_name(int epoch) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "epoch_%03d.ckpt", epoch);
    return buf;
}

// loss and correct-prediction count for one batch without training caches
std::pair<double, int> batch_eval(Model& model, const Batch& batch) {
    Tensor logits = model.forward_logits(batch.images, false);
    double loss = softmax_cross_entropy(logits, batch.one_hot);
    std::vector<int> predicted = argmax_rows(logits);
    int correct = 0;
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        if (predicted[i] == batch.labels[i]) ++correct;
    }
    return {loss, correct};
}

}  // namespace

std::string to_string(OptimizerKind kind) {
    return kind == OptimizerKind::adam ? "adam" : "sgd";
}

OptimizerKind optimizer_from_string(const std::string& text) {
    if (text == "adam") return OptimizerKind::adam;
    if (text == "sgd") return OptimizerKind::sgd;
    throw ParseError("unknown optimizer: " + text);
}

void TrainConfig::validate() const {
    if (epochs < 1) throw Error("epochs must be at least 1");
    if (batch_size < 1) throw Error("batch_size must be at least 1");
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
        throw Error("learning_rate must be a finite value >= 0");
    }
    if (image_height < 1 || image_width < 1) {
        throw Error("image size must be positive");
    }
}

std::size_t select_best_epoch(const std::vector<EpochRecord>& records) {
    if (records.empty()) throw Error("select_best_epoch: empty history");
    std::size_t best = 0;
    for (std::size_t i = 1; i < records.size(); ++i) {
        if (records[i].val_accuracy > records[best].val_accuracy) best = i;
    }
    return best;
}

void SgdOptimizer::step(const std::vector<nn::Param*>& params) {
    for (nn::Param* p : params) {
        double* w = p->value.data();
        const double* g = p->grad.data();
        for (std::int64_t i = 0; i < p->value.size(); ++i) w[i] -= lr_ * g[i];
    }
}

AdamOptimizer::AdamOptimizer(double learning_rate, double beta1, double beta2,
                             double epsilon)
    : lr_(learning_rate), beta1_(beta1), beta2_(beta2), epsilon_(epsilon) {}

void AdamOptimizer::step(const std::vector<nn::Param*>& params) {
    if (m_.empty()) {
        for (const nn::Param* p : params) {
            m_.emplace_back(static_cast<std::size_t>(p->value.size()), 0.0);
            v_.emplace_back(static_cast<std::size_t>(p->value.size()), 0.0);
        }
    }
    if (m_.size() != params.size()) {
        throw Error("optimizer stepped with a different parameter set");
    }
    ++t_;
    double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t k = 0; k < params.size(); ++k) {
        nn::Param* p = params[k];
        double* w = p->value.data();
        const double* g = p->grad.data();
        double* m = m_[k].data();
        double* v = v_[k].data();
        for (std::int64_t i = 0; i < p->value.size(); ++i) {
            m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
            v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
            double m_hat = m[i] / bc1;
            double v_hat = v[i] / bc2;
            w[i] -= lr_ * m_hat / (std::sqrt(v_hat) + epsilon_);
        }
    }
}

std::unique_ptr<Optimizer> make_optimizer(const TrainConfig& config) {
    if (config.optimizer == OptimizerKind::adam) {
        return std::make_unique<AdamOptimizer>(config.learning_rate);
    }
    return std::make_unique<SgdOptimizer>(config.learning_rate);
}

double softmax_cross_entropy(const Tensor& logits, const Tensor& one_hot,
                             Tensor* grad) {
    if (logits.ndim() != 2 || !logits.same_shape(one_hot)) {
        throw ShapeError("softmax_cross_entropy: logits " + logits.shape_string() +
                         " vs targets " + one_hot.shape_string());
    }
    int n = logits.dim(0), k = logits.dim(1);
    if (n == 0) throw EmptyInputError("softmax_cross_entropy: empty batch");
    if (grad) *grad = Tensor({n, k});
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
        double max_logit = logits.at(i, 0);
        for (int j = 1; j < k; ++j) max_logit = std::max(max_logit, logits.at(i, j));
        double sum_exp = 0.0;
        for (int j = 0; j < k; ++j) sum_exp += std::exp(logits.at(i, j) - max_logit);
        double lse = max_logit + std::log(sum_exp);
        for (int j = 0; j < k; ++j) {
            double p = std::exp(logits.at(i, j) - max_logit) / sum_exp;
            if (grad) grad->at(i, j) = (p - one_hot.at(i, j)) / n;
            if (one_hot.at(i, j) != 0.0) total += one_hot.at(i, j) * (lse - logits.at(i, j));
        }
    }
    return total / n;
}

TrainHistory train(Model& model, const DatasetManifest& manifest,
                   const TrainConfig& config, std::ostream* progress) {
    config.validate();
    std::vector<nn::Param*> trainable = model.trainable_params();
    std::unique_ptr<Optimizer> optimizer = make_optimizer(config);
    Normalization norm = model.normalization();

    TrainHistory history;
    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        auto t0 = std::chrono::steady_clock::now();

        BatchIterator train_batches(manifest, Split::train, config.batch_size,
                                    /*shuffle=*/true, config.seed, epoch, norm,
                                    config.image_height, config.image_width);
        double loss_sum = 0.0;
        std::int64_t correct = 0;
        std::int64_t seen = 0;
        int batch_index = 0;
        while (auto batch = train_batches.next()) {
            Tensor logits = model.forward_logits(batch->images, true);
            Tensor grad;
            double loss = softmax_cross_entropy(logits, batch->one_hot, &grad);
            if (!std::isfinite(loss)) {
                throw DivergedError("training diverged (non-finite loss) at epoch " +
                                        std::to_string(epoch) + ", batch " +
                                        std::to_string(batch_index),
                                    epoch, batch_index);
            }
            model.zero_grads();
            model.backward(grad);
            optimizer->step(trainable);

            int n = batch->images.dim(0);
            loss_sum += loss * n;
            std::vector<int> predicted = argmax_rows(logits);
            for (int i = 0; i < n; ++i) {
                if (predicted[static_cast<std::size_t>(i)] == batch->labels[static_cast<std::size_t>(i)]) ++correct;
            }
            seen += n;
            ++batch_index;
        }

        EpochRecord record;
        record.epoch = epoch;
        record.train_loss = loss_sum / static_cast<double>(seen);
        record.train_accuracy = static_cast<double>(correct) / static_cast<double>(seen);

        BatchIterator val_batches(manifest, Split::validation, config.batch_size,
                                  /*shuffle=*/false, config.seed, 0, norm,
                                  config.image_height, config.image_width);
        double val_loss_sum = 0.0;
        std::int64_t val_correct = 0;
        std::int64_t val_seen = 0;
        while (auto batch = val_batches.next()) {
            auto [loss, batch_correct] = batch_eval(model, *batch);
            int n = batch->images.dim(0);
            val_loss_sum += loss * n;
            val_correct += batch_correct;
            val_seen += n;
        }
        record.val_loss = val_loss_sum / static_cast<double>(val_seen);
        record.val_accuracy = static_cast<double>(val_correct) / static_cast<double>(val_seen);

        auto t1 = std::chrono::steady_clock::now();
        record.wall_seconds = std::chrono::duration<double>(t1 - t0).count();
        history.epochs.push_back(record);

        if (!config.checkpoint_dir.empty()) {
            save_checkpoint(model, config.checkpoint_dir / format_ckpt_name(epoch));
        }
        if (progress) {
            char line[128];
            std::snprintf(line, sizeof line, "epoch %d/%d train_loss=%.3f val_acc=%.3f",
                          epoch, config.epochs, record.train_loss, record.val_accuracy);
            (*progress) << line << "\n";
        }
    }

    std::size_t best = select_best_epoch(history.epochs);
    history.best_epoch = history.epochs[best].epoch;
    if (!config.checkpoint_dir.empty()) {
        std::filesystem::path best_dir = config.checkpoint_dir / "best.ckpt";
        std::filesystem::path source =
            config.checkpoint_dir / format_ckpt_name(history.best_epoch);
        std::error_code ec;
        std::filesystem::remove_all(best_dir, ec);
        std::filesystem::create_directories(best_dir, ec);
        if (ec) throw CheckpointError("cannot create " + best_dir.string());
        for (const char* name : {"params.bin", "model.json"}) {
            std::filesystem::copy_file(source / name, best_dir / name,
                                       std::filesystem::copy_options::overwrite_existing,
                                       ec);
            if (ec) {
                throw CheckpointError("cannot copy checkpoint file " +
                                      (source / name).string() + ": " + ec.message());
            }
        }
    }
    return history;
}

std::pair<std::vector<int>, Tensor> evaluate_split(Model& model,
                                                   const DatasetManifest& manifest,
                                                   Split split, int batch_size,
                                                   int image_height, int image_width) {
    BatchIterator batches(manifest, split, batch_size, /*shuffle=*/false, 0, 0,
                          model.normalization(), image_height, image_width);
    std::vector<int> y_true;
    y_true.reserve(batches.size());
    Tensor y_score(
        {static_cast<int>(batches.size()), model.num_classes()});
    std::int64_t row = 0;
    while (auto batch = batches.next()) {
        Tensor probs = model.predict(batch->images);
        int n = probs.dim(0), k = probs.dim(1);
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < k; ++j) y_score[(row + i) * k + j] = probs.at(i, j);
        }
        row += n;
        y_true.insert(y_true.end(), batch->labels.begin(), batch->labels.end());
    }
    return {std::move(y_true), std::move(y_score)};
}

void TrainHistory::save_csv(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    out << "epoch,train_loss,train_accuracy,val_loss,val_accuracy,wall_seconds\n";
    char buf[196];
    for (const EpochRecord& r : epochs) {
        std::snprintf(buf, sizeof buf, "%d,%.6f,%.6f,%.6f,%.6f,%.3f\n", r.epoch,
                      r.train_loss, r.train_accuracy, r.val_loss, r.val_accuracy,
                      r.wall_seconds);
        out << buf;
    }
    out.flush();
    if (!out) throw IoError("write failed: " + path.string());
}

void TrainHistory::save_json(const std::filesystem::path& path) const {
    nlohmann::json doc;
    doc["best_epoch"] = best_epoch;
    doc["epochs"] = nlohmann::json::array();
    for (const EpochRecord& r : epochs) {
        doc["epochs"].push_back({{"epoch", r.epoch},
                                 {"train_loss", r.train_loss},
                                 {"train_accuracy", r.train_accuracy},
                                 {"val_loss", r.val_loss},
                                 {"val_accuracy", r.val_accuracy},
                                 {"wall_seconds", r.wall_seconds}});
    }
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    out << doc.dump(2) << "\n";
    out.flush();
    if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace busi
