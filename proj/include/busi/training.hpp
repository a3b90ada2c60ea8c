#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "busi/dataset.hpp"
#include "busi/models.hpp"
#include "busi/preprocess.hpp"
#include "busi/tensor.hpp"

namespace busi {

enum class OptimizerKind { adam, sgd };
enum class LossKind { categorical_cross_entropy };

std::string to_string(OptimizerKind kind);
OptimizerKind optimizer_from_string(const std::string& text);

struct TrainConfig {
    int epochs = 10;
    int batch_size = 32;
    double learning_rate = 0.0001;
    OptimizerKind optimizer = OptimizerKind::adam;
    LossKind loss = LossKind::categorical_cross_entropy;
    std::uint64_t seed = 42;
    std::filesystem::path checkpoint_dir;  // empty -> no checkpoints written
    int image_height = kDefaultImageSize;
    int image_width = kDefaultImageSize;

    // learning_rate = 0 is allowed as the degenerate zero-step identity.
    void validate() const;
};

struct EpochRecord {
    int epoch = 0;  // 1-based
    double train_loss = 0.0;
    double train_accuracy = 0.0;
    double val_loss = 0.0;
    double val_accuracy = 0.0;
    double wall_seconds = 0.0;
};

struct TrainHistory {
    std::vector<EpochRecord> epochs;
    int best_epoch = 0;  // 1-based; highest val_accuracy, tie -> earliest

    void save_csv(const std::filesystem::path& path) const;
    void save_json(const std::filesystem::path& path) const;
};

// 0-based index of the record with the highest val_accuracy; ties go to
// the earliest epoch. Throws on an empty history.
std::size_t select_best_epoch(const std::vector<EpochRecord>& records);

class Optimizer {
public:
    virtual ~Optimizer() = default;
    // Applies one update using the accumulated gradients. The same
    // parameter vector must be passed on every call.
    virtual void step(const std::vector<nn::Param*>& params) = 0;
};

class SgdOptimizer : public Optimizer {
public:
    explicit SgdOptimizer(double learning_rate) : lr_(learning_rate) {}
    void step(const std::vector<nn::Param*>& params) override;

private:
    double lr_;
};

class AdamOptimizer : public Optimizer {
public:
    explicit AdamOptimizer(double learning_rate, double beta1 = 0.9,
                           double beta2 = 0.999, double epsilon = 1e-7);
    void step(const std::vector<nn::Param*>& params) override;

private:
    double lr_, beta1_, beta2_, epsilon_;
    std::int64_t t_ = 0;
    std::vector<std::vector<double>> m_, v_;  // index-aligned with params
};

std::unique_ptr<Optimizer> make_optimizer(const TrainConfig& config);

// Mean softmax cross-entropy of (n, K) logits against one-hot targets,
// computed with log-sum-exp. When grad is non-null it receives
// d(loss)/d(logits) = (softmax - onehot) / n.
double softmax_cross_entropy(const Tensor& logits, const Tensor& one_hot,
                             Tensor* grad = nullptr);

// Full training loop: epochs x batches of gradient steps, per-epoch
// validation, a checkpoint per epoch plus best.ckpt (highest validation
// accuracy, tie -> earlier) when config.checkpoint_dir is set. Progress
// lines go to *progress when non-null. Non-finite loss -> DivergedError.
TrainHistory train(Model& model, const DatasetManifest& manifest,
                   const TrainConfig& config, std::ostream* progress = nullptr);

// Deterministic inference over a split in manifest order:
// (y_true labels, (n, K) probability matrix).
std::pair<std::vector<int>, Tensor> evaluate_split(
    Model& model, const DatasetManifest& manifest, Split split, int batch_size,
    int image_height = kDefaultImageSize, int image_width = kDefaultImageSize);

}  // namespace busi
