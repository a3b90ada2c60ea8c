#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "busi/nn.hpp"
#include "busi/preprocess.hpp"
#include "busi/tensor.hpp"

namespace busi {

inline constexpr const char* kFrameworkVersion = "0.1.0";

enum class ModelKind { transfer, custom_cnn };

std::string to_string(ModelKind kind);
ModelKind model_kind_from_string(const std::string& text);

struct ModelSpec {
    ModelKind kind = ModelKind::transfer;
    std::string backbone_id;  // registered backbone id when kind == transfer
    int num_classes = 2;
    bool freeze_backbone = true;
    int head_units = 1024;
    std::uint64_t seed = 42;
    // Transfer models only: load ImageNet backbone weights from the cache.
    // false gives a seeded random backbone (useful for tests and smoke runs).
    bool pretrained = true;

    void validate() const;

    // Identifier used for work-dir layout and comparison tables:
    // the backbone id for transfer models, "custom_cnn" otherwise.
    std::string id() const;
};

// A feature extractor plus classifier head with explicit train/inference
// modes. Probabilities come from a final softmax over the head logits.
class Model {
public:
    Model(ModelSpec spec, nn::Sequential features, nn::Sequential head,
          int feature_dim);

    Model(Model&&) = default;
    Model& operator=(Model&&) = default;

    const ModelSpec& spec() const { return spec_; }
    int num_classes() const { return spec_.num_classes; }
    int feature_dim() const { return feature_dim_; }
    bool backbone_frozen() const {
        return spec_.kind == ModelKind::transfer && spec_.freeze_backbone;
    }

    // Preprocessing convention the model expects its inputs to follow.
    Normalization normalization() const;

    // (n, h, w, 3) images -> (n, K) logits. training=true caches
    // activations for backward (the backbone skips caching when frozen).
    Tensor forward_logits(const Tensor& images, bool training);

    // Inference-mode class probabilities, row-stochastic.
    Tensor predict(const Tensor& images);

    // Backpropagate d(loss)/d(logits); accumulates into trainable grads.
    void backward(const Tensor& grad_logits);

    std::vector<nn::Param*> params();
    std::vector<nn::Param*> trainable_params();
    std::vector<nn::Param*> buffers();

    std::int64_t parameter_count();
    std::int64_t trainable_parameter_count();

    void zero_grads();

private:
    ModelSpec spec_;
    nn::Sequential features_;
    nn::Sequential head_;
    int feature_dim_;
};

std::vector<std::string> registered_backbones();
bool is_registered_backbone(const std::string& id);
int backbone_feature_dim(const std::string& id);

// Backbone (pretrained when spec.pretrained and the cache has weights)
// -> global average pool -> dense(head_units, ReLU) -> dense(K).
// Throws UnknownBackboneError / WeightsUnavailableError.
Model build_transfer_model(const ModelSpec& spec,
                           const std::filesystem::path& weights_cache = {});

// Fixed 4-block CNN: conv3x3 filters 32/64/128/256, each ReLU + 2x2
// max-pool -> global average pool -> dense(256, ReLU) -> dense(K).
Model build_custom_cnn(const ModelSpec& spec);

// Dispatch on spec.kind.
Model build_model(const ModelSpec& spec,
                  const std::filesystem::path& weights_cache = {});

// Checkpoint = directory with params.bin (named tensors) + model.json.
void save_checkpoint(Model& model, const std::filesystem::path& dir);

// Rebuilds the model from model.json and fills every parameter and
// buffer from params.bin. expected_num_classes > 0 enforces a class-count
// match (ShapeError on mismatch). Missing/corrupt files -> CheckpointError.
Model load_checkpoint(const std::filesystem::path& dir,
                      int expected_num_classes = -1);

// Named-tensor container used by checkpoints and backbone weight files.
void save_named_tensors(
    const std::filesystem::path& file,
    const std::vector<std::pair<std::string, const Tensor*>>& tensors);
std::map<std::string, Tensor> load_named_tensors(const std::filesystem::path& file);

}  // namespace busi
