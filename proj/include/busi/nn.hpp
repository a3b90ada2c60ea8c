#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "busi/rng.hpp"
#include "busi/tensor.hpp"

namespace busi::nn {

enum class Init { he_normal, glorot_uniform, zeros, ones };

struct Param {
    std::string name;
    Tensor value;
    Tensor grad;
    bool trainable = true;
    Init init = Init::zeros;
    int fan_in = 0;
    int fan_out = 0;

    void zero_grad() { std::fill(grad.storage().begin(), grad.storage().end(), 0.0); }
};

struct PadSpec {
    enum class Mode { valid, same, fixed };
    Mode mode = Mode::valid;
    int top = 0, bottom = 0, left = 0, right = 0;

    static PadSpec valid() { return {}; }
    static PadSpec same() { return {Mode::same, 0, 0, 0, 0}; }
    static PadSpec fixed(int t, int b, int l, int r) { return {Mode::fixed, t, b, l, r}; }
    static PadSpec symmetric(int p) { return fixed(p, p, p, p); }

    // Resolved (top, bottom, left, right) for a concrete input size.
    // `same` uses ceil(in/stride) output size with the extra cell of an
    // odd total pad going to bottom/right.
    std::array<int, 4> resolve(int in_h, int in_w, int kernel, int stride) const;
};

// Layers cache what backward needs only when forward runs with
// training=true; backward accumulates into Param::grad.
class Layer {
public:
    virtual ~Layer() = default;
    virtual Tensor forward(const Tensor& x, bool training) = 0;
    virtual Tensor backward(const Tensor& grad_output) = 0;
    virtual void collect_params(std::vector<Param*>& out) {}
    virtual void collect_buffers(std::vector<Param*>& out) {}
    virtual const std::string& name() const = 0;
};

class Conv2d : public Layer {
public:
    Conv2d(std::string name, int in_channels, int out_channels, int kernel, int stride,
           PadSpec pad, bool use_bias, Init kernel_init = Init::glorot_uniform);

    Tensor forward(const Tensor& x, bool training) override;
    Tensor backward(const Tensor& grad_output) override;
    void collect_params(std::vector<Param*>& out) override;
    const std::string& name() const override { return name_; }

private:
    std::string name_;
    int in_channels_, out_channels_, kernel_, stride_;
    PadSpec pad_;
    bool use_bias_;
    Param kernel_param_;  // (k, k, in, out)
    Param bias_param_;    // (out)
    Tensor cached_input_;
};

// Depthwise 3x3-style convolution with channel multiplier 1, no bias.
class DepthwiseConv2d : public Layer {
public:
    DepthwiseConv2d(std::string name, int channels, int kernel, int stride, PadSpec pad);

    Tensor forward(const Tensor& x, bool training) override;
    Tensor backward(const Tensor& grad_output) override;
    void collect_params(std::vector<Param*>& out) override;
    const std::string& name() const override { return name_; }

private:
    std::string name_;
    int channels_, kernel_, stride_;
    PadSpec pad_;
    Param kernel_param_;  // (k, k, c)
    Tensor cached_input_;
};

// Batch normalization over the channel axis using the stored running
// statistics in both training and inference. gamma/beta stay trainable;
// the statistics are buffers loaded from a checkpoint (identity for a
// freshly initialized model). Matches the frozen-statistics convention
// used when transferring pretrained backbones.
class BatchNorm : public Layer {
public:
    BatchNorm(std::string name, int channels, double epsilon = 1e-3);

    Tensor forward(const Tensor& x, bool training) override;
    Tensor backward(const Tensor& grad_output) override;
    void collect_params(std::vector<Param*>& out) override;
    void collect_buffers(std::vector<Param*>& out) override;
    const std::string& name() const override { return name_; }

private:
    std::string name_;
    int channels_;
    double epsilon_;
    Param gamma_, beta_;
    Param running_mean_, running_var_;  // buffers
    Tensor cached_input_;
};

class Relu : public Layer {
public:
    // max_value < 0 means no upper clamp; 6.0 gives ReLU6.
    explicit Relu(std::string name, double max_value = -1.0);

    Tensor forward(const Tensor& x, bool training) override;
    Tensor backward(const Tensor& grad_output) override;
    const std::string& name() const override { return name_; }

private:
    std::string name_;
    double max_value_;
    std::vector<char> cached_mask_;
};

class MaxPool2d : public Layer {
public:
    MaxPool2d(std::string name, int kernel, int stride, PadSpec pad);

    Tensor forward(const Tensor& x, bool training) override;
    Tensor backward(const Tensor& grad_output) override;
    const std::string& name() const override { return name_; }

private:
    std::string name_;
    int kernel_, stride_;
    PadSpec pad_;
    std::vector<int> input_shape_;
    std::vector<std::int64_t> cached_argmax_;
};

// (n, h, w, c) -> (n, c), mean over the spatial axes.
class GlobalAvgPool : public Layer {
public:
    explicit GlobalAvgPool(std::string name) : name_(std::move(name)) {}

    Tensor forward(const Tensor& x, bool training) override;
    Tensor backward(const Tensor& grad_output) override;
    const std::string& name() const override { return name_; }

private:
    std::string name_;
    std::vector<int> input_shape_;
};

class Dense : public Layer {
public:
    Dense(std::string name, int in_features, int out_features,
          Init kernel_init = Init::glorot_uniform);

    Tensor forward(const Tensor& x, bool training) override;
    Tensor backward(const Tensor& grad_output) override;
    void collect_params(std::vector<Param*>& out) override;
    const std::string& name() const override { return name_; }

private:
    std::string name_;
    int in_features_, out_features_;
    Param kernel_param_;  // (in, out)
    Param bias_param_;    // (out)
    Tensor cached_input_;
};

class Sequential : public Layer {
public:
    explicit Sequential(std::string name = "sequential") : name_(std::move(name)) {}

    Sequential(Sequential&&) = default;
    Sequential& operator=(Sequential&&) = default;

    template <typename L, typename... Args>
    L* emplace(Args&&... args) {
        auto layer = std::make_unique<L>(std::forward<Args>(args)...);
        L* raw = layer.get();
        layers_.push_back(std::move(layer));
        return raw;
    }

    void append(std::unique_ptr<Layer> layer) { layers_.push_back(std::move(layer)); }

    Tensor forward(const Tensor& x, bool training) override;
    Tensor backward(const Tensor& grad_output) override;

    // Forward that records (layer name, output shape) per layer.
    Tensor forward_traced(const Tensor& x,
                          std::vector<std::pair<std::string, std::vector<int>>>& trace);

    void collect_params(std::vector<Param*>& out) override;
    void collect_buffers(std::vector<Param*>& out) override;
    const std::string& name() const override { return name_; }
    std::size_t size() const { return layers_.size(); }
    bool empty() const { return layers_.empty(); }

private:
    std::string name_;
    std::vector<std::unique_ptr<Layer>> layers_;
};

// Residual bottleneck: 1x1 reduce -> 3x3 (carries the stride) -> 1x1
// expand, each with batch norm; projection shortcut when the shape
// changes; ReLU after the sum.
class BottleneckBlock : public Layer {
public:
    BottleneckBlock(std::string name, int in_channels, int mid_channels,
                    int out_channels, int stride, bool projection);

    Tensor forward(const Tensor& x, bool training) override;
    Tensor backward(const Tensor& grad_output) override;
    void collect_params(std::vector<Param*>& out) override;
    void collect_buffers(std::vector<Param*>& out) override;
    const std::string& name() const override { return name_; }

private:
    std::string name_;
    Sequential main_;
    Sequential shortcut_;  // empty = identity
    std::vector<char> cached_mask_;
};

/// Fill every parameter according to its Init rule, deterministically in
/// registration order from one master seed.
void initialize_params(std::vector<Param*>& params, std::uint64_t seed);

/// Numerically stable row softmax of an (n, k) logit matrix.
Tensor softmax_rows(const Tensor& logits);

}  // namespace busi::nn
