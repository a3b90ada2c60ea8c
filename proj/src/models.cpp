#include "busi/models.hpp"

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "busi/errors.hpp"

namespace busi {

using nn::Conv2d;
using nn::DepthwiseConv2d;
using nn::BatchNorm;
using nn::BottleneckBlock;
using nn::Dense;
using nn::GlobalAvgPool;
using nn::Init;
using nn::MaxPool2d;
using nn::PadSpec;
using nn::Relu;
using nn::Sequential;

namespace {

constexpr char kParamsFile[] = "params.bin";
constexpr char kModelJson[] = "model.json";
constexpr char kTensorMagic[8] = {'B', 'U', 'S', 'I', 'P', 'R', 'M', '1'};

// ---------------------------------------------------------------- backbones

// Keras-style ResNet50 v1.5: stride-2 carried by the 3x3 conv of the
// first block in stages 3-5.
void build_resnet50(Sequential& seq) {
    seq.emplace<Conv2d>("conv1/conv", 3, 64, 7, 2, PadSpec::symmetric(3), false);
    seq.emplace<BatchNorm>("conv1/bn", 64);
    seq.emplace<Relu>("conv1/relu");
    seq.emplace<MaxPool2d>("pool1", 3, 2, PadSpec::symmetric(1));

    struct Stage {
        const char* name;
        int mid;
        int blocks;
        int stride;
    };
    const Stage stages[] = {
        {"conv2", 64, 3, 1},
        {"conv3", 128, 4, 2},
        {"conv4", 256, 6, 2},
        {"conv5", 512, 3, 2},
    };
    int in_channels = 64;
    for (const auto& stage : stages) {
        int out_channels = stage.mid * 4;
        for (int b = 1; b <= stage.blocks; ++b) {
            std::string name = std::string(stage.name) + "_block" + std::to_string(b);
            int stride = (b == 1) ? stage.stride : 1;
            bool projection = (b == 1);
            seq.emplace<BottleneckBlock>(name, in_channels, stage.mid, out_channels,
                                         stride, projection);
            in_channels = out_channels;
        }
    }
}

// MobileNet v1 at width multiplier 1: standard conv then 13
// depthwise-separable blocks, ReLU6 activations.
void build_mobilenet(Sequential& seq) {
    auto dw_block = [&seq](int index, int in_channels, int out_channels, int stride) {
        std::string base = "conv_dw_" + std::to_string(index);
        seq.emplace<DepthwiseConv2d>(base, in_channels, 3, stride, PadSpec::same());
        seq.emplace<BatchNorm>(base + "/bn", in_channels);
        seq.emplace<Relu>(base + "/relu", 6.0);
        std::string pw = "conv_pw_" + std::to_string(index);
        seq.emplace<Conv2d>(pw, in_channels, out_channels, 1, 1, PadSpec::valid(), false);
        seq.emplace<BatchNorm>(pw + "/bn", out_channels);
        seq.emplace<Relu>(pw + "/relu", 6.0);
    };

    seq.emplace<Conv2d>("conv1", 3, 32, 3, 2, PadSpec::same(), false);
    seq.emplace<BatchNorm>("conv1/bn", 32);
    seq.emplace<Relu>("conv1/relu", 6.0);

    const int out_channels[] = {64,  128, 128, 256, 256, 512, 512,
                                512, 512, 512, 512, 1024, 1024};
    const int strides[] = {1, 2, 1, 2, 1, 2, 1, 1, 1, 1, 1, 2, 1};
    int in_channels = 32;
    for (int i = 0; i < 13; ++i) {
        dw_block(i + 1, in_channels, out_channels[i], strides[i]);
        in_channels = out_channels[i];
    }
}

// VGG16 convolutional body: 2-2-3-3-3 conv blocks, biases, no batch norm.
void build_vgg16(Sequential& seq) {
    const int widths[] = {64, 128, 256, 512, 512};
    const int depths[] = {2, 2, 3, 3, 3};
    int in_channels = 3;
    for (int block = 0; block < 5; ++block) {
        for (int conv = 0; conv < depths[block]; ++conv) {
            std::string name = "block" + std::to_string(block + 1) + "_conv" +
                               std::to_string(conv + 1);
            seq.emplace<Conv2d>(name, in_channels, widths[block], 3, 1,
                                PadSpec::same(), true);
            seq.emplace<Relu>(name + "/relu");
            in_channels = widths[block];
        }
        seq.emplace<MaxPool2d>("block" + std::to_string(block + 1) + "_pool", 2, 2,
                               PadSpec::valid());
    }
}

struct BackboneInfo {
    int feature_dim;
    void (*build)(Sequential&);
};

const std::map<std::string, BackboneInfo>& backbone_registry() {
    static const std::map<std::string, BackboneInfo> registry = {
        {"resnet50", {2048, build_resnet50}},
        {"mobilenet", {1024, build_mobilenet}},
        {"vgg16", {512, build_vgg16}},
    };
    return registry;
}

Sequential build_head(int feature_dim, int head_units, int num_classes) {
    Sequential head("head");
    head.emplace<GlobalAvgPool>("head/gap");
    head.emplace<Dense>("head/dense1", feature_dim, head_units);
    head.emplace<Relu>("head/relu");
    head.emplace<Dense>("head/dense2", head_units, num_classes);
    return head;
}

// -------------------------------------------------------------- binary io

void write_u32(std::ofstream& out, std::uint32_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

void write_u64(std::ofstream& out, std::uint64_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

std::uint32_t read_u32(std::ifstream& in, const std::string& file) {
    std::uint32_t v = 0;
    if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) {
        throw CheckpointError("truncated tensor file: " + file);
    }
    return v;
}

std::uint64_t read_u64(std::ifstream& in, const std::string& file) {
    std::uint64_t v = 0;
    if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) {
        throw CheckpointError("truncated tensor file: " + file);
    }
    return v;
}

}  // namespace

// ------------------------------------------------------------------ spec

std::string to_string(ModelKind kind) {
    return kind == ModelKind::transfer ? "transfer" : "custom_cnn";
}

ModelKind model_kind_from_string(const std::string& text) {
    if (text == "transfer") return ModelKind::transfer;
    if (text == "custom_cnn") return ModelKind::custom_cnn;
    throw ParseError("unknown model kind: " + text);
}

void ModelSpec::validate() const {
    if (num_classes < 2) {
        throw Error("num_classes must be at least 2, got " +
                    std::to_string(num_classes));
    }
    if (head_units < 1) {
        throw Error("head_units must be positive, got " + std::to_string(head_units));
    }
    if (kind == ModelKind::transfer && !is_registered_backbone(backbone_id)) {
        throw UnknownBackboneError("unknown backbone: '" + backbone_id +
                                   "' (registered: resnet50, mobilenet, vgg16)");
    }
}

std::string ModelSpec::id() const {
    return kind == ModelKind::transfer ? backbone_id : "custom_cnn";
}

// ----------------------------------------------------------------- model

Model::Model(ModelSpec spec, Sequential features, Sequential head, int feature_dim)
    : spec_(std::move(spec)),
      features_(std::move(features)),
      head_(std::move(head)),
      feature_dim_(feature_dim) {
    if (backbone_frozen()) {
        std::vector<nn::Param*> feature_params;
        features_.collect_params(feature_params);
        for (nn::Param* p : feature_params) p->trainable = false;
    }
}

Normalization Model::normalization() const {
    if (spec_.kind == ModelKind::transfer) {
        return {NormalizePolicy::backbone_specific, spec_.backbone_id};
    }
    return {NormalizePolicy::unit_scale, ""};
}

Tensor Model::forward_logits(const Tensor& images, bool training) {
    if (images.ndim() != 4 || images.dim(3) != 3) {
        throw ShapeError("model input must be (n, h, w, 3), got " +
                         images.shape_string());
    }
    Tensor features = features_.forward(images, training && !backbone_frozen());
    return head_.forward(features, training);
}

Tensor Model::predict(const Tensor& images) {
    return nn::softmax_rows(forward_logits(images, false));
}

void Model::backward(const Tensor& grad_logits) {
    Tensor grad_features = head_.backward(grad_logits);
    if (!backbone_frozen()) features_.backward(grad_features);
}

std::vector<nn::Param*> Model::params() {
    std::vector<nn::Param*> out;
    features_.collect_params(out);
    head_.collect_params(out);
    return out;
}

std::vector<nn::Param*> Model::trainable_params() {
    std::vector<nn::Param*> all = params();
    std::vector<nn::Param*> out;
    for (nn::Param* p : all) {
        if (p->trainable) out.push_back(p);
    }
    return out;
}

std::vector<nn::Param*> Model::buffers() {
    std::vector<nn::Param*> out;
    features_.collect_buffers(out);
    head_.collect_buffers(out);
    return out;
}

std::int64_t Model::parameter_count() {
    std::int64_t total = 0;
    for (nn::Param* p : params()) total += p->value.size();
    for (nn::Param* p : buffers()) total += p->value.size();
    return total;
}

std::int64_t Model::trainable_parameter_count() {
    std::int64_t total = 0;
    for (nn::Param* p : trainable_params()) total += p->value.size();
    return total;
}

void Model::zero_grads() {
    for (nn::Param* p : params()) p->zero_grad();
}

// -------------------------------------------------------------- builders

std::vector<std::string> registered_backbones() {
    std::vector<std::string> out;
    for (const auto& [id, info] : backbone_registry()) out.push_back(id);
    return out;
}

bool is_registered_backbone(const std::string& id) {
    return backbone_registry().count(id) > 0;
}

int backbone_feature_dim(const std::string& id) {
    auto it = backbone_registry().find(id);
    if (it == backbone_registry().end()) {
        throw UnknownBackboneError("unknown backbone: '" + id + "'");
    }
    return it->second.feature_dim;
}

Model build_transfer_model(const ModelSpec& spec,
                           const std::filesystem::path& weights_cache) {
    if (spec.kind != ModelKind::transfer) {
        throw Error("build_transfer_model requires a transfer spec");
    }
    spec.validate();
    const BackboneInfo& info = backbone_registry().at(spec.backbone_id);

    Sequential features(spec.backbone_id);
    info.build(features);
    Sequential head = build_head(info.feature_dim, spec.head_units, spec.num_classes);

    Model model(spec, std::move(features), std::move(head), info.feature_dim);
    std::vector<nn::Param*> all = model.params();
    nn::initialize_params(all, spec.seed);

    if (spec.pretrained) {
        std::filesystem::path file =
            weights_cache / (spec.backbone_id + ".weights.bin");
        if (weights_cache.empty() || !std::filesystem::exists(file)) {
            throw WeightsUnavailableError(
                "pretrained weights for '" + spec.backbone_id + "' not found at '" +
                file.string() +
                "'; populate the weights cache (see tools/export_backbone_weights.py) "
                "or build with pretrained=false / --random-init");
        }
        std::map<std::string, Tensor> tensors = load_named_tensors(file);
        // backbone params + buffers only; the head keeps its random init
        std::vector<nn::Param*> targets;
        for (nn::Param* p : model.params()) {
            if (p->name.rfind("head/", 0) != 0) targets.push_back(p);
        }
        for (nn::Param* p : model.buffers()) targets.push_back(p);
        for (nn::Param* p : targets) {
            auto it = tensors.find(p->name);
            if (it == tensors.end()) {
                throw WeightsUnavailableError("weights file '" + file.string() +
                                              "' is missing tensor '" + p->name + "'");
            }
            if (!it->second.same_shape(p->value)) {
                throw WeightsUnavailableError(
                    "weights tensor '" + p->name + "' has shape " +
                    it->second.shape_string() + ", expected " +
                    p->value.shape_string());
            }
            p->value = std::move(it->second);
        }
    }
    return model;
}

Model build_custom_cnn(const ModelSpec& spec) {
    if (spec.kind != ModelKind::custom_cnn) {
        throw Error("build_custom_cnn requires a custom_cnn spec");
    }
    ModelSpec effective = spec;
    effective.backbone_id.clear();
    effective.freeze_backbone = false;
    effective.head_units = 256;  // fixed architecture
    effective.pretrained = false;
    effective.validate();

    Sequential features("custom_cnn");
    const int widths[] = {32, 64, 128, 256};
    int in_channels = 3;
    for (int block = 0; block < 4; ++block) {
        std::string name = "block" + std::to_string(block + 1);
        features.emplace<Conv2d>(name + "/conv", in_channels, widths[block], 3, 1,
                                 PadSpec::same(), true);
        features.emplace<Relu>(name + "/relu");
        features.emplace<MaxPool2d>(name + "/pool", 2, 2, PadSpec::valid());
        in_channels = widths[block];
    }
    Sequential head = build_head(256, effective.head_units, effective.num_classes);

    Model model(std::move(effective), std::move(features), std::move(head), 256);
    std::vector<nn::Param*> all = model.params();
    nn::initialize_params(all, spec.seed);
    return model;
}

Model build_model(const ModelSpec& spec, const std::filesystem::path& weights_cache) {
    return spec.kind == ModelKind::transfer ? build_transfer_model(spec, weights_cache)
                                            : build_custom_cnn(spec);
}

// ----------------------------------------------------------- tensor file

void save_named_tensors(
    const std::filesystem::path& file,
    const std::vector<std::pair<std::string, const Tensor*>>& tensors) {
    std::ofstream out(file, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + file.string());
    out.write(kTensorMagic, sizeof kTensorMagic);
    write_u64(out, tensors.size());
    for (const auto& [name, tensor] : tensors) {
        write_u32(out, static_cast<std::uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_u32(out, static_cast<std::uint32_t>(tensor->ndim()));
        for (int d : tensor->shape()) {
            write_u32(out, static_cast<std::uint32_t>(d));
        }
        out.write(reinterpret_cast<const char*>(tensor->data()),
                  static_cast<std::streamsize>(tensor->size() * sizeof(double)));
    }
    out.flush();
    if (!out) throw CheckpointError("write failed: " + file.string());
}

std::map<std::string, Tensor> load_named_tensors(const std::filesystem::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw CheckpointError("cannot open tensor file: " + file.string());
    char magic[sizeof kTensorMagic];
    if (!in.read(magic, sizeof magic) ||
        std::memcmp(magic, kTensorMagic, sizeof magic) != 0) {
        throw CheckpointError("not a tensor file (bad magic): " + file.string());
    }
    std::uint64_t count = read_u64(in, file.string());
    std::map<std::string, Tensor> out;
    for (std::uint64_t i = 0; i < count; ++i) {
        std::uint32_t name_len = read_u32(in, file.string());
        if (name_len > 4096) {
            throw CheckpointError("corrupt tensor name length in " + file.string());
        }
        std::string name(name_len, '\0');
        if (!in.read(name.data(), name_len)) {
            throw CheckpointError("truncated tensor file: " + file.string());
        }
        std::uint32_t ndim = read_u32(in, file.string());
        if (ndim > 8) throw CheckpointError("corrupt tensor rank in " + file.string());
        std::vector<int> shape(ndim);
        for (auto& d : shape) d = static_cast<int>(read_u32(in, file.string()));
        Tensor t(shape);
        if (!in.read(reinterpret_cast<char*>(t.data()),
                     static_cast<std::streamsize>(t.size() * sizeof(double)))) {
            throw CheckpointError("truncated tensor data in " + file.string());
        }
        if (!out.emplace(std::move(name), std::move(t)).second) {
            throw CheckpointError("duplicate tensor name in " + file.string());
        }
    }
    return out;
}

// ------------------------------------------------------------ checkpoints

void save_checkpoint(Model& model, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw CheckpointError("cannot create checkpoint dir: " + dir.string());

    std::vector<std::pair<std::string, const Tensor*>> tensors;
    for (nn::Param* p : model.params()) tensors.emplace_back(p->name, &p->value);
    for (nn::Param* p : model.buffers()) tensors.emplace_back(p->name, &p->value);
    save_named_tensors(dir / kParamsFile, tensors);

    const ModelSpec& spec = model.spec();
    nlohmann::json meta = {
        {"kind", to_string(spec.kind)},
        {"backbone_id", spec.backbone_id},
        {"num_classes", spec.num_classes},
        {"head_units", spec.head_units},
        {"freeze_backbone", spec.freeze_backbone},
        {"normalization_policy", to_string(model.normalization())},
        {"seed", spec.seed},
        {"framework_version", kFrameworkVersion},
    };
    std::ofstream out(dir / kModelJson, std::ios::trunc);
    if (!out) throw CheckpointError("cannot write " + (dir / kModelJson).string());
    out << meta.dump(2) << "\n";
    out.flush();
    if (!out) throw CheckpointError("write failed: " + (dir / kModelJson).string());
}

Model load_checkpoint(const std::filesystem::path& dir, int expected_num_classes) {
    std::filesystem::path meta_path = dir / kModelJson;
    if (!std::filesystem::exists(meta_path)) {
        throw CheckpointError("checkpoint has no model.json: " + dir.string());
    }
    nlohmann::json meta;
    try {
        std::ifstream in(meta_path);
        in >> meta;
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError("cannot parse " + meta_path.string() + ": " + e.what());
    }

    ModelSpec spec;
    try {
        spec.kind = model_kind_from_string(meta.at("kind").get<std::string>());
        spec.backbone_id = meta.at("backbone_id").get<std::string>();
        spec.num_classes = meta.at("num_classes").get<int>();
        spec.head_units = meta.at("head_units").get<int>();
        spec.freeze_backbone = meta.at("freeze_backbone").get<bool>();
        spec.seed = meta.at("seed").get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError("model.json missing field: " + std::string(e.what()));
    }
    spec.pretrained = false;  // parameters come from params.bin

    if (expected_num_classes > 0 && expected_num_classes != spec.num_classes) {
        throw ShapeError("checkpoint has " + std::to_string(spec.num_classes) +
                         " classes but " + std::to_string(expected_num_classes) +
                         " were requested");
    }

    Model model = build_model(spec);

    std::string stored_norm = meta.value("normalization_policy", "");
    if (!stored_norm.empty() && stored_norm != to_string(model.normalization())) {
        throw CheckpointError("checkpoint normalization_policy '" + stored_norm +
                              "' does not match the rebuilt model ('" +
                              to_string(model.normalization()) + "')");
    }

    std::map<std::string, Tensor> tensors = load_named_tensors(dir / kParamsFile);
    std::vector<nn::Param*> targets = model.params();
    for (nn::Param* p : model.buffers()) targets.push_back(p);
    for (nn::Param* p : targets) {
        auto it = tensors.find(p->name);
        if (it == tensors.end()) {
            throw CheckpointError("checkpoint is missing tensor '" + p->name + "'");
        }
        if (!it->second.same_shape(p->value)) {
            throw CheckpointError("checkpoint tensor '" + p->name + "' has shape " +
                                  it->second.shape_string() + ", expected " +
                                  p->value.shape_string());
        }
        p->value = std::move(it->second);
        tensors.erase(it);
    }
    if (!tensors.empty()) {
        throw CheckpointError("checkpoint has unexpected tensor '" +
                              tensors.begin()->first + "'");
    }
    return model;
}

}  // namespace busi
