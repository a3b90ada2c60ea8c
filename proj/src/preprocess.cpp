#include "busi/preprocess.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "busi/errors.hpp"
#include "busi/rng.hpp"

namespace busi {

std::string to_string(const Normalization& n) {
    if (n.policy == NormalizePolicy::unit_scale) return "unit_scale";
    return "backbone:" + n.backbone_id;
}

Normalization normalization_from_string(const std::string& s) {
    if (s == "unit_scale") return Normalization{NormalizePolicy::unit_scale, ""};
    const std::string prefix = "backbone:";
    if (s.rfind(prefix, 0) == 0) {
        return Normalization{NormalizePolicy::backbone_specific, s.substr(prefix.size())};
    }
    throw ParseError("unknown normalization policy '" + s + "'");
}

const InputConvention& input_convention(const std::string& backbone_id) {
    // resnet50 / vgg16 follow the caffe-style convention their reference
    // checkpoints were trained with: BGR order, ImageNet channel means,
    // no scaling. mobilenet maps to [-1, 1] in RGB order.
    static const InputConvention caffe_bgr{
        true, {103.939, 116.779, 123.68}, {1.0, 1.0, 1.0}};
    static const InputConvention symmetric_unit{
        false, {127.5, 127.5, 127.5}, {127.5, 127.5, 127.5}};
    if (backbone_id == "resnet50" || backbone_id == "vgg16") return caffe_bgr;
    if (backbone_id == "mobilenet") return symmetric_unit;
    throw UnknownBackboneError("unknown backbone '" + backbone_id + "'");
}

Tensor load_and_resize(const std::filesystem::path& path, int target_height,
                       int target_width) {
    cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
    if (bgr.empty()) {
        throw DecodeError("cannot decode image " + path.string());
    }
    cv::Mat rgb;
    cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
    cv::Mat rgb64;
    rgb.convertTo(rgb64, CV_64FC3);
    if (rgb64.rows != target_height || rgb64.cols != target_width) {
        cv::resize(rgb64, rgb64, cv::Size(target_width, target_height), 0.0, 0.0,
                   cv::INTER_LINEAR);
    }

    Tensor out({target_height, target_width, 3});
    for (int y = 0; y < target_height; ++y) {
        const cv::Vec3d* row = rgb64.ptr<cv::Vec3d>(y);
        for (int x = 0; x < target_width; ++x) {
            for (int c = 0; c < 3; ++c) out.at(y, x, c) = row[x][c];
        }
    }
    return out;
}

Tensor normalize(const Tensor& image, const Normalization& policy) {
    if (image.ndim() != 3 || image.dim(2) != 3) {
        throw ShapeError("normalize: expected an HWC image with 3 channels, got " +
                         image.shape_string());
    }
    InputConvention conv;  // unit_scale default: x / 255 in RGB order
    if (policy.policy == NormalizePolicy::backbone_specific) {
        conv = input_convention(policy.backbone_id);
    }

    int h = image.dim(0);
    int w = image.dim(1);
    Tensor out({h, w, 3});
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int c = 0; c < 3; ++c) {
                int src = conv.swap_to_bgr ? 2 - c : c;
                out.at(y, x, c) = (image.at(y, x, src) - conv.mean[c]) / conv.stddev[c];
            }
        }
    }
    return out;
}

Tensor one_hot(const std::vector<int>& labels, int num_classes) {
    Tensor out({static_cast<int>(labels.size()), num_classes});
    for (std::size_t i = 0; i < labels.size(); ++i) {
        int label = labels[i];
        if (label < 0 || label >= num_classes) {
            throw LabelError("one_hot: label " + std::to_string(label) +
                             " out of range for K=" + std::to_string(num_classes));
        }
        out.at(static_cast<int>(i), label) = 1.0;
    }
    return out;
}

BatchIterator::BatchIterator(const DatasetManifest& manifest, Split split,
                             int batch_size, bool shuffle, std::uint64_t seed,
                             int epoch, const Normalization& normalization,
                             int target_height, int target_width)
    : batch_size_(static_cast<std::size_t>(batch_size)),
      num_classes_(static_cast<int>(manifest.class_names.size())),
      normalization_(normalization),
      target_height_(target_height),
      target_width_(target_width) {
    if (batch_size < 1) throw Error("batch_size must be >= 1");
    for (const Sample& s : manifest.samples) {
        if (s.split == split) items_.push_back(Item{s.path, s.label});
    }
    if (items_.empty()) {
        throw EmptySplitError("split '" + to_string(split) + "' is empty");
    }
    order_.resize(items_.size());
    for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
    if (shuffle) {
        Rng rng(mix_seed(seed, static_cast<std::uint64_t>(epoch)));
        rng.shuffle(order_);
    }
}

std::optional<Batch> BatchIterator::next() {
    if (cursor_ >= order_.size()) return std::nullopt;
    std::size_t end = std::min(cursor_ + batch_size_, order_.size());
    int n = static_cast<int>(end - cursor_);

    Batch batch;
    batch.images = Tensor({n, target_height_, target_width_, 3});
    batch.labels.reserve(static_cast<std::size_t>(n));

    std::int64_t image_size =
        static_cast<std::int64_t>(target_height_) * target_width_ * 3;
    for (int i = 0; i < n; ++i) {
        const Item& item = items_[order_[cursor_ + static_cast<std::size_t>(i)]];
        Tensor image = normalize(
            load_and_resize(item.path, target_height_, target_width_), normalization_);
        std::copy(image.data(), image.data() + image_size,
                  batch.images.data() + i * image_size);
        batch.labels.push_back(item.label);
    }
    batch.one_hot = one_hot(batch.labels, num_classes_);
    cursor_ = end;
    return batch;
}

}  // namespace busi
