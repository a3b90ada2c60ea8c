#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "busi/dataset.hpp"
#include "busi/tensor.hpp"

namespace busi {

constexpr int kDefaultImageSize = 224;

enum class NormalizePolicy { unit_scale, backbone_specific };

struct Normalization {
    NormalizePolicy policy = NormalizePolicy::unit_scale;
    std::string backbone_id;  // used when policy == backbone_specific

    bool operator==(const Normalization& other) const = default;
};

std::string to_string(const Normalization& n);
Normalization normalization_from_string(const std::string& s);

/// Input convention of a pretrained backbone: optional RGB->BGR swap,
/// then (x - mean) / std per channel on the swapped layout.
struct InputConvention {
    bool swap_to_bgr = false;
    double mean[3] = {0.0, 0.0, 0.0};
    double stddev[3] = {255.0, 255.0, 255.0};
};

/// Registry of documented per-backbone conventions; throws
/// UnknownBackboneError for ids that are not registered.
const InputConvention& input_convention(const std::string& backbone_id);

/// Decode a PNG/JPEG file and bilinearly resize to target size.
/// Output is HWC, RGB, values in [0, 255]. Grayscale files are
/// replicated to 3 channels. A file already at the target size is
/// passed through untouched.
Tensor load_and_resize(const std::filesystem::path& path,
                       int target_height = kDefaultImageSize,
                       int target_width = kDefaultImageSize);

/// Apply a normalization policy to an HWC image with values in [0, 255].
Tensor normalize(const Tensor& image, const Normalization& policy);

/// One-hot encode labels into an (n, num_classes) matrix.
Tensor one_hot(const std::vector<int>& labels, int num_classes);

struct Batch {
    Tensor images;            // (n, h, w, 3), normalized
    std::vector<int> labels;  // length n
    Tensor one_hot;           // (n, K)
};

/// Single-epoch batch stream over one split of a manifest. Decoding is
/// lazy (per batch). Order is the manifest order, or a shuffle that is a
/// pure function of (seed, epoch).
class BatchIterator {
public:
    BatchIterator(const DatasetManifest& manifest, Split split, int batch_size,
                  bool shuffle, std::uint64_t seed, int epoch,
                  const Normalization& normalization,
                  int target_height = kDefaultImageSize,
                  int target_width = kDefaultImageSize);

    /// Next batch, or nullopt at end of epoch. The final batch may be short.
    std::optional<Batch> next();

    std::size_t size() const { return order_.size(); }
    std::size_t num_batches() const {
        return (order_.size() + batch_size_ - 1) / batch_size_;
    }

private:
    struct Item {
        std::filesystem::path path;
        int label;
    };

    std::vector<Item> items_;          // split samples in manifest order
    std::vector<std::size_t> order_;   // iteration order over items_
    std::size_t cursor_ = 0;
    std::size_t batch_size_;
    int num_classes_;
    Normalization normalization_;
    int target_height_;
    int target_width_;
};

}  // namespace busi
