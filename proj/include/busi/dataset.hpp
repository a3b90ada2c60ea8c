#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace busi {

enum class Split { unassigned, train, validation, test };

std::string to_string(Split s);
Split split_from_string(const std::string& s);  // throws ParseError

struct Sample {
    std::filesystem::path path;
    std::string class_name;
    int label = 0;
    Split split = Split::unassigned;

    bool operator==(const Sample& other) const = default;
};

struct SplitRatios {
    double train = 0.70;
    double validation = 0.15;
    double test = 0.15;

    /// Throws BadRatiosError unless all ratios are in (0,1) and they sum
    /// to 1 within 1e-9.
    void validate() const;

    bool operator==(const SplitRatios& other) const = default;
};

struct DatasetManifest {
    std::vector<Sample> samples;        // ordered by (class_name, filename)
    std::vector<std::string> class_names;  // sorted, label = index
    std::uint64_t seed = 0;             // shuffle seed used by the split
    SplitRatios ratios;                 // ratios used by the split

    std::map<std::string, std::int64_t> counts_per_class() const;
    std::int64_t count(Split s) const;
    std::int64_t count(Split s, const std::string& class_name) const;
    /// Indices into `samples` belonging to a split, in manifest order.
    std::vector<std::size_t> split_indices(Split s) const;

    bool operator==(const DatasetManifest& other) const = default;
};

/// True for the image extensions the scanner accepts:
/// .png/.jpg/.jpeg, any case.
bool is_image_file(const std::filesystem::path& p);

/// Walk `root/<class_name>/<image files>` and build an unsplit manifest.
/// Class names come from the subdirectory names, sorted; labels are the
/// indices into that sorted list. Accepts .png/.jpg/.jpeg (any case).
DatasetManifest scan_dataset(const std::filesystem::path& root);

/// Assign splits class by class: train = floor(train_ratio * n),
/// validation = floor(remainder / 2), test = the rest. Membership is
/// decided by a shuffle seeded with (seed, class_name), so adding or
/// removing one class never changes another class's assignment.
DatasetManifest stratified_split(const DatasetManifest& manifest,
                                 const SplitRatios& ratios, std::uint64_t seed);

/// Writes `path` (CSV: path,class_name,label,split) plus a sidecar
/// `<stem>.meta.json` holding {class_names, seed, ratios}.
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& csv_path);

DatasetManifest load_manifest(const std::filesystem::path& csv_path);

/// Sidecar path for a manifest CSV: `dir/manifest.csv -> dir/manifest.meta.json`.
std::filesystem::path manifest_meta_path(const std::filesystem::path& csv_path);

}  // namespace busi
