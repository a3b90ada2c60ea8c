#include "busi/dataset.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>

#include "busi/errors.hpp"
#include "busi/rng.hpp"
#include "csv.hpp"

namespace busi {

bool is_image_file(const std::filesystem::path& p) {
    std::string ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

std::string to_string(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::validation: return "validation";
        case Split::test: return "test";
        case Split::unassigned: return "unassigned";
    }
    return "unassigned";
}

Split split_from_string(const std::string& s) {
    if (s == "train") return Split::train;
    if (s == "validation") return Split::validation;
    if (s == "test") return Split::test;
    if (s == "unassigned") return Split::unassigned;
    throw ParseError("unknown split token '" + s + "'");
}

void SplitRatios::validate() const {
    for (double r : {train, validation, test}) {
        if (!(r > 0.0 && r < 1.0)) {
            throw BadRatiosError("split ratios must lie in (0,1)");
        }
    }
    if (std::abs(train + validation + test - 1.0) > 1e-9) {
        throw BadRatiosError("split ratios must sum to 1");
    }
}

std::map<std::string, std::int64_t> DatasetManifest::counts_per_class() const {
    std::map<std::string, std::int64_t> counts;
    for (const std::string& name : class_names) counts[name] = 0;
    for (const Sample& s : samples) ++counts[s.class_name];
    return counts;
}

std::int64_t DatasetManifest::count(Split s) const {
    std::int64_t n = 0;
    for (const Sample& sample : samples) n += (sample.split == s);
    return n;
}

std::int64_t DatasetManifest::count(Split s, const std::string& class_name) const {
    std::int64_t n = 0;
    for (const Sample& sample : samples) {
        n += (sample.split == s && sample.class_name == class_name);
    }
    return n;
}

std::vector<std::size_t> DatasetManifest::split_indices(Split s) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (samples[i].split == s) out.push_back(i);
    }
    return out;
}

DatasetManifest scan_dataset(const std::filesystem::path& root) {
    std::error_code ec;
    if (!std::filesystem::is_directory(root, ec)) {
        throw NotFoundError("dataset root not found: " + root.string());
    }

    std::vector<std::string> class_names;
    for (const auto& entry : std::filesystem::directory_iterator(root)) {
        if (entry.is_directory()) class_names.push_back(entry.path().filename().string());
    }
    std::sort(class_names.begin(), class_names.end());
    if (class_names.empty()) {
        throw EmptyDatasetError("no class directories under " + root.string());
    }

    DatasetManifest manifest;
    manifest.class_names = class_names;
    for (std::size_t label = 0; label < class_names.size(); ++label) {
        const std::string& name = class_names[label];
        std::vector<std::filesystem::path> files;
        for (const auto& entry : std::filesystem::directory_iterator(root / name)) {
            if (entry.is_regular_file() && is_image_file(entry.path())) {
                files.push_back(entry.path());
            }
        }
        if (files.empty()) {
            throw EmptyClassError("class '" + name + "' has no image files");
        }
        std::sort(files.begin(), files.end(), [](const auto& a, const auto& b) {
            return a.filename().string() < b.filename().string();
        });
        for (auto& f : files) {
            manifest.samples.push_back(
                Sample{std::move(f), name, static_cast<int>(label), Split::unassigned});
        }
    }
    return manifest;
}

DatasetManifest stratified_split(const DatasetManifest& manifest,
                                 const SplitRatios& ratios, std::uint64_t seed) {
    ratios.validate();

    DatasetManifest out = manifest;
    out.seed = seed;
    out.ratios = ratios;

    for (const std::string& name : manifest.class_names) {
        std::vector<std::size_t> indices;
        for (std::size_t i = 0; i < manifest.samples.size(); ++i) {
            if (manifest.samples[i].class_name == name) indices.push_back(i);
        }
        std::int64_t n = static_cast<std::int64_t>(indices.size());
        if (n < 3) {
            throw ClassTooSmallError("class '" + name + "' has " + std::to_string(n) +
                                     " samples; at least 3 are required to split");
        }

        // Small epsilon so that exact products like 0.7 * 10 do not land
        // just below the integer they represent.
        std::int64_t n_train =
            static_cast<std::int64_t>(std::floor(ratios.train * static_cast<double>(n) + 1e-9));
        std::int64_t remainder = n - n_train;
        std::int64_t n_validation = remainder / 2;
        std::int64_t n_test = remainder - n_validation;

        Rng rng(mix_seed(seed, name));
        rng.shuffle(indices);

        for (std::int64_t i = 0; i < n; ++i) {
            Split s = i < n_train                  ? Split::train
                      : i < n_train + n_validation ? Split::validation
                                                   : Split::test;
            out.samples[indices[static_cast<std::size_t>(i)]].split = s;
        }
        (void)n_test;
    }
    return out;
}

std::filesystem::path manifest_meta_path(const std::filesystem::path& csv_path) {
    std::filesystem::path meta = csv_path;
    meta.replace_extension(".meta.json");
    return meta;
}

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& csv_path) {
    std::ofstream csv(csv_path);
    if (!csv) throw IoError("cannot write " + csv_path.string());
    csv << "path,class_name,label,split\n";
    for (const Sample& s : manifest.samples) {
        csv << detail::csv_escape(s.path.string()) << ","
            << detail::csv_escape(s.class_name) << ","
            << s.label << ","
            << to_string(s.split) << "\n";
    }
    if (!csv) throw IoError("failed writing " + csv_path.string());

    nlohmann::json meta;
    meta["class_names"] = manifest.class_names;
    meta["seed"] = manifest.seed;
    meta["ratios"] = {{"train", manifest.ratios.train},
                      {"validation", manifest.ratios.validation},
                      {"test", manifest.ratios.test}};
    std::ofstream json_out(manifest_meta_path(csv_path));
    if (!json_out) throw IoError("cannot write " + manifest_meta_path(csv_path).string());
    json_out << meta.dump(2) << "\n";
}

DatasetManifest load_manifest(const std::filesystem::path& csv_path) {
    std::ifstream csv(csv_path);
    if (!csv) throw NotFoundError("manifest not found: " + csv_path.string());

    DatasetManifest manifest;

    std::string line;
    if (!std::getline(csv, line) || line != "path,class_name,label,split") {
        throw ParseError("line 1: expected header path,class_name,label,split");
    }
    int line_number = 1;
    while (std::getline(csv, line)) {
        ++line_number;
        if (line.empty()) continue;
        std::vector<std::string> fields = detail::csv_split(line, line_number);
        if (fields.size() != 4) {
            throw ParseError("line " + std::to_string(line_number) + ": expected 4 fields, got " +
                             std::to_string(fields.size()));
        }
        Sample s;
        s.path = fields[0];
        s.class_name = fields[1];
        try {
            std::size_t used = 0;
            s.label = std::stoi(fields[2], &used);
            if (used != fields[2].size()) throw std::invalid_argument("trailing chars");
        } catch (const std::exception&) {
            throw ParseError("line " + std::to_string(line_number) + ": bad label '" +
                             fields[2] + "'");
        }
        try {
            s.split = split_from_string(fields[3]);
        } catch (const ParseError& e) {
            throw ParseError("line " + std::to_string(line_number) + ": " + e.what());
        }
        manifest.samples.push_back(std::move(s));
    }

    std::filesystem::path meta_path = manifest_meta_path(csv_path);
    std::ifstream json_in(meta_path);
    if (!json_in) throw NotFoundError("manifest sidecar not found: " + meta_path.string());
    nlohmann::json meta;
    try {
        json_in >> meta;
        manifest.class_names = meta.at("class_names").get<std::vector<std::string>>();
        manifest.seed = meta.at("seed").get<std::uint64_t>();
        manifest.ratios.train = meta.at("ratios").at("train").get<double>();
        manifest.ratios.validation = meta.at("ratios").at("validation").get<double>();
        manifest.ratios.test = meta.at("ratios").at("test").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("bad manifest sidecar " + meta_path.string() + ": " + e.what());
    }

    for (const Sample& s : manifest.samples) {
        if (s.label < 0 || s.label >= static_cast<int>(manifest.class_names.size()) ||
            manifest.class_names[static_cast<std::size_t>(s.label)] != s.class_name) {
            throw ParseError("sample '" + s.path.string() +
                             "' has label inconsistent with class_names");
        }
    }
    return manifest;
}

}  // namespace busi
