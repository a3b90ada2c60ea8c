#pragma once

// Shared test fixtures: scratch directories, synthetic PNGs, and the
// class-foldered corpora the dataset/training tests run on.

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "busi/rng.hpp"

namespace busitest {

namespace fs = std::filesystem;

inline std::atomic<int>& scratch_counter() {
    static std::atomic<int> counter{0};
    return counter;
}

// Unique scratch directory, removed on destruction.
class ScratchDir {
public:
    explicit ScratchDir(const std::string& tag) {
        dir_ = fs::temp_directory_path() /
               ("busi_test_" + tag + "_" + std::to_string(scratch_counter()++));
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    ~ScratchDir() {
        std::error_code ec;
        fs::remove_all(dir_, ec);
    }
    ScratchDir(const ScratchDir&) = delete;
    ScratchDir& operator=(const ScratchDir&) = delete;

    const fs::path& path() const { return dir_; }

private:
    fs::path dir_;
};

// Solid-color PNG (given as RGB), optionally with clamped Gaussian noise.
inline void write_png(const fs::path& path, int height, int width, int r, int g,
                      int b, double noise_sigma = 0.0, std::uint64_t seed = 0) {
    cv::Mat img(height, width, CV_8UC3, cv::Scalar(b, g, r));  // OpenCV is BGR
    if (noise_sigma > 0.0) {
        busi::Rng rng(seed);
        for (int y = 0; y < height; ++y) {
            auto* row = img.ptr<cv::Vec3b>(y);
            for (int x = 0; x < width; ++x) {
                for (int c = 0; c < 3; ++c) {
                    double v = row[x][c] + rng.normal() * noise_sigma;
                    row[x][c] = static_cast<unsigned char>(
                        std::min(255.0, std::max(0.0, std::round(v))));
                }
            }
        }
    }
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    cv::imwrite(path.string(), img);
}

// Single-channel PNG, for the grayscale-replication contract.
inline void write_gray_png(const fs::path& path, int height, int width, int value) {
    cv::Mat img(height, width, CV_8UC1, cv::Scalar(value));
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    cv::imwrite(path.string(), img);
}

// root/<class>/img_<i>.png corpus. One PNG per class is encoded for real;
// the rest are byte copies, which keeps even a many-thousand-file corpus cheap.
inline void make_corpus(const fs::path& root,
                        const std::vector<std::pair<std::string, int>>& class_sizes,
                        int image_size = 8) {
    int hue = 0;
    for (const auto& [class_name, count] : class_sizes) {
        const fs::path dir = root / class_name;
        fs::create_directories(dir);
        if (count <= 0) continue;
        char first_name[32];
        std::snprintf(first_name, sizeof(first_name), "img_%06d.png", 0);
        const fs::path first = dir / first_name;
        write_png(first, image_size, image_size, (60 + 70 * hue) % 256,
                  (120 + 40 * hue) % 256, (200 + 90 * hue) % 256);
        for (int i = 1; i < count; ++i) {
            char name[32];
            std::snprintf(name, sizeof(name), "img_%06d.png", i);
            fs::copy_file(first, dir / name);
        }
        ++hue;
    }
}

// The separable 3-class set: solid red/green/blue plus sigma=0.01 noise
// (0.01 in unit scale = 2.55 gray levels). Class names sort to the same
// order as the label indices.
inline void make_separable_corpus(const fs::path& root, int per_class = 10,
                                  int image_size = 16, std::uint64_t seed = 1234) {
    const struct {
        const char* name;
        int r, g, b;
    } classes[] = {{"blue", 0, 0, 255}, {"green", 0, 255, 0}, {"red", 255, 0, 0}};
    std::uint64_t file_seed = seed;
    for (const auto& cls : classes) {
        for (int i = 0; i < per_class; ++i) {
            char name[32];
            std::snprintf(name, sizeof(name), "img_%03d.png", i);
            write_png(root / cls.name / name, image_size, image_size, cls.r, cls.g,
                      cls.b, /*noise_sigma=*/2.55, ++file_seed);
        }
    }
}

}  // namespace busitest
