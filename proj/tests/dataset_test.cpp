#include <doctest.h>

#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "busi/dataset.hpp"
#include "busi/errors.hpp"
#include "busi/rng.hpp"
#include "helpers.hpp"

using namespace busi;
using busitest::ScratchDir;

namespace {

// In-memory manifest with fake paths; the split operates purely on it.
DatasetManifest synthetic_manifest(const std::vector<std::pair<std::string, int>>& sizes) {
    DatasetManifest m;
    for (const auto& [name, count] : sizes) m.class_names.push_back(name);
    std::sort(m.class_names.begin(), m.class_names.end());
    for (const auto& name : m.class_names) {
        int count = 0;
        for (const auto& [n, c] : sizes)
            if (n == name) count = c;
        int label = static_cast<int>(
            std::find(m.class_names.begin(), m.class_names.end(), name) -
            m.class_names.begin());
        for (int i = 0; i < count; ++i) {
            char file[32];
            std::snprintf(file, sizeof(file), "img_%06d.png", i);
            m.samples.push_back({std::filesystem::path(name) / file, name, label,
                                 Split::unassigned});
        }
    }
    return m;
}

std::map<std::string, std::array<std::int64_t, 3>> split_counts(
    const DatasetManifest& m) {
    std::map<std::string, std::array<std::int64_t, 3>> out;
    for (const auto& name : m.class_names) {
        out[name] = {m.count(Split::train, name), m.count(Split::validation, name),
                     m.count(Split::test, name)};
    }
    return out;
}

}  // namespace

TEST_CASE("scan_dataset sorts classes and orders samples deterministically") {
    ScratchDir scratch("scan");
    busitest::make_corpus(scratch.path(), {{"b", 3}, {"a", 2}});

    DatasetManifest m = scan_dataset(scratch.path());

    CHECK(m.class_names == std::vector<std::string>{"a", "b"});
    REQUIRE(m.samples.size() == 5);
    // (class_name, filename) order; labels follow the sorted class list
    CHECK(m.samples[0].class_name == "a");
    CHECK(m.samples[0].label == 0);
    CHECK(m.samples[1].class_name == "a");
    CHECK(m.samples[2].class_name == "b");
    CHECK(m.samples[2].label == 1);
    CHECK(m.samples[0].path.filename() == "img_000000.png");
    CHECK(m.samples[1].path.filename() == "img_000001.png");
    auto counts = m.counts_per_class();
    CHECK(counts["a"] == 2);
    CHECK(counts["b"] == 3);
    for (const auto& s : m.samples) CHECK(s.split == Split::unassigned);
}

TEST_CASE("scan_dataset handles a single one-image class") {
    ScratchDir scratch("scan1");
    busitest::make_corpus(scratch.path(), {{"a", 1}});
    DatasetManifest m = scan_dataset(scratch.path());
    CHECK(m.class_names == std::vector<std::string>{"a"});
    REQUIRE(m.samples.size() == 1);
    CHECK(m.samples[0].label == 0);
}

TEST_CASE("scan_dataset ignores non-image files and accepts uppercase extensions") {
    ScratchDir scratch("scanext");
    busitest::make_corpus(scratch.path(), {{"a", 2}});
    std::ofstream(scratch.path() / "a" / "notes.txt") << "not an image\n";
    std::ofstream(scratch.path() / "a" / "thumbs.db") << "x";
    std::filesystem::copy_file(scratch.path() / "a" / "img_000000.png",
                               scratch.path() / "a" / "UPPER.PNG");
    std::filesystem::copy_file(scratch.path() / "a" / "img_000000.png",
                               scratch.path() / "a" / "photo.JPeG");

    DatasetManifest m = scan_dataset(scratch.path());
    CHECK(m.samples.size() == 4);  // 2 png + UPPER.PNG + photo.JPeG

    CHECK(is_image_file("x.png"));
    CHECK(is_image_file("x.JPG"));
    CHECK(is_image_file("x.jpeg"));
    CHECK_FALSE(is_image_file("x.txt"));
    CHECK_FALSE(is_image_file("png"));  // no extension
}

TEST_CASE("scan_dataset error cases") {
    ScratchDir scratch("scanerr");

    SUBCASE("missing root") {
        CHECK_THROWS_AS(scan_dataset(scratch.path() / "nope"), NotFoundError);
    }
    SUBCASE("no class directories") {
        CHECK_THROWS_AS(scan_dataset(scratch.path()), EmptyDatasetError);
    }
    SUBCASE("class directory without images names the class") {
        busitest::make_corpus(scratch.path(), {{"full", 2}});
        std::filesystem::create_directories(scratch.path() / "hollow");
        CHECK_THROWS_WITH_AS(scan_dataset(scratch.path()),
                             doctest::Contains("hollow"), EmptyClassError);
    }
}

TEST_CASE("SplitRatios validation") {
    CHECK_NOTHROW(SplitRatios{}.validate());
    CHECK_NOTHROW(SplitRatios{0.6, 0.2, 0.2}.validate());
    CHECK_THROWS_AS((SplitRatios{0.5, 0.3, 0.3}.validate()), BadRatiosError);
    CHECK_THROWS_AS((SplitRatios{1.0, 0.0, 0.0}.validate()), BadRatiosError);
    CHECK_THROWS_AS((SplitRatios{-0.1, 0.55, 0.55}.validate()), BadRatiosError);
}

TEST_CASE("stratified_split floor/remainder arithmetic") {
    SplitRatios ratios;  // 0.70 / 0.15 / 0.15

    SUBCASE("n=3 boundary gives (2, 0, 1)") {
        auto m = stratified_split(synthetic_manifest({{"a", 3}}), ratios, 1);
        auto c = split_counts(m);
        CHECK(c["a"] == std::array<std::int64_t, 3>{2, 0, 1});
    }
    SUBCASE("n=10 gives (7, 1, 2)") {
        auto m = stratified_split(synthetic_manifest({{"a", 10}}), ratios, 1);
        auto c = split_counts(m);
        CHECK(c["a"] == std::array<std::int64_t, 3>{7, 1, 2});
    }
    SUBCASE("Table-style corpus counts are exact") {
        auto m = stratified_split(
            synthetic_manifest({{"benign", 4711}, {"malignant", 4271}, {"normal", 266}}),
            ratios, 42);
        auto c = split_counts(m);
        CHECK(c["benign"] == std::array<std::int64_t, 3>{3297, 707, 707});
        CHECK(c["malignant"] == std::array<std::int64_t, 3>{2989, 641, 641});
        CHECK(c["normal"] == std::array<std::int64_t, 3>{186, 40, 40});
        CHECK(m.count(Split::train) == 6472);
        CHECK(m.count(Split::validation) == 1388);
        CHECK(m.count(Split::test) == 1388);
    }
}

TEST_CASE("stratified_split error cases") {
    SUBCASE("class below 3 samples") {
        CHECK_THROWS_AS(stratified_split(synthetic_manifest({{"a", 2}, {"b", 5}}),
                                         SplitRatios{}, 1),
                        ClassTooSmallError);
    }
    SUBCASE("bad ratios") {
        CHECK_THROWS_AS(stratified_split(synthetic_manifest({{"a", 9}}),
                                         SplitRatios{0.5, 0.3, 0.3}, 1),
                        BadRatiosError);
    }
}

TEST_CASE("stratified_split conservation and balance properties") {
    Rng rng(777);
    SplitRatios ratios;
    for (int iteration = 0; iteration < 40; ++iteration) {
        int na = 3 + static_cast<int>(rng.below(400));
        int nb = 3 + static_cast<int>(rng.below(400));
        auto m = stratified_split(synthetic_manifest({{"a", na}, {"b", nb}}), ratios,
                                  rng.next_u64());
        auto c = split_counts(m);
        // conservation per class
        CHECK(c["a"][0] + c["a"][1] + c["a"][2] == na);
        CHECK(c["b"][0] + c["b"][1] + c["b"][2] == nb);
        // floor law and even remainder split
        CHECK(c["a"][0] == static_cast<std::int64_t>(0.70 * na + 1e-9));
        CHECK(std::abs(c["a"][1] - c["a"][2]) <= 1);
        CHECK(std::abs(c["b"][1] - c["b"][2]) <= 1);
        // nothing left unassigned
        for (const auto& s : m.samples) CHECK(s.split != Split::unassigned);
    }
}

TEST_CASE("stratified_split is deterministic in the seed") {
    auto base = synthetic_manifest({{"a", 50}, {"b", 41}});
    auto m1 = stratified_split(base, SplitRatios{}, 9);
    auto m2 = stratified_split(base, SplitRatios{}, 9);
    CHECK(m1 == m2);

    auto m3 = stratified_split(base, SplitRatios{}, 10);
    // counts identical, membership permuted
    CHECK(split_counts(m1) == split_counts(m3));
    bool any_moved = false;
    for (std::size_t i = 0; i < m1.samples.size(); ++i)
        if (m1.samples[i].split != m3.samples[i].split) any_moved = true;
    CHECK(any_moved);
}

TEST_CASE("per-class seeding isolates classes from each other") {
    auto two = stratified_split(synthetic_manifest({{"a", 41}, {"b", 53}}),
                                SplitRatios{}, 4);
    auto three = stratified_split(
        synthetic_manifest({{"a", 41}, {"b", 53}, {"c", 17}}), SplitRatios{}, 4);

    std::map<std::string, Split> assignment_two, assignment_three;
    for (const auto& s : two.samples) assignment_two[s.path.string()] = s.split;
    for (const auto& s : three.samples)
        if (s.class_name != "c") assignment_three[s.path.string()] = s.split;
    CHECK(assignment_two == assignment_three);
}

TEST_CASE("manifest round trip preserves everything") {
    ScratchDir scratch("roundtrip");
    auto m = stratified_split(synthetic_manifest({{"a", 11}, {"b", 7}}),
                              SplitRatios{}, 33);
    m.seed = 33;

    auto csv = scratch.path() / "manifest.csv";
    save_manifest(m, csv);
    CHECK(std::filesystem::exists(csv));
    CHECK(std::filesystem::exists(manifest_meta_path(csv)));
    CHECK(manifest_meta_path(csv).filename() == "manifest.meta.json");

    DatasetManifest loaded = load_manifest(csv);
    CHECK(loaded == m);
}

TEST_CASE("manifest CSV rows parse by inspection") {
    ScratchDir scratch("parse");
    auto csv = scratch.path() / "manifest.csv";
    std::ofstream(csv) << "path,class_name,label,split\n"
                       << "img/b1.png,benign,0,train\n";
    std::ofstream(manifest_meta_path(csv))
        << R"({"class_names":["benign"],"seed":5,)"
        << R"("ratios":{"train":0.7,"validation":0.15,"test":0.15}})";

    DatasetManifest m = load_manifest(csv);
    REQUIRE(m.samples.size() == 1);
    CHECK(m.samples[0].path == std::filesystem::path("img/b1.png"));
    CHECK(m.samples[0].class_name == "benign");
    CHECK(m.samples[0].label == 0);
    CHECK(m.samples[0].split == Split::train);
    CHECK(m.seed == 5);
}

TEST_CASE("manifest parse errors carry the line number") {
    ScratchDir scratch("parseerr");
    auto csv = scratch.path() / "manifest.csv";
    std::ofstream(manifest_meta_path(csv))
        << R"({"class_names":["benign"],"seed":0,)"
        << R"("ratios":{"train":0.7,"validation":0.15,"test":0.15}})";

    SUBCASE("unknown split token") {
        std::ofstream(csv) << "path,class_name,label,split\n"
                           << "img/b1.png,benign,0,eval\n";
        CHECK_THROWS_WITH_AS(load_manifest(csv), doctest::Contains("line 2"),
                             ParseError);
    }
    SUBCASE("wrong field count") {
        std::ofstream(csv) << "path,class_name,label,split\n"
                           << "img/b1.png,benign,0\n";
        CHECK_THROWS_AS(load_manifest(csv), ParseError);
    }
    SUBCASE("non-numeric label") {
        std::ofstream(csv) << "path,class_name,label,split\n"
                           << "img/b1.png,benign,zero,train\n";
        CHECK_THROWS_AS(load_manifest(csv), ParseError);
    }
    SUBCASE("bad header") {
        std::ofstream(csv) << "file,class,idx,part\n";
        CHECK_THROWS_WITH_AS(load_manifest(csv), doctest::Contains("line 1"),
                             ParseError);
    }
}

TEST_CASE("split token round trip") {
    for (Split s : {Split::train, Split::validation, Split::test}) {
        CHECK(split_from_string(to_string(s)) == s);
    }
    CHECK_THROWS_AS(split_from_string("eval"), ParseError);
}

TEST_CASE("split_indices walks the manifest in order") {
    auto m = stratified_split(synthetic_manifest({{"a", 10}}), SplitRatios{}, 3);
    auto idx = m.split_indices(Split::train);
    CHECK(idx.size() == 7);
    CHECK(std::is_sorted(idx.begin(), idx.end()));
    for (auto i : idx) CHECK(m.samples[i].split == Split::train);
}
