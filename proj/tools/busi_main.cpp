// busi — breast-ultrasound classification pipeline.
//
// Subcommands: prepare, train, evaluate, compare, predict.
// Exit codes: 0 success, 1 partial failure, 2 user/config error,
// 3 training divergence.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "busi/dataset.hpp"
#include "busi/errors.hpp"
#include "busi/metrics.hpp"
#include "busi/models.hpp"
#include "busi/preprocess.hpp"
#include "busi/report.hpp"
#include "busi/training.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitPartial = 1;
constexpr int kExitUsage = 2;
constexpr int kExitDiverged = 3;

const std::vector<std::string> kModelNames = {"resnet50", "mobilenet", "vgg16",
                                              "custom_cnn"};

struct Options {
    std::string work_dir = ".";
    std::string config_path;
    std::uint64_t seed = 42;

    // prepare
    std::string data_root;
    double train_ratio = 0.70;
    double val_ratio = 0.15;
    double test_ratio = 0.15;

    // model
    std::string model;
    int head_units = 1024;
    bool no_freeze = false;
    bool random_init = false;
    std::string weights_cache;

    // training
    int epochs = 10;
    int batch_size = 32;
    double learning_rate = 0.0001;
    std::string optimizer = "adam";
    int image_size = busi::kDefaultImageSize;

    // evaluate / compare / predict
    std::string split = "test";
    std::string checkpoint;
    std::string input;
    std::vector<std::string> models;
};

// ---------------------------------------------------------------- config

// Overlay file values onto fields the command line left untouched, so
// precedence is flags > config file > defaults.
void apply_config_file(Options& opt, const CLI::App& app) {
    if (opt.config_path.empty()) return;
    nlohmann::json doc;
    try {
        std::ifstream in(opt.config_path);
        if (!in) throw busi::IoError("cannot open config: " + opt.config_path);
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw busi::ParseError("cannot parse config '" + opt.config_path +
                               "': " + e.what());
    }

    // A flag may be registered on several subcommands (all bound to the
    // same field); it is untouched only if no instance was given.
    auto untouched = [&](const std::string& flag) {
        if (const CLI::Option* o = app.get_option_no_throw(flag)) {
            if (o->count() > 0) return false;
        }
        for (const CLI::App* sub :
             app.get_subcommands([](const CLI::App*) { return true; })) {
            if (const CLI::Option* o = sub->get_option_no_throw(flag)) {
                if (o->count() > 0) return false;
            }
        }
        return true;
    };
    auto load = [&](const nlohmann::json& node, const char* key, auto& into,
                    const std::string& flag) {
        if (node.contains(key) && untouched(flag)) {
            node.at(key).get_to(into);
        }
    };

    load(doc, "work_dir", opt.work_dir, "--work-dir");
    load(doc, "seed", opt.seed, "--seed");
    load(doc, "data_root", opt.data_root, "--data-root");
    load(doc, "weights_cache", opt.weights_cache, "--weights-cache");
    load(doc, "split", opt.split, "--split");
    if (doc.contains("ratios")) {
        const auto& r = doc.at("ratios");
        load(r, "train", opt.train_ratio, "--train-ratio");
        load(r, "validation", opt.val_ratio, "--val-ratio");
        load(r, "test", opt.test_ratio, "--test-ratio");
    }
    if (doc.contains("model")) {
        const auto& m = doc.at("model");
        load(m, "name", opt.model, "--model");
        load(m, "head_units", opt.head_units, "--head-units");
        if (m.contains("freeze_backbone") && untouched("--no-freeze-backbone")) {
            opt.no_freeze = !m.at("freeze_backbone").get<bool>();
        }
        if (m.contains("pretrained") && untouched("--random-init")) {
            opt.random_init = !m.at("pretrained").get<bool>();
        }
    }
    if (doc.contains("train")) {
        const auto& t = doc.at("train");
        load(t, "epochs", opt.epochs, "--epochs");
        load(t, "batch_size", opt.batch_size, "--batch-size");
        load(t, "learning_rate", opt.learning_rate, "--learning-rate");
        load(t, "optimizer", opt.optimizer, "--optimizer");
        load(t, "image_size", opt.image_size, "--image-size");
    }
}

void write_run_config(const Options& opt, const std::string& command) {
    nlohmann::json doc = {
        {"command", command},
        {"work_dir", opt.work_dir},
        {"seed", opt.seed},
        {"data_root", opt.data_root},
        {"weights_cache", opt.weights_cache},
        {"split", opt.split},
        {"ratios",
         {{"train", opt.train_ratio},
          {"validation", opt.val_ratio},
          {"test", opt.test_ratio}}},
        {"model",
         {{"name", opt.model},
          {"head_units", opt.head_units},
          {"freeze_backbone", !opt.no_freeze},
          {"pretrained", !opt.random_init}}},
        {"train",
         {{"epochs", opt.epochs},
          {"batch_size", opt.batch_size},
          {"learning_rate", opt.learning_rate},
          {"optimizer", opt.optimizer},
          {"loss", "categorical_cross_entropy"},
          {"image_size", opt.image_size}}},
    };
    fs::create_directories(opt.work_dir);
    std::ofstream out(fs::path(opt.work_dir) / "run_config.json", std::ios::trunc);
    if (!out) {
        throw busi::IoError("cannot write run_config.json under " + opt.work_dir);
    }
    out << doc.dump(2) << "\n";
}

// ---------------------------------------------------------------- helpers

busi::ModelSpec make_spec(const Options& opt, int num_classes) {
    if (std::find(kModelNames.begin(), kModelNames.end(), opt.model) ==
        kModelNames.end()) {
        throw busi::Error("unknown model '" + opt.model +
                          "' (valid: resnet50, mobilenet, vgg16, custom_cnn)");
    }
    busi::ModelSpec spec;
    if (opt.model == "custom_cnn") {
        spec.kind = busi::ModelKind::custom_cnn;
    } else {
        spec.kind = busi::ModelKind::transfer;
        spec.backbone_id = opt.model;
    }
    spec.num_classes = num_classes;
    spec.freeze_backbone = !opt.no_freeze;
    spec.head_units = opt.head_units;
    spec.seed = opt.seed;
    spec.pretrained = spec.kind == busi::ModelKind::transfer && !opt.random_init;
    return spec;
}

busi::DatasetManifest load_work_manifest(const Options& opt) {
    fs::path path = fs::path(opt.work_dir) / "manifest.csv";
    if (!fs::exists(path)) {
        throw busi::NotFoundError("no manifest at " + path.string() +
                                  "; run 'busi prepare' first");
    }
    return busi::load_manifest(path);
}

fs::path resolve_checkpoint(const Options& opt) {
    if (!opt.checkpoint.empty()) return opt.checkpoint;
    if (!opt.model.empty()) {
        return fs::path(opt.work_dir) / opt.model / "checkpoints" / "best.ckpt";
    }
    throw busi::Error("pass --checkpoint PATH or --model NAME");
}

std::vector<std::string> class_names_for(const busi::Model& model,
                                         const Options& opt) {
    fs::path manifest_path = fs::path(opt.work_dir) / "manifest.csv";
    if (fs::exists(manifest_path)) {
        try {
            busi::DatasetManifest manifest = busi::load_manifest(manifest_path);
            if (static_cast<int>(manifest.class_names.size()) ==
                model.num_classes()) {
                return manifest.class_names;
            }
        } catch (const busi::Error&) {
            // fall through to generic names
        }
    }
    std::vector<std::string> names;
    for (int i = 0; i < model.num_classes(); ++i) {
        names.push_back("class_" + std::to_string(i));
    }
    return names;
}

void print_split_table(const busi::DatasetManifest& manifest, std::ostream& out) {
    std::size_t name_width = 5;
    for (const std::string& name : manifest.class_names) {
        name_width = std::max(name_width, name.size());
    }
    char line[256];
    std::snprintf(line, sizeof line, "%-*s %7s %11s %7s %7s\n",
                  static_cast<int>(name_width), "class", "train", "validation",
                  "test", "total");
    out << line;
    std::int64_t totals[4] = {0, 0, 0, 0};
    for (const std::string& name : manifest.class_names) {
        std::int64_t tr = manifest.count(busi::Split::train, name);
        std::int64_t va = manifest.count(busi::Split::validation, name);
        std::int64_t te = manifest.count(busi::Split::test, name);
        std::snprintf(line, sizeof line, "%-*s %7lld %11lld %7lld %7lld\n",
                      static_cast<int>(name_width), name.c_str(),
                      static_cast<long long>(tr), static_cast<long long>(va),
                      static_cast<long long>(te),
                      static_cast<long long>(tr + va + te));
        out << line;
        totals[0] += tr;
        totals[1] += va;
        totals[2] += te;
        totals[3] += tr + va + te;
    }
    std::snprintf(line, sizeof line, "%-*s %7lld %11lld %7lld %7lld\n",
                  static_cast<int>(name_width), "total",
                  static_cast<long long>(totals[0]),
                  static_cast<long long>(totals[1]),
                  static_cast<long long>(totals[2]),
                  static_cast<long long>(totals[3]));
    out << line;
}

// --------------------------------------------------------------- commands

int cmd_prepare(Options& opt) {
    if (opt.data_root.empty()) {
        throw busi::Error("--data-root is required for 'prepare'");
    }
    busi::SplitRatios ratios{opt.train_ratio, opt.val_ratio, opt.test_ratio};
    busi::DatasetManifest manifest = busi::scan_dataset(opt.data_root);
    manifest = busi::stratified_split(manifest, ratios, opt.seed);

    fs::create_directories(opt.work_dir);
    busi::save_manifest(manifest, fs::path(opt.work_dir) / "manifest.csv");
    write_run_config(opt, "prepare");

    print_split_table(manifest, std::cout);
    std::cout << "manifest: " << (fs::path(opt.work_dir) / "manifest.csv").string()
              << "\n";
    return kExitOk;
}

int cmd_train(Options& opt) {
    busi::DatasetManifest manifest = load_work_manifest(opt);
    int num_classes = static_cast<int>(manifest.class_names.size());
    busi::ModelSpec spec = make_spec(opt, num_classes);

    fs::path model_dir = fs::path(opt.work_dir) / spec.id();
    busi::TrainConfig config;
    config.epochs = opt.epochs;
    config.batch_size = opt.batch_size;
    config.learning_rate = opt.learning_rate;
    config.optimizer = busi::optimizer_from_string(opt.optimizer);
    config.seed = opt.seed;
    config.checkpoint_dir = model_dir / "checkpoints";
    config.image_height = opt.image_size;
    config.image_width = opt.image_size;
    config.validate();

    write_run_config(opt, "train");

    busi::Model model = busi::build_model(spec, opt.weights_cache);
    std::cerr << spec.id() << ": " << model.parameter_count() << " parameters, "
              << model.trainable_parameter_count() << " trainable\n";

    busi::TrainHistory history = busi::train(model, manifest, config, &std::cerr);
    history.save_csv(model_dir / "history.csv");
    history.save_json(model_dir / "history.json");

    const busi::EpochRecord& best =
        history.epochs[static_cast<std::size_t>(history.best_epoch - 1)];
    char line[160];
    std::snprintf(line, sizeof line,
                  "trained %s for %d epochs; best epoch %d (val_acc=%.4f)\n",
                  spec.id().c_str(), config.epochs, history.best_epoch,
                  best.val_accuracy);
    std::cout << line;
    std::cout << "checkpoints: " << (model_dir / "checkpoints").string() << "\n";
    return kExitOk;
}

int cmd_evaluate(Options& opt) {
    busi::DatasetManifest manifest = load_work_manifest(opt);
    busi::Split split = busi::split_from_string(opt.split);
    if (split == busi::Split::train) {
        std::cerr << "warning: evaluating the training split\n";
    }

    fs::path ckpt = resolve_checkpoint(opt);
    busi::Model model = busi::load_checkpoint(
        ckpt, static_cast<int>(manifest.class_names.size()));
    std::string model_id = opt.model.empty() ? model.spec().id() : opt.model;

    auto [y_true, y_score] = busi::evaluate_split(
        model, manifest, split, opt.batch_size, opt.image_size, opt.image_size);

    busi::Predictions predictions;
    for (std::size_t idx : manifest.split_indices(split)) {
        predictions.paths.push_back(manifest.samples[idx].path.string());
    }
    predictions.y_true = y_true;
    predictions.y_score = y_score;

    fs::path out_dir =
        fs::path(opt.work_dir) / model_id / ("report_" + busi::to_string(split));
    fs::create_directories(out_dir);
    busi::save_predictions_csv(predictions, out_dir / "predictions.csv");

    busi::EvaluationReport report =
        busi::evaluate(y_true, y_score, manifest.class_names);
    busi::emit_report(report, out_dir);
    write_run_config(opt, "evaluate");

    char line[128];
    std::snprintf(line, sizeof line, "accuracy=%.4f macro_f1=%.4f macro_auc=%.4f\n",
                  report.accuracy, report.macro_f1, report.macro_auc);
    std::cout << line;
    std::cout << "report: " << out_dir.string() << "\n";
    return kExitOk;
}

int cmd_compare(Options& opt) {
    std::vector<std::string> wanted =
        opt.models.empty() ? kModelNames : opt.models;
    std::vector<std::pair<std::string, busi::EvaluationReport>> reports;
    for (const std::string& name : wanted) {
        fs::path metrics = fs::path(opt.work_dir) / name /
                           ("report_" + opt.split) / "metrics.json";
        if (fs::exists(metrics)) {
            reports.emplace_back(name, busi::load_metrics_json(metrics));
        }
    }
    if (reports.empty()) {
        throw busi::NotFoundError("no evaluation reports found under " +
                                  opt.work_dir + "; run 'busi evaluate' first");
    }

    busi::ComparisonTable table = busi::compare(reports);
    busi::save_comparison_csv(table, fs::path(opt.work_dir) / "comparison.csv");
    write_run_config(opt, "compare");

    std::cout << busi::format_comparison_table(table);
    std::cout << "comparison: "
              << (fs::path(opt.work_dir) / "comparison.csv").string() << "\n";
    return kExitOk;
}

int cmd_predict(Options& opt) {
    fs::path ckpt = resolve_checkpoint(opt);
    busi::Model model = busi::load_checkpoint(ckpt);
    busi::Normalization norm = model.normalization();
    std::vector<std::string> class_names = class_names_for(model, opt);

    fs::path input(opt.input);
    if (opt.input.empty() || !fs::exists(input)) {
        throw busi::NotFoundError("input not found: '" + opt.input + "'");
    }
    std::vector<fs::path> files;
    if (fs::is_directory(input)) {
        for (const auto& entry : fs::directory_iterator(input)) {
            if (entry.is_regular_file() && busi::is_image_file(entry.path())) {
                files.push_back(entry.path());
            }
        }
        std::sort(files.begin(), files.end(),
                  [](const fs::path& a, const fs::path& b) {
                      return a.filename().string() < b.filename().string();
                  });
        if (files.empty()) {
            throw busi::EmptyDatasetError("no images in directory: " +
                                          input.string());
        }
    } else {
        files.push_back(input);
    }

    int k = model.num_classes();
    std::cout << "sample_path,predicted_label";
    for (int j = 0; j < k; ++j) std::cout << ",score_" << j;
    std::cout << ",error\n";

    bool any_error = false;
    char score[32];
    for (const fs::path& file : files) {
        try {
            busi::Tensor image = busi::load_and_resize(file, opt.image_size,
                                                       opt.image_size);
            busi::Tensor normalized = busi::normalize(image, norm);
            busi::Tensor batch({1, opt.image_size, opt.image_size, 3});
            std::copy(normalized.data(), normalized.data() + normalized.size(),
                      batch.data());
            busi::Tensor probs = model.predict(batch);
            int label = busi::argmax_rows(probs)[0];
            std::cout << file.string() << ','
                      << class_names[static_cast<std::size_t>(label)];
            for (int j = 0; j < k; ++j) {
                std::snprintf(score, sizeof score, "%.6f", probs.at(0, j));
                std::cout << ',' << score;
            }
            std::cout << ",\n";
        } catch (const busi::Error& e) {
            any_error = true;
            std::string quoted = "\"";
            for (char c : std::string(e.what())) {
                quoted += c;
                if (c == '"') quoted += '"';
            }
            quoted += '"';
            std::cout << file.string() << ',';
            for (int j = 0; j < k; ++j) std::cout << ',';
            std::cout << ',' << quoted << "\n";
        }
    }
    return any_error ? kExitPartial : kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    Options opt;
    CLI::App app{"breast-ultrasound image classification pipeline"};
    app.require_subcommand(1);
    app.fallthrough();

    app.add_option("--work-dir", opt.work_dir,
                   "directory for manifests, checkpoints, and reports");
    app.add_option("--config", opt.config_path,
                   "JSON config file (same schema as run_config.json)");
    app.add_option("--seed", opt.seed, "master random seed");

    CLI::App* prepare = app.add_subcommand("prepare", "scan and split a dataset");
    prepare->add_option("--data-root", opt.data_root,
                        "dataset root: one subdirectory per class");
    prepare->add_option("--train-ratio", opt.train_ratio, "train fraction");
    prepare->add_option("--val-ratio", opt.val_ratio, "validation fraction");
    prepare->add_option("--test-ratio", opt.test_ratio, "test fraction");

    CLI::App* train = app.add_subcommand("train", "train one model");
    train->add_option("--model", opt.model,
                      "resnet50 | mobilenet | vgg16 | custom_cnn");
    train->add_option("--epochs", opt.epochs, "training epochs");
    train->add_option("--batch-size", opt.batch_size, "batch size");
    train->add_option("--learning-rate", opt.learning_rate, "learning rate");
    train->add_option("--optimizer", opt.optimizer, "adam | sgd");
    train->add_option("--image-size", opt.image_size, "input resolution");
    train->add_option("--head-units", opt.head_units, "classifier head width");
    train->add_flag("--no-freeze-backbone", opt.no_freeze,
                    "also train the backbone");
    train->add_flag("--random-init", opt.random_init,
                    "skip pretrained weights (random backbone)");
    train->add_option("--weights-cache", opt.weights_cache,
                      "directory with <backbone>.weights.bin files")
        ->envname("BUSI_WEIGHTS_CACHE");

    CLI::App* evaluate = app.add_subcommand("evaluate", "evaluate a checkpoint");
    evaluate->add_option("--model", opt.model, "model name (uses its best.ckpt)");
    evaluate->add_option("--checkpoint", opt.checkpoint, "checkpoint directory");
    evaluate->add_option("--split", opt.split, "train | validation | test");
    evaluate->add_option("--batch-size", opt.batch_size, "batch size");
    evaluate->add_option("--image-size", opt.image_size, "input resolution");

    CLI::App* compare = app.add_subcommand("compare", "cross-model comparison");
    compare->add_option("--models", opt.models,
                        "model names to include (default: all)")
        ->delimiter(',');
    compare->add_option("--split", opt.split, "which split's reports to compare");

    CLI::App* predict = app.add_subcommand("predict",
                                           "classify an image or directory");
    predict->add_option("--model", opt.model, "model name (uses its best.ckpt)");
    predict->add_option("--checkpoint", opt.checkpoint, "checkpoint directory");
    predict->add_option("--input", opt.input, "image file or directory");
    predict->add_option("--image-size", opt.image_size, "input resolution");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        apply_config_file(opt, app);
        if (prepare->parsed()) return cmd_prepare(opt);
        if (train->parsed()) return cmd_train(opt);
        if (evaluate->parsed()) return cmd_evaluate(opt);
        if (compare->parsed()) return cmd_compare(opt);
        if (predict->parsed()) return cmd_predict(opt);
        return kExitUsage;
    } catch (const busi::DivergedError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitDiverged;
    } catch (const busi::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }
}
