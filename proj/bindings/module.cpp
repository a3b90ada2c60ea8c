// Python bindings for the busi core library.
//
// Exposes the pipeline operations (dataset scan/split, preprocessing,
// model construction, training, metrics, reports) with numpy arrays at
// the image/score boundaries.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <iostream>

#include "busi/dataset.hpp"
#include "busi/errors.hpp"
#include "busi/metrics.hpp"
#include "busi/models.hpp"
#include "busi/preprocess.hpp"
#include "busi/report.hpp"
#include "busi/training.hpp"

namespace py = pybind11;

namespace {

using CArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

py::array_t<double> tensor_to_array(const busi::Tensor& t) {
    std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
    return py::array_t<double>(shape, t.data());
}

busi::Tensor array_to_tensor(const CArray& a) {
    std::vector<int> shape;
    for (py::ssize_t i = 0; i < a.ndim(); ++i) {
        shape.push_back(static_cast<int>(a.shape(i)));
    }
    busi::Tensor t(shape);
    std::copy(a.data(), a.data() + a.size(), t.data());
    return t;
}

void bind_errors(py::module_& m) {
    auto base = py::register_exception<busi::Error>(m, "Error");
    py::register_exception<busi::NotFoundError>(m, "NotFoundError", base);
    py::register_exception<busi::EmptyDatasetError>(m, "EmptyDatasetError", base);
    py::register_exception<busi::EmptyClassError>(m, "EmptyClassError", base);
    py::register_exception<busi::ClassTooSmallError>(m, "ClassTooSmallError", base);
    py::register_exception<busi::BadRatiosError>(m, "BadRatiosError", base);
    py::register_exception<busi::ParseError>(m, "ParseError", base);
    py::register_exception<busi::DecodeError>(m, "DecodeError", base);
    py::register_exception<busi::EmptySplitError>(m, "EmptySplitError", base);
    py::register_exception<busi::UnknownBackboneError>(m, "UnknownBackboneError",
                                                       base);
    py::register_exception<busi::WeightsUnavailableError>(
        m, "WeightsUnavailableError", base);
    py::register_exception<busi::ShapeError>(m, "ShapeError", base);
    py::register_exception<busi::CheckpointError>(m, "CheckpointError", base);
    py::register_exception<busi::DivergedError>(m, "DivergedError", base);
    py::register_exception<busi::LabelError>(m, "LabelError", base);
    py::register_exception<busi::UndefinedMetricError>(m, "UndefinedMetricError",
                                                       base);
    py::register_exception<busi::IoError>(m, "IoError", base);
    py::register_exception<busi::EmptyInputError>(m, "EmptyInputError", base);
}

void bind_dataset(py::module_& m) {
    py::enum_<busi::Split>(m, "Split")
        .value("unassigned", busi::Split::unassigned)
        .value("train", busi::Split::train)
        .value("validation", busi::Split::validation)
        .value("test", busi::Split::test);

    py::class_<busi::SplitRatios>(m, "SplitRatios")
        .def(py::init<>())
        .def(py::init([](double train, double validation, double test) {
                 return busi::SplitRatios{train, validation, test};
             }),
             py::arg("train"), py::arg("validation"), py::arg("test"))
        .def_readwrite("train", &busi::SplitRatios::train)
        .def_readwrite("validation", &busi::SplitRatios::validation)
        .def_readwrite("test", &busi::SplitRatios::test)
        .def("validate", &busi::SplitRatios::validate);

    py::class_<busi::Sample>(m, "Sample")
        .def_readonly("path", &busi::Sample::path)
        .def_readonly("class_name", &busi::Sample::class_name)
        .def_readonly("label", &busi::Sample::label)
        .def_readonly("split", &busi::Sample::split);

    py::class_<busi::DatasetManifest>(m, "DatasetManifest")
        .def_readonly("samples", &busi::DatasetManifest::samples)
        .def_readonly("class_names", &busi::DatasetManifest::class_names)
        .def_readonly("seed", &busi::DatasetManifest::seed)
        .def_readonly("ratios", &busi::DatasetManifest::ratios)
        .def("counts_per_class", &busi::DatasetManifest::counts_per_class)
        .def("count",
             py::overload_cast<busi::Split>(&busi::DatasetManifest::count,
                                            py::const_),
             py::arg("split"))
        .def("count",
             py::overload_cast<busi::Split, const std::string&>(
                 &busi::DatasetManifest::count, py::const_),
             py::arg("split"), py::arg("class_name"))
        .def("split_indices", &busi::DatasetManifest::split_indices,
             py::arg("split"))
        .def("__len__",
             [](const busi::DatasetManifest& m) { return m.samples.size(); });

    m.def("scan_dataset", &busi::scan_dataset, py::arg("root"));
    m.def("stratified_split", &busi::stratified_split, py::arg("manifest"),
          py::arg("ratios"), py::arg("seed"));
    m.def("save_manifest", &busi::save_manifest, py::arg("manifest"),
          py::arg("csv_path"));
    m.def("load_manifest", &busi::load_manifest, py::arg("csv_path"));
}

void bind_preprocess(py::module_& m) {
    py::enum_<busi::NormalizePolicy>(m, "NormalizePolicy")
        .value("unit_scale", busi::NormalizePolicy::unit_scale)
        .value("backbone_specific", busi::NormalizePolicy::backbone_specific);

    py::class_<busi::Normalization>(m, "Normalization")
        .def(py::init<>())
        .def(py::init([](busi::NormalizePolicy policy, const std::string& backbone) {
                 return busi::Normalization{policy, backbone};
             }),
             py::arg("policy"), py::arg("backbone_id") = "")
        .def_readwrite("policy", &busi::Normalization::policy)
        .def_readwrite("backbone_id", &busi::Normalization::backbone_id)
        .def("__str__",
             [](const busi::Normalization& n) { return busi::to_string(n); });

    m.def("normalization_from_string", &busi::normalization_from_string,
          py::arg("text"));

    m.def(
        "load_and_resize",
        [](const std::filesystem::path& path, int height, int width) {
            busi::Tensor t;
            {
                py::gil_scoped_release release;
                t = busi::load_and_resize(path, height, width);
            }
            return tensor_to_array(t);
        },
        py::arg("path"), py::arg("height") = busi::kDefaultImageSize,
        py::arg("width") = busi::kDefaultImageSize,
        "Decode and bilinearly resize an image file to HWC RGB in [0, 255].");

    m.def(
        "normalize",
        [](const CArray& image, const busi::Normalization& policy) {
            busi::Tensor t = array_to_tensor(image);
            return tensor_to_array(busi::normalize(t, policy));
        },
        py::arg("image"), py::arg("normalization"));

    m.def("one_hot",
          [](const std::vector<int>& labels, int num_classes) {
              return tensor_to_array(busi::one_hot(labels, num_classes));
          },
          py::arg("labels"), py::arg("num_classes"));
}

void bind_models(py::module_& m) {
    py::enum_<busi::ModelKind>(m, "ModelKind")
        .value("transfer", busi::ModelKind::transfer)
        .value("custom_cnn", busi::ModelKind::custom_cnn);

    py::class_<busi::ModelSpec>(m, "ModelSpec")
        .def(py::init<>())
        .def_readwrite("kind", &busi::ModelSpec::kind)
        .def_readwrite("backbone_id", &busi::ModelSpec::backbone_id)
        .def_readwrite("num_classes", &busi::ModelSpec::num_classes)
        .def_readwrite("freeze_backbone", &busi::ModelSpec::freeze_backbone)
        .def_readwrite("head_units", &busi::ModelSpec::head_units)
        .def_readwrite("seed", &busi::ModelSpec::seed)
        .def_readwrite("pretrained", &busi::ModelSpec::pretrained)
        .def("validate", &busi::ModelSpec::validate)
        .def("id", &busi::ModelSpec::id);

    py::class_<busi::Model>(m, "Model")
        .def_property_readonly("spec", &busi::Model::spec)
        .def_property_readonly("num_classes", &busi::Model::num_classes)
        .def_property_readonly("feature_dim", &busi::Model::feature_dim)
        .def_property_readonly("backbone_frozen", &busi::Model::backbone_frozen)
        .def("normalization", &busi::Model::normalization)
        .def("parameter_count", &busi::Model::parameter_count)
        .def("trainable_parameter_count",
             &busi::Model::trainable_parameter_count)
        .def(
            "predict",
            [](busi::Model& model, const CArray& images) {
                busi::Tensor x = array_to_tensor(images);
                busi::Tensor probs;
                {
                    py::gil_scoped_release release;
                    probs = model.predict(x);
                }
                return tensor_to_array(probs);
            },
            py::arg("images"),
            "Row-stochastic class probabilities for an (n, h, w, 3) batch.");

    m.def("registered_backbones", &busi::registered_backbones);
    m.def("backbone_feature_dim", &busi::backbone_feature_dim, py::arg("id"));
    m.def(
        "build_model",
        [](const busi::ModelSpec& spec, const std::filesystem::path& cache) {
            py::gil_scoped_release release;
            return busi::build_model(spec, cache);
        },
        py::arg("spec"), py::arg("weights_cache") = std::filesystem::path());
    m.def("save_checkpoint", &busi::save_checkpoint, py::arg("model"),
          py::arg("directory"));
    m.def("load_checkpoint", &busi::load_checkpoint, py::arg("directory"),
          py::arg("expected_num_classes") = -1);
}

void bind_training(py::module_& m) {
    py::enum_<busi::OptimizerKind>(m, "OptimizerKind")
        .value("adam", busi::OptimizerKind::adam)
        .value("sgd", busi::OptimizerKind::sgd);

    py::class_<busi::TrainConfig>(m, "TrainConfig")
        .def(py::init<>())
        .def_readwrite("epochs", &busi::TrainConfig::epochs)
        .def_readwrite("batch_size", &busi::TrainConfig::batch_size)
        .def_readwrite("learning_rate", &busi::TrainConfig::learning_rate)
        .def_readwrite("optimizer", &busi::TrainConfig::optimizer)
        .def_readwrite("seed", &busi::TrainConfig::seed)
        .def_readwrite("checkpoint_dir", &busi::TrainConfig::checkpoint_dir)
        .def_readwrite("image_height", &busi::TrainConfig::image_height)
        .def_readwrite("image_width", &busi::TrainConfig::image_width)
        .def("validate", &busi::TrainConfig::validate);

    py::class_<busi::EpochRecord>(m, "EpochRecord")
        .def_readonly("epoch", &busi::EpochRecord::epoch)
        .def_readonly("train_loss", &busi::EpochRecord::train_loss)
        .def_readonly("train_accuracy", &busi::EpochRecord::train_accuracy)
        .def_readonly("val_loss", &busi::EpochRecord::val_loss)
        .def_readonly("val_accuracy", &busi::EpochRecord::val_accuracy)
        .def_readonly("wall_seconds", &busi::EpochRecord::wall_seconds);

    py::class_<busi::TrainHistory>(m, "TrainHistory")
        .def_readonly("epochs", &busi::TrainHistory::epochs)
        .def_readonly("best_epoch", &busi::TrainHistory::best_epoch)
        .def("save_csv", &busi::TrainHistory::save_csv, py::arg("path"))
        .def("save_json", &busi::TrainHistory::save_json, py::arg("path"));

    m.def(
        "train",
        [](busi::Model& model, const busi::DatasetManifest& manifest,
           const busi::TrainConfig& config, bool verbose) {
            py::gil_scoped_release release;
            return busi::train(model, manifest, config,
                               verbose ? &std::cerr : nullptr);
        },
        py::arg("model"), py::arg("manifest"), py::arg("config"),
        py::arg("verbose") = false);

    m.def(
        "evaluate_split",
        [](busi::Model& model, const busi::DatasetManifest& manifest,
           busi::Split split, int batch_size, int image_height, int image_width) {
            std::pair<std::vector<int>, busi::Tensor> result;
            {
                py::gil_scoped_release release;
                result = busi::evaluate_split(model, manifest, split, batch_size,
                                              image_height, image_width);
            }
            return py::make_tuple(result.first, tensor_to_array(result.second));
        },
        py::arg("model"), py::arg("manifest"), py::arg("split"),
        py::arg("batch_size") = 32,
        py::arg("image_height") = busi::kDefaultImageSize,
        py::arg("image_width") = busi::kDefaultImageSize);
}

void bind_metrics(py::module_& m) {
    py::class_<busi::ConfusionMatrix>(m, "ConfusionMatrix")
        .def_readonly("num_classes", &busi::ConfusionMatrix::num_classes)
        .def_readonly("class_names", &busi::ConfusionMatrix::class_names)
        .def("at",
             py::overload_cast<int, int>(&busi::ConfusionMatrix::at, py::const_),
             py::arg("true_class"), py::arg("predicted_class"))
        .def("total", &busi::ConfusionMatrix::total)
        .def("trace", &busi::ConfusionMatrix::trace)
        .def("support", &busi::ConfusionMatrix::support, py::arg("k"))
        .def("counts", [](const busi::ConfusionMatrix& cm) {
            py::array_t<std::int64_t> a({cm.num_classes, cm.num_classes});
            std::copy(cm.counts.begin(), cm.counts.end(), a.mutable_data());
            return a;
        });

    py::class_<busi::BinaryCounts>(m, "BinaryCounts")
        .def(py::init<>())
        .def(py::init([](std::int64_t tp, std::int64_t fp, std::int64_t fn,
                         std::int64_t tn) {
                 return busi::BinaryCounts{tp, fp, fn, tn};
             }),
             py::arg("tp"), py::arg("fp"), py::arg("fn"), py::arg("tn"))
        .def_readwrite("tp", &busi::BinaryCounts::tp)
        .def_readwrite("fp", &busi::BinaryCounts::fp)
        .def_readwrite("fn", &busi::BinaryCounts::fn)
        .def_readwrite("tn", &busi::BinaryCounts::tn);

    py::class_<busi::RocCurve>(m, "RocCurve")
        .def_readonly("fpr", &busi::RocCurve::fpr)
        .def_readonly("tpr", &busi::RocCurve::tpr)
        .def_readonly("thresholds", &busi::RocCurve::thresholds)
        .def_readonly("auc", &busi::RocCurve::auc);

    py::class_<busi::ClassMetrics>(m, "ClassMetrics")
        .def_readonly("precision", &busi::ClassMetrics::precision)
        .def_readonly("recall", &busi::ClassMetrics::recall)
        .def_readonly("f1", &busi::ClassMetrics::f1)
        .def_readonly("auc", &busi::ClassMetrics::auc)
        .def_readonly("support", &busi::ClassMetrics::support)
        .def_readonly("degenerate_precision",
                      &busi::ClassMetrics::degenerate_precision)
        .def_readonly("degenerate_recall", &busi::ClassMetrics::degenerate_recall);

    py::class_<busi::EvaluationReport>(m, "EvaluationReport")
        .def_readonly("accuracy", &busi::EvaluationReport::accuracy)
        .def_readonly("class_names", &busi::EvaluationReport::class_names)
        .def_readonly("per_class", &busi::EvaluationReport::per_class)
        .def_readonly("macro_f1", &busi::EvaluationReport::macro_f1)
        .def_readonly("macro_auc", &busi::EvaluationReport::macro_auc)
        .def_readonly("confusion", &busi::EvaluationReport::confusion)
        .def_readonly("roc", &busi::EvaluationReport::roc);

    m.def("confusion_matrix", &busi::confusion_matrix, py::arg("y_true"),
          py::arg("y_pred"), py::arg("num_classes"),
          py::arg("class_names") = std::vector<std::string>());
    m.def("one_vs_rest", &busi::one_vs_rest, py::arg("cm"), py::arg("k"));
    m.def("accuracy", &busi::accuracy, py::arg("cm"));
    m.def(
        "precision",
        [](const busi::BinaryCounts& c) {
            bool degenerate = false;
            double v = busi::precision(c, &degenerate);
            return py::make_tuple(v, degenerate);
        },
        py::arg("counts"), "Returns (precision, degenerate_flag).");
    m.def(
        "recall",
        [](const busi::BinaryCounts& c) {
            bool degenerate = false;
            double v = busi::recall(c, &degenerate);
            return py::make_tuple(v, degenerate);
        },
        py::arg("counts"), "Returns (recall, degenerate_flag).");
    m.def("f1", &busi::f1, py::arg("precision"), py::arg("recall"));
    m.def("roc_curve", &busi::roc_curve, py::arg("y_true_binary"),
          py::arg("scores"));
    m.def(
        "evaluate",
        [](const std::vector<int>& y_true, const CArray& y_score,
           const std::vector<std::string>& class_names) {
            return busi::evaluate(y_true, array_to_tensor(y_score), class_names);
        },
        py::arg("y_true"), py::arg("y_score"), py::arg("class_names"));
    m.def(
        "argmax_rows",
        [](const CArray& scores) {
            return busi::argmax_rows(array_to_tensor(scores));
        },
        py::arg("scores"));
}

void bind_report(py::module_& m) {
    py::class_<busi::ComparisonRow>(m, "ComparisonRow")
        .def_readonly("model_name", &busi::ComparisonRow::model_name)
        .def_readonly("accuracy", &busi::ComparisonRow::accuracy)
        .def_readonly("macro_f1", &busi::ComparisonRow::macro_f1)
        .def_readonly("precision", &busi::ComparisonRow::precision)
        .def_readonly("recall", &busi::ComparisonRow::recall);

    py::class_<busi::ComparisonTable>(m, "ComparisonTable")
        .def_readonly("class_names", &busi::ComparisonTable::class_names)
        .def_readonly("rows", &busi::ComparisonTable::rows);

    m.def("emit_report", &busi::emit_report, py::arg("report"),
          py::arg("out_dir"));
    m.def("load_metrics_json", &busi::load_metrics_json, py::arg("path"));
    m.def("compare", &busi::compare, py::arg("reports"));
    m.def("save_comparison_csv", &busi::save_comparison_csv, py::arg("table"),
          py::arg("path"));
    m.def("format_comparison_table", &busi::format_comparison_table,
          py::arg("table"));
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "breast-ultrasound classification pipeline (C++ core)";
    m.attr("__version__") = busi::kFrameworkVersion;
    m.attr("DEFAULT_IMAGE_SIZE") = busi::kDefaultImageSize;

    bind_errors(m);
    bind_dataset(m);
    bind_preprocess(m);
    bind_models(m);
    bind_training(m);
    bind_metrics(m);
    bind_report(m);
}
