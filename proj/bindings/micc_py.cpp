#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "micc/alignment.hpp"
#include "micc/data.hpp"
#include "micc/gradcheck.hpp"
#include "micc/trainer.hpp"

namespace py = pybind11;
using namespace micc;

namespace {

Tensor tensor_from_numpy(const py::array_t<double, py::array::c_style | py::array::forcecast>& arr) {
    std::vector<size_t> shape(arr.ndim());
    for (py::ssize_t i = 0; i < arr.ndim(); ++i) shape[static_cast<size_t>(i)] = static_cast<size_t>(arr.shape(i));
    std::vector<double> values(arr.data(), arr.data() + arr.size());
    return Tensor(std::move(shape), std::move(values));
}

py::array_t<double> tensor_to_numpy(const Tensor& t) {
    std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
    py::array_t<double> out(shape);
    std::copy(t.data(), t.data() + t.size(), out.mutable_data());
    return out;
}

py::array_t<double> py_matmul(const py::array_t<double, py::array::c_style | py::array::forcecast>& a,
                              const py::array_t<double, py::array::c_style | py::array::forcecast>& b) {
    Tape tape;
    return tensor_to_numpy(matmul(tape.constant(tensor_from_numpy(a)), tape.constant(tensor_from_numpy(b))).value());
}

py::array_t<double> py_softmax(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    Tape tape;
    return tensor_to_numpy(softmax_rows(tape.constant(tensor_from_numpy(a))).value());
}

py::array_t<double> py_relu(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    Tape tape;
    return tensor_to_numpy(relu(tape.constant(tensor_from_numpy(a))).value());
}

double py_info_nce(const py::array_t<double, py::array::c_style | py::array::forcecast>& text,
                   const py::array_t<double, py::array::c_style | py::array::forcecast>& image, double tau, bool symmetric) {
    return info_nce_loss_value(tensor_from_numpy(text), tensor_from_numpy(image), tau, symmetric);
}

// (scale, patch, score) triples from a dense score matrix with optional mask.
std::vector<std::tuple<size_t, size_t, double>> py_top_k(
    const py::array_t<double, py::array::c_style | py::array::forcecast>& scores,
    const std::optional<py::array_t<bool, py::array::c_style | py::array::forcecast>>& mask, size_t k) {
    Tensor s = tensor_from_numpy(scores);
    RelevanceMatrix rel;
    for (size_t row = 0; row < s.rows(); ++row) {
        std::vector<double> r(s.cols());
        std::vector<bool> v(s.cols(), true);
        for (size_t col = 0; col < s.cols(); ++col) {
            r[col] = s.at(row, col);
            if (mask) v[col] = *(mask->data() + row * s.cols() + col);
        }
        rel.scores.push_back(std::move(r));
        rel.valid.push_back(std::move(v));
    }
    std::vector<std::tuple<size_t, size_t, double>> out;
    for (const SelectedRegion& e : top_k_select(rel, k).entries) out.emplace_back(e.scale, e.patch, e.score);
    return out;
}

py::dict metrics_dict(const MetricsReport& m) {
    py::dict d;
    d["tp"] = m.tp;
    d["tn"] = m.tn;
    d["fp"] = m.fp;
    d["fn"] = m.fn;
    d["accuracy"] = m.accuracy;
    d["precision"] = m.precision;
    d["recall"] = m.recall;
    d["f1"] = m.f1;
    return d;
}

py::dict py_metrics(const std::vector<int>& preds, const std::vector<int>& labels) {
    return metrics_dict(compute_metrics(preds, labels));
}

void py_gen_data(const std::string& kind, size_t n, uint64_t seed, const std::string& out_dir, size_t image_size,
                 double rumor_rate) {
    SyntheticSpec spec;
    spec.seed = seed;
    spec.image_size = image_size;
    spec.rumor_rate = rumor_rate;
    write_dataset(out_dir, kind == "pairs" ? generate_pretraining_pairs(spec, n) : generate_rumor_samples(spec, n), false);
}

py::dict py_pretrain(const py::dict& config, const std::string& data, const std::string& out_ckpt) {
    RunConfig cfg = RunConfig::from_json(nlohmann::json::parse(std::string(py::str(py::module_::import("json").attr("dumps")(config)))));
    std::ostringstream log;
    PretrainResult r = run_pretrain(cfg, load_dataset(data), out_ckpt, &log);
    py::dict d;
    d["final_epoch_mean_loss"] = r.final_epoch_mean_loss;
    d["steps"] = r.steps;
    d["log"] = log.str();
    return d;
}

py::dict py_train(const py::dict& config, const std::string& init_ckpt, const std::string& data, const std::string& out_ckpt) {
    RunConfig cfg = RunConfig::from_json(nlohmann::json::parse(std::string(py::str(py::module_::import("json").attr("dumps")(config)))));
    std::ostringstream log;
    TrainResult r = run_train(cfg, init_ckpt, load_dataset(data), out_ckpt, &log);
    py::dict d;
    d["best_epoch"] = r.best_epoch;
    d["best_val_f1"] = r.best_val_f1;
    d["log"] = log.str();
    return d;
}

py::dict py_eval(const std::string& ckpt, const std::string& data, const std::string& split) {
    EvalOptions opts;
    opts.split = split;
    return metrics_dict(run_eval(ckpt, load_dataset(data), opts));
}

py::dict py_infer(const std::string& ckpt, const std::string& text, const std::string& image_path) {
    InferResult r = run_infer(ckpt, text, read_image(image_path));
    py::dict d;
    d["yhat"] = r.yhat;
    d["decision"] = r.decision;
    std::vector<std::tuple<size_t, size_t, double>> sel;
    for (const SelectedRegion& e : r.diagnostics.selected.entries) sel.emplace_back(e.scale, e.patch, e.score);
    d["selected"] = sel;
    return d;
}

double py_gradcheck_primitives(uint64_t seed) {
    Rng rng(seed);
    ParamStore store;
    Parameter& a = store.create_uniform("a", {2, 4}, rng, 0.1, 1.0);
    Parameter& b = store.create_uniform("b", {4, 2}, rng, -1.0, -0.1);
    auto build = [&](Tape& t) { return mean_all(softmax_rows(sigmoid(matmul(t.param(a), t.param(b))))); };
    return finite_difference_check(store, build).worst;
}

}  // namespace

PYBIND11_MODULE(_micc, m) {
    m.doc() = "MICC rumor-detection pipeline (C++ core)";

    m.def("positional_encoding", [](size_t pos, size_t d) { return tensor_to_numpy(positional_encoding(pos, d)); }, py::arg("pos"),
          py::arg("d_model"));
    m.def("tokenize", [](const std::string& text, const std::vector<std::string>& vocab, size_t max_len) {
        TokenSequence seq = tokenize(text, Vocabulary::from_tokens(vocab), max_len);
        return py::make_tuple(seq.ids, seq.length);
    });
    m.def("matmul", &py_matmul);
    m.def("softmax", &py_softmax);
    m.def("relu", &py_relu);
    m.def("info_nce_loss", &py_info_nce, py::arg("text"), py::arg("image"), py::arg("tau") = 0.07, py::arg("symmetric") = false);
    m.def("top_k_select", &py_top_k, py::arg("scores"), py::arg("mask") = std::nullopt, py::arg("k") = 2);
    m.def("compute_metrics", &py_metrics, py::arg("predictions"), py::arg("labels"));
    m.def("gen_data", &py_gen_data, py::arg("kind"), py::arg("n"), py::arg("seed"), py::arg("out_dir"),
          py::arg("image_size") = 192, py::arg("rumor_rate") = 0.5);
    m.def("pretrain", &py_pretrain, py::arg("config"), py::arg("data"), py::arg("out_ckpt"));
    m.def("train", &py_train, py::arg("config"), py::arg("init_ckpt"), py::arg("data"), py::arg("out_ckpt"));
    m.def("eval", &py_eval, py::arg("ckpt"), py::arg("data"), py::arg("split") = "test");
    m.def("infer", &py_infer, py::arg("ckpt"), py::arg("text"), py::arg("image"));
    m.def("gradcheck_primitives", &py_gradcheck_primitives, py::arg("seed") = 7);
    m.def("default_config", []() {
        py::dict d = py::module_::import("json").attr("loads")(RunConfig{}.to_json().dump());
        return d;
    });
}
