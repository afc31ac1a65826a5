#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "micc/checkpoint.hpp"
#include "micc/data.hpp"
#include "micc/model.hpp"

namespace micc {

// CSV log lines: per step "stage,epoch,step,loss", per epoch
// "epoch,split,acc,prec,rec,f1"; lines starting with '#' are comments.

struct PretrainResult {
    double final_epoch_mean_loss = 0.0;
    size_t steps = 0;
};

struct TrainResult {
    size_t best_epoch = 0;
    double best_val_f1 = 0.0;
    size_t n_train = 0, n_val = 0, n_test = 0;
};

struct EvalOptions {
    std::string split = "test";  // train | validation | test | all
    std::string dump_alignment;  // CSV path, empty = off
    std::string dump_fusion;
};

struct InferResult {
    double yhat = 0.0;
    int decision = 0;
    SampleDiagnostics diagnostics;
};

// In-memory drivers (tests and bindings use these directly).
PretrainResult pretrain_model(MiccModel& model, const std::vector<SampleRecord>& pairs, std::ostream* log = nullptr);
TrainResult train_model(MiccModel& model, const DatasetSplit& split, std::ostream* log = nullptr);
MetricsReport evaluate_model(const MiccModel& model, const std::vector<SampleRecord>& records, std::ostream* log = nullptr,
                             const EvalOptions& opts = {}, size_t log_epoch = 0);
std::vector<double> predict_probabilities(const MiccModel& model, const std::vector<SampleRecord>& records);

// File-level entry points behind the CLI.
PretrainResult run_pretrain(const RunConfig& cfg, const std::vector<SampleRecord>& pairs, const std::string& out_ckpt,
                            std::ostream* log = nullptr);
TrainResult run_train(const RunConfig& cfg, const std::string& init_ckpt, const std::vector<SampleRecord>& records,
                      const std::string& out_ckpt, std::ostream* log = nullptr);
MetricsReport run_eval(const std::string& ckpt_path, const std::vector<SampleRecord>& records, const EvalOptions& opts = {},
                       std::ostream* log = nullptr);
InferResult run_infer(const std::string& ckpt_path, const std::string& text, const ImageU8& image);

MiccModel model_from_checkpoint(const Checkpoint& ckpt);

}  // namespace micc
