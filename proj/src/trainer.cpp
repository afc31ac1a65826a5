#include "micc/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "micc/errors.hpp"

namespace micc {

namespace {

void log_line(std::ostream* log, const std::string& line) {
    if (log) *log << line << "\n";
}

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(10);
    os << v;
    return os.str();
}

std::vector<Tensor> load_images(const MiccModel& model, const std::vector<SampleRecord>& records, const std::vector<size_t>& idx) {
    std::vector<Tensor> out;
    out.reserve(idx.size());
    for (size_t i : idx) out.push_back(record_image_tensor(records[i], model.config().image_size));
    return out;
}

std::vector<const Tensor*> pointers(const std::vector<Tensor>& ts) {
    std::vector<const Tensor*> p;
    p.reserve(ts.size());
    for (const Tensor& t : ts) p.push_back(&t);
    return p;
}

// Frozen-encoder outputs are constants across stage-1 steps; compute them
// once per record in forward-only batches.
struct EncoderCache {
    std::vector<Tensor> text_states;    // H blocks (n_i x d_model)
    std::vector<Tensor> visual_states;  // G blocks (m x d_model)
};

EncoderCache build_cache(const MiccModel& model, const std::vector<SampleRecord>& pairs) {
    EncoderCache cache;
    cache.text_states.resize(pairs.size());
    cache.visual_states.resize(pairs.size());
    const size_t chunk = 32;
    for (size_t begin = 0; begin < pairs.size(); begin += chunk) {
        const size_t end = std::min(begin + chunk, pairs.size());
        std::vector<size_t> idx(end - begin);
        std::iota(idx.begin(), idx.end(), begin);
        std::vector<TokenSequence> seqs;
        for (size_t i : idx) seqs.push_back(model.tokenize_text(pairs[i].text));
        std::vector<Tensor> images = load_images(model, pairs, idx);

        Tape tape;
        std::vector<Range> text_ranges;
        Var h = model.sclip().text_encoder().encode(tape, seqs, &text_ranges);
        std::vector<Range> visual_ranges;
        Var g = model.sclip().visual_encoder().encode(tape, pointers(images), &visual_ranges);
        for (size_t bi = 0; bi < idx.size(); ++bi) {
            cache.text_states[idx[bi]] = slice_rows(h, text_ranges[bi]).value();
            cache.visual_states[idx[bi]] = slice_rows(g, visual_ranges[bi]).value();
        }
    }
    return cache;
}

std::vector<std::vector<size_t>> make_batches(size_t n, size_t batch_size, Rng& rng) {
    std::vector<size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    rng.shuffle(idx);
    std::vector<std::vector<size_t>> batches;
    for (size_t b = 0; b < n; b += batch_size)
        batches.emplace_back(idx.begin() + static_cast<long>(b), idx.begin() + static_cast<long>(std::min(b + batch_size, n)));
    return batches;
}

void require_finite(double loss, const char* where) {
    if (!std::isfinite(loss)) throw NumericError(std::string(where) + ": non-finite loss");
}

const std::vector<SampleRecord>& pick_split(const DatasetSplit& split, const std::string& name,
                                            std::vector<SampleRecord>& all_storage) {
    if (name == "train") return split.train;
    if (name == "validation") return split.validation;
    if (name == "test") return split.test;
    if (name == "all") {
        all_storage = split.train;
        all_storage.insert(all_storage.end(), split.validation.begin(), split.validation.end());
        all_storage.insert(all_storage.end(), split.test.begin(), split.test.end());
        return all_storage;
    }
    throw ConfigError("eval: unknown split '" + name + "'");
}

}  // namespace

PretrainResult pretrain_model(MiccModel& model, const std::vector<SampleRecord>& pairs, std::ostream* log) {
    if (pairs.empty()) throw DataError("pretrain: empty pair dataset");
    for (const SampleRecord& r : pairs)
        if (r.has_label()) throw DataError("pretrain: labeled dataset passed; expected image-text pairs (record " + r.id + ")");
    const RunConfig& cfg = model.config();
    model.apply_stage1_freeze();
    EncoderCache cache = build_cache(model, pairs);

    Adam opt(model.trainable_params(), AdamConfig{cfg.stage1_lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps});
    Rng shuffle_rng(cfg.seed ^ 0x5354414745315ull);
    PretrainResult result;
    for (size_t epoch = 1; epoch <= cfg.stage1_epochs; ++epoch) {
        double epoch_loss = 0.0;
        size_t epoch_steps = 0;
        for (const std::vector<size_t>& batch : make_batches(pairs.size(), cfg.stage1_batch, shuffle_rng)) {
            if (batch.size() < 2) continue;  // a single pair has no negatives
            std::vector<const Tensor*> h, g;
            for (size_t i : batch) {
                h.push_back(&cache.text_states[i]);
                g.push_back(&cache.visual_states[i]);
            }
            Tape tape;
            Var loss = model.pretrain_loss_cached(tape, h, g);
            const double value = loss.value().item();
            require_finite(value, "pretrain");
            tape.backward(loss);
            opt.step();
            ++result.steps;
            ++epoch_steps;
            epoch_loss += value;
            log_line(log, "1," + std::to_string(epoch) + "," + std::to_string(result.steps) + "," + fmt(value));
        }
        if (epoch_steps > 0) result.final_epoch_mean_loss = epoch_loss / static_cast<double>(epoch_steps);
    }
    return result;
}

std::vector<double> predict_probabilities(const MiccModel& model, const std::vector<SampleRecord>& records) {
    std::vector<double> yhat;
    yhat.reserve(records.size());
    const size_t chunk = std::max<size_t>(1, model.config().stage2_batch);
    Rng unused(0);
    for (size_t begin = 0; begin < records.size(); begin += chunk) {
        const size_t end = std::min(begin + chunk, records.size());
        std::vector<size_t> idx(end - begin);
        std::iota(idx.begin(), idx.end(), begin);
        std::vector<TokenSequence> seqs;
        for (size_t i : idx) seqs.push_back(model.tokenize_text(records[i].text));
        std::vector<Tensor> images = load_images(model, records, idx);
        Tape tape;
        Var out = model.classify(tape, seqs, pointers(images), false, unused);
        for (size_t i = 0; i < idx.size(); ++i) yhat.push_back(out.value()[i]);
    }
    return yhat;
}

namespace {
MetricsReport metrics_for(const MiccModel& model, const std::vector<SampleRecord>& records) {
    std::vector<double> yhat = predict_probabilities(model, records);
    std::vector<int> preds, labels;
    for (size_t i = 0; i < records.size(); ++i) {
        preds.push_back(decide(yhat[i]));
        labels.push_back(records[i].label);
    }
    return compute_metrics(preds, labels);
}

std::string epoch_csv(size_t epoch, const std::string& split, const MetricsReport& m) {
    return std::to_string(epoch) + "," + split + "," + fmt(m.accuracy) + "," + fmt(m.precision) + "," + fmt(m.recall) + "," +
           fmt(m.f1);
}
}  // namespace

TrainResult train_model(MiccModel& model, const DatasetSplit& split, std::ostream* log) {
    const RunConfig& cfg = model.config();
    if (split.train.empty() || split.validation.empty()) throw DataError("train: empty train or validation split");
    for (const SampleRecord& r : split.train)
        if (!r.has_label()) throw DataError("train: unlabeled record " + r.id);
    model.unfreeze_all();
    Adam opt(model.trainable_params(), AdamConfig{cfg.stage2_lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps});
    Rng shuffle_rng(cfg.seed ^ 0x5354414745325ull);
    Rng dropout_rng(cfg.seed ^ 0x44524f50ull);

    TrainResult result;
    result.n_train = split.train.size();
    result.n_val = split.validation.size();
    result.n_test = split.test.size();
    log_line(log, "# split,train=" + std::to_string(result.n_train) + ",val=" + std::to_string(result.n_val) +
                      ",test=" + std::to_string(result.n_test));

    std::vector<Tensor> best_params;
    size_t global_step = 0;
    for (size_t epoch = 1; epoch <= cfg.stage2_epochs; ++epoch) {
        for (const std::vector<size_t>& batch : make_batches(split.train.size(), cfg.stage2_batch, shuffle_rng)) {
            std::vector<TokenSequence> seqs;
            Tensor targets({batch.size(), 1});
            for (size_t bi = 0; bi < batch.size(); ++bi) {
                seqs.push_back(model.tokenize_text(split.train[batch[bi]].text));
                targets[bi] = split.train[batch[bi]].label;
            }
            std::vector<Tensor> images = load_images(model, split.train, batch);
            Tape tape;
            Var yhat = model.classify(tape, seqs, pointers(images), true, dropout_rng);
            Var loss = binary_cross_entropy(yhat, std::move(targets));
            const double value = loss.value().item();
            require_finite(value, "train");
            tape.backward(loss);
            opt.step();
            ++global_step;
            log_line(log, "2," + std::to_string(epoch) + "," + std::to_string(global_step) + "," + fmt(value));
        }
        MetricsReport val = metrics_for(model, split.validation);
        log_line(log, epoch_csv(epoch, "val", val));
        if (best_params.empty() || val.f1 > result.best_val_f1) {
            result.best_val_f1 = val.f1;
            result.best_epoch = epoch;
            best_params.clear();
            for (const auto& p : model.params()) best_params.push_back(p->tensor);
        }
    }
    // restore the best-validation-F1 snapshot
    size_t pi = 0;
    for (auto& p : model.params()) p->tensor = best_params[pi++];
    return result;
}

MetricsReport evaluate_model(const MiccModel& model, const std::vector<SampleRecord>& records, std::ostream* log,
                             const EvalOptions& opts, size_t log_epoch) {
    if (records.empty()) throw DataError("eval: empty record list");
    for (const SampleRecord& r : records)
        if (!r.has_label()) throw DataError("eval: unlabeled record " + r.id);
    MetricsReport m = metrics_for(model, records);
    log_line(log, epoch_csv(log_epoch, opts.split, m));

    if (!opts.dump_alignment.empty() || !opts.dump_fusion.empty()) {
        std::ofstream align_csv, fusion_csv;
        if (!opts.dump_alignment.empty()) {
            align_csv.open(opts.dump_alignment);
            align_csv << "sample_id,scale,patch,score,selected\n";
        }
        if (!opts.dump_fusion.empty()) {
            fusion_csv.open(opts.dump_fusion);
            fusion_csv << "sample_id,slot,scale,patch,alpha\n";
        }
        for (const SampleRecord& rec : records) {
            SampleDiagnostics diag = model.predict(rec.text, load_record_image(rec));
            if (align_csv.is_open()) {
                for (size_t s = 0; s < diag.relevance.n_scales(); ++s)
                    for (size_t i = 0; i < diag.relevance.slots(); ++i) {
                        if (!diag.relevance.valid[s][i]) continue;
                        const bool sel = std::any_of(diag.selected.entries.begin(), diag.selected.entries.end(),
                                                     [&](const SelectedRegion& e) { return e.scale == s && e.patch == i; });
                        align_csv << rec.id << "," << s << "," << i << "," << fmt(diag.relevance.scores[s][i]) << ","
                                  << (sel ? 1 : 0) << "\n";
                    }
            }
            if (fusion_csv.is_open()) {
                for (size_t slot = 0; slot < diag.alpha.size(); ++slot) {
                    const bool valid = diag.alpha_valid[slot];
                    const SelectedRegion origin = valid && slot < diag.selected.entries.size() ? diag.selected.entries[slot]
                                                                                              : SelectedRegion{};
                    fusion_csv << rec.id << "," << slot << ",";
                    if (valid)
                        fusion_csv << origin.scale << "," << origin.patch;
                    else
                        fusion_csv << ",";
                    fusion_csv << "," << fmt(diag.alpha[slot]) << "\n";
                }
            }
        }
    }
    return m;
}

MiccModel model_from_checkpoint(const Checkpoint& ckpt) {
    MiccModel model(ckpt.config, ckpt.vocab_tokens);
    ckpt.restore_into(model.params());
    return model;
}

PretrainResult run_pretrain(const RunConfig& cfg, const std::vector<SampleRecord>& pairs, const std::string& out_ckpt,
                            std::ostream* log) {
    std::vector<std::string> texts;
    for (const SampleRecord& r : pairs) texts.push_back(r.text);
    MiccModel model(cfg, Vocabulary::from_corpus(texts).tokens());
    PretrainResult result = pretrain_model(model, pairs, log);
    nlohmann::json extra = {{"stage", 1}, {"final_loss", result.final_epoch_mean_loss}};
    Checkpoint::from_params(cfg, model.vocab().tokens(), model.params(), extra).save(out_ckpt);
    return result;
}

TrainResult run_train(const RunConfig& cfg, const std::string& init_ckpt, const std::vector<SampleRecord>& records,
                      const std::string& out_ckpt, std::ostream* log) {
    Checkpoint init = Checkpoint::load(init_ckpt);
    MiccModel model(cfg, init.vocab_tokens);
    init.restore_into(model.params());
    DatasetSplit split = split_8_1_1(records, cfg.seed);
    TrainResult result = train_model(model, split, log);
    nlohmann::json extra = {{"stage", 2}, {"best_epoch", result.best_epoch}, {"best_val_f1", result.best_val_f1}};
    Checkpoint::from_params(cfg, model.vocab().tokens(), model.params(), extra).save(out_ckpt);
    return result;
}

MetricsReport run_eval(const std::string& ckpt_path, const std::vector<SampleRecord>& records, const EvalOptions& opts,
                       std::ostream* log) {
    Checkpoint ckpt = Checkpoint::load(ckpt_path);
    MiccModel model = model_from_checkpoint(ckpt);
    DatasetSplit split = split_8_1_1(records, model.config().seed);
    std::vector<SampleRecord> all_storage;
    const std::vector<SampleRecord>& subset = pick_split(split, opts.split, all_storage);
    const size_t epoch = ckpt.extra.value("best_epoch", 0);
    return evaluate_model(model, subset, log, opts, epoch);
}

InferResult run_infer(const std::string& ckpt_path, const std::string& text, const ImageU8& image) {
    MiccModel model = model_from_checkpoint(Checkpoint::load(ckpt_path));
    InferResult r;
    r.diagnostics = model.predict(text, image);
    r.yhat = r.diagnostics.yhat;
    r.decision = decide(r.yhat);
    return r;
}

}  // namespace micc
