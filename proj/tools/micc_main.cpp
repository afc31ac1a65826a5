#include <CLI11.hpp>

#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>

#include "micc/data.hpp"
#include "micc/errors.hpp"
#include "micc/gradcheck.hpp"
#include "micc/trainer.hpp"

using namespace micc;

namespace {

// Config file first, then CLI overrides on top.
struct ConfigCli {
    std::string config_path;
    std::vector<size_t> scales;
    CLI::Option *scales_opt = nullptr, *top_k_opt = nullptr, *lambda_opt = nullptr, *tau_opt = nullptr, *seed_opt = nullptr,
                *image_size_opt = nullptr, *fusion_layers_opt = nullptr, *fusion_hidden_opt = nullptr, *s1_epochs_opt = nullptr,
                *s2_epochs_opt = nullptr, *s1_lr_opt = nullptr, *s2_lr_opt = nullptr, *s1_batch_opt = nullptr,
                *s2_batch_opt = nullptr, *dropout_opt = nullptr;
    size_t top_k = 0, image_size = 0, fusion_layers = 0, fusion_hidden = 0, s1_epochs = 0, s2_epochs = 0, s1_batch = 0,
           s2_batch = 0;
    double lambda = 0, tau = 0, s1_lr = 0, s2_lr = 0, dropout = 0;
    uint64_t seed = 0;
    bool symmetric_nce = false, global_topk = false, per_scale_encoder = false;
    bool ab_no_align_patches = false, ab_no_align_global = false, ab_no_fusion_concat = false, ab_no_fusion_project = false,
         ab_cosine = false, ab_attention = false;

    void attach(CLI::App* cmd) {
        cmd->add_option("--config", config_path, "JSON config file; flags below override its values");
        scales_opt = cmd->add_option("--scales", scales, "receptive-field sizes, e.g. --scales 32 64")->delimiter(',');
        top_k_opt = cmd->add_option("--top-k", top_k, "patches selected per scale");
        lambda_opt = cmd->add_option("--lambda", lambda, "salience/relevance blend weight");
        tau_opt = cmd->add_option("--tau", tau, "InfoNCE temperature");
        seed_opt = cmd->add_option("--seed", seed, "master seed");
        image_size_opt = cmd->add_option("--image-size", image_size, "square input side");
        fusion_layers_opt = cmd->add_option("--fusion-layers", fusion_layers, "linear layers in the fusion scorer");
        fusion_hidden_opt = cmd->add_option("--fusion-hidden", fusion_hidden, "hidden width of the fusion scorer");
        s1_epochs_opt = cmd->add_option("--stage1-epochs", s1_epochs, "pretraining epochs");
        s2_epochs_opt = cmd->add_option("--stage2-epochs", s2_epochs, "training epochs");
        s1_lr_opt = cmd->add_option("--stage1-lr", s1_lr, "pretraining learning rate");
        s2_lr_opt = cmd->add_option("--stage2-lr", s2_lr, "training learning rate");
        s1_batch_opt = cmd->add_option("--stage1-batch", s1_batch, "pretraining batch size");
        s2_batch_opt = cmd->add_option("--stage2-batch", s2_batch, "training batch size");
        dropout_opt = cmd->add_option("--dropout", dropout, "classifier dropout rate");
        cmd->add_flag("--symmetric-nce", symmetric_nce, "average both InfoNCE directions");
        cmd->add_flag("--global-topk", global_topk, "one Top-K pool across scales instead of per scale");
        cmd->add_flag("--per-scale-encoder", per_scale_encoder, "visual attention per scale instead of joint");
        cmd->add_flag("--no-align-patches", ab_no_align_patches, "ablation: skip Top-K, mean all valid patches");
        cmd->add_flag("--no-align-global", ab_no_align_global, "ablation: pooled global visual feature");
        cmd->add_flag("--no-fusion-concat", ab_no_fusion_concat, "ablation: concat selected patches + text directly");
        cmd->add_flag("--no-fusion-project", ab_no_fusion_project, "ablation: linear-reduce selected patches, then concat");
        cmd->add_flag("--cosine-relevance", ab_cosine, "ablation: cosine relevance instead of dot product");
        cmd->add_flag("--attention-fusion", ab_attention, "ablation: cross-attention readout instead of concatenation");
    }

    RunConfig build() const {
        RunConfig cfg = config_path.empty() ? RunConfig{} : RunConfig::load(config_path);
        if (*scales_opt) cfg.scales = scales;
        if (*top_k_opt) cfg.top_k = top_k;
        if (*lambda_opt) cfg.lambda = lambda;
        if (*tau_opt) cfg.tau = tau;
        if (*seed_opt) cfg.seed = seed;
        if (*image_size_opt) cfg.image_size = image_size;
        if (*fusion_layers_opt) cfg.fusion_layers = fusion_layers;
        if (*fusion_hidden_opt) cfg.fusion_hidden = fusion_hidden;
        if (*s1_epochs_opt) cfg.stage1_epochs = s1_epochs;
        if (*s2_epochs_opt) cfg.stage2_epochs = s2_epochs;
        if (*s1_lr_opt) cfg.stage1_lr = s1_lr;
        if (*s2_lr_opt) cfg.stage2_lr = s2_lr;
        if (*s1_batch_opt) cfg.stage1_batch = s1_batch;
        if (*s2_batch_opt) cfg.stage2_batch = s2_batch;
        if (*dropout_opt) cfg.dropout = dropout;
        if (symmetric_nce) cfg.symmetric_nce = true;
        if (global_topk) cfg.global_topk = true;
        if (per_scale_encoder) cfg.per_scale_attention = true;
        std::vector<std::string> variants;
        if (ab_no_align_patches) variants.push_back("no-align-patches");
        if (ab_no_align_global) variants.push_back("no-align-global");
        if (ab_no_fusion_concat) variants.push_back("no-fusion-concat");
        if (ab_no_fusion_project) variants.push_back("no-fusion-project");
        if (ab_cosine) variants.push_back("cosine-relevance");
        if (ab_attention) variants.push_back("attention-fusion");
        if (variants.size() > 1) throw ConfigError("exactly one ablation variant flag may be given");
        if (!variants.empty()) cfg.ablation = variants[0];
        cfg.validate();
        return cfg;
    }
};

struct LogSink {
    std::ofstream file;
    std::ostream* stream = &std::cout;
    void open(const std::string& path) {
        if (path.empty()) return;
        file.open(path);
        if (!file) throw DataError("cannot open log file " + path);
        stream = &file;
    }
};

void print_metrics(const MetricsReport& m, const std::string& dataset, const std::string& split) {
    std::cout << std::fixed << std::setprecision(6);
    std::cout << "dataset:   " << dataset << " (" << split << " split)\n";
    std::cout << "accuracy:  " << m.accuracy << "\n";
    std::cout << "precision: " << m.precision << "\n";
    std::cout << "recall:    " << m.recall << "\n";
    std::cout << "f1:        " << m.f1 << "\n";
    std::cout << "confusion: TP=" << m.tp << " TN=" << m.tn << " FP=" << m.fp << " FN=" << m.fn << "\n";
    // machine-readable row
    std::cout << "csv," << dataset << "," << split << "," << m.accuracy << "," << m.precision << "," << m.recall << "," << m.f1
              << "," << m.tp << "," << m.tn << "," << m.fp << "," << m.fn << "\n";
}

int run_gradcheck(double tolerance, uint64_t seed) {
    std::cout << "primitive suite (tolerance 1e-4)\n";
    double worst_primitive = 0.0;
    {
        Rng rng(seed);
        ParamStore store;
        auto rand_param = [&](const std::string& name, std::vector<size_t> shape, double lo, double hi) -> Parameter& {
            return store.create_uniform(name, std::move(shape), rng, lo, hi);
        };
        Parameter& a = rand_param("a", {3, 4}, 0.1, 1.0);
        Parameter& b = rand_param("b", {4, 3}, -1.0, -0.1);
        Parameter& gamma = rand_param("ln.scale", {1, 3}, 0.5, 1.5);
        Parameter& beta = rand_param("ln.shift", {1, 3}, -0.3, 0.3);
        Parameter& table = rand_param("embed", {5, 4}, -0.5, 0.5);
        auto build = [&](Tape& t) {
            Var x = matmul(t.param(a), t.param(b));
            Var e = embedding(t.param(table), {0, 2, 4});
            Var ln = layer_norm(sigmoid(x), t.param(gamma), t.param(beta));
            Var att = attention(e, e, e);
            Var sm = softmax_rows(concat_rows({ln, relu(x)}));
            return add(mean_all(logsumexp_rows(sm)), mean_all(att));
        };
        GradCheckReport rep = finite_difference_check(store, build, 1e-5, 8, seed);
        for (const auto& e : rep.per_param)
            std::cout << "  " << e.name << "  max_rel_err=" << e.max_rel_err << "  (" << e.entries_checked << " entries)\n";
        worst_primitive = rep.worst;
    }
    std::cout << "primitive worst: " << worst_primitive << (worst_primitive < 1e-4 ? "  PASS" : "  FAIL") << "\n";

    std::cout << "full pipeline, 1-sample batch (tolerance " << tolerance << ")\n";
    RunConfig cfg;
    cfg.image_size = 64;  // grids 2x2 and 1x1; keeps finite differencing quick
    cfg.seed = seed;
    SyntheticSpec spec;
    spec.seed = seed;
    spec.image_size = cfg.image_size;
    std::vector<SampleRecord> sample = generate_rumor_samples(spec, 1);
    MiccModel model(cfg, Vocabulary::from_corpus({sample[0].text}).tokens());
    Tensor image = record_image_tensor(sample[0], cfg.image_size);
    TokenSequence seq = model.tokenize_text(sample[0].text);
    Tensor target = Tensor::scalar(sample[0].label);
    auto build = [&](Tape& tape) {
        Rng drop(123);  // fixed per call: dropout masks repeat, so FD stays valid
        Var yhat = model.classify(tape, {seq}, {&image}, true, drop);
        return binary_cross_entropy(yhat, target);
    };
    GradCheckReport rep = finite_difference_check(model.params(), build, 1e-5, 3, seed);
    for (const auto& e : rep.per_param)
        std::cout << "  " << e.name << "  max_rel_err=" << e.max_rel_err << "\n";
    std::cout << "pipeline worst: " << rep.worst << (rep.worst < tolerance ? "  PASS" : "  FAIL") << "\n";
    return worst_primitive < 1e-4 && rep.worst < tolerance ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"MICC: multi-scale image-context correlation rumor detector"};
    app.require_subcommand(1);

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
    std::string gen_kind = "rumor", gen_out;
    size_t gen_n = 1000;
    uint64_t gen_seed = 7;
    size_t gen_image = 192, gen_max_objects = 4;
    double gen_rumor_rate = 0.5;
    bool gen_inline = false;
    gen->add_option("--kind", gen_kind, "pairs | rumor")->check(CLI::IsMember({"pairs", "rumor"}));
    gen->add_option("--n", gen_n, "record count")->required();
    gen->add_option("--seed", gen_seed, "generator seed");
    gen->add_option("--out", gen_out, "output directory")->required();
    gen->add_option("--image-size", gen_image, "rendered image side");
    gen->add_option("--max-objects", gen_max_objects, "objects per image, 1..this");
    gen->add_option("--rumor-rate", gen_rumor_rate, "positive-class rate (rumor kind)");
    gen->add_flag("--inline-images", gen_inline, "embed images as data: URIs instead of PPM files");

    // pretrain
    auto* pre = app.add_subcommand("pretrain", "stage 1: contrastive projection pretraining");
    ConfigCli pre_cfg;
    std::string pre_data, pre_out, pre_log;
    pre_cfg.attach(pre);
    pre->add_option("--data", pre_data, "pair dataset (dir or .jsonl)")->required();
    pre->add_option("--out", pre_out, "checkpoint path")->required();
    pre->add_option("--log", pre_log, "write CSV log here instead of stdout");

    // train
    auto* tr = app.add_subcommand("train", "stage 2: end-to-end rumor training");
    ConfigCli tr_cfg;
    std::string tr_data, tr_init, tr_out, tr_log;
    tr_cfg.attach(tr);
    tr->add_option("--data", tr_data, "labeled dataset (dir or .jsonl)")->required();
    tr->add_option("--init", tr_init, "stage-1 checkpoint")->required();
    tr->add_option("--out", tr_out, "checkpoint path")->required();
    tr->add_option("--log", tr_log, "write CSV log here instead of stdout");

    // eval
    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
    std::string ev_ckpt, ev_data, ev_split = "test", ev_dump_align, ev_dump_fusion, ev_log;
    ev->add_option("--ckpt", ev_ckpt, "checkpoint path")->required();
    ev->add_option("--data", ev_data, "labeled dataset (dir or .jsonl)")->required();
    ev->add_option("--split", ev_split, "train | validation | test | all");
    ev->add_option("--dump-alignment", ev_dump_align, "per-sample (scale,patch,score,selected) CSV");
    ev->add_option("--dump-fusion", ev_dump_fusion, "per-sample alpha-weight CSV");
    ev->add_option("--log", ev_log, "write CSV log here instead of stdout");

    // infer
    auto* inf = app.add_subcommand("infer", "score one text+image pair");
    std::string inf_ckpt, inf_text, inf_image;
    inf->add_option("--ckpt", inf_ckpt, "checkpoint path")->required();
    inf->add_option("--text", inf_text, "claim text")->required();
    inf->add_option("--image", inf_image, "PNG or PPM image path")->required();

    // gradcheck
    auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient audit");
    double gc_tol = 1e-3;
    uint64_t gc_seed = 5150;
    gc->add_option("--tolerance", gc_tol, "pipeline tolerance (primitives stay at 1e-4)");
    gc->add_option("--seed", gc_seed, "probe seed");

    try {
        app.parse(argc, argv);

        if (*gen) {
            SyntheticSpec spec;
            spec.seed = gen_seed;
            spec.image_size = gen_image;
            spec.max_objects = gen_max_objects;
            spec.rumor_rate = gen_rumor_rate;
            std::vector<SampleRecord> records =
                gen_kind == "pairs" ? generate_pretraining_pairs(spec, gen_n) : generate_rumor_samples(spec, gen_n);
            write_dataset(gen_out, records, gen_inline);
            std::cout << "wrote " << records.size() << " " << gen_kind << " records to " << gen_out << "\n";
            return 0;
        }
        if (*pre) {
            RunConfig cfg = pre_cfg.build();
            LogSink sink;
            sink.open(pre_log);
            PretrainResult r = run_pretrain(cfg, load_dataset(pre_data), pre_out, sink.stream);
            const double chance = std::log(static_cast<double>(cfg.stage1_batch));
            std::cout << "final epoch mean InfoNCE: " << r.final_epoch_mean_loss << " (chance level ln " << cfg.stage1_batch
                      << " = " << chance << ")\n";
            std::cout << "checkpoint: " << pre_out << "\n";
            return 0;
        }
        if (*tr) {
            RunConfig cfg = tr_cfg.build();
            LogSink sink;
            sink.open(tr_log);
            TrainResult r = run_train(cfg, tr_init, load_dataset(tr_data), tr_out, sink.stream);
            std::cout << "best validation F1 " << r.best_val_f1 << " at epoch " << r.best_epoch << "\n";
            std::cout << "checkpoint: " << tr_out << "\n";
            return 0;
        }
        if (*ev) {
            LogSink sink;
            sink.open(ev_log);
            EvalOptions opts;
            opts.split = ev_split;
            opts.dump_alignment = ev_dump_align;
            opts.dump_fusion = ev_dump_fusion;
            MetricsReport m = run_eval(ev_ckpt, load_dataset(ev_data), opts, sink.stream);
            print_metrics(m, ev_data, ev_split);
            return 0;
        }
        if (*inf) {
            InferResult r = run_infer(inf_ckpt, inf_text, read_image(inf_image));
            std::cout << std::fixed << std::setprecision(6);
            std::cout << "yhat=" << r.yhat << " class=" << (r.decision == 1 ? "rumor" : "non-rumor") << "\n";
            std::cout << "selected regions (scale,patch,score):\n";
            for (const SelectedRegion& e : r.diagnostics.selected.entries)
                std::cout << "  " << e.scale << "," << e.patch << "," << e.score << "\n";
            return 0;
        }
        if (*gc) return run_gradcheck(gc_tol, gc_seed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
