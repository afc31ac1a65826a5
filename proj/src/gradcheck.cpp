#include "micc/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace micc {

GradCheckReport finite_difference_check(ParamStore& params, const std::function<Var(Tape&)>& build_loss, double step,
                                        size_t samples_per_param, uint64_t probe_seed) {
    GradCheckReport report;
    params.zero_grads();
    {
        Tape tape;
        Var loss = build_loss(tape);
        tape.backward(loss);
    }
    // Snapshot analytic grads; the FD loop below reuses the store.
    std::vector<Tensor> analytic;
    for (auto& p : params) analytic.push_back(p->grad.empty() ? Tensor::zeros(p->tensor.shape()) : p->grad);
    params.zero_grads();

    auto eval = [&]() {
        Tape tape;
        return build_loss(tape).value().item();
    };

    Rng probe(probe_seed);
    size_t pi = 0;
    for (auto& p : params) {
        GradCheckEntry entry;
        entry.name = p->name;
        const size_t n = p->tensor.size();
        std::vector<size_t> idx;
        if (n <= samples_per_param) {
            for (size_t i = 0; i < n; ++i) idx.push_back(i);
        } else {
            for (size_t s = 0; s < samples_per_param; ++s) idx.push_back(probe.index(n));
        }
        for (size_t i : idx) {
            const double orig = p->tensor[i];
            p->tensor[i] = orig + step;
            const double fplus = eval();
            p->tensor[i] = orig - step;
            const double fminus = eval();
            p->tensor[i] = orig;
            const double fd = (fplus - fminus) / (2.0 * step);
            const double an = analytic[pi][i];
            const double denom = std::max({std::fabs(fd), std::fabs(an), 1e-4});
            entry.max_rel_err = std::max(entry.max_rel_err, std::fabs(fd - an) / denom);
            ++entry.entries_checked;
        }
        report.worst = std::max(report.worst, entry.max_rel_err);
        report.per_param.push_back(std::move(entry));
        ++pi;
    }
    return report;
}

}  // namespace micc
