#pragma once

#include <functional>
#include <string>
#include <vector>

#include "micc/graph.hpp"
#include "micc/optim.hpp"

namespace micc {

struct GradCheckEntry {
    std::string name;
    double max_rel_err = 0.0;
    size_t entries_checked = 0;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> per_param;
    double worst = 0.0;
    bool passed(double tolerance) const { return worst < tolerance; }
};

// Central finite differences against the tape's analytic gradients. The
// builder must be deterministic: called repeatedly while single entries of
// the parameters are nudged by +/-step. Large parameters are probed at
// `samples_per_param` random entries instead of exhaustively.
GradCheckReport finite_difference_check(ParamStore& params, const std::function<Var(Tape&)>& build_loss, double step = 1e-5,
                                        size_t samples_per_param = 6, uint64_t probe_seed = 1234);

}  // namespace micc
