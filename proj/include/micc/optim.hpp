#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "micc/tensor.hpp"

namespace micc {

struct Parameter {
    std::string name;  // unique dotted path, e.g. "text.block0.ffn.w1"
    Tensor tensor;
    Tensor grad;  // empty until a backward pass touches it
    bool frozen = false;

    void zero_grad() { grad = Tensor(); }
    uint64_t byte_hash() const { return fnv1a64(tensor.data(), tensor.size() * sizeof(double)); }
};

// Owns all named parameters of a model; iteration follows creation order so
// optimizer updates are deterministic.
class ParamStore {
public:
    Parameter& create(const std::string& name, Tensor init);
    Parameter& create_uniform(const std::string& name, std::vector<size_t> shape, Rng& rng, double lo, double hi);
    Parameter* find(const std::string& name);
    const Parameter* find(const std::string& name) const;
    Parameter& at(const std::string& name);

    size_t size() const { return params_.size(); }
    auto begin() { return params_.begin(); }
    auto end() { return params_.end(); }
    auto begin() const { return params_.begin(); }
    auto end() const { return params_.end(); }

    void zero_grads();
    void freeze_all();
    void unfreeze_all();
    void set_frozen(const std::string& prefix, bool frozen);  // dotted-path prefix match
    size_t total_values() const;
    uint64_t hash_where(const std::function<bool(const Parameter&)>& pred) const;

private:
    std::vector<std::unique_ptr<Parameter>> params_;
};

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Adam with bias correction. Only the parameters handed to the constructor
// are stepped; frozen ones are rejected up front.
class Adam {
public:
    Adam(std::vector<Parameter*> params, AdamConfig cfg);

    // Applies one update from the accumulated grads, then clears them.
    void step();
    size_t step_count() const { return step_count_; }
    const AdamConfig& config() const { return cfg_; }
    void set_learning_rate(double lr) { cfg_.learning_rate = lr; }

private:
    std::vector<Parameter*> params_;
    std::vector<Tensor> m_, v_;
    AdamConfig cfg_;
    size_t step_count_ = 0;
};

}  // namespace micc
