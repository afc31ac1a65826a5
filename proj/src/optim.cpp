#include "micc/optim.hpp"

#include <cmath>
#include <functional>

#include "micc/errors.hpp"

namespace micc {

Parameter& ParamStore::create(const std::string& name, Tensor init) {
    if (find(name)) throw ConfigError("parameter name already used: " + name);
    params_.push_back(std::make_unique<Parameter>());
    Parameter& p = *params_.back();
    p.name = name;
    p.tensor = std::move(init);
    return p;
}

Parameter& ParamStore::create_uniform(const std::string& name, std::vector<size_t> shape, Rng& rng, double lo, double hi) {
    Tensor t(std::move(shape));
    for (size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
    return create(name, std::move(t));
}

Parameter* ParamStore::find(const std::string& name) {
    for (auto& p : params_)
        if (p->name == name) return p.get();
    return nullptr;
}

const Parameter* ParamStore::find(const std::string& name) const {
    for (auto& p : params_)
        if (p->name == name) return p.get();
    return nullptr;
}

Parameter& ParamStore::at(const std::string& name) {
    Parameter* p = find(name);
    if (!p) throw ConfigError("no such parameter: " + name);
    return *p;
}

void ParamStore::zero_grads() {
    for (auto& p : params_) p->zero_grad();
}

void ParamStore::freeze_all() {
    for (auto& p : params_) p->frozen = true;
}

void ParamStore::unfreeze_all() {
    for (auto& p : params_) p->frozen = false;
}

void ParamStore::set_frozen(const std::string& prefix, bool frozen) {
    for (auto& p : params_)
        if (p->name.rfind(prefix, 0) == 0) p->frozen = frozen;
}

size_t ParamStore::total_values() const {
    size_t n = 0;
    for (auto& p : params_) n += p->tensor.size();
    return n;
}

uint64_t ParamStore::hash_where(const std::function<bool(const Parameter&)>& pred) const {
    uint64_t h = 0xCBF29CE484222325ull;
    for (auto& p : params_) {
        if (!pred(*p)) continue;
        uint64_t ph = p->byte_hash();
        h ^= ph;
        h *= 0x100000001B3ull;
    }
    return h;
}

Adam::Adam(std::vector<Parameter*> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
    for (Parameter* p : params_) {
        if (p->frozen) throw ConfigError("adam: frozen parameter handed to optimizer: " + p->name);
        m_.push_back(Tensor::zeros(p->tensor.shape()));
        v_.push_back(Tensor::zeros(p->tensor.shape()));
    }
}

void Adam::step() {
    ++step_count_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_count_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_count_));
    for (size_t pi = 0; pi < params_.size(); ++pi) {
        Parameter& p = *params_[pi];
        if (p.grad.empty()) throw NumericError("adam: missing grad on parameter " + p.name);
        Tensor& m = m_[pi];
        Tensor& v = v_[pi];
        for (size_t i = 0; i < p.tensor.size(); ++i) {
            const double g = p.grad[i];
            m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
            v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            p.tensor[i] -= cfg_.learning_rate * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
    }
    for (Parameter* p : params_) p->zero_grad();
}

}  // namespace micc
