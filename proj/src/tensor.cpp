#include "micc/tensor.hpp"

#include <cmath>
#include <sstream>

#include "micc/errors.hpp"

namespace micc {

namespace {
size_t shape_product(const std::vector<size_t>& shape) {
    size_t n = 1;
    for (size_t d : shape) {
        if (d == 0) throw ShapeError("tensor: zero dimension in " + shape_str(shape));
        n *= d;
    }
    return n;
}
}  // namespace

Tensor::Tensor(std::vector<size_t> shape) : shape_(std::move(shape)) {
    data_.assign(shape_product(shape_), 0.0);
}

Tensor::Tensor(std::vector<size_t> shape, std::vector<double> values) : shape_(std::move(shape)), data_(std::move(values)) {
    if (shape_product(shape_) != data_.size())
        throw ShapeError("tensor: shape " + shape_str(shape_) + " does not match " + std::to_string(data_.size()) + " values");
}

Tensor Tensor::full(std::vector<size_t> shape, double v) {
    Tensor t(std::move(shape));
    t.fill(v);
    return t;
}

Tensor Tensor::row(std::vector<double> v) {
    size_t n = v.size();
    return Tensor({1, n}, std::move(v));
}

Tensor Tensor::column(std::vector<double> v) {
    size_t n = v.size();
    return Tensor({n, 1}, std::move(v));
}

Tensor Tensor::matrix(size_t rows, size_t cols, std::vector<double> v) {
    return Tensor({rows, cols}, std::move(v));
}

Tensor Tensor::identity(size_t n) {
    Tensor t({n, n});
    for (size_t i = 0; i < n; ++i) t.at(i, i) = 1.0;
    return t;
}

size_t Tensor::rows() const {
    if (rank() != 2) throw ShapeError("tensor: rows() on rank-" + std::to_string(rank()) + " tensor");
    return shape_[0];
}

size_t Tensor::cols() const {
    if (rank() != 2) throw ShapeError("tensor: cols() on rank-" + std::to_string(rank()) + " tensor");
    return shape_[1];
}

double& Tensor::at(size_t r, size_t c) { return data_[r * cols() + c]; }
double Tensor::at(size_t r, size_t c) const { return data_[r * cols() + c]; }

bool Tensor::all_finite() const {
    for (double v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

double Tensor::item() const {
    if (size() != 1) throw ShapeError("tensor: item() on " + shape_str(*this));
    return data_[0];
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

void Tensor::add_(const Tensor& o) {
    if (!same_shape(o)) throw ShapeError("tensor add_: " + shape_str(*this) + " vs " + shape_str(o));
    for (size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
}

void Tensor::axpy_(double a, const Tensor& o) {
    if (!same_shape(o)) throw ShapeError("tensor axpy_: " + shape_str(*this) + " vs " + shape_str(o));
    for (size_t i = 0; i < data_.size(); ++i) data_[i] += a * o.data_[i];
}

void Tensor::scale_(double a) {
    for (double& v : data_) v *= a;
}

std::string shape_str(const std::vector<size_t>& shape) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
    os << "]";
    return os.str();
}

std::string shape_str(const Tensor& t) { return shape_str(t.shape()); }

uint64_t Rng::next_u64() {
    state_ += 0x9E3779B97F4A7C15ull;
    uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

size_t Rng::index(size_t n) {
    return static_cast<size_t>((static_cast<unsigned __int128>(next_u64()) * n) >> 64);
}

uint64_t fnv1a64(const void* data, size_t nbytes) {
    const auto* p = static_cast<const unsigned char*>(data);
    uint64_t h = 0xCBF29CE484222325ull;
    for (size_t i = 0; i < nbytes; ++i) {
        h ^= p[i];
        h *= 0x100000001B3ull;
    }
    return h;
}

}  // namespace micc
