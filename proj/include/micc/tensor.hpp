#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace micc {

// Dense row-major float64 tensor. Rank is arbitrary but almost everything in
// the graph is rank-2 (rows x cols); scalars are 1x1.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<size_t> shape);
    Tensor(std::vector<size_t> shape, std::vector<double> values);

    static Tensor zeros(std::vector<size_t> shape) { return Tensor(std::move(shape)); }
    static Tensor full(std::vector<size_t> shape, double v);
    static Tensor scalar(double v) { return Tensor({1, 1}, {v}); }
    static Tensor row(std::vector<double> v);
    static Tensor column(std::vector<double> v);
    static Tensor matrix(size_t rows, size_t cols, std::vector<double> v);
    static Tensor identity(size_t n);

    bool empty() const { return data_.empty(); }
    size_t size() const { return data_.size(); }
    const std::vector<size_t>& shape() const { return shape_; }
    size_t rank() const { return shape_.size(); }
    size_t dim(size_t i) const { return shape_[i]; }
    size_t rows() const;
    size_t cols() const;

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    double& operator[](size_t i) { return data_[i]; }
    double operator[](size_t i) const { return data_[i]; }
    double& at(size_t r, size_t c);
    double at(size_t r, size_t c) const;

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
    bool all_finite() const;
    double item() const;  // requires size()==1

    void fill(double v);
    void add_(const Tensor& o);          // elementwise, shapes must match
    void axpy_(double a, const Tensor& o);
    void scale_(double a);

private:
    std::vector<size_t> shape_;
    std::vector<double> data_;
};

std::string shape_str(const Tensor& t);
std::string shape_str(const std::vector<size_t>& shape);

// Counter-style PRNG (splitmix64 core): identical seed gives an identical
// draw sequence on every platform, unlike std:: distributions.
class Rng {
public:
    explicit Rng(uint64_t seed) : seed_(seed), state_(seed) {}

    uint64_t next_u64();
    double uniform();                       // [0, 1)
    double uniform(double lo, double hi);
    size_t index(size_t n);                 // [0, n)
    bool bernoulli(double p) { return uniform() < p; }
    uint64_t seed() const { return seed_; }

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = index(i);
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    uint64_t seed_;
    uint64_t state_;
};

uint64_t fnv1a64(const void* data, size_t nbytes);

}  // namespace micc
