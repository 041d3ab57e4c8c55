#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "recordkit/errors.hpp"

namespace recordkit {

// Dense row-major tensor of 64-bit floats. Construction rejects NaN/Inf
// entries and shape/data length mismatches.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<size_t> shape, double fill = 0.0);
    Tensor(std::vector<size_t> shape, std::vector<double> data);

    static Tensor scalar(double v) { return Tensor({1}, {v}); }
    static Tensor row(std::vector<double> v);

    const std::vector<size_t>& shape() const { return shape_; }
    size_t rank() const { return shape_.size(); }
    size_t numel() const { return data_.size(); }
    size_t rows() const;
    size_t cols() const;

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& vec() { return data_; }
    const std::vector<double>& vec() const { return data_; }

    double& operator[](size_t i) { return data_[i]; }
    double operator[](size_t i) const { return data_[i]; }
    double& at(size_t r, size_t c);
    double at(size_t r, size_t c) const;

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    bool operator==(const Tensor& other) const {
        return shape_ == other.shape_ && data_ == other.data_;
    }

    bool all_finite() const;
    void check_finite(const std::string& context) const;

    std::string shape_str() const;

private:
    std::vector<size_t> shape_;
    std::vector<double> data_;
};

std::string shape_to_string(const std::vector<size_t>& shape);

// Plain helpers used outside the autodiff graph (optimizer updates,
// oracles, distances). All accumulate left to right.
double dot(const Tensor& a, const Tensor& b);
double norm2(const Tensor& a);
double sq_norm(const Tensor& a);
Tensor slice_row(const Tensor& m, size_t r);

}  // namespace recordkit
