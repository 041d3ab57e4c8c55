#include "recordkit/tensor.hpp"

#include <numeric>
#include <sstream>

namespace recordkit {

namespace {
size_t shape_numel(const std::vector<size_t>& shape) {
    size_t n = 1;
    for (size_t e : shape) {
        if (e == 0) throw ShapeError("tensor extent must be positive, shape " + shape_to_string(shape));
        n *= e;
    }
    return n;
}
}  // namespace

Tensor::Tensor(std::vector<size_t> shape, double fill)
    : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {
    if (!std::isfinite(fill)) throw NumericalError("tensor fill value is not finite");
}

Tensor::Tensor(std::vector<size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_numel(shape_) != data_.size()) {
        throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                         " does not match shape " + shape_to_string(shape_));
    }
    check_finite("tensor construction");
}

Tensor Tensor::row(std::vector<double> v) {
    size_t n = v.size();
    return Tensor({1, n}, std::move(v));
}

size_t Tensor::rows() const {
    if (rank() == 1) return 1;
    if (rank() == 2) return shape_[0];
    throw ShapeError("rows() requires rank 1 or 2, got shape " + shape_str());
}

size_t Tensor::cols() const {
    if (rank() == 1) return shape_[0];
    if (rank() == 2) return shape_[1];
    throw ShapeError("cols() requires rank 1 or 2, got shape " + shape_str());
}

double& Tensor::at(size_t r, size_t c) {
    return data_[r * cols() + c];
}

double Tensor::at(size_t r, size_t c) const {
    return data_[r * cols() + c];
}

bool Tensor::all_finite() const {
    for (double v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

void Tensor::check_finite(const std::string& context) const {
    if (!all_finite()) throw NumericalError("non-finite value in " + context);
}

std::string Tensor::shape_str() const { return shape_to_string(shape_); }

std::string shape_to_string(const std::vector<size_t>& shape) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) os << "x";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

double dot(const Tensor& a, const Tensor& b) {
    if (a.numel() != b.numel()) {
        throw ShapeError("dot: size mismatch " + a.shape_str() + " vs " + b.shape_str());
    }
    double acc = 0.0;
    for (size_t i = 0; i < a.numel(); ++i) acc += a[i] * b[i];
    return acc;
}

double sq_norm(const Tensor& a) {
    double acc = 0.0;
    for (size_t i = 0; i < a.numel(); ++i) acc += a[i] * a[i];
    return acc;
}

double norm2(const Tensor& a) { return std::sqrt(sq_norm(a)); }

Tensor slice_row(const Tensor& m, size_t r) {
    if (m.rank() != 2 || r >= m.rows()) {
        throw ShapeError("slice_row: row " + std::to_string(r) + " out of " + m.shape_str());
    }
    std::vector<double> out(m.cols());
    for (size_t c = 0; c < m.cols(); ++c) out[c] = m.at(r, c);
    return Tensor({1, m.cols()}, std::move(out));
}

}  // namespace recordkit
