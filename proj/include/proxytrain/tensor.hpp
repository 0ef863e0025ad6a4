#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace proxytrain {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& s);

/// Dense row-major tensor of 64-bit floats. Immutable value type: every
/// operation returns a new tensor, so tensors are safe to share across
/// threads. Construction validates that product(shape) == data size, that all
/// dims are positive, and that every entry is finite (NaN/Inf are rejected,
/// which turns intermediate overflow into a structured error at the op that
/// produced it).
class Tensor {
public:
    Tensor();  // rank-0 scalar holding 0.0
    Tensor(Shape shape, std::vector<double> data);

    static Tensor scalar(double v);
    static Tensor zeros(Shape shape);
    static Tensor ones(Shape shape);
    static Tensor full(Shape shape, double v);
    static Tensor from_rows(const std::vector<std::vector<double>>& rows);

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    std::string shape_str() const { return proxytrain::shape_str(shape_); }

    std::span<const double> data() const { return data_; }
    double operator[](std::size_t flat) const { return data_[flat]; }
    double at(std::size_t i) const;
    double at(std::size_t i, std::size_t j) const;
    double at(std::size_t i, std::size_t j, std::size_t k) const;

    /// Value of a single-element tensor (any rank); throws otherwise.
    double item() const;

    bool is_scalar_like() const { return size() == 1; }

    /// Text form: header "shape: d1 d2 ..." then whitespace-separated values
    /// at 17 significant digits (lossless double round-trip).
    void write_text(std::ostream& os) const;
    static Tensor read_text(std::istream& is);
    std::string to_text() const;
    static Tensor from_text(const std::string& s);

private:
    Shape shape_;
    std::vector<double> data_;
};

// Element count implied by a shape (empty shape -> 1, a scalar).
std::size_t shape_numel(const Shape& s);

// Plain (non-autodiff) arithmetic used by optimizers, EMA updates and tests.
Tensor t_add(const Tensor& a, const Tensor& b);
Tensor t_sub(const Tensor& a, const Tensor& b);
Tensor t_mul(const Tensor& a, const Tensor& b);
Tensor t_scale(const Tensor& a, double c);
Tensor t_axpy(double c, const Tensor& x, const Tensor& y);  // c*x + y
Tensor t_matmul(const Tensor& a, const Tensor& b);
Tensor zeros_like(const Tensor& t);
double t_dot(const Tensor& a, const Tensor& b);
double rms(const Tensor& t);
double max_abs_diff(const Tensor& a, const Tensor& b);

void require_same_shape(const Tensor& a, const Tensor& b, const char* op);

}  // namespace proxytrain
