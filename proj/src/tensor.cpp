#include "proxytrain/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>

#include "proxytrain/errors.hpp"

namespace proxytrain {

std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += ' ';
        out += std::to_string(s[i]);
    }
    out += ']';
    return out;
}

std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return n;
}

Tensor::Tensor() : shape_{}, data_{0.0} {}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    for (std::size_t d : shape_) {
        if (d == 0) throw ShapeError("tensor dims must be positive, got " + proxytrain::shape_str(shape_));
    }
    if (shape_numel(shape_) != data_.size()) {
        throw ShapeError("shape " + proxytrain::shape_str(shape_) + " implies " +
                         std::to_string(shape_numel(shape_)) + " entries, got " +
                         std::to_string(data_.size()));
    }
    for (std::size_t i = 0; i < data_.size(); ++i) {
        if (!std::isfinite(data_[i])) {
            throw NumericError("non-finite value " + std::to_string(data_[i]) +
                               " at flat index " + std::to_string(i) + " in tensor of shape " +
                               proxytrain::shape_str(shape_));
        }
    }
}

Tensor Tensor::scalar(double v) { return Tensor({}, {v}); }

Tensor Tensor::zeros(Shape shape) {
    std::vector<double> d(shape_numel(shape), 0.0);
    return Tensor(std::move(shape), std::move(d));
}

Tensor Tensor::ones(Shape shape) { return full(std::move(shape), 1.0); }

Tensor Tensor::full(Shape shape, double v) {
    std::vector<double> d(shape_numel(shape), v);
    return Tensor(std::move(shape), std::move(d));
}

Tensor Tensor::from_rows(const std::vector<std::vector<double>>& rows) {
    if (rows.empty()) throw ShapeError("from_rows: need at least one row");
    const std::size_t cols = rows[0].size();
    std::vector<double> d;
    d.reserve(rows.size() * cols);
    for (const auto& r : rows) {
        if (r.size() != cols) throw ShapeError("from_rows: ragged rows");
        d.insert(d.end(), r.begin(), r.end());
    }
    return Tensor({rows.size(), cols}, std::move(d));
}

double Tensor::at(std::size_t i) const {
    if (rank() != 1) throw ShapeError("at(i) on tensor of shape " + shape_str());
    return data_[i];
}

double Tensor::at(std::size_t i, std::size_t j) const {
    if (rank() != 2) throw ShapeError("at(i,j) on tensor of shape " + shape_str());
    return data_[i * shape_[1] + j];
}

double Tensor::at(std::size_t i, std::size_t j, std::size_t k) const {
    if (rank() != 3) throw ShapeError("at(i,j,k) on tensor of shape " + shape_str());
    return data_[(i * shape_[1] + j) * shape_[2] + k];
}

double Tensor::item() const {
    if (size() != 1) throw ValueError("item() on non-scalar tensor of shape " + shape_str());
    return data_[0];
}

void Tensor::write_text(std::ostream& os) const {
    os << "shape:";
    for (std::size_t d : shape_) os << ' ' << d;
    os << '\n';
    char buf[40];
    for (std::size_t i = 0; i < data_.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%.17g", data_[i]);
        os << buf;
        os << (((i + 1) % 8 == 0 || i + 1 == data_.size()) ? '\n' : ' ');
    }
}

Tensor Tensor::read_text(std::istream& is) {
    std::string header;
    if (!std::getline(is, header)) throw IoError("tensor text: missing header line");
    if (header.rfind("shape:", 0) != 0) throw IoError("tensor text: header must start with 'shape:'");
    std::istringstream hs(header.substr(6));
    Shape shape;
    std::size_t d;
    while (hs >> d) shape.push_back(d);
    const std::size_t n = shape_numel(shape);
    std::vector<double> data(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (!(is >> data[i])) throw IoError("tensor text: truncated data (expected " +
                                            std::to_string(n) + " values)");
    }
    return Tensor(std::move(shape), std::move(data));
}

std::string Tensor::to_text() const {
    std::ostringstream os;
    write_text(os);
    return os.str();
}

Tensor Tensor::from_text(const std::string& s) {
    std::istringstream is(s);
    return read_text(is);
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b)) {
        throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " +
                         b.shape_str());
    }
}

Tensor t_add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "t_add");
    std::vector<double> d(a.size());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = a[i] + b[i];
    return Tensor(a.shape(), std::move(d));
}

Tensor t_sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "t_sub");
    std::vector<double> d(a.size());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = a[i] - b[i];
    return Tensor(a.shape(), std::move(d));
}

Tensor t_mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "t_mul");
    std::vector<double> d(a.size());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = a[i] * b[i];
    return Tensor(a.shape(), std::move(d));
}

Tensor t_scale(const Tensor& a, double c) {
    std::vector<double> d(a.size());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = a[i] * c;
    return Tensor(a.shape(), std::move(d));
}

Tensor t_axpy(double c, const Tensor& x, const Tensor& y) {
    require_same_shape(x, y, "t_axpy");
    std::vector<double> d(x.size());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = c * x[i] + y[i];
    return Tensor(x.shape(), std::move(d));
}

Tensor t_matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
        throw ShapeError("t_matmul: incompatible shapes " + a.shape_str() + " vs " + b.shape_str());
    }
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    std::vector<double> d(m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            const double av = a[i * k + p];
            if (av == 0.0) continue;
            for (std::size_t j = 0; j < n; ++j) d[i * n + j] += av * b[p * n + j];
        }
    }
    return Tensor({m, n}, std::move(d));
}

Tensor zeros_like(const Tensor& t) { return Tensor::zeros(t.shape()); }

double t_dot(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "t_dot");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double rms(const Tensor& t) {
    double s = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) s += t[i] * t[i];
    return std::sqrt(s / static_cast<double>(t.size()));
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "max_abs_diff");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

}  // namespace proxytrain
