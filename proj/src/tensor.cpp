#include "twotower/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace twotower {

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_numel(shape_) != data_.size()) {
        throw ShapeError("tensor: shape " + shape_str(shape_) + " holds " +
                         std::to_string(shape_numel(shape_)) + " values, got " +
                         std::to_string(data_.size()));
    }
}

Tensor Tensor::from(Shape shape, std::initializer_list<double> values) {
    return Tensor(std::move(shape), std::vector<double>(values));
}

Tensor Tensor::reshaped(Shape shape) const {
    if (shape_numel(shape) != numel()) {
        throw ShapeError("reshape: cannot view " + shape_str(shape_) + " as " +
                         shape_str(shape));
    }
    return Tensor(std::move(shape), data_);
}

Tensor Tensor::batch_slice(std::size_t begin, std::size_t end) const {
    if (shape_.empty() || begin > end || end > shape_[0]) {
        throw ShapeError("batch_slice: range [" + std::to_string(begin) + ", " +
                         std::to_string(end) + ") out of " + shape_str(shape_));
    }
    const std::size_t stride = shape_[0] ? numel() / shape_[0] : 0;
    Shape s = shape_;
    s[0] = end - begin;
    return Tensor(std::move(s), std::vector<double>(data_.begin() + begin * stride,
                                                    data_.begin() + end * stride));
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

Tensor& Tensor::operator+=(const Tensor& other) {
    require_same_shape(*this, other, "add");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
    return *this;
}

Tensor& Tensor::operator*=(double scale) {
    for (auto& v : data_) v *= scale;
    return *this;
}

double Tensor::sum() const {
    double s = 0.0;
    for (double v : data_) s += v;
    return s;
}

double Tensor::max_abs() const {
    double m = 0.0;
    for (double v : data_) m = std::max(m, std::abs(v));
    return m;
}

bool Tensor::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Tensor stack_batch(std::span<const Tensor> items) {
    if (items.empty()) throw ShapeError("stack_batch: no tensors");
    Shape item = items[0].shape();
    for (const auto& t : items) {
        if (t.shape() != item) {
            throw ShapeError("stack_batch: mismatched shapes " + shape_str(item) + " and " +
                             shape_str(t.shape()));
        }
    }
    if (item.size() == 4 && item[0] == 1) item.erase(item.begin());
    Shape out{items.size()};
    out.insert(out.end(), item.begin(), item.end());
    std::vector<double> data;
    data.reserve(shape_numel(out));
    for (const auto& t : items) data.insert(data.end(), t.data().begin(), t.data().end());
    return Tensor(std::move(out), std::move(data));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    }
}

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
    if (t.rank() != rank) {
        throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) +
                         ", got " + shape_str(t.shape()));
    }
}

}  // namespace twotower
