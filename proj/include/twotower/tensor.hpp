#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace twotower {

using Shape = std::vector<std::size_t>;

/// Thrown when operand shapes are incompatible. The message names both shapes.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

std::string shape_str(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

/// Dense row-major array of doubles. Image-like data uses N x C x H x W.
///
/// A dimension of extent zero is permitted (an empty channel group is a valid
/// operand of concat_channels); every other operation treats such tensors as
/// ordinary, just empty.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> data);

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape), 0.0); }
    static Tensor full(Shape shape, double value) { return Tensor(std::move(shape), value); }
    static Tensor from(Shape shape, std::initializer_list<double> values);

    const Shape& shape() const noexcept { return shape_; }
    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t numel() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }
    double* raw() noexcept { return data_.data(); }
    const double* raw() const noexcept { return data_.data(); }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    // 4-D accessor for N x C x H x W tensors.
    double& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
        return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
    }
    double at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
        return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
    }

    /// Same data viewed under a new shape with equal element count.
    Tensor reshaped(Shape shape) const;

    /// Slice [begin, end) along the batch axis.
    Tensor batch_slice(std::size_t begin, std::size_t end) const;

    void fill(double value);
    Tensor& operator+=(const Tensor& other);
    Tensor& operator*=(double scale);

    double sum() const;
    double max_abs() const;
    bool all_finite() const;

    /// Exact element-wise equality including shape.
    bool operator==(const Tensor& other) const = default;

private:
    Shape shape_;
    std::vector<double> data_;
};

/// Stacks equally shaped tensors along a new (or existing leading batch) axis.
/// Inputs of shape C x H x W become N x C x H x W; inputs of shape 1 x C x H x W
/// likewise become N x C x H x W.
Tensor stack_batch(std::span<const Tensor> items);

void require_same_shape(const Tensor& a, const Tensor& b, const char* op);
void require_rank(const Tensor& t, std::size_t rank, const char* op);

}  // namespace twotower
