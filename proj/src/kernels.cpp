#include "twotower/kernels.hpp"

#include <Eigen/Core>

#include <string>

namespace twotower::kernels {
namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMatMap = Eigen::Map<const RowMatrix>;

// Products run on Eigen-owned (always aligned) storage: vectorized kernels
// pick their code path from pointer alignment, and tensor offsets vary, which
// would otherwise change summation order from call to call.
RowMatrix load(const double* data, std::size_t rows, std::size_t cols) {
    return ConstMatMap(data, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

void accumulate(const RowMatrix& m, double* dst) {
    const double* src = m.data();
    for (Eigen::Index i = 0; i < m.size(); ++i) dst[i] += src[i];
}

double plain_sum(const double* p, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += p[i];
    return s;
}

struct Geometry {
    std::size_t channels, height, width;  // image side
    std::size_t kernel, stride, pad;
    std::size_t out_h, out_w;             // column side

    std::size_t rows() const { return channels * kernel * kernel; }
    std::size_t cols() const { return out_h * out_w; }
};

// col[(c, ky, kx), (oy, ox)] = image[c, oy*stride - pad + ky, ox*stride - pad + kx]
void im2col(const double* image, const Geometry& g, double* col) {
    const std::size_t cols = g.cols();
    for (std::size_t c = 0; c < g.channels; ++c) {
        const double* plane = image + c * g.height * g.width;
        for (std::size_t ky = 0; ky < g.kernel; ++ky) {
            for (std::size_t kx = 0; kx < g.kernel; ++kx) {
                double* row = col + ((c * g.kernel + ky) * g.kernel + kx) * cols;
                for (std::size_t oy = 0; oy < g.out_h; ++oy) {
                    const auto y = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                                   static_cast<std::ptrdiff_t>(g.pad);
                    double* dst = row + oy * g.out_w;
                    if (y < 0 || y >= static_cast<std::ptrdiff_t>(g.height)) {
                        for (std::size_t ox = 0; ox < g.out_w; ++ox) dst[ox] = 0.0;
                        continue;
                    }
                    const double* src = plane + static_cast<std::size_t>(y) * g.width;
                    for (std::size_t ox = 0; ox < g.out_w; ++ox) {
                        const auto x = static_cast<std::ptrdiff_t>(ox * g.stride + kx) -
                                       static_cast<std::ptrdiff_t>(g.pad);
                        dst[ox] = (x < 0 || x >= static_cast<std::ptrdiff_t>(g.width))
                                      ? 0.0
                                      : src[x];
                    }
                }
            }
        }
    }
}

// Adjoint of im2col: scatter-add columns back into the image.
void col2im(const double* col, const Geometry& g, double* image) {
    const std::size_t cols = g.cols();
    for (std::size_t c = 0; c < g.channels; ++c) {
        double* plane = image + c * g.height * g.width;
        for (std::size_t ky = 0; ky < g.kernel; ++ky) {
            for (std::size_t kx = 0; kx < g.kernel; ++kx) {
                const double* row = col + ((c * g.kernel + ky) * g.kernel + kx) * cols;
                for (std::size_t oy = 0; oy < g.out_h; ++oy) {
                    const auto y = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                                   static_cast<std::ptrdiff_t>(g.pad);
                    if (y < 0 || y >= static_cast<std::ptrdiff_t>(g.height)) continue;
                    double* dst = plane + static_cast<std::size_t>(y) * g.width;
                    const double* src = row + oy * g.out_w;
                    for (std::size_t ox = 0; ox < g.out_w; ++ox) {
                        const auto x = static_cast<std::ptrdiff_t>(ox * g.stride + kx) -
                                       static_cast<std::ptrdiff_t>(g.pad);
                        if (x >= 0 && x < static_cast<std::ptrdiff_t>(g.width)) dst[x] += src[ox];
                    }
                }
            }
        }
    }
}

void check_bias(const Tensor& bias, std::size_t channels, const char* op) {
    if (bias.rank() != 1 || bias.dim(0) != channels) {
        throw ShapeError(std::string(op) + ": bias " + shape_str(bias.shape()) + " does not match " +
                         std::to_string(channels) + " output channels");
    }
}

Geometry conv_geometry(const Tensor& input, const Tensor& weight, std::size_t pad) {
    require_rank(input, 4, "conv2d");
    require_rank(weight, 4, "conv2d");
    if (weight.dim(1) != input.dim(1)) {
        throw ShapeError("conv2d: input " + shape_str(input.shape()) + " has " +
                         std::to_string(input.dim(1)) + " channels but weight " +
                         shape_str(weight.shape()) + " expects " + std::to_string(weight.dim(1)));
    }
    const std::size_t k = weight.dim(2);
    if (k == 0 || weight.dim(3) != k) {
        throw ShapeError("conv2d: weight " + shape_str(weight.shape()) + " is not a square kernel");
    }
    const std::size_t h = input.dim(2), w = input.dim(3);
    if (h + 2 * pad < k || w + 2 * pad < k) {
        throw ShapeError("conv2d: input " + shape_str(input.shape()) + " with pad " +
                         std::to_string(pad) + " is smaller than kernel " + std::to_string(k));
    }
    return {input.dim(1), h, w, k, 1, pad, h + 2 * pad - k + 1, w + 2 * pad - k + 1};
}

// For the transposed convolution the "image" side is the upsampled output.
Geometry up_geometry(const Tensor& input, const Tensor& weight) {
    require_rank(input, 4, "conv_transpose2d");
    require_rank(weight, 4, "conv_transpose2d");
    if (weight.dim(0) != input.dim(1) || weight.dim(2) != kUpKernel || weight.dim(3) != kUpKernel) {
        throw ShapeError("conv_transpose2d: input " + shape_str(input.shape()) +
                         " incompatible with weight " + shape_str(weight.shape()) +
                         " (expected Cin x Cout x 4 x 4)");
    }
    const std::size_t h = input.dim(2), w = input.dim(3);
    return {weight.dim(1), 2 * h, 2 * w, kUpKernel, kUpStride, kUpPad, h, w};
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, std::size_t pad) {
    const Geometry g = conv_geometry(input, weight, pad);
    const std::size_t batch = input.dim(0), cout = weight.dim(0);
    check_bias(bias, cout, "conv2d");

    Tensor out({batch, cout, g.out_h, g.out_w});
    RowMatrix col(g.rows(), g.cols()), prod;
    const RowMatrix wmat = load(weight.raw(), cout, g.rows());
    const std::size_t in_stride = g.channels * g.height * g.width;
    for (std::size_t n = 0; n < batch; ++n) {
        im2col(input.raw() + n * in_stride, g, col.data());
        prod.noalias() = wmat * col;
        double* dst = out.raw() + n * cout * g.cols();
        for (std::size_t c = 0; c < cout; ++c) {
            for (std::size_t i = 0; i < g.cols(); ++i) dst[c * g.cols() + i] = prod(c, i) + bias[c];
        }
    }
    return out;
}

void conv2d_backward(const Tensor& input, const Tensor& weight, const Tensor& grad_out,
                     std::size_t pad, Tensor* grad_input, Tensor* grad_weight, Tensor* grad_bias) {
    const Geometry g = conv_geometry(input, weight, pad);
    const std::size_t batch = input.dim(0), cout = weight.dim(0);
    const std::size_t in_stride = g.channels * g.height * g.width;
    const RowMatrix wmat = load(weight.raw(), cout, g.rows());
    RowMatrix col(g.rows(), g.cols()), prod;

    for (std::size_t n = 0; n < batch; ++n) {
        const double* gptr = grad_out.raw() + n * cout * g.cols();
        if (grad_bias) {
            for (std::size_t c = 0; c < cout; ++c) (*grad_bias)[c] += plain_sum(gptr + c * g.cols(), g.cols());
        }
        if (!grad_input && !grad_weight) continue;
        const RowMatrix gout = load(gptr, cout, g.cols());
        if (grad_weight) {
            im2col(input.raw() + n * in_stride, g, col.data());
            prod.noalias() = gout * col.transpose();
            accumulate(prod, grad_weight->raw());
        }
        if (grad_input) {
            col.noalias() = wmat.transpose() * gout;
            col2im(col.data(), g, grad_input->raw() + n * in_stride);
        }
    }
}

Tensor conv_transpose2d(const Tensor& input, const Tensor& weight, const Tensor& bias) {
    const Geometry g = up_geometry(input, weight);
    const std::size_t batch = input.dim(0), cin = input.dim(1), cout = g.channels;
    check_bias(bias, cout, "conv_transpose2d");

    Tensor out({batch, cout, g.height, g.width});
    RowMatrix col(g.rows(), g.cols());
    const RowMatrix wmat = load(weight.raw(), cin, g.rows());
    const std::size_t out_stride = cout * g.height * g.width;
    for (std::size_t n = 0; n < batch; ++n) {
        const RowMatrix imat = load(input.raw() + n * cin * g.cols(), cin, g.cols());
        col.noalias() = wmat.transpose() * imat;
        double* dst = out.raw() + n * out_stride;
        col2im(col.data(), g, dst);
        for (std::size_t c = 0; c < cout; ++c) {
            double* plane = dst + c * g.height * g.width;
            for (std::size_t i = 0; i < g.height * g.width; ++i) plane[i] += bias[c];
        }
    }
    return out;
}

void conv_transpose2d_backward(const Tensor& input, const Tensor& weight, const Tensor& grad_out,
                               Tensor* grad_input, Tensor* grad_weight, Tensor* grad_bias) {
    const Geometry g = up_geometry(input, weight);
    const std::size_t batch = input.dim(0), cin = input.dim(1), cout = g.channels;
    const RowMatrix wmat = load(weight.raw(), cin, g.rows());
    const std::size_t out_stride = cout * g.height * g.width;
    RowMatrix col(g.rows(), g.cols()), prod;

    for (std::size_t n = 0; n < batch; ++n) {
        const double* gout = grad_out.raw() + n * out_stride;
        if (grad_bias) {
            for (std::size_t c = 0; c < cout; ++c) {
                (*grad_bias)[c] += plain_sum(gout + c * g.height * g.width, g.height * g.width);
            }
        }
        if (!grad_input && !grad_weight) continue;
        im2col(gout, g, col.data());
        if (grad_weight) {
            const RowMatrix imat = load(input.raw() + n * cin * g.cols(), cin, g.cols());
            prod.noalias() = imat * col.transpose();
            accumulate(prod, grad_weight->raw());
        }
        if (grad_input) {
            prod.noalias() = wmat * col;
            accumulate(prod, grad_input->raw() + n * cin * g.cols());
        }
    }
}

PoolResult maxpool2d(const Tensor& input) {
    require_rank(input, 4, "maxpool2d");
    const std::size_t batch = input.dim(0), ch = input.dim(1), h = input.dim(2), w = input.dim(3);
    if (h % 2 != 0 || w % 2 != 0) {
        throw ShapeError("maxpool2d: spatial size of " + shape_str(input.shape()) +
                         " must be even in both H and W");
    }
    PoolResult r{Tensor({batch, ch, h / 2, w / 2}), {}};
    r.argmax.resize(r.output.numel());
    std::size_t o = 0;
    for (std::size_t plane = 0; plane < batch * ch; ++plane) {
        const std::size_t base = plane * h * w;
        for (std::size_t oy = 0; oy < h / 2; ++oy) {
            for (std::size_t ox = 0; ox < w / 2; ++ox, ++o) {
                const std::size_t top = base + (2 * oy) * w + 2 * ox;
                const std::size_t cand[4] = {top, top + 1, top + w, top + w + 1};
                std::size_t best = cand[0];
                for (int i = 1; i < 4; ++i) {
                    if (input[cand[i]] > input[best]) best = cand[i];
                }
                r.output[o] = input[best];
                r.argmax[o] = best;
            }
        }
    }
    return r;
}

Tensor maxpool2d_backward(const Shape& input_shape, const std::vector<std::size_t>& argmax,
                          const Tensor& grad_out) {
    Tensor grad(input_shape);
    for (std::size_t o = 0; o < argmax.size(); ++o) grad[argmax[o]] += grad_out[o];
    return grad;
}

}  // namespace twotower::kernels
