#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>

#include "twotower/data.hpp"

namespace twotower {
namespace {

struct Plane {
    std::size_t channels, height, width;
};

Plane plane_of(const Tensor& t, const char* op) {
    if (t.rank() == 3) return {t.dim(0), t.dim(1), t.dim(2)};
    if (t.rank() == 4 && t.dim(0) == 1) return {t.dim(1), t.dim(2), t.dim(3)};
    throw ShapeError(std::string(op) + ": expected C x H x W image, got " + shape_str(t.shape()));
}

std::size_t clamp_index(std::ptrdiff_t i, std::size_t n) {
    return static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(i, 0, static_cast<std::ptrdiff_t>(n) - 1));
}

Tensor median3x3(const Tensor& in, std::size_t h, std::size_t w) {
    Tensor out({1, h, w});
    std::array<double, 9> win{};
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            std::size_t k = 0;
            for (int dy = -1; dy <= 1; ++dy) {
                for (int dx = -1; dx <= 1; ++dx) {
                    const std::size_t yy = clamp_index(static_cast<std::ptrdiff_t>(y) + dy, h);
                    const std::size_t xx = clamp_index(static_cast<std::ptrdiff_t>(x) + dx, w);
                    win[k++] = in[yy * w + xx];
                }
            }
            std::nth_element(win.begin(), win.begin() + 4, win.end());
            out[y * w + x] = win[4];
        }
    }
    return out;
}

}  // namespace

Tensor blockmatch_disparity(const Tensor& left, const Tensor& right, std::size_t block,
                            std::size_t search) {
    const Plane p = plane_of(left, "clue_blockmatch");
    const Plane q = plane_of(right, "clue_blockmatch");
    if (p.channels != q.channels || p.height != q.height || p.width != q.width) {
        throw ShapeError("clue_blockmatch: left " + shape_str(left.shape()) + " vs right " +
                         shape_str(right.shape()));
    }
    if (block < 3 || block % 2 == 0) {
        throw std::invalid_argument("clue_blockmatch: block must be odd and >= 3, got " + std::to_string(block));
    }
    if (search >= p.width) {
        throw std::invalid_argument("clue_blockmatch: search " + std::to_string(search) +
                                    " must be smaller than image width " + std::to_string(p.width));
    }

    const std::size_t h = p.height, w = p.width, plane = h * w;
    const auto r = static_cast<std::ptrdiff_t>(block / 2);
    Tensor raw({1, h, w});
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            double best = std::numeric_limits<double>::infinity();
            std::size_t best_d = 0;
            for (std::size_t d = 0; d <= search; ++d) {
                double sad = 0.0;
                for (std::ptrdiff_t dy = -r; dy <= r; ++dy) {
                    const std::size_t yy = clamp_index(static_cast<std::ptrdiff_t>(y) + dy, h);
                    for (std::ptrdiff_t dx = -r; dx <= r; ++dx) {
                        const auto xl = static_cast<std::ptrdiff_t>(x) + dx;
                        const std::size_t il = yy * w + clamp_index(xl, w);
                        const std::size_t ir = yy * w + clamp_index(xl - static_cast<std::ptrdiff_t>(d), w);
                        for (std::size_t c = 0; c < p.channels; ++c) {
                            sad += std::abs(left[c * plane + il] - right[c * plane + ir]);
                        }
                    }
                }
                if (sad < best) {  // strict: ties keep the smaller d
                    best = sad;
                    best_d = d;
                }
            }
            raw[y * w + x] = static_cast<double>(best_d);
        }
    }
    return median3x3(raw, h, w);
}

Tensor clue_blockmatch(const Tensor& left, const Tensor& right, std::size_t block,
                       std::size_t search) {
    Tensor d = blockmatch_disparity(left, right, block, search);
    if (search > 0) d *= 1.0 / static_cast<double>(search);
    return d;
}

Tensor clue_degrade(const Tensor& gt_depth, std::size_t blur_radius, double noise_sigma,
                    std::uint64_t seed) {
    const Plane p = plane_of(gt_depth, "clue_degrade");
    if (p.channels != 1) throw ShapeError("clue_degrade: expected a 1 x H x W map, got " + shape_str(gt_depth.shape()));
    const std::size_t h = p.height, w = p.width;
    const auto r = static_cast<std::ptrdiff_t>(blur_radius);
    const double area = static_cast<double>((2 * r + 1) * (2 * r + 1));

    Tensor out({1, h, w});
    Rng rng(seed);
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            double s = 0.0;
            for (std::ptrdiff_t dy = -r; dy <= r; ++dy) {
                const std::size_t yy = clamp_index(static_cast<std::ptrdiff_t>(y) + dy, h);
                for (std::ptrdiff_t dx = -r; dx <= r; ++dx) {
                    s += gt_depth[yy * w + clamp_index(static_cast<std::ptrdiff_t>(x) + dx, w)];
                }
            }
            double v = s / area;
            if (noise_sigma > 0.0) v += rng.normal(0.0, noise_sigma);
            out[y * w + x] = std::clamp(v, 0.0, 1.0);
        }
    }
    return out;
}

ClueMode parse_clue_mode(const std::string& name) {
    if (name == "blockmatch") return ClueMode::kBlockMatch;
    if (name == "degrade") return ClueMode::kDegrade;
    if (name == "none") return ClueMode::kNone;
    throw std::invalid_argument("unknown clue mode '" + name + "' (expected blockmatch, degrade or none)");
}

std::string clue_mode_name(ClueMode mode) {
    switch (mode) {
        case ClueMode::kBlockMatch: return "blockmatch";
        case ClueMode::kDegrade: return "degrade";
        case ClueMode::kNone: return "none";
    }
    return "none";
}

Tensor make_clue(const StereoSample& sample, ClueMode mode, std::size_t search, std::uint64_t seed,
                 const DegradeParams& degrade) {
    switch (mode) {
        case ClueMode::kBlockMatch:
            return clue_blockmatch(sample.left, sample.right, kDefaultBlock, search);
        case ClueMode::kDegrade:
            return clue_degrade(sample.gt_depth, degrade.blur_radius, degrade.noise_sigma, seed);
        case ClueMode::kNone:
            break;
    }
    return Tensor({1, sample.height(), sample.width()}, 0.5);
}

SplitIndices split_indices(std::size_t count, double ratio, std::uint64_t seed) {
    if (!(ratio >= 0.0 && ratio <= 1.0)) throw std::invalid_argument("split: ratio must be in [0, 1]");
    std::vector<std::size_t> order(count);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(seed);
    // Fisher-Yates on our own generator keeps the permutation library independent.
    for (std::size_t i = count; i > 1; --i) {
        const auto j = static_cast<std::size_t>(rng.integer(0, static_cast<std::int64_t>(i) - 1));
        std::swap(order[i - 1], order[j]);
    }
    const auto n_train = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(count)));
    return {std::vector<std::size_t>(order.begin(), order.begin() + n_train),
            std::vector<std::size_t>(order.begin() + n_train, order.end())};
}

}  // namespace twotower
