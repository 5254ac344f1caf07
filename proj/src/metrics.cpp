#include "twotower/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

namespace twotower {
namespace {

struct Map2d {
    std::size_t h, w;
};

Map2d map_dims(const Tensor& t, const char* op) {
    if (t.rank() < 2) throw ShapeError(std::string(op) + ": expected a 2-D map, got " + shape_str(t.shape()));
    for (std::size_t i = 0; i + 2 < t.rank(); ++i) {
        if (t.dim(i) != 1) {
            throw ShapeError(std::string(op) + ": expected a single-channel map, got " + shape_str(t.shape()));
        }
    }
    return {t.dim(t.rank() - 2), t.dim(t.rank() - 1)};
}

std::string pixel_of(const Tensor& t, std::size_t flat) {
    if (t.rank() < 2) return "(" + std::to_string(flat) + ")";
    const std::size_t w = t.dim(t.rank() - 1), h = t.dim(t.rank() - 2);
    const std::size_t plane = w * h;
    std::string s = "(row " + std::to_string((flat % plane) / w) + ", col " + std::to_string(flat % w);
    if (flat >= plane) s += ", plane " + std::to_string(flat / plane);
    return s + ")";
}

void check_positive(const Tensor& t, const char* what, const char* op) {
    for (std::size_t i = 0; i < t.numel(); ++i) {
        if (!(t[i] > 0.0)) {
            throw MetricDomainError(std::string(op) + ": " + what + " depth " + std::to_string(t[i]) +
                                    " is not positive at pixel " + pixel_of(t, i));
        }
    }
}

void check_pair(const Tensor& pred, const Tensor& gt, const char* op, bool pred_positive) {
    require_same_shape(pred, gt, op);
    if (gt.empty()) throw ShapeError(std::string(op) + ": empty maps");
    check_positive(gt, "ground-truth", op);
    if (pred_positive) check_positive(pred, "predicted", op);
}

std::vector<double> gaussian_window() {
    std::vector<double> g(kSsimWindow * kSsimWindow);
    const double c = static_cast<double>(kSsimWindow / 2);
    double total = 0.0;
    for (std::size_t y = 0; y < kSsimWindow; ++y) {
        for (std::size_t x = 0; x < kSsimWindow; ++x) {
            const double dy = static_cast<double>(y) - c, dx = static_cast<double>(x) - c;
            g[y * kSsimWindow + x] = std::exp(-(dx * dx + dy * dy) / (2.0 * kSsimSigma * kSsimSigma));
            total += g[y * kSsimWindow + x];
        }
    }
    for (auto& v : g) v /= total;
    return g;
}

}  // namespace

double abs_rel(const Tensor& pred, const Tensor& gt) {
    check_pair(pred, gt, "abs_rel", false);
    double s = 0.0;
    for (std::size_t i = 0; i < gt.numel(); ++i) s += std::abs(pred[i] - gt[i]) / gt[i];
    return s / static_cast<double>(gt.numel());
}

double sq_rel(const Tensor& pred, const Tensor& gt) {
    check_pair(pred, gt, "sq_rel", false);
    double s = 0.0;
    for (std::size_t i = 0; i < gt.numel(); ++i) {
        const double d = pred[i] - gt[i];
        s += d * d / gt[i];
    }
    return s / static_cast<double>(gt.numel());
}

double rmse(const Tensor& pred, const Tensor& gt) {
    check_pair(pred, gt, "rmse", false);
    double s = 0.0;
    for (std::size_t i = 0; i < gt.numel(); ++i) {
        const double d = pred[i] - gt[i];
        s += d * d;
    }
    return std::sqrt(s / static_cast<double>(gt.numel()));
}

double log10_error(const Tensor& pred, const Tensor& gt) {
    check_pair(pred, gt, "log10", true);
    double s = 0.0;
    for (std::size_t i = 0; i < gt.numel(); ++i) s += std::abs(std::log10(pred[i]) - std::log10(gt[i]));
    return s / static_cast<double>(gt.numel());
}

double threshold_accuracy(const Tensor& pred, const Tensor& gt, int i) {
    if (i < 1 || i > 3) throw std::invalid_argument("threshold_accuracy: i must be 1, 2 or 3");
    check_pair(pred, gt, "threshold_accuracy", true);
    const double bound = std::pow(1.25, i);
    std::size_t hits = 0;
    for (std::size_t k = 0; k < gt.numel(); ++k) {
        const double ratio = std::max(pred[k] / gt[k], gt[k] / pred[k]);
        if (ratio < bound) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(gt.numel());
}

double ssim(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "ssim");
    const Map2d d = map_dims(a, "ssim");
    if (d.h < kSsimWindow || d.w < kSsimWindow) {
        throw ShapeError("ssim: map " + shape_str(a.shape()) + " is smaller than the " +
                         std::to_string(kSsimWindow) + "x" + std::to_string(kSsimWindow) + " window");
    }
    static const std::vector<double> window = gaussian_window();
    constexpr double c1 = (kSsimK1 * 1.0) * (kSsimK1 * 1.0);
    constexpr double c2 = (kSsimK2 * 1.0) * (kSsimK2 * 1.0);

    const std::size_t oh = d.h - kSsimWindow + 1, ow = d.w - kSsimWindow + 1;
    double total = 0.0;
    for (std::size_t y = 0; y < oh; ++y) {
        for (std::size_t x = 0; x < ow; ++x) {
            double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
            for (std::size_t wy = 0; wy < kSsimWindow; ++wy) {
                for (std::size_t wx = 0; wx < kSsimWindow; ++wx) {
                    const double g = window[wy * kSsimWindow + wx];
                    const std::size_t i = (y + wy) * d.w + (x + wx);
                    ma += g * a[i];
                    mb += g * b[i];
                    saa += g * a[i] * a[i];
                    sbb += g * b[i] * b[i];
                    sab += g * a[i] * b[i];
                }
            }
            const double va = saa - ma * ma, vb = sbb - mb * mb, cov = sab - ma * mb;
            total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        }
    }
    return total / static_cast<double>(oh * ow);
}

DepthMetrics compute_metrics(const Tensor& pred, const Tensor& gt) {
    DepthMetrics m;
    m.abs_rel = abs_rel(pred, gt);
    m.sq_rel = sq_rel(pred, gt);
    m.log10 = log10_error(pred, gt);
    m.rmse = rmse(pred, gt);
    m.sigma1 = threshold_accuracy(pred, gt, 1);
    m.sigma2 = threshold_accuracy(pred, gt, 2);
    m.sigma3 = threshold_accuracy(pred, gt, 3);
    m.ssim = ssim(pred, gt);
    return m;
}

DepthMetrics evaluate(std::span<const Tensor> preds, std::span<const Tensor> gts) {
    if (preds.empty()) throw std::invalid_argument("evaluate: empty test set");
    if (preds.size() != gts.size()) {
        throw std::invalid_argument("evaluate: " + std::to_string(preds.size()) + " predictions for " +
                                    std::to_string(gts.size()) + " ground-truth maps");
    }
    DepthMetrics avg;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        const DepthMetrics m = compute_metrics(preds[i], gts[i]);
        avg.abs_rel += m.abs_rel;
        avg.sq_rel += m.sq_rel;
        avg.log10 += m.log10;
        avg.rmse += m.rmse;
        avg.sigma1 += m.sigma1;
        avg.sigma2 += m.sigma2;
        avg.sigma3 += m.sigma3;
        avg.ssim += m.ssim;
    }
    const double n = static_cast<double>(preds.size());
    for (double* f : {&avg.abs_rel, &avg.sq_rel, &avg.log10, &avg.rmse, &avg.sigma1, &avg.sigma2,
                      &avg.sigma3, &avg.ssim}) {
        *f /= n;
    }
    return avg;
}

DepthMetrics evaluate(const ModelParams& params, std::span<const StereoSample> test_set) {
    std::vector<Tensor> preds, gts;
    for (const auto& s : test_set) {
        const std::size_t h = s.height(), w = s.width();
        Tensor pred = predict(params, s.left.reshaped({1, 3, h, w}), s.clue.reshaped({1, 1, h, w}),
                              s.right.reshaped({1, 3, h, w}));
        preds.push_back(pred.reshaped({1, h, w}));
        gts.push_back(s.gt_depth);
    }
    return evaluate(preds, gts);
}

namespace {

const char* const kColumns[] = {"abs_rel", "sq_rel", "log10", "rmse", "sigma1", "sigma2", "sigma3", "ssim"};

std::vector<double> fields(const DepthMetrics& m) {
    return {m.abs_rel, m.sq_rel, m.log10, m.rmse, m.sigma1, m.sigma2, m.sigma3, m.ssim};
}

}  // namespace

std::string metrics_csv(const std::vector<std::pair<std::string, DepthMetrics>>& rows) {
    std::ostringstream os;
    os.precision(17);
    os << "method";
    for (const char* c : kColumns) os << ',' << c;
    os << '\n';
    for (const auto& [name, m] : rows) {
        os << name;
        for (double v : fields(m)) os << ',' << v;
        os << '\n';
    }
    return os.str();
}

std::string metrics_table(const std::vector<std::pair<std::string, DepthMetrics>>& rows) {
    std::size_t name_w = 6;
    for (const auto& r : rows) name_w = std::max(name_w, r.first.size());
    std::ostringstream os;
    char buf[64];
    std::snprintf(buf, sizeof buf, "%-*s", static_cast<int>(name_w), "method");
    os << buf;
    for (const char* c : kColumns) {
        std::snprintf(buf, sizeof buf, " %8s", c);
        os << buf;
    }
    os << '\n';
    for (const auto& [name, m] : rows) {
        std::snprintf(buf, sizeof buf, "%-*s", static_cast<int>(name_w), name.c_str());
        os << buf;
        for (double v : fields(m)) {
            std::snprintf(buf, sizeof buf, " %8.3f", v);
            os << buf;
        }
        os << '\n';
    }
    return os.str();
}

}  // namespace twotower
