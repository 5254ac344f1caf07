#pragma once

#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "twotower/data.hpp"
#include "twotower/model.hpp"
#include "twotower/tensor.hpp"

namespace twotower {

/// Non-positive depth where a positive one is required. The message carries
/// the (row, col) of the first offending pixel.
class MetricDomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// One row of the standard depth-estimation table, in its column order.
struct DepthMetrics {
    double abs_rel = 0.0;
    double sq_rel = 0.0;
    double log10 = 0.0;
    double rmse = 0.0;
    double sigma1 = 0.0;
    double sigma2 = 0.0;
    double sigma3 = 0.0;
    double ssim = 0.0;
};

// Maps are compared element-wise; any shape works as long as both agree.
// gt must be strictly positive for every metric, pred too for log10 and the
// threshold accuracies.
double abs_rel(const Tensor& pred, const Tensor& gt);
double sq_rel(const Tensor& pred, const Tensor& gt);
double rmse(const Tensor& pred, const Tensor& gt);
double log10_error(const Tensor& pred, const Tensor& gt);

/// Fraction of pixels with max(p/g, g/p) < 1.25^i, i in {1, 2, 3}.
double threshold_accuracy(const Tensor& pred, const Tensor& gt, int i);

inline constexpr std::size_t kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kSsimK1 = 0.01;
inline constexpr double kSsimK2 = 0.03;

/// Mean SSIM over every valid (unpadded) placement of an 11x11 Gaussian
/// window, sigma 1.5, K1 0.01, K2 0.03, dynamic range 1. Inputs are single
/// channel maps: all dimensions before the last two must be 1.
double ssim(const Tensor& a, const Tensor& b);

DepthMetrics compute_metrics(const Tensor& pred, const Tensor& gt);

/// Uniform average of per-pair metrics.
DepthMetrics evaluate(std::span<const Tensor> preds, std::span<const Tensor> gts);

/// Runs the model on every sample and averages per-sample metrics.
DepthMetrics evaluate(const ModelParams& params, std::span<const StereoSample> test_set);

std::string metrics_csv(const std::vector<std::pair<std::string, DepthMetrics>>& rows);
std::string metrics_table(const std::vector<std::pair<std::string, DepthMetrics>>& rows);

}  // namespace twotower
