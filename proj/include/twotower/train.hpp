#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "twotower/data.hpp"
#include "twotower/model.hpp"

namespace twotower {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct TrainConfig {
    std::size_t epochs = 15;
    std::size_t batch = 4;
    AdamConfig adam;
    std::uint64_t seed = 0;
    bool clue_enabled = true;

    void validate() const;
};

/// First/second moment accumulators mirroring ModelParams::named() order.
struct OptimState {
    std::vector<Tensor> first;
    std::vector<Tensor> second;
    std::uint64_t step = 0;

    static OptimState zeros_like(const ModelParams& params);
};

class TrainingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Mean absolute difference over every element.
double l1_loss(const Tensor& pred, const Tensor& gt);

/// One bias-corrected Adam update. `grads` aligns with params.named(); a
/// missing entry raises TrainingError naming that parameter.
void adam_step(ModelParams& params, std::span<const std::optional<Tensor>> grads, OptimState& state,
               const AdamConfig& config);

struct BatchGradient {
    std::vector<double> losses;            // per sample, in batch order
    std::vector<std::optional<Tensor>> grads;  // mean over the batch, aligned with named()
};

/// Per-sample forward/backward, run concurrently over read-only params and
/// reduced in batch order, so the result does not depend on scheduling.
BatchGradient batch_gradient(const ModelParams& params, std::span<const StereoSample* const> batch);

/// Mean per-sample L1 between prediction and ground truth.
double evaluate_l1(const ModelParams& params, std::span<const StereoSample> samples);

struct LossRecord {
    std::size_t step = 0;     // optimizer steps taken by the end of the epoch
    double train_loss = 0.0;  // mean per-sample training loss over the epoch
    double val_loss = 0.0;    // test-split L1 after the epoch, NaN without a test split
};

struct TrainResult {
    ModelParams best;   // lowest validation L1 (last epoch without a test split)
    ModelParams last;
    std::vector<LossRecord> curve;
    std::vector<double> step_losses;  // batch loss before each optimizer step
    std::size_t best_epoch = 0;
};

/// Builds a model whose clue channel follows `train.clue_enabled`, seeded
/// with `train.seed`.
ModelParams make_model(ModelConfig model, const TrainConfig& train);

/// Adam over seeded per-epoch shuffles. Throws TrainingError on a non-finite
/// batch loss, naming the batch.
TrainResult train(const ModelParams& initial, std::span<const StereoSample> train_set,
                  std::span<const StereoSample> test_set, const TrainConfig& config);

std::string loss_curve_csv(const std::vector<LossRecord>& curve);

/// Control arm of the clue ablation.
enum class ClueBaseline {
    kConstant,  // four-channel model fed a constant 0.5 clue
    kNone,      // three-channel model without a clue
};

struct AblationRecord {
    std::uint64_t seed = 0;
    double with_clue = 0.0;  // final test L1
    double baseline = 0.0;   // final test L1
};

/// Trains matched arms per seed with identical budgets and initial seeds.
std::vector<AblationRecord> ablate_clue(std::span<const StereoSample> train_set,
                                        std::span<const StereoSample> test_set,
                                        const ModelConfig& model, const TrainConfig& config,
                                        std::span<const std::uint64_t> seeds,
                                        ClueBaseline baseline = ClueBaseline::kConstant);

}  // namespace twotower
