#include "twotower/train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <thread>

namespace twotower {
namespace {

Tensor as_batch(const Tensor& t) {
    if (t.rank() == 4) return t;
    Shape s{1};
    s.insert(s.end(), t.shape().begin(), t.shape().end());
    return t.reshaped(std::move(s));
}

struct SampleGradient {
    double loss = 0.0;
    std::vector<std::optional<Tensor>> grads;
};

SampleGradient sample_gradient(const ModelParams& params, const StereoSample& s) {
    Graph g;
    const Var left = g.input(as_batch(s.left));
    const Var right = g.input(as_batch(s.right));
    const Var clue = params.config.use_clue ? g.input(as_batch(s.clue)) : Var{};
    const Var gt = g.input(as_batch(s.gt_depth));
    const Var pred = forward(g, params, left, clue, right);
    const Var loss = g.l1_loss(pred, gt);
    const Gradients grads = g.backward(loss);

    SampleGradient out;
    out.loss = g.value(loss)[0];
    for (const auto& nt : params.named()) {
        const auto v = g.find_parameter(nt.tensor);
        if (v && grads.has(*v)) {
            out.grads.emplace_back(grads[*v]);
        } else {
            out.grads.emplace_back(std::nullopt);
        }
    }
    return out;
}

unsigned worker_count(std::size_t jobs) {
    const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    return static_cast<unsigned>(std::min<std::size_t>(hw, jobs));
}

}  // namespace

void TrainConfig::validate() const {
    if (epochs < 1) throw ConfigError("train config: epochs must be >= 1");
    if (batch < 1) throw ConfigError("train config: batch must be >= 1");
    if (!(adam.lr >= 0.0) || !std::isfinite(adam.lr)) throw ConfigError("train config: lr must be finite and >= 0");
    if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0)) {
        throw ConfigError("train config: betas must lie in [0, 1)");
    }
    if (!(adam.epsilon > 0.0)) throw ConfigError("train config: epsilon must be > 0");
}

OptimState OptimState::zeros_like(const ModelParams& params) {
    OptimState s;
    for (const auto& nt : params.named()) {
        s.first.emplace_back(nt.tensor->shape());
        s.second.emplace_back(nt.tensor->shape());
    }
    return s;
}

double l1_loss(const Tensor& pred, const Tensor& gt) {
    require_same_shape(pred, gt, "l1_loss");
    if (pred.empty()) throw ShapeError("l1_loss: empty operands");
    double s = 0.0;
    for (std::size_t i = 0; i < pred.numel(); ++i) s += std::abs(pred[i] - gt[i]);
    return s / static_cast<double>(pred.numel());
}

void adam_step(ModelParams& params, std::span<const std::optional<Tensor>> grads, OptimState& state,
               const AdamConfig& config) {
    auto named = params.named();
    if (grads.size() != named.size()) {
        throw TrainingError("adam_step: " + std::to_string(grads.size()) + " gradients for " +
                            std::to_string(named.size()) + " parameters");
    }
    if (state.first.size() != named.size()) state = OptimState::zeros_like(params);
    for (std::size_t i = 0; i < named.size(); ++i) {
        if (!grads[i]) throw TrainingError("adam_step: missing gradient for parameter " + named[i].name);
        if (grads[i]->shape() != named[i].tensor->shape()) {
            throw TrainingError("adam_step: gradient for " + named[i].name + " has shape " +
                                shape_str(grads[i]->shape()) + ", parameter is " +
                                shape_str(named[i].tensor->shape()));
        }
    }

    ++state.step;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(config.beta1, t);
    const double c2 = 1.0 - std::pow(config.beta2, t);
    for (std::size_t i = 0; i < named.size(); ++i) {
        Tensor& p = *named[i].tensor;
        const Tensor& g = *grads[i];
        Tensor& m = state.first[i];
        Tensor& v = state.second[i];
        for (std::size_t k = 0; k < p.numel(); ++k) {
            m[k] = config.beta1 * m[k] + (1.0 - config.beta1) * g[k];
            v[k] = config.beta2 * v[k] + (1.0 - config.beta2) * g[k] * g[k];
            const double m_hat = m[k] / c1;
            const double v_hat = v[k] / c2;
            p[k] -= config.lr * m_hat / (std::sqrt(v_hat) + config.epsilon);
        }
    }
}

BatchGradient batch_gradient(const ModelParams& params, std::span<const StereoSample* const> batch) {
    std::vector<SampleGradient> per_sample(batch.size());
    const unsigned workers = worker_count(batch.size());
    if (workers <= 1) {
        for (std::size_t i = 0; i < batch.size(); ++i) per_sample[i] = sample_gradient(params, *batch[i]);
    } else {
        std::vector<std::thread> pool;
        std::vector<std::exception_ptr> errors(workers);
        for (unsigned w = 0; w < workers; ++w) {
            pool.emplace_back([&, w] {
                try {
                    for (std::size_t i = w; i < batch.size(); i += workers) {
                        per_sample[i] = sample_gradient(params, *batch[i]);
                    }
                } catch (...) {
                    errors[w] = std::current_exception();
                }
            });
        }
        for (auto& t : pool) t.join();
        for (auto& e : errors) {
            if (e) std::rethrow_exception(e);
        }
    }

    BatchGradient out;
    const double scale = 1.0 / static_cast<double>(batch.size());
    for (std::size_t i = 0; i < per_sample.size(); ++i) {
        out.losses.push_back(per_sample[i].loss);
        if (i == 0) {
            out.grads = std::move(per_sample[0].grads);
            continue;
        }
        for (std::size_t k = 0; k < out.grads.size(); ++k) {
            const auto& g = per_sample[i].grads[k];
            if (!g) continue;
            if (out.grads[k]) {
                *out.grads[k] += *g;
            } else {
                out.grads[k] = *g;
            }
        }
    }
    for (auto& g : out.grads) {
        if (g) *g *= scale;
    }
    return out;
}

double evaluate_l1(const ModelParams& params, std::span<const StereoSample> samples) {
    if (samples.empty()) return std::numeric_limits<double>::quiet_NaN();
    double total = 0.0;
    for (const auto& s : samples) {
        const Tensor pred = predict(params, as_batch(s.left), as_batch(s.clue), as_batch(s.right));
        total += l1_loss(pred, as_batch(s.gt_depth));
    }
    return total / static_cast<double>(samples.size());
}

ModelParams make_model(ModelConfig model, const TrainConfig& train) {
    model.use_clue = train.clue_enabled;
    return build(model, train.seed);
}

TrainResult train(const ModelParams& initial, std::span<const StereoSample> train_set,
                  std::span<const StereoSample> test_set, const TrainConfig& config) {
    config.validate();
    if (initial.config.use_clue != config.clue_enabled) {
        throw ConfigError(std::string("train: model ") + (initial.config.use_clue ? "expects" : "has no") +
                          " clue channel but training has clue " + (config.clue_enabled ? "enabled" : "disabled"));
    }
    if (train_set.empty()) throw ConfigError("train: empty training set");
    for (const auto* set : {&train_set, &test_set}) {
        for (const auto& s : *set) initial.config.check_input(s.height(), s.width());
    }

    TrainResult result;
    result.last = initial;
    OptimState state = OptimState::zeros_like(initial);
    double best_val = std::numeric_limits<double>::infinity();
    const Rng root(config.seed);
    std::size_t batch_index = 0;

    std::vector<std::size_t> order(train_set.size());
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), 0);
        Rng rng = root.split(epoch);
        for (std::size_t i = order.size(); i > 1; --i) {
            std::swap(order[i - 1], order[static_cast<std::size_t>(rng.integer(0, static_cast<std::int64_t>(i) - 1))]);
        }

        std::vector<double> sample_loss(train_set.size(), 0.0);
        for (std::size_t start = 0; start < order.size(); start += config.batch, ++batch_index) {
            const std::size_t end = std::min(order.size(), start + config.batch);
            std::vector<const StereoSample*> batch;
            for (std::size_t i = start; i < end; ++i) batch.push_back(&train_set[order[i]]);

            BatchGradient bg = batch_gradient(result.last, batch);
            double batch_loss = 0.0;
            for (std::size_t i = 0; i < bg.losses.size(); ++i) {
                batch_loss += bg.losses[i];
                sample_loss[order[start + i]] = bg.losses[i];
            }
            batch_loss /= static_cast<double>(bg.losses.size());
            if (!std::isfinite(batch_loss)) {
                throw TrainingError("train: non-finite loss at batch " + std::to_string(batch_index) +
                                    " (epoch " + std::to_string(epoch) + ")");
            }
            result.step_losses.push_back(batch_loss);
            adam_step(result.last, bg.grads, state, config.adam);
        }

        LossRecord rec;
        rec.step = static_cast<std::size_t>(state.step);
        rec.train_loss = std::accumulate(sample_loss.begin(), sample_loss.end(), 0.0) /
                         static_cast<double>(sample_loss.size());
        rec.val_loss = evaluate_l1(result.last, test_set);
        result.curve.push_back(rec);

        if (test_set.empty() || rec.val_loss < best_val) {
            best_val = test_set.empty() ? best_val : rec.val_loss;
            result.best = result.last;
            result.best_epoch = epoch;
        }
    }
    return result;
}

std::string loss_curve_csv(const std::vector<LossRecord>& curve) {
    std::ostringstream os;
    os.precision(17);
    os << "step,train_loss,val_loss\n";
    for (const auto& r : curve) {
        os << r.step << ',' << r.train_loss << ',';
        if (std::isnan(r.val_loss)) {
            os << "nan";
        } else {
            os << r.val_loss;
        }
        os << '\n';
    }
    return os.str();
}

std::vector<AblationRecord> ablate_clue(std::span<const StereoSample> train_set,
                                        std::span<const StereoSample> test_set,
                                        const ModelConfig& model, const TrainConfig& config,
                                        std::span<const std::uint64_t> seeds, ClueBaseline baseline) {
    if (seeds.size() < 3) throw ConfigError("ablate_clue: at least 3 seeds are required");

    // Control-arm data: the clue replaced by an uninformative constant map.
    auto constant_clue = [](std::span<const StereoSample> in) {
        std::vector<StereoSample> out(in.begin(), in.end());
        for (auto& s : out) s.clue.fill(0.5);
        return out;
    };
    const std::vector<StereoSample> train_const = constant_clue(train_set);
    const std::vector<StereoSample> test_const = constant_clue(test_set);

    std::vector<AblationRecord> records;
    for (std::uint64_t seed : seeds) {
        TrainConfig with = config;
        with.seed = seed;
        with.clue_enabled = true;
        const TrainResult a = train(make_model(model, with), train_set, test_set, with);

        TrainConfig control = with;
        control.clue_enabled = baseline == ClueBaseline::kConstant;
        const TrainResult b = baseline == ClueBaseline::kConstant
                                  ? train(make_model(model, control), train_const, test_const, control)
                                  : train(make_model(model, control), train_set, test_set, control);

        AblationRecord r;
        r.seed = seed;
        r.with_clue = evaluate_l1(a.last, test_set);
        r.baseline = baseline == ClueBaseline::kConstant ? evaluate_l1(b.last, test_const)
                                                         : evaluate_l1(b.last, test_set);
        records.push_back(r);
    }
    return records;
}

}  // namespace twotower
