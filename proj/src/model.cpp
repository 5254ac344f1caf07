#include "twotower/model.hpp"

#include <cmath>

#include "twotower/kernels.hpp"
#include "twotower/rng.hpp"

namespace twotower {
namespace {

class Initializer {
public:
    explicit Initializer(std::uint64_t seed) : root_(seed) {}

    ConvLayer conv(std::size_t cout, std::size_t cin, std::size_t k) {
        return {uniform({cout, cin, k, k}, cin * k * k), Tensor({cout})};
    }

    // Each output pixel of a 4x4 / stride 2 up-convolution sees 2x2 taps per
    // input channel.
    ConvLayer up(std::size_t cin, std::size_t cout) {
        return {uniform({cin, cout, kernels::kUpKernel, kernels::kUpKernel}, cin * 4), Tensor({cout})};
    }

    ConvBlock block(std::size_t cin, std::size_t cout) {
        ConvLayer first = conv(cout, cin, kConvKernel);
        ConvLayer second = conv(cout, cout, kConvKernel);
        return {std::move(first), std::move(second)};
    }

private:
    Tensor uniform(Shape shape, std::size_t fan_in) {
        Rng rng = root_.split(stream_++);
        const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
        Tensor t(std::move(shape));
        for (auto& v : t.data()) v = rng.uniform(-bound, bound);
        return t;
    }

    Rng root_;
    std::uint64_t stream_ = 0;
};

template <typename Params, typename Out>
void collect(Params& p, Out& out) {
    auto layer = [&](const std::string& prefix, auto& l) {
        out.push_back({prefix + ".weight", &l.weight});
        out.push_back({prefix + ".bias", &l.bias});
    };
    auto block = [&](const std::string& prefix, auto& b) {
        layer(prefix + ".conv1", b.first);
        layer(prefix + ".conv2", b.second);
    };
    for (std::size_t l = 0; l < p.primary.size(); ++l) block("primary." + std::to_string(l), p.primary[l]);
    for (std::size_t l = 0; l < p.secondary.size(); ++l) block("secondary." + std::to_string(l), p.secondary[l]);
    for (std::size_t l = 0; l < p.decoder.size(); ++l) {
        const std::string prefix = "decoder." + std::to_string(l);
        layer(prefix + ".up", p.decoder[l].up);
        block(prefix, p.decoder[l].block);
    }
    layer("head", p.head);
}

Var conv_relu(Graph& g, const ConvLayer& layer, Var x) {
    return g.relu(g.conv2d(x, g.parameter(layer.weight), g.parameter(layer.bias), kConvPad));
}

Var run_block(Graph& g, const ConvBlock& block, Var x) {
    return conv_relu(g, block.second, conv_relu(g, block.first, x));
}

void check_image(const Tensor& t, std::size_t channels, const char* what) {
    if (t.rank() != 4 || t.dim(1) != channels) {
        throw ShapeError(std::string("forward: ") + what + " must be N x " + std::to_string(channels) +
                         " x H x W, got " + shape_str(t.shape()));
    }
}

}  // namespace

void ModelConfig::validate() const {
    if (levels < 1) throw ConfigError("model config: levels must be >= 1");
    if (base_channels < 1) throw ConfigError("model config: base_channels must be >= 1");
    if (levels > 12) throw ConfigError("model config: levels > 12 is not supported");
    if (base_channels > 1024) throw ConfigError("model config: base_channels > 1024 is not supported");
}

void ModelConfig::check_input(std::size_t height, std::size_t width) const {
    const std::size_t d = divisor();
    if (height == 0 || height % d != 0) {
        throw ConfigError("input height " + std::to_string(height) + " is not divisible by 2^" +
                          std::to_string(levels) + " = " + std::to_string(d));
    }
    if (width == 0 || width % d != 0) {
        throw ConfigError("input width " + std::to_string(width) + " is not divisible by 2^" +
                          std::to_string(levels) + " = " + std::to_string(d));
    }
}

std::vector<NamedTensor> ModelParams::named() {
    std::vector<NamedTensor> out;
    collect(*this, out);
    return out;
}

std::vector<ConstNamedTensor> ModelParams::named() const {
    std::vector<ConstNamedTensor> out;
    collect(*this, out);
    return out;
}

ModelParams build(const ModelConfig& config, std::uint64_t seed) {
    config.validate();
    Initializer init(seed);
    ModelParams p;
    p.config = config;
    p.seed = seed;
    const std::size_t L = config.levels;

    p.primary.push_back(init.block(config.in_primary(), config.width(0)));
    for (std::size_t l = 1; l <= L; ++l) p.primary.push_back(init.block(config.width(l - 1), config.width(l)));

    p.secondary.push_back(init.block(config.in_secondary(), config.width(0)));
    for (std::size_t l = 1; l < L; ++l) p.secondary.push_back(init.block(config.width(l - 1), config.width(l)));

    p.decoder.resize(L);
    for (std::size_t l = L; l-- > 0;) {
        // Upsampled features and the fused skip both carry width(l) channels.
        ConvLayer up = init.up(config.width(l + 1), config.width(l));
        ConvBlock block = init.block(2 * config.width(l), config.width(l));
        p.decoder[l] = {std::move(up), std::move(block)};
    }
    p.head = init.conv(config.out_channels(), config.width(0), 1);
    return p;
}

ParamCount param_count(const ModelParams& params) {
    ParamCount c;
    for (const auto& nt : params.named()) c.trainable += nt.tensor->numel();
    c.total = c.trainable;
    return c;
}

EncoderOutput encoder_forward(Graph& g, std::span<const ConvBlock> tower, Var input,
                              std::size_t levels) {
    const Tensor& x0 = g.value(input);
    require_rank(x0, 4, "encoder_forward");
    if (tower.size() != levels && tower.size() != levels + 1) {
        throw ConfigError("encoder_forward: tower has " + std::to_string(tower.size()) +
                          " blocks for " + std::to_string(levels) + " levels");
    }
    ModelConfig{levels, 1, false}.check_input(x0.dim(2), x0.dim(3));

    EncoderOutput out;
    Var x = input;
    for (std::size_t l = 0; l < levels; ++l) {
        x = run_block(g, tower[l], x);
        out.skips.push_back(x);
        if (l + 1 < tower.size()) x = g.maxpool2d(x);
    }
    out.deepest = tower.size() > levels ? run_block(g, tower[levels], x) : out.skips.back();
    return out;
}

std::vector<Var> fuse(Graph& g, std::span<const Var> primary_skips,
                      std::span<const Var> secondary_skips) {
    if (primary_skips.size() != secondary_skips.size()) {
        throw ShapeError("fuse: " + std::to_string(primary_skips.size()) + " primary levels vs " +
                         std::to_string(secondary_skips.size()) + " secondary levels");
    }
    std::vector<Var> fused;
    for (std::size_t l = 0; l < primary_skips.size(); ++l) {
        fused.push_back(g.mul(primary_skips[l], secondary_skips[l]));
    }
    return fused;
}

Var forward(Graph& g, const ModelParams& params, Var left, Var clue, Var right) {
    const ModelConfig& cfg = params.config;
    const Tensor& lv = g.value(left);
    const Tensor& rv = g.value(right);
    check_image(lv, kImageChannels, "left image");
    check_image(rv, kImageChannels, "right image");
    if (lv.shape() != rv.shape()) {
        throw ShapeError("forward: left " + shape_str(lv.shape()) + " and right " +
                         shape_str(rv.shape()) + " differ");
    }
    cfg.check_input(lv.dim(2), lv.dim(3));

    Var primary_in = left;
    if (cfg.use_clue) {
        const Tensor& cv = g.value(clue);
        if (cv.rank() != 4 || cv.dim(0) != lv.dim(0) || cv.dim(1) != 1 || cv.dim(2) != lv.dim(2) ||
            cv.dim(3) != lv.dim(3)) {
            throw ShapeError("forward: clue " + shape_str(cv.shape()) + " does not match left image " +
                             shape_str(lv.shape()) + " (expected N x 1 x H x W)");
        }
        primary_in = g.concat_channels(left, clue);
    }

    const EncoderOutput primary = encoder_forward(g, params.primary, primary_in, cfg.levels);
    const EncoderOutput secondary = encoder_forward(g, params.secondary, right, cfg.levels);
    const std::vector<Var> fused = fuse(g, primary.skips, secondary.skips);

    Var x = primary.deepest;
    for (std::size_t l = cfg.levels; l-- > 0;) {
        const DecoderStage& stage = params.decoder[l];
        x = g.conv_transpose2d(x, g.parameter(stage.up.weight), g.parameter(stage.up.bias));
        x = g.concat_channels(x, fused[l]);
        x = run_block(g, stage.block, x);
    }
    x = g.conv2d(x, g.parameter(params.head.weight), g.parameter(params.head.bias), 0);
    return g.sigmoid(x);
}

Tensor predict(const ModelParams& params, const Tensor& left, const Tensor& clue,
               const Tensor& right) {
    Graph g;
    const Var l = g.input(left);
    const Var r = g.input(right);
    const Var c = params.config.use_clue ? g.input(clue) : Var{};
    return g.value(forward(g, params, l, c, r));
}

}  // namespace twotower
