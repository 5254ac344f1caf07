#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "twotower/graph.hpp"
#include "twotower/tensor.hpp"

namespace twotower {

/// Invalid model configuration or input dimensions that the configuration
/// cannot accept.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

inline constexpr std::size_t kConvKernel = 5;
inline constexpr std::size_t kConvPad = 2;
inline constexpr std::size_t kImageChannels = 3;

struct ModelConfig {
    std::size_t levels = 3;         // downsampling steps L
    std::size_t base_channels = 8;  // width C after the first conv pair
    bool use_clue = true;           // primary tower reads RGB + clue

    std::size_t in_primary() const { return use_clue ? kImageChannels + 1 : kImageChannels; }
    std::size_t in_secondary() const { return kImageChannels; }
    std::size_t out_channels() const { return 1; }

    /// Channel width at `level`: C * 2^level.
    std::size_t width(std::size_t level) const { return base_channels << level; }
    std::size_t divisor() const { return std::size_t{1} << levels; }

    void validate() const;
    /// Throws ConfigError naming the dimension that is not divisible by 2^L.
    void check_input(std::size_t height, std::size_t width) const;

    bool operator==(const ModelConfig&) const = default;
};

struct ConvLayer {
    Tensor weight;
    Tensor bias;

    bool operator==(const ConvLayer&) const = default;
};

/// Two 5x5 convolutions, each followed by relu.
struct ConvBlock {
    ConvLayer first;
    ConvLayer second;

    bool operator==(const ConvBlock&) const = default;
};

/// 4x4 up-convolution followed by a conv block over [upsampled, fused skip].
struct DecoderStage {
    ConvLayer up;
    ConvBlock block;

    bool operator==(const DecoderStage&) const = default;
};

struct NamedTensor {
    std::string name;
    Tensor* tensor;
};

struct ConstNamedTensor {
    std::string name;
    const Tensor* tensor;
};

/// All learnable weights. Primary and secondary towers own separate storage.
struct ModelParams {
    ModelConfig config;
    std::uint64_t seed = 0;
    std::vector<ConvBlock> primary;       // levels + 1 blocks; the last is the bottleneck
    std::vector<ConvBlock> secondary;     // levels blocks, no bottleneck
    std::vector<DecoderStage> decoder;    // decoder[l] produces level l
    ConvLayer head;                       // 1x1 conv to one channel

    /// Every tensor in a fixed order with a stable dotted name.
    std::vector<NamedTensor> named();
    std::vector<ConstNamedTensor> named() const;

    bool operator==(const ModelParams&) const = default;
};

/// Initializes weights with fan-in scaled uniform draws (bound sqrt(6 / fan_in)),
/// biases zero. Each tensor has its own stream split from `seed`.
ModelParams build(const ModelConfig& config, std::uint64_t seed);

struct ParamCount {
    std::size_t trainable = 0;
    std::size_t total = 0;
};

ParamCount param_count(const ModelParams& params);

struct EncoderOutput {
    std::vector<Var> skips;  // one per level, recorded before pooling
    Var deepest;
};

/// Runs one tower. With levels + 1 blocks the last one is the bottleneck and
/// becomes `deepest`; with `levels` blocks `deepest` is the last skip.
EncoderOutput encoder_forward(Graph& g, std::span<const ConvBlock> tower, Var input,
                              std::size_t levels);

/// Element-wise product of same-level skips from the two towers.
std::vector<Var> fuse(Graph& g, std::span<const Var> primary_skips,
                      std::span<const Var> secondary_skips);

/// Full network. `clue` is ignored (and may be an invalid Var) when the model
/// is configured without the clue channel. Returns N x 1 x H x W in (0, 1).
Var forward(Graph& g, const ModelParams& params, Var left, Var clue, Var right);

/// Forward pass on plain tensors, discarding the tape.
Tensor predict(const ModelParams& params, const Tensor& left, const Tensor& clue,
               const Tensor& right);

/// Binary checkpoint: magic, config header (L, C, clue flag, seed), then each
/// named tensor with its shape and little-endian float64 payload.
void save_checkpoint(const std::string& path, const ModelParams& params);
ModelParams load_checkpoint(const std::string& path);

std::vector<unsigned char> serialize_checkpoint(const ModelParams& params);
ModelParams deserialize_checkpoint(std::span<const unsigned char> bytes);

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace twotower
