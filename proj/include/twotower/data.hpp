#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "twotower/rng.hpp"
#include "twotower/tensor.hpp"

namespace twotower {

/// One training / evaluation unit. All tensors are C x H x W.
struct StereoSample {
    Tensor left;      // 3 x H x W in [0, 1]
    Tensor right;     // 3 x H x W in [0, 1]
    Tensor gt_depth;  // 1 x H x W in (0, 1], near_depth / Z
    Tensor clue;      // 1 x H x W in [0, 1]

    std::size_t height() const { return left.dim(1); }
    std::size_t width() const { return left.dim(2); }
};

class SceneError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Axis-aligned fronto-parallel textured rectangle, placed in left-view pixels.
struct SceneObject {
    std::int64_t x = 0;
    std::int64_t y = 0;
    std::size_t width = 0;
    std::size_t height = 0;
    double depth = 1.0;
    std::uint64_t texture_seed = 0;
};

struct SceneSpec {
    std::size_t width = 64;
    std::size_t height = 64;
    double background_depth = 8.0;
    std::uint64_t background_seed = 0;
    double near_depth = 1.0;       // depth that normalizes to 1
    double baseline_focal = 8.0;   // Bf, so disparity = Bf / Z
    std::vector<SceneObject> objects;

    /// Rounded pixel disparity of a surface at depth z.
    std::int64_t disparity(double z) const;
    /// Rejects non-positive or sub-near depths and disparities >= width / 4.
    void validate() const;
};

/// Rendered pair plus the index of the surface seen at each pixel
/// (-1 = background, otherwise the object index).
struct RenderedScene {
    Tensor left;
    Tensor right;
    Tensor gt_depth;
    std::vector<int> left_owner;
    std::vector<int> right_owner;
};

/// Painter's-algorithm rendering, far to near. The right view shifts every
/// surface left by its disparity; disocclusions show background texture.
/// Colours are quantized to multiples of 1/255 so PPM storage is lossless.
RenderedScene render_scene(const SceneSpec& spec);

struct DegradeParams {
    std::size_t blur_radius = 2;
    double noise_sigma = 0.05;
};

/// Rendered sample with a degraded-ground-truth clue drawn from `seed`.
StereoSample generate_scene(const SceneSpec& spec, std::uint64_t seed,
                            const DegradeParams& clue = {});

/// Random scene of 2..5 rectangles in front of a textured background plane.
/// Disparities stay below width / 4.
SceneSpec random_scene_spec(std::size_t width, std::size_t height, std::uint64_t seed);

/// Per-pixel SAD block matching over d in [0, search]; ties go to the smaller
/// d; image borders are replicated; the result is 3x3 median filtered.
/// Returns raw integer disparities, 1 x H x W.
Tensor blockmatch_disparity(const Tensor& left, const Tensor& right, std::size_t block,
                            std::size_t search);

/// blockmatch_disparity scaled by 1 / search into [0, 1].
Tensor clue_blockmatch(const Tensor& left, const Tensor& right, std::size_t block,
                       std::size_t search);

/// Box blur (replicated borders), additive Gaussian noise, clamp to [0, 1].
Tensor clue_degrade(const Tensor& gt_depth, std::size_t blur_radius, double noise_sigma,
                    std::uint64_t seed);

enum class ClueMode { kBlockMatch, kDegrade, kNone };

ClueMode parse_clue_mode(const std::string& name);
std::string clue_mode_name(ClueMode mode);

inline constexpr std::size_t kDefaultBlock = 7;

/// Computes a sample's clue with the chosen method; kNone yields a constant
/// 0.5 map so the tensor stays well formed.
Tensor make_clue(const StereoSample& sample, ClueMode mode, std::size_t search, std::uint64_t seed,
                 const DegradeParams& degrade = {});

struct SplitIndices {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

inline constexpr double kTrainFraction = 0.9;

/// Seeded shuffle, then the first round(ratio * count) indices train.
SplitIndices split_indices(std::size_t count, double ratio, std::uint64_t seed);

template <typename T>
std::pair<std::vector<T>, std::vector<T>> split(const std::vector<T>& items, double ratio,
                                                std::uint64_t seed) {
    const SplitIndices idx = split_indices(items.size(), ratio, seed);
    std::pair<std::vector<T>, std::vector<T>> out;
    for (auto i : idx.train) out.first.push_back(items[i]);
    for (auto i : idx.test) out.second.push_back(items[i]);
    return out;
}

}  // namespace twotower
