#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "twotower/data.hpp"

namespace twotower {

// On-disk layout:
//   <dir>/left/NNNN.ppm  <dir>/right/NNNN.ppm  <dir>/depth/NNNN.pfm  <dir>/clue/NNNN.pfm
//   <dir>/manifest.json  (generator settings and every scene spec)
// The clue/ directory is absent when the dataset was generated without clues.

struct Dataset {
    std::vector<StereoSample> samples;
    std::vector<SceneSpec> scenes;  // empty when loaded without a manifest entry
    ClueMode clue_mode = ClueMode::kDegrade;
    std::size_t size = 0;
    std::uint64_t seed = 0;
};

std::string sample_stem(std::size_t index);

/// Renders `count` random square scenes of side `size`. Sample i uses scene
/// seed mix(seed, i); clues follow `clue_mode` (blockmatch searches up to
/// size / 4 - 1). Depth and clue maps are rounded to float32 so that they
/// survive PFM storage unchanged.
Dataset generate_dataset(std::size_t count, std::size_t size, std::uint64_t seed, ClueMode clue_mode);

/// Writes the layout above. Fails before writing if `dir` cannot be created.
void save_dataset(const std::string& dir, const Dataset& data);

/// Loads the layout above; the manifest supplies count and clue mode.
Dataset load_dataset(const std::string& dir);

std::string manifest_json(const Dataset& data);

/// Rounds every value to the nearest float32.
Tensor to_float_precision(Tensor t);

}  // namespace twotower
