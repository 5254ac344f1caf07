#include "twotower/dataset.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "twotower/image_io.hpp"

namespace twotower {

namespace fs = std::filesystem;
using nlohmann::json;

std::string sample_stem(std::size_t index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04zu", index);
    return buf;
}

Tensor to_float_precision(Tensor t) {
    for (auto& v : t.data()) v = static_cast<double>(static_cast<float>(v));
    return t;
}

Dataset generate_dataset(std::size_t count, std::size_t size, std::uint64_t seed, ClueMode clue_mode) {
    Dataset data;
    data.clue_mode = clue_mode;
    data.size = size;
    data.seed = seed;
    const std::size_t search = size >= 8 ? size / 4 - 1 : 1;
    for (std::size_t i = 0; i < count; ++i) {
        const std::uint64_t scene_seed = Rng::mix(seed ^ Rng::mix(i));
        SceneSpec spec = random_scene_spec(size, size, scene_seed);
        RenderedScene r = render_scene(spec);
        StereoSample s{std::move(r.left), std::move(r.right), to_float_precision(std::move(r.gt_depth)), {}};
        if (clue_mode != ClueMode::kNone) {
            s.clue = to_float_precision(make_clue(s, clue_mode, search, Rng::mix(scene_seed + 1)));
        } else {
            s.clue = make_clue(s, clue_mode, search, 0);
        }
        data.samples.push_back(std::move(s));
        data.scenes.push_back(std::move(spec));
    }
    return data;
}

std::string manifest_json(const Dataset& data) {
    json j;
    j["count"] = data.samples.size();
    j["size"] = data.size;
    j["seed"] = data.seed;
    j["clue_mode"] = clue_mode_name(data.clue_mode);
    json scenes = json::array();
    for (std::size_t i = 0; i < data.scenes.size(); ++i) {
        const SceneSpec& s = data.scenes[i];
        json objects = json::array();
        for (const auto& o : s.objects) {
            objects.push_back({{"x", o.x},
                               {"y", o.y},
                               {"width", o.width},
                               {"height", o.height},
                               {"depth", o.depth},
                               {"disparity", s.disparity(o.depth)},
                               {"texture_seed", o.texture_seed}});
        }
        scenes.push_back({{"id", sample_stem(i)},
                          {"width", s.width},
                          {"height", s.height},
                          {"near_depth", s.near_depth},
                          {"baseline_focal", s.baseline_focal},
                          {"background_depth", s.background_depth},
                          {"background_seed", s.background_seed},
                          {"objects", std::move(objects)}});
    }
    j["scenes"] = std::move(scenes);
    return j.dump(2) + "\n";
}

void save_dataset(const std::string& dir, const Dataset& data) {
    const fs::path root(dir);
    const bool with_clue = data.clue_mode != ClueMode::kNone;
    std::error_code ec;
    for (const char* sub : {"left", "right", "depth"}) {
        fs::create_directories(root / sub, ec);
        if (ec) throw std::runtime_error("cannot create " + (root / sub).string() + ": " + ec.message());
    }
    if (with_clue) {
        fs::create_directories(root / "clue", ec);
        if (ec) throw std::runtime_error("cannot create " + (root / "clue").string() + ": " + ec.message());
    }
    for (std::size_t i = 0; i < data.samples.size(); ++i) {
        const std::string stem = sample_stem(i);
        const StereoSample& s = data.samples[i];
        write_ppm((root / "left" / (stem + ".ppm")).string(), s.left);
        write_ppm((root / "right" / (stem + ".ppm")).string(), s.right);
        write_pfm((root / "depth" / (stem + ".pfm")).string(), s.gt_depth);
        if (with_clue) write_pfm((root / "clue" / (stem + ".pfm")).string(), s.clue);
    }
    const std::string manifest = manifest_json(data);
    write_file((root / "manifest.json").string(),
               std::span(reinterpret_cast<const unsigned char*>(manifest.data()), manifest.size()));
}

Dataset load_dataset(const std::string& dir) {
    const fs::path root(dir);
    const Bytes raw = read_file((root / "manifest.json").string());
    json j;
    try {
        j = json::parse(raw.begin(), raw.end());
    } catch (const json::exception& e) {
        throw std::runtime_error("dataset " + dir + ": bad manifest: " + e.what());
    }
    Dataset data;
    const auto count = j.at("count").get<std::size_t>();
    data.size = j.value("size", std::size_t{0});
    data.seed = j.value("seed", std::uint64_t{0});
    data.clue_mode = parse_clue_mode(j.value("clue_mode", std::string("none")));
    if (j.contains("scenes")) {
        for (const auto& s : j["scenes"]) {
            SceneSpec spec;
            spec.width = s.at("width");
            spec.height = s.at("height");
            spec.near_depth = s.at("near_depth");
            spec.baseline_focal = s.at("baseline_focal");
            spec.background_depth = s.at("background_depth");
            spec.background_seed = s.at("background_seed");
            for (const auto& o : s.at("objects")) {
                spec.objects.push_back({o.at("x"), o.at("y"), o.at("width"), o.at("height"), o.at("depth"),
                                        o.at("texture_seed")});
            }
            data.scenes.push_back(std::move(spec));
        }
    }
    const bool with_clue = data.clue_mode != ClueMode::kNone;
    for (std::size_t i = 0; i < count; ++i) {
        const std::string stem = sample_stem(i);
        StereoSample s;
        s.left = read_ppm((root / "left" / (stem + ".ppm")).string());
        s.right = read_ppm((root / "right" / (stem + ".ppm")).string());
        s.gt_depth = read_pfm((root / "depth" / (stem + ".pfm")).string());
        s.clue = with_clue ? read_pfm((root / "clue" / (stem + ".pfm")).string())
                           : Tensor({1, s.left.dim(1), s.left.dim(2)}, 0.5);
        if (s.right.shape() != s.left.shape() || s.gt_depth.dim(1) != s.left.dim(1) ||
            s.gt_depth.dim(2) != s.left.dim(2) || s.clue.shape() != s.gt_depth.shape() ||
            s.gt_depth.dim(0) != 1) {
            throw ShapeError("dataset " + dir + ": sample " + stem + " has inconsistent shapes (left " +
                             shape_str(s.left.shape()) + ", right " + shape_str(s.right.shape()) + ", depth " +
                             shape_str(s.gt_depth.shape()) + ", clue " + shape_str(s.clue.shape()) + ")");
        }
        data.samples.push_back(std::move(s));
    }
    return data;
}

}  // namespace twotower
