#include <algorithm>
#include <cmath>
#include <numeric>

#include "twotower/data.hpp"

namespace twotower {
namespace {

constexpr std::size_t kOctaveCells[] = {8, 4, 2, 1};
constexpr double kOctaveWeights[] = {0.35, 0.3, 0.2, 0.15};

double lattice(std::uint64_t seed, std::uint64_t channel, std::uint64_t octave, std::int64_t i,
               std::int64_t j) {
    std::uint64_t h = Rng::mix(seed ^ Rng::mix(channel * 0x100 + octave));
    h = Rng::mix(h ^ (static_cast<std::uint64_t>(i) * 0x9e3779b97f4a7c15ULL));
    h = Rng::mix(h ^ (static_cast<std::uint64_t>(j) * 0xc2b2ae3d27d4eb4fULL));
    return static_cast<double>(h >> 11) * 0x1.0p-53;
}

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
    std::int64_t q = a / b;
    if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
    return q;
}

// Seeded multi-octave value noise in surface-local pixel coordinates.
double texture(std::uint64_t seed, std::size_t channel, std::int64_t u, std::int64_t v) {
    double noise = 0.0;
    for (std::size_t o = 0; o < std::size(kOctaveCells); ++o) {
        const auto cell = static_cast<std::int64_t>(kOctaveCells[o]);
        const std::int64_t iu = floor_div(u, cell), iv = floor_div(v, cell);
        const double tu = static_cast<double>(u - iu * cell) / static_cast<double>(cell);
        const double tv = static_cast<double>(v - iv * cell) / static_cast<double>(cell);
        const double a = lattice(seed, channel, o, iu, iv);
        const double b = lattice(seed, channel, o, iu + 1, iv);
        const double c = lattice(seed, channel, o, iu, iv + 1);
        const double d = lattice(seed, channel, o, iu + 1, iv + 1);
        noise += kOctaveWeights[o] * ((a * (1 - tu) + b * tu) * (1 - tv) + (c * (1 - tu) + d * tu) * tv);
    }
    const double base = lattice(seed, channel, 99, 0, 0);
    const double value = 0.1 + 0.8 * (0.4 * base + 0.6 * noise);
    return std::round(value * 255.0) / 255.0;
}

struct Surface {
    int owner;  // -1 background
    std::int64_t x0, y0, x1, y1;  // left-view extent, half-open
    std::int64_t disparity;
    double depth;
    std::uint64_t seed;
};

void paint(const Surface& s, std::int64_t shift, std::size_t w, std::size_t h, Tensor& image,
           std::vector<int>& owner, Tensor* depth, double near) {
    const std::size_t plane = w * h;
    const auto W = static_cast<std::int64_t>(w), H = static_cast<std::int64_t>(h);
    const std::int64_t ys = std::max<std::int64_t>(s.y0, 0), ye = std::min(s.y1, H);
    const std::int64_t xs = std::max(s.x0 - shift, std::int64_t{0}), xe = std::min(s.x1 - shift, W);
    for (std::int64_t y = ys; y < ye; ++y) {
        for (std::int64_t x = xs; x < xe; ++x) {
            const std::size_t i = static_cast<std::size_t>(y * W + x);
            // Texture coordinates are surface-local, so a surface looks the
            // same in both views up to its shift.
            const std::int64_t u = x + shift - s.x0, v = y - s.y0;
            for (std::size_t c = 0; c < 3; ++c) image[c * plane + i] = texture(s.seed, c, u, v);
            owner[i] = s.owner;
            if (depth) (*depth)[i] = near / s.depth;
        }
    }
}

}  // namespace

std::int64_t SceneSpec::disparity(double z) const { return std::lround(baseline_focal / z); }

void SceneSpec::validate() const {
    if (width == 0 || height == 0) throw SceneError("scene: empty image size");
    if (!(near_depth > 0.0)) throw SceneError("scene: near depth must be positive");
    if (!(baseline_focal >= 0.0)) throw SceneError("scene: baseline-focal product must be >= 0");
    auto check_depth = [&](double z, const std::string& what) {
        if (!(z > 0.0) || !std::isfinite(z)) throw SceneError("scene: " + what + " depth must be positive");
        if (z < near_depth) {
            throw SceneError("scene: " + what + " depth " + std::to_string(z) + " is nearer than near depth " +
                             std::to_string(near_depth));
        }
        const std::int64_t d = disparity(z);
        if (static_cast<double>(d) >= static_cast<double>(width) / 4.0) {
            throw SceneError("scene: " + what + " disparity " + std::to_string(d) + " >= width/4 (" +
                             std::to_string(width) + "/4)");
        }
    };
    check_depth(background_depth, "background");
    for (std::size_t i = 0; i < objects.size(); ++i) {
        const auto& o = objects[i];
        if (o.width == 0 || o.height == 0) throw SceneError("scene: object " + std::to_string(i) + " is empty");
        check_depth(o.depth, "object " + std::to_string(i));
    }
}

RenderedScene render_scene(const SceneSpec& spec) {
    spec.validate();
    const std::size_t w = spec.width, h = spec.height;
    RenderedScene r{Tensor({3, h, w}), Tensor({3, h, w}), Tensor({1, h, w}),
                    std::vector<int>(w * h, -1), std::vector<int>(w * h, -1)};

    std::vector<Surface> surfaces;
    // The background plane extends past the frame by its disparity so the
    // right view never runs out of it.
    const std::int64_t dbg = spec.disparity(spec.background_depth);
    surfaces.push_back({-1, 0, 0, static_cast<std::int64_t>(w) + dbg, static_cast<std::int64_t>(h), dbg,
                        spec.background_depth, spec.background_seed});
    std::vector<std::size_t> order(spec.objects.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return spec.objects[a].depth > spec.objects[b].depth; });
    for (std::size_t i : order) {
        const auto& o = spec.objects[i];
        surfaces.push_back({static_cast<int>(i), o.x, o.y, o.x + static_cast<std::int64_t>(o.width),
                            o.y + static_cast<std::int64_t>(o.height), spec.disparity(o.depth), o.depth,
                            o.texture_seed});
    }
    for (const auto& s : surfaces) {
        paint(s, 0, w, h, r.left, r.left_owner, &r.gt_depth, spec.near_depth);
        paint(s, s.disparity, w, h, r.right, r.right_owner, nullptr, spec.near_depth);
    }
    return r;
}

StereoSample generate_scene(const SceneSpec& spec, std::uint64_t seed, const DegradeParams& clue) {
    RenderedScene r = render_scene(spec);
    StereoSample s{std::move(r.left), std::move(r.right), std::move(r.gt_depth), {}};
    s.clue = clue_degrade(s.gt_depth, clue.blur_radius, clue.noise_sigma, seed);
    return s;
}

SceneSpec random_scene_spec(std::size_t width, std::size_t height, std::uint64_t seed) {
    Rng rng(seed);
    SceneSpec spec;
    spec.width = width;
    spec.height = height;
    spec.near_depth = 1.0;
    // Normalized depth spans roughly [1/3, 1]; disparities stay under W/4.
    spec.baseline_focal = std::max(1.0, static_cast<double>(width) / 6.0);
    spec.background_depth = 3.0;
    spec.background_seed = rng.next();
    const auto count = static_cast<std::size_t>(rng.integer(2, 5));
    const auto W = static_cast<std::int64_t>(width), H = static_cast<std::int64_t>(height);
    for (std::size_t i = 0; i < count; ++i) {
        SceneObject o;
        o.width = static_cast<std::size_t>(rng.integer(std::max<std::int64_t>(2, W / 8), std::max<std::int64_t>(2, W / 2)));
        o.height = static_cast<std::size_t>(rng.integer(std::max<std::int64_t>(2, H / 8), std::max<std::int64_t>(2, H / 2)));
        const auto ow = static_cast<std::int64_t>(o.width), oh = static_cast<std::int64_t>(o.height);
        o.x = rng.integer(-ow / 4, W - 3 * ow / 4);
        o.y = rng.integer(-oh / 4, H - 3 * oh / 4);
        o.depth = rng.uniform(spec.near_depth, 2.5);
        o.texture_seed = rng.next();
        spec.objects.push_back(o);
    }
    spec.validate();
    return spec;
}

}  // namespace twotower
