#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "twotower/model.hpp"

namespace twotower {
namespace {

constexpr char kMagic[8] = {'T', 'T', 'U', 'N', 'E', 'T', 'C', '1'};
constexpr std::uint32_t kMaxName = 256;
constexpr std::uint32_t kMaxRank = 8;

class Writer {
public:
    void bytes(const void* p, std::size_t n) {
        const auto* b = static_cast<const unsigned char*>(p);
        out_.insert(out_.end(), b, b + n);
    }
    void u32(std::uint32_t v) { le(v); }
    void u64(std::uint64_t v) { le(v); }
    void f64(double v) { le(std::bit_cast<std::uint64_t>(v)); }
    std::vector<unsigned char> take() { return std::move(out_); }

private:
    template <typename T>
    void le(T v) {
        for (std::size_t i = 0; i < sizeof(T); ++i) out_.push_back(static_cast<unsigned char>(v >> (8 * i)));
    }
    std::vector<unsigned char> out_;
};

class Reader {
public:
    explicit Reader(std::span<const unsigned char> in) : in_(in) {}

    void bytes(void* p, std::size_t n) {
        need(n);
        std::memcpy(p, in_.data() + pos_, n);
        pos_ += n;
    }
    std::uint32_t u32() { return le<std::uint32_t>(); }
    std::uint64_t u64() { return le<std::uint64_t>(); }
    double f64() { return std::bit_cast<double>(le<std::uint64_t>()); }
    std::size_t offset() const { return pos_; }
    bool done() const { return pos_ == in_.size(); }

    [[noreturn]] void fail(const std::string& what) const {
        throw CheckpointError("checkpoint: " + what + " at byte " + std::to_string(pos_));
    }

private:
    void need(std::size_t n) const {
        if (in_.size() - pos_ < n) fail("truncated payload");
    }
    template <typename T>
    T le() {
        need(sizeof(T));
        T v = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(in_[pos_ + i]) << (8 * i);
        pos_ += sizeof(T);
        return v;
    }

    std::span<const unsigned char> in_;
    std::size_t pos_ = 0;
};

}  // namespace

std::vector<unsigned char> serialize_checkpoint(const ModelParams& params) {
    Writer w;
    w.bytes(kMagic, sizeof kMagic);
    w.u32(static_cast<std::uint32_t>(params.config.levels));
    w.u32(static_cast<std::uint32_t>(params.config.base_channels));
    w.u32(params.config.use_clue ? 1 : 0);
    w.u64(params.seed);
    const auto named = params.named();
    w.u32(static_cast<std::uint32_t>(named.size()));
    for (const auto& nt : named) {
        w.u32(static_cast<std::uint32_t>(nt.name.size()));
        w.bytes(nt.name.data(), nt.name.size());
        w.u32(static_cast<std::uint32_t>(nt.tensor->rank()));
        for (auto d : nt.tensor->shape()) w.u64(d);
        for (double v : nt.tensor->data()) w.f64(v);
    }
    return w.take();
}

ModelParams deserialize_checkpoint(std::span<const unsigned char> bytes) {
    Reader r(bytes);
    char magic[sizeof kMagic];
    r.bytes(magic, sizeof magic);
    if (std::memcmp(magic, kMagic, sizeof kMagic) != 0) r.fail("bad magic");

    ModelConfig cfg;
    cfg.levels = r.u32();
    cfg.base_channels = r.u32();
    const std::uint32_t clue = r.u32();
    if (clue > 1) r.fail("bad clue flag");
    cfg.use_clue = clue == 1;
    const std::uint64_t seed = r.u64();
    try {
        cfg.validate();
    } catch (const ConfigError& e) {
        r.fail(e.what());
    }

    // The layout is implied by the header; the body must match it exactly.
    ModelParams params = build(cfg, seed);
    auto named = params.named();
    if (r.u32() != named.size()) r.fail("tensor count does not match config");
    for (auto& nt : named) {
        const std::uint32_t len = r.u32();
        if (len > kMaxName) r.fail("tensor name too long");
        std::string name(len, '\0');
        r.bytes(name.data(), len);
        if (name != nt.name) r.fail("expected tensor '" + nt.name + "', found '" + name + "'");
        const std::uint32_t rank = r.u32();
        if (rank > kMaxRank) r.fail("bad rank for " + name);
        Shape shape(rank);
        for (auto& d : shape) d = r.u64();
        if (shape != nt.tensor->shape()) {
            r.fail("tensor " + name + " has shape " + shape_str(shape) + ", config implies " +
                   shape_str(nt.tensor->shape()));
        }
        for (auto& v : nt.tensor->data()) v = r.f64();
    }
    if (!r.done()) r.fail("trailing bytes");
    return params;
}

void save_checkpoint(const std::string& path, const ModelParams& params) {
    const auto bytes = serialize_checkpoint(params);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("failed writing " + path);
}

ModelParams load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint " + path);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize_checkpoint(bytes);
}

}  // namespace twotower
