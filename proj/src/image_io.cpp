#include "twotower/image_io.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>

namespace twotower {
namespace {

class HeaderReader {
public:
    explicit HeaderReader(std::span<const unsigned char> in) : in_(in) {}

    std::string magic() {
        if (in_.size() < 2) throw ParseError("missing magic number", 0);
        pos_ = 2;
        return std::string(reinterpret_cast<const char*>(in_.data()), 2);
    }

    // Whitespace-separated token; '#' starts a comment running to end of line.
    std::string token() {
        skip_space();
        const std::size_t start = pos_;
        while (pos_ < in_.size() && !std::isspace(in_[pos_])) ++pos_;
        if (start == pos_) throw ParseError("unexpected end of header", pos_);
        return std::string(reinterpret_cast<const char*>(in_.data() + start), pos_ - start);
    }

    std::size_t positive(const char* what) {
        const std::size_t at = pos_;
        const std::string t = token();
        if (t.empty() || !std::all_of(t.begin(), t.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); }) ||
            t.size() > 9) {
            throw ParseError(std::string("invalid ") + what + " '" + t + "'", at);
        }
        const std::size_t v = std::stoul(t);
        if (v == 0) throw ParseError(std::string(what) + " must be positive", at);
        return v;
    }

    double real(const char* what) {
        const std::size_t at = pos_;
        const std::string t = token();
        try {
            std::size_t used = 0;
            const double v = std::stod(t, &used);
            if (used != t.size()) throw std::invalid_argument(t);
            return v;
        } catch (const std::exception&) {
            throw ParseError(std::string("invalid ") + what + " '" + t + "'", at);
        }
    }

    // Exactly one whitespace byte separates the header from the payload.
    std::size_t payload_start() {
        if (pos_ >= in_.size() || !std::isspace(in_[pos_])) {
            throw ParseError("header not terminated by whitespace", pos_);
        }
        return pos_ + 1;
    }

private:
    void skip_space() {
        while (pos_ < in_.size()) {
            if (in_[pos_] == '#') {
                while (pos_ < in_.size() && in_[pos_] != '\n') ++pos_;
            } else if (std::isspace(in_[pos_])) {
                ++pos_;
            } else {
                break;
            }
        }
    }

    std::span<const unsigned char> in_;
    std::size_t pos_ = 0;
};

void require_payload(std::span<const unsigned char> bytes, std::size_t start, std::size_t need) {
    if (bytes.size() < start || bytes.size() - start < need) {
        throw ParseError("truncated payload: need " + std::to_string(need) + " bytes, have " +
                         std::to_string(bytes.size() > start ? bytes.size() - start : 0),
                         bytes.size());
    }
}

// Returns {channels, height, width} for C x H x W or 1 x C x H x W tensors.
struct ImageDims {
    std::size_t c, h, w;
};

ImageDims image_dims(const Tensor& t, const char* fmt) {
    if (t.rank() == 3) return {t.dim(0), t.dim(1), t.dim(2)};
    if (t.rank() == 4 && t.dim(0) == 1) return {t.dim(1), t.dim(2), t.dim(3)};
    throw ShapeError(std::string(fmt) + ": expected C x H x W image, got " + shape_str(t.shape()));
}

unsigned char to_byte(double v) {
    return static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

Bytes encode_pnm(const Tensor& t, std::size_t channels, const char* magic) {
    const ImageDims d = image_dims(t, magic);
    if (d.c != channels) {
        throw ShapeError(std::string(magic) + ": expected " + std::to_string(channels) +
                         " channels, got " + shape_str(t.shape()));
    }
    const std::string header = std::string(magic) + "\n" + std::to_string(d.w) + " " +
                               std::to_string(d.h) + "\n255\n";
    Bytes out(header.begin(), header.end());
    const std::size_t plane = d.h * d.w;
    for (std::size_t i = 0; i < plane; ++i) {
        for (std::size_t c = 0; c < channels; ++c) out.push_back(to_byte(t[c * plane + i]));
    }
    return out;
}

Tensor decode_pnm(std::span<const unsigned char> bytes, std::size_t channels, const char* magic) {
    HeaderReader hr(bytes);
    if (hr.magic() != magic) throw ParseError(std::string("expected magic ") + magic, 0);
    const std::size_t w = hr.positive("width");
    const std::size_t h = hr.positive("height");
    const std::size_t maxval = hr.positive("maxval");
    if (maxval > 255) throw ParseError("only 8-bit maxval is supported", 0);
    const std::size_t start = hr.payload_start();
    require_payload(bytes, start, w * h * channels);

    Tensor t({channels, h, w});
    const std::size_t plane = h * w;
    for (std::size_t i = 0; i < plane; ++i) {
        for (std::size_t c = 0; c < channels; ++c) {
            t[c * plane + i] = static_cast<double>(bytes[start + i * channels + c]) / static_cast<double>(maxval);
        }
    }
    return t;
}

}  // namespace

Tensor decode_pfm(std::span<const unsigned char> bytes) {
    HeaderReader hr(bytes);
    const std::string magic = hr.magic();
    std::size_t channels = 0;
    if (magic == "Pf") {
        channels = 1;
    } else if (magic == "PF") {
        channels = 3;
    } else {
        throw ParseError("bad PFM magic '" + magic + "'", 0);
    }
    const std::size_t w = hr.positive("width");
    const std::size_t h = hr.positive("height");
    const double scale = hr.real("scale");
    if (scale == 0.0 || !std::isfinite(scale)) throw ParseError("PFM scale must be nonzero", 0);
    const bool little = scale < 0.0;
    const std::size_t start = hr.payload_start();
    require_payload(bytes, start, w * h * channels * 4);

    Tensor t({channels, h, w});
    const std::size_t plane = h * w;
    const unsigned char* p = bytes.data() + start;
    for (std::size_t fy = 0; fy < h; ++fy) {
        const std::size_t y = h - 1 - fy;  // bottom-up rows
        for (std::size_t x = 0; x < w; ++x) {
            for (std::size_t c = 0; c < channels; ++c, p += 4) {
                std::uint32_t bits = 0;
                for (int b = 0; b < 4; ++b) {
                    const int shift = little ? 8 * b : 8 * (3 - b);
                    bits |= static_cast<std::uint32_t>(p[b]) << shift;
                }
                t[c * plane + y * w + x] = static_cast<double>(std::bit_cast<float>(bits));
            }
        }
    }
    return t;
}

Bytes encode_pfm(const Tensor& image) {
    const ImageDims d = image_dims(image, "PFM");
    if (d.c != 1 && d.c != 3) {
        throw ShapeError("PFM: expected 1 or 3 channels, got " + shape_str(image.shape()));
    }
    const std::string header = std::string(d.c == 1 ? "Pf" : "PF") + "\n" + std::to_string(d.w) + " " +
                               std::to_string(d.h) + "\n-1.0\n";
    Bytes out(header.begin(), header.end());
    out.reserve(out.size() + d.c * d.h * d.w * 4);
    const std::size_t plane = d.h * d.w;
    for (std::size_t fy = 0; fy < d.h; ++fy) {
        const std::size_t y = d.h - 1 - fy;
        for (std::size_t x = 0; x < d.w; ++x) {
            for (std::size_t c = 0; c < d.c; ++c) {
                const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(image[c * plane + y * d.w + x]));
                for (int b = 0; b < 4; ++b) out.push_back(static_cast<unsigned char>(bits >> (8 * b)));
            }
        }
    }
    return out;
}

Tensor decode_ppm(std::span<const unsigned char> bytes) { return decode_pnm(bytes, 3, "P6"); }
Bytes encode_ppm(const Tensor& rgb) { return encode_pnm(rgb, 3, "P6"); }
Tensor decode_pgm(std::span<const unsigned char> bytes) { return decode_pnm(bytes, 1, "P5"); }
Bytes encode_pgm(const Tensor& gray) { return encode_pnm(gray, 1, "P5"); }

Bytes read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    return Bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void write_file(const std::string& path, std::span<const unsigned char> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("failed writing " + path);
}

namespace {

template <typename Decode>
Tensor read_with(const std::string& path, Decode decode) {
    const Bytes bytes = read_file(path);
    try {
        return decode(bytes);
    } catch (const ParseError& e) {
        throw ParseError(path + ": " + e.message(), e.offset());
    }
}

}  // namespace

Tensor read_pfm(const std::string& path) { return read_with(path, decode_pfm); }
void write_pfm(const std::string& path, const Tensor& image) { write_file(path, encode_pfm(image)); }
Tensor read_ppm(const std::string& path) { return read_with(path, decode_ppm); }
void write_ppm(const std::string& path, const Tensor& rgb) { write_file(path, encode_ppm(rgb)); }
Tensor read_pgm(const std::string& path) { return read_with(path, decode_pgm); }
void write_pgm(const std::string& path, const Tensor& gray) { write_file(path, encode_pgm(gray)); }

}  // namespace twotower
