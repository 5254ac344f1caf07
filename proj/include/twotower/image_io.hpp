#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "twotower/tensor.hpp"

namespace twotower {

/// Malformed image file. `offset()` is the byte position where parsing stopped.
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& what, std::size_t offset)
        : std::runtime_error(what + " (byte offset " + std::to_string(offset) + ")"),
          message_(what),
          offset_(offset) {}

    std::size_t offset() const noexcept { return offset_; }
    const std::string& message() const noexcept { return message_; }

private:
    std::string message_;
    std::size_t offset_;
};

using Bytes = std::vector<unsigned char>;

// Portable float map. "Pf" is one channel, "PF" three; the scale line's sign
// selects endianness (negative = little-endian); rows are stored bottom-up.
// Tensors are C x H x W (C = 1 or 3); a leading batch dimension of 1 is also
// accepted on write. Values are stored as float32, so doubles are rounded.
Tensor decode_pfm(std::span<const unsigned char> bytes);
Bytes encode_pfm(const Tensor& image);

// Binary PPM (P6) and PGM (P5) at maxval 255. Values map to [0, 1] as v / 255;
// on write they are clamped to [0, 1] and rounded to the nearest level.
Tensor decode_ppm(std::span<const unsigned char> bytes);
Bytes encode_ppm(const Tensor& rgb);
Tensor decode_pgm(std::span<const unsigned char> bytes);
Bytes encode_pgm(const Tensor& gray);

Bytes read_file(const std::string& path);
void write_file(const std::string& path, std::span<const unsigned char> bytes);

Tensor read_pfm(const std::string& path);
void write_pfm(const std::string& path, const Tensor& image);
Tensor read_ppm(const std::string& path);
void write_ppm(const std::string& path, const Tensor& rgb);
Tensor read_pgm(const std::string& path);
void write_pgm(const std::string& path, const Tensor& gray);

}  // namespace twotower
