// PNG read/write and in-memory baseline JPEG round trips.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "imdp/tensor.hpp"

namespace imdp::io {

/// 8-bit interleaved RGB buffer.
struct ImageU8 {
    int h = 0, w = 0;
    std::vector<std::uint8_t> rgb;  // h*w*3

    std::uint8_t at(int y, int x, int c) const {
        return rgb[(static_cast<std::size_t>(y) * w + x) * 3 + c];
    }
};

ImageU8 read_png(const std::string& path);
void write_png(const std::string& path, const ImageU8& img);

/// Single-channel 8-bit PNG (masks, probability maps).
std::vector<std::uint8_t> read_png_gray(const std::string& path, int& h, int& w);
void write_png_gray(const std::string& path, int h, int w, const std::vector<std::uint8_t>& gray);

/// Encode to baseline JPEG at the given quality and decode again.
ImageU8 jpeg_roundtrip(const ImageU8& img, int quality);

/// (H,W,3) tensor in [0,255] <-> rounded 8-bit buffer.
Tensor to_tensor(const ImageU8& img);
ImageU8 to_u8(const Tensor& hwc);

}  // namespace imdp::io
