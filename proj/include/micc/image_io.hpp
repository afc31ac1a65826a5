#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "micc/tensor.hpp"

namespace micc {

struct ImageU8 {
    size_t height = 0, width = 0;
    std::vector<uint8_t> rgb;  // row-major, 3 bytes per pixel

    uint8_t* pixel(size_t y, size_t x) { return rgb.data() + 3 * (y * width + x); }
    const uint8_t* pixel(size_t y, size_t x) const { return rgb.data() + 3 * (y * width + x); }
};

ImageU8 read_ppm(const std::string& path);
void write_ppm(const std::string& path, const ImageU8& img);
ImageU8 read_png(const std::string& path);
ImageU8 read_image(const std::string& path);  // sniffs PNG vs PPM

std::string base64_encode(const uint8_t* data, size_t n);
std::vector<uint8_t> base64_decode(const std::string& text);

// data:image/x-portable-pixmap;base64,...  (inline fixtures)
std::string encode_ppm_data_uri(const ImageU8& img);
bool is_data_uri(const std::string& s);
ImageU8 decode_image_data_uri(const std::string& uri);

ImageU8 resize_nearest(const ImageU8& img, size_t height, size_t width);
Tensor to_float_image(const ImageU8& img);  // (3, H, W) in [0,1]

}  // namespace micc
