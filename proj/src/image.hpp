#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace placer {

// 8-bit image, 1 (gray) or 3 (RGB) channels, row-major interleaved.
struct Image {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<uint8_t> data;

    static Image blank(int width, int height, int channels, uint8_t fill = 0);

    uint8_t& at(int y, int x, int c) {
        return data[(static_cast<size_t>(y) * width + x) * channels + c];
    }
    uint8_t at(int y, int x, int c) const {
        return data[(static_cast<size_t>(y) * width + x) * channels + c];
    }
    bool empty() const { return data.empty(); }
    bool same_shape(const Image& other) const {
        return width == other.width && height == other.height && channels == other.channels;
    }
};

// Luminance in [0, 1] (Rec. 601 weights for RGB).
double luminance(const Image& img, int y, int x);

// Scales image content about its center by `factor` onto a same-sized
// canvas (nearest sampling, black padding).
Image scale_content(const Image& img, double factor);

// Sniffs PNG/JPEG by magic bytes.
Image load_image(const std::string& path);
Image decode_image(const std::vector<uint8_t>& bytes);

void save_png(const std::string& path, const Image& img);
std::vector<uint8_t> encode_png(const Image& img);

}  // namespace placer
