#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "image.hpp"

namespace placer {

// Binary mask; data holds 0/1 per pixel.
struct Mask {
    int width = 0;
    int height = 0;
    std::vector<uint8_t> data;

    static Mask blank(int width, int height, uint8_t fill = 0);

    uint8_t& at(int y, int x) { return data[static_cast<size_t>(y) * width + x]; }
    uint8_t at(int y, int x) const { return data[static_cast<size_t>(y) * width + x]; }
    size_t count_ones() const;
    bool empty_mask() const { return count_ones() == 0; }
    bool is_binary() const;
};

// A mask at image resolution plus max-pooled levels at the square
// resolutions the pipeline needs (latent grid, attention token grids).
// Background at any level is the complement of the foreground level.
struct MaskPyramid {
    Mask base;
    std::map<int, Mask> levels;

    const Mask& level(int resolution) const;  // Resolution error when missing
    bool has_level(int resolution) const { return levels.count(resolution) > 0; }
    Mask background_level(int resolution) const;
};

// Max-pool downsampling: a level pixel is 1 iff any covered base pixel is 1,
// so a nonempty mask stays nonempty at every level.
MaskPyramid build_pyramid(const Mask& base, const std::vector<int>& resolutions);

// Morphological dilation with a square structuring element of half-width
// radius_px; radius 0 is the identity.
Mask dilate(const Mask& mask, int radius_px);

Mask mask_from_image(const Image& img);      // nonzero pixels -> 1
Image mask_to_image(const Mask& mask);       // 0 -> 0, 1 -> 255

class SegmentationClient {
public:
    virtual ~SegmentationClient() = default;
    // Returns the person mask at image resolution, or nullopt when no
    // person is found.
    virtual std::optional<Mask> segment_person(const Image& img) const = 0;
    virtual std::string name() const = 0;
};

// Thresholds luminance; test double and toy-pipeline segmenter.
std::unique_ptr<SegmentationClient> make_threshold_stub_client(double threshold);

// POSTs PNG bytes to `url`, expects a PNG mask back (204 = no person).
std::unique_ptr<SegmentationClient> make_http_segmentation_client(const std::string& url,
                                                                  int timeout_ms,
                                                                  int retries = 2);

}  // namespace placer
