#include "masks.hpp"

#include <algorithm>

#include "errors.hpp"
#include "http_client.hpp"

namespace placer {

Mask Mask::blank(int width, int height, uint8_t fill) {
    if (width <= 0 || height <= 0) {
        fail(ErrorKind::InvalidArgument, "mask dimensions must be positive");
    }
    Mask m;
    m.width = width;
    m.height = height;
    m.data.assign(static_cast<size_t>(width) * height, fill);
    return m;
}

size_t Mask::count_ones() const {
    size_t n = 0;
    for (uint8_t v : data) n += v != 0;
    return n;
}

bool Mask::is_binary() const {
    for (uint8_t v : data) {
        if (v > 1) return false;
    }
    return true;
}

const Mask& MaskPyramid::level(int resolution) const {
    auto it = levels.find(resolution);
    if (it == levels.end()) {
        fail(ErrorKind::Resolution,
             "mask pyramid has no level at resolution " + std::to_string(resolution));
    }
    return it->second;
}

Mask MaskPyramid::background_level(int resolution) const {
    Mask bg = level(resolution);
    for (auto& v : bg.data) v = v ? 0 : 1;
    return bg;
}

MaskPyramid build_pyramid(const Mask& base, const std::vector<int>& resolutions) {
    if (!base.is_binary()) {
        fail(ErrorKind::InvalidArgument, "mask pyramid input must be binary");
    }
    if (resolutions.empty()) {
        fail(ErrorKind::InvalidArgument, "mask pyramid needs at least one resolution");
    }
    MaskPyramid pyr;
    pyr.base = base;
    for (int res : resolutions) {
        if (res <= 0 || res > std::max(base.width, base.height)) {
            fail(ErrorKind::Resolution,
                 "pyramid resolution " + std::to_string(res) + " out of range for base " +
                     std::to_string(base.width) + "x" + std::to_string(base.height));
        }
        if (pyr.levels.count(res)) continue;
        Mask lvl = Mask::blank(res, res, 0);
        for (int y = 0; y < res; y++) {
            int y0 = y * base.height / res;
            int y1 = (y + 1) * base.height / res;
            for (int x = 0; x < res; x++) {
                int x0 = x * base.width / res;
                int x1 = (x + 1) * base.width / res;
                uint8_t v = 0;
                for (int by = y0; by < y1 && !v; by++) {
                    for (int bx = x0; bx < x1; bx++) {
                        if (base.at(by, bx)) {
                            v = 1;
                            break;
                        }
                    }
                }
                lvl.at(y, x) = v;
            }
        }
        pyr.levels.emplace(res, std::move(lvl));
    }
    return pyr;
}

Mask dilate(const Mask& mask, int radius_px) {
    if (radius_px < 0) {
        fail(ErrorKind::InvalidArgument, "dilation radius must be non-negative");
    }
    if (radius_px == 0) return mask;
    Mask out = Mask::blank(mask.width, mask.height, 0);
    for (int y = 0; y < mask.height; y++) {
        for (int x = 0; x < mask.width; x++) {
            if (!mask.at(y, x)) continue;
            int y0 = std::max(0, y - radius_px), y1 = std::min(mask.height - 1, y + radius_px);
            int x0 = std::max(0, x - radius_px), x1 = std::min(mask.width - 1, x + radius_px);
            for (int dy = y0; dy <= y1; dy++) {
                for (int dx = x0; dx <= x1; dx++) {
                    out.at(dy, dx) = 1;
                }
            }
        }
    }
    return out;
}

Mask mask_from_image(const Image& img) {
    Mask m = Mask::blank(img.width, img.height, 0);
    for (int y = 0; y < img.height; y++) {
        for (int x = 0; x < img.width; x++) {
            uint8_t v = 0;
            for (int c = 0; c < img.channels; c++) {
                if (img.at(y, x, c)) v = 1;
            }
            m.at(y, x) = v;
        }
    }
    return m;
}

Image mask_to_image(const Mask& mask) {
    Image img = Image::blank(mask.width, mask.height, 1, 0);
    for (size_t i = 0; i < mask.data.size(); i++) {
        img.data[i] = mask.data[i] ? 255 : 0;
    }
    return img;
}

/*------------------------------ clients ------------------------------------*/

namespace {

class ThresholdStubClient : public SegmentationClient {
public:
    explicit ThresholdStubClient(double threshold) : threshold_(threshold) {
        if (threshold < 0.0 || threshold > 1.0) {
            fail(ErrorKind::InvalidArgument, "threshold must lie in [0, 1]");
        }
    }

    std::optional<Mask> segment_person(const Image& img) const override {
        Mask m = Mask::blank(img.width, img.height, 0);
        size_t ones = 0;
        for (int y = 0; y < img.height; y++) {
            for (int x = 0; x < img.width; x++) {
                if (luminance(img, y, x) >= threshold_) {
                    m.at(y, x) = 1;
                    ones++;
                }
            }
        }
        if (ones == 0) return std::nullopt;
        return m;
    }

    std::string name() const override { return "threshold-stub"; }

private:
    double threshold_;
};

class HttpSegmentationClient : public SegmentationClient {
public:
    HttpSegmentationClient(std::string url, int timeout_ms, int retries)
        : url_(std::move(url)), timeout_ms_(timeout_ms), retries_(retries) {}

    std::optional<Mask> segment_person(const Image& img) const override {
        std::vector<uint8_t> png = encode_png(img);
        HttpResponse resp = http_post(url_, "/segment",
                                      std::string(png.begin(), png.end()), "image/png",
                                      timeout_ms_, retries_);
        if (resp.status == 204) return std::nullopt;
        std::vector<uint8_t> bytes(resp.body.begin(), resp.body.end());
        Image mask_img = decode_image(bytes);
        Mask m = mask_from_image(mask_img);
        if (m.empty_mask()) return std::nullopt;
        return m;
    }

    std::string name() const override { return "http:" + url_; }

private:
    std::string url_;
    int timeout_ms_;
    int retries_;
};

}  // namespace

std::unique_ptr<SegmentationClient> make_threshold_stub_client(double threshold) {
    return std::make_unique<ThresholdStubClient>(threshold);
}

std::unique_ptr<SegmentationClient> make_http_segmentation_client(const std::string& url,
                                                                  int timeout_ms, int retries) {
    return std::make_unique<HttpSegmentationClient>(url, timeout_ms, retries);
}

}  // namespace placer
