#pragma once

#include <cstddef>
#include <vector>

namespace placer {

// Latent-space array at a diffusion timestep. Layout is channel-major:
// data[c * height * width + y * width + x].
struct LatentTensor {
    int channels = 0;
    int height = 0;
    int width = 0;
    int timestep = 0;
    std::vector<double> data;

    static LatentTensor zeros(int channels, int height, int width, int timestep);

    size_t size() const { return data.size(); }
    bool same_shape(const LatentTensor& other) const {
        return channels == other.channels && height == other.height && width == other.width;
    }
    double& at(int c, int y, int x) { return data[(static_cast<size_t>(c) * height + y) * width + x]; }
    double at(int c, int y, int x) const { return data[(static_cast<size_t>(c) * height + y) * width + x]; }

    bool all_finite() const;
};

// Predicted noise for one latent; always carries the latent's shape.
struct NoisePrediction {
    int channels = 0;
    int height = 0;
    int width = 0;
    std::vector<double> data;

    static NoisePrediction zeros_like(const LatentTensor& z);

    size_t size() const { return data.size(); }
    bool matches(const LatentTensor& z) const {
        return channels == z.channels && height == z.height && width == z.width &&
               data.size() == z.data.size();
    }
    bool all_finite() const;
};

double l2_norm(const std::vector<double>& v);
double relative_l2_error(const std::vector<double>& a, const std::vector<double>& b);
double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace placer
