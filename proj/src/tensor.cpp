#include "tensor.hpp"

#include <cmath>

#include "errors.hpp"

namespace placer {

LatentTensor LatentTensor::zeros(int channels, int height, int width, int timestep) {
    if (channels <= 0 || height <= 0 || width <= 0) {
        fail(ErrorKind::Shape, "latent dimensions must be positive");
    }
    LatentTensor z;
    z.channels = channels;
    z.height = height;
    z.width = width;
    z.timestep = timestep;
    z.data.assign(static_cast<size_t>(channels) * height * width, 0.0);
    return z;
}

bool LatentTensor::all_finite() const {
    for (double v : data) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

NoisePrediction NoisePrediction::zeros_like(const LatentTensor& z) {
    NoisePrediction eps;
    eps.channels = z.channels;
    eps.height = z.height;
    eps.width = z.width;
    eps.data.assign(z.data.size(), 0.0);
    return eps;
}

bool NoisePrediction::all_finite() const {
    for (double v : data) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

double l2_norm(const std::vector<double>& v) {
    double acc = 0.0;
    for (double x : v) acc += x * x;
    return std::sqrt(acc);
}

double relative_l2_error(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) {
        fail(ErrorKind::Shape, "relative_l2_error: size mismatch");
    }
    double num = 0.0, den = 0.0;
    for (size_t i = 0; i < a.size(); i++) {
        double d = a[i] - b[i];
        num += d * d;
        den += b[i] * b[i];
    }
    if (den == 0.0) return num == 0.0 ? 0.0 : std::sqrt(num);
    return std::sqrt(num / den);
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) {
        fail(ErrorKind::Shape, "max_abs_diff: size mismatch");
    }
    double m = 0.0;
    for (size_t i = 0; i < a.size(); i++) {
        double d = std::fabs(a[i] - b[i]);
        if (d > m) m = d;
    }
    return m;
}

}  // namespace placer
