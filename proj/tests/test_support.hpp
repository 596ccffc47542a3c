#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "backend.hpp"
#include "image.hpp"
#include "masks.hpp"
#include "tensor.hpp"

namespace placer::test {

inline LatentTensor random_latent(std::mt19937_64& rng, int channels, int size, int timestep,
                                  double sigma = 1.0) {
    LatentTensor z = LatentTensor::zeros(channels, size, size, timestep);
    std::normal_distribution<double> dist(0.0, sigma);
    for (auto& v : z.data) v = dist(rng);
    return z;
}

// scene card: dark background with a bright square, so the threshold stub
// always finds a "person" region in decoded outputs
inline Image scene_card(int size, int square = 0) {
    if (square == 0) square = size / 4;
    Image img = Image::blank(size, size, 3, 40);
    int off = size / 8;
    for (int y = off; y < off + square; y++) {
        for (int x = off; x < off + square; x++) {
            img.at(y, x, 0) = 230;
            img.at(y, x, 1) = 225;
            img.at(y, x, 2) = 235;
        }
    }
    return img;
}

// reference card: bright figure on mid background
inline Image reference_card(int size) {
    Image img = Image::blank(size, size, 3, 70);
    int w = size / 5;
    for (int y = size / 4; y < size - size / 8; y++) {
        for (int x = size / 2 - w / 2; x < size / 2 + w / 2; x++) {
            img.at(y, x, 0) = 240;
            img.at(y, x, 1) = 210;
            img.at(y, x, 2) = 200;
        }
    }
    return img;
}

inline Image black_card(int size) { return Image::blank(size, size, 3, 0); }

inline Mask random_mask(std::mt19937_64& rng, int size, double density = 0.3) {
    Mask m = Mask::blank(size, size, 0);
    std::bernoulli_distribution coin(density);
    for (auto& v : m.data) v = coin(rng) ? 1 : 0;
    return m;
}

// Independent evaluation of the toy backend's prediction from its published
// parameters; shares no code with the backend's predict path.
inline std::vector<double> toy_prediction_oracle(const ToyBackendParams& P,
                                                 const std::vector<double>& z, int timestep,
                                                 const std::vector<double>& cond_embedding,
                                                 bool null_condition) {
    const int L = P.latent_size, C = P.channels, F = P.pool_factor;
    const int res = L / F;
    const int N = res * res;

    std::vector<double> cond_off(static_cast<size_t>(C), 0.0);
    std::vector<double> key_shift(static_cast<size_t>(C), 0.0);
    if (!null_condition) {
        for (int c = 0; c < C; c++) {
            double a = 0.0, b = 0.0;
            for (int j = 0; j < 8; j++) {
                double e = j < static_cast<int>(cond_embedding.size()) ? cond_embedding[j] : 0.0;
                a += P.cond_matrix[static_cast<size_t>(c) * 8 + j] * e;
                b += P.key_shift_matrix[static_cast<size_t>(c) * 8 + j] * e;
            }
            cond_off[static_cast<size_t>(c)] = P.cond_offset_scale * a;
            key_shift[static_cast<size_t>(c)] = P.key_shift_scale * b;
        }
    }
    const double tau = std::sin(M_PI * timestep / 1000.0);

    std::vector<double> h(static_cast<size_t>(N) * C, 0.0);
    for (int ty = 0; ty < res; ty++) {
        for (int tx = 0; tx < res; tx++) {
            for (int c = 0; c < C; c++) {
                double acc = 0.0;
                for (int dy = 0; dy < F; dy++) {
                    for (int dx = 0; dx < F; dx++) {
                        size_t idx = (static_cast<size_t>(c) * L + ty * F + dy) * L + tx * F + dx;
                        acc += z[idx];
                    }
                }
                h[(static_cast<size_t>(ty) * res + tx) * C + c] = acc / (F * F);
            }
        }
    }

    for (int l = 0; l < P.layers; l++) {
        std::vector<double> k(static_cast<size_t>(N) * C);
        for (int i = 0; i < N; i++) {
            for (int c = 0; c < C; c++) {
                size_t idx = static_cast<size_t>(i) * C + c;
                k[idx] = P.layer_k[static_cast<size_t>(l)][idx] +
                         tau * P.layer_k_mod[static_cast<size_t>(l)][idx] +
                         key_shift[static_cast<size_t>(c)];
            }
        }
        std::vector<double> out(static_cast<size_t>(N) * C, 0.0);
        for (int i = 0; i < N; i++) {
            std::vector<double> logits(static_cast<size_t>(N));
            double mx = -1e300;
            for (int j = 0; j < N; j++) {
                double dot = 0.0;
                for (int c = 0; c < C; c++) {
                    dot += P.layer_q[static_cast<size_t>(l)][static_cast<size_t>(i) * C + c] *
                           k[static_cast<size_t>(j) * C + c];
                }
                logits[static_cast<size_t>(j)] = dot / std::sqrt(static_cast<double>(C));
                mx = std::max(mx, logits[static_cast<size_t>(j)]);
            }
            double denom = 0.0;
            for (int j = 0; j < N; j++) {
                logits[static_cast<size_t>(j)] = std::exp(logits[static_cast<size_t>(j)] - mx);
                denom += logits[static_cast<size_t>(j)];
            }
            for (int j = 0; j < N; j++) {
                double w = logits[static_cast<size_t>(j)] / denom;
                for (int c = 0; c < C; c++) {
                    out[static_cast<size_t>(i) * C + c] += w * h[static_cast<size_t>(j) * C + c];
                }
            }
        }
        for (size_t i = 0; i < h.size(); i++) h[i] += P.residual_gain * out[i];
    }

    std::vector<double> eps(z.size());
    for (int c = 0; c < C; c++) {
        for (int y = 0; y < L; y++) {
            for (int x = 0; x < L; x++) {
                size_t e = (static_cast<size_t>(c) * L + y) * L + x;
                size_t token = static_cast<size_t>(y / F) * res + (x / F);
                eps[e] = P.elem_gain[e] * z[e] + P.stack_gain * h[token * static_cast<size_t>(C) + c] +
                         P.base_offset[e] + cond_off[static_cast<size_t>(c)];
            }
        }
    }
    return eps;
}

}  // namespace placer::test
