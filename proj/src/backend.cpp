#include "backend.hpp"

#include <cmath>
#include <random>

#include <nlohmann/json.hpp>

#include "attention.hpp"
#include "errors.hpp"
#include "http_client.hpp"
#include "util.hpp"

namespace placer {

namespace {

constexpr int kToyChannels = 4;
constexpr int kToyPoolFactor = 8;
constexpr int kToyEmbedDim = 8;
constexpr int kToyLayers = 3;

std::vector<double> draw_normal(std::mt19937_64& rng, size_t n, double sigma) {
    std::normal_distribution<double> dist(0.0, sigma);
    std::vector<double> out(n);
    for (auto& v : out) v = dist(rng);
    return out;
}

std::vector<double> draw_uniform(std::mt19937_64& rng, size_t n, double lo, double hi) {
    std::uniform_real_distribution<double> dist(lo, hi);
    std::vector<double> out(n);
    for (auto& v : out) v = dist(rng);
    return out;
}

/*------------------------------- toy backend --------------------------------*/

class ToyBackend : public DenoiserBackend {
public:
    ToyBackend(uint64_t seed, int latent_size) : seed_(seed) {
        if (latent_size < 8 || latent_size % kToyPoolFactor != 0) {
            fail(ErrorKind::InvalidArgument,
                 "toy backend latent_size must be a multiple of 8 and at least 8");
        }
        params_.channels = kToyChannels;
        params_.latent_size = latent_size;
        params_.pool_factor = kToyPoolFactor;
        params_.layers = kToyLayers;
        params_.elem_gain_scale = 0.02;
        params_.stack_gain = 0.01;
        params_.residual_gain = 0.2;
        params_.cond_offset_scale = 0.15;
        params_.key_shift_scale = 0.1;

        const int res = latent_size / kToyPoolFactor;
        const size_t tokens = static_cast<size_t>(res) * res;
        const size_t elems = static_cast<size_t>(kToyChannels) * latent_size * latent_size;

        std::mt19937_64 rng(seed);
        params_.elem_gain =
            draw_uniform(rng, elems, -params_.elem_gain_scale, params_.elem_gain_scale);
        params_.base_offset = draw_normal(rng, elems, 0.05);
        for (int l = 0; l < kToyLayers; l++) {
            params_.layer_q.push_back(draw_normal(rng, tokens * kToyChannels, 1.0));
            params_.layer_k.push_back(draw_normal(rng, tokens * kToyChannels, 1.0));
            params_.layer_k_mod.push_back(draw_normal(rng, tokens * kToyChannels, 0.3));
        }
        params_.cond_matrix = draw_normal(rng, static_cast<size_t>(kToyChannels) * kToyEmbedDim, 1.0);
        params_.key_shift_matrix =
            draw_normal(rng, static_cast<size_t>(kToyChannels) * kToyEmbedDim, 1.0);

        const char* blocks[kToyLayers] = {"Mid", "Up-2", "Up-3"};
        for (int l = 0; l < kToyLayers; l++) {
            layers_.push_back({blocks[l], l, res, kToyChannels});
        }
    }

    std::string name() const override { return "toy"; }
    int latent_channels() const override { return kToyChannels; }
    int latent_size() const override { return params_.latent_size; }

    NoisePrediction predict(const LatentTensor& z, int timestep,
                            const TextCondition& condition) const override {
        if (z.channels != kToyChannels || z.height != params_.latent_size ||
            z.width != params_.latent_size) {
            fail(ErrorKind::Shape, "latent shape does not match the toy backend");
        }
        if (timestep < 0) {
            fail(ErrorKind::InvalidArgument, "timestep must be non-negative");
        }

        std::vector<double> cond_offset(kToyChannels, 0.0);
        std::vector<double> key_shift(kToyChannels, 0.0);
        if (!condition.is_null()) {
            for (int c = 0; c < kToyChannels; c++) {
                double oc = 0.0, kc = 0.0;
                for (int j = 0; j < kToyEmbedDim; j++) {
                    double e = j < static_cast<int>(condition.embedding.size())
                                   ? condition.embedding[static_cast<size_t>(j)]
                                   : 0.0;
                    oc += params_.cond_matrix[static_cast<size_t>(c) * kToyEmbedDim + j] * e;
                    kc += params_.key_shift_matrix[static_cast<size_t>(c) * kToyEmbedDim + j] * e;
                }
                cond_offset[static_cast<size_t>(c)] = params_.cond_offset_scale * oc;
                key_shift[static_cast<size_t>(c)] = params_.key_shift_scale * kc;
            }
        }

        const int L = params_.latent_size;
        const int res = L / kToyPoolFactor;
        const int tokens = res * res;
        const double tau = std::sin(M_PI * timestep / 1000.0);

        // pooled tokens, row-major (token, channel)
        std::vector<double> h(static_cast<size_t>(tokens) * kToyChannels, 0.0);
        const double inv_block = 1.0 / (kToyPoolFactor * kToyPoolFactor);
        for (int ty = 0; ty < res; ty++) {
            for (int tx = 0; tx < res; tx++) {
                for (int c = 0; c < kToyChannels; c++) {
                    double acc = 0.0;
                    for (int dy = 0; dy < kToyPoolFactor; dy++) {
                        for (int dx = 0; dx < kToyPoolFactor; dx++) {
                            acc += z.at(c, ty * kToyPoolFactor + dy, tx * kToyPoolFactor + dx);
                        }
                    }
                    h[(static_cast<size_t>(ty) * res + tx) * kToyChannels + c] = acc * inv_block;
                }
            }
        }

        Branch branch = condition.is_null() ? Branch::Unconditional : Branch::Conditional;
        for (int l = 0; l < kToyLayers; l++) {
            AttentionState state;
            state.tokens = tokens;
            state.dim = kToyChannels;
            state.layer_index = l;
            state.block = layers_[static_cast<size_t>(l)].block;
            state.branch = branch;
            state.timestep = timestep;
            state.q = params_.layer_q[static_cast<size_t>(l)];
            state.k.resize(static_cast<size_t>(tokens) * kToyChannels);
            for (int i = 0; i < tokens; i++) {
                for (int c = 0; c < kToyChannels; c++) {
                    size_t idx = static_cast<size_t>(i) * kToyChannels + c;
                    state.k[idx] = params_.layer_k[static_cast<size_t>(l)][idx] +
                                   tau * params_.layer_k_mod[static_cast<size_t>(l)][idx] +
                                   key_shift[static_cast<size_t>(c)];
                }
            }
            state.v = h;

            std::vector<double> out;
            auto it = hooks_.find(l);
            if (it != hooks_.end()) {
                out = it->second(state);
                if (out.size() != static_cast<size_t>(tokens) * kToyChannels) {
                    fail(ErrorKind::Shape, "attention hook returned a wrong-sized output");
                }
            } else {
                out = self_attention(state);
            }
            for (size_t i = 0; i < h.size(); i++) {
                h[i] += params_.residual_gain * out[i];
            }
        }

        NoisePrediction eps = NoisePrediction::zeros_like(z);
        for (int c = 0; c < kToyChannels; c++) {
            for (int y = 0; y < L; y++) {
                for (int x = 0; x < L; x++) {
                    size_t e = (static_cast<size_t>(c) * L + y) * L + x;
                    size_t token = static_cast<size_t>(y / kToyPoolFactor) * res + (x / kToyPoolFactor);
                    eps.data[e] = params_.elem_gain[e] * z.data[e] +
                                  params_.stack_gain * h[token * kToyChannels + c] +
                                  params_.base_offset[e] + cond_offset[static_cast<size_t>(c)];
                }
            }
        }
        return eps;
    }

    TextCondition encode_text(const std::string& prompt) const override {
        TextCondition cond;
        cond.prompt_text = prompt;
        std::mt19937_64 rng(fnv1a64(prompt) ^ (seed_ * 0x9e3779b97f4a7c15ULL));
        std::normal_distribution<double> dist(0.0, 1.0);
        cond.embedding.resize(kToyEmbedDim);
        for (auto& v : cond.embedding) v = dist(rng);
        return cond;
    }

    const std::vector<AttentionLayerDesc>& attention_layers() const override { return layers_; }

    void set_hook(int layer_index, AttentionHook hook) override {
        if (layer_index < 0 || layer_index >= kToyLayers) {
            fail(ErrorKind::InvalidArgument,
                 "layer index " + std::to_string(layer_index) + " out of range");
        }
        hooks_[layer_index] = std::move(hook);
    }

    void clear_hooks() override { hooks_.clear(); }

    std::unique_ptr<DenoiserBackend> clone() const override {
        auto copy = std::make_unique<ToyBackend>(*this);
        copy->hooks_.clear();
        return copy;
    }

    const ToyBackendParams& params() const { return params_; }

private:
    uint64_t seed_;
    ToyBackendParams params_;
    std::vector<AttentionLayerDesc> layers_;
    std::map<int, AttentionHook> hooks_;
};

/*-------------------------------- toy codec ---------------------------------*/

class ToyCodec : public ImageCodec {
public:
    explicit ToyCodec(uint64_t seed) {
        std::mt19937_64 rng(seed ^ 0x5bd1e995u);
        // orthonormal 4x3 embedding via Gram-Schmidt on random columns
        double cols[4][4];
        std::normal_distribution<double> dist(0.0, 1.0);
        for (auto& col : cols) {
            for (double& v : col) v = dist(rng);
        }
        for (int j = 0; j < 4; j++) {
            for (int p = 0; p < j; p++) {
                double dot = 0.0;
                for (int c = 0; c < 4; c++) dot += cols[j][c] * cols[p][c];
                for (int c = 0; c < 4; c++) cols[j][c] -= dot * cols[p][c];
            }
            double norm = 0.0;
            for (int c = 0; c < 4; c++) norm += cols[j][c] * cols[j][c];
            norm = std::sqrt(norm);
            for (int c = 0; c < 4; c++) cols[j][c] /= norm;
        }
        for (int c = 0; c < 4; c++) {
            for (int j = 0; j < 3; j++) embed_[c][j] = cols[j][c];
            offset_[c] = 0.05 * dist(rng);
        }
    }

    LatentTensor encode(const Image& img) const override {
        if (img.channels != 1 && img.channels != 3) {
            fail(ErrorKind::InvalidArgument, "codec expects a gray or RGB image");
        }
        LatentTensor z = LatentTensor::zeros(4, img.height, img.width, 0);
        for (int y = 0; y < img.height; y++) {
            for (int x = 0; x < img.width; x++) {
                double rgb[3];
                for (int j = 0; j < 3; j++) {
                    uint8_t v = img.channels == 1 ? img.at(y, x, 0) : img.at(y, x, j);
                    rgb[j] = (v - 127.5) / 127.5;
                }
                for (int c = 0; c < 4; c++) {
                    double acc = offset_[c];
                    for (int j = 0; j < 3; j++) acc += embed_[c][j] * rgb[j];
                    z.at(c, y, x) = acc;
                }
            }
        }
        return z;
    }

    Image decode(const LatentTensor& z) const override {
        if (z.channels != 4) {
            fail(ErrorKind::Shape, "toy codec decodes 4-channel latents");
        }
        Image img = Image::blank(z.width, z.height, 3);
        for (int y = 0; y < z.height; y++) {
            for (int x = 0; x < z.width; x++) {
                for (int j = 0; j < 3; j++) {
                    double acc = 0.0;
                    for (int c = 0; c < 4; c++) acc += embed_[c][j] * (z.at(c, y, x) - offset_[c]);
                    long v = std::lround(acc * 127.5 + 127.5);
                    img.at(y, x, j) = static_cast<uint8_t>(std::clamp(v, 0L, 255L));
                }
            }
        }
        return img;
    }

private:
    double embed_[4][3];
    double offset_[4];
};

/*------------------------------ remote backend ------------------------------*/

// SDXL-class attention layout: 70 layers grouped by block, resolutions as
// in the published architecture (32 or 64 tokens per side).
std::vector<AttentionLayerDesc> sdxl_class_layers() {
    struct Group {
        const char* block;
        int count;
        int resolution;
    };
    static const Group groups[] = {
        {"Down-1", 4, 64}, {"Down-2", 20, 32}, {"Mid", 10, 32},
        {"Up-1", 10, 32},  {"Up-2", 10, 32},   {"Up-3", 10, 32},
        {"Up-4", 2, 64},   {"Up-5", 2, 64},    {"Up-6", 2, 64},
    };
    std::vector<AttentionLayerDesc> layers;
    int index = 0;
    for (const auto& g : groups) {
        for (int i = 0; i < g.count; i++) {
            layers.push_back({g.block, index++, g.resolution, 64});
        }
    }
    return layers;
}

class RemoteBackend : public DenoiserBackend {
public:
    explicit RemoteBackend(RemoteBackendConfig cfg)
        : cfg_(std::move(cfg)), layers_(sdxl_class_layers()) {
        if (cfg_.url.empty()) {
            fail(ErrorKind::Config, "sdxl-class backend requires a backend_url");
        }
    }

    std::string name() const override { return "sdxl-class"; }
    int latent_channels() const override { return cfg_.latent_channels; }
    int latent_size() const override { return cfg_.latent_size; }

    NoisePrediction predict(const LatentTensor& z, int timestep,
                            const TextCondition& condition) const override {
        nlohmann::json req{{"latent", z.data},          {"channels", z.channels},
                           {"height", z.height},        {"width", z.width},
                           {"timestep", timestep},      {"prompt", condition.prompt_text},
                           {"unconditional", condition.is_null()}};
        HttpResponse resp = http_post(cfg_.url, "/predict", req.dump(), "application/json",
                                      cfg_.timeout_ms, cfg_.retries);
        auto body = nlohmann::json::parse(resp.body, nullptr, false);
        if (body.is_discarded() || !body.contains("eps")) {
            fail(ErrorKind::Transport, "backend /predict returned malformed JSON");
        }
        NoisePrediction eps = NoisePrediction::zeros_like(z);
        auto values = body["eps"].get<std::vector<double>>();
        if (values.size() != eps.data.size()) {
            fail(ErrorKind::Shape, "backend /predict returned wrong element count");
        }
        eps.data = std::move(values);
        return eps;
    }

    TextCondition encode_text(const std::string& prompt) const override {
        nlohmann::json req{{"prompt", prompt}};
        HttpResponse resp = http_post(cfg_.url, "/encode_text", req.dump(), "application/json",
                                      cfg_.timeout_ms, cfg_.retries);
        auto body = nlohmann::json::parse(resp.body, nullptr, false);
        if (body.is_discarded() || !body.contains("embedding")) {
            fail(ErrorKind::Transport, "backend /encode_text returned malformed JSON");
        }
        TextCondition cond;
        cond.prompt_text = prompt;
        cond.embedding = body["embedding"].get<std::vector<double>>();
        return cond;
    }

    const std::vector<AttentionLayerDesc>& attention_layers() const override { return layers_; }

    void set_hook(int, AttentionHook) override {
        fail(ErrorKind::Unsupported,
             "the sdxl-class backend does not expose attention hooks; "
             "run with personalization disabled");
    }

    void clear_hooks() override {}

    std::unique_ptr<DenoiserBackend> clone() const override {
        return std::make_unique<RemoteBackend>(cfg_);
    }

private:
    RemoteBackendConfig cfg_;
    std::vector<AttentionLayerDesc> layers_;
};

class RemoteCodec : public ImageCodec {
public:
    explicit RemoteCodec(RemoteBackendConfig cfg) : cfg_(std::move(cfg)) {}

    LatentTensor encode(const Image& img) const override {
        std::vector<uint8_t> png = encode_png(img);
        HttpResponse resp = http_post(cfg_.url, "/encode", std::string(png.begin(), png.end()),
                                      "image/png", cfg_.timeout_ms, cfg_.retries);
        auto body = nlohmann::json::parse(resp.body, nullptr, false);
        if (body.is_discarded() || !body.contains("latent")) {
            fail(ErrorKind::Transport, "codec /encode returned malformed JSON");
        }
        LatentTensor z = LatentTensor::zeros(body.value("channels", cfg_.latent_channels),
                                             body.value("height", cfg_.latent_size),
                                             body.value("width", cfg_.latent_size), 0);
        auto values = body["latent"].get<std::vector<double>>();
        if (values.size() != z.data.size()) {
            fail(ErrorKind::Shape, "codec /encode returned wrong element count");
        }
        z.data = std::move(values);
        return z;
    }

    Image decode(const LatentTensor& z) const override {
        nlohmann::json req{{"latent", z.data},
                           {"channels", z.channels},
                           {"height", z.height},
                           {"width", z.width}};
        HttpResponse resp = http_post(cfg_.url, "/decode", req.dump(), "application/json",
                                      cfg_.timeout_ms, cfg_.retries);
        std::vector<uint8_t> bytes(resp.body.begin(), resp.body.end());
        return decode_image(bytes);
    }

private:
    RemoteBackendConfig cfg_;
};

}  // namespace

std::unique_ptr<DenoiserBackend> make_toy_backend(uint64_t seed, int latent_size) {
    return std::make_unique<ToyBackend>(seed, latent_size);
}

std::unique_ptr<ImageCodec> make_toy_codec(uint64_t seed) {
    return std::make_unique<ToyCodec>(seed);
}

const ToyBackendParams& toy_backend_params(const DenoiserBackend& backend) {
    const auto* toy = dynamic_cast<const ToyBackend*>(&backend);
    if (!toy) {
        fail(ErrorKind::InvalidArgument, "backend is not the toy backend");
    }
    return toy->params();
}

std::unique_ptr<DenoiserBackend> make_remote_backend(const RemoteBackendConfig& cfg) {
    return std::make_unique<RemoteBackend>(cfg);
}

std::unique_ptr<ImageCodec> make_remote_codec(const RemoteBackendConfig& cfg) {
    return std::make_unique<RemoteCodec>(cfg);
}

}  // namespace placer
