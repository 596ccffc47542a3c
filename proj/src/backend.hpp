#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "image.hpp"
#include "tensor.hpp"

namespace placer {

enum class Branch { Conditional, Unconditional };

// Text conditioning as produced by a backend's text encoder. The null
// condition (unconditional branch) is a distinct, constructible value.
struct TextCondition {
    std::string prompt_text;
    std::vector<double> embedding;
    bool null_condition = false;

    static TextCondition none() {
        TextCondition c;
        c.null_condition = true;
        return c;
    }
    bool is_null() const { return null_condition; }
};

struct AttentionLayerDesc {
    std::string block;       // e.g. "Mid", "Up-2"
    int layer_index = 0;     // position in the backend's stable layer list
    int resolution = 0;      // square token grid side; tokens == resolution^2
    int head_dim = 0;
};

// Everything a self-attention layer exposes at hook time. Q/K/V are
// row-major (tokens, dim).
struct AttentionState {
    std::vector<double> q, k, v;
    int tokens = 0;
    int dim = 0;
    int layer_index = 0;
    std::string block;
    Branch branch = Branch::Conditional;
    int timestep = 0;
};

// A hook replaces the layer's attention result. It must return a
// (tokens, dim) array; returning plain self-attention of the state leaves
// the backend's output bit-identical to the unhooked run.
using AttentionHook = std::function<std::vector<double>(const AttentionState&)>;

// Noise-prediction backbone. Implementations are deterministic: identical
// inputs give identical outputs, and the layer descriptor list never
// changes after construction. Hooks may only be (un)registered between
// passes, never during a predict call.
class DenoiserBackend {
public:
    virtual ~DenoiserBackend() = default;

    virtual std::string name() const = 0;
    virtual int latent_channels() const = 0;
    virtual int latent_size() const = 0;

    virtual NoisePrediction predict(const LatentTensor& z, int timestep,
                                    const TextCondition& condition) const = 0;

    virtual TextCondition encode_text(const std::string& prompt) const = 0;

    virtual const std::vector<AttentionLayerDesc>& attention_layers() const = 0;
    virtual void set_hook(int layer_index, AttentionHook hook) = 0;
    virtual void clear_hooks() = 0;

    // Fresh instance with identical parameters and no hooks installed.
    virtual std::unique_ptr<DenoiserBackend> clone() const = 0;
};

// Latent <-> image codec. Owns any latent scaling constants.
class ImageCodec {
public:
    virtual ~ImageCodec() = default;
    virtual LatentTensor encode(const Image& img) const = 0;
    virtual Image decode(const LatentTensor& z) const = 0;
    virtual double scale_factor() const { return 1.0; }
};

// Fully analytic test backend. The noise prediction is affine in the
// latent: a small per-element gain plus the output of a three-layer
// self-attention stack over pooled latent tokens (fixed queries/keys, so
// the map stays linear) plus a condition-dependent offset. latent_size
// must be a multiple of 8 and at least 8.
std::unique_ptr<DenoiserBackend> make_toy_backend(uint64_t seed, int latent_size);

// Exact-round-trip codec for the toy backend: 3->4 channel orthonormal
// embedding at image resolution.
std::unique_ptr<ImageCodec> make_toy_codec(uint64_t seed);

// Parameters of the toy backend's affine map, exposed read-only so tests
// can evaluate the dynamics through an independent path.
struct ToyBackendParams {
    int channels = 0;
    int latent_size = 0;
    int pool_factor = 0;
    int layers = 0;
    double elem_gain_scale = 0.0;
    double stack_gain = 0.0;
    double residual_gain = 0.0;
    double cond_offset_scale = 0.0;
    double key_shift_scale = 0.0;
    std::vector<double> elem_gain;                 // per latent element
    std::vector<double> base_offset;               // per latent element
    std::vector<std::vector<double>> layer_q;      // per layer, (tokens, dim)
    std::vector<std::vector<double>> layer_k;      // per layer, (tokens, dim)
    std::vector<std::vector<double>> layer_k_mod;  // per layer, (tokens, dim)
    std::vector<double> cond_matrix;               // channels x embed_dim
    std::vector<double> key_shift_matrix;          // dim x embed_dim
};
const ToyBackendParams& toy_backend_params(const DenoiserBackend& backend);

// Remote backbone speaking a small HTTP protocol (see README); attention
// hooks are not available through it.
struct RemoteBackendConfig {
    std::string url;
    int latent_channels = 4;
    int latent_size = 128;
    int timeout_ms = 30000;
    int retries = 2;
};
std::unique_ptr<DenoiserBackend> make_remote_backend(const RemoteBackendConfig& cfg);
std::unique_ptr<ImageCodec> make_remote_codec(const RemoteBackendConfig& cfg);

// Pass-through wrapper recording every predict call; used by tests and the
// pipeline's instrumentation to assert call budgets.
class InstrumentedBackend : public DenoiserBackend {
public:
    struct CallRecord {
        int timestep;
        bool null_condition;
        std::string prompt;
    };

    explicit InstrumentedBackend(const DenoiserBackend& inner) : inner_(inner.clone()) {}

    std::string name() const override { return inner_->name(); }
    int latent_channels() const override { return inner_->latent_channels(); }
    int latent_size() const override { return inner_->latent_size(); }

    NoisePrediction predict(const LatentTensor& z, int timestep,
                            const TextCondition& condition) const override {
        calls_.push_back({timestep, condition.is_null(), condition.prompt_text});
        return inner_->predict(z, timestep, condition);
    }

    TextCondition encode_text(const std::string& prompt) const override {
        return inner_->encode_text(prompt);
    }
    const std::vector<AttentionLayerDesc>& attention_layers() const override {
        return inner_->attention_layers();
    }
    void set_hook(int layer_index, AttentionHook hook) override {
        inner_->set_hook(layer_index, std::move(hook));
    }
    void clear_hooks() override { inner_->clear_hooks(); }
    std::unique_ptr<DenoiserBackend> clone() const override {
        return std::make_unique<InstrumentedBackend>(*inner_);
    }

    const std::vector<CallRecord>& calls() const { return calls_; }
    void reset_calls() { calls_.clear(); }

private:
    std::unique_ptr<DenoiserBackend> inner_;
    mutable std::vector<CallRecord> calls_;
};

}  // namespace placer
