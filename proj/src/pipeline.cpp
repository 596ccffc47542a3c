#include "pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <set>

#include <nlohmann/json.hpp>

#include "errors.hpp"
#include "util.hpp"

namespace placer {

namespace {

const char* kPersonPhrase = "a person";

std::string weight_label(double w) {
    char buf[32];
    snprintf(buf, sizeof(buf), "w=%g", w);
    return std::string(buf);
}

}  // namespace

std::string PromptPair::substituted_prompt() const {
    size_t pos = find_ci(scene_prompt, kPersonPhrase);
    if (pos == std::string::npos) {
        return subject_prompt + ", " + scene_prompt;
    }
    std::string out = scene_prompt;
    out.replace(pos, std::string(kPersonPhrase).size(), subject_prompt);
    return out;
}

bool PromptPair::substitution_is_fallback() const {
    return find_ci(scene_prompt, kPersonPhrase) == std::string::npos;
}

void PipelineConfig::validate() const {
    if (guidance_weight < 0.0) fail(ErrorKind::Config, "guidance_weight must be >= 0");
    if (num_steps < 1) fail(ErrorKind::Config, "num_steps must be >= 1");
    if (renoise_iterations < 0) fail(ErrorKind::Config, "renoise_iterations must be >= 0");
    if (blending.window_lo < 0 || blending.window_lo > blending.window_hi ||
        blending.window_hi > num_steps) {
        fail(ErrorKind::Config, "blending window must satisfy 0 <= lo <= hi <= num_steps");
    }
    if (dilation_radius < 0) fail(ErrorKind::Config, "dilation_radius must be >= 0");
    if (reference_scale <= 0.0) fail(ErrorKind::Config, "reference_scale must be > 0");
}

namespace {

// delegating wrapper counting predict calls for the log/instrumentation
class CountingShim : public DenoiserBackend {
public:
    explicit CountingShim(DenoiserBackend& target) : target_(target) {}

    std::string name() const override { return target_.name(); }
    int latent_channels() const override { return target_.latent_channels(); }
    int latent_size() const override { return target_.latent_size(); }
    NoisePrediction predict(const LatentTensor& z, int timestep,
                            const TextCondition& condition) const override {
        count_++;
        return target_.predict(z, timestep, condition);
    }
    TextCondition encode_text(const std::string& prompt) const override {
        return target_.encode_text(prompt);
    }
    const std::vector<AttentionLayerDesc>& attention_layers() const override {
        return target_.attention_layers();
    }
    void set_hook(int layer_index, AttentionHook hook) override {
        target_.set_hook(layer_index, std::move(hook));
    }
    void clear_hooks() override { target_.clear_hooks(); }
    std::unique_ptr<DenoiserBackend> clone() const override { return target_.clone(); }

    int count() const { return count_; }

private:
    DenoiserBackend& target_;
    mutable int count_ = 0;
};

struct HookGuard {
    DenoiserBackend* backend;
    ~HookGuard() {
        if (backend) backend->clear_hooks();
    }
};

void log_event(GenerationResult& result, std::string level, std::string event,
               std::map<std::string, std::string> fields = {}) {
    result.events.push_back({std::move(level), std::move(event), std::move(fields)});
}

void warn(GenerationResult& result, const std::string& message) {
    result.warnings.push_back(message);
    log_event(result, "warning", "warning", {{"message", message}});
}

void check_image(const Image& img, const DenoiserBackend& backend, const char* which) {
    if (img.empty()) {
        fail(ErrorKind::InvalidArgument, std::string(which) + " image is empty");
    }
    if (img.width != img.height || img.width != backend.latent_size()) {
        fail(ErrorKind::InvalidArgument,
             std::string(which) + " image must be square at the backend's latent size (" +
                 std::to_string(backend.latent_size()) + ")");
    }
}

Trajectory invert_with_cache(const Image& img, const TextCondition& cond,
                             const DenoiserBackend& backend, const ImageCodec& codec,
                             const SchedulerState& sched, const InversionConfig& icfg,
                             const std::string& cache_dir, GenerationResult& result,
                             const char* which) {
    if (!cache_dir.empty()) {
        ensure_directory(cache_dir);
        std::string key = trajectory_cache_key(img, cond.prompt_text, sched, icfg, backend.name());
        std::string path = cache_dir + "/" + key + ".traj";
        if (file_exists(path)) {
            auto cached = load_trajectory(path, sched, cond);
            if (cached) {
                log_event(result, "info", "inversion_cache_hit", {{"image", which}, {"key", key}});
                return std::move(*cached);
            }
        }
        Trajectory traj = invert_image(img, cond, backend, codec, sched, icfg);
        save_trajectory(path, traj, sched);
        log_event(result, "info", "inversion_done", {{"image", which}, {"cached", "true"}});
        return traj;
    }
    Trajectory traj = invert_image(img, cond, backend, codec, sched, icfg);
    log_event(result, "info", "inversion_done", {{"image", which}});
    return traj;
}

std::string join_ints(const std::vector<int>& v) {
    std::string out;
    for (size_t i = 0; i < v.size(); i++) {
        if (i) out += ",";
        out += std::to_string(v[i]);
    }
    return out;
}

}  // namespace

GenerationResult run(const Image& scene, const Image& reference, const PromptPair& prompts,
                     const PipelineConfig& cfg, DenoiserBackend& raw_backend,
                     const ImageCodec& codec, const SegmentationClient& seg,
                     PipelineContext* ctx) {
    cfg.validate();
    if (prompts.scene_prompt.empty() || prompts.subject_prompt.empty()) {
        fail(ErrorKind::InvalidArgument, "scene and subject prompts must be non-empty");
    }
    CountingShim backend(raw_backend);
    check_image(scene, backend, "scene");
    check_image(reference, backend, "reference");

    GenerationResult result;
    SchedulerState sched = SchedulerState::ddim(cfg.num_steps, cfg.training_timesteps);

    const std::string substituted = prompts.substituted_prompt();
    if (prompts.substitution_is_fallback()) {
        warn(result, "scene prompt does not contain \"a person\"; "
                     "prepending the subject description instead");
    }
    const std::string scene_inv_prompt =
        cfg.scene_inversion_prompt.empty() ? substituted : cfg.scene_inversion_prompt;
    const std::string ref_inv_prompt =
        cfg.reference_inversion_prompt.empty() ? prompts.subject_prompt
                                               : cfg.reference_inversion_prompt;

    log_event(result, "info", "run_start",
              {{"scene_prompt", prompts.scene_prompt},
               {"subject_prompt", prompts.subject_prompt},
               {"substituted_prompt", substituted}});

    // step 1: dual inversion, plain conditional predictions only
    InversionConfig icfg;
    icfg.renoise_iterations = cfg.renoise_iterations;

    Trajectory scene_traj;
    if (ctx && ctx->scene_trajectory) {
        scene_traj = *ctx->scene_trajectory;
    } else {
        TextCondition scene_cond = backend.encode_text(scene_inv_prompt);
        scene_traj = invert_with_cache(scene, scene_cond, backend, codec, sched, icfg,
                                       cfg.trajectory_cache_dir, result, "scene");
        if (ctx) ctx->scene_trajectory = scene_traj;
    }

    Image ref_img = scale_content(reference, cfg.reference_scale);
    Trajectory ref_traj;
    if (ctx && ctx->reference_trajectory) {
        ref_traj = *ctx->reference_trajectory;
    } else {
        TextCondition ref_cond = backend.encode_text(ref_inv_prompt);
        ref_traj = invert_with_cache(ref_img, ref_cond, backend, codec, sched, icfg,
                                     cfg.trajectory_cache_dir, result, "reference");
        if (ctx) ctx->reference_trajectory = ref_traj;
    }
    result.inversion_predictions = backend.count();

    // step 2: affordance pass under the generic scene prompt, no blending,
    // no personalization; it only locates the person
    GuidanceConfig gcfg1;
    gcfg1.weight = cfg.guidance_weight;
    gcfg1.conditional = backend.encode_text(prompts.scene_prompt);

    Trajectory pass1 = sample(scene_traj.zT(), gcfg1, backend, sched);
    Image first_img = codec.decode(pass1.latents.back());
    std::optional<Mask> person = seg.segment_person(first_img);
    double weight_used = cfg.guidance_weight;
    if (!person) {
        weight_used = cfg.guidance_weight + cfg.retry_guidance_bump;
        warn(result, "no person detected in the first pass; retrying with guidance weight " +
                         format_double(weight_used));
        gcfg1.weight = weight_used;
        pass1 = sample(scene_traj.zT(), gcfg1, backend, sched);
        first_img = codec.decode(pass1.latents.back());
        person = seg.segment_person(first_img);
        if (!person) {
            fail(ErrorKind::InsertionFailure,
                 "no person detected after retrying with a higher guidance weight");
        }
    }
    result.first_pass_image = first_img;
    result.first_pass_weight_used = weight_used;
    result.first_pass_predictions = backend.count() - result.inversion_predictions;
    log_event(result, "info", "first_pass_done",
              {{"weight", format_double(weight_used)},
               {"predictions", std::to_string(result.first_pass_predictions)},
               {"mask_pixels", std::to_string(person->count_ones())}});

    // mask pyramids at the latent grid plus every targeted attention grid
    std::vector<int> resolutions{backend.latent_size()};
    for (const auto& desc : backend.attention_layers()) {
        if (cfg.personalization.target_blocks.count(desc.block)) {
            resolutions.push_back(desc.resolution);
        }
    }
    result.person_mask = build_pyramid(*person, resolutions);
    Mask fg = dilate(*person, cfg.dilation_radius);
    result.blend_mask = build_pyramid(fg, resolutions);

    // step 3: second pass with blending and mask-guided self-attention
    bool personalize = cfg.personalization.enabled;
    std::shared_ptr<AttentionKVCache> cache;
    std::unique_ptr<AttentionController> attn_ctl;
    if (personalize) {
        std::optional<Mask> subject = seg.segment_person(ref_img);
        if (!subject) {
            warn(result, "personalization disabled: no subject found in the reference image");
            personalize = false;
        } else {
            result.reference_subject_mask = subject;
            try {
                MaskPyramid subject_pyr = build_pyramid(*subject, resolutions);
                cache = std::make_shared<AttentionKVCache>();
                auto replay = std::make_unique<ReferenceReplay>(ref_traj, subject_pyr, backend,
                                                                sched, cfg.personalization);
                if (cfg.precompute_reference_kv) {
                    replay->fill_all(*cache);
                    result.reference_predictions = replay->steps_taken();
                    replay.reset();
                }
                attn_ctl = std::make_unique<AttentionController>(cache, cfg.personalization,
                                                                 std::move(replay));
                attn_ctl->enable_mass_tracking(cfg.track_attention_mass);
            } catch (const Error& e) {
                if (e.kind() != ErrorKind::DegenerateMask) throw;
                warn(result, std::string("personalization disabled: ") + e.what());
                personalize = false;
                attn_ctl.reset();
            }
        }
    }
    result.personalization_active = personalize;

    GuidanceConfig gcfg2;
    gcfg2.weight = cfg.second_pass_guidance_weight >= 0.0 ? cfg.second_pass_guidance_weight
                                                          : weight_used;
    gcfg2.conditional = backend.encode_text(substituted);
    result.second_pass_weight_used = gcfg2.weight;

    BlendingContext blend_ctx;
    blend_ctx.scene_traj = &scene_traj;
    blend_ctx.fg_mask = &result.blend_mask;
    blend_ctx.cfg = cfg.blending;

    int before_pass2 = backend.count();
    HookGuard guard{personalize ? &backend : nullptr};
    if (personalize) {
        attn_ctl->install(backend);
    }
    Trajectory pass2 = sample(scene_traj.zT(), gcfg2, backend, sched, &blend_ctx,
                              personalize ? attn_ctl.get() : nullptr);
    if (personalize) {
        backend.clear_hooks();
        if (!cfg.precompute_reference_kv) {
            result.reference_predictions = attn_ctl->replay_steps();
        }
    }
    result.output_image = codec.decode(pass2.latents.back());
    result.second_pass_predictions = backend.count() - before_pass2;

    if (cfg.blending.enabled) {
        for (int t = cfg.blending.window_lo;
             t <= std::min(cfg.blending.window_hi, cfg.num_steps - 1); t++) {
            result.blended_indices.push_back(t);
        }
    }
    log_event(result, "info", "second_pass_done",
              {{"weight", format_double(gcfg2.weight)},
               {"personalization", personalize ? "on" : "off"},
               {"predictions", std::to_string(result.second_pass_predictions)},
               {"reference_predictions", std::to_string(result.reference_predictions)},
               {"blended_indices", join_ints(result.blended_indices)}});

    if (personalize && cfg.track_attention_mass) {
        result.attention_mass = attn_ctl->mass_rows();
    }
    if (cfg.keep_trajectories) {
        result.scene_trajectory = std::move(scene_traj);
        result.first_pass_trajectory = std::move(pass1);
        result.generation_trajectory = std::move(pass2);
    }
    log_event(result, "info", "run_done", {});
    return result;
}

AblationVariant AblationVariant::parse(const std::string& spec_json) {
    auto body = nlohmann::json::parse(spec_json, nullptr, false);
    if (body.is_discarded() || !body.contains("kind")) {
        fail(ErrorKind::InvalidArgument, "ablation spec must be JSON with a \"kind\" field");
    }
    std::string kind = body["kind"].get<std::string>();
    AblationVariant v;
    if (kind == "no_blending") {
        v.kind = Kind::NoBlending;
    } else if (kind == "no_personalization") {
        v.kind = Kind::NoPersonalization;
    } else if (kind == "both_branches") {
        v.kind = Kind::BothBranches;
    } else if (kind == "guidance_sweep") {
        v.kind = Kind::GuidanceSweep;
        v.weights = body.value("weights", std::vector<double>{});
        if (v.weights.empty()) {
            fail(ErrorKind::InvalidArgument, "guidance_sweep needs a non-empty \"weights\" list");
        }
    } else if (kind == "window_sweep") {
        v.kind = Kind::WindowSweep;
        if (!body.contains("windows") || !body["windows"].is_array() || body["windows"].empty()) {
            fail(ErrorKind::InvalidArgument, "window_sweep needs a non-empty \"windows\" list");
        }
        for (const auto& w : body["windows"]) {
            v.windows.emplace_back(w.at(0).get<int>(), w.at(1).get<int>());
        }
    } else {
        fail(ErrorKind::InvalidArgument, "unknown ablation kind: " + kind);
    }
    return v;
}

std::vector<LabeledResult> run_ablation(const AblationVariant& variant, const Image& scene,
                                        const Image& reference, const PromptPair& prompts,
                                        const PipelineConfig& cfg, DenoiserBackend& backend,
                                        const ImageCodec& codec, const SegmentationClient& seg) {
    PipelineContext ctx;  // inversions shared across variants
    std::vector<LabeledResult> out;
    auto run_one = [&](const std::string& label, const PipelineConfig& variant_cfg) {
        out.push_back({label, run(scene, reference, prompts, variant_cfg, backend, codec, seg,
                                  &ctx)});
    };

    switch (variant.kind) {
        case AblationVariant::Kind::NoBlending: {
            run_one("default", cfg);
            PipelineConfig c = cfg;
            c.blending.enabled = false;
            run_one("no_blending", c);
            break;
        }
        case AblationVariant::Kind::NoPersonalization: {
            run_one("default", cfg);
            PipelineConfig c = cfg;
            c.personalization.enabled = false;
            run_one("no_personalization", c);
            break;
        }
        case AblationVariant::Kind::BothBranches: {
            run_one("default", cfg);
            PipelineConfig c = cfg;
            c.personalization.conditional_branch_only = false;
            run_one("both_branches", c);
            break;
        }
        case AblationVariant::Kind::GuidanceSweep: {
            for (double w : variant.weights) {
                PipelineConfig c = cfg;
                c.guidance_weight = w;
                c.second_pass_guidance_weight = -1.0;
                run_one(weight_label(w), c);
            }
            break;
        }
        case AblationVariant::Kind::WindowSweep: {
            for (const auto& [lo, hi] : variant.windows) {
                PipelineConfig c = cfg;
                c.blending.window_lo = lo;
                c.blending.window_hi = hi;
                c.blending.enabled = true;
                run_one("t=" + std::to_string(lo) + "-" + std::to_string(hi), c);
            }
            break;
        }
    }
    return out;
}

}  // namespace placer
