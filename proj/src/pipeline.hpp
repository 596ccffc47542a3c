#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "attention.hpp"
#include "backend.hpp"
#include "guidance.hpp"
#include "inversion.hpp"
#include "masks.hpp"

namespace placer {

// Scene/subject prompt pair. The substituted prompt replaces the scene
// prompt's "a person" phrase with the subject description; when the phrase
// is absent the subject description is prepended instead and the pipeline
// records a warning.
struct PromptPair {
    std::string scene_prompt;
    std::string subject_prompt;

    std::string substituted_prompt() const;
    bool substitution_is_fallback() const;
};

struct PipelineConfig {
    double guidance_weight = 7.5;
    double second_pass_guidance_weight = -1.0;  // < 0: follow the first pass
    int num_steps = 50;
    int training_timesteps = 1000;
    int renoise_iterations = 2;
    BlendingConfig blending;
    PersonalizationConfig personalization;
    bool precompute_reference_kv = false;
    int dilation_radius = 8;
    uint64_t seed = 0;
    std::string scene_inversion_prompt;      // empty: use the substituted prompt
    std::string reference_inversion_prompt;  // empty: use the subject prompt
    double retry_guidance_bump = 2.0;
    double reference_scale = 1.0;
    bool keep_trajectories = false;
    bool track_attention_mass = false;
    std::string trajectory_cache_dir;

    void validate() const;
};

struct LogEvent {
    std::string level;  // "info" | "warning" | "error"
    std::string event;
    std::map<std::string, std::string> fields;
};

struct GenerationResult {
    Image output_image;
    Image first_pass_image;
    MaskPyramid person_mask;  // raw first-pass segmentation
    MaskPyramid blend_mask;   // dilated foreground used for blending
    std::optional<Mask> reference_subject_mask;
    std::optional<Trajectory> scene_trajectory;
    std::optional<Trajectory> first_pass_trajectory;
    std::optional<Trajectory> generation_trajectory;
    std::map<std::string, double> metrics_stub;
    std::vector<std::string> warnings;
    std::vector<LogEvent> events;
    std::vector<AttentionController::MassRow> attention_mass;
    double first_pass_weight_used = 0.0;
    double second_pass_weight_used = 0.0;
    bool personalization_active = false;

    // call accounting for instrumentation
    int inversion_predictions = 0;
    int first_pass_predictions = 0;
    int second_pass_predictions = 0;
    int reference_predictions = 0;
    std::vector<int> blended_indices;
};

// Reusable inversion products so ablation sweeps invert once.
struct PipelineContext {
    std::optional<Trajectory> scene_trajectory;
    std::optional<Trajectory> reference_trajectory;
};

// The full three-step procedure: invert scene and reference, run the
// affordance pass to locate the person, then regenerate with latent
// blending and mask-guided self-attention. The backend's hook registry is
// used during the second pass and cleared before returning.
GenerationResult run(const Image& scene, const Image& reference, const PromptPair& prompts,
                     const PipelineConfig& cfg, DenoiserBackend& backend,
                     const ImageCodec& codec, const SegmentationClient& seg,
                     PipelineContext* ctx = nullptr);

struct AblationVariant {
    enum class Kind { NoBlending, NoPersonalization, BothBranches, GuidanceSweep, WindowSweep };
    Kind kind = Kind::NoBlending;
    std::vector<double> weights;                  // guidance sweep
    std::vector<std::pair<int, int>> windows;     // window sweep

    static AblationVariant parse(const std::string& spec_json);
};

struct LabeledResult {
    std::string label;
    GenerationResult result;
};

// Toggle variants return {default, variant} for side-by-side comparison;
// sweeps return one result per swept value.
std::vector<LabeledResult> run_ablation(const AblationVariant& variant, const Image& scene,
                                        const Image& reference, const PromptPair& prompts,
                                        const PipelineConfig& cfg, DenoiserBackend& backend,
                                        const ImageCodec& codec, const SegmentationClient& seg);

}  // namespace placer
