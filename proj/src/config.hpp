#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pipeline.hpp"

namespace placer {

// Flat key/value configuration for the whole engine. Unknown keys are hard
// errors. Precedence is flag > config file > default; merging happens at
// the JSON level before parsing.
struct EngineConfig {
    // backend
    std::string backend = "toy";  // "toy" | "sdxl-class"
    std::string backend_url;      // sdxl-class endpoint; env PLACER_BACKEND_URL as fallback
    int latent_size = 64;         // toy backend latent grid
    uint64_t seed = 0;

    // schedule
    int num_steps = 50;
    int training_timesteps = 1000;

    // guidance & blending
    double guidance_weight = 7.5;
    double second_pass_guidance_weight = -1.0;
    int blend_window_lo = 10;
    int blend_window_hi = 20;
    bool blending_enabled = true;

    // inversion
    int renoise_iterations = 2;
    std::string scene_inversion_prompt;
    std::string reference_inversion_prompt;
    std::string trajectory_cache_dir;

    // personalization
    bool personalization_enabled = true;
    std::vector<std::string> target_blocks{"Up-2", "Up-3", "Up-4"};
    bool conditional_branch_only = true;
    bool precompute_reference_kv = false;

    // masks
    int dilation_radius = 8;
    double retry_guidance_bump = 2.0;
    double reference_scale = 1.0;

    // clients ("stub" or an http://... endpoint)
    std::string segmentation = "stub";
    double stub_threshold = 0.5;
    std::string embedder = "stub";
    std::string lpips = "stub";
    int embedder_dim = 64;
    int client_timeout_ms = 30000;
    int client_retries = 2;
    std::string subject_crop = "bbox";  // "bbox" | "full"

    // misc
    bool dump_attention_csv = false;
    bool keep_trajectories = false;
    int jobs = 1;

    PipelineConfig pipeline_config() const;
    void validate() const;
};

// Strict parse: every key must be known and well-typed.
EngineConfig config_from_json(const nlohmann::json& doc);

// Full resolved dump, one key per field.
nlohmann::json config_to_json(const EngineConfig& cfg);

// Shallow key-wise merge; `overrides` wins.
nlohmann::json merge_config_json(nlohmann::json base, const nlohmann::json& overrides);

// Parses a JSON text document (object required); empty text means defaults.
nlohmann::json config_json_from_text(const std::string& text, const std::string& origin);

}  // namespace placer
