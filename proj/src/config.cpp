#include "config.hpp"

#include <cstdlib>
#include <set>

#include "errors.hpp"

namespace placer {

namespace {

template <typename T>
void read_key(const nlohmann::json& doc, const char* key, T& out,
              std::set<std::string>& seen) {
    seen.insert(key);
    auto it = doc.find(key);
    if (it == doc.end()) return;
    try {
        out = it->get<T>();
    } catch (const nlohmann::json::exception&) {
        fail(ErrorKind::Config, std::string("config key \"") + key + "\" has the wrong type");
    }
}

}  // namespace

PipelineConfig EngineConfig::pipeline_config() const {
    PipelineConfig p;
    p.guidance_weight = guidance_weight;
    p.second_pass_guidance_weight = second_pass_guidance_weight;
    p.num_steps = num_steps;
    p.training_timesteps = training_timesteps;
    p.renoise_iterations = renoise_iterations;
    p.blending.window_lo = blend_window_lo;
    p.blending.window_hi = blend_window_hi;
    p.blending.enabled = blending_enabled;
    p.personalization.enabled = personalization_enabled;
    p.personalization.conditional_branch_only = conditional_branch_only;
    p.personalization.target_blocks =
        std::set<std::string>(target_blocks.begin(), target_blocks.end());
    p.precompute_reference_kv = precompute_reference_kv;
    p.dilation_radius = dilation_radius;
    p.seed = seed;
    p.scene_inversion_prompt = scene_inversion_prompt;
    p.reference_inversion_prompt = reference_inversion_prompt;
    p.retry_guidance_bump = retry_guidance_bump;
    p.reference_scale = reference_scale;
    p.keep_trajectories = keep_trajectories;
    p.track_attention_mass = dump_attention_csv;
    p.trajectory_cache_dir = trajectory_cache_dir;
    return p;
}

void EngineConfig::validate() const {
    if (backend != "toy" && backend != "sdxl-class") {
        fail(ErrorKind::Config, "backend must be \"toy\" or \"sdxl-class\", got \"" + backend + "\"");
    }
    if (subject_crop != "bbox" && subject_crop != "full") {
        fail(ErrorKind::Config, "subject_crop must be \"bbox\" or \"full\"");
    }
    if (jobs < 1) fail(ErrorKind::Config, "jobs must be >= 1");
    if (embedder_dim < 1) fail(ErrorKind::Config, "embedder_dim must be >= 1");
    if (stub_threshold < 0.0 || stub_threshold > 1.0) {
        fail(ErrorKind::Config, "stub_threshold must lie in [0, 1]");
    }
    if (client_timeout_ms < 1) fail(ErrorKind::Config, "client_timeout_ms must be >= 1");
    if (client_retries < 0) fail(ErrorKind::Config, "client_retries must be >= 0");
    pipeline_config().validate();
}

EngineConfig config_from_json(const nlohmann::json& doc) {
    if (!doc.is_object()) {
        fail(ErrorKind::Config, "config must be a JSON object");
    }
    EngineConfig cfg;
    std::set<std::string> seen;

    read_key(doc, "backend", cfg.backend, seen);
    read_key(doc, "backend_url", cfg.backend_url, seen);
    read_key(doc, "latent_size", cfg.latent_size, seen);
    read_key(doc, "seed", cfg.seed, seen);
    read_key(doc, "num_steps", cfg.num_steps, seen);
    read_key(doc, "training_timesteps", cfg.training_timesteps, seen);
    read_key(doc, "guidance_weight", cfg.guidance_weight, seen);
    read_key(doc, "second_pass_guidance_weight", cfg.second_pass_guidance_weight, seen);
    read_key(doc, "blend_window_lo", cfg.blend_window_lo, seen);
    read_key(doc, "blend_window_hi", cfg.blend_window_hi, seen);
    read_key(doc, "blending_enabled", cfg.blending_enabled, seen);
    read_key(doc, "renoise_iterations", cfg.renoise_iterations, seen);
    read_key(doc, "scene_inversion_prompt", cfg.scene_inversion_prompt, seen);
    read_key(doc, "reference_inversion_prompt", cfg.reference_inversion_prompt, seen);
    read_key(doc, "trajectory_cache_dir", cfg.trajectory_cache_dir, seen);
    read_key(doc, "personalization_enabled", cfg.personalization_enabled, seen);
    read_key(doc, "target_blocks", cfg.target_blocks, seen);
    read_key(doc, "conditional_branch_only", cfg.conditional_branch_only, seen);
    read_key(doc, "precompute_reference_kv", cfg.precompute_reference_kv, seen);
    read_key(doc, "dilation_radius", cfg.dilation_radius, seen);
    read_key(doc, "retry_guidance_bump", cfg.retry_guidance_bump, seen);
    read_key(doc, "reference_scale", cfg.reference_scale, seen);
    read_key(doc, "segmentation", cfg.segmentation, seen);
    read_key(doc, "stub_threshold", cfg.stub_threshold, seen);
    read_key(doc, "embedder", cfg.embedder, seen);
    read_key(doc, "lpips", cfg.lpips, seen);
    read_key(doc, "embedder_dim", cfg.embedder_dim, seen);
    read_key(doc, "client_timeout_ms", cfg.client_timeout_ms, seen);
    read_key(doc, "client_retries", cfg.client_retries, seen);
    read_key(doc, "subject_crop", cfg.subject_crop, seen);
    read_key(doc, "dump_attention_csv", cfg.dump_attention_csv, seen);
    read_key(doc, "keep_trajectories", cfg.keep_trajectories, seen);
    read_key(doc, "jobs", cfg.jobs, seen);

    for (auto it = doc.begin(); it != doc.end(); ++it) {
        if (!seen.count(it.key())) {
            fail(ErrorKind::Config, "unknown config key \"" + it.key() + "\"");
        }
    }

    if (cfg.backend_url.empty()) {
        if (const char* env = std::getenv("PLACER_BACKEND_URL")) {
            cfg.backend_url = env;
        }
    }
    cfg.validate();
    return cfg;
}

nlohmann::json config_to_json(const EngineConfig& cfg) {
    return nlohmann::json{
        {"backend", cfg.backend},
        {"backend_url", cfg.backend_url},
        {"latent_size", cfg.latent_size},
        {"seed", cfg.seed},
        {"num_steps", cfg.num_steps},
        {"training_timesteps", cfg.training_timesteps},
        {"guidance_weight", cfg.guidance_weight},
        {"second_pass_guidance_weight", cfg.second_pass_guidance_weight},
        {"blend_window_lo", cfg.blend_window_lo},
        {"blend_window_hi", cfg.blend_window_hi},
        {"blending_enabled", cfg.blending_enabled},
        {"renoise_iterations", cfg.renoise_iterations},
        {"scene_inversion_prompt", cfg.scene_inversion_prompt},
        {"reference_inversion_prompt", cfg.reference_inversion_prompt},
        {"trajectory_cache_dir", cfg.trajectory_cache_dir},
        {"personalization_enabled", cfg.personalization_enabled},
        {"target_blocks", cfg.target_blocks},
        {"conditional_branch_only", cfg.conditional_branch_only},
        {"precompute_reference_kv", cfg.precompute_reference_kv},
        {"dilation_radius", cfg.dilation_radius},
        {"retry_guidance_bump", cfg.retry_guidance_bump},
        {"reference_scale", cfg.reference_scale},
        {"segmentation", cfg.segmentation},
        {"stub_threshold", cfg.stub_threshold},
        {"embedder", cfg.embedder},
        {"lpips", cfg.lpips},
        {"embedder_dim", cfg.embedder_dim},
        {"client_timeout_ms", cfg.client_timeout_ms},
        {"client_retries", cfg.client_retries},
        {"subject_crop", cfg.subject_crop},
        {"dump_attention_csv", cfg.dump_attention_csv},
        {"keep_trajectories", cfg.keep_trajectories},
        {"jobs", cfg.jobs},
    };
}

nlohmann::json merge_config_json(nlohmann::json base, const nlohmann::json& overrides) {
    if (!overrides.is_null()) {
        if (!overrides.is_object()) {
            fail(ErrorKind::Config, "config overrides must be a JSON object");
        }
        for (auto it = overrides.begin(); it != overrides.end(); ++it) {
            base[it.key()] = it.value();
        }
    }
    return base;
}

nlohmann::json config_json_from_text(const std::string& text, const std::string& origin) {
    if (text.empty()) return nlohmann::json::object();
    auto doc = nlohmann::json::parse(text, nullptr, false);
    if (doc.is_discarded()) {
        fail(ErrorKind::Config, "invalid JSON in " + origin);
    }
    if (!doc.is_object()) {
        fail(ErrorKind::Config, origin + " must contain a JSON object");
    }
    return doc;
}

}  // namespace placer
