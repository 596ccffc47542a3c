#pragma once

#include <memory>
#include <string>

#include "config.hpp"
#include "evalharness.hpp"
#include "pipeline.hpp"

namespace placer {

struct InsertRequest {
    std::string scene_path;
    std::string reference_path;
    std::string scene_prompt;
    std::string subject_prompt;
    std::string run_id;  // optional; derived deterministically when empty
};

struct EvalSummary {
    int rows = 0;
    int failed = 0;
    std::string report_path;
};

// Owns the resolved configuration and the client factories; each run builds
// its own backend instance so concurrent jobs never share hook state.
class Engine {
public:
    explicit Engine(EngineConfig cfg);

    const EngineConfig& config() const { return cfg_; }
    std::string resolved_config_json() const;

    // Writes out_dir/{result.png, first_pass.png, person_mask.png,
    // config.json, log.jsonl} (+ attention_mass.csv when enabled).
    GenerationResult insert(const InsertRequest& request, const std::string& out_dir,
                            const nlohmann::json& overrides = nlohmann::json());

    // One pipeline run per manifest row, then the metrics report
    // (report.json + report.txt). Row failures are recorded and the run
    // continues.
    EvalSummary eval(const std::string& manifest_path, const std::string& out_dir,
                     const nlohmann::json& overrides = nlohmann::json(), int jobs_override = 0);

    // Per-variant outputs plus a labeled contact sheet.
    void ablate(const InsertRequest& request, const AblationVariant& variant,
                const std::string& out_dir, const nlohmann::json& overrides = nlohmann::json());

private:
    EngineConfig resolve_overrides(const nlohmann::json& overrides) const;
    std::unique_ptr<DenoiserBackend> make_backend(const EngineConfig& cfg) const;
    std::unique_ptr<ImageCodec> make_codec(const EngineConfig& cfg) const;
    std::unique_ptr<SegmentationClient> make_segmentation(const EngineConfig& cfg) const;
    std::unique_ptr<EmbedderClient> make_embedder(const EngineConfig& cfg,
                                                  const std::string& kind) const;
    std::unique_ptr<LpipsClient> make_lpips(const EngineConfig& cfg) const;

    void write_run_outputs(const std::string& out_dir, const GenerationResult& result,
                           const EngineConfig& cfg, const InsertRequest& request,
                           const std::string& run_id) const;

    EngineConfig cfg_;
};

std::string derive_run_id(const InsertRequest& request, const EngineConfig& cfg);

}  // namespace placer
