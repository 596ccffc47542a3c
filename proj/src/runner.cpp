#include "runner.hpp"

#include <atomic>
#include <mutex>
#include <thread>

#include "attention.hpp"
#include "contact_sheet.hpp"
#include "errors.hpp"
#include "util.hpp"

namespace placer {

Engine::Engine(EngineConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
}

std::string Engine::resolved_config_json() const {
    return config_to_json(cfg_).dump(2) + "\n";
}

EngineConfig Engine::resolve_overrides(const nlohmann::json& overrides) const {
    if (overrides.is_null() || (overrides.is_object() && overrides.empty())) return cfg_;
    return config_from_json(merge_config_json(config_to_json(cfg_), overrides));
}

std::unique_ptr<DenoiserBackend> Engine::make_backend(const EngineConfig& cfg) const {
    if (cfg.backend == "toy") {
        return make_toy_backend(cfg.seed, cfg.latent_size);
    }
    RemoteBackendConfig rc;
    rc.url = cfg.backend_url;
    rc.latent_size = cfg.latent_size;
    rc.timeout_ms = cfg.client_timeout_ms;
    rc.retries = cfg.client_retries;
    return make_remote_backend(rc);
}

std::unique_ptr<ImageCodec> Engine::make_codec(const EngineConfig& cfg) const {
    if (cfg.backend == "toy") {
        return make_toy_codec(cfg.seed);
    }
    RemoteBackendConfig rc;
    rc.url = cfg.backend_url;
    rc.latent_size = cfg.latent_size;
    rc.timeout_ms = cfg.client_timeout_ms;
    rc.retries = cfg.client_retries;
    return make_remote_codec(rc);
}

std::unique_ptr<SegmentationClient> Engine::make_segmentation(const EngineConfig& cfg) const {
    if (cfg.segmentation == "stub") {
        return make_threshold_stub_client(cfg.stub_threshold);
    }
    return make_http_segmentation_client(cfg.segmentation, cfg.client_timeout_ms,
                                         cfg.client_retries);
}

std::unique_ptr<EmbedderClient> Engine::make_embedder(const EngineConfig& cfg,
                                                      const std::string& kind) const {
    if (cfg.embedder == "stub") {
        return make_stub_embedder(StubEmbedderMode::HashBasis, cfg.embedder_dim, kind);
    }
    return make_http_embedder(cfg.embedder, cfg.client_timeout_ms, cfg.client_retries, kind);
}

std::unique_ptr<LpipsClient> Engine::make_lpips(const EngineConfig& cfg) const {
    if (cfg.lpips == "stub") {
        return make_stub_lpips();
    }
    return make_http_lpips(cfg.lpips, cfg.client_timeout_ms, cfg.client_retries);
}

std::string derive_run_id(const InsertRequest& request, const EngineConfig& cfg) {
    if (!request.run_id.empty()) return request.run_id;
    uint64_t h = fnv1a64(request.scene_path);
    h = fnv1a64(request.reference_path, h);
    h = fnv1a64(request.scene_prompt, h);
    h = fnv1a64(request.subject_prompt, h);
    h = fnv1a64(config_to_json(cfg).dump(), h);
    return "run-" + to_hex(h).substr(0, 12);
}

namespace {

std::string events_to_jsonl(const GenerationResult& result) {
    std::string out;
    for (const auto& ev : result.events) {
        nlohmann::json line{{"level", ev.level}, {"event", ev.event}};
        for (const auto& [k, v] : ev.fields) line[k] = v;
        out += line.dump() + "\n";
    }
    return out;
}

}  // namespace

void Engine::write_run_outputs(const std::string& out_dir, const GenerationResult& result,
                               const EngineConfig& cfg, const InsertRequest& request,
                               const std::string& run_id) const {
    ensure_directory(out_dir);
    save_png(out_dir + "/result.png", result.output_image);
    save_png(out_dir + "/first_pass.png", result.first_pass_image);
    save_png(out_dir + "/person_mask.png", mask_to_image(result.person_mask.base));

    nlohmann::json cfg_doc = config_to_json(cfg);
    cfg_doc["run_id"] = run_id;
    cfg_doc["scene_path"] = request.scene_path;
    cfg_doc["reference_path"] = request.reference_path;
    cfg_doc["scene_prompt"] = request.scene_prompt;
    cfg_doc["subject_prompt"] = request.subject_prompt;
    PromptPair prompts{request.scene_prompt, request.subject_prompt};
    cfg_doc["substituted_prompt"] = prompts.substituted_prompt();
    cfg_doc["first_pass_guidance_weight_used"] = result.first_pass_weight_used;
    cfg_doc["second_pass_guidance_weight_used"] = result.second_pass_weight_used;
    cfg_doc["personalization_active"] = result.personalization_active;
    write_file(out_dir + "/config.json", cfg_doc.dump(2) + "\n");

    write_file(out_dir + "/log.jsonl", events_to_jsonl(result));
    if (cfg.dump_attention_csv) {
        write_file(out_dir + "/attention_mass.csv", attention_mass_csv(result.attention_mass));
    }
}

GenerationResult Engine::insert(const InsertRequest& request, const std::string& out_dir,
                                const nlohmann::json& overrides) {
    EngineConfig cfg = resolve_overrides(overrides);
    if (request.scene_path.empty() || request.reference_path.empty()) {
        fail(ErrorKind::InvalidArgument, "scene and reference image paths are required");
    }
    Image scene = load_image(request.scene_path);
    Image reference = load_image(request.reference_path);
    PromptPair prompts{request.scene_prompt, request.subject_prompt};

    auto backend = make_backend(cfg);
    auto codec = make_codec(cfg);
    auto seg = make_segmentation(cfg);

    GenerationResult result =
        run(scene, reference, prompts, cfg.pipeline_config(), *backend, *codec, *seg);

    std::string run_id = derive_run_id(request, cfg);
    write_run_outputs(out_dir, result, cfg, request, run_id);
    return result;
}

EvalSummary Engine::eval(const std::string& manifest_path, const std::string& out_dir,
                         const nlohmann::json& overrides, int jobs_override) {
    EngineConfig cfg = resolve_overrides(overrides);
    std::vector<ManifestRow> rows = load_manifest(manifest_path);
    ensure_directory(out_dir);

    int jobs = jobs_override > 0 ? jobs_override : cfg.jobs;
    jobs = std::min<int>(jobs, static_cast<int>(rows.size()));

    struct RowOutcome {
        bool ok = false;
        std::string error;
        MetricsRow metrics;
    };
    std::vector<RowOutcome> outcomes(rows.size());

    auto clip = make_embedder(cfg, "clip-like");
    auto dino = make_embedder(cfg, "dino-like");
    auto lpips = make_lpips(cfg);

    std::atomic<size_t> next{0};
    auto worker = [&]() {
        // per-thread backend and clients: no shared hook state
        auto backend = make_backend(cfg);
        auto codec = make_codec(cfg);
        auto seg = make_segmentation(cfg);
        for (size_t i = next.fetch_add(1); i < rows.size(); i = next.fetch_add(1)) {
            const ManifestRow& row = rows[i];
            char row_tag[32];
            snprintf(row_tag, sizeof(row_tag), "row-%03zu", i);
            RowOutcome& outcome = outcomes[i];
            try {
                Image scene = load_image(row.scene_path);
                Image reference = load_image(row.reference_path);
                PromptPair prompts{row.scene_prompt, row.subject_prompt};
                GenerationResult result = run(scene, reference, prompts, cfg.pipeline_config(),
                                              *backend, *codec, *seg);

                InsertRequest req{row.scene_path, row.reference_path, row.scene_prompt,
                                  row.subject_prompt, row_tag};
                write_run_outputs(out_dir + "/" + row_tag, result, cfg, req, row_tag);

                MetricsRow m;
                m.id = row_tag;
                m.clip_t = clip_t(result.output_image, prompts.substituted_prompt(), *clip);
                auto detected = seg->segment_person(result.output_image);
                m.person_detected = detected.has_value() && !detected->empty_mask();
                m.lpips = background_lpips(result.output_image, scene,
                                           result.blend_mask.base, *lpips);
                const Mask& person = detected ? *detected : Mask::blank(scene.width, scene.height);
                const Mask* ref_mask = result.reference_subject_mask
                                           ? &*result.reference_subject_mask
                                           : nullptr;
                bool crop = cfg.subject_crop == "bbox";
                m.clip_i = subject_similarity(result.output_image, person, reference, ref_mask,
                                              *clip, crop);
                m.dino = subject_similarity(result.output_image, person, reference, ref_mask,
                                            *dino, crop);
                outcome.metrics = std::move(m);
                outcome.ok = true;
            } catch (const std::exception& e) {
                outcome.error = e.what();
            }
        }
    };

    if (jobs <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int j = 0; j < jobs; j++) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }

    MetricsReport report;
    nlohmann::json failures = nlohmann::json::array();
    int failed = 0;
    for (size_t i = 0; i < outcomes.size(); i++) {
        if (outcomes[i].ok) {
            report.rows.push_back(outcomes[i].metrics);
        } else {
            failed++;
            char row_tag[32];
            snprintf(row_tag, sizeof(row_tag), "row-%03zu", i);
            failures.push_back({{"row", row_tag}, {"error", outcomes[i].error}});
        }
    }

    EvalSummary summary;
    summary.rows = static_cast<int>(rows.size());
    summary.failed = failed;
    summary.report_path = out_dir + "/report.json";
    write_file(summary.report_path, report.to_json());
    write_file(out_dir + "/report.txt", report.to_table());
    if (failed > 0) {
        write_file(out_dir + "/failures.json", failures.dump(2) + "\n");
    }
    return summary;
}

void Engine::ablate(const InsertRequest& request, const AblationVariant& variant,
                    const std::string& out_dir, const nlohmann::json& overrides) {
    EngineConfig cfg = resolve_overrides(overrides);
    Image scene = load_image(request.scene_path);
    Image reference = load_image(request.reference_path);
    PromptPair prompts{request.scene_prompt, request.subject_prompt};

    auto backend = make_backend(cfg);
    auto codec = make_codec(cfg);
    auto seg = make_segmentation(cfg);

    std::vector<LabeledResult> results = run_ablation(variant, scene, reference, prompts,
                                                      cfg.pipeline_config(), *backend, *codec,
                                                      *seg);
    ensure_directory(out_dir);
    std::vector<Image> panels;
    std::vector<std::string> labels;
    for (const auto& labeled : results) {
        std::string dir_name = labeled.label;
        for (auto& c : dir_name) {
            if (c == '=' || c == '.' || c == ',') c = '_';
        }
        InsertRequest req = request;
        req.run_id = dir_name;
        write_run_outputs(out_dir + "/" + dir_name, labeled.result, cfg, req, dir_name);
        panels.push_back(labeled.result.output_image);
        labels.push_back(labeled.label);
    }
    save_png(out_dir + "/contact_sheet.png", contact_sheet(panels, labels));
}

}  // namespace placer
