// placer CLI: insert / eval / ablate over the shared-library C API.

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "placer.h"

namespace {

// stable exit codes, also listed in --help
constexpr int kExitOk = 0;
constexpr int kExitInternal = 1;
constexpr int kExitUsage = 2;
constexpr int kExitConfig = 3;
constexpr int kExitIo = 4;
constexpr int kExitInsertionFailure = 5;
constexpr int kExitNumericalDivergence = 6;
constexpr int kExitTransport = 7;
constexpr int kExitUnsupported = 8;
constexpr int kExitPartialFailure = 9;

int exit_code_for(placer_status status) {
    switch (status) {
        case PLACER_OK: return kExitOk;
        case PLACER_ERR_INVALID_ARGUMENT: return kExitUsage;
        case PLACER_ERR_CONFIG: return kExitConfig;
        case PLACER_ERR_IO: return kExitIo;
        case PLACER_ERR_INSERTION_FAILURE: return kExitInsertionFailure;
        case PLACER_ERR_NUMERICAL_DIVERGENCE: return kExitNumericalDivergence;
        case PLACER_ERR_TRANSPORT: return kExitTransport;
        case PLACER_ERR_UNSUPPORTED: return kExitUnsupported;
        case PLACER_ERR_PARTIAL_FAILURE: return kExitPartialFailure;
        case PLACER_ERR_INTERNAL: return kExitInternal;
    }
    return kExitInternal;
}

const char* kExitCodeHelp =
    "Exit codes:\n"
    "  0 success            1 internal error     2 bad arguments\n"
    "  3 config error       4 I/O error          5 insertion failure\n"
    "  6 numerical divergence  7 client transport error\n"
    "  8 unsupported operation 9 some eval rows failed\n";

struct CommonFlags {
    std::string config_path;
    std::string backend, backend_url;
    int latent_size = 0;
    unsigned long long seed = 0;
    double guidance_weight = 0.0, second_pass_guidance_weight = 0.0;
    int num_steps = 0, training_timesteps = 0, renoise_iterations = 0;
    std::string blend_window;
    bool no_blending = false, no_personalization = false;
    std::string target_blocks;
    bool precompute_reference_kv = false;
    int dilation_radius = 0;
    std::string scene_inversion_prompt, reference_inversion_prompt;
    double retry_guidance_bump = 0.0, reference_scale = 0.0;
    std::string segmentation, embedder, lpips;
    double stub_threshold = 0.0;
    int embedder_dim = 0, timeout_ms = 0, retries = 0;
    std::string subject_crop, cache_dir;
    bool dump_attention_csv = false;
    int jobs = 0;
};

void add_common_flags(CLI::App* cmd, CommonFlags& flags) {
    cmd->add_option("--config", flags.config_path, "JSON config file");
    cmd->add_option("--backend", flags.backend, "backend name: toy | sdxl-class");
    cmd->add_option("--backend-url", flags.backend_url, "sdxl-class backend endpoint");
    cmd->add_option("--latent-size", flags.latent_size, "latent grid side (toy backend)");
    cmd->add_option("--seed", flags.seed, "backend construction seed");
    cmd->add_option("--guidance-weight", flags.guidance_weight, "classifier-free guidance weight");
    cmd->add_option("--second-pass-guidance-weight", flags.second_pass_guidance_weight,
                    "override the second pass weight");
    cmd->add_option("--num-steps", flags.num_steps, "denoising steps");
    cmd->add_option("--training-timesteps", flags.training_timesteps,
                    "training timestep count behind the schedule");
    cmd->add_option("--renoise-iterations", flags.renoise_iterations,
                    "fixed-point iterations per inversion step");
    cmd->add_option("--blend-window", flags.blend_window, "latent blending window, e.g. 10-20");
    cmd->add_flag("--no-blending", flags.no_blending, "disable latent blending");
    cmd->add_flag("--no-personalization", flags.no_personalization,
                  "disable mask-guided self-attention");
    cmd->add_option("--target-blocks", flags.target_blocks,
                    "comma-separated attention blocks, e.g. Up-2,Up-3,Up-4");
    cmd->add_flag("--precompute-reference-kv", flags.precompute_reference_kv,
                  "extract the full reference K/V cache up front");
    cmd->add_option("--dilation-radius", flags.dilation_radius,
                    "foreground mask dilation in pixels");
    cmd->add_option("--scene-inversion-prompt", flags.scene_inversion_prompt,
                    "override the scene inversion prompt");
    cmd->add_option("--reference-inversion-prompt", flags.reference_inversion_prompt,
                    "override the reference inversion prompt");
    cmd->add_option("--retry-guidance-bump", flags.retry_guidance_bump,
                    "guidance increase when no person is found");
    cmd->add_option("--reference-scale", flags.reference_scale,
                    "content scale applied to the reference image");
    cmd->add_option("--segmentation", flags.segmentation, "\"stub\" or segmentation endpoint URL");
    cmd->add_option("--stub-threshold", flags.stub_threshold,
                    "luminance threshold of the stub segmenter");
    cmd->add_option("--embedder", flags.embedder, "\"stub\" or embedder endpoint URL");
    cmd->add_option("--lpips", flags.lpips, "\"stub\" or perceptual-distance endpoint URL");
    cmd->add_option("--embedder-dim", flags.embedder_dim, "stub embedder dimension");
    cmd->add_option("--timeout-ms", flags.timeout_ms, "client timeout");
    cmd->add_option("--retries", flags.retries, "client retry count");
    cmd->add_option("--subject-crop", flags.subject_crop, "subject similarity crop: bbox | full");
    cmd->add_flag("--dump-attention-csv", flags.dump_attention_csv,
                  "write per-layer reference attention mass CSV");
    cmd->add_option("--cache-dir", flags.cache_dir, "inversion trajectory cache directory");
    cmd->add_option("--jobs", flags.jobs, "parallel rows for eval");
}

// flag > config file > default: only flags the user actually passed are
// added to the override document.
nlohmann::json overrides_from_flags(const CLI::App* cmd, const CommonFlags& flags) {
    nlohmann::json o = nlohmann::json::object();
    auto passed = [cmd](const std::string& name) { return cmd->count(name) > 0; };

    if (passed("--backend")) o["backend"] = flags.backend;
    if (passed("--backend-url")) o["backend_url"] = flags.backend_url;
    if (passed("--latent-size")) o["latent_size"] = flags.latent_size;
    if (passed("--seed")) o["seed"] = flags.seed;
    if (passed("--guidance-weight")) o["guidance_weight"] = flags.guidance_weight;
    if (passed("--second-pass-guidance-weight")) {
        o["second_pass_guidance_weight"] = flags.second_pass_guidance_weight;
    }
    if (passed("--num-steps")) o["num_steps"] = flags.num_steps;
    if (passed("--training-timesteps")) o["training_timesteps"] = flags.training_timesteps;
    if (passed("--renoise-iterations")) o["renoise_iterations"] = flags.renoise_iterations;
    if (passed("--blend-window")) {
        size_t dash = flags.blend_window.find('-');
        if (dash == std::string::npos) {
            throw CLI::ValidationError("--blend-window", "expected LO-HI, e.g. 10-20");
        }
        try {
            o["blend_window_lo"] = std::stoi(flags.blend_window.substr(0, dash));
            o["blend_window_hi"] = std::stoi(flags.blend_window.substr(dash + 1));
        } catch (const std::exception&) {
            throw CLI::ValidationError("--blend-window", "expected LO-HI, e.g. 10-20");
        }
    }
    if (passed("--no-blending")) o["blending_enabled"] = false;
    if (passed("--no-personalization")) o["personalization_enabled"] = false;
    if (passed("--target-blocks")) {
        std::vector<std::string> blocks;
        std::stringstream ss(flags.target_blocks);
        std::string item;
        while (std::getline(ss, item, ',')) {
            if (!item.empty()) blocks.push_back(item);
        }
        o["target_blocks"] = blocks;
    }
    if (passed("--precompute-reference-kv")) o["precompute_reference_kv"] = true;
    if (passed("--dilation-radius")) o["dilation_radius"] = flags.dilation_radius;
    if (passed("--scene-inversion-prompt")) {
        o["scene_inversion_prompt"] = flags.scene_inversion_prompt;
    }
    if (passed("--reference-inversion-prompt")) {
        o["reference_inversion_prompt"] = flags.reference_inversion_prompt;
    }
    if (passed("--retry-guidance-bump")) o["retry_guidance_bump"] = flags.retry_guidance_bump;
    if (passed("--reference-scale")) o["reference_scale"] = flags.reference_scale;
    if (passed("--segmentation")) o["segmentation"] = flags.segmentation;
    if (passed("--stub-threshold")) o["stub_threshold"] = flags.stub_threshold;
    if (passed("--embedder")) o["embedder"] = flags.embedder;
    if (passed("--lpips")) o["lpips"] = flags.lpips;
    if (passed("--embedder-dim")) o["embedder_dim"] = flags.embedder_dim;
    if (passed("--timeout-ms")) o["client_timeout_ms"] = flags.timeout_ms;
    if (passed("--retries")) o["client_retries"] = flags.retries;
    if (passed("--subject-crop")) o["subject_crop"] = flags.subject_crop;
    if (passed("--dump-attention-csv")) o["dump_attention_csv"] = true;
    if (passed("--cache-dir")) o["trajectory_cache_dir"] = flags.cache_dir;
    if (passed("--jobs")) o["jobs"] = flags.jobs;
    return o;
}

std::string read_config_file(const std::string& path) {
    if (path.empty()) return {};
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        fprintf(stderr, "error: cannot read config file: %s\n", path.c_str());
        exit(kExitIo);
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct EngineHandle {
    placer_engine* engine = nullptr;
    ~EngineHandle() { placer_engine_destroy(engine); }
};

int make_engine(const std::string& config_path, EngineHandle& handle) {
    std::string config_text = read_config_file(config_path);
    placer_status st = placer_engine_create(config_text.empty() ? nullptr : config_text.c_str(),
                                            &handle.engine);
    if (st != PLACER_OK) {
        fprintf(stderr, "error (%s): %s\n", placer_status_name(st), placer_last_error());
        return exit_code_for(st);
    }
    return kExitOk;
}

int report_status(placer_engine* engine, placer_status st, const char* what) {
    if (st == PLACER_OK) return kExitOk;
    fprintf(stderr, "%s failed (%s): %s\n", what, placer_status_name(st),
            placer_engine_last_error(engine));
    return exit_code_for(st);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"placer — training-free person insertion into scene images"};
    app.require_subcommand(1);
    app.footer(kExitCodeHelp);

    // insert
    auto* insert = app.add_subcommand("insert", "insert a subject into one scene");
    std::string scene, reference, scene_prompt, subject_prompt, out_dir = "out", run_id;
    insert->add_option("--scene", scene, "scene image path")->required();
    insert->add_option("--reference", reference, "subject reference image path")->required();
    insert->add_option("--scene-prompt", scene_prompt,
                       "scene description including the person")->required();
    insert->add_option("--subject-prompt", subject_prompt, "subject description")->required();
    insert->add_option("--out", out_dir, "output directory root");
    insert->add_option("--run-id", run_id, "run directory name (derived when omitted)");
    CommonFlags insert_flags;
    add_common_flags(insert, insert_flags);

    // eval
    auto* eval = app.add_subcommand("eval", "run a manifest and report metrics");
    std::string manifest, eval_out = "out/eval";
    eval->add_option("--manifest", manifest, "CSV manifest path")->required();
    eval->add_option("--out", eval_out, "output directory");
    CommonFlags eval_flags;
    add_common_flags(eval, eval_flags);

    // ablate
    auto* ablate = app.add_subcommand("ablate", "run an ablation family with a contact sheet");
    std::string ab_scene, ab_reference, ab_scene_prompt, ab_subject_prompt,
        ab_out = "out/ablation";
    std::string sweep_guidance, sweep_window;
    bool both_branches = false;
    ablate->add_option("--scene", ab_scene, "scene image path")->required();
    ablate->add_option("--reference", ab_reference, "subject reference image path")->required();
    ablate->add_option("--scene-prompt", ab_scene_prompt,
                       "scene description including the person")->required();
    ablate->add_option("--subject-prompt", ab_subject_prompt, "subject description")->required();
    ablate->add_option("--out", ab_out, "output directory");
    ablate->add_option("--sweep-guidance", sweep_guidance,
                       "comma-separated guidance weights, e.g. 1,3,5,7.5");
    ablate->add_option("--sweep-window", sweep_window,
                       "comma-separated blending windows, e.g. 0-10,10-20");
    ablate->add_flag("--both-branches", both_branches,
                     "personalize both guidance branches instead of only the conditional one");
    CommonFlags ablate_flags;
    add_common_flags(ablate, ablate_flags);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitUsage;
    }

    if (insert->parsed()) {
        EngineHandle handle;
        if (int rc = make_engine(insert_flags.config_path, handle)) return rc;
        nlohmann::json overrides;
        try {
            overrides = overrides_from_flags(insert, insert_flags);
        } catch (const CLI::Error& e) {
            fprintf(stderr, "error: %s\n", e.what());
            return kExitUsage;
        }
        std::string overrides_text = overrides.dump();
        placer_insert_request req{scene.c_str(), reference.c_str(), scene_prompt.c_str(),
                                  subject_prompt.c_str(), overrides_text.c_str(),
                                  run_id.empty() ? nullptr : run_id.c_str()};
        placer_status st = placer_insert(handle.engine, &req, out_dir.c_str());
        int rc = report_status(handle.engine, st, "insert");
        if (rc == kExitOk) printf("wrote %s\n", out_dir.c_str());
        return rc;
    }

    if (eval->parsed()) {
        EngineHandle handle;
        if (int rc = make_engine(eval_flags.config_path, handle)) return rc;
        nlohmann::json overrides;
        try {
            overrides = overrides_from_flags(eval, eval_flags);
        } catch (const CLI::Error& e) {
            fprintf(stderr, "error: %s\n", e.what());
            return kExitUsage;
        }
        std::string overrides_text = overrides.dump();
        placer_status st = placer_eval(handle.engine, manifest.c_str(), eval_out.c_str(),
                                       overrides_text.c_str(), 0);
        int rc = report_status(handle.engine, st, "eval");
        if (rc == kExitOk) printf("wrote %s/report.json\n", eval_out.c_str());
        return rc;
    }

    // ablate
    EngineHandle handle;
    if (int rc = make_engine(ablate_flags.config_path, handle)) return rc;

    int selected = (sweep_guidance.empty() ? 0 : 1) + (sweep_window.empty() ? 0 : 1) +
                   (both_branches ? 1 : 0) + (ablate_flags.no_blending ? 1 : 0) +
                   (ablate_flags.no_personalization ? 1 : 0);
    if (selected != 1) {
        fprintf(stderr, "error: pick exactly one of --sweep-guidance, --sweep-window, "
                        "--both-branches, --no-blending, --no-personalization\n");
        return kExitUsage;
    }

    nlohmann::json variant;
    if (!sweep_guidance.empty()) {
        std::vector<double> weights;
        std::stringstream ss(sweep_guidance);
        std::string item;
        while (std::getline(ss, item, ',')) {
            try {
                weights.push_back(std::stod(item));
            } catch (const std::exception&) {
                fprintf(stderr, "error: bad guidance weight \"%s\"\n", item.c_str());
                return kExitUsage;
            }
        }
        variant = {{"kind", "guidance_sweep"}, {"weights", weights}};
    } else if (!sweep_window.empty()) {
        std::vector<std::vector<int>> windows;
        std::stringstream ss(sweep_window);
        std::string item;
        while (std::getline(ss, item, ',')) {
            size_t dash = item.find('-');
            if (dash == std::string::npos) {
                fprintf(stderr, "error: bad window \"%s\" (expected LO-HI)\n", item.c_str());
                return kExitUsage;
            }
            try {
                windows.push_back({std::stoi(item.substr(0, dash)),
                                   std::stoi(item.substr(dash + 1))});
            } catch (const std::exception&) {
                fprintf(stderr, "error: bad window \"%s\" (expected LO-HI)\n", item.c_str());
                return kExitUsage;
            }
        }
        variant = {{"kind", "window_sweep"}, {"windows", windows}};
    } else if (both_branches) {
        variant = {{"kind", "both_branches"}};
    } else if (ablate_flags.no_blending) {
        variant = {{"kind", "no_blending"}};
    } else {
        variant = {{"kind", "no_personalization"}};
    }

    // variant toggles are carried by the variant spec, not by overrides
    CommonFlags override_flags = ablate_flags;
    override_flags.no_blending = false;
    override_flags.no_personalization = false;
    nlohmann::json overrides;
    try {
        overrides = overrides_from_flags(ablate, override_flags);
        overrides.erase("blending_enabled");
        overrides.erase("personalization_enabled");
    } catch (const CLI::Error& e) {
        fprintf(stderr, "error: %s\n", e.what());
        return kExitUsage;
    }
    std::string overrides_text = overrides.dump();
    std::string variant_text = variant.dump();
    placer_insert_request req{ab_scene.c_str(), ab_reference.c_str(), ab_scene_prompt.c_str(),
                              ab_subject_prompt.c_str(), overrides_text.c_str(), nullptr};
    placer_status st = placer_ablate(handle.engine, &req, variant_text.c_str(), ab_out.c_str());
    int rc = report_status(handle.engine, st, "ablate");
    if (rc == kExitOk) printf("wrote %s/contact_sheet.png\n", ab_out.c_str());
    return rc;
}
