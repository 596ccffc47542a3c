#include "placer.h"

#include <string>

#include "config.hpp"
#include "errors.hpp"
#include "runner.hpp"

using placer::Engine;
using placer::Error;
using placer::ErrorKind;

struct placer_engine {
    Engine engine;
    std::string last_error;
    std::string config_json;
};

namespace {

thread_local std::string g_create_error;

placer_status status_from_kind(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::Config: return PLACER_ERR_CONFIG;
        case ErrorKind::Io: return PLACER_ERR_IO;
        case ErrorKind::InsertionFailure: return PLACER_ERR_INSERTION_FAILURE;
        case ErrorKind::NumericalDivergence: return PLACER_ERR_NUMERICAL_DIVERGENCE;
        case ErrorKind::Transport: return PLACER_ERR_TRANSPORT;
        case ErrorKind::Unsupported: return PLACER_ERR_UNSUPPORTED;
        case ErrorKind::Internal: return PLACER_ERR_INTERNAL;
        default: return PLACER_ERR_INVALID_ARGUMENT;
    }
}

template <typename Fn>
placer_status guarded(placer_engine* engine, Fn&& fn) {
    if (!engine) return PLACER_ERR_INVALID_ARGUMENT;
    engine->last_error.clear();
    try {
        return fn();
    } catch (const Error& e) {
        engine->last_error = e.what();
        return status_from_kind(e.kind());
    } catch (const std::exception& e) {
        engine->last_error = e.what();
        return PLACER_ERR_INTERNAL;
    }
}

placer::InsertRequest to_request(const placer_insert_request* request) {
    placer::InsertRequest req;
    if (request) {
        if (request->scene_path) req.scene_path = request->scene_path;
        if (request->reference_path) req.reference_path = request->reference_path;
        if (request->scene_prompt) req.scene_prompt = request->scene_prompt;
        if (request->subject_prompt) req.subject_prompt = request->subject_prompt;
        if (request->run_id) req.run_id = request->run_id;
    }
    return req;
}

nlohmann::json overrides_from(const char* overrides_json) {
    if (!overrides_json || !*overrides_json) return nlohmann::json::object();
    return placer::config_json_from_text(overrides_json, "overrides");
}

}  // namespace

extern "C" {

const char* placer_version(void) { return "0.1.0"; }

const char* placer_status_name(placer_status status) {
    switch (status) {
        case PLACER_OK: return "ok";
        case PLACER_ERR_INVALID_ARGUMENT: return "invalid_argument";
        case PLACER_ERR_CONFIG: return "config";
        case PLACER_ERR_IO: return "io";
        case PLACER_ERR_INSERTION_FAILURE: return "insertion_failure";
        case PLACER_ERR_NUMERICAL_DIVERGENCE: return "numerical_divergence";
        case PLACER_ERR_TRANSPORT: return "transport";
        case PLACER_ERR_UNSUPPORTED: return "unsupported";
        case PLACER_ERR_PARTIAL_FAILURE: return "partial_failure";
        case PLACER_ERR_INTERNAL: return "internal";
    }
    return "unknown";
}

placer_status placer_engine_create(const char* config_json, placer_engine** out_engine) {
    if (!out_engine) return PLACER_ERR_INVALID_ARGUMENT;
    *out_engine = nullptr;
    g_create_error.clear();
    try {
        nlohmann::json doc = placer::config_json_from_text(
            config_json ? std::string(config_json) : std::string(), "config");
        placer::EngineConfig cfg = placer::config_from_json(doc);
        *out_engine = new placer_engine{Engine(cfg), {}, {}};
        return PLACER_OK;
    } catch (const Error& e) {
        g_create_error = e.what();
        return status_from_kind(e.kind());
    } catch (const std::exception& e) {
        g_create_error = e.what();
        return PLACER_ERR_INTERNAL;
    }
}

void placer_engine_destroy(placer_engine* engine) { delete engine; }

const char* placer_engine_last_error(const placer_engine* engine) {
    return engine ? engine->last_error.c_str() : "null engine";
}

const char* placer_last_error(void) { return g_create_error.c_str(); }

const char* placer_engine_config_json(placer_engine* engine) {
    if (!engine) return "";
    engine->config_json = engine->engine.resolved_config_json();
    return engine->config_json.c_str();
}

placer_status placer_insert(placer_engine* engine, const placer_insert_request* request,
                            const char* out_dir) {
    return guarded(engine, [&]() -> placer_status {
        if (!request || !out_dir) {
            engine->last_error = "request and out_dir are required";
            return PLACER_ERR_INVALID_ARGUMENT;
        }
        engine->engine.insert(to_request(request), out_dir,
                              overrides_from(request->overrides_json));
        return PLACER_OK;
    });
}

placer_status placer_eval(placer_engine* engine, const char* manifest_path, const char* out_dir,
                          const char* overrides_json, int jobs) {
    return guarded(engine, [&]() -> placer_status {
        if (!manifest_path || !out_dir) {
            engine->last_error = "manifest_path and out_dir are required";
            return PLACER_ERR_INVALID_ARGUMENT;
        }
        placer::EvalSummary summary =
            engine->engine.eval(manifest_path, out_dir, overrides_from(overrides_json), jobs);
        if (summary.failed > 0) {
            engine->last_error = std::to_string(summary.failed) + " of " +
                                 std::to_string(summary.rows) + " rows failed";
            return PLACER_ERR_PARTIAL_FAILURE;
        }
        return PLACER_OK;
    });
}

placer_status placer_ablate(placer_engine* engine, const placer_insert_request* request,
                            const char* variant_json, const char* out_dir) {
    return guarded(engine, [&]() -> placer_status {
        if (!request || !variant_json || !out_dir) {
            engine->last_error = "request, variant_json and out_dir are required";
            return PLACER_ERR_INVALID_ARGUMENT;
        }
        placer::AblationVariant variant = placer::AblationVariant::parse(variant_json);
        engine->engine.ablate(to_request(request), variant, out_dir,
                              overrides_from(request->overrides_json));
        return PLACER_OK;
    });
}

}  // extern "C"
