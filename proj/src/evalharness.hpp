#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "image.hpp"
#include "masks.hpp"

namespace placer {

// Unit-norm embedding provider (CLIP-like or DINO-like, by name).
class EmbedderClient {
public:
    virtual ~EmbedderClient() = default;
    virtual std::vector<double> embed_image(const Image& img) const = 0;
    virtual std::vector<double> embed_text(const std::string& text) const = 0;
    virtual std::string name() const = 0;
};

enum class StubEmbedderMode {
    Constant,   // every input maps to the same basis vector
    HashBasis,  // input hash selects an orthonormal basis vector
};

std::unique_ptr<EmbedderClient> make_stub_embedder(StubEmbedderMode mode, int dim,
                                                   const std::string& name);
std::unique_ptr<EmbedderClient> make_http_embedder(const std::string& url, int timeout_ms,
                                                   int retries, const std::string& name);

// Perceptual-distance provider. The stub returns the mean absolute pixel
// difference, which preserves the orderings the reports care about.
class LpipsClient {
public:
    virtual ~LpipsClient() = default;
    virtual double distance(const Image& a, const Image& b) const = 0;
    virtual std::string name() const = 0;
};

std::unique_ptr<LpipsClient> make_stub_lpips();
std::unique_ptr<LpipsClient> make_http_lpips(const std::string& url, int timeout_ms, int retries);

// Vision-language judge interface; callers supply the three scoring prompt
// templates. No implementation ships with the harness.
struct JudgePromptTemplates {
    std::string subject_fidelity;
    std::string text_alignment;
    std::string background_fidelity;
};

class JudgeClient {
public:
    virtual ~JudgeClient() = default;
    virtual double score_subject(const JudgePromptTemplates& prompts, const Image& reference,
                                 const Image& generated) = 0;
    virtual double score_text(const JudgePromptTemplates& prompts, const std::string& prompt,
                              const Image& generated) = 0;
    virtual double score_background(const JudgePromptTemplates& prompts, const Image& scene,
                                    const Image& generated) = 0;
};

double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b);

/*-------------------------------- metrics ----------------------------------*/

// Prompt alignment: cosine between the text and image embeddings.
double clip_t(const Image& result, const std::string& prompt, const EmbedderClient& client);

// Percentage of results in which the segmentation client finds a person.
double person_rate(const std::vector<Image>& results, const SegmentationClient& seg);

// Fills the subject region of both images with mid-gray, then asks the
// perceptual client for the distance.
double background_lpips(const Image& result, const Image& scene, const Mask& subject_mask,
                        const LpipsClient& client);

// Identity preservation: cosine between crops of the generated person and
// the reference subject. nullopt when the person mask is empty (excluded
// from aggregates).
std::optional<double> subject_similarity(const Image& result, const Mask& result_person_mask,
                                         const Image& reference, const Mask* reference_mask,
                                         const EmbedderClient& client, bool crop_to_bbox = true);

/*--------------------------------- report ----------------------------------*/

struct MetricsRow {
    std::string id;
    double clip_t = 0.0;
    double lpips = 0.0;
    bool person_detected = false;
    std::optional<double> clip_i;
    std::optional<double> dino;

    bool operator==(const MetricsRow&) const = default;
};

struct MetricsReport {
    std::vector<MetricsRow> rows;

    double mean_clip_t() const;
    double mean_lpips() const;
    double person_rate_percent() const;
    std::optional<double> mean_clip_i() const;  // nullopt when every row is excluded
    std::optional<double> mean_dino() const;

    std::string to_json() const;
    static MetricsReport from_json(const std::string& text);
    std::string to_table() const;

    bool operator==(const MetricsReport&) const = default;
};

/*-------------------------------- manifest ---------------------------------*/

struct ManifestRow {
    std::string scene_path;
    std::string reference_path;
    std::string scene_prompt;
    std::string subject_prompt;
};

// CSV rows of scene_path, reference_path, scene_prompt, subject_prompt;
// double quotes delimit fields containing commas. Blank lines and lines
// starting with '#' are skipped. Referenced paths must exist.
std::vector<ManifestRow> load_manifest(const std::string& path);

}  // namespace placer
