#include "evalharness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include <nlohmann/json.hpp>

#include "errors.hpp"
#include "http_client.hpp"
#include "tensor.hpp"
#include "util.hpp"

namespace placer {

namespace {

void check_unit_norm(const std::vector<double>& v, const std::string& who) {
    double n = l2_norm(v);
    if (std::fabs(n - 1.0) > 1e-6) {
        fail(ErrorKind::Internal, who + " returned a non-unit embedding (norm " +
                                      format_double(n) + ")");
    }
}

class StubEmbedder : public EmbedderClient {
public:
    StubEmbedder(StubEmbedderMode mode, int dim, std::string name)
        : mode_(mode), dim_(dim), name_(std::move(name)) {
        if (dim < 1) fail(ErrorKind::InvalidArgument, "embedder dim must be >= 1");
    }

    std::vector<double> embed_image(const Image& img) const override {
        uint64_t h = fnv1a64(img.data.data(), img.data.size(), fnv1a64(name_));
        h = fnv1a64(&img.width, sizeof(img.width), h);
        return basis(h);
    }

    std::vector<double> embed_text(const std::string& text) const override {
        return basis(fnv1a64(text, fnv1a64(name_)));
    }

    std::string name() const override { return name_; }

private:
    std::vector<double> basis(uint64_t hash) const {
        std::vector<double> v(static_cast<size_t>(dim_), 0.0);
        size_t idx = mode_ == StubEmbedderMode::Constant
                         ? 0
                         : static_cast<size_t>(hash % static_cast<uint64_t>(dim_));
        v[idx] = 1.0;
        return v;
    }

    StubEmbedderMode mode_;
    int dim_;
    std::string name_;
};

class HttpEmbedder : public EmbedderClient {
public:
    HttpEmbedder(std::string url, int timeout_ms, int retries, std::string name)
        : url_(std::move(url)), timeout_ms_(timeout_ms), retries_(retries),
          name_(std::move(name)) {}

    std::vector<double> embed_image(const Image& img) const override {
        std::vector<uint8_t> png = encode_png(img);
        HttpResponse resp = http_post(url_, "/embed_image", std::string(png.begin(), png.end()),
                                      "image/png", timeout_ms_, retries_);
        return parse_embedding(resp.body);
    }

    std::vector<double> embed_text(const std::string& text) const override {
        nlohmann::json req{{"text", text}};
        HttpResponse resp =
            http_post(url_, "/embed_text", req.dump(), "application/json", timeout_ms_, retries_);
        return parse_embedding(resp.body);
    }

    std::string name() const override { return name_; }

private:
    std::vector<double> parse_embedding(const std::string& body) const {
        auto parsed = nlohmann::json::parse(body, nullptr, false);
        if (parsed.is_discarded() || !parsed.contains("embedding")) {
            fail(ErrorKind::Transport, "embedder returned malformed JSON");
        }
        auto v = parsed["embedding"].get<std::vector<double>>();
        double n = l2_norm(v);
        if (n <= 0.0) fail(ErrorKind::Transport, "embedder returned a zero embedding");
        for (auto& x : v) x /= n;
        return v;
    }

    std::string url_;
    int timeout_ms_;
    int retries_;
    std::string name_;
};

class StubLpips : public LpipsClient {
public:
    double distance(const Image& a, const Image& b) const override {
        if (!a.same_shape(b)) {
            fail(ErrorKind::InvalidArgument, "perceptual distance needs same-shaped images");
        }
        if (a.data.empty()) return 0.0;
        double acc = 0.0;
        for (size_t i = 0; i < a.data.size(); i++) {
            acc += std::fabs(static_cast<double>(a.data[i]) - static_cast<double>(b.data[i]));
        }
        return acc / (255.0 * static_cast<double>(a.data.size()));
    }

    std::string name() const override { return "stub-mad"; }
};

class HttpLpips : public LpipsClient {
public:
    HttpLpips(std::string url, int timeout_ms, int retries)
        : url_(std::move(url)), timeout_ms_(timeout_ms), retries_(retries) {}

    double distance(const Image& a, const Image& b) const override {
        nlohmann::json req{{"image_a", base64_encode(encode_png(a))},
                           {"image_b", base64_encode(encode_png(b))}};
        HttpResponse resp =
            http_post(url_, "/lpips", req.dump(), "application/json", timeout_ms_, retries_);
        auto parsed = nlohmann::json::parse(resp.body, nullptr, false);
        if (parsed.is_discarded() || !parsed.contains("distance")) {
            fail(ErrorKind::Transport, "lpips endpoint returned malformed JSON");
        }
        return parsed["distance"].get<double>();
    }

    std::string name() const override { return "http:" + url_; }

private:
    std::string url_;
    int timeout_ms_;
    int retries_;
};

}  // namespace

std::unique_ptr<EmbedderClient> make_stub_embedder(StubEmbedderMode mode, int dim,
                                                   const std::string& name) {
    return std::make_unique<StubEmbedder>(mode, dim, name);
}

std::unique_ptr<EmbedderClient> make_http_embedder(const std::string& url, int timeout_ms,
                                                   int retries, const std::string& name) {
    return std::make_unique<HttpEmbedder>(url, timeout_ms, retries, name);
}

std::unique_ptr<LpipsClient> make_stub_lpips() { return std::make_unique<StubLpips>(); }

std::unique_ptr<LpipsClient> make_http_lpips(const std::string& url, int timeout_ms,
                                             int retries) {
    return std::make_unique<HttpLpips>(url, timeout_ms, retries);
}

double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size() || a.empty()) {
        fail(ErrorKind::InvalidArgument, "cosine similarity needs same-length vectors");
    }
    double dot = 0.0;
    for (size_t i = 0; i < a.size(); i++) dot += a[i] * b[i];
    return dot;
}

double clip_t(const Image& result, const std::string& prompt, const EmbedderClient& client) {
    auto ei = client.embed_image(result);
    auto et = client.embed_text(prompt);
    check_unit_norm(ei, client.name());
    check_unit_norm(et, client.name());
    return cosine_similarity(et, ei);
}

double person_rate(const std::vector<Image>& results, const SegmentationClient& seg) {
    if (results.empty()) {
        fail(ErrorKind::InvalidArgument, "person_rate needs a non-empty batch");
    }
    size_t detected = 0;
    for (const auto& img : results) {
        auto mask = seg.segment_person(img);
        if (mask && !mask->empty_mask()) detected++;
    }
    return 100.0 * static_cast<double>(detected) / static_cast<double>(results.size());
}

double background_lpips(const Image& result, const Image& scene, const Mask& subject_mask,
                        const LpipsClient& client) {
    if (!result.same_shape(scene)) {
        fail(ErrorKind::InvalidArgument, "result and scene images must share shape");
    }
    if (subject_mask.width != result.width || subject_mask.height != result.height) {
        fail(ErrorKind::InvalidArgument, "subject mask must be at image resolution");
    }
    Image a = result, b = scene;
    for (int y = 0; y < result.height; y++) {
        for (int x = 0; x < result.width; x++) {
            if (!subject_mask.at(y, x)) continue;
            for (int c = 0; c < result.channels; c++) {
                a.at(y, x, c) = 128;
                b.at(y, x, c) = 128;
            }
        }
    }
    return client.distance(a, b);
}

namespace {

Image crop_bbox(const Image& img, const Mask& mask) {
    int x0 = mask.width, y0 = mask.height, x1 = -1, y1 = -1;
    for (int y = 0; y < mask.height; y++) {
        for (int x = 0; x < mask.width; x++) {
            if (!mask.at(y, x)) continue;
            x0 = std::min(x0, x);
            y0 = std::min(y0, y);
            x1 = std::max(x1, x);
            y1 = std::max(y1, y);
        }
    }
    if (x1 < 0) fail(ErrorKind::DegenerateMask, "cannot crop to an empty mask");
    Image out = Image::blank(x1 - x0 + 1, y1 - y0 + 1, img.channels);
    for (int y = y0; y <= y1; y++) {
        for (int x = x0; x <= x1; x++) {
            for (int c = 0; c < img.channels; c++) {
                out.at(y - y0, x - x0, c) = img.at(y, x, c);
            }
        }
    }
    return out;
}

}  // namespace

std::optional<double> subject_similarity(const Image& result, const Mask& result_person_mask,
                                         const Image& reference, const Mask* reference_mask,
                                         const EmbedderClient& client, bool crop_to_bbox) {
    if (result_person_mask.empty_mask()) {
        return std::nullopt;
    }
    Image gen_crop = crop_to_bbox ? crop_bbox(result, result_person_mask) : result;
    Image ref_crop = (crop_to_bbox && reference_mask && !reference_mask->empty_mask())
                         ? crop_bbox(reference, *reference_mask)
                         : reference;
    auto eg = client.embed_image(gen_crop);
    auto er = client.embed_image(ref_crop);
    check_unit_norm(eg, client.name());
    check_unit_norm(er, client.name());
    return cosine_similarity(eg, er);
}

/*--------------------------------- report ----------------------------------*/

namespace {

double mean_of(const std::vector<double>& v) {
    double acc = 0.0;
    for (double x : v) acc += x;
    return v.empty() ? 0.0 : acc / static_cast<double>(v.size());
}

}  // namespace

double MetricsReport::mean_clip_t() const {
    std::vector<double> v;
    for (const auto& r : rows) v.push_back(r.clip_t);
    return mean_of(v);
}

double MetricsReport::mean_lpips() const {
    std::vector<double> v;
    for (const auto& r : rows) v.push_back(r.lpips);
    return mean_of(v);
}

double MetricsReport::person_rate_percent() const {
    if (rows.empty()) return 0.0;
    size_t n = 0;
    for (const auto& r : rows) n += r.person_detected;
    return 100.0 * static_cast<double>(n) / static_cast<double>(rows.size());
}

std::optional<double> MetricsReport::mean_clip_i() const {
    std::vector<double> v;
    for (const auto& r : rows) {
        if (r.clip_i) v.push_back(*r.clip_i);
    }
    if (v.empty()) return std::nullopt;
    return mean_of(v);
}

std::optional<double> MetricsReport::mean_dino() const {
    std::vector<double> v;
    for (const auto& r : rows) {
        if (r.dino) v.push_back(*r.dino);
    }
    if (v.empty()) return std::nullopt;
    return mean_of(v);
}

std::string MetricsReport::to_json() const {
    nlohmann::json out;
    out["rows"] = nlohmann::json::array();
    for (const auto& r : rows) {
        nlohmann::json row{{"id", r.id},
                           {"clip_t", r.clip_t},
                           {"lpips", r.lpips},
                           {"person_detected", r.person_detected}};
        row["clip_i"] = r.clip_i ? nlohmann::json(*r.clip_i) : nlohmann::json(nullptr);
        row["dino"] = r.dino ? nlohmann::json(*r.dino) : nlohmann::json(nullptr);
        out["rows"].push_back(std::move(row));
    }
    nlohmann::json agg{{"clip_t", mean_clip_t()},
                       {"person_rate", person_rate_percent()},
                       {"lpips", mean_lpips()}};
    agg["clip_i"] = mean_clip_i() ? nlohmann::json(*mean_clip_i()) : nlohmann::json(nullptr);
    agg["dino"] = mean_dino() ? nlohmann::json(*mean_dino()) : nlohmann::json(nullptr);
    out["aggregates"] = std::move(agg);
    return out.dump(2) + "\n";
}

MetricsReport MetricsReport::from_json(const std::string& text) {
    auto parsed = nlohmann::json::parse(text, nullptr, false);
    if (parsed.is_discarded() || !parsed.contains("rows")) {
        fail(ErrorKind::Io, "malformed metrics report JSON");
    }
    MetricsReport report;
    for (const auto& row : parsed["rows"]) {
        MetricsRow r;
        r.id = row.at("id").get<std::string>();
        r.clip_t = row.at("clip_t").get<double>();
        r.lpips = row.at("lpips").get<double>();
        r.person_detected = row.at("person_detected").get<bool>();
        if (!row.at("clip_i").is_null()) r.clip_i = row.at("clip_i").get<double>();
        if (!row.at("dino").is_null()) r.dino = row.at("dino").get<double>();
        report.rows.push_back(std::move(r));
    }
    return report;
}

std::string MetricsReport::to_table() const {
    std::ostringstream out;
    char line[256];
    snprintf(line, sizeof(line), "%-24s %8s %11s %8s %8s %8s\n", "sample", "CLIP-T",
             "Person (%)", "LPIPS", "CLIP-I", "DINO");
    out << line;
    auto fmt_opt = [](const std::optional<double>& v) {
        char buf[32];
        if (v) {
            snprintf(buf, sizeof(buf), "%8.3f", *v);
        } else {
            snprintf(buf, sizeof(buf), "%8s", "-");
        }
        return std::string(buf);
    };
    for (const auto& r : rows) {
        snprintf(line, sizeof(line), "%-24s %8.3f %11s %8.3f %s %s\n", r.id.c_str(), r.clip_t,
                 r.person_detected ? "yes" : "no", r.lpips, fmt_opt(r.clip_i).c_str(),
                 fmt_opt(r.dino).c_str());
        out << line;
    }
    snprintf(line, sizeof(line), "%-24s %8.3f %11.1f %8.3f %s %s\n", "mean", mean_clip_t(),
             person_rate_percent(), mean_lpips(), fmt_opt(mean_clip_i()).c_str(),
             fmt_opt(mean_dino()).c_str());
    out << line;
    return out.str();
}

/*-------------------------------- manifest ---------------------------------*/

namespace {

std::vector<std::string> parse_csv_line(const std::string& line, size_t line_no) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (size_t i = 0; i < line.size(); i++) {
        char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur.push_back('"');
                    i++;
                } else {
                    quoted = false;
                }
            } else {
                cur.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(trim(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (quoted) {
        fail(ErrorKind::Io, "manifest line " + std::to_string(line_no) + ": unterminated quote");
    }
    fields.push_back(trim(cur));
    return fields;
}

}  // namespace

std::vector<ManifestRow> load_manifest(const std::string& path) {
    std::string text = read_file(path);
    std::vector<ManifestRow> rows;
    size_t line_no = 0;
    for (const auto& raw : split(text, '\n')) {
        line_no++;
        std::string line = trim(raw);
        if (line.empty() || line[0] == '#') continue;
        auto fields = parse_csv_line(line, line_no);
        if (fields.size() != 4) {
            fail(ErrorKind::Io, "manifest line " + std::to_string(line_no) + ": expected 4 fields "
                                "(scene_path, reference_path, scene_prompt, subject_prompt), got " +
                                    std::to_string(fields.size()));
        }
        ManifestRow row{fields[0], fields[1], fields[2], fields[3]};
        if (!file_exists(row.scene_path)) {
            fail(ErrorKind::Io, "manifest line " + std::to_string(line_no) +
                                    ": scene image not found: " + row.scene_path);
        }
        if (!file_exists(row.reference_path)) {
            fail(ErrorKind::Io, "manifest line " + std::to_string(line_no) +
                                    ": reference image not found: " + row.reference_path);
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty()) {
        fail(ErrorKind::Io, "manifest has no rows: " + path);
    }
    return rows;
}

}  // namespace placer
