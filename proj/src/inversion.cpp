#include "inversion.hpp"

#include <cstring>
#include <fstream>

#include "errors.hpp"
#include "util.hpp"

namespace placer {

const LatentTensor& Trajectory::z0() const {
    if (latents.empty()) fail(ErrorKind::InvalidArgument, "empty trajectory");
    return ascending() ? latents.front() : latents.back();
}

const LatentTensor& Trajectory::zT() const {
    if (latents.empty()) fail(ErrorKind::InvalidArgument, "empty trajectory");
    return ascending() ? latents.back() : latents.front();
}

const LatentTensor& Trajectory::at_timestep(int timestep) const {
    for (const auto& z : latents) {
        if (z.timestep == timestep) return z;
    }
    fail(ErrorKind::Schedule,
         "trajectory has no latent at timestep " + std::to_string(timestep));
}

bool Trajectory::ascending() const {
    if (latents.size() < 2) return true;
    return latents.front().timestep < latents.back().timestep;
}

namespace {

void check_finite(const LatentTensor& z, const char* stage) {
    if (!z.all_finite()) {
        fail(ErrorKind::NumericalDivergence,
             std::string(stage) + " produced a non-finite latent at timestep " +
                 std::to_string(z.timestep));
    }
}

}  // namespace

Trajectory invert_latent(const LatentTensor& z0, const TextCondition& condition,
                         const DenoiserBackend& backend, const SchedulerState& sched,
                         const InversionConfig& cfg) {
    if (cfg.renoise_iterations < 0) {
        fail(ErrorKind::InvalidArgument, "renoise_iterations must be non-negative");
    }
    if (condition.is_null()) {
        fail(ErrorKind::InvalidArgument, "inversion requires a non-null condition");
    }
    if (z0.timestep != sched.nodes.front()) {
        fail(ErrorKind::Schedule, "inversion starts from the clean latent at timestep 0");
    }

    Trajectory traj;
    traj.condition = condition;
    traj.latents.reserve(sched.nodes.size());
    traj.latents.push_back(z0);
    check_finite(z0, "inversion input");

    for (size_t i = 0; i + 1 < sched.nodes.size(); i++) {
        const LatentTensor& cur = traj.latents.back();
        int next_t = sched.nodes[i + 1];

        NoisePrediction eps = backend.predict(cur, cur.timestep, condition);
        LatentTensor est = ddim_inverse_step(cur, eps, sched);
        check_finite(est, "renoise");
        for (int k = 0; k < cfg.renoise_iterations; k++) {
            eps = backend.predict(est, next_t, condition);
            est = ddim_inverse_step(cur, eps, sched);
            check_finite(est, "renoise");
        }
        traj.latents.push_back(std::move(est));
    }
    return traj;
}

Trajectory invert_image(const Image& img, const TextCondition& condition,
                        const DenoiserBackend& backend, const ImageCodec& codec,
                        const SchedulerState& sched, const InversionConfig& cfg) {
    return invert_latent(codec.encode(img), condition, backend, sched, cfg);
}

double reconstruction_error(const Trajectory& traj, const DenoiserBackend& backend,
                            const SchedulerState& sched) {
    const LatentTensor& z0 = traj.z0();
    LatentTensor z = traj.zT();
    // guidance weight 1: one conditional prediction per step
    while (z.timestep != sched.nodes.front()) {
        NoisePrediction eps = backend.predict(z, z.timestep, traj.condition);
        z = ddim_step(z, eps, sched);
        check_finite(z, "resampling");
    }
    return relative_l2_error(z.data, z0.data);
}

/*------------------------- trajectory cache file ---------------------------*/

namespace {

constexpr char kMagic[8] = {'P', 'L', 'T', 'R', 'A', 'J', '0', '1'};

template <typename T>
void write_pod(std::ofstream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
bool read_pod(std::ifstream& in, T& v) {
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    return static_cast<bool>(in);
}

}  // namespace

std::string trajectory_cache_key(const Image& img, const std::string& prompt,
                                 const SchedulerState& sched, const InversionConfig& cfg,
                                 const std::string& backend_id) {
    uint64_t h = fnv1a64(img.data.data(), img.data.size());
    h = fnv1a64(&img.width, sizeof(img.width), h);
    h = fnv1a64(&img.height, sizeof(img.height), h);
    uint64_t hp = fnv1a64(prompt);
    uint64_t hc = fnv1a64(backend_id);
    hc = fnv1a64(&cfg.renoise_iterations, sizeof(int), hc);
    hc = fnv1a64(sched.nodes.data(), sched.nodes.size() * sizeof(int), hc);
    return to_hex(h) + "-" + to_hex(hp) + "-" + to_hex(hc);
}

void save_trajectory(const std::string& path, const Trajectory& traj,
                     const SchedulerState& sched) {
    if (traj.latents.size() != sched.nodes.size()) {
        fail(ErrorKind::Schedule, "trajectory does not cover the schedule");
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::Io, "cannot open trajectory cache for writing: " + path);

    out.write(kMagic, sizeof(kMagic));
    const LatentTensor& first = traj.latents.front();
    write_pod<uint32_t>(out, static_cast<uint32_t>(first.channels));
    write_pod<uint32_t>(out, static_cast<uint32_t>(first.height));
    write_pod<uint32_t>(out, static_cast<uint32_t>(first.width));
    write_pod<uint32_t>(out, static_cast<uint32_t>(traj.latents.size()));
    for (int node : sched.nodes) write_pod<uint32_t>(out, static_cast<uint32_t>(node));
    for (double a : sched.alphas) write_pod<double>(out, a);
    write_pod<uint32_t>(out, static_cast<uint32_t>(traj.condition.prompt_text.size()));
    out.write(traj.condition.prompt_text.data(),
              static_cast<std::streamsize>(traj.condition.prompt_text.size()));
    for (const auto& z : traj.latents) {
        write_pod<uint32_t>(out, static_cast<uint32_t>(z.timestep));
        for (double v : z.data) write_pod<float>(out, static_cast<float>(v));
    }
    if (!out) fail(ErrorKind::Io, "short write on trajectory cache: " + path);
}

std::optional<Trajectory> load_trajectory(const std::string& path,
                                          const SchedulerState& sched,
                                          const TextCondition& condition) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return std::nullopt;

    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
        fail(ErrorKind::Io, "not a trajectory cache file: " + path);
    }
    uint32_t channels, height, width, count;
    if (!read_pod(in, channels) || !read_pod(in, height) || !read_pod(in, width) ||
        !read_pod(in, count)) {
        fail(ErrorKind::Io, "truncated trajectory cache header: " + path);
    }
    if (count != sched.nodes.size()) {
        fail(ErrorKind::Io, "trajectory cache does not match the requested schedule: " + path);
    }
    for (int node : sched.nodes) {
        uint32_t stored;
        if (!read_pod(in, stored) || stored != static_cast<uint32_t>(node)) {
            fail(ErrorKind::Io, "trajectory cache schedule mismatch: " + path);
        }
    }
    for (double alpha : sched.alphas) {
        double stored;
        if (!read_pod(in, stored) || stored != alpha) {
            fail(ErrorKind::Io, "trajectory cache alpha mismatch: " + path);
        }
    }
    uint32_t prompt_len;
    if (!read_pod(in, prompt_len)) fail(ErrorKind::Io, "truncated trajectory cache: " + path);
    std::string prompt(prompt_len, '\0');
    in.read(prompt.data(), prompt_len);
    if (!in || prompt != condition.prompt_text) {
        fail(ErrorKind::Io, "trajectory cache prompt mismatch: " + path);
    }

    Trajectory traj;
    traj.condition = condition;
    traj.latents.reserve(count);
    for (uint32_t i = 0; i < count; i++) {
        uint32_t timestep;
        if (!read_pod(in, timestep)) fail(ErrorKind::Io, "truncated trajectory cache: " + path);
        LatentTensor z = LatentTensor::zeros(static_cast<int>(channels), static_cast<int>(height),
                                             static_cast<int>(width), static_cast<int>(timestep));
        for (auto& v : z.data) {
            float f;
            if (!read_pod(in, f)) fail(ErrorKind::Io, "truncated trajectory cache: " + path);
            v = static_cast<double>(f);
        }
        traj.latents.push_back(std::move(z));
    }
    return traj;
}

}  // namespace placer
