#pragma once

#include <optional>
#include <string>
#include <vector>

#include "backend.hpp"
#include "scheduler.hpp"

namespace placer {

// Ordered latent sequence produced by inversion (t = 0 up to t = T) or by
// sampling (t = T down to 0), one latent per schedule node.
struct Trajectory {
    std::vector<LatentTensor> latents;
    TextCondition condition;

    const LatentTensor& z0() const;  // clean end (timestep 0)
    const LatentTensor& zT() const;  // noisy end (max timestep)
    const LatentTensor& at_timestep(int timestep) const;
    bool ascending() const;  // true for inversion trajectories
};

struct InversionConfig {
    int renoise_iterations = 2;      // K; 0 means plain DDIM inversion
    bool guidance_disabled = true;   // always true here: one conditional predict per iterate
};

// Fixed-point renoising from a clean latent: at each transition the
// estimate is initialized by DDIM inversion with the noise predicted at the
// current latent, then refined K times by re-predicting at the estimate
// (at the higher timestep) and renoising the current latent with that
// prediction. The final iterate is taken as-is; no averaging across
// iterates, and never more than one prediction per iterate.
Trajectory invert_latent(const LatentTensor& z0, const TextCondition& condition,
                         const DenoiserBackend& backend, const SchedulerState& sched,
                         const InversionConfig& cfg);

Trajectory invert_image(const Image& img, const TextCondition& condition,
                        const DenoiserBackend& backend, const ImageCodec& codec,
                        const SchedulerState& sched, const InversionConfig& cfg);

// Samples from the trajectory's zT under its own condition at guidance
// weight 1 and returns the relative L2 error against its z0.
double reconstruction_error(const Trajectory& traj, const DenoiserBackend& backend,
                            const SchedulerState& sched);

/*------------------------- trajectory cache file ---------------------------*/
// Binary format: magic "PLTRAJ01", header (u32 channels/height/width/count,
// u32 node timesteps, f64 alphas, length-prefixed prompt), then the latents
// as little-endian float32 in trajectory order.

std::string trajectory_cache_key(const Image& img, const std::string& prompt,
                                 const SchedulerState& sched, const InversionConfig& cfg,
                                 const std::string& backend_id);

void save_trajectory(const std::string& path, const Trajectory& traj,
                     const SchedulerState& sched);

// nullopt when the file is absent; errors on a corrupt or mismatched file.
std::optional<Trajectory> load_trajectory(const std::string& path,
                                          const SchedulerState& sched,
                                          const TextCondition& condition);

}  // namespace placer
