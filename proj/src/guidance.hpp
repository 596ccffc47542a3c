#pragma once

#include <optional>

#include "attention.hpp"
#include "backend.hpp"
#include "inversion.hpp"
#include "masks.hpp"
#include "scheduler.hpp"

namespace placer {

struct GuidanceConfig {
    double weight = 7.5;
    TextCondition conditional;
    TextCondition unconditional = TextCondition::none();
};

// Window bounds are latent indices counted as remaining steps: denoising
// starts at index num_steps and ends at index 0, so [10, 20] covers the
// late-stage steps of a 50-step pass.
struct BlendingConfig {
    int window_lo = 10;
    int window_hi = 20;
    bool enabled = true;

    bool in_window(int t_index) const {
        return enabled && t_index >= window_lo && t_index <= window_hi;
    }
};

// eps_hat = eps_uncond + w * (eps_cond - eps_uncond), from exactly two
// backend predictions. w = 1 returns the conditional prediction unchanged
// and w = 0 the unconditional one, so those identities are exact.
NoisePrediction guided_prediction(const LatentTensor& z, const GuidanceConfig& gcfg,
                                  const DenoiserBackend& backend);

// Inside the window: generated latent where the foreground mask is 1, the
// scene latent where it is 0. Outside the window (or when disabled) the
// generated latent passes through untouched.
LatentTensor blend_latent(const LatentTensor& z_gen, const LatentTensor& z_scene,
                          const MaskPyramid& fg_mask, int t_index, const BlendingConfig& bcfg);

struct BlendingContext {
    const Trajectory* scene_traj = nullptr;
    const MaskPyramid* fg_mask = nullptr;
    BlendingConfig cfg;
};

// Full guided denoising loop from z_T down to z_0. When a blending context
// is given, each produced latent is blended against the scene trajectory's
// latent at the same timestep; when an attention controller is given, it is
// kept in lockstep with the loop and its hooks shape the conditional branch.
Trajectory sample(const LatentTensor& z_T, const GuidanceConfig& gcfg,
                  const DenoiserBackend& backend, const SchedulerState& sched,
                  const BlendingContext* blending = nullptr,
                  AttentionController* attn_ctl = nullptr);

}  // namespace placer
