#include "guidance.hpp"

#include <string>

#include "errors.hpp"

namespace placer {

NoisePrediction guided_prediction(const LatentTensor& z, const GuidanceConfig& gcfg,
                                  const DenoiserBackend& backend) {
    if (gcfg.weight < 0.0) {
        fail(ErrorKind::InvalidArgument, "guidance weight must be non-negative");
    }
    if (!gcfg.unconditional.is_null()) {
        fail(ErrorKind::InvalidArgument, "the unconditional branch must use the null condition");
    }
    NoisePrediction eps_u = backend.predict(z, z.timestep, gcfg.unconditional);
    NoisePrediction eps_c = backend.predict(z, z.timestep, gcfg.conditional);
    if (gcfg.weight == 1.0) return eps_c;
    if (gcfg.weight == 0.0) return eps_u;
    NoisePrediction out = eps_u;
    for (size_t i = 0; i < out.data.size(); i++) {
        out.data[i] = eps_u.data[i] + gcfg.weight * (eps_c.data[i] - eps_u.data[i]);
    }
    return out;
}

LatentTensor blend_latent(const LatentTensor& z_gen, const LatentTensor& z_scene,
                          const MaskPyramid& fg_mask, int t_index, const BlendingConfig& bcfg) {
    if (bcfg.window_lo < 0 || bcfg.window_lo > bcfg.window_hi) {
        fail(ErrorKind::InvalidArgument, "blending window must satisfy 0 <= lo <= hi");
    }
    if (!bcfg.in_window(t_index)) {
        return z_gen;
    }
    if (!z_gen.same_shape(z_scene) || z_gen.timestep != z_scene.timestep) {
        fail(ErrorKind::Shape, "blend inputs must share shape and timestep");
    }
    if (z_gen.height != z_gen.width) {
        fail(ErrorKind::Resolution, "latent blending expects a square latent grid");
    }
    const Mask& fg = fg_mask.level(z_gen.width);

    LatentTensor out = z_gen;
    const size_t plane = static_cast<size_t>(z_gen.height) * z_gen.width;
    for (int c = 0; c < z_gen.channels; c++) {
        const size_t base = static_cast<size_t>(c) * plane;
        for (size_t p = 0; p < plane; p++) {
            if (!fg.data[p]) out.data[base + p] = z_scene.data[base + p];
        }
    }
    return out;
}

Trajectory sample(const LatentTensor& z_T, const GuidanceConfig& gcfg,
                  const DenoiserBackend& backend, const SchedulerState& sched,
                  const BlendingContext* blending, AttentionController* attn_ctl) {
    if (z_T.timestep != sched.max_timestep()) {
        fail(ErrorKind::Schedule, "sampling must start from the max-timestep latent");
    }
    if (blending) {
        if (!blending->scene_traj || !blending->fg_mask) {
            fail(ErrorKind::InvalidArgument, "blending context needs a scene trajectory and mask");
        }
        if (blending->scene_traj->latents.size() != sched.nodes.size()) {
            fail(ErrorKind::Schedule, "scene trajectory does not cover the sampling schedule");
        }
        for (size_t i = 0; i < sched.nodes.size(); i++) {
            // inversion trajectories are ascending; match node-for-node
            if (blending->scene_traj->latents[i].timestep != sched.nodes[i]) {
                fail(ErrorKind::Schedule, "scene trajectory timesteps do not match the schedule");
            }
        }
        if (blending->cfg.window_hi > sched.num_steps) {
            fail(ErrorKind::InvalidArgument, "blending window exceeds the step count");
        }
    }

    Trajectory traj;
    traj.condition = gcfg.conditional;
    traj.latents.reserve(sched.nodes.size());
    traj.latents.push_back(z_T);

    LatentTensor z = z_T;
    for (int i = sched.num_steps; i >= 1; i--) {
        if (attn_ctl) attn_ctl->begin_step(z.timestep);
        NoisePrediction eps = guided_prediction(z, gcfg, backend);
        z = ddim_step(z, eps, sched);
        if (blending) {
            z = blend_latent(z, blending->scene_traj->latents[static_cast<size_t>(i - 1)],
                             *blending->fg_mask, i - 1, blending->cfg);
        }
        if (!z.all_finite()) {
            fail(ErrorKind::NumericalDivergence,
                 "sampling produced a non-finite latent at timestep " + std::to_string(z.timestep));
        }
        traj.latents.push_back(z);
    }
    return traj;
}

}  // namespace placer
