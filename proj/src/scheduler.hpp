#pragma once

#include <vector>

#include "tensor.hpp"

namespace placer {

// Deterministic DDIM schedule (eta = 0).
//
// The schedule places num_steps + 1 latent nodes on the training-timestep
// axis: nodes[0] = 0 (clean latent) up to nodes[num_steps] (full noise).
// `timestep_sequence` lists the num_steps timesteps visited by a denoising
// pass in execution order, highest first; the final step targets t = 0,
// which is a node but not a prediction site.
struct SchedulerState {
    int num_steps = 0;
    int training_timesteps = 0;
    std::vector<int> nodes;              // num_steps + 1, strictly increasing, nodes[0] == 0
    std::vector<double> alphas;          // cumulative signal level at each node, in (0, 1]
    std::vector<int> timestep_sequence;  // num_steps entries, strictly decreasing

    // Standard variance-preserving schedule (sqrt-linear betas) with
    // `num_steps` inference steps spread over `training_timesteps`.
    static SchedulerState ddim(int num_steps, int training_timesteps = 1000);

    // Arbitrary node/alpha grid, mostly for tests (e.g. a degenerate
    // constant-alpha schedule).
    static SchedulerState custom(std::vector<int> nodes, std::vector<double> alphas);

    int node_index(int timestep) const;  // -1 when the timestep is not a node
    int max_timestep() const { return nodes.back(); }
    bool is_prediction_timestep(int timestep) const;
};

// One deterministic denoising step: takes z at a scheduled timestep to the
// next lower node under the given noise prediction.
LatentTensor ddim_step(const LatentTensor& z, const NoisePrediction& eps,
                       const SchedulerState& sched);

// Algebraic inverse of ddim_step for the same eps: takes z at a node to the
// next higher node. Also serves as the renoising primitive during inversion.
LatentTensor ddim_inverse_step(const LatentTensor& z, const NoisePrediction& eps,
                               const SchedulerState& sched);

}  // namespace placer
