#include "scheduler.hpp"

#include <cmath>
#include <string>

#include "errors.hpp"

namespace placer {

SchedulerState SchedulerState::ddim(int num_steps, int training_timesteps) {
    if (num_steps < 0) {
        fail(ErrorKind::Schedule, "num_steps must be non-negative");
    }
    if (training_timesteps < 1 || (num_steps > 0 && num_steps > training_timesteps)) {
        fail(ErrorKind::Schedule, "training_timesteps must be >= num_steps and >= 1");
    }

    // beta ramp linear in sqrt space, the usual latent-diffusion choice
    const double beta_lo = std::sqrt(0.00085);
    const double beta_hi = std::sqrt(0.012);
    std::vector<double> alpha_bar(static_cast<size_t>(training_timesteps) + 1);
    alpha_bar[0] = 1.0;
    double product = 1.0;
    for (int i = 1; i <= training_timesteps; i++) {
        double frac = training_timesteps == 1 ? 0.0
                                              : static_cast<double>(i - 1) / (training_timesteps - 1);
        double beta = beta_lo + (beta_hi - beta_lo) * frac;
        product *= 1.0 - beta * beta;
        alpha_bar[static_cast<size_t>(i)] = product;
    }

    SchedulerState s;
    s.num_steps = num_steps;
    s.training_timesteps = training_timesteps;
    s.nodes.resize(static_cast<size_t>(num_steps) + 1);
    s.alphas.resize(static_cast<size_t>(num_steps) + 1);
    for (int i = 0; i <= num_steps; i++) {
        int t = num_steps == 0
                    ? 0
                    : static_cast<int>(std::llround(static_cast<double>(i) * training_timesteps / num_steps));
        s.nodes[static_cast<size_t>(i)] = t;
        s.alphas[static_cast<size_t>(i)] = alpha_bar[static_cast<size_t>(t)];
    }
    for (int i = 1; i <= num_steps; i++) {
        if (s.nodes[static_cast<size_t>(i)] <= s.nodes[static_cast<size_t>(i - 1)]) {
            fail(ErrorKind::Schedule, "node timesteps are not strictly increasing");
        }
    }
    s.timestep_sequence.resize(static_cast<size_t>(num_steps));
    for (int i = 0; i < num_steps; i++) {
        s.timestep_sequence[static_cast<size_t>(i)] = s.nodes[static_cast<size_t>(num_steps - i)];
    }
    return s;
}

SchedulerState SchedulerState::custom(std::vector<int> nodes, std::vector<double> alphas) {
    if (nodes.empty() || nodes.size() != alphas.size()) {
        fail(ErrorKind::Schedule, "custom schedule needs matching non-empty nodes and alphas");
    }
    if (nodes.front() != 0) {
        fail(ErrorKind::Schedule, "first node must be timestep 0");
    }
    for (size_t i = 1; i < nodes.size(); i++) {
        if (nodes[i] <= nodes[i - 1]) {
            fail(ErrorKind::Schedule, "node timesteps must be strictly increasing");
        }
        if (alphas[i] > alphas[i - 1]) {
            fail(ErrorKind::Schedule, "alphas must be non-increasing in t");
        }
    }
    for (double a : alphas) {
        if (!(a > 0.0) || a > 1.0) {
            fail(ErrorKind::Schedule, "alphas must lie in (0, 1]");
        }
    }
    SchedulerState s;
    s.num_steps = static_cast<int>(nodes.size()) - 1;
    s.training_timesteps = nodes.back();
    s.nodes = std::move(nodes);
    s.alphas = std::move(alphas);
    s.timestep_sequence.resize(static_cast<size_t>(s.num_steps));
    for (int i = 0; i < s.num_steps; i++) {
        s.timestep_sequence[static_cast<size_t>(i)] = s.nodes[static_cast<size_t>(s.num_steps - i)];
    }
    return s;
}

int SchedulerState::node_index(int timestep) const {
    for (size_t i = 0; i < nodes.size(); i++) {
        if (nodes[i] == timestep) return static_cast<int>(i);
    }
    return -1;
}

bool SchedulerState::is_prediction_timestep(int timestep) const {
    return node_index(timestep) >= 1;
}

namespace {

void check_shapes(const LatentTensor& z, const NoisePrediction& eps) {
    if (!eps.matches(z)) {
        fail(ErrorKind::Shape, "latent and noise prediction shapes differ");
    }
}

}  // namespace

LatentTensor ddim_step(const LatentTensor& z, const NoisePrediction& eps,
                       const SchedulerState& sched) {
    check_shapes(z, eps);
    int i = sched.node_index(z.timestep);
    if (i < 0) {
        fail(ErrorKind::Schedule,
             "timestep " + std::to_string(z.timestep) + " is not in the schedule");
    }
    if (i == 0) {
        fail(ErrorKind::Schedule, "cannot denoise below timestep 0");
    }
    double a_hi = sched.alphas[static_cast<size_t>(i)];
    double a_lo = sched.alphas[static_cast<size_t>(i - 1)];
    double c = std::sqrt(a_lo / a_hi);
    double d = std::sqrt(1.0 - a_lo) - c * std::sqrt(1.0 - a_hi);

    LatentTensor out = z;
    out.timestep = sched.nodes[static_cast<size_t>(i - 1)];
    for (size_t k = 0; k < out.data.size(); k++) {
        out.data[k] = c * z.data[k] + d * eps.data[k];
    }
    return out;
}

LatentTensor ddim_inverse_step(const LatentTensor& z, const NoisePrediction& eps,
                               const SchedulerState& sched) {
    check_shapes(z, eps);
    int i = sched.node_index(z.timestep);
    if (i < 0) {
        fail(ErrorKind::Schedule,
             "timestep " + std::to_string(z.timestep) + " is not in the schedule");
    }
    if (i == static_cast<int>(sched.nodes.size()) - 1) {
        fail(ErrorKind::Schedule, "cannot renoise above the last scheduled timestep");
    }
    double a_lo = sched.alphas[static_cast<size_t>(i)];
    double a_hi = sched.alphas[static_cast<size_t>(i + 1)];
    double c = std::sqrt(a_hi / a_lo);
    double d = std::sqrt(1.0 - a_hi) - c * std::sqrt(1.0 - a_lo);

    LatentTensor out = z;
    out.timestep = sched.nodes[static_cast<size_t>(i + 1)];
    for (size_t k = 0; k < out.data.size(); k++) {
        out.data[k] = c * z.data[k] + d * eps.data[k];
    }
    return out;
}

}  // namespace placer
