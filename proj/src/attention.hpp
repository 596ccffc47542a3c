#pragma once

#include <map>
#include <memory>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "backend.hpp"
#include "inversion.hpp"
#include "masks.hpp"
#include "scheduler.hpp"

namespace placer {

// Plain scaled dot-product self-attention: softmax over keys, row-wise,
// output (tokens, dim).
std::vector<double> self_attention(const AttentionState& state);

struct KVEntry {
    int tokens = 0;
    int dim = 0;
    std::vector<double> k, v;
};

// Per-(layer, timestep) reference key/value blocks, already restricted to
// subject tokens. Entries are write-once and read-only afterwards.
class AttentionKVCache {
public:
    void put(int layer_index, int timestep, KVEntry entry);
    const KVEntry* find(int layer_index, int timestep) const;
    bool has(int layer_index, int timestep) const { return find(layer_index, timestep) != nullptr; }
    size_t size() const { return entries_.size(); }
    // Lockstep replay keeps memory bounded to one timestep.
    void drop_other_timesteps(int timestep);
    const std::map<std::pair<int, int>, KVEntry>& entries() const { return entries_; }

private:
    std::map<std::pair<int, int>, KVEntry> entries_;
};

struct PersonalizationConfig {
    std::set<std::string> target_blocks{"Up-2", "Up-3", "Up-4"};
    bool conditional_branch_only = true;
    bool enabled = true;

    bool applies_to(const std::string& block, Branch branch) const {
        return enabled && target_blocks.count(block) > 0 &&
               (branch == Branch::Conditional || !conditional_branch_only);
    }
};

// Self-attention with the key/value token set extended by the cached
// reference tokens: K' = [K; K_ref], V' = [V; V_ref]. Falls back to plain
// self-attention when the layer's block is untargeted, the branch is
// excluded, or the cached entry is empty. `reference_mass_out`, when given,
// receives the mean attention weight assigned to reference tokens (0 when
// the plain path ran).
std::vector<double> extended_self_attention(const AttentionState& state,
                                            const AttentionKVCache& cache,
                                            const PersonalizationConfig& pcfg,
                                            double* reference_mass_out = nullptr);

// Replays the reference denoising pass from its inverted noise latent at
// guidance weight 1, capturing subject-masked K/V at every targeted layer.
// Runs on its own clone of the backend so capture hooks never touch the
// generation pass.
class ReferenceReplay {
public:
    ReferenceReplay(const Trajectory& ref_traj, const MaskPyramid& subject_mask,
                    const DenoiserBackend& backend, const SchedulerState& sched,
                    const PersonalizationConfig& pcfg);

    // Advances the replay until K/V for `timestep` are in `cache`; steps
    // must be requested in schedule order.
    void fill_for_timestep(int timestep, AttentionKVCache& cache);

    // Runs the whole pass into `cache` (precompute mode).
    void fill_all(AttentionKVCache& cache);

    int steps_taken() const { return steps_taken_; }

private:
    void capture_step(AttentionKVCache& cache);
    int steps_taken_ = 0;

    std::unique_ptr<DenoiserBackend> backend_;
    const SchedulerState& sched_;
    TextCondition condition_;
    LatentTensor current_;
    std::map<int, std::vector<size_t>> token_rows_;  // layer -> subject token indices
    std::vector<int> target_layers_;
};

// Precompute mode in one call: full cache over every scheduled timestep.
AttentionKVCache extract_reference_kv(const Trajectory& ref_traj,
                                      const MaskPyramid& subject_mask,
                                      const DenoiserBackend& backend,
                                      const SchedulerState& sched,
                                      const PersonalizationConfig& pcfg);

// Installs the extended-attention hooks on a generation backend and keeps
// the cache in lockstep with the sampling loop.
class AttentionController {
public:
    struct MassRow {
        int timestep;
        int layer_index;
        double reference_mass;
    };

    AttentionController(std::shared_ptr<AttentionKVCache> cache, PersonalizationConfig pcfg,
                        std::unique_ptr<ReferenceReplay> replay);

    void install(DenoiserBackend& backend);
    void begin_step(int timestep);

    void enable_mass_tracking(bool on) { track_mass_ = on; }
    const std::vector<MassRow>& mass_rows() const { return mass_rows_; }
    const PersonalizationConfig& config() const { return pcfg_; }
    int replay_steps() const { return replay_ ? replay_->steps_taken() : 0; }

private:
    std::shared_ptr<AttentionKVCache> cache_;
    PersonalizationConfig pcfg_;
    std::unique_ptr<ReferenceReplay> replay_;  // null in precompute mode
    bool track_mass_ = false;
    std::vector<MassRow> mass_rows_;
};

std::string attention_mass_csv(const std::vector<AttentionController::MassRow>& rows);

}  // namespace placer
