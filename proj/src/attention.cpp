#include "attention.hpp"

#include <cmath>
#include <sstream>

#include "errors.hpp"
#include "util.hpp"

namespace placer {

namespace {

// out[i] = softmax_j(q_i . k_j / sqrt(d)) v_j over `key_count` keys taken
// from two concatenated row blocks.
std::vector<double> attend(const std::vector<double>& q, int tokens, int dim,
                           const double* k_a, int n_a, const double* v_a,
                           const double* k_b, int n_b, const double* v_b,
                           double* tail_mass_out) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(dim));
    const int n = n_a + n_b;
    std::vector<double> out(static_cast<size_t>(tokens) * dim, 0.0);
    std::vector<double> logits(static_cast<size_t>(n));
    double tail_mass_acc = 0.0;

    for (int i = 0; i < tokens; i++) {
        const double* qi = q.data() + static_cast<size_t>(i) * dim;
        double row_max = -1e300;
        for (int j = 0; j < n; j++) {
            const double* kj = j < n_a ? k_a + static_cast<size_t>(j) * dim
                                       : k_b + static_cast<size_t>(j - n_a) * dim;
            double dot = 0.0;
            for (int c = 0; c < dim; c++) dot += qi[c] * kj[c];
            logits[static_cast<size_t>(j)] = dot * scale;
            if (logits[static_cast<size_t>(j)] > row_max) row_max = logits[static_cast<size_t>(j)];
        }
        double denom = 0.0;
        for (int j = 0; j < n; j++) {
            logits[static_cast<size_t>(j)] = std::exp(logits[static_cast<size_t>(j)] - row_max);
            denom += logits[static_cast<size_t>(j)];
        }
        double tail = 0.0;
        double* oi = out.data() + static_cast<size_t>(i) * dim;
        for (int j = 0; j < n; j++) {
            double w = logits[static_cast<size_t>(j)] / denom;
            if (j >= n_a) tail += w;
            const double* vj = j < n_a ? v_a + static_cast<size_t>(j) * dim
                                       : v_b + static_cast<size_t>(j - n_a) * dim;
            for (int c = 0; c < dim; c++) oi[c] += w * vj[c];
        }
        tail_mass_acc += tail;
    }
    if (tail_mass_out) *tail_mass_out = tokens > 0 ? tail_mass_acc / tokens : 0.0;
    return out;
}

void check_state(const AttentionState& state) {
    size_t expected = static_cast<size_t>(state.tokens) * state.dim;
    if (state.tokens <= 0 || state.dim <= 0 || state.q.size() != expected ||
        state.k.size() != expected || state.v.size() != expected) {
        fail(ErrorKind::Shape, "attention state Q/K/V must all be (tokens, dim)");
    }
}

}  // namespace

std::vector<double> self_attention(const AttentionState& state) {
    check_state(state);
    return attend(state.q, state.tokens, state.dim, state.k.data(), state.tokens,
                  state.v.data(), nullptr, 0, nullptr, nullptr);
}

void AttentionKVCache::put(int layer_index, int timestep, KVEntry entry) {
    auto key = std::make_pair(layer_index, timestep);
    if (entries_.count(key)) {
        fail(ErrorKind::Internal, "KV cache entry written twice for layer " +
                                      std::to_string(layer_index) + ", timestep " +
                                      std::to_string(timestep));
    }
    if (entry.k.size() != static_cast<size_t>(entry.tokens) * entry.dim ||
        entry.v.size() != entry.k.size()) {
        fail(ErrorKind::Shape, "KV cache entry shape mismatch");
    }
    entries_.emplace(key, std::move(entry));
}

const KVEntry* AttentionKVCache::find(int layer_index, int timestep) const {
    auto it = entries_.find(std::make_pair(layer_index, timestep));
    return it == entries_.end() ? nullptr : &it->second;
}

void AttentionKVCache::drop_other_timesteps(int timestep) {
    for (auto it = entries_.begin(); it != entries_.end();) {
        if (it->first.second != timestep) {
            it = entries_.erase(it);
        } else {
            ++it;
        }
    }
}

std::vector<double> extended_self_attention(const AttentionState& state,
                                            const AttentionKVCache& cache,
                                            const PersonalizationConfig& pcfg,
                                            double* reference_mass_out) {
    check_state(state);
    if (reference_mass_out) *reference_mass_out = 0.0;
    if (!pcfg.applies_to(state.block, state.branch)) {
        return self_attention(state);
    }
    const KVEntry* entry = cache.find(state.layer_index, state.timestep);
    if (!entry) {
        fail(ErrorKind::CacheMiss, "no reference K/V for layer " +
                                       std::to_string(state.layer_index) + " at timestep " +
                                       std::to_string(state.timestep));
    }
    if (entry->tokens == 0) {
        return self_attention(state);
    }
    if (entry->dim != state.dim) {
        fail(ErrorKind::Shape, "reference K/V dim does not match attention state");
    }
    return attend(state.q, state.tokens, state.dim, state.k.data(), state.tokens,
                  state.v.data(), entry->k.data(), entry->tokens, entry->v.data(),
                  reference_mass_out);
}

/*--------------------------- reference replay -------------------------------*/

ReferenceReplay::ReferenceReplay(const Trajectory& ref_traj, const MaskPyramid& subject_mask,
                                 const DenoiserBackend& backend, const SchedulerState& sched,
                                 const PersonalizationConfig& pcfg)
    : backend_(backend.clone()), sched_(sched), condition_(ref_traj.condition),
      current_(ref_traj.zT()) {
    if (ref_traj.latents.size() != sched.nodes.size()) {
        fail(ErrorKind::Schedule, "reference trajectory does not cover the schedule");
    }
    for (const auto& desc : backend_->attention_layers()) {
        if (!pcfg.target_blocks.count(desc.block)) continue;
        const Mask& lvl = subject_mask.level(desc.resolution);
        std::vector<size_t> rows;
        for (size_t i = 0; i < lvl.data.size(); i++) {
            if (lvl.data[i]) rows.push_back(i);
        }
        if (rows.empty()) {
            fail(ErrorKind::DegenerateMask,
                 "subject mask is empty at resolution " + std::to_string(desc.resolution));
        }
        token_rows_[desc.layer_index] = std::move(rows);
        target_layers_.push_back(desc.layer_index);
    }
    if (target_layers_.empty()) {
        fail(ErrorKind::DegenerateMask, "no targeted attention layers to extract from");
    }
}

void ReferenceReplay::capture_step(AttentionKVCache& cache) {
    // transparent capture hooks: record masked K/V rows, return plain attention
    for (int layer : target_layers_) {
        const auto& rows = token_rows_[layer];
        AttentionKVCache* sink = &cache;
        backend_->set_hook(layer, [layer, &rows, sink](const AttentionState& st) {
            KVEntry entry;
            entry.tokens = static_cast<int>(rows.size());
            entry.dim = st.dim;
            entry.k.reserve(rows.size() * st.dim);
            entry.v.reserve(rows.size() * st.dim);
            for (size_t row : rows) {
                for (int c = 0; c < st.dim; c++) {
                    entry.k.push_back(st.k[row * st.dim + c]);
                    entry.v.push_back(st.v[row * st.dim + c]);
                }
            }
            sink->put(layer, st.timestep, std::move(entry));
            return self_attention(st);
        });
    }
    NoisePrediction eps = backend_->predict(current_, current_.timestep, condition_);
    backend_->clear_hooks();
    steps_taken_++;
    current_ = ddim_step(current_, eps, sched_);
    if (!current_.all_finite()) {
        fail(ErrorKind::NumericalDivergence,
             "reference replay diverged at timestep " + std::to_string(current_.timestep));
    }
}

void ReferenceReplay::fill_for_timestep(int timestep, AttentionKVCache& cache) {
    if (!sched_.is_prediction_timestep(timestep)) {
        fail(ErrorKind::Schedule,
             "timestep " + std::to_string(timestep) + " is not a prediction timestep");
    }
    if (cache.has(target_layers_.front(), timestep)) return;
    while (current_.timestep >= timestep && current_.timestep != sched_.nodes.front()) {
        int stepped_at = current_.timestep;
        capture_step(cache);
        if (stepped_at == timestep) break;
    }
    if (!cache.has(target_layers_.front(), timestep)) {
        fail(ErrorKind::Schedule, "reference replay cannot reach timestep " +
                                      std::to_string(timestep) + " (requests must follow the schedule)");
    }
}

void ReferenceReplay::fill_all(AttentionKVCache& cache) {
    while (current_.timestep != sched_.nodes.front()) {
        capture_step(cache);
    }
}

AttentionKVCache extract_reference_kv(const Trajectory& ref_traj,
                                      const MaskPyramid& subject_mask,
                                      const DenoiserBackend& backend,
                                      const SchedulerState& sched,
                                      const PersonalizationConfig& pcfg) {
    ReferenceReplay replay(ref_traj, subject_mask, backend, sched, pcfg);
    AttentionKVCache cache;
    replay.fill_all(cache);
    return cache;
}

/*-------------------------- attention controller ----------------------------*/

AttentionController::AttentionController(std::shared_ptr<AttentionKVCache> cache,
                                         PersonalizationConfig pcfg,
                                         std::unique_ptr<ReferenceReplay> replay)
    : cache_(std::move(cache)), pcfg_(std::move(pcfg)), replay_(std::move(replay)) {
    if (!cache_) fail(ErrorKind::InvalidArgument, "attention controller needs a cache");
}

void AttentionController::install(DenoiserBackend& backend) {
    for (const auto& desc : backend.attention_layers()) {
        if (!pcfg_.target_blocks.count(desc.block)) continue;
        backend.set_hook(desc.layer_index, [this](const AttentionState& st) {
            double mass = 0.0;
            auto out = extended_self_attention(st, *cache_, pcfg_, &mass);
            if (track_mass_ && pcfg_.applies_to(st.block, st.branch)) {
                mass_rows_.push_back({st.timestep, st.layer_index, mass});
            }
            return out;
        });
    }
}

void AttentionController::begin_step(int timestep) {
    if (replay_) {
        replay_->fill_for_timestep(timestep, *cache_);
        cache_->drop_other_timesteps(timestep);
    }
}

std::string attention_mass_csv(const std::vector<AttentionController::MassRow>& rows) {
    std::ostringstream out;
    out << "timestep,layer,reference_mass\n";
    for (const auto& row : rows) {
        out << row.timestep << "," << row.layer_index << "," << format_double(row.reference_mass)
            << "\n";
    }
    return out.str();
}

}  // namespace placer
