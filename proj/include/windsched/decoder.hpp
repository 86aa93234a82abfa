#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include "windsched/encoder.hpp"
#include "windsched/features.hpp"
#include "windsched/instance.hpp"
#include "windsched/model.hpp"
#include "windsched/tensor.hpp"

namespace windsched {

/// Rolling state of one sequential decode. Step k (0-based) fills slot k,
/// which belongs to period k / M.
struct DecodeState {
    int step = 0;
    std::vector<uint8_t> selected;  // per candidate
    std::vector<int> sequence;      // candidate chosen at each completed step
    int last_candidate = -1;
    int last_location = -1;  // -1 until a pick establishes one
    int n_real_selected = 0;
    double reward = 0.0;

    explicit DecodeState(int n_candidates) : selected(n_candidates, 0) {}
};

/// Masked step distribution over candidates.
struct StepDistribution {
    Tensor probs;                // 1 x candidates, graph-linked when grad is on
    std::vector<double> mask;    // 0 or kMaskNegInf per candidate
    std::vector<double> logits;  // pre-mask logits
};

using MaskHook = std::function<void(const DecodeState&, std::vector<double>&)>;

/// Slice of the encoder output at decoding step k: the candidate block of
/// slot k.
inline Tensor temporal_pointer(const EncodeResult& enc, int k) {
    if (k < 0 || k >= enc.n_slots) throw std::out_of_range("temporal_pointer: step out of range");
    return slice_rows(enc.h, k * enc.n_candidates, (k + 1) * enc.n_candidates);
}

/// Context at a decoding step: the last selected candidate's embedding taken
/// from the current slot (a learned placeholder before the first pick),
/// joined with the sum of all candidate embeddings in that slot.
inline Tensor context_embedding(const Model& model, const Tensor& h_slot,
                                const DecodeState& state) {
    const Tensor problem = sum_rows(h_slot);
    const Tensor last = state.last_candidate < 0
                            ? model.params.get("dec.placeholder")
                            : slice_rows(h_slot, state.last_candidate, state.last_candidate + 1);
    return concat_cols({last, problem});
}

/// Mask with -inf at every already-selected candidate, then any extra
/// constraint hooks.
inline std::vector<double> build_mask(const DecodeState& state, int n_candidates,
                                      const std::vector<MaskHook>& hooks = {}) {
    std::vector<double> mask(n_candidates, 0.0);
    for (int i = 0; i < n_candidates; ++i)
        if (state.selected[i]) mask[i] = kMaskNegInf;
    for (const auto& hook : hooks) hook(state, mask);
    return mask;
}

/// Keeps padded decodes feasible: once the remaining slots are exactly the
/// unselected real turbines, idle candidates are masked out.
inline MaskHook idle_exclusion_hook(int n_real, int n_slots) {
    return [n_real, n_slots](const DecodeState& st, std::vector<double>& mask) {
        const int slots_left = n_slots - st.step;
        const int real_left = n_real - st.n_real_selected;
        if (real_left == slots_left)
            for (size_t i = n_real; i < mask.size(); ++i) mask[i] = kMaskNegInf;
    };
}

/// Pointer head: one masked multi-head attention read of the slot block by
/// the context, then tanh logits against a learned projection of the block.
inline StepDistribution masked_pointer_logits(const Model& model, const Tensor& h_context,
                                              const Tensor& h_slot,
                                              const std::vector<double>& mask,
                                              AttnTrace* trace = nullptr) {
    const auto& P = model.params;
    const Tensor qc = matmul(h_context, P.get("dec.context.wq"));
    const Tensor kc = matmul(h_slot, P.get("dec.context.wk"));
    const Tensor vc = matmul(h_slot, P.get("dec.context.wv"));
    const double denom = detail::attn_denom(model.encoder);
    const Tensor h_final = attention_block(qc, kc, vc, model.encoder.n_heads, denom, trace);

    const Tensor keys = matmul(h_slot, P.get("dec.pointer.w"));
    Tensor logits = tanh_act(matmul_nt(h_final, keys));
    if (model.decoder.logit_scale != 1.0) logits = scale(logits, model.decoder.logit_scale);

    StepDistribution out;
    out.logits.assign(logits.data(), logits.data() + logits.numel());
    out.mask = mask;
    out.probs = softmax_rows(masked_add(logits, mask));
    return out;
}

/// Incremental sequence cost of picking candidate v at the current step: its
/// slot cost plus the visit cost when its location differs from the previous
/// pick's. Raw (unnormalized) costs throughout. With idle_transparent set,
/// idle picks neither charge nor update the location.
inline double step_cost(const FeatureSet& fs, const DecodeState& state, int v,
                        bool idle_transparent) {
    const int period = state.step / fs.capacity;
    const double chi = fs.cost(v, period);
    const bool idle = v >= fs.n_real;
    if (idle_transparent && idle) return chi;  // chi is zero for idle rows
    const int loc = fs.location(v);
    double inc = chi;
    if (state.last_location >= 0 && loc != state.last_location) inc += fs.visit_cost;
    return inc;
}

namespace detail {

inline void apply_pick(const FeatureSet& fs, DecodeState& st, int v, bool idle_transparent) {
    st.reward += step_cost(fs, st, v, idle_transparent);
    const bool idle = v >= fs.n_real;
    if (!(idle_transparent && idle)) st.last_location = fs.location(v);
    st.selected[v] = 1;
    st.sequence.push_back(v);
    st.last_candidate = v;
    if (!idle) ++st.n_real_selected;
    ++st.step;
}

}  // namespace detail

/// Independent recomputation of the sequence objective from a finished
/// sequence; cross-checks the incremental reward accumulation.
inline double sequence_objective(const FeatureSet& fs, const std::vector<int>& sequence,
                                 bool idle_transparent) {
    DecodeState st(fs.n_candidates());
    double total = 0.0;
    for (int v : sequence) {
        total += step_cost(fs, st, v, idle_transparent);
        const bool idle = v >= fs.n_real;
        if (!(idle_transparent && idle)) st.last_location = fs.location(v);
        st.last_candidate = v;
        ++st.step;
    }
    return total;
}

enum class DecodeMode { sample, greedy };

struct DecodeResult {
    std::vector<int> sequence;  // candidate per slot
    Schedule schedule;          // induced maintenance plan over real turbines
    double sequence_reward = 0;
    double logp_value = 0;
    std::vector<double> step_logp;
    Tensor logp;  // graph scalar; linked to parameters only while grad is on
    double wall_seconds = 0;
};

/// Runs the full fixed-length decode. Every candidate is picked at most
/// once, so the induced schedule is feasible for any parameter values.
inline DecodeResult decode(const Model& model, const FeatureSet& fs, const EncodeResult& enc,
                           DecodeMode mode, Rng& rng,
                           const std::vector<MaskHook>& extra_hooks = {}) {
    const auto t0 = std::chrono::steady_clock::now();
    const int slots = enc.n_slots, cands = enc.n_candidates;
    if (cands < slots)
        throw std::invalid_argument("decode: fewer candidates than slots cannot fill every slot");
    if (fs.n_slots() != slots || fs.n_candidates() != cands)
        throw std::invalid_argument("decode: feature set does not match encoder output");

    std::vector<MaskHook> hooks = extra_hooks;
    if (cands > slots) hooks.push_back(idle_exclusion_hook(fs.n_real, slots));

    DecodeState st(cands);
    DecodeResult res;
    Tensor logp = Tensor::scalar(0.0);
    for (int k = 0; k < slots; ++k) {
        const Tensor h_slot = temporal_pointer(enc, k);
        const Tensor h_ctx = context_embedding(model, h_slot, st);
        const auto mask = build_mask(st, cands, hooks);
        const StepDistribution dist = masked_pointer_logits(model, h_ctx, h_slot, mask);

        int v = -1;
        const double* p = dist.probs.data();
        if (mode == DecodeMode::greedy) {
            double best = -1.0;
            for (int i = 0; i < cands; ++i)
                if (p[i] > best) {
                    best = p[i];
                    v = i;
                }
        } else {
            const double u = rng.uniform01();
            double cum = 0.0;
            for (int i = 0; i < cands; ++i) {
                if (mask[i] <= kMaskThreshold) continue;
                cum += p[i];
                if (u < cum) {
                    v = i;
                    break;
                }
            }
            if (v < 0) {  // rounding left a sliver at the top of the cumsum
                for (int i = cands - 1; i >= 0; --i)
                    if (mask[i] > kMaskThreshold) {
                        v = i;
                        break;
                    }
            }
        }

        const Tensor lp = log_elem(pick(dist.probs, 0, v));
        logp = add(logp, lp);
        res.step_logp.push_back(lp.value());
        detail::apply_pick(fs, st, v, model.decoder.idle_transparent);
    }

    res.sequence = st.sequence;
    res.sequence_reward = st.reward;
    res.logp = logp;
    res.logp_value = logp.value();
    res.schedule = Schedule(fs.n_real, fs.n_periods);
    for (int k = 0; k < slots; ++k) {
        const int v = res.sequence[k];
        if (v < fs.n_real) res.schedule.maint.at(v, k / fs.capacity) = 1;
    }
    res.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return res;
}

/// Teacher-forced log-probability of a fixed sequence under the current
/// parameters; the differentiable surrogate for gradient checks and
/// REINFORCE.
inline Tensor sequence_logprob(const Model& model, const FeatureSet& fs, const EncodeResult& enc,
                               const std::vector<int>& sequence,
                               const std::vector<MaskHook>& extra_hooks = {}) {
    const int slots = enc.n_slots, cands = enc.n_candidates;
    if (static_cast<int>(sequence.size()) != slots)
        throw std::invalid_argument("sequence_logprob: sequence length must equal slot count");
    std::vector<MaskHook> hooks = extra_hooks;
    if (cands > slots) hooks.push_back(idle_exclusion_hook(fs.n_real, slots));

    DecodeState st(cands);
    Tensor logp = Tensor::scalar(0.0);
    for (int k = 0; k < slots; ++k) {
        const Tensor h_slot = temporal_pointer(enc, k);
        const Tensor h_ctx = context_embedding(model, h_slot, st);
        const auto mask = build_mask(st, cands, hooks);
        const StepDistribution dist = masked_pointer_logits(model, h_ctx, h_slot, mask);
        logp = add(logp, log_elem(pick(dist.probs, 0, sequence[k])));
        detail::apply_pick(fs, st, sequence[k], model.decoder.idle_transparent);
    }
    return logp;
}

}  // namespace windsched
