#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "windsched/features.hpp"
#include "windsched/model.hpp"
#include "windsched/tensor.hpp"

namespace windsched {

/// Optional capture of attention weight matrices for diagnostics and tests.
struct AttnTrace {
    std::vector<Tensor> weights;
};

/// Multi-head scaled dot-product attention over already-projected Q, K, V.
/// Per head: softmax(q k^T / denom) v; head outputs are concatenated.
inline Tensor attention_block(const Tensor& q, const Tensor& k, const Tensor& v, int n_heads,
                              double denom, AttnTrace* trace = nullptr) {
    const int D = q.cols();
    if (k.cols() != D || v.cols() != D || D % n_heads != 0)
        throw std::invalid_argument("attention_block: bad head/feature dimensions");
    const int dk = D / n_heads;
    std::vector<Tensor> heads;
    heads.reserve(n_heads);
    for (int h = 0; h < n_heads; ++h) {
        const Tensor qh = slice_cols(q, h * dk, (h + 1) * dk);
        const Tensor kh = slice_cols(k, h * dk, (h + 1) * dk);
        const Tensor vh = slice_cols(v, h * dk, (h + 1) * dk);
        const Tensor alpha = softmax_rows(scale(matmul_nt(qh, kh), 1.0 / denom));
        if (trace) trace->weights.push_back(alpha);
        heads.push_back(matmul(alpha, vh));
    }
    return n_heads == 1 ? heads[0] : concat_cols(heads);
}

namespace detail {

inline double attn_denom(const EncoderConfig& cfg) {
    return std::sqrt(static_cast<double>(cfg.scale_by_key_dim ? cfg.key_dim() : cfg.hidden_dim));
}

// Row permutations between slot-major (slot*C + i) and turbine-major
// (i*S + slot) layouts of the (slots*cands) x D state.
inline std::vector<int> to_turbine_major(int slots, int cands) {
    std::vector<int> perm(static_cast<size_t>(slots) * cands);
    for (int i = 0; i < cands; ++i)
        for (int t = 0; t < slots; ++t) perm[static_cast<size_t>(i) * slots + t] = t * cands + i;
    return perm;
}

inline std::vector<int> to_slot_major(int slots, int cands) {
    std::vector<int> perm(static_cast<size_t>(slots) * cands);
    for (int t = 0; t < slots; ++t)
        for (int i = 0; i < cands; ++i) perm[static_cast<size_t>(t) * cands + i] = i * slots + t;
    return perm;
}

}  // namespace detail

/// Attention among candidates within each time slot. `h` is slot-major,
/// (slots*cands) x D.
inline Tensor spatial_attention(const Tensor& h, int slots, int cands, const Tensor& wq,
                                const Tensor& wk, const Tensor& wv, int n_heads, double denom,
                                AttnTrace* trace = nullptr) {
    const Tensor q = matmul(h, wq), k = matmul(h, wk), v = matmul(h, wv);
    std::vector<Tensor> blocks;
    blocks.reserve(slots);
    for (int t = 0; t < slots; ++t) {
        const int r0 = t * cands, r1 = (t + 1) * cands;
        blocks.push_back(attention_block(slice_rows(q, r0, r1), slice_rows(k, r0, r1),
                                         slice_rows(v, r0, r1), n_heads, denom, trace));
    }
    return concat_rows(blocks);
}

/// Attention across time slots for each candidate, unmasked in both
/// directions. Input and output are slot-major.
inline Tensor temporal_attention(const Tensor& h, int slots, int cands, const Tensor& wq,
                                 const Tensor& wk, const Tensor& wv, int n_heads, double denom,
                                 AttnTrace* trace = nullptr) {
    const Tensor ht = gather_rows(h, detail::to_turbine_major(slots, cands));
    const Tensor q = matmul(ht, wq), k = matmul(ht, wk), v = matmul(ht, wv);
    std::vector<Tensor> blocks;
    blocks.reserve(cands);
    for (int i = 0; i < cands; ++i) {
        const int r0 = i * slots, r1 = (i + 1) * slots;
        blocks.push_back(attention_block(slice_rows(q, r0, r1), slice_rows(k, r0, r1),
                                         slice_rows(v, r0, r1), n_heads, denom, trace));
    }
    return gather_rows(concat_rows(blocks), detail::to_slot_major(slots, cands));
}

/// Fuses the two attention branches: sigmoid of a linear map over their
/// feature-wise concatenation.
inline Tensor integrate(const Tensor& h_spatial, const Tensor& h_temporal, const Tensor& w) {
    ag::check_2d_match(h_spatial, h_temporal, "integrate");
    if (w.rows() != 2 * h_spatial.cols())
        throw std::invalid_argument("integrate: weight must be 2D x D");
    return sigmoid(matmul(concat_cols({h_spatial, h_temporal}), w));
}

/// Affine map of [cost, one-hot location] rows into the hidden space.
/// Output is slot-major: row (slot*cands + candidate).
inline Tensor input_embedding(const Model& model, const FeatureSet& fs) {
    const int cands = fs.n_candidates(), T = fs.n_periods, M = fs.capacity;
    const int slots = T * M;
    const int in_dim = model.input_dim();
    const Cube<double>& chi = fs.normalized() ? fs.chi_norm : fs.chi;

    std::vector<double> rows(static_cast<size_t>(slots) * cands * in_dim, 0.0);
    for (int t = 0; t < T; ++t) {
        for (int m = 0; m < M; ++m) {
            const int slot = t * M + m;
            for (int i = 0; i < cands; ++i) {
                double* r = rows.data() + (static_cast<size_t>(slot) * cands + i) * in_dim;
                r[0] = chi.at(i, t, m);
                const int loc = fs.loc.at(i, t, m);
                if (loc < 0 || loc > model.n_locations)
                    throw std::invalid_argument("input_embedding: location outside one-hot range");
                r[1 + loc] = 1.0;
            }
        }
    }
    const Tensor x = Tensor::from(slots * cands, in_dim, std::move(rows));
    return add_rowvec(matmul(x, model.params.get("embed.w")), model.params.get("embed.b"));
}

struct EncodeResult {
    Tensor h;  // (slots*cands) x D, slot-major
    int n_slots = 0;
    int n_candidates = 0;
};

/// Full encoder stack: embedding, then N layers of parallel spatial and
/// temporal attention fused by the sigmoid integration.
inline EncodeResult encode(const Model& model, const FeatureSet& fs, AttnTrace* trace = nullptr) {
    const FeatureSet* use = &fs;
    FeatureSet normalized_copy;
    if (!fs.normalized()) {
        normalized_copy = normalize(fs);
        use = &normalized_copy;
    }
    const EncoderConfig& cfg = model.encoder;
    cfg.check();
    const int slots = use->n_slots(), cands = use->n_candidates();
    const double denom = detail::attn_denom(cfg);

    Tensor h = input_embedding(model, *use);
    for (int l = 0; l < cfg.n_layers; ++l) {
        const std::string p = "enc." + std::to_string(l) + ".";
        const Tensor hs = spatial_attention(h, slots, cands, model.params.get(p + "spatial.wq"),
                                            model.params.get(p + "spatial.wk"),
                                            model.params.get(p + "spatial.wv"), cfg.n_heads,
                                            denom, trace);
        const Tensor ht = temporal_attention(h, slots, cands, model.params.get(p + "temporal.wq"),
                                             model.params.get(p + "temporal.wk"),
                                             model.params.get(p + "temporal.wv"), cfg.n_heads,
                                             denom, trace);
        Tensor fused = integrate(hs, ht, model.params.get(p + "integrate.w"));
        h = cfg.residual ? add(fused, h) : fused;
    }
    return {h, slots, cands};
}

}  // namespace windsched
