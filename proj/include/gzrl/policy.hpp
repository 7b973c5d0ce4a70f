// A minimal vision-language-action policy: patch embedding with a fixed
// positional table, a global language query, one or more cross-attention
// layers per view, and a two-layer regression action head. forward caches
// everything backward needs; backward is a hand-written analytic pass that
// accepts both an action-loss gradient and per-view attention-logit
// gradients and accumulates them through shared parameters.
#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "gzrl/common.hpp"
#include "gzrl/gaze_prior.hpp"
#include "gzrl/numerics.hpp"
#include "gzrl/rng.hpp"
#include "gzrl/tensor.hpp"

namespace gzrl {

struct PolicyConfig {
    int views = 2;
    int image_size = 32;
    int patch_grid = 8; // P; N_v = P*P visual tokens per view
    int vocab = 27;
    int instr_len = 6;
    int proprio_dim = 2;
    int embed_dim = 32; // d
    int hidden_dim = 64;
    int horizon = 8;
    int action_dim = 2;
    int layers = 1; // cross-attention depth L

    int patch_edge() const { return image_size / patch_grid; }
    int patch_pixels() const { return patch_edge() * patch_edge(); }
    int num_patches() const { return patch_grid * patch_grid; }

    void validate() const {
        if (views < 1) throw InvalidInputError("PolicyConfig: views must be >= 1");
        if (patch_grid < 1) throw InvalidInputError("PolicyConfig: patch_grid must be >= 1");
        if (image_size % patch_grid != 0)
            throw InvalidInputError("PolicyConfig: image_size " + std::to_string(image_size) +
                                    " not divisible by patch_grid " + std::to_string(patch_grid));
        if (embed_dim < 4) throw InvalidInputError("PolicyConfig: embed_dim must be >= 4");
        if (vocab < 1 || instr_len < 1 || proprio_dim < 1 || hidden_dim < 1)
            throw InvalidInputError("PolicyConfig: bad dimension");
        if (horizon < 1 || action_dim < 1)
            throw InvalidInputError("PolicyConfig: horizon and action_dim must be >= 1");
        if (layers < 1) throw InvalidInputError("PolicyConfig: layers must be >= 1");
    }

    bool operator==(const PolicyConfig&) const = default;
};

// Multi-view observation: images in [0,1], instruction token ids, proprio.
// Gaze never appears here; inference is gaze-free by construction.
struct Observation {
    std::vector<Matrix> views; // each image_size x image_size
    std::vector<std::uint16_t> instruction;
    std::vector<double> proprio;
};

struct ActionSequence {
    int horizon = 0;
    int dim = 0;
    std::vector<double> values; // horizon x dim, row-major

    double at(int step, int d) const { return values[static_cast<std::size_t>(step) * dim + d]; }
    double& at(int step, int d) { return values[static_cast<std::size_t>(step) * dim + d]; }
};

// Fixed (non-learnable) positional table for a P x P grid: dims 0-1 carry the
// normalized patch-center coordinates, the rest interleave sin/cos of row and
// column at increasing frequencies. Content-only patch embeddings cannot
// localize; this supplies the location channel.
inline Matrix positional_table(int patch_grid, int embed_dim) {
    const int n = patch_grid * patch_grid;
    Matrix pe(static_cast<std::size_t>(n), static_cast<std::size_t>(embed_dim), 0.0);
    for (int r = 0; r < patch_grid; ++r) {
        for (int c = 0; c < patch_grid; ++c) {
            const int j = r * patch_grid + c;
            const double ry = (r + 0.5) / patch_grid;
            const double cx = (c + 0.5) / patch_grid;
            pe(j, 0) = ry;
            pe(j, 1) = cx;
            for (int k = 2; k < embed_dim; ++k) {
                const int i = k - 2;
                const double coord = (i % 2 == 0) ? ry : cx;
                const int pair = i / 2;
                const double freq = 3.14159265358979323846 * (1 + pair / 2);
                pe(j, k) = (pair % 2 == 0) ? std::sin(freq * coord) : std::cos(freq * coord);
            }
        }
    }
    return pe;
}

struct PolicyParams {
    PolicyConfig cfg;
    Matrix token_embed;  // vocab x d
    Matrix patch_embed;  // patch_pixels x d
    Matrix query_proj;   // d x d
    std::vector<Matrix> key_proj;   // layers of d x d
    std::vector<Matrix> value_proj; // layers of d x d
    Matrix proprio_embed; // proprio_dim x d
    Matrix head_w1;       // 2d x hidden
    Matrix head_b1;       // 1 x hidden
    Matrix head_w2;       // hidden x horizon*action_dim
    Matrix head_b2;       // 1 x horizon*action_dim

    // Visits every tensor in a fixed order (serialization, optimizer, checks).
    template <typename Fn>
    void for_each_tensor(Fn&& fn) {
        fn("token_embed", token_embed);
        fn("patch_embed", patch_embed);
        fn("query_proj", query_proj);
        for (std::size_t l = 0; l < key_proj.size(); ++l)
            fn("key_proj." + std::to_string(l), key_proj[l]);
        for (std::size_t l = 0; l < value_proj.size(); ++l)
            fn("value_proj." + std::to_string(l), value_proj[l]);
        fn("proprio_embed", proprio_embed);
        fn("head_w1", head_w1);
        fn("head_b1", head_b1);
        fn("head_w2", head_w2);
        fn("head_b2", head_b2);
    }

    template <typename Fn>
    void for_each_tensor(Fn&& fn) const {
        const_cast<PolicyParams*>(this)->for_each_tensor(
            [&](const std::string& name, Matrix& m) { fn(name, static_cast<const Matrix&>(m)); });
    }
};

// Zero-valued gradient holder with the same tensor layout as the params.
inline PolicyParams zeros_like(const PolicyParams& p) {
    PolicyParams z = p;
    z.for_each_tensor([](const std::string&, Matrix& m) { m.fill(0.0); });
    return z;
}

// Tensor pointers in for_each_tensor order, for optimizers and accumulation.
inline std::vector<Matrix*> collect_tensors(PolicyParams& p) {
    std::vector<Matrix*> out;
    p.for_each_tensor([&](const std::string&, Matrix& m) { out.push_back(&m); });
    return out;
}

// Uniform init in [-1/sqrt(fan_in), +1/sqrt(fan_in)] per tensor, biases zero;
// fan_in is the input (row) dimension. Deterministic in the seed.
inline PolicyParams init_params(const PolicyConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    PolicyParams p;
    p.cfg = cfg;
    const auto d = static_cast<std::size_t>(cfg.embed_dim);
    p.token_embed = Matrix(static_cast<std::size_t>(cfg.vocab), d);
    p.patch_embed = Matrix(static_cast<std::size_t>(cfg.patch_pixels()), d);
    p.query_proj = Matrix(d, d);
    p.key_proj.assign(static_cast<std::size_t>(cfg.layers), Matrix(d, d));
    p.value_proj.assign(static_cast<std::size_t>(cfg.layers), Matrix(d, d));
    p.proprio_embed = Matrix(static_cast<std::size_t>(cfg.proprio_dim), d);
    const auto out = static_cast<std::size_t>(cfg.horizon * cfg.action_dim);
    p.head_w1 = Matrix(2 * d, static_cast<std::size_t>(cfg.hidden_dim));
    p.head_b1 = Matrix(1, static_cast<std::size_t>(cfg.hidden_dim));
    p.head_w2 = Matrix(static_cast<std::size_t>(cfg.hidden_dim), out);
    p.head_b2 = Matrix(1, out);

    Rng rng(mix_seed(seed, stream::kInit));
    p.for_each_tensor([&](const std::string& name, Matrix& m) {
        if (name == "head_b1" || name == "head_b2") return; // biases stay zero
        const double bound = 1.0 / std::sqrt(static_cast<double>(m.rows()));
        for (double& v : m.vec()) v = rng.uniform(-bound, bound);
    });
    return p;
}

struct LayerTrace {
    std::vector<double> query;   // d; query used by this layer
    Matrix keys;                 // N_v x d
    Matrix values;               // N_v x d
    std::vector<double> logits;  // N_v
    Simplex attn;                // softmax of the traced logits
    std::vector<double> context; // d
};

struct ViewTrace {
    Matrix patches; // N_v x patch_pixels (raw pixels)
    Matrix tokens;  // N_v x d (embedded + positional)
    std::vector<LayerTrace> layers;
};

struct ForwardTrace {
    std::vector<double> lang_mean;  // d (mean-pooled token embeddings)
    std::vector<double> lang_query; // d (global language query)
    std::vector<ViewTrace> views;
    std::vector<double> mean_context;  // d
    std::vector<double> proprio_vec;   // proprio embedding, d
    std::vector<double> head_input;    // 2d
    std::vector<double> hidden;        // post-tanh
    ActionSequence actions;

    // Final-layer attention per view as patch distributions.
    std::vector<PatchDistribution> attention(int patch_grid) const {
        std::vector<PatchDistribution> out;
        out.reserve(views.size());
        for (const ViewTrace& v : views)
            out.push_back(PatchDistribution{patch_grid, v.layers.back().attn});
        return out;
    }
};

inline void check_observation(const PolicyConfig& cfg, const Observation& obs) {
    if (obs.views.size() != static_cast<std::size_t>(cfg.views))
        throw ShapeError("Observation.views: expected " + std::to_string(cfg.views) + " views, got " +
                         std::to_string(obs.views.size()));
    for (const Matrix& img : obs.views) {
        if (img.rows() != static_cast<std::size_t>(cfg.image_size) ||
            img.cols() != static_cast<std::size_t>(cfg.image_size))
            throw ShapeError("Observation.views: image size mismatch");
        for (double px : img.vec())
            if (!(px >= 0.0 && px <= 1.0))
                throw InvalidInputError("Observation.views: pixel outside [0,1]");
    }
    if (obs.instruction.size() != static_cast<std::size_t>(cfg.instr_len))
        throw ShapeError("Observation.instruction: expected " + std::to_string(cfg.instr_len) +
                         " tokens");
    for (std::uint16_t t : obs.instruction)
        if (t >= cfg.vocab) throw InvalidInputError("Observation.instruction: token id out of range");
    if (obs.proprio.size() != static_cast<std::size_t>(cfg.proprio_dim))
        throw ShapeError("Observation.proprio: dimension mismatch");
}

// Extracts the N_v x patch_pixels matrix of raw patch contents, patches in
// row-major grid order, pixels row-major within the patch.
inline Matrix extract_patches(const PolicyConfig& cfg, const Matrix& img) {
    const int p = cfg.patch_grid;
    const int e = cfg.patch_edge();
    Matrix out(static_cast<std::size_t>(cfg.num_patches()),
               static_cast<std::size_t>(cfg.patch_pixels()));
    for (int u = 0; u < p; ++u)
        for (int v = 0; v < p; ++v) {
            double* dst = out.row(static_cast<std::size_t>(u * p + v));
            for (int y = 0; y < e; ++y)
                for (int x = 0; x < e; ++x)
                    dst[y * e + x] = img(static_cast<std::size_t>(u * e + y),
                                         static_cast<std::size_t>(v * e + x));
        }
    return out;
}

inline std::pair<ActionSequence, ForwardTrace> forward(const PolicyParams& params,
                                                       const Observation& obs) {
    const PolicyConfig& cfg = params.cfg;
    check_observation(cfg, obs);
    const auto d = static_cast<std::size_t>(cfg.embed_dim);
    const auto nv = static_cast<std::size_t>(cfg.num_patches());
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(cfg.embed_dim));
    const Matrix pe = positional_table(cfg.patch_grid, cfg.embed_dim);

    ForwardTrace tr;

    // Global language query from mean-pooled token embeddings.
    tr.lang_mean.assign(d, 0.0);
    for (std::uint16_t tok : obs.instruction)
        axpy(1.0 / cfg.instr_len, params.token_embed.row(tok), tr.lang_mean.data(), d);
    vec_mat(tr.lang_mean, params.query_proj, tr.lang_query);

    // Cross-attention per view.
    tr.mean_context.assign(d, 0.0);
    tr.views.resize(obs.views.size());
    for (std::size_t i = 0; i < obs.views.size(); ++i) {
        ViewTrace& vt = tr.views[i];
        vt.patches = extract_patches(cfg, obs.views[i]);
        vt.tokens = Matrix(nv, d);
        for (std::size_t j = 0; j < nv; ++j) {
            double* row = vt.tokens.row(j);
            for (std::size_t k = 0; k < d; ++k) row[k] = pe(j, k);
            // tokens = patches * patch_embed + positional table
            const double* px = vt.patches.row(j);
            for (std::size_t q = 0; q < params.patch_embed.rows(); ++q)
                axpy(px[q], params.patch_embed.row(q), row, d);
        }

        std::vector<double> query = tr.lang_query;
        vt.layers.resize(static_cast<std::size_t>(cfg.layers));
        for (int l = 0; l < cfg.layers; ++l) {
            LayerTrace& lt = vt.layers[static_cast<std::size_t>(l)];
            lt.query = query;
            const Matrix& wk = params.key_proj[static_cast<std::size_t>(l)];
            const Matrix& wv = params.value_proj[static_cast<std::size_t>(l)];
            lt.keys = Matrix(nv, d);
            lt.values = Matrix(nv, d);
            lt.logits.resize(nv);
            for (std::size_t j = 0; j < nv; ++j) {
                const double* tok = vt.tokens.row(j);
                double* krow = lt.keys.row(j);
                double* vrow = lt.values.row(j);
                for (std::size_t q = 0; q < d; ++q) axpy(tok[q], wk.row(q), krow, d);
                for (std::size_t q = 0; q < d; ++q) axpy(tok[q], wv.row(q), vrow, d);
                lt.logits[j] = dot(krow, lt.query.data(), d) * inv_sqrt_d;
            }
            lt.attn = softmax(lt.logits);
            lt.context.assign(d, 0.0);
            for (std::size_t j = 0; j < nv; ++j)
                axpy(lt.attn[j], lt.values.row(j), lt.context.data(), d);
            // residual query chaining feeds the next layer
            if (l + 1 < cfg.layers)
                for (std::size_t k = 0; k < d; ++k) query[k] = lt.query[k] + lt.context[k];
        }
        axpy(1.0 / cfg.views, vt.layers.back().context.data(), tr.mean_context.data(), d);
    }

    // Action head on [mean context ; proprio embedding].
    vec_mat(obs.proprio, params.proprio_embed, tr.proprio_vec);
    tr.head_input.resize(2 * d);
    std::copy(tr.mean_context.begin(), tr.mean_context.end(), tr.head_input.begin());
    std::copy(tr.proprio_vec.begin(), tr.proprio_vec.end(), tr.head_input.begin() + d);

    std::vector<double> pre;
    vec_mat(tr.head_input, params.head_w1, pre);
    tr.hidden.resize(pre.size());
    for (std::size_t k = 0; k < pre.size(); ++k) tr.hidden[k] = std::tanh(pre[k] + params.head_b1(0, k));

    std::vector<double> out;
    vec_mat(tr.hidden, params.head_w2, out);
    for (std::size_t k = 0; k < out.size(); ++k) out[k] += params.head_b2(0, k);

    ActionSequence actions{cfg.horizon, cfg.action_dim, std::move(out)};
    tr.actions = actions;
    return {std::move(actions), std::move(tr)};
}

// Gaze-free inference: identical actions to forward's first output; the
// signature admits no gaze argument.
inline ActionSequence infer(const PolicyParams& params, const Observation& obs) {
    return forward(params, obs).first;
}

// Mean of per-layer attention simplices per view, re-normalized against fp
// drift.
inline std::vector<PatchDistribution> attention_all_layers_mean(const ForwardTrace& tr,
                                                                int patch_grid) {
    std::vector<PatchDistribution> out;
    out.reserve(tr.views.size());
    for (const ViewTrace& vt : tr.views) {
        if (vt.layers.empty()) throw ShapeError("attention_all_layers_mean: no layers in trace");
        std::vector<double> acc(vt.layers.front().attn.size(), 0.0);
        for (const LayerTrace& lt : vt.layers)
            for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += lt.attn[j];
        out.push_back(PatchDistribution{patch_grid, Simplex::from_weights(acc)});
    }
    return out;
}

// Per-view, per-layer gradients w.r.t. attention logits (outermost index:
// view, then layer). Empty vectors mean "no gaze signal".
using AttnLogitGrads = std::vector<std::vector<std::vector<double>>>;

// out[c] = sum_r v[r] * m(r, c) -- same as vec_mat but named for use where the
// math reads as "m^T v".
inline void vec_mat_transposed(const Matrix& m, const std::vector<double>& v,
                               std::vector<double>& out) {
    vec_mat(v, m, out);
}

// Analytic backward pass. d_actions is the loss gradient w.r.t. the flattened
// action output; d_attn_logits carries the gaze-regularizer gradient and is
// added to the action-path logit gradient, so both signals accumulate through
// shared parameters.
inline PolicyParams backward(const PolicyParams& params, const Observation& obs,
                             const ForwardTrace& tr, const std::vector<double>& d_actions,
                             const AttnLogitGrads& d_attn_logits) {
    const PolicyConfig& cfg = params.cfg;
    const auto d = static_cast<std::size_t>(cfg.embed_dim);
    const auto nv = static_cast<std::size_t>(cfg.num_patches());
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(cfg.embed_dim));
    const auto out_dim = static_cast<std::size_t>(cfg.horizon * cfg.action_dim);

    if (d_actions.size() != out_dim) throw ShapeError("backward: d_actions size mismatch");
    if (tr.views.size() != static_cast<std::size_t>(cfg.views))
        throw ShapeError("backward: stale trace (view count mismatch)");
    if (!d_attn_logits.empty()) {
        if (d_attn_logits.size() != tr.views.size())
            throw ShapeError("backward: d_attn_logits view count mismatch");
        for (const auto& per_view : d_attn_logits) {
            if (per_view.size() != static_cast<std::size_t>(cfg.layers))
                throw ShapeError("backward: d_attn_logits layer count mismatch");
            for (const auto& g : per_view)
                if (!g.empty() && g.size() != nv)
                    throw ShapeError("backward: d_attn_logits length mismatch");
        }
    }

    PolicyParams grads = zeros_like(params);

    // Action head.
    std::vector<double> d_hidden;
    add_outer(grads.head_w2, tr.hidden, d_actions);
    for (std::size_t k = 0; k < out_dim; ++k) grads.head_b2(0, k) += d_actions[k];
    mat_vec(params.head_w2, d_actions, d_hidden);

    std::vector<double> d_pre(d_hidden.size());
    for (std::size_t k = 0; k < d_hidden.size(); ++k)
        d_pre[k] = d_hidden[k] * (1.0 - tr.hidden[k] * tr.hidden[k]);

    add_outer(grads.head_w1, tr.head_input, d_pre);
    for (std::size_t k = 0; k < d_pre.size(); ++k) grads.head_b1(0, k) += d_pre[k];
    std::vector<double> d_input;
    mat_vec(params.head_w1, d_pre, d_input);

    std::vector<double> d_mean_context(d_input.begin(), d_input.begin() + d);
    std::vector<double> d_proprio_vec(d_input.begin() + d, d_input.end());
    add_outer(grads.proprio_embed, obs.proprio, d_proprio_vec);

    // Through the per-view attention stacks.
    std::vector<double> d_lang_query(d, 0.0);
    for (std::size_t i = 0; i < tr.views.size(); ++i) {
        const ViewTrace& vt = tr.views[i];
        Matrix d_tokens(nv, d);
        std::vector<double> d_query_next; // grad w.r.t. Q_{l+1}; empty above the top layer
        for (int l = cfg.layers - 1; l >= 0; --l) {
            const LayerTrace& lt = vt.layers[static_cast<std::size_t>(l)];
            const Matrix& wk = params.key_proj[static_cast<std::size_t>(l)];
            const Matrix& wv = params.value_proj[static_cast<std::size_t>(l)];

            // Gradient arriving at this layer's context.
            std::vector<double> g_c(d, 0.0);
            if (l == cfg.layers - 1)
                for (std::size_t k = 0; k < d; ++k) g_c[k] = d_mean_context[k] / cfg.views;
            if (!d_query_next.empty())
                for (std::size_t k = 0; k < d; ++k) g_c[k] += d_query_next[k];

            // context = sum_j S_j * V_j
            std::vector<double> d_attn(nv);
            for (std::size_t j = 0; j < nv; ++j) d_attn[j] = dot(lt.values.row(j), g_c.data(), d);
            std::vector<double> dz = softmax_backward(lt.attn, d_attn);
            if (!d_attn_logits.empty() && !d_attn_logits[i][static_cast<std::size_t>(l)].empty()) {
                const auto& ext = d_attn_logits[i][static_cast<std::size_t>(l)];
                for (std::size_t j = 0; j < nv; ++j) dz[j] += ext[j];
            }

            // z_j = dot(K_j, Q) / sqrt(d): dK_j = dz_j*Q/sqrt(d) (rank one),
            // dQ = sum_j dz_j*K_j/sqrt(d).
            std::vector<double> d_query(d, 0.0);
            for (std::size_t j = 0; j < nv; ++j)
                axpy(dz[j] * inv_sqrt_d, lt.keys.row(j), d_query.data(), d);
            if (!d_query_next.empty())
                for (std::size_t k = 0; k < d; ++k) d_query[k] += d_query_next[k];

            // K = tokens * W_K with rank-one dK: dW_K += (tokens^T dz) Q^T/sqrt(d),
            // dTokens_j += dz_j/sqrt(d) * (W_K Q).
            std::vector<double> tokens_t_dz;
            vec_mat_transposed(vt.tokens, dz, tokens_t_dz);
            for (std::size_t a = 0; a < d; ++a)
                axpy(tokens_t_dz[a] * inv_sqrt_d, lt.query.data(),
                     grads.key_proj[static_cast<std::size_t>(l)].row(a), d);
            std::vector<double> wk_q;
            mat_vec(wk, lt.query, wk_q);
            for (std::size_t j = 0; j < nv; ++j)
                axpy(dz[j] * inv_sqrt_d, wk_q.data(), d_tokens.row(j), d);

            // V = tokens * W_V with rank-one dV_j = S_j * g_c:
            // dW_V += (tokens^T S) g_c^T, dTokens_j += S_j * (W_V g_c).
            std::vector<double> tokens_t_s;
            vec_mat_transposed(vt.tokens, lt.attn.probs, tokens_t_s);
            for (std::size_t a = 0; a < d; ++a)
                axpy(tokens_t_s[a], g_c.data(),
                     grads.value_proj[static_cast<std::size_t>(l)].row(a), d);
            std::vector<double> wv_g;
            mat_vec(wv, g_c, wv_g);
            for (std::size_t j = 0; j < nv; ++j) axpy(lt.attn[j], wv_g.data(), d_tokens.row(j), d);

            d_query_next = std::move(d_query);
        }
        for (std::size_t k = 0; k < d; ++k) d_lang_query[k] += d_query_next[k];

        // tokens = patches * patch_embed + PE
        for (std::size_t j = 0; j < nv; ++j) {
            const double* px = vt.patches.row(j);
            const double* dt = d_tokens.row(j);
            for (std::size_t q = 0; q < grads.patch_embed.rows(); ++q)
                axpy(px[q], dt, grads.patch_embed.row(q), d);
        }
    }

    // Q = lang_mean * query_proj; lang_mean = mean of token embeddings.
    add_outer(grads.query_proj, tr.lang_mean, d_lang_query);
    std::vector<double> d_lang_mean;
    mat_vec(params.query_proj, d_lang_query, d_lang_mean);
    for (std::uint16_t tok : obs.instruction)
        axpy(1.0 / cfg.instr_len, d_lang_mean.data(), grads.token_embed.row(tok), d);

    return grads;
}

} // namespace gzrl
