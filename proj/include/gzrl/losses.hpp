// Training objective: MSE action regression, the per-view-mean KL gaze
// regularizer, and their lambda-weighted combination with gradients routed to
// the policy backward pass.
#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "gzrl/common.hpp"
#include "gzrl/gaze_prior.hpp"
#include "gzrl/numerics.hpp"
#include "gzrl/policy.hpp"

namespace gzrl {

struct LossBreakdown {
    double action_loss = 0.0;
    double gaze_loss = 0.0; // per-view mean KL, reported unscaled
    double total = 0.0;     // action_loss + lambda * gaze_loss
    double lambda = 0.0;
};

enum class AttentionSource { kFinalLayer, kAllLayersMean };

inline AttentionSource attention_source_from_string(const std::string& s) {
    if (s == "final" || s == "final_layer") return AttentionSource::kFinalLayer;
    if (s == "all-layers" || s == "all_layers_mean") return AttentionSource::kAllLayersMean;
    throw InvalidInputError("unknown attention source: " + s);
}

inline const char* attention_source_to_string(AttentionSource s) {
    return s == AttentionSource::kFinalLayer ? "final" : "all-layers";
}

// Mean squared error over all horizon*action_dim entries plus its gradient
// w.r.t. the prediction: 2 (pred - target) / (h * d_a).
inline std::pair<double, std::vector<double>> action_loss(const ActionSequence& pred,
                                                          const ActionSequence& target) {
    if (pred.horizon != target.horizon || pred.dim != target.dim ||
        pred.values.size() != target.values.size())
        throw ShapeError("action_loss: shape mismatch");
    const double n = static_cast<double>(pred.values.size());
    double acc = 0.0;
    std::vector<double> grad(pred.values.size());
    for (std::size_t k = 0; k < pred.values.size(); ++k) {
        const double diff = pred.values[k] - target.values[k];
        acc += diff * diff;
        grad[k] = 2.0 * diff / n;
    }
    return {acc / n, std::move(grad)};
}

// Mean over views of D_KL(G^i || S^i) plus per-view (per-layer) gradients
// w.r.t. the attention logits, before lambda scaling. With the final-layer
// source the gradient is the closed form (S - G)/n on the last layer; with
// the all-layers-mean source the KL is taken against the depth-averaged
// attention and pulled back through each layer's softmax.
inline std::pair<double, AttnLogitGrads> gaze_loss(const std::vector<PatchDistribution>& g_per_view,
                                                   const ForwardTrace& trace,
                                                   AttentionSource source) {
    const std::size_t n_views = trace.views.size();
    if (g_per_view.size() != n_views)
        throw ShapeError("gaze_loss: expected " + std::to_string(n_views) + " priors, got " +
                         std::to_string(g_per_view.size()));
    const double inv_views = 1.0 / static_cast<double>(n_views);
    double loss = 0.0;
    AttnLogitGrads grads(n_views);
    for (std::size_t i = 0; i < n_views; ++i) {
        const ViewTrace& vt = trace.views[i];
        const std::size_t n_layers = vt.layers.size();
        const Simplex& g = g_per_view[i].probs;
        grads[i].assign(n_layers, {});
        if (source == AttentionSource::kFinalLayer) {
            const Simplex& s = vt.layers.back().attn;
            if (g.size() != s.size()) throw ShapeError("gaze_loss: prior length mismatch");
            loss += kl_div(g, s) * inv_views;
            std::vector<double> dz(s.size());
            for (std::size_t j = 0; j < s.size(); ++j) dz[j] = (s[j] - g[j]) * inv_views;
            grads[i][n_layers - 1] = std::move(dz);
        } else {
            std::vector<double> mean(vt.layers.front().attn.size(), 0.0);
            for (const LayerTrace& lt : vt.layers)
                for (std::size_t j = 0; j < mean.size(); ++j)
                    mean[j] += lt.attn[j] / static_cast<double>(n_layers);
            Simplex s_bar = Simplex::from_weights(mean);
            if (g.size() != s_bar.size()) throw ShapeError("gaze_loss: prior length mismatch");
            loss += kl_div(g, s_bar) * inv_views;
            // dKL/dS_bar_j = -G_j / S_bar_j; each layer contributes 1/L of S_bar.
            std::vector<double> d_sbar(s_bar.size());
            for (std::size_t j = 0; j < s_bar.size(); ++j)
                d_sbar[j] = -g[j] / s_bar[j] * inv_views / static_cast<double>(n_layers);
            for (std::size_t l = 0; l < n_layers; ++l)
                grads[i][l] = softmax_backward(vt.layers[l].attn, d_sbar);
        }
    }
    return {loss, std::move(grads)};
}

struct TotalLoss {
    LossBreakdown breakdown;
    std::vector<double> d_actions;
    AttnLogitGrads d_attn_logits; // already lambda-scaled; empty when lambda == 0
};

// total = action + lambda * gaze. With lambda == 0 (or no priors supplied)
// the gaze path is not evaluated at all and the result reduces exactly to
// the baseline objective.
inline TotalLoss total_loss(const ActionSequence& pred, const ActionSequence& target,
                            const std::vector<PatchDistribution>& g_per_view,
                            const ForwardTrace& trace, double lambda, AttentionSource source) {
    if (lambda < 0.0) throw InvalidInputError("total_loss: lambda must be >= 0");
    TotalLoss out;
    auto [a_loss, a_grad] = action_loss(pred, target);
    out.d_actions = std::move(a_grad);
    double g_loss = 0.0;
    if (lambda > 0.0 && !g_per_view.empty()) {
        auto [gl, g_grads] = gaze_loss(g_per_view, trace, source);
        g_loss = gl;
        for (auto& per_view : g_grads)
            for (auto& dz : per_view)
                for (double& v : dz) v *= lambda;
        out.d_attn_logits = std::move(g_grads);
    }
    out.breakdown = LossBreakdown{a_loss, g_loss, a_loss + lambda * g_loss, lambda};
    return out;
}

} // namespace gzrl
