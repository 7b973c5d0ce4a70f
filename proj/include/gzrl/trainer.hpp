// End-to-end training loop: batching, gaze-prior preparation (temporal
// aggregation, patch projection, variant transform), forward/backward,
// adaptive-moment updates, periodic gaze-free evaluation, and convergence
// tracking. Deterministic given (config, dataset); single logical owner of
// the parameters.
#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "gzrl/common.hpp"
#include "gzrl/gaze_prior.hpp"
#include "gzrl/losses.hpp"
#include "gzrl/metrics.hpp"
#include "gzrl/policy.hpp"
#include "gzrl/rng.hpp"
#include "gzrl/synthetic_env.hpp"

namespace gzrl {

struct TrainConfig {
    double lambda = 0.001;
    double sigma = 1.0; // temporal aggregation decay
    VariantKind variant = VariantKind::kStructured;
    AttentionSource source = AttentionSource::kFinalLayer;
    int batch = 32;
    long steps = 5000;
    long eval_interval = 250;
    int eval_episodes = 200;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::uint64_t seed = 0;

    void validate() const {
        if (lambda < 0.0) throw InvalidInputError("TrainConfig: lambda must be >= 0");
        if (batch < 1) throw InvalidInputError("TrainConfig: batch must be >= 1");
        if (steps < 0) throw InvalidInputError("TrainConfig: steps must be >= 0");
        if (eval_interval < 1) throw InvalidInputError("TrainConfig: eval_interval must be >= 1");
        if (eval_episodes < 1) throw InvalidInputError("TrainConfig: eval_episodes must be >= 1");
        if (!(lr > 0.0) || !(sigma > 0.0)) throw InvalidInputError("TrainConfig: lr/sigma must be > 0");
    }
};

// Adam with bias correction. A zero gradient on a fresh state leaves the
// parameters unchanged.
class AdamOptimizer {
public:
    AdamOptimizer(const PolicyParams& params, double lr, double beta1, double beta2, double eps)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), m_(zeros_like(params)),
          v_(zeros_like(params)) {}

    void step(PolicyParams& params, PolicyParams& grads) {
        ++t_;
        const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
        const auto ps = collect_tensors(params);
        const auto gs = collect_tensors(grads);
        const auto ms = collect_tensors(m_);
        const auto vs = collect_tensors(v_);
        if (gs.size() != ps.size()) throw ShapeError("AdamOptimizer: tensor layout mismatch");
        for (std::size_t k = 0; k < ps.size(); ++k) {
            Matrix& p = *ps[k];
            const Matrix& g = *gs[k];
            Matrix& m = *ms[k];
            Matrix& v = *vs[k];
            if (!p.same_shape(g)) throw ShapeError("AdamOptimizer: gradient shape mismatch");
            for (std::size_t i = 0; i < p.size(); ++i) {
                const double gi = g.data()[i];
                m.data()[i] = beta1_ * m.data()[i] + (1.0 - beta1_) * gi;
                v.data()[i] = beta2_ * v.data()[i] + (1.0 - beta2_) * gi * gi;
                const double mhat = m.data()[i] / bc1;
                const double vhat = v.data()[i] / bc2;
                p.data()[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
            }
        }
    }

    long t() const { return t_; }

private:
    double lr_, beta1_, beta2_, eps_;
    long t_ = 0;
    PolicyParams m_, v_;
};

// Gaze-prior preparation for one episode and view: aggregate the stored
// window heatmaps, project onto the patch grid, then apply the configured
// variant. The single-frame variant projects the un-aggregated center frame
// instead.
inline PatchDistribution prepare_prior(const Episode& ep, int view, const EnvConfig& env,
                                       const AggregationWeights& weights, VariantKind variant,
                                       std::uint64_t seed) {
    std::vector<GazeHeatmap> window;
    window.reserve(ep.gaze.size());
    for (const auto& per_view : ep.gaze) window.push_back(per_view[static_cast<std::size_t>(view)]);
    const GazeHeatmap aggregated = aggregate_temporal(window, weights);
    const PatchDistribution agg_proj = project_to_patches(aggregated, env.patch_grid);
    if (variant == VariantKind::kStructured) return agg_proj; // skip the center projection
    const PatchDistribution center_proj =
        project_to_patches(window[static_cast<std::size_t>(env.window)], env.patch_grid);
    return make_variant(agg_proj, center_proj, variant, seed);
}

struct PerturbSpec {
    bool enabled = false;
    PerturbKind kind = PerturbKind::kCameraNoise;
    double magnitude = 0.0;
};

struct EvalOptions {
    int episodes = 200;
    std::uint64_t seed = 0; // scene stream seed; scene j uses mix(seed, j)
    PerturbSpec perturb;
    bool compute_overlap = true; // post-hoc analysis only; the policy never sees it
};

struct EvalResult {
    double success = 0.0;
    double overlap1 = 0.0;
    double overlap5 = 0.0;
    double overlap10 = 0.0;
    int episodes = 0;
};

// Runs gaze-free inference over freshly generated scenes and reports the
// success rate, plus (optionally) top-k overlap of the internal attention
// against the structured oracle prior. `actor` maps an observation to an
// action sequence; evaluate() below wires in the policy.
inline EvalResult evaluate_with(
    const std::function<std::pair<ActionSequence, std::optional<ForwardTrace>>(const Observation&)>&
        actor,
    const EnvConfig& env, double sigma, const EvalOptions& opt) {
    env.validate();
    const AggregationWeights weights = make_weights(env.window, sigma);
    EvalResult res;
    res.episodes = opt.episodes;
    double succ = 0.0, o1 = 0.0, o5 = 0.0, o10 = 0.0;
    std::size_t overlap_count = 0;
    for (int j = 0; j < opt.episodes; ++j) {
        const std::uint64_t ep_seed = mix_seed(opt.seed, static_cast<std::uint64_t>(j));
        const Episode ep = make_episode(ep_seed, env);
        Observation obs = ep.train_obs();

        std::vector<PatchDistribution> oracle;
        std::vector<std::pair<double, double>> peaks;
        const bool need_oracle =
            opt.compute_overlap || (opt.perturb.enabled && opt.perturb.kind == PerturbKind::kFoveate);
        if (need_oracle) {
            for (int v = 0; v < env.views; ++v) {
                std::vector<GazeHeatmap> window;
                for (const auto& pv : ep.gaze) window.push_back(pv[static_cast<std::size_t>(v)]);
                const GazeHeatmap agg = aggregate_temporal(window, weights);
                if (opt.compute_overlap)
                    oracle.push_back(project_to_patches(agg, env.patch_grid));
                std::size_t peak = 0;
                for (std::size_t i = 1; i < agg.values.size(); ++i)
                    if (agg.values[i] > agg.values[peak]) peak = i;
                peaks.emplace_back(static_cast<double>(peak % agg.width) + 0.5,
                                   static_cast<double>(peak / agg.width) + 0.5);
            }
        }
        if (opt.perturb.enabled)
            obs = perturb(obs, opt.perturb.kind, opt.perturb.magnitude,
                          mix_seed(opt.seed, static_cast<std::uint64_t>(j) ^ 0x5bd1e995ULL), peaks);

        auto [actions, trace] = actor(obs);
        succ += success(actions, ep.scene) ? 1.0 : 0.0;
        if (opt.compute_overlap && trace.has_value()) {
            const auto attn = trace->attention(env.patch_grid);
            for (int v = 0; v < env.views; ++v) {
                const auto& s = attn[static_cast<std::size_t>(v)];
                const auto& g = oracle[static_cast<std::size_t>(v)];
                const int nv = env.patch_grid * env.patch_grid;
                o1 += topk_overlap(s, g, std::min(1, nv));
                o5 += topk_overlap(s, g, std::min(5, nv));
                o10 += topk_overlap(s, g, std::min(10, nv));
                ++overlap_count;
            }
        }
    }
    res.success = succ / opt.episodes;
    if (overlap_count > 0) {
        res.overlap1 = o1 / static_cast<double>(overlap_count);
        res.overlap5 = o5 / static_cast<double>(overlap_count);
        res.overlap10 = o10 / static_cast<double>(overlap_count);
    }
    return res;
}

inline EvalResult evaluate(const PolicyParams& params, const EnvConfig& env, double sigma,
                           const EvalOptions& opt) {
    return evaluate_with(
        [&](const Observation& obs) {
            auto [actions, trace] = forward(params, obs);
            return std::make_pair(std::move(actions),
                                  std::optional<ForwardTrace>(std::move(trace)));
        },
        env, sigma, opt);
}

struct TrainResult {
    PolicyParams params;      // final-step parameters
    PolicyParams best_params; // parameters at the best-success eval
    long best_step = 0;
    double best_success = 0.0;
    MetricsStream metrics;
};

// First eval step whose success meets the threshold, or nullopt.
inline std::optional<long> steps_to_threshold(const MetricsStream& metrics, double threshold) {
    if (threshold < 0.0 || threshold > 1.0)
        throw InvalidInputError("steps_to_threshold: threshold must be in [0,1]");
    for (const MetricsRecord& r : metrics)
        if (r.success >= threshold) return r.step;
    return std::nullopt;
}

inline TrainResult train(const TrainConfig& cfg, const Dataset& dataset, int policy_embed_dim = 32,
                         int policy_hidden_dim = 64, int policy_layers = 1,
                         const std::function<void(const MetricsRecord&)>& on_metrics = {}) {
    cfg.validate();
    const EnvConfig& env = dataset.cfg;
    env.validate();
    if (dataset.episodes.empty()) throw InvalidInputError("train: empty dataset");
    const PolicyConfig pcfg = env.policy_config(policy_embed_dim, policy_hidden_dim, policy_layers);
    pcfg.validate();

    // The gaze path is active only when it can affect training. With
    // lambda == 0 it is skipped outright, so a lambda-0 run is bit-identical
    // to a build with the path compiled out.
#ifdef GZRL_ABLATE_GAZE
    const bool use_gaze = false;
#else
    const bool use_gaze = cfg.lambda > 0.0;
#endif

    TrainResult out{init_params(pcfg, cfg.seed), PolicyParams{}, 0, -1.0, {}};
    if (cfg.steps == 0) {
        out.best_params = out.params;
        return out;
    }

    const AggregationWeights weights = make_weights(env.window, cfg.sigma);
    AdamOptimizer opt(out.params, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps);
    Rng batch_rng(mix_seed(cfg.seed, stream::kBatch));
    const std::uint64_t eval_seed = mix_seed(cfg.seed, stream::kEval);

    // Priors are pure functions of (episode, config); cache per episode/view.
    std::vector<std::vector<PatchDistribution>> prior_cache;
    std::vector<bool> prior_ready;
    if (use_gaze) {
        prior_cache.assign(dataset.episodes.size(), {});
        prior_ready.assign(dataset.episodes.size(), false);
    }
    auto priors_for = [&](std::size_t ep_index) -> const std::vector<PatchDistribution>& {
        if (!prior_ready[ep_index]) {
            const Episode& ep = dataset.episodes[ep_index];
            std::vector<PatchDistribution> per_view;
            for (int v = 0; v < env.views; ++v)
                per_view.push_back(prepare_prior(ep, v, env, weights, cfg.variant, cfg.seed));
            prior_cache[ep_index] = std::move(per_view);
            prior_ready[ep_index] = true;
        }
        return prior_cache[ep_index];
    };

    const auto t_start = std::chrono::steady_clock::now();
    LossBreakdown last_finite{};
    long last_finite_step = 0;

    for (long step = 1; step <= cfg.steps; ++step) {
        PolicyParams grads = zeros_like(out.params);
        LossBreakdown batch_loss{0.0, 0.0, 0.0, cfg.lambda};
        for (int b = 0; b < cfg.batch; ++b) {
            const std::size_t ep_index =
                static_cast<std::size_t>(batch_rng.below(dataset.episodes.size()));
            const Episode& ep = dataset.episodes[ep_index];
            auto [actions, trace] = forward(out.params, ep.train_obs());

            TotalLoss tl;
            if (use_gaze) {
                tl = total_loss(actions, ep.expert, priors_for(ep_index), trace, cfg.lambda,
                                cfg.source);
            } else {
                tl = total_loss(actions, ep.expert, {}, trace, cfg.lambda, cfg.source);
            }
            batch_loss.action_loss += tl.breakdown.action_loss;
            batch_loss.gaze_loss += tl.breakdown.gaze_loss;
            batch_loss.total += tl.breakdown.total;

            // Batch gradient is the mean over examples.
            for (double& v : tl.d_actions) v /= cfg.batch;
            for (auto& per_view : tl.d_attn_logits)
                for (auto& dz : per_view)
                    for (double& v : dz) v /= cfg.batch;
            PolicyParams g = backward(out.params, ep.train_obs(), trace, tl.d_actions,
                                      tl.d_attn_logits);
            const auto acc = collect_tensors(grads);
            const auto src = collect_tensors(g);
            for (std::size_t k = 0; k < acc.size(); ++k)
                axpy(1.0, src[k]->data(), acc[k]->data(), acc[k]->size());
        }
        batch_loss.action_loss /= cfg.batch;
        batch_loss.gaze_loss /= cfg.batch;
        batch_loss.total /= cfg.batch;

        if (!std::isfinite(batch_loss.total))
            throw DivergenceError("non-finite loss at step " + std::to_string(step) +
                                  "; last finite: step " + std::to_string(last_finite_step) +
                                  " total " + std::to_string(last_finite.total));
        last_finite = batch_loss;
        last_finite_step = step;

        opt.step(out.params, grads);

        if (step % cfg.eval_interval == 0 || step == cfg.steps) {
            EvalOptions eopt;
            eopt.episodes = cfg.eval_episodes;
            eopt.seed = eval_seed;
            const EvalResult er = evaluate(out.params, env, cfg.sigma, eopt);
            MetricsRecord rec;
            rec.step = step;
            rec.loss = batch_loss;
            rec.success = er.success;
            rec.overlap1 = er.overlap1;
            rec.overlap5 = er.overlap5;
            rec.overlap10 = er.overlap10;
            rec.wall_time_sec =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
            out.metrics.push_back(rec);
            if (on_metrics) on_metrics(rec);
            if (er.success > out.best_success) {
                out.best_success = er.success;
                out.best_step = step;
                out.best_params = out.params;
            }
        }
    }
    if (out.best_step == 0) {
        out.best_params = out.params;
        out.best_step = cfg.steps;
    }
    return out;
}

} // namespace gzrl
