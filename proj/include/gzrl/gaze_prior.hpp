// Turns raw gaze heatmaps into patch-level prior distributions: patch
// projection with a uniform zero-mass fallback, weighted temporal
// aggregation, and the degraded prior variants used by ablations.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "gzrl/common.hpp"
#include "gzrl/numerics.hpp"
#include "gzrl/rng.hpp"

namespace gzrl {

// Nonnegative pixel-intensity grid, row-major.
struct GazeHeatmap {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<double> values;

    double at(std::size_t y, std::size_t x) const { return values[y * width + x]; }
    double& at(std::size_t y, std::size_t x) { return values[y * width + x]; }

    double total() const { return std::accumulate(values.begin(), values.end(), 0.0); }

    void validate() const {
        if (height < 1 || width < 1) throw InvalidInputError("GazeHeatmap: empty grid");
        if (values.size() != height * width) throw ShapeError("GazeHeatmap: value count mismatch");
        for (double v : values) {
            if (!std::isfinite(v))
                throw InvalidInputError("GazeHeatmap: non-finite value");
            if (v < 0.0) throw InvalidInputError("GazeHeatmap: negative value");
        }
    }
};

// Probability vector over a P x P visual-patch grid.
struct PatchDistribution {
    int grid = 0; // P; probs has P*P entries
    Simplex probs;

    int num_patches() const { return grid * grid; }
};

// Convex window weights w_delta, delta in [-T, T], peaked at delta = 0.
struct AggregationWeights {
    int window = 0;              // T
    std::vector<double> weights; // length 2T+1, index delta + T

    double at(int delta) const { return weights[static_cast<std::size_t>(delta + window)]; }

    void validate() const {
        if (window < 0) throw InvalidInputError("AggregationWeights: negative window");
        if (weights.size() != static_cast<std::size_t>(2 * window + 1))
            throw ShapeError("AggregationWeights: expected 2T+1 weights");
        double sum = 0.0;
        for (double w : weights) {
            if (!(w >= 0.0)) throw InvalidInputError("AggregationWeights: negative weight");
            sum += w;
        }
        if (std::abs(sum - 1.0) > 1e-12)
            throw InvalidInputError("AggregationWeights: weights must sum to 1");
        const double w0 = at(0);
        for (double w : weights)
            if (w > w0) throw InvalidInputError("AggregationWeights: center weight not maximal");
    }
};

// Pools a heatmap onto a P x P patch grid and normalizes. Patch j's mass is
// the sum of heatmap values inside its region divided by the total; a
// zero-mass map falls back to the uniform distribution. Dimensions must be
// divisible by P; remainder pixels are never silently dropped.
inline PatchDistribution project_to_patches(const GazeHeatmap& h, int patch_grid) {
    h.validate();
    if (patch_grid < 1) throw InvalidInputError("project_to_patches: P must be >= 1");
    const auto p = static_cast<std::size_t>(patch_grid);
    if (h.height % p != 0)
        throw InvalidInputError("project_to_patches: height " + std::to_string(h.height) +
                                " not a multiple of P=" + std::to_string(patch_grid));
    if (h.width % p != 0)
        throw InvalidInputError("project_to_patches: width " + std::to_string(h.width) +
                                " not a multiple of P=" + std::to_string(patch_grid));
    const std::size_t ph = h.height / p;
    const std::size_t pw = h.width / p;
    std::vector<double> mass(p * p, 0.0);
    double total = 0.0;
    for (std::size_t u = 0; u < p; ++u) {
        for (std::size_t v = 0; v < p; ++v) {
            double acc = 0.0;
            for (std::size_t y = u * ph; y < (u + 1) * ph; ++y)
                for (std::size_t x = v * pw; x < (v + 1) * pw; ++x) acc += h.at(y, x);
            mass[u * p + v] = acc;
            total += acc;
        }
    }
    if (total <= 0.0)
        return PatchDistribution{patch_grid, Simplex::uniform(p * p)};
    for (double& m : mass) m /= total;
    return PatchDistribution{patch_grid, Simplex{std::move(mass)}};
}

// Pixelwise weighted sum of 2T+1 heatmaps.
inline GazeHeatmap aggregate_temporal(const std::vector<GazeHeatmap>& maps,
                                      const AggregationWeights& w) {
    w.validate();
    if (maps.size() != w.weights.size())
        throw ShapeError("aggregate_temporal: expected " + std::to_string(w.weights.size()) +
                         " maps, got " + std::to_string(maps.size()));
    const std::size_t hgt = maps.front().height;
    const std::size_t wdt = maps.front().width;
    GazeHeatmap out{hgt, wdt, std::vector<double>(hgt * wdt, 0.0)};
    for (std::size_t k = 0; k < maps.size(); ++k) {
        const GazeHeatmap& m = maps[k];
        if (m.height != hgt || m.width != wdt)
            throw ShapeError("aggregate_temporal: heatmap dimension mismatch at index " +
                             std::to_string(k));
        const double wk = w.weights[k];
        for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] += wk * m.values[i];
    }
    return out;
}

// Exponential-decay window: w_delta proportional to exp(-|delta|/sigma),
// normalized to sum 1; the center frame always carries the largest weight.
inline AggregationWeights make_weights(int window, double sigma) {
    if (window < 0) throw InvalidInputError("make_weights: T must be >= 0");
    if (!(sigma > 0.0)) throw InvalidInputError("make_weights: sigma must be > 0");
    std::vector<double> w(static_cast<std::size_t>(2 * window + 1));
    double sum = 0.0;
    for (int d = -window; d <= window; ++d) {
        const double v = std::exp(-std::abs(static_cast<double>(d)) / sigma);
        w[static_cast<std::size_t>(d + window)] = v;
        sum += v;
    }
    for (double& v : w) v /= sum;
    return AggregationWeights{window, std::move(w)};
}

enum class VariantKind { kStructured, kUniform, kShuffled, kSingleFrame };

inline VariantKind variant_from_string(const std::string& s) {
    if (s == "structured") return VariantKind::kStructured;
    if (s == "uniform") return VariantKind::kUniform;
    if (s == "shuffled") return VariantKind::kShuffled;
    if (s == "single-frame" || s == "single_frame") return VariantKind::kSingleFrame;
    throw InvalidInputError("unknown gaze variant kind: " + s);
}

inline const char* variant_to_string(VariantKind k) {
    switch (k) {
        case VariantKind::kStructured: return "structured";
        case VariantKind::kUniform: return "uniform";
        case VariantKind::kShuffled: return "shuffled";
        case VariantKind::kSingleFrame: return "single-frame";
    }
    throw InvalidInputError("unknown gaze variant kind");
}

// Seeded Fisher-Yates permutation of [0, n).
inline std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed) {
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    Rng rng(mix_seed(seed, stream::kShuffleVariant));
    for (std::size_t i = n; i > 1; --i) {
        const std::size_t j = rng.below(i);
        std::swap(perm[i - 1], perm[j]);
    }
    return perm;
}

// Prior-degradation variants for ablations. `aggregated` is the temporally
// aggregated projection; `center_frame` is the projection of the un-aggregated
// center frame, which the single-frame variant returns as-is.
inline PatchDistribution make_variant(const PatchDistribution& aggregated,
                                      const PatchDistribution& center_frame, VariantKind kind,
                                      std::uint64_t seed) {
    switch (kind) {
        case VariantKind::kStructured:
            return aggregated;
        case VariantKind::kUniform:
            return PatchDistribution{aggregated.grid,
                                     Simplex::uniform(aggregated.probs.size())};
        case VariantKind::kShuffled: {
            const auto perm = seeded_permutation(aggregated.probs.size(), seed);
            std::vector<double> out(aggregated.probs.size());
            for (std::size_t i = 0; i < perm.size(); ++i)
                out[i] = aggregated.probs.probs[perm[i]];
            return PatchDistribution{aggregated.grid, Simplex{std::move(out)}};
        }
        case VariantKind::kSingleFrame:
            return center_frame;
    }
    throw InvalidInputError("unknown gaze variant kind");
}

} // namespace gzrl
