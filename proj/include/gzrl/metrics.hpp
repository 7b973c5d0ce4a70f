// Alignment and performance metrics: top-k attention-gaze overlap, top-k
// region IoU, and ablation-table assembly over metrics streams.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "gzrl/common.hpp"
#include "gzrl/gaze_prior.hpp"
#include "gzrl/losses.hpp"

namespace gzrl {

// Indices of the k largest entries; ties broken by lowest index so results
// are deterministic.
inline std::vector<std::size_t> topk_indices(const std::vector<double>& values, int k) {
    if (k < 1 || static_cast<std::size_t>(k) > values.size())
        throw InvalidInputError("topk: k out of range");
    std::vector<std::size_t> idx(values.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        if (values[a] != values[b]) return values[a] > values[b];
        return a < b;
    });
    idx.resize(static_cast<std::size_t>(k));
    return idx;
}

// Total gaze mass inside the model's k most-attended patches.
inline double topk_overlap(const PatchDistribution& s, const PatchDistribution& g, int k) {
    if (s.probs.size() != g.probs.size()) throw ShapeError("topk_overlap: length mismatch");
    double acc = 0.0;
    for (std::size_t j : topk_indices(s.probs.probs, k)) acc += g.probs[j];
    return acc;
}

// |topk(a) n topk(b)| / |topk(a) u topk(b)|.
inline double topk_iou(const PatchDistribution& a, const PatchDistribution& b, int k) {
    if (a.probs.size() != b.probs.size()) throw ShapeError("topk_iou: length mismatch");
    auto ta = topk_indices(a.probs.probs, k);
    auto tb = topk_indices(b.probs.probs, k);
    std::sort(ta.begin(), ta.end());
    std::sort(tb.begin(), tb.end());
    std::vector<std::size_t> inter;
    std::set_intersection(ta.begin(), ta.end(), tb.begin(), tb.end(), std::back_inserter(inter));
    const std::size_t uni = ta.size() + tb.size() - inter.size();
    return static_cast<double>(inter.size()) / static_cast<double>(uni);
}

struct OverlapReport {
    int k = 0;
    std::vector<double> overlaps;
    double mean = 0.0;
    bool has_delta = false;
    double delta = 0.0; // mean minus a comparison model's mean

    static OverlapReport build(int k, std::vector<double> values) {
        OverlapReport r;
        r.k = k;
        r.overlaps = std::move(values);
        r.mean = r.overlaps.empty() ? 0.0
                                    : std::accumulate(r.overlaps.begin(), r.overlaps.end(), 0.0) /
                                          static_cast<double>(r.overlaps.size());
        return r;
    }

    OverlapReport with_delta_vs(const OverlapReport& other) const {
        OverlapReport r = *this;
        r.has_delta = true;
        r.delta = mean - other.mean;
        return r;
    }
};

// One evaluation record; the serialized metrics stream carries every field
// except wall_time_sec, which would break byte-reproducibility.
struct MetricsRecord {
    long step = 0;
    LossBreakdown loss;
    double success = 0.0;
    double overlap1 = 0.0;
    double overlap5 = 0.0;
    double overlap10 = 0.0;
    double wall_time_sec = 0.0;
};

using MetricsStream = std::vector<MetricsRecord>;

struct ComparisonRow {
    long step = 0;
    double mean_a = 0.0;
    double mean_b = 0.0;
    double delta = 0.0; // a minus b
};

struct ModelComparison {
    std::vector<ComparisonRow> success_by_step;
    std::vector<double> per_seed_final_a;
    std::vector<double> per_seed_final_b;
    double final_success_a = 0.0;
    double final_success_b = 0.0;
    double final_delta = 0.0;
    double final_overlap10_a = 0.0;
    double final_overlap10_b = 0.0;
    double overlap10_delta = 0.0;
};

// Aligns two models' per-seed metrics streams and reduces to per-step mean
// deltas plus final-row means over seeds. All streams must share the eval
// schedule.
inline ModelComparison compare_models(const std::vector<MetricsStream>& a,
                                      const std::vector<MetricsStream>& b) {
    if (a.empty() || b.empty()) throw InvalidInputError("compare_models: empty stream set");
    const std::size_t n_steps = a.front().size();
    auto check_schedule = [&](const std::vector<MetricsStream>& streams) {
        for (const MetricsStream& s : streams) {
            if (s.size() != n_steps) throw InvalidInputError("compare_models: misaligned schedules");
            for (std::size_t i = 0; i < s.size(); ++i)
                if (s[i].step != a.front()[i].step)
                    throw InvalidInputError("compare_models: misaligned schedules");
        }
    };
    check_schedule(a);
    check_schedule(b);

    auto mean_at = [](const std::vector<MetricsStream>& streams, std::size_t i) {
        double acc = 0.0;
        for (const MetricsStream& s : streams) acc += s[i].success;
        return acc / static_cast<double>(streams.size());
    };

    ModelComparison cmp;
    for (std::size_t i = 0; i < n_steps; ++i) {
        ComparisonRow row;
        row.step = a.front()[i].step;
        row.mean_a = mean_at(a, i);
        row.mean_b = mean_at(b, i);
        row.delta = row.mean_a - row.mean_b;
        cmp.success_by_step.push_back(row);
    }
    if (n_steps > 0) {
        for (const MetricsStream& s : a) cmp.per_seed_final_a.push_back(s.back().success);
        for (const MetricsStream& s : b) cmp.per_seed_final_b.push_back(s.back().success);
        cmp.final_success_a = cmp.success_by_step.back().mean_a;
        cmp.final_success_b = cmp.success_by_step.back().mean_b;
        cmp.final_delta = cmp.final_success_a - cmp.final_success_b;
        double oa = 0.0, ob = 0.0;
        for (const MetricsStream& s : a) oa += s.back().overlap10;
        for (const MetricsStream& s : b) ob += s.back().overlap10;
        cmp.final_overlap10_a = oa / static_cast<double>(a.size());
        cmp.final_overlap10_b = ob / static_cast<double>(b.size());
        cmp.overlap10_delta = cmp.final_overlap10_a - cmp.final_overlap10_b;
    }
    return cmp;
}

// One ablation-table row (a single trained configuration and seed).
struct AblationRow {
    std::string label;
    double lambda = 0.0;
    std::string variant;
    std::uint64_t seed = 0;
    double final_success = 0.0;
    double best_success = 0.0;
    double final_overlap10 = 0.0;
    long steps_to_60pct = -1; // -1 when never reached
};

inline std::string format_double(double v, int precision = 6) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*g", precision, v);
    return buf;
}

// CSV with a header row and one row per config/seed, then per-label means
// with a signed delta column against the first label.
inline std::string ablation_csv(const std::vector<AblationRow>& rows) {
    std::ostringstream out;
    out << "label,lambda,variant,seed,final_success,best_success,final_overlap10,steps_to_60pct\n";
    for (const AblationRow& r : rows) {
        out << r.label << ',' << format_double(r.lambda, 10) << ',' << r.variant << ',' << r.seed
            << ',' << format_double(r.final_success) << ',' << format_double(r.best_success) << ','
            << format_double(r.final_overlap10) << ',' << r.steps_to_60pct << '\n';
    }
    // summary block: mean per label, delta vs the first label's mean
    std::vector<std::string> labels;
    for (const AblationRow& r : rows)
        if (std::find(labels.begin(), labels.end(), r.label) == labels.end())
            labels.push_back(r.label);
    auto label_mean = [&](const std::string& label) {
        double acc = 0.0;
        int n = 0;
        for (const AblationRow& r : rows)
            if (r.label == label) {
                acc += r.final_success;
                ++n;
            }
        return acc / std::max(1, n);
    };
    if (!labels.empty()) {
        const double base = label_mean(labels.front());
        for (const std::string& label : labels) {
            const double mean = label_mean(label);
            out << "mean:" << label << ",,,," << format_double(mean) << ",,,"
                << "\n";
            out << "delta:" << label << ",,,," << format_double(mean - base) << ",,,"
                << "\n";
        }
    }
    return out.str();
}

// Aligned plain-text rendering of the same table for docs and logs.
inline std::string ablation_text(const std::vector<AblationRow>& rows) {
    std::ostringstream out;
    char line[256];
    std::snprintf(line, sizeof(line), "%-24s %-10s %-12s %-6s %-10s %-10s %-12s %s\n", "label",
                  "lambda", "variant", "seed", "success", "best", "overlap@10", "steps>=60%");
    out << line;
    for (const AblationRow& r : rows) {
        std::snprintf(line, sizeof(line), "%-24s %-10g %-12s %-6llu %-10.4f %-10.4f %-12.4f %ld\n",
                      r.label.c_str(), r.lambda, r.variant.c_str(),
                      static_cast<unsigned long long>(r.seed), r.final_success, r.best_success,
                      r.final_overlap10, r.steps_to_60pct);
        out << line;
    }
    return out.str();
}

} // namespace gzrl
