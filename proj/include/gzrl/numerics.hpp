// Probability-simplex primitives: stable softmax, KL divergence, the analytic
// KL-through-softmax gradient, and a central finite-difference gradient
// checker. Everything here is a pure function in double precision.
#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "gzrl/common.hpp"

namespace gzrl {

// A discrete probability distribution: entries >= 0, summing to 1 within 1e-9.
struct Simplex {
    std::vector<double> probs;

    std::size_t size() const { return probs.size(); }
    double operator[](std::size_t i) const { return probs[i]; }

    // Validates the invariants and wraps the vector.
    static Simplex checked(std::vector<double> p) {
        if (p.empty()) throw InvalidInputError("Simplex: empty vector");
        double sum = 0.0;
        for (double v : p) {
            if (!std::isfinite(v) || v < 0.0)
                throw InvalidInputError("Simplex: entries must be finite and >= 0");
            sum += v;
        }
        if (std::abs(sum - 1.0) > 1e-9)
            throw InvalidInputError("Simplex: entries sum to " + std::to_string(sum) +
                                    ", expected 1 within 1e-9");
        return Simplex{std::move(p)};
    }

    // Normalizes nonnegative weights with positive total mass.
    static Simplex from_weights(const std::vector<double>& w) {
        if (w.empty()) throw InvalidInputError("Simplex: empty vector");
        double sum = 0.0;
        for (double v : w) {
            if (!std::isfinite(v) || v < 0.0)
                throw InvalidInputError("Simplex: weights must be finite and >= 0");
            sum += v;
        }
        if (sum <= 0.0) throw InvalidInputError("Simplex: zero total mass");
        std::vector<double> p(w.size());
        for (std::size_t i = 0; i < w.size(); ++i) p[i] = w[i] / sum;
        return Simplex{std::move(p)};
    }

    static Simplex uniform(std::size_t n) {
        if (n == 0) throw InvalidInputError("Simplex: empty vector");
        return Simplex{std::vector<double>(n, 1.0 / static_cast<double>(n))};
    }
};

// Max-subtracted softmax. Shifting all logits by a constant leaves the output
// unchanged up to 1e-12; entries are strictly positive.
inline Simplex softmax(const std::vector<double>& logits) {
    if (logits.empty()) throw InvalidInputError("softmax: empty logits");
    double mx = -std::numeric_limits<double>::infinity();
    for (double z : logits) {
        if (!std::isfinite(z)) throw InvalidInputError("softmax: non-finite logit");
        mx = std::max(mx, z);
    }
    std::vector<double> e(logits.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        e[i] = std::exp(logits[i] - mx);
        sum += e[i];
    }
    for (double& v : e) v /= sum;
    return Simplex{std::move(e)};
}

// D_KL(p || q) with the 0 * log(0/q) = 0 convention. Returns +infinity when
// some p_j > 0 has q_j = 0.
inline double kl_div(const Simplex& p, const Simplex& q) {
    if (p.size() != q.size()) throw ShapeError("kl_div: length mismatch");
    double acc = 0.0;
    for (std::size_t j = 0; j < p.size(); ++j) {
        if (p[j] == 0.0) continue;
        if (q[j] <= 0.0) return std::numeric_limits<double>::infinity();
        acc += p[j] * std::log(p[j] / q[j]);
    }
    return acc;
}

// Gradient of D_KL(g || softmax(z)) with respect to z: softmax(z) - g.
inline std::vector<double> kl_grad_wrt_logits(const Simplex& g,
                                              const std::vector<double>& logits) {
    if (g.size() != logits.size()) throw ShapeError("kl_grad_wrt_logits: length mismatch");
    Simplex s = softmax(logits);
    std::vector<double> grad(g.size());
    for (std::size_t j = 0; j < g.size(); ++j) grad[j] = s[j] - g.probs[j];
    return grad;
}

// Pulls a gradient w.r.t. softmax outputs back to the logits:
// dz_j = s_j * (ds_j - sum_k s_k ds_k).
inline std::vector<double> softmax_backward(const Simplex& s, const std::vector<double>& ds) {
    if (s.size() != ds.size()) throw ShapeError("softmax_backward: length mismatch");
    double inner = 0.0;
    for (std::size_t k = 0; k < s.size(); ++k) inner += s[k] * ds[k];
    std::vector<double> dz(s.size());
    for (std::size_t j = 0; j < s.size(); ++j) dz[j] = s.probs[j] * (ds[j] - inner);
    return dz;
}

// Central finite differences against an analytic gradient. Returns
// max_j |fd_j - g_j| / (|g_j| + 1e-8).
inline double finite_diff_check(const std::function<double(const std::vector<double>&)>& f,
                                const std::vector<double>& analytic_grad,
                                const std::vector<double>& x, double step) {
    if (analytic_grad.size() != x.size())
        throw ShapeError("finite_diff_check: gradient/point length mismatch");
    if (!(step > 0.0)) throw InvalidInputError("finite_diff_check: step must be > 0");
    std::vector<double> probe = x;
    double worst = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) {
        probe[j] = x[j] + step;
        const double fp = f(probe);
        probe[j] = x[j] - step;
        const double fm = f(probe);
        probe[j] = x[j];
        if (!std::isfinite(fp) || !std::isfinite(fm))
            throw InvalidInputError("finite_diff_check: non-finite f at coordinate " +
                                    std::to_string(j));
        const double fd = (fp - fm) / (2.0 * step);
        const double err = std::abs(fd - analytic_grad[j]) / (std::abs(analytic_grad[j]) + 1e-8);
        worst = std::max(worst, err);
    }
    return worst;
}

} // namespace gzrl
