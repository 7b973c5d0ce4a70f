#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "gzrl/numerics.hpp"
#include "gzrl/rng.hpp"

using namespace gzrl;

namespace {

Simplex random_simplex(Rng& rng, std::size_t n, bool allow_zeros = false) {
    std::vector<double> w(n);
    for (auto& v : w) v = rng.uniform();
    if (allow_zeros)
        for (auto& v : w)
            if (v < 0.3) v = 0.0;
    double sum = 0.0;
    for (double v : w) sum += v;
    if (sum == 0.0) w[0] = 1.0;
    return Simplex::from_weights(w);
}

} // namespace

TEST(Softmax, UniformOnEqualLogits) {
    const Simplex s = softmax({0.0, 0.0, 0.0, 0.0});
    for (double p : s.probs) EXPECT_DOUBLE_EQ(p, 0.25);
}

TEST(Softmax, LargeLogitsDoNotOverflow) {
    const Simplex s = softmax({1000.0, 1000.0});
    EXPECT_DOUBLE_EQ(s[0], 0.5);
    EXPECT_DOUBLE_EQ(s[1], 0.5);
}

TEST(Softmax, ClosedFormValues) {
    // e^x / sum e^x evaluated in extended precision
    const Simplex s = softmax({1.0, 2.0, 3.0});
    EXPECT_NEAR(s[0], 0.090030573170380458, 1e-15);
    EXPECT_NEAR(s[1], 0.244728471054797653, 1e-15);
    EXPECT_NEAR(s[2], 0.665240955774821890, 1e-15);
}

TEST(Softmax, NonFiniteLogitRejected) {
    EXPECT_THROW(softmax({1.0, std::numeric_limits<double>::infinity()}), InvalidInputError);
    EXPECT_THROW(softmax({std::nan(""), 0.0}), InvalidInputError);
    EXPECT_THROW(softmax({}), InvalidInputError);
}

TEST(Softmax, ShiftInvariance) {
    Rng rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> z(16);
        for (auto& v : z) v = rng.uniform(-5.0, 5.0);
        const double c = rng.uniform(-1000.0, 1000.0);
        std::vector<double> shifted = z;
        for (auto& v : shifted) v += c;
        const Simplex a = softmax(z);
        const Simplex b = softmax(shifted);
        for (std::size_t j = 0; j < z.size(); ++j) EXPECT_NEAR(a[j], b[j], 1e-12);
    }
}

TEST(Softmax, ArgmaxInvariance) {
    Rng rng(12);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> z(10);
        for (auto& v : z) v = rng.uniform(-3.0, 3.0);
        const Simplex s = softmax(z);
        const auto zmax = std::max_element(z.begin(), z.end()) - z.begin();
        const auto smax = std::max_element(s.probs.begin(), s.probs.end()) - s.probs.begin();
        EXPECT_EQ(zmax, smax);
    }
}

TEST(SimplexType, InvariantsEnforced) {
    EXPECT_NO_THROW(Simplex::checked({0.5, 0.5}));
    EXPECT_THROW(Simplex::checked({0.6, 0.6}), InvalidInputError);
    EXPECT_THROW(Simplex::checked({-0.1, 1.1}), InvalidInputError);
    EXPECT_THROW(Simplex::checked({}), InvalidInputError);
}

TEST(KlDiv, IdenticalIsExactlyZero) {
    const Simplex p = Simplex::checked({0.5, 0.5});
    EXPECT_EQ(kl_div(p, p), 0.0);
    Rng rng(13);
    for (int trial = 0; trial < 50; ++trial) {
        const Simplex q = random_simplex(rng, 8, true);
        EXPECT_EQ(kl_div(q, q), 0.0);
    }
}

TEST(KlDiv, ClosedFormValues) {
    const Simplex onehot = Simplex::checked({1.0, 0.0});
    const Simplex uniform = Simplex::checked({0.5, 0.5});
    EXPECT_NEAR(kl_div(onehot, uniform), 0.6931471805599453, 1e-15);

    const Simplex q = Simplex::checked({0.9, 0.1});
    EXPECT_NEAR(kl_div(uniform, q), 0.5108256237659907, 1e-15);
}

TEST(KlDiv, ZeroInSecondArgumentGivesInfinity) {
    const Simplex p = Simplex::checked({0.5, 0.5});
    const Simplex q = Simplex::checked({1.0, 0.0});
    EXPECT_TRUE(std::isinf(kl_div(p, q)));
    // but 0 log 0 = 0: support(p) inside support(q) stays finite
    EXPECT_NEAR(kl_div(q, p), std::log(2.0), 1e-15);
}

TEST(KlDiv, LengthMismatchRejected) {
    EXPECT_THROW(kl_div(Simplex::checked({1.0}), Simplex::checked({0.5, 0.5})), ShapeError);
}

TEST(KlDiv, NonNegativeOnRandomPairs) {
    Rng rng(14);
    for (int trial = 0; trial < 200; ++trial) {
        const Simplex p = random_simplex(rng, 12, true);
        const Simplex q = random_simplex(rng, 12, false); // strictly positive
        EXPECT_GE(kl_div(p, q), 0.0);
    }
}

TEST(KlGrad, ZeroAtMinimum) {
    std::vector<double> z{0.3, -1.2, 2.0, 0.0};
    const Simplex g = softmax(z);
    for (double v : kl_grad_wrt_logits(g, z)) EXPECT_NEAR(v, 0.0, 1e-16);
}

TEST(KlGrad, UniformSoftmaxClosedForm) {
    const Simplex g = Simplex::checked({1.0, 0.0});
    const auto grad = kl_grad_wrt_logits(g, {0.0, 0.0});
    EXPECT_DOUBLE_EQ(grad[0], -0.5);
    EXPECT_DOUBLE_EQ(grad[1], 0.5);
}

TEST(KlGrad, MatchesFiniteDifferences) {
    // >= 100 random (g, z) pairs at N = 64, max relative error < 1e-5
    Rng rng(15);
    const std::size_t n = 64;
    for (int trial = 0; trial < 100; ++trial) {
        const Simplex g = random_simplex(rng, n, true);
        std::vector<double> z(n);
        for (auto& v : z) v = rng.uniform(-3.0, 3.0);
        const auto grad = kl_grad_wrt_logits(g, z);
        const auto f = [&](const std::vector<double>& logits) {
            return kl_div(g, softmax(logits));
        };
        EXPECT_LT(finite_diff_check(f, grad, z, 1e-6), 1e-5);
    }
}

TEST(FiniteDiff, QuadraticIsNearlyExact) {
    const std::vector<double> x{1.0, 2.0, 3.0};
    const auto f = [](const std::vector<double>& v) {
        double s = 0.0;
        for (double u : v) s += u * u;
        return s;
    };
    const std::vector<double> grad{2.0, 4.0, 6.0};
    EXPECT_LT(finite_diff_check(f, grad, x, 1e-5), 1e-8);
}

TEST(FiniteDiff, DetectsWrongGradient) {
    const std::vector<double> x{1.0, 2.0, 3.0};
    const auto f = [](const std::vector<double>& v) {
        double s = 0.0;
        for (double u : v) s += u * u;
        return s;
    };
    const std::vector<double> wrong{3.0, 5.0, 7.0}; // 2x + 1
    EXPECT_GE(finite_diff_check(f, wrong, x, 1e-5), 0.1);
}

TEST(FiniteDiff, NonFiniteFunctionNamesCoordinate) {
    const auto f = [](const std::vector<double>& v) {
        return v[1] > 1.0 ? std::numeric_limits<double>::quiet_NaN() : v[0];
    };
    try {
        finite_diff_check(f, {1.0, 0.0}, {0.0, 1.0}, 1e-3);
        FAIL() << "expected InvalidInputError";
    } catch (const InvalidInputError& e) {
        EXPECT_NE(std::string(e.what()).find("coordinate 1"), std::string::npos);
    }
}

TEST(SoftmaxBackward, AgreesWithKlClosedForm) {
    // softmax_backward(S, -G/S) must reproduce S - G
    Rng rng(16);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> z(10);
        for (auto& v : z) v = rng.uniform(-2.0, 2.0);
        const Simplex s = softmax(z);
        const Simplex g = random_simplex(rng, 10, true);
        std::vector<double> ds(10);
        for (std::size_t j = 0; j < 10; ++j) ds[j] = -g[j] / s[j];
        const auto dz = softmax_backward(s, ds);
        for (std::size_t j = 0; j < 10; ++j) EXPECT_NEAR(dz[j], s[j] - g[j], 1e-12);
    }
}
