#include <gtest/gtest.h>

#include <cmath>

#include "coldscatter/errors.hpp"
#include "coldscatter/protocols.hpp"

using namespace coldscatter;
using namespace coldscatter::protocols;

namespace {

// Closed geometric sum over the truncated square: (1 - x^{N+1})^2.
double truncated_norm_oracle(double nbar, int N) {
    const double x = nbar / (1.0 + nbar);
    const double g = 1.0 - std::pow(x, N + 1);
    return g * g;
}

}  // namespace

TEST(Schmidt, VacuumLimit) {
    EXPECT_EQ(schmidt_coefficient(0.0, 0, 0), 1.0);
    for (int m = 0; m < 4; ++m)
        for (int n = 0; n < 4; ++n)
            if (m + n > 0) EXPECT_EQ(schmidt_coefficient(0.0, m, n), 0.0);
}

TEST(Schmidt, DirectFormulaAndSigns) {
    for (double nb : {0.1, 1.0, 10.0})
        for (int m = 0; m < 6; ++m)
            for (int n = 0; n < 6; ++n) {
                const double direct = std::pow(-1.0, n) * std::pow(nb, 0.5 * (m + n)) / std::pow(1 + nb, 0.5 * (m + n) + 1);
                EXPECT_NEAR(schmidt_coefficient(nb, m, n), direct, 1e-14 * std::abs(direct));
                EXPECT_LT(schmidt_coefficient(nb, m, n + 1) / schmidt_coefficient(nb, m, n), 0.0);
            }
}

TEST(Schmidt, DependsOnTotalOnly) {
    for (double nb : {0.3, 4.0})
        for (int k = 0; k < 12; ++k)
            for (int m = 0; m <= k; ++m)
                EXPECT_DOUBLE_EQ(std::abs(schmidt_coefficient(nb, m, k - m)), std::abs(schmidt_coefficient(nb, k, 0)));
}

TEST(Schmidt, NoUnderflowInLogSpace) {
    // Direct evaluation of nbar^{(m+n)/2} overflows here; the ratio is representable.
    const double v = schmidt_coefficient(1e3, 1500, 1500);
    EXPECT_TRUE(std::isfinite(v));
    EXPECT_GT(std::abs(v), 0.0);
    const double lv = 1500.0 * (std::log(1e3) - std::log(1001.0)) - std::log(1001.0);
    EXPECT_NEAR(std::log(std::abs(v)), lv, 1e-12 * std::abs(lv));
}

TEST(Schmidt, NormalizationAtTailBound) {
    for (double nb : {0.1, 1.0, 10.0}) {
        const int N = truncation_for(nb, 1e-12);
        PsiMinusState st{nb, N};
        EXPECT_NEAR(st.truncated_norm(), 1.0, 1e-9) << nb;
        EXPECT_LE(tail_bound(nb, N), 1e-12);
        EXPECT_GT(tail_bound(nb, N - 1), 1e-12);
    }
}

TEST(Schmidt, TruncationErrorWithinBound) {
    for (double nb : {0.1, 1.0, 10.0})
        for (int N : {0, 1, 3, 10, 40, 100}) {
            PsiMinusState st{nb, N};
            const double norm = st.truncated_norm();
            EXPECT_LE(norm, 1.0 + 1e-15);
            EXPECT_NEAR(norm, truncated_norm_oracle(nb, N), 1e-13);
            EXPECT_LE(1.0 - norm, tail_bound(nb, N) + 1e-15);
        }
}

TEST(Schmidt, Validation) {
    EXPECT_THROW(schmidt_coefficient(-1.0, 0, 0), DomainError);
    EXPECT_THROW(schmidt_coefficient(1.0, -1, 0), DomainError);
    EXPECT_THROW((PsiMinusState{1.0, -1}.validate()), DomainError);
    EXPECT_THROW(truncation_for(1.0, 0.0), DomainError);
    EXPECT_EQ(truncation_for(0.0, 1e-9), 0);
}

TEST(MachZehnder, LinearSignal) {
    EXPECT_EQ(mz_signal(3.0, 0.2, 0.0), 0.0);
    EXPECT_DOUBLE_EQ(mz_signal(1.5, 0.01, 200.0), 2.0 * mz_signal(1.5, 0.01, 100.0));
    EXPECT_NEAR(mz_phase(0.01, 100.0), 1.0, 1e-15);
    EXPECT_NEAR(mz_signal(2.5, 0.01, 100.0), 2.5, 1e-15);
    EXPECT_THROW(mz_signal(1.0, -0.1, 1.0), DomainError);
    EXPECT_THROW(mz_signal(1.0, 0.1, -1.0), DomainError);
}
