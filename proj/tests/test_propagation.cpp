#include <gtest/gtest.h>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <random>
#include <unsupported/Eigen/MatrixFunctions>

#include "coldscatter/errors.hpp"
#include "coldscatter/medium.hpp"
#include "coldscatter/propagation.hpp"

using namespace coldscatter;
using namespace coldscatter::propagation;
using Eigen::Matrix2cd;

namespace {
const cd I(0, 1);
constexpr double kPi = 3.141592653589793;

Matrix3cd random_symmetric(std::mt19937_64& g, bool real) {
    std::uniform_real_distribution<double> u(-0.05, 0.05);
    Matrix3cd m;
    for (int i = 0; i < 3; ++i)
        for (int j = i; j < 3; ++j) m(i, j) = m(j, i) = cd(u(g), real ? 0.0 : std::abs(u(g)));
    return m;
}

Vector3d random_unit(std::mt19937_64& g) {
    std::normal_distribution<double> n;
    return Vector3d(n(g), n(g), n(g)).normalized();
}

Medium constant_medium(const Matrix3cd& chi, double n0 = 1.0) {
    auto prof = std::make_shared<UniformSphereProfile>(n0, 1e6);
    return Medium({{prof, [chi](double) { return chi; }}});
}

// Independent reference: matrix exponential of the local Cartesian block.
Matrix2cd expm_reference(const Matrix3cd& chi, const Vector3d& d, double L, double k = 1.0) {
    const Eigen::Matrix3d F = medium::transverse_frame(d);
    const Matrix2cd c = (F.leftCols<2>().transpose().cast<cd>() * chi * F.leftCols<2>().cast<cd>());
    const Matrix2cd A = (2.0 * kPi * k * L * I) * c;
    return A.exp();
}
}  // namespace

TEST(Segment, ConstructionAndDegenerate) {
    const auto s = RaySegment::between(Vector3d(0, 0, 0), Vector3d(3, 4, 0), 0.5);
    EXPECT_DOUBLE_EQ(s.length, 5.0);
    EXPECT_LT((s.direction - Vector3d(0.6, 0.8, 0)).norm(), 1e-16);
    EXPECT_THROW(RaySegment::between(Vector3d(1, 1, 1), Vector3d(1, 1, 1)), DomainError);
}

TEST(PhaseIntegrals, VacuumAndConstant) {
    const auto seg = RaySegment::between(Vector3d(0, 0, 0), Vector3d(0, 0, 7.0));
    const auto v = phase_integrals(seg, [](const Vector3d&) { return std::make_pair(cd(0), cd(0)); });
    EXPECT_EQ(v.phi0, cd(0.0));
    EXPECT_EQ(v.phi, cd(0.0));
    const cd c0(0.01, 0.002), cl(0.003, 0.0);
    const auto h = phase_integrals(seg, [&](const Vector3d&) { return std::make_pair(c0, cl); });
    EXPECT_LT(std::abs(h.phi0 - 2.0 * kPi * c0 * 7.0), 1e-14);
    EXPECT_LT(std::abs(h.phi - 2.0 * kPi * cl * 7.0), 1e-14);
}

TEST(PhaseIntegrals, GaussianCentralChordMatchesErf) {
    const double n0 = 0.01, r0 = 20.0;
    GaussianProfile g(n0, r0);
    const cd chi_unit(-0.3, 0.75);
    const double a = -35.0, b = 12.0;
    const auto seg = RaySegment::between(Vector3d(0, 0, a), Vector3d(0, 0, b));
    const auto p = phase_integrals(seg, [&](const Vector3d& r) { return std::make_pair(g.density(r) * chi_unit, cd(0)); });
    const double col = n0 * r0 * std::sqrt(kPi / 2.0) * (std::erf(b / (std::sqrt(2.0) * r0)) - std::erf(a / (std::sqrt(2.0) * r0)));
    EXPECT_LT(std::abs(p.phi0 - 2.0 * kPi * chi_unit * col), 1e-10 * std::abs(2.0 * kPi * chi_unit * col));
    // analytic column agrees with the same oracle
    EXPECT_NEAR(g.column(Vector3d(0, 0, 0), Vector3d::UnitZ(), a, b), col, 1e-14 * col);
}

TEST(PhaseIntegrals, NonConvergenceRaises) {
    const auto seg = RaySegment::between(Vector3d(0, 0, 0), Vector3d(0, 0, 1.0));
    auto wild = [](const Vector3d& r) {
        const double s = r.z() - 0.5;
        return std::make_pair(cd(1.0 / std::sqrt(std::abs(s) + 1e-300)), cd(0));
    };
    try {
        phase_integrals(seg, wild, 1.0, 1e-14, 3);
        FAIL() << "expected NumericError";
    } catch (const NumericError& e) {
        EXPECT_FALSE(e.diagnostics().empty());
    }
}

TEST(Profiles, ColumnsAgreeWithQuadratureAndAdvanceInverts) {
    std::mt19937_64 gen(7);
    GaussianProfile g(0.02, 15.0);
    UniformSphereProfile s(0.02, 15.0);
    SlabProfile sl(0.02, -5.0, 9.0);
    const DensityProfile* profs[] = {&g, &s, &sl};
    std::uniform_real_distribution<double> u(-20, 20);
    for (const DensityProfile* p : profs)
        for (int t = 0; t < 20; ++t) {
            const Vector3d o(u(gen), u(gen), u(gen));
            const Vector3d d = random_unit(gen);
            const double a = -10.0, b = 30.0;
            auto f = [&](double x) { return p->density(o + x * d); };
            double err;
            const double q = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, a, b, 30, 1e-13, &err);
            const double c = p->column(o, d, a, b);
            EXPECT_NEAR(c, q, 1e-6 * std::max(q, 1e-3)) << t;
            if (c > 1e-6) {
                const double tau = 0.37 * c;
                const double sx = p->advance(o, d, a, tau);
                EXPECT_NEAR(p->column(o, d, a, sx), tau, 1e-10 * c);
            }
            EXPECT_TRUE(std::isinf(p->advance(o, d, a, p->column_to_infinity(o, d, a) * 1.01 + 1e-9)));
        }
    EXPECT_NEAR(g.central_column(), g.column(Vector3d::Zero(), Vector3d::UnitX(), -1e3, 1e3), 1e-14);
    // deep tail: erfc route keeps relative accuracy
    const double tail = g.column(Vector3d(0, 0, 0), Vector3d::UnitZ(), 120.0, 200.0);
    const double expect = 0.02 * 15.0 * std::sqrt(kPi / 2.0) * (std::erfc(120.0 / (std::sqrt(2.0) * 15.0)) - std::erfc(200.0 / (std::sqrt(2.0) * 15.0)));
    EXPECT_NEAR(tail / expect, 1.0, 1e-12);
}

TEST(Amplitude, IsotropicBranchAndExpmConvention) {
    EXPECT_LT((amplitude_matrix(cd(0.3, 0.1), 0.0, Vector3cd::Zero()) - std::exp(I * cd(0.3, 0.1)) * Matrix2cd::Identity()).norm(), 1e-15);
    std::mt19937_64 gen(11);
    for (int t = 0; t < 50; ++t) {
        const Matrix3cd chi = random_symmetric(gen, t % 2 == 0);
        const Vector3d d = random_unit(gen);
        const double L = 3.7;
        const auto dec = medium::transverse_decompose(chi, d);
        const Matrix2cd ref = expm_reference(chi, d, L);
        const Matrix2cd a = amplitude_matrix(2 * kPi * dec.chi0 * L, 2 * kPi * dec.chi_len * L, dec.director);
        const Matrix2cd v = amplitude_matrix_from_vector(2 * kPi * dec.chi0 * L, 2 * kPi * L * dec.chivec);
        EXPECT_LT((a - ref).norm(), 1e-12);
        EXPECT_LT((v - ref).norm(), 1e-12);
    }
}

TEST(Amplitude, NilpotentLimitIsRegular) {
    // chivec = (1, i, 0) * eps: chivec . chivec = 0, director undefined
    const double eps = 0.02;
    const Vector3cd phiv(eps, I * eps, 0.0);
    const Matrix2cd X = amplitude_matrix_from_vector(0.0, phiv);
    Eigen::Matrix2cd sx, sy, sz, A;
    sx << 0, 1, 1, 0;
    sy << 0, -I, I, 0;
    sz << 1, 0, 0, -1;
    // X = exp(-i Phi . s') with s' the mapped Pauli set, here linear in Phi because (Phi . s')^2 = 0
    A = -I * (phiv(0) * sz - phiv(1) * sx + phiv(2) * sy);
    EXPECT_LT((X - (Eigen::Matrix2cd::Identity() + A)).norm(), 1e-15);
    EXPECT_LT((X - A.exp()).norm(), 1e-15);
}

TEST(Amplitude, UnitarityForRealSusceptibility) {
    std::mt19937_64 gen(3);
    double worst = 0.0;
    for (int t = 0; t < 1000; ++t) {
        const Matrix3cd chi = random_symmetric(gen, true);
        const Vector3d a = 10.0 * Vector3d::Random(), b = a + 50.0 * random_unit(gen);
        const auto seg = RaySegment::between(a, b);
        const Matrix2cd X = segment_amplitude(seg, constant_medium(chi));
        worst = std::max(worst, (X.adjoint() * X - Matrix2cd::Identity()).norm());
    }
    EXPECT_LT(worst, 1e-10);
}

TEST(Amplitude, CompositionAndPathSplitting) {
    std::mt19937_64 gen(5);
    for (int t = 0; t < 20; ++t) {
        const Matrix3cd chi = random_symmetric(gen, t % 2 == 1);
        const Medium m = constant_medium(chi);
        const Vector3d d = random_unit(gen);
        const auto whole = RaySegment::between(Vector3d::Zero(), 9.0 * d);
        const auto p1 = RaySegment::between(Vector3d::Zero(), 4.0 * d);
        const auto p2 = RaySegment::between(4.0 * d, 9.0 * d);
        EXPECT_LT((segment_amplitude(whole, m) - segment_amplitude(p2, m) * segment_amplitude(p1, m)).norm(), 1e-12);
        Matrix2cd acc = Matrix2cd::Identity();
        const int n = 37;
        for (int i = 0; i < n; ++i)
            acc = segment_amplitude(RaySegment::between(9.0 * i / n * d, 9.0 * (i + 1) / n * d), m) * acc;
        EXPECT_LT((acc - segment_amplitude(whole, m)).norm(), 1e-9);
    }
}

TEST(Amplitude, MixedComponentsAndPhaseBound) {
    std::mt19937_64 gen(9);
    const Matrix3cd c1 = random_symmetric(gen, false), c2 = random_symmetric(gen, false);
    Medium m({{std::make_shared<GaussianProfile>(1.0, 10.0), [c1](double) { return c1; }},
              {std::make_shared<SlabProfile>(1.0, -3.0, 4.0), [c2](double) { return c2; }}});
    const auto seg = RaySegment::between(Vector3d(1, -2, -15), Vector3d(-1, 3, 17));
    PropagationOptions fine;
    fine.segment_cap = 0.01;
    PropagationOptions coarse;
    coarse.segment_cap = 0.02;
    const Matrix2cd Xf = segment_amplitude(seg, m, fine), Xc = segment_amplitude(seg, m, coarse);
    EXPECT_LT((Xf - Xc).norm(), 1e-4 * Xf.norm());
    // norm bound from the phase integrals of the whole path
    const auto dec = medium::transverse_decompose(m.chi_integral(seg), seg.direction);
    const double bound = std::exp(std::abs((2 * kPi * dec.chi0).imag()) + std::abs((2 * kPi * dec.chi_len).imag()));
    EXPECT_LE(Xf.operatorNorm(), bound * (1 + 1e-12));
}

TEST(Green, VacuumAndBeerAttenuation) {
    const Medium vac;
    const Vector3d r1(3, 4, 12), r2(0, 0, 0);
    const Matrix3cd G = green_asymptote(r1, r2, 0.0, vac);
    const double R = 13.0;
    const Vector3d d = (r1 - r2) / R;
    const Matrix3cd P = (Eigen::Matrix3d::Identity() - d * d.transpose()).cast<cd>();
    EXPECT_LT((G + P * std::exp(I * R) / R).norm(), 1e-15);
    EXPECT_THROW(green_asymptote(Vector3d(1, 0, 0), Vector3d::Zero(), 0.0, vac), RangeError);

    // Two-level gas on resonance: |X| = exp(-R / (2 l_ex))
    medium::Atom atom{angular::two_level_scheme(), std::nullopt};
    const auto gs = medium::isotropic_ground(atom.scheme, 0, 1.0);
    const double n = 2e-3;
    const auto kl = medium::kinetic_lengths(atom, medium::isotropic_ground(atom.scheme, 0, n), 0.0, Vector3cd(1, 0, 0));
    Medium gas({{std::make_shared<UniformSphereProfile>(n, 1e5),
                 [atom, gs](double det) { return medium::susceptibility(atom, gs, det); }}});
    const double L = 5.0 * kl.l_ex;
    const Matrix3cd Gg = green_asymptote(Vector3d(0, 0, L), Vector3d::Zero(), 0.0, gas);
    const double amp = Gg.operatorNorm() * L;
    EXPECT_NEAR(amp / std::exp(-L / (2 * kl.l_ex)), 1.0, 0.01);
}

TEST(Green, ReciprocityForSymmetricMedium) {
    std::mt19937_64 gen(21);
    for (int t = 0; t < 10; ++t) {
        const Matrix3cd chi = random_symmetric(gen, false);
        const Medium m = constant_medium(chi, 0.5);
        const Vector3d a = 5.0 * random_unit(gen), b = 30.0 * random_unit(gen);
        const Matrix3cd g12 = green_asymptote(a, b, 0.0, m), g21 = green_asymptote(b, a, 0.0, m);
        EXPECT_LT((g12 - g21.transpose()).norm(), 1e-12 * g12.norm());
    }
}
