#include <gtest/gtest.h>

#include <boost/math/tools/roots.hpp>
#include <cmath>
#include <memory>

#include "coldscatter/angular.hpp"
#include "coldscatter/errors.hpp"
#include "coldscatter/mcscatter.hpp"
#include "coldscatter/medium.hpp"
#include "coldscatter/propagation.hpp"
#include "coldscatter/transport.hpp"

using namespace coldscatter;
using namespace coldscatter::transport;
using cd = std::complex<double>;
using Eigen::Vector3cd;
using Eigen::Vector3d;

namespace {
// Robin root k cot(k r0) = beta in (0, pi / r0).
double robin_k(double r0, double beta) {
    auto f = [&](double k) { return k * std::cos(k * r0) - beta * std::sin(k * r0); };
    boost::uintmax_t it = 200;
    auto tol = [](double a, double b) { return std::abs(a - b) < 1e-15 * std::abs(a); };
    const auto r = boost::math::tools::toms748_solve(f, 1e-12 / r0, M_PI / r0 * (1 - 1e-14), tol, it);
    return 0.5 * (r.first + r.second);
}
}  // namespace

// ---- group velocity --------------------------------------------------------------------

TEST(GroupVelocity, FlatSusceptibilityGivesVacuumSpeed) {
    const auto g = group_velocity([](double) { return 0.3; }, 0.0, 6e7);
    EXPECT_EQ(g.ratio, 1.0);
    EXPECT_EQ(g.dchi_domega, 0.0);
}

TEST(GroupVelocity, LorentzianDerivativeMatchesClosedForm) {
    const double A = 2e-3;
    auto chi = [&](double d) { return std::real(-A / (d + 0.5 * cd(0, 1))); };
    auto exact = [&](double d) { return -A * (0.25 - d * d) / std::pow(d * d + 0.25, 2); };
    for (double d : {-3.0, -0.9, -0.2, 0.0, 0.13, 0.7, 4.0}) {
        const auto g = group_velocity(chi, d, 6e7);
        EXPECT_NEAR(g.dchi_domega, exact(d), 1e-6 * std::abs(exact(d)));
        EXPECT_NEAR(g.ratio, 1.0 / (1.0 + 2 * M_PI * 6e7 * exact(d)), 1e-6 * std::abs(g.ratio));
    }
    // sampled grid route
    std::vector<double> grid, vals;
    for (int i = -2000; i <= 2000; ++i) {
        grid.push_back(i * 1e-3);
        vals.push_back(chi(i * 1e-3));
    }
    for (double d : {-1.5, 0.0, 0.25 + 0.001, 1.2}) {
        const auto g = group_velocity(grid, vals, d, 6e7);
        EXPECT_NEAR(g.dchi_domega, exact(d), 1e-6 * std::abs(exact(d)));
    }
    EXPECT_THROW(group_velocity(grid, vals, 1.9995, 6e7), DomainError);
    EXPECT_THROW(group_velocity(grid, vals, -1.997, 6e7), DomainError);
}

TEST(GroupVelocity, UnstableDerivativeIsReported) {
    auto wiggle = [](double d) { return std::sin(3e3 * d); };
    EXPECT_THROW(group_velocity(wiggle, 0.1, 6e7), NumericError);
    try {
        group_velocity(wiggle, 0.1, 6e7);
    } catch (const NumericError& e) {
        EXPECT_FALSE(e.diagnostics().empty());
    }
}

TEST(GroupVelocity, EitWindowGivesSlowLight) {
    medium::Atom bare{angular::rb87_d1_like_f1(), std::nullopt};
    const auto& s = bare.scheme;
    const auto gs = medium::isotropic_ground(s, 0, 1e-3);
    const Vector3cd e = angular::spherical_unit(1).conjugate();
    const double dc = s.excited[0].energy - s.ground[1].energy;
    auto slope = [&](double rabi) {
        medium::Atom a = bare;
        a.control = medium::make_control_on_transition(s, 1, Vector3cd(0, 0, 1), rabi, dc, angular::HalfInt::whole(2),
                                                       angular::HalfInt::whole(0), angular::HalfInt::whole(1),
                                                       angular::HalfInt::whole(0));
        return group_velocity([&](double d) { return std::real(e.dot(medium::susceptibility(a, gs, d) * e)); }, 0.0,
                              s.omega0, 1e-4);
    };
    const auto g = slope(0.3);
    EXPECT_GT(g.dchi_domega, 0.0);  // normal dispersion inside the window
    EXPECT_GT(g.ratio, 0.0);
    EXPECT_LT(g.ratio, 1e-2);
    // ideal lambda scheme: slope at two-photon resonance scales as 1 / rabi^2
    const auto g2 = slope(0.6);
    EXPECT_NEAR(g.dchi_domega / g2.dchi_domega, 4.0, 0.04);
}

// ---- diffusion constant --------------------------------------------------------------

TEST(Diffusion, ConstantAndTransportLength) {
    DiffusionModel m;
    m.l0_bar = 3.0;
    m.v_bar = 0.2;
    auto d = diffusion_constant(m);
    EXPECT_DOUBLE_EQ(d.D, 3.0 * 0.2 / 3.0);
    EXPECT_DOUBLE_EQ(d.l_tr, 3.0);
    m.mean_cos = 0.5;
    d = diffusion_constant(m);
    EXPECT_DOUBLE_EQ(d.D, 2.0 * 3.0 * 0.2 / 3.0);
    EXPECT_DOUBLE_EQ(d.l_tr, 6.0);
    m.mean_cos = 1.0;
    EXPECT_THROW(diffusion_constant(m), DomainError);
    m.mean_cos = 0.0;
    m.albedo = 1.5;
    EXPECT_THROW(diffusion_constant(m), DomainError);
}

TEST(Diffusion, DipolePhaseFunctionHasZeroMeanCosine) {
    const Vector3d z = Vector3d::UnitZ();
    for (const Vector3cd& p : {Vector3cd(1, 0, 0), Vector3cd(Vector3cd(cd(1, 0), cd(0, 1), 0) / std::sqrt(2.0))}) {
        const double mc = mean_cosine([&](const Vector3d& n) { return p.squaredNorm() - std::norm(n.cast<cd>().dot(p)); }, z);
        EXPECT_NEAR(mc, 0.0, 1e-12);
    }
    // forward-peaked oracle: (1 + cos)^2 has <cos> = 1/2
    EXPECT_NEAR(mean_cosine([&](const Vector3d& n) { return std::pow(1.0 + n.dot(z), 2); }, z), 0.5, 1e-12);
}

// ---- sphere eigenmodes ---------------------------------------------------------------

TEST(Sphere, AbsorbingFundamentalMode) {
    DiffusionModel m;
    m.l0_bar = 2.0;
    m.v_bar = 0.5;
    m.r0 = 40.0;
    const double D = diffusion_constant(m).D;
    const auto s = solve_gain_diffusion_sphere(m);
    EXPECT_NEAR(s.growth_rate, -D * M_PI * M_PI / (m.r0 * m.r0), 5e-3 * D * M_PI * M_PI / (m.r0 * m.r0));
    EXPECT_LT(s.refinement_change, 5e-3);
    double worst = 0.0;
    for (size_t i = 1; i < s.r.size(); ++i) {
        const double x = M_PI * s.r[i] / m.r0;
        worst = std::max(worst, std::abs(s.W[i] - std::sin(x) / x));
    }
    EXPECT_LT(worst, 1e-4);
    EXPECT_NEAR(s.W[0], 1.0, 1e-15);
}

TEST(Sphere, ReflectingConservesEnergy) {
    DiffusionModel m;
    m.r0 = 15.0;
    const auto s = solve_gain_diffusion_sphere(m, SphereBoundary::Reflecting);
    EXPECT_NEAR(s.growth_rate, 0.0, 1e-10 * diffusion_constant(m).D / (m.r0 * m.r0));
    for (double w : s.W) EXPECT_NEAR(w, 1.0, 1e-6);
    // loss enters as a uniform shift
    m.albedo = 0.8;
    EXPECT_NEAR(solve_gain_diffusion_sphere(m, SphereBoundary::Reflecting).growth_rate, -m.v_bar * 0.2 / m.l0_bar, 1e-10);
}

TEST(Sphere, MixedBoundaryMatchesRobinRoot) {
    DiffusionModel m;
    m.l0_bar = 1.5;
    m.r0 = 12.0;
    const double D = diffusion_constant(m).D;
    const double k = robin_k(m.r0, 1.0 / m.r0 - m.v_bar / (2.0 * D));
    const auto s = solve_gain_diffusion_sphere(m, SphereBoundary::Mixed);
    EXPECT_NEAR(s.growth_rate, -D * k * k, 1e-4 * D * k * k);
    // the mixed boundary leaks more slowly than the absorbing one
    EXPECT_GT(s.growth_rate, solve_gain_diffusion_sphere(m).growth_rate);
}

TEST(Sphere, GrowthRateCrossesZeroAtThreshold) {
    for (double ratio : {1.0, 3.0, 10.0}) {
        DiffusionModel m;
        m.l0_bar = 2.0;
        m.l_g = ratio * m.l0_bar;
        auto rate = [&](double r0) {
            DiffusionModel q = m;
            q.r0 = r0;
            return solve_gain_diffusion_sphere(q).growth_rate;
        };
        const double rstar = letokhov_threshold(m.l0_bar, m.l_g);
        EXPECT_LT(rate(0.9 * rstar), 0.0);
        EXPECT_GT(rate(1.1 * rstar), 0.0);
        boost::uintmax_t it = 100;
        auto tol = [](double a, double b) { return std::abs(a - b) < 1e-10 * a; };
        const auto root = boost::math::tools::toms748_solve(rate, 0.5 * rstar, 2.0 * rstar, tol, it);
        EXPECT_NEAR(0.5 * (root.first + root.second), rstar, 0.02 * rstar) << ratio;
    }
}

TEST(Sphere, GridNonConvergenceIsReported) {
    DiffusionModel m;
    m.r0 = 10.0;
    try {
        solve_gain_diffusion_sphere(m, SphereBoundary::Absorbing, 8, 1e-9);
        FAIL() << "expected NumericError";
    } catch (const NumericError& e) {
        EXPECT_NE(e.diagnostics().find("n=16"), std::string::npos);
    }
    EXPECT_THROW(solve_gain_diffusion_sphere(m, SphereBoundary::Absorbing, 4), DomainError);
}

TEST(Threshold, ClosedFormAndMonotone) {
    EXPECT_DOUBLE_EQ(letokhov_threshold(2.0, 2.0), M_PI * 2.0 / std::sqrt(3.0));
    EXPECT_TRUE(std::isinf(letokhov_threshold(1.0, std::numeric_limits<double>::infinity())));
    double prev = 0.0;
    for (double lg = 0.5; lg < 100; lg *= 1.7) {
        const double r = letokhov_threshold(1.3, lg);
        EXPECT_GT(r, prev);
        prev = r;
    }
    prev = 0.0;
    for (double lt = 0.5; lt < 100; lt *= 1.7) {
        const double r = letokhov_threshold(lt, 4.0);
        EXPECT_GT(r, prev);
        prev = r;
    }
    EXPECT_THROW(letokhov_threshold(0.0, 1.0), DomainError);
}

// ---- continuity ----------------------------------------------------------------------

TEST(Continuity, StaticUniformFieldHasNoResidual) {
    DiffusionModel m;
    std::vector<double> r{0.0, 1.0, 2.0, 3.5, 5.0};
    Eigen::MatrixXd W = Eigen::MatrixXd::Constant(1, 5, 2.5), J = Eigen::MatrixXd::Zero(1, 5);
    EXPECT_LT(continuity_residual(r, {0.0}, W, J, m).cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_THROW(continuity_residual(r, {0.0, 1.0}, W, J, m), DomainError);
    EXPECT_THROW(continuity_residual({0.0, 1.0, 1.0, 2.0, 3.0}, {0.0}, W, J, m), DomainError);
    EXPECT_THROW(continuity_residual(r, {0.0}, Eigen::MatrixXd::Zero(1, 4), J, m), DomainError);
}

TEST(Continuity, ManufacturedSolutionConvergesAtSecondOrder) {
    DiffusionModel m;
    m.r0 = 10.0;
    const double D = 100.0 / (M_PI * M_PI);  // decay rate D pi^2 / r0^2 = 1
    auto field = [&](int nr, int nt, double& err) {
        std::vector<double> r(nr), t(nt);
        Eigen::MatrixXd W(nt, nr), J(nt, nr);
        for (int i = 0; i < nr; ++i) r[i] = 0.5 + 9.0 * i / (nr - 1);
        for (int k = 0; k < nt; ++k) t[k] = 1.0 * k / (nt - 1);
        for (int k = 0; k < nt; ++k)
            for (int i = 0; i < nr; ++i) {
                const double x = M_PI * r[i] / m.r0, e = std::exp(-t[k]);
                W(k, i) = e * std::sin(x) / r[i];
                const double dW = e * (std::cos(x) * M_PI / m.r0 * r[i] - std::sin(x)) / (r[i] * r[i]);
                J(k, i) = -D * dW;
            }
        err = continuity_residual(r, t, W, J, m).cwiseAbs().maxCoeff();
    };
    double e1, e2;
    field(41, 21, e1);
    field(81, 41, e2);
    EXPECT_GT(e1 / e2, 3.5);  // second order: ratio near 4
    EXPECT_LT(e2, 0.02);
}

// ---- Monte-Carlo moments -------------------------------------------------------------

namespace {
mcscatter::McConfig sphere_cloud(double b, mcscatter::SourceMode src) {
    // two-level scatterers, unit mean free path, optical radius b
    const auto s = angular::two_level_scheme();
    mcscatter::McConfig c;
    c.cloud.atom = medium::Atom{s, std::nullopt};
    c.cloud.ground = medium::isotropic_ground(s, 0);
    c.cloud.profile = std::make_shared<propagation::UniformSphereProfile>(1.0 / (6.0 * M_PI), b);
    c.source = src;
    c.max_order = 20000;
    return c;
}
}  // namespace

TEST(MonteCarloMoments, PointSourceFluxIsDivergenceFree) {
    auto cfg = sphere_cloud(10.0, mcscatter::SourceMode::Point);
    for (double r = 1.0; r <= 9.0; r += 1.0) cfg.tally_radii.push_back(r);
    mcscatter::RunOptions opt;
    opt.trajectories = 4000;
    const auto res = mcscatter::simulate_ladder(cfg, opt);
    const int n = static_cast<int>(cfg.tally_radii.size());
    Eigen::MatrixXd J(1, n), W = Eigen::MatrixXd::Zero(1, n);
    for (int j = 0; j < n; ++j) {
        const double R = cfg.tally_radii[j];
        J(0, j) = res.radial_flux[j] / (4 * M_PI * R * R);
        EXPECT_NEAR(res.radial_flux[j], 1.0, 3.0 * res.radial_flux_err[j] + 1e-12);
    }
    DiffusionModel m;
    const auto resid = continuity_residual(cfg.tally_radii, {0.0}, W, J, m);
    for (int j = 0; j < n; ++j) {
        const double R = cfg.tally_radii[j];
        const double scale = 3.0 * res.radial_flux_err[j] / (4 * M_PI * R * R) + 1e-12;
        EXPECT_LT(std::abs(resid(0, j)), scale);
    }
}

TEST(MonteCarloMoments, EnergyDensityFollowsFicksLaw) {
    const double b = 20.0;
    auto cfg = sphere_cloud(b, mcscatter::SourceMode::Point);
    for (double r = 2.0; r <= b; r += 2.0) cfg.tally_radii.push_back(r);
    mcscatter::RunOptions opt;
    opt.trajectories = 4000;
    const auto res = mcscatter::simulate_ladder(cfg, opt);
    const double D = 1.0 / 3.0, Re = b + 2.0 / 3.0;  // unit mean free path and speed
    for (size_t j = 1; j + 2 < cfg.tally_radii.size(); ++j) {
        const double r0 = cfg.tally_radii[j - 1], r1 = cfg.tally_radii[j];
        const double vol = 4.0 / 3.0 * M_PI * (r1 * r1 * r1 - r0 * r0 * r0);
        const double W = res.shell_path[j] / vol;
        // shell average of (1/r - 1/Re) / (4 pi D)
        const double avg = (2 * M_PI * (r1 * r1 - r0 * r0) - 4.0 / 3.0 * M_PI * (r1 * r1 * r1 - r0 * r0 * r0) / Re) /
                           (4 * M_PI * D) / vol;
        EXPECT_NEAR(W, avg, 0.1 * avg + 3.0 * res.shell_path_err[j] / vol) << r1;
    }
}

TEST(MonteCarloMoments, EscapeTimesMatchDiffusionForThickSphere) {
    const double b = 20.0;
    auto cfg = sphere_cloud(b, mcscatter::SourceMode::Volume);
    cfg.tally_radii = {b};
    mcscatter::RunOptions opt;
    opt.trajectories = 40000;
    const auto res = mcscatter::simulate_ladder(cfg, opt);
    EXPECT_EQ(res.truncated_trajectories, 0u);

    DiffusionModel m;  // unit mean free path, unit speed
    m.r0 = b;
    const double D = diffusion_constant(m).D;
    const double Re = b + 2.0 * D / m.v_bar;
    // mean exit time from a uniform start (Laplace equation with W(Re) = 0)
    const double t_mean = (Re * Re - 0.6 * b * b) / (6.0 * D);
    EXPECT_NEAR(res.shell_path[0], t_mean, 0.15 * t_mean);

    // late-time decay per scattering order vs the fundamental mode (one order = one mean free time)
    const auto mode = solve_gain_diffusion_sphere(m, SphereBoundary::Mixed);
    double sx = 0, sy = 0, sxx = 0, sxy = 0, sw = 0;
    for (int k = 100; k <= 350; ++k) {
        const double y = res.escaped_by_order[k];
        if (!(y > 0)) continue;
        const double w = std::pow(y / res.escaped_by_order_err[k], 2);
        sx += w * k;
        sy += w * std::log(y);
        sxx += w * k * k;
        sxy += w * k * std::log(y);
        sw += w;
    }
    const double slope = (sw * sxy - sx * sy) / (sw * sxx - sx * sx);
    EXPECT_NEAR(-slope, -mode.growth_rate, 0.15 * -mode.growth_rate);
}
