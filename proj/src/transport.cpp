#include "coldscatter/transport.hpp"

#include <cmath>
#include <sstream>

#include "coldscatter/errors.hpp"
#include "coldscatter/medium.hpp"

namespace coldscatter::transport {

namespace {
constexpr double kPi = 3.141592653589793238462643383279502884;
constexpr double kInf = std::numeric_limits<double>::infinity();

// d[0..2]: central differences at steps h, h/2, h/4 (or the grid analogue).
GroupVelocity finish(const double d[3], double omega_bar, double scale, double rel_tol) {
    const double r1 = (4.0 * d[1] - d[0]) / 3.0, r2 = (4.0 * d[2] - d[1]) / 3.0;
    const double R = (16.0 * r2 - r1) / 15.0;
    GroupVelocity g;
    g.dchi_domega = R;
    g.richardson_error = std::abs(r2 - r1) / 15.0;
    if (g.richardson_error > rel_tol * std::abs(R) + 1e-12 * scale) {
        std::ostringstream os;
        os << "differences " << d[0] << ", " << d[1] << ", " << d[2] << "; extrapolations " << r1 << ", " << r2;
        throw NumericError("group velocity: unstable numerical derivative", os.str());
    }
    g.ratio = 1.0 / (1.0 + 2.0 * kPi * omega_bar * R);
    return g;
}
}  // namespace

void DiffusionModel::validate() const {
    if (!(v_bar > 0.0)) throw DomainError("v_bar must be positive");
    if (!(l0_bar > 0.0)) throw DomainError("extinction length must be positive");
    if (!(albedo >= 0.0 && albedo <= 1.0)) throw DomainError("albedo must lie in [0, 1]");
    if (!(mean_cos < 1.0 && mean_cos >= -1.0)) throw DomainError("<cos theta> must lie in [-1, 1)");
    if (!(l_g > 0.0)) throw DomainError("gain length must be positive (+inf without gain)");
    if (!(r0 > 0.0)) throw DomainError("sphere radius must be positive");
}

GroupVelocity group_velocity(const std::function<double(double)>& chi_re, double detuning, double omega_bar, double h,
                             double rel_tol) {
    if (!(h > 0.0)) throw DomainError("derivative step must be positive");
    double d[3], scale = 0.0;
    for (int j = 0; j < 3; ++j) {
        const double hj = h / (1 << j);
        const double fp = chi_re(detuning + hj), fm = chi_re(detuning - hj);
        d[j] = (fp - fm) / (2.0 * hj);
        scale = std::max({scale, std::abs(fp) / hj, std::abs(fm) / hj});
    }
    return finish(d, omega_bar, scale, rel_tol);
}

GroupVelocity group_velocity(const std::vector<double>& grid, const std::vector<double>& chi_re, double detuning,
                             double omega_bar, double rel_tol) {
    if (grid.size() != chi_re.size()) throw DomainError("grid and samples differ in length");
    if (grid.size() < 9) throw DomainError("need at least nine samples");
    const double h = (grid.back() - grid.front()) / static_cast<double>(grid.size() - 1);
    if (!(h > 0.0)) throw DomainError("grid must be increasing");
    for (size_t i = 1; i < grid.size(); ++i)
        if (std::abs(grid[i] - grid[i - 1] - h) > 1e-9 * h) throw DomainError("grid must be uniform");
    const long i = std::lround((detuning - grid.front()) / h);
    if (i < 4 || i + 4 >= static_cast<long>(grid.size()) || std::abs(grid[i] - detuning) > 1e-9 * h)
        throw DomainError("detuning must be a grid point with four neighbours on each side");
    // steps 4h, 2h, h
    double d[3], scale = 0.0;
    for (int j = 0; j < 3; ++j) {
        const long s = 4 >> j;
        d[j] = (chi_re[i + s] - chi_re[i - s]) / (2.0 * s * h);
    }
    for (long j = i - 4; j <= i + 4; ++j) scale = std::max(scale, std::abs(chi_re[j]) / h);
    return finish(d, omega_bar, scale, rel_tol);
}

Diffusion diffusion_constant(const DiffusionModel& m) {
    if (!(m.mean_cos < 1.0)) throw DomainError("<cos theta> >= 1: no diffusion");
    m.validate();
    Diffusion d;
    d.l_tr = m.l0_bar / (1.0 - m.mean_cos);
    d.D = d.l_tr * m.v_bar / 3.0;
    return d;
}

double mean_cosine(const std::function<double(const Eigen::Vector3d&)>& pattern, const Eigen::Vector3d& n_in) {
    const Eigen::Vector3d u = n_in.normalized();
    // shifted integrand avoids a relative test on a vanishing integral
    const double norm = medium::sphere_integral(pattern, 1e-10);
    if (!(norm > 0.0)) throw DomainError("scattering pattern must have positive weight");
    const double shifted = medium::sphere_integral([&](const Eigen::Vector3d& n) { return pattern(n) * (1.0 + n.dot(u)); }, 1e-10);
    return shifted / norm - 1.0;
}

namespace {
struct Eig {
    double mu;                // Laplacian-part eigenvalue
    Eigen::VectorXd u;        // u = r W on nodes 1..m
};

// Dominant eigenpair of the symmetrized tridiagonal operator by inverse iteration.
Eig dominant_mode(double D, double r0, SphereBoundary b, double beta, int n) {
    const double h = r0 / n;
    const bool robin = b != SphereBoundary::Absorbing;
    const int m = robin ? n : n - 1;
    Eigen::VectorXd diag = Eigen::VectorXd::Constant(m, -2.0 * D / (h * h));
    Eigen::VectorXd off = Eigen::VectorXd::Constant(std::max(m - 1, 0), D / (h * h));
    if (robin) {
        diag(m - 1) = D * (-2.0 + 2.0 * h * beta) / (h * h);
        if (m >= 2) off(m - 2) = std::sqrt(2.0) * D / (h * h);
    }
    // the operator is non-positive for beta <= 1/r0, so this shift lies above the spectrum
    const double sigma = D / (r0 * r0);
    // Thomas solve of (A - sigma) x = y
    auto solve = [&](const Eigen::VectorXd& y) {
        Eigen::VectorXd c(m), d(m), x(m);
        double den = diag(0) - sigma;
        c(0) = m > 1 ? off(0) / den : 0.0;
        d(0) = y(0) / den;
        for (int i = 1; i < m; ++i) {
            den = diag(i) - sigma - off(i - 1) * c(i - 1);
            c(i) = i < m - 1 ? off(i) / den : 0.0;
            d(i) = (y(i) - off(i - 1) * d(i - 1)) / den;
        }
        x(m - 1) = d(m - 1);
        for (int i = m - 2; i >= 0; --i) x(i) = d(i) - c(i) * x(i + 1);
        return x;
    };
    Eigen::VectorXd v(m);
    for (int i = 0; i < m; ++i) v(i) = std::sin(kPi * (i + 1.0) / (m + 1.0)) + 0.1;  // positive start
    v.normalize();
    double lam = 0.0, prev = kInf;
    int it = 0;
    for (; it < 2000; ++it) {
        const Eigen::VectorXd x = solve(v);
        lam = sigma + 1.0 / v.dot(x);
        v = x.normalized();
        if (std::abs(lam - prev) <= 1e-14 * (D / (r0 * r0) + std::abs(lam))) break;
        prev = lam;
    }
    if (it == 2000) throw NumericError("inverse iteration did not converge", "last eigenvalue " + std::to_string(lam));
    if (robin) v(m - 1) *= std::sqrt(2.0);
    if (v.sum() < 0) v = -v;
    return {lam, v};
}
}  // namespace

SphereMode solve_gain_diffusion_sphere(const DiffusionModel& m, SphereBoundary boundary, int n, double refine_tol) {
    m.validate();
    if (n < 8) throw DomainError("need at least 8 radial intervals");
    const double D = diffusion_constant(m).D;
    double beta = 0.0;
    if (boundary == SphereBoundary::Mixed) beta = 1.0 / m.r0 - m.v_bar / (2.0 * D);
    if (boundary == SphereBoundary::Reflecting) beta = 1.0 / m.r0;
    const Eig coarse = dominant_mode(D, m.r0, boundary, beta, n);
    const Eig fine = dominant_mode(D, m.r0, boundary, beta, 2 * n);
    const double scale = std::max(std::abs(fine.mu), D / (m.r0 * m.r0));
    SphereMode out;
    out.refinement_change = std::abs(fine.mu - coarse.mu) / scale;
    if (out.refinement_change > refine_tol) {
        std::ostringstream os;
        os << "n=" << n << ": " << coarse.mu << ", n=" << 2 * n << ": " << fine.mu << ", relative change "
           << out.refinement_change;
        throw NumericError("sphere eigenvalue not converged under grid refinement", os.str());
    }
    const double gain = std::isfinite(m.l_g) ? m.v_bar / m.l_g : 0.0;
    out.growth_rate = fine.mu + gain - m.v_bar * (1.0 - m.albedo) / m.l0_bar;
    const int N = 2 * n;
    const double h = m.r0 / N;
    out.grid_points = N + 1;
    out.r.resize(N + 1);
    out.W.assign(N + 1, 0.0);
    for (int i = 0; i <= N; ++i) out.r[i] = i * h;
    for (int i = 1; i <= static_cast<int>(fine.u.size()); ++i) out.W[i] = fine.u(i - 1) / out.r[i];
    out.W[0] = (4.0 * out.W[1] - out.W[2]) / 3.0;
    const double w0 = out.W[0];
    for (double& w : out.W) w /= w0;
    return out;
}

double letokhov_threshold(double l_tr, double l_g) {
    if (!(l_tr > 0.0) || !(l_g > 0.0)) throw DomainError("l_tr and l_g must be positive");
    if (std::isinf(l_g)) return kInf;
    return kPi * std::sqrt(l_tr * l_g / 3.0);
}

Eigen::MatrixXd continuity_residual(const std::vector<double>& r, const std::vector<double>& t, const Eigen::MatrixXd& W,
                                    const Eigen::MatrixXd& J, const DiffusionModel& m) {
    m.validate();
    const int nr = static_cast<int>(r.size()), nt = static_cast<int>(t.size());
    if (nr < 3 || nt < 1) throw DomainError("need at least three radii and one time");
    if (W.rows() != nt || W.cols() != nr || J.rows() != nt || J.cols() != nr)
        throw DomainError("W and J must be [time][radius] on the given grids");
    for (int i = 1; i < nr; ++i)
        if (!(r[i] > r[i - 1])) throw DomainError("radial grid must be increasing");
    for (int i = 1; i < nt; ++i)
        if (!(t[i] > t[i - 1])) throw DomainError("time grid must be increasing");
    if (!(r[0] >= 0.0)) throw DomainError("radii must be non-negative");
    if (nt == 2) throw DomainError("need one (static) or at least three time samples");

    // second-order first derivative on a nonuniform grid
    auto deriv = [](const std::vector<double>& x, const auto& f, int i) {
        const int n = static_cast<int>(x.size());
        int a = i - 1, b = i, c = i + 1;
        if (i == 0) a = 0, b = 1, c = 2;
        if (i == n - 1) a = n - 3, b = n - 2, c = n - 1;
        const double xa = x[a], xb = x[b], xc = x[c], x0 = x[i];
        // Lagrange derivative weights at x0
        const double wa = ((x0 - xb) + (x0 - xc)) / ((xa - xb) * (xa - xc));
        const double wb = ((x0 - xa) + (x0 - xc)) / ((xb - xa) * (xb - xc));
        const double wc = ((x0 - xa) + (x0 - xb)) / ((xc - xa) * (xc - xb));
        return wa * f(a) + wb * f(b) + wc * f(c);
    };
    const double loss = m.v_bar * (1.0 - m.albedo) / m.l0_bar - (std::isfinite(m.l_g) ? m.v_bar / m.l_g : 0.0);
    Eigen::MatrixXd res(nt, nr);
    for (int k = 0; k < nt; ++k)
        for (int i = 0; i < nr; ++i) {
            const double dWdt = nt == 1 ? 0.0 : deriv(t, [&](int j) { return W(j, i); }, k);
            double divJ;
            if (r[i] == 0.0) {
                divJ = 3.0 * deriv(r, [&](int j) { return J(k, j); }, i);  // div of a radial field at the centre
            } else {
                divJ = deriv(r, [&](int j) { return r[j] * r[j] * J(k, j); }, i) / (r[i] * r[i]);
            }
            res(k, i) = dWdt + divJ + loss * W(k, i);
        }
    return res;
}

}  // namespace coldscatter::transport
