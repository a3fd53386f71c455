#include "coldscatter/microdipole.hpp"

#include "coldscatter/errors.hpp"
#include "coldscatter/rng.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <sstream>
#include <thread>

namespace coldscatter::microdipole {

namespace {

constexpr double kPi = 3.14159265358979323846;
const cd I(0.0, 1.0);

std::string vec_str(const Vector3d& v) {
    std::ostringstream os;
    os.precision(6);
    os << "(" << v.x() << ", " << v.y() << ", " << v.z() << ")";
    return os.str();
}

// j2 by its power series; accurate where the closed form cancels.
double j2_series(double x) {
    const double x2 = x * x;
    double term = x2 / 15.0, sum = term;
    for (int k = 1; k < 40; ++k) {
        term *= -0.5 * x2 / (k * (2.0 * k + 5.0));
        sum += term;
        if (std::abs(term) < 1e-18 * std::abs(sum)) break;
    }
    return sum;
}

}  // namespace

void Configuration::validate() const {
    if (!(contact_floor > 0.0) || !std::isfinite(contact_floor))
        throw DomainError("contact floor must be positive");
    if (!(k > 0.0) || !std::isfinite(k)) throw DomainError("wavenumber must be positive");
    if (!std::isfinite(detuning)) throw DomainError("detuning must be finite");
    const std::size_t n = positions.size();
    for (std::size_t a = 0; a < n; ++a) {
        if (!positions[a].allFinite()) throw DomainError("atom " + std::to_string(a) + " has a non-finite position");
        for (std::size_t b = a + 1; b < n; ++b) {
            const double r = (positions[a] - positions[b]).norm();
            if (r < contact_floor) {
                std::ostringstream os;
                os << "atoms " << a << " " << vec_str(positions[a]) << " and " << b << " " << vec_str(positions[b])
                   << " are " << r << " apart, below the contact floor " << contact_floor;
                throw DomainError(os.str());
            }
        }
    }
}

cd hankel0(double x) {
    if (!(x > 0.0)) throw DomainError("hankel0 needs x > 0");
    return -I * std::exp(I * x) / x;
}

cd hankel2(double x) {
    if (!(x > 0.0)) throw DomainError("hankel2 needs x > 0");
    const double s = std::sin(x), c = std::cos(x);
    const double y2 = -(3.0 / (x * x * x) - 1.0 / x) * c - 3.0 * s / (x * x);
    const double j2 = x < 0.5 ? j2_series(x) : (3.0 / (x * x * x) - 1.0 / x) * s - 3.0 * c / (x * x);
    return {j2, y2};
}

Matrix3cd field_green_tensor(const Vector3d& R, double k) {
    const double r = R.norm();
    if (!(r > 0.0)) throw DomainError("field Green tensor at zero separation");
    if (!(k > 0.0)) throw DomainError("wavenumber must be positive");
    const double x = k * r;
    const cd a = I * (2.0 / 3.0) * hankel0(x);
    const cd b = I * hankel2(x);
    const Vector3d u = R / r;
    Matrix3cd D = (a - b / 3.0) * Matrix3cd::Identity();
    D += b * (u * u.transpose()).cast<cd>();
    return -(k * k * k) * D;
}

EffectiveHamiltonian build_effective_hamiltonian(const Configuration& c) {
    c.validate();
    const int n = static_cast<int>(c.positions.size());
    const int dim = c.model == Model::Vector ? 3 : 1;
    EffectiveHamiltonian h;
    h.model = c.model;
    h.H = MatrixXcd::Zero(n * dim, n * dim);
    h.basis.reserve(n * dim);
    for (int a = 0; a < n; ++a)
        for (int m = 0; m < dim; ++m) h.basis.push_back({a, m});
    h.H.diagonal().setConstant(cd(-c.detuning, -0.5));
    // Pair kernels at the resonant wavenumber (pole approximation).
    for (int a = 0; a < n; ++a)
        for (int b = a + 1; b < n; ++b) {
            const Vector3d R = c.positions[a] - c.positions[b];
            if (dim == 3) {
                const Matrix3cd blk = kDipoleSquared * field_green_tensor(R, 1.0);
                h.H.block<3, 3>(3 * a, 3 * b) = blk;
                h.H.block<3, 3>(3 * b, 3 * a) = blk;  // D is symmetric and even in R
            } else {
                const double x = R.norm();
                const cd v = -kScalarCouplingSquared * std::exp(I * x) / x;
                h.H(a, b) = v;
                h.H(b, a) = v;
            }
        }
    return h;
}

namespace {

VectorXcd make_source(const Configuration& c, const Vector3d& k, const Vector3cd& e, bool conj_out) {
    const int n = static_cast<int>(c.positions.size());
    const bool vec = c.model == Model::Vector;
    VectorXcd s(vec ? 3 * n : n);
    const double g = std::sqrt(vec ? kDipoleSquared : kScalarCouplingSquared);
    for (int a = 0; a < n; ++a) {
        const double ph = c.k * k.dot(c.positions[a]);
        const cd f = g * std::exp(conj_out ? -I * ph : I * ph);
        if (vec)
            for (int m = 0; m < 3; ++m) s(3 * a + m) = f * (conj_out ? std::conj(e(m)) : e(m));
        else
            s(a) = f;
    }
    return s;
}

void check_channel(const Vector3d& k, const Vector3cd& e, Model model) {
    if (std::abs(k.norm() - 1.0) > 1e-9) throw DomainError("photon direction must be a unit vector");
    if (model == Model::Vector) {
        if (std::abs(e.norm() - 1.0) > 1e-9) throw DomainError("polarization must be normalized");
        if (std::abs(k.cast<cd>().dot(e)) > 1e-9) throw DomainError("polarization must be transverse to k");
    }
}

}  // namespace

cd t_matrix_element(const Configuration& c, const EffectiveHamiltonian& h, const Vector3d& k_in, const Vector3cd& e_in,
                    const Vector3d& k_out, const Vector3cd& e_out, double energy_shift) {
    check_channel(k_in, e_in, c.model);
    check_channel(k_out, e_out, c.model);
    const VectorXcd s = make_source(c, k_in, e_in, false);
    const VectorXcd t = make_source(c, k_out, e_out, true);
    if (s.size() != h.H.rows()) throw DomainError("configuration and Hamiltonian dimensions differ");
    MatrixXcd M = -h.H;
    M.diagonal().array() += energy_shift;
    Eigen::PartialPivLU<MatrixXcd> lu(M);
    const VectorXcd x = lu.solve(s);
    if (!x.allFinite()) throw NumericError("resolvent solve failed");
    return t.transpose() * x;
}

double total_cross_section(const Configuration& c, const Vector3d& k_in, const Vector3cd& e_in) {
    const auto h = build_effective_hamiltonian(c);
    return -4.0 * kPi * c.k * std::imag(t_matrix_element(c, h, k_in, e_in, k_in, e_in));
}

double differential_cross_section(const Configuration& c, const Vector3d& k_in, const Vector3cd& e_in,
                                  const Vector3d& k_out, const Vector3cd& e_out) {
    const auto h = build_effective_hamiltonian(c);
    const double k2 = c.k * c.k;
    return k2 * k2 * std::norm(t_matrix_element(c, h, k_in, e_in, k_out, e_out));
}

// ---- spectral solver -------------------------------------------------------------------

SpectralSolver::SpectralSolver(const Configuration& c) : c_(c) {
    c_.detuning = 0.0;
    const auto h = build_effective_hamiltonian(c_);
    Eigen::HessenbergDecomposition<MatrixXcd> hd(h.H);
    T_ = hd.matrixH();
    Q_ = hd.matrixQ();
    recon_err_ = (Q_ * T_ * Q_.adjoint() - h.H).norm() / h.H.norm();
    if (!std::isfinite(recon_err_) || recon_err_ > 1e-10) {
        std::ostringstream os;
        os << "relative reconstruction error " << recon_err_;
        throw NumericError("Hessenberg reduction of the effective Hamiltonian failed", os.str());
    }
}

VectorXcd SpectralSolver::eigenvalues() const {
    Eigen::ComplexSchur<MatrixXcd> schur;
    schur.computeFromHessenberg(T_, MatrixXcd::Identity(T_.rows(), T_.cols()), false);
    if (schur.info() != Eigen::Success) throw NumericError("Schur iteration did not converge");
    return schur.matrixT().diagonal();
}

// q^T (detuning - T)^{-1} p by Hessenberg elimination with adjacent-row pivoting.
cd SpectralSolver::contract(double detuning, const VectorXcd& p, const VectorXcd& q) const {
    const Eigen::Index n = T_.rows();
    MatrixXcd M = -T_;
    M.diagonal().array() += detuning;
    VectorXcd y = p;
    for (Eigen::Index j = 0; j + 1 < n; ++j) {
        if (std::abs(M(j + 1, j)) > std::abs(M(j, j))) {
            M.row(j).segment(j, n - j).swap(M.row(j + 1).segment(j, n - j));
            std::swap(y(j), y(j + 1));
        }
        if (M(j + 1, j) == cd(0.0)) continue;
        const cd l = M(j + 1, j) / M(j, j);
        M.row(j + 1).segment(j + 1, n - j - 1) -= l * M.row(j).segment(j + 1, n - j - 1);
        y(j + 1) -= l * y(j);
    }
    for (Eigen::Index j = n - 1; j >= 0; --j) {
        cd s = y(j);
        for (Eigen::Index m = j + 1; m < n; ++m) s -= M(j, m) * y(m);
        if (M(j, j) == cd(0.0)) throw NumericError("singular resolvent");
        y(j) = s / M(j, j);
    }
    return q.dot(y);  // q already conjugated by the caller
}

cd SpectralSolver::amplitude(double detuning, const Vector3d& k_in, const Vector3cd& e_in, const Vector3d& k_out,
                             const Vector3cd& e_out) const {
    check_channel(k_in, e_in, c_.model);
    check_channel(k_out, e_out, c_.model);
    const VectorXcd p = Q_.adjoint() * make_source(c_, k_in, e_in, false);
    const VectorXcd q = (Q_.transpose() * make_source(c_, k_out, e_out, true)).conjugate();
    return contract(detuning, p, q);
}

double SpectralSolver::total_cross_section(double detuning, const Vector3d& k_in, const Vector3cd& e_in) const {
    return total_cross_section(std::vector<double>{detuning}, k_in, e_in)[0];
}

std::vector<double> SpectralSolver::total_cross_section(const std::vector<double>& detunings, const Vector3d& k_in,
                                                        const Vector3cd& e_in) const {
    check_channel(k_in, e_in, c_.model);
    const VectorXcd p = Q_.adjoint() * make_source(c_, k_in, e_in, false);
    const VectorXcd q = (Q_.transpose() * make_source(c_, k_in, e_in, true)).conjugate();
    std::vector<double> out;
    out.reserve(detunings.size());
    for (double d : detunings) out.push_back(-4.0 * kPi * c_.k * contract(d, p, q).imag());
    return out;
}

// ---- random configurations -------------------------------------------------------------

double configuration_size(const ConfigurationSpec& s) {
    if (s.atoms < 1) throw DomainError("need at least one atom");
    if (!(s.density > 0.0) || !std::isfinite(s.density)) throw DomainError("density must be positive");
    if (s.shape == CloudShape::UniformBall) return std::cbrt(3.0 * s.atoms / (4.0 * kPi * s.density));
    return std::cbrt(s.atoms / (s.density * std::pow(2.0 * kPi, 1.5)));
}

Configuration random_configuration(const ConfigurationSpec& s, std::uint64_t seed, std::uint64_t index) {
    const double size = configuration_size(s);
    if (!(s.contact_floor > 0.0)) throw DomainError("contact floor must be positive");
    rng::Philox g(seed, index);
    Configuration c;
    c.model = s.model;
    c.contact_floor = s.contact_floor;
    c.positions.reserve(s.atoms);
    const int max_tries = 10000;
    while (static_cast<int>(c.positions.size()) < s.atoms) {
        int tries = 0;
        for (;; ++tries) {
            if (tries > max_tries)
                throw DomainError("cannot place " + std::to_string(s.atoms) + " atoms above the contact floor");
            Vector3d p;
            if (s.shape == CloudShape::UniformBall) {
                do {
                    p = Vector3d(2 * g.uniform() - 1, 2 * g.uniform() - 1, 2 * g.uniform() - 1);
                } while (p.squaredNorm() > 1.0);
                p *= size;
            } else {
                p = size * Vector3d(g.normal(), g.normal(), g.normal());
            }
            bool ok = true;
            for (const auto& q : c.positions)
                if ((p - q).norm() < s.contact_floor) {
                    ok = false;
                    break;
                }
            if (ok) {
                c.positions.push_back(p);
                break;
            }
        }
    }
    return c;
}

void RunningStats::add(double x) {
    ++n_;
    const double d = x - mean_;
    mean_ += d / static_cast<double>(n_);
    m2_ += d * (x - mean_);
}

double RunningStats::variance() const { return n_ > 1 ? m2_ / static_cast<double>(n_ - 1) : 0.0; }

double RunningStats::standard_error() const {
    return n_ > 1 ? std::sqrt(variance() / static_cast<double>(n_)) : 0.0;
}

void RunningStats::merge(const RunningStats& o) {
    if (o.n_ == 0) return;
    if (n_ == 0) {
        *this = o;
        return;
    }
    const double na = static_cast<double>(n_), nb = static_cast<double>(o.n_);
    const double d = o.mean_ - mean_;
    const double n = na + nb;
    mean_ += d * nb / n;
    m2_ += o.m2_ + d * d * na * nb / n;
    n_ += o.n_;
}

AveragedSpectrum averaged_cross_section(const ConfigurationSpec& s, const std::vector<double>& detunings,
                                        int configurations, std::uint64_t seed, int workers) {
    if (configurations < 1) throw DomainError("need at least one configuration");
    if (workers < 1) workers = 1;
    const Vector3d kin(0, 0, 1);
    const Vector3cd ein(1, 0, 0);
    std::vector<std::vector<double>> per(configurations);
    // Hessenberg reduction costs roughly a dozen LU factorizations.
    const bool reduce = detunings.size() > 12;
    auto job = [&](int w) {
        for (int i = w; i < configurations; i += workers) {
            auto c = random_configuration(s, seed, static_cast<std::uint64_t>(i));
            if (reduce) {
                per[i] = SpectralSolver(c).total_cross_section(detunings, kin, ein);
                continue;
            }
            c.detuning = 0.0;
            const auto h = build_effective_hamiltonian(c);
            for (double d : detunings)
                per[i].push_back(-4.0 * kPi * c.k * std::imag(t_matrix_element(c, h, kin, ein, kin, ein, d)));
        }
    };
    if (workers == 1) {
        job(0);
    } else {
        std::vector<std::thread> th;
        for (int w = 0; w < workers; ++w) th.emplace_back(job, w);
        for (auto& t : th) t.join();
    }
    AveragedSpectrum out;
    out.detuning = detunings;
    out.configurations = configurations;
    for (std::size_t j = 0; j < detunings.size(); ++j) {
        RunningStats st;
        for (int i = 0; i < configurations; ++i) st.add(per[i][j]);
        out.mean.push_back(st.mean());
        out.stderr_.push_back(st.standard_error());
    }
    return out;
}

// ---- self-consistent medium ------------------------------------------------------------

cd self_consistent_residual(cd s, double n, double detuning) {
    return (s * s - 1.0) * (detuning + kPi * n + 0.5 * I * s) + 3.0 * kPi * n;
}

namespace {

// Remaining roots of the cubic after deflating s0.
std::pair<cd, cd> other_roots(cd s0, double n, double detuning) {
    const cd a3 = 0.5 * I, a2 = detuning + kPi * n, a1 = -0.5 * I;
    // Synthetic division: a3 s^2 + b1 s + b0.
    const cd b1 = a2 + a3 * s0;
    const cd b0 = a1 + b1 * s0;
    const cd disc = std::sqrt(b1 * b1 - 4.0 * a3 * b0);
    return {(-b1 + disc) / (2.0 * a3), (-b1 - disc) / (2.0 * a3)};
}

bool newton(cd& s, double n, double detuning) {
    for (int it = 0; it < 50; ++it) {
        const cd f = self_consistent_residual(s, n, detuning);
        const cd df = 2.0 * s * (detuning + kPi * n + 0.5 * I * s) + 0.5 * I * (s * s - 1.0);
        if (std::abs(df) == 0.0) return false;
        const cd step = f / df;
        s -= step;
        if (!std::isfinite(s.real()) || !std::isfinite(s.imag())) return false;
        if (std::abs(step) < 1e-15 * (1.0 + std::abs(s))) return true;
    }
    return std::abs(self_consistent_residual(s, n, detuning)) < 1e-12;
}

}  // namespace

Epsilon self_consistent_epsilon(double n, double detuning) {
    if (!(n >= 0.0) || !std::isfinite(n)) throw DomainError("scaled density must be non-negative");
    if (!std::isfinite(detuning)) throw DomainError("detuning must be finite");
    cd s = 1.0;
    double cur = 0.0;
    double step = n / 32.0;
    const double collide = 1e-6;
    while (cur < n) {
        const double next = std::min(n, cur + step);
        cd trial = s;
        const bool ok = newton(trial, next, detuning);
        if (!ok || std::abs(trial - s) > 0.05 * (1.0 + std::abs(s))) {
            step *= 0.5;
            if (step < 1e-14 * std::max(1.0, n)) {
                std::ostringstream os;
                os.precision(12);
                os << "n=" << next << " tracked root " << s << " Newton candidate " << trial;
                throw NumericError("self-consistent root tracking failed", os.str());
            }
            continue;
        }
        // Roots come in mirror pairs s, -conj(s): the tracked root reaches the imaginary axis
        // only by colliding with its mirror.
        if (trial.real() <= 1e-9 * std::abs(trial)) {
            std::ostringstream os;
            os.precision(12);
            os << "n=" << next << " detuning=" << detuning << " roots " << trial << " and " << -std::conj(trial);
            throw NumericError("self-consistent branch collision", os.str());
        }
        const auto [r1, r2] = other_roots(trial, next, detuning);
        const double gap = std::min(std::abs(trial - r1), std::abs(trial - r2));
        if (gap < collide * (1.0 + std::abs(trial))) {
            std::ostringstream os;
            os.precision(12);
            const cd other = std::abs(trial - r1) < std::abs(trial - r2) ? r1 : r2;
            os << "n=" << next << " detuning=" << detuning << " roots " << trial << " and " << other;
            throw NumericError("self-consistent branch collision", os.str());
        }
        s = trial;
        cur = next;
        step = std::min(step * 1.5, n / 8.0);
    }
    Epsilon e;
    e.sqrt_eps = s;
    // From the dipole equation directly; s^2 - 1 cancels at low density.
    e.chi = -0.75 * n / (detuning + kPi * n + 0.5 * I * s);
    e.eps = 1.0 + 4.0 * kPi * e.chi;
    return e;
}

SlabTransmission slab_transmission_with_root(cd eps, cd se, double L, double k) {
    if (!(L >= 0.0) || !std::isfinite(L)) throw DomainError("slab thickness must be non-negative");
    if (!(k > 0.0)) throw DomainError("wavenumber must be positive");
    if (std::abs(se * se - eps) > 1e-10 * (1.0 + std::abs(eps))) throw DomainError("sqrt_eps is not a root of eps");
    const cd psi = L * se * k;
    SlabTransmission r;
    r.t = 2.0 * se / (2.0 * se * std::cos(psi) - I * (1.0 + eps) * std::sin(psi));
    r.transmittance = std::norm(r.t);
    return r;
}

SlabTransmission slab_transmission(cd eps, double L, double k) {
    cd se = std::sqrt(eps);
    if (se.imag() < 0.0) se = -se;
    return slab_transmission_with_root(eps, se, L, k);
}

std::vector<SlabTransmission> slab_transmission_sweep(const std::vector<cd>& eps, double L, double k) {
    std::vector<SlabTransmission> out;
    out.reserve(eps.size());
    cd prev;
    for (std::size_t i = 0; i < eps.size(); ++i) {
        cd se = std::sqrt(eps[i]);
        if (i == 0) {
            if (se.imag() < 0.0) se = -se;
        } else if (std::abs(se - prev) > std::abs(se + prev)) {
            se = -se;
        }
        prev = se;
        out.push_back(slab_transmission_with_root(eps[i], se, L, k));
    }
    return out;
}

}  // namespace coldscatter::microdipole
