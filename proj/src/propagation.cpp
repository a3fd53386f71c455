#include "coldscatter/propagation.hpp"

#include <algorithm>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/erf.hpp>
#include <boost/math/tools/roots.hpp>
#include <cmath>
#include <limits>
#include <sstream>

#include "coldscatter/errors.hpp"
#include "coldscatter/medium.hpp"

namespace coldscatter::propagation {

namespace {
constexpr double kPi = 3.141592653589793238462643383279502884;
constexpr double kInf = std::numeric_limits<double>::infinity();
const cd I(0.0, 1.0);

// Length of [a, b] inside [lo, hi].
double overlap(double a, double b, double lo, double hi) { return std::max(0.0, std::min(b, hi) - std::max(a, lo)); }

double linear_advance(double a, double tau, double n0, double lo, double hi) {
    const double start = std::max(a, lo);
    if (!(hi > start) || n0 <= 0.0) return kInf;
    const double need = tau / n0;
    if (need > hi - start) return kInf;
    return start + need;
}
}  // namespace

RaySegment RaySegment::between(const Vector3d& a, const Vector3d& b, double frequency) {
    RaySegment s;
    s.start = a;
    s.end = b;
    s.length = (b - a).norm();
    if (!(s.length > 0.0)) throw DomainError("ray segment with zero length");
    s.direction = (b - a) / s.length;
    s.frequency = frequency;
    return s;
}

// ---- profiles -------------------------------------------------------------------

double DensityProfile::advance(const Vector3d& p, const Vector3d& d, double a, double tau) const {
    if (tau <= 0.0) return a;
    if (column_to_infinity(p, d, a) < tau) return kInf;
    double hi = a + 1.0, step = 1.0;
    while (column(p, d, a, hi) < tau) {
        step *= 2.0;
        hi = a + step;
    }
    auto f = [&](double s) { return column(p, d, a, s) - tau; };
    boost::uintmax_t iters = 200;
    auto r = boost::math::tools::toms748_solve(f, a, hi, boost::math::tools::eps_tolerance<double>(50), iters);
    return 0.5 * (r.first + r.second);
}

double DensityProfile::column_to_infinity(const Vector3d& p, const Vector3d& d, double a) const {
    const double far = std::abs(a) + p.norm() + 2.0 * extent() + 1.0;
    return column(p, d, a, std::max(a, far));
}

GaussianProfile::GaussianProfile(double n0, double r0) : n0_(n0), r0_(r0) {
    if (!(n0 >= 0.0) || !(r0 > 0.0)) throw DomainError("Gaussian profile needs n0 >= 0 and r0 > 0");
}

double GaussianProfile::density(const Vector3d& r) const { return n0_ * std::exp(-r.squaredNorm() / (2.0 * r0_ * r0_)); }

double GaussianProfile::central_column() const { return std::sqrt(2.0 * kPi) * n0_ * r0_; }

double GaussianProfile::column(const Vector3d& p, const Vector3d& d, double a, double b) const {
    if (!(b > a) || n0_ == 0.0) return 0.0;
    const double sstar = -p.dot(d);
    const double rho2 = std::max(0.0, p.squaredNorm() - sstar * sstar);
    const double pref = n0_ * std::exp(-rho2 / (2.0 * r0_ * r0_)) * r0_ * std::sqrt(kPi / 2.0);
    if (pref == 0.0) return 0.0;
    const double sc = 1.0 / (std::sqrt(2.0) * r0_);
    const double ua = (a - sstar) * sc, ub = (b - sstar) * sc;
    double diff;
    if (ua >= 0.0)
        diff = std::erfc(ua) - std::erfc(ub);
    else if (ub <= 0.0)
        diff = std::erfc(-ub) - std::erfc(-ua);
    else
        diff = std::erf(ub) - std::erf(ua);
    return pref * std::max(diff, 0.0);
}

double GaussianProfile::advance(const Vector3d& p, const Vector3d& d, double a, double tau) const {
    if (tau <= 0.0) return a;
    if (n0_ == 0.0) return kInf;
    const double sstar = -p.dot(d);
    const double rho2 = std::max(0.0, p.squaredNorm() - sstar * sstar);
    const double pref = n0_ * std::exp(-rho2 / (2.0 * r0_ * r0_)) * r0_ * std::sqrt(kPi / 2.0);
    if (pref == 0.0) return kInf;
    const double t = tau / pref;
    const double ua = (a - sstar) / (std::sqrt(2.0) * r0_);
    const double w = std::erfc(ua) - t;  // erfc(ub)
    if (!(w > 0.0)) return kInf;
    double ub;
    if (w <= 1.0) {
        ub = boost::math::erfc_inv(w);
    } else {
        const double w2 = std::erfc(-ua) + t;  // erfc(-ub) = 2 - w
        if (!(w2 < 2.0)) return kInf;
        ub = -boost::math::erfc_inv(w2);
    }
    return std::max(a, sstar + std::sqrt(2.0) * r0_ * ub);
}

Vector3d GaussianProfile::sample_point(double u1, double u2, double u3) const {
    auto g = [&](double u) {
        u = std::clamp(u, 1e-300, 1.0 - 1e-16);
        return std::sqrt(2.0) * r0_ * boost::math::erf_inv(2.0 * u - 1.0);
    };
    return {g(u1), g(u2), g(u3)};
}

UniformSphereProfile::UniformSphereProfile(double n0, double radius) : n0_(n0), radius_(radius) {
    if (!(n0 >= 0.0) || !(radius > 0.0)) throw DomainError("sphere profile needs n0 >= 0 and radius > 0");
}

double UniformSphereProfile::density(const Vector3d& r) const { return r.norm() <= radius_ ? n0_ : 0.0; }

double UniformSphereProfile::column(const Vector3d& p, const Vector3d& d, double a, double b) const {
    const double sstar = -p.dot(d);
    const double h2 = radius_ * radius_ - (p.squaredNorm() - sstar * sstar);
    if (h2 <= 0.0) return 0.0;
    const double h = std::sqrt(h2);
    return n0_ * overlap(a, b, sstar - h, sstar + h);
}

Vector3d UniformSphereProfile::sample_point(double u1, double u2, double u3) const {
    const double r = radius_ * std::cbrt(u1);
    const double ct = 2.0 * u2 - 1.0, st = std::sqrt(std::max(0.0, 1.0 - ct * ct));
    const double ph = 2.0 * kPi * u3;
    return {r * st * std::cos(ph), r * st * std::sin(ph), r * ct};
}

SlabProfile::SlabProfile(double n0, double z0, double z1) : n0_(n0), z0_(z0), z1_(z1) {
    if (!(n0 >= 0.0) || !(z1 > z0)) throw DomainError("slab profile needs n0 >= 0 and z1 > z0");
}

double SlabProfile::density(const Vector3d& r) const { return (r.z() >= z0_ && r.z() <= z1_) ? n0_ : 0.0; }

double SlabProfile::column(const Vector3d& p, const Vector3d& d, double a, double b) const {
    if (!(b > a)) return 0.0;
    if (d.z() == 0.0) return (p.z() >= z0_ && p.z() <= z1_) ? n0_ * (b - a) : 0.0;
    double lo = (z0_ - p.z()) / d.z(), hi = (z1_ - p.z()) / d.z();
    if (lo > hi) std::swap(lo, hi);
    return n0_ * overlap(a, b, lo, hi);
}

double SlabProfile::extent() const { return 1e3 * (z1_ - z0_) + std::max(std::abs(z0_), std::abs(z1_)); }

Vector3d SlabProfile::sample_point(double u1, double u2, double u3) const {
    (void)u1;
    (void)u2;
    return {0.0, 0.0, z0_ + (z1_ - z0_) * u3};
}

// ---- medium -------------------------------------------------------------------

Matrix3cd Medium::chi(const Vector3d& r, double detuning) const {
    Matrix3cd acc = Matrix3cd::Zero();
    for (const auto& c : components_) {
        const double n = c.profile->density(r);
        if (n != 0.0) acc += n * c.chi_per_density(detuning);
    }
    return acc;
}

Matrix3cd Medium::chi_integral(const RaySegment& seg) const {
    Matrix3cd acc = Matrix3cd::Zero();
    for (const auto& c : components_) {
        const double col = c.profile->column(seg.start, seg.direction, 0.0, seg.length);
        if (col != 0.0) acc += col * c.chi_per_density(seg.frequency);
    }
    return acc;
}

double Medium::extent() const {
    double e = 0.0;
    for (const auto& c : components_) e = std::max(e, c.profile->extent());
    return e;
}

// ---- phase integrals ----------------------------------------------------------

PhaseIntegrals phase_integrals(const RaySegment& seg, const PhaseSampler& sampler, double k, double rel_tol,
                               unsigned max_depth) {
    using boost::math::quadrature::gauss_kronrod;
    PhaseIntegrals out;
    double err0 = 0.0, l10 = 0.0, err1 = 0.0, l11 = 0.0;
    auto f0 = [&](double s) { return sampler(seg.at(s)).first; };
    auto f1 = [&](double s) { return sampler(seg.at(s)).second; };
    const cd i0 = gauss_kronrod<double, 31>::integrate(f0, 0.0, seg.length, max_depth, rel_tol, &err0, &l10);
    const cd i1 = gauss_kronrod<double, 31>::integrate(f1, 0.0, seg.length, max_depth, rel_tol, &err1, &l11);
    const double floor = 1e-300;
    const bool ok0 = err0 <= std::max(rel_tol * l10, floor) * 10.0;
    const bool ok1 = err1 <= std::max(rel_tol * l11, floor) * 10.0;
    if (!ok0 || !ok1) {
        std::ostringstream os;
        os << "error estimates " << err0 << ", " << err1 << " vs L1 norms " << l10 << ", " << l11 << " over length "
           << seg.length;
        throw NumericError("phase integral quadrature did not converge", os.str());
    }
    out.phi0 = 2.0 * kPi * k * i0;
    out.phi = 2.0 * kPi * k * i1;
    out.error_estimate = 2.0 * kPi * k * std::max(err0, err1);
    return out;
}

Matrix2cd amplitude_matrix(cd phi0, cd phi, const Vector3cd& director) {
    const cd e0 = std::exp(I * phi0);
    Matrix2cd X;
    if (director.squaredNorm() == 0.0 || phi == 0.0) return e0 * Matrix2cd::Identity();
    const cd c = std::cos(phi), s = std::sin(phi);
    X(0, 0) = e0 * (c - I * s * director(0));
    X(1, 1) = e0 * (c + I * s * director(0));
    X(0, 1) = e0 * I * s * (director(1) + I * director(2));
    X(1, 0) = e0 * I * s * (director(1) - I * director(2));
    return X;
}

Matrix2cd amplitude_matrix_from_vector(cd phi0, const Vector3cd& v) {
    const cd e0 = std::exp(I * phi0);
    const cd p2 = v(0) * v(0) + v(1) * v(1) + v(2) * v(2);
    cd c, sc;  // cos(phi), sin(phi)/phi: even in phi, no branch choice
    if (std::abs(p2) < 1e-6) {
        c = 1.0 - p2 / 2.0 + p2 * p2 / 24.0 - p2 * p2 * p2 / 720.0;
        sc = 1.0 - p2 / 6.0 + p2 * p2 / 120.0 - p2 * p2 * p2 / 5040.0;
    } else {
        const cd p = std::sqrt(p2);
        c = std::cos(p);
        sc = std::sin(p) / p;
    }
    Matrix2cd X;
    X(0, 0) = e0 * (c - I * sc * v(0));
    X(1, 1) = e0 * (c + I * sc * v(0));
    X(0, 1) = e0 * I * sc * (v(1) + I * v(2));
    X(1, 0) = e0 * I * sc * (v(1) - I * v(2));
    return X;
}

namespace {
Matrix2cd amplitude_of_integral(const Matrix3cd& integ, const Vector3d& d, double k) {
    const auto dec = medium::transverse_decompose(integ, d);
    return amplitude_matrix_from_vector(2.0 * kPi * k * dec.chi0, 2.0 * kPi * k * dec.chivec);
}
}  // namespace

Matrix2cd segment_amplitude(const RaySegment& seg, const Medium& med, const PropagationOptions& opt) {
    int active = 0;
    for (const auto& c : med.components())
        if (c.profile->column(seg.start, seg.direction, 0.0, seg.length) != 0.0) ++active;
    if (active == 0) return Matrix2cd::Identity();
    if (active == 1) return amplitude_of_integral(med.chi_integral(seg), seg.direction, opt.k);

    // Mixed components with different profiles: the director varies along the ray.
    double cap = opt.segment_cap;
    if (!(cap > 0.0)) {
        double inv_lex = 0.0;
        for (const auto& c : med.components())
            inv_lex += 4.0 * kPi * c.profile->peak_density() * std::abs(c.chi_per_density(seg.frequency).trace().imag()) / 3.0;
        cap = inv_lex > 0.0 ? 0.1 / inv_lex : seg.length / 16.0;
    }
    const int pieces = static_cast<int>(std::clamp(std::ceil(seg.length / cap), 1.0, 4096.0));
    Matrix2cd X = Matrix2cd::Identity();
    const double h = seg.length / pieces;
    for (int i = 0; i < pieces; ++i) {
        RaySegment p = seg;
        p.start = seg.at(i * h);
        p.end = seg.at((i + 1) * h);
        p.length = h;
        X = amplitude_of_integral(med.chi_integral(p), seg.direction, opt.k) * X;
    }
    return X;
}

Matrix3cd lab_amplitude(const Matrix2cd& x, const Vector3d& direction) {
    const Eigen::Matrix<double, 3, 2> F2 = medium::transverse_frame(direction).leftCols<2>();
    return F2.cast<cd>() * x * F2.transpose().cast<cd>();
}

Matrix3cd green_asymptote(const Vector3d& r1, const Vector3d& r2, double detuning, const Medium& medium,
                          const PropagationOptions& opt) {
    const double R = (r1 - r2).norm();
    if (!(R >= opt.min_separation)) {
        std::ostringstream os;
        os << "separation " << R << " below the far-field minimum " << opt.min_separation;
        throw RangeError(os.str());
    }
    const auto seg = RaySegment::between(r2, r1, detuning);
    const Matrix3cd X = lab_amplitude(segment_amplitude(seg, medium, opt), seg.direction);
    return -X * std::exp(I * opt.k * R) / R;
}

}  // namespace coldscatter::propagation
