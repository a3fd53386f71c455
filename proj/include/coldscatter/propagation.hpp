#pragma once

#include <Eigen/Dense>
#include <complex>
#include <functional>
#include <memory>
#include <utility>
#include <vector>

namespace coldscatter::propagation {

using cd = std::complex<double>;
using Eigen::Matrix2cd;
using Eigen::Matrix3cd;
using Eigen::Vector3cd;
using Eigen::Vector3d;

struct RaySegment {
    Vector3d start = Vector3d::Zero();
    Vector3d end = Vector3d::Zero();
    Vector3d direction = Vector3d::UnitZ();
    double length = 0.0;
    double frequency = 0.0;  // detuning (gamma)

    // Throws DomainError for coincident endpoints.
    static RaySegment between(const Vector3d& a, const Vector3d& b, double frequency = 0.0);
    Vector3d at(double s) const { return start + s * direction; }
};

// ---- density profiles --------------------------------------------------------

class DensityProfile {
public:
    virtual ~DensityProfile() = default;
    virtual double density(const Vector3d& r) const = 0;
    // Integral of n along p + s*d for s in [a, b] (d unit).
    virtual double column(const Vector3d& p, const Vector3d& d, double a, double b) const = 0;
    // Smallest s >= a with column(p, d, a, s) = tau; returns +inf when the remaining column is smaller.
    virtual double advance(const Vector3d& p, const Vector3d& d, double a, double tau) const;
    // Column out to infinity.
    double column_to_infinity(const Vector3d& p, const Vector3d& d, double a) const;
    virtual double peak_density() const = 0;
    // Radius of a sphere around the origin outside which the density is negligible (< 1e-16 peak).
    virtual double extent() const = 0;
    // Draws a point distributed as n(r), from three uniforms in [0,1).
    virtual Vector3d sample_point(double u1, double u2, double u3) const = 0;
};

// n0 exp(-r^2 / (2 r0^2))
class GaussianProfile final : public DensityProfile {
public:
    GaussianProfile(double n0, double r0);
    double density(const Vector3d& r) const override;
    double column(const Vector3d& p, const Vector3d& d, double a, double b) const override;
    double advance(const Vector3d& p, const Vector3d& d, double a, double tau) const override;
    double peak_density() const override { return n0_; }
    double extent() const override { return 8.6 * r0_; }
    Vector3d sample_point(double u1, double u2, double u3) const override;
    double n0() const { return n0_; }
    double r0() const { return r0_; }
    // Central column through the whole cloud: sqrt(2 pi) n0 r0.
    double central_column() const;

private:
    double n0_, r0_;
};

class UniformSphereProfile final : public DensityProfile {
public:
    UniformSphereProfile(double n0, double radius);
    double density(const Vector3d& r) const override;
    double column(const Vector3d& p, const Vector3d& d, double a, double b) const override;
    double peak_density() const override { return n0_; }
    double extent() const override { return radius_; }
    Vector3d sample_point(double u1, double u2, double u3) const override;

private:
    double n0_, radius_;
};

// Uniform density for z in [z0, z1], unbounded in x, y.
class SlabProfile final : public DensityProfile {
public:
    SlabProfile(double n0, double z0, double z1);
    double density(const Vector3d& r) const override;
    double column(const Vector3d& p, const Vector3d& d, double a, double b) const override;
    double peak_density() const override { return n0_; }
    double extent() const override;
    Vector3d sample_point(double u1, double u2, double u3) const override;  // x, y in [-extent, extent]

private:
    double n0_, z0_, z1_;
};

// ---- media -------------------------------------------------------------------

// One density profile times a susceptibility per unit density (lab Cartesian tensor).
struct MediumComponent {
    std::shared_ptr<const DensityProfile> profile;
    std::function<Matrix3cd(double)> chi_per_density;  // detuning -> chi / n
};

class Medium {
public:
    Medium() = default;
    explicit Medium(std::vector<MediumComponent> components) : components_(std::move(components)) {}
    void add(MediumComponent c) { components_.push_back(std::move(c)); }

    Matrix3cd chi(const Vector3d& r, double detuning) const;
    // Integral of chi along the segment (analytic columns).
    Matrix3cd chi_integral(const RaySegment& seg) const;
    const std::vector<MediumComponent>& components() const { return components_; }
    bool empty() const { return components_.empty(); }
    // Slab or sphere containing all matter.
    double extent() const;

private:
    std::vector<MediumComponent> components_;
};

// ---- phase integrals and amplitude ---------------------------------------------

struct PhaseIntegrals {
    cd phi0{0.0};
    cd phi{0.0};
    double error_estimate = 0.0;
};

// Sampler returns (chi0, chi_len) at a point.
using PhaseSampler = std::function<std::pair<cd, cd>(const Vector3d&)>;

// phi0 = 2 pi k int chi0 ds, phi = 2 pi k int chi_len ds by adaptive Gauss-Kronrod.
// Throws NumericError when the error estimate stays above rel_tol.
PhaseIntegrals phase_integrals(const RaySegment& seg, const PhaseSampler& sampler, double k = 1.0,
                               double rel_tol = 1e-11, unsigned max_depth = 25);

// X per the Pauli form in local Cartesian (x, y) components.
Matrix2cd amplitude_matrix(cd phi0, cd phi, const Vector3cd& director);
// Same from the vector phase Phi = 2 pi k int chivec ds; regular when Phi . Phi -> 0.
Matrix2cd amplitude_matrix_from_vector(cd phi0, const Vector3cd& phivec);

// Wavenumber of a detuned photon in units of the resonance wavenumber.
inline double wavenumber(double detuning, double omega0) { return 1.0 + detuning / omega0; }

struct PropagationOptions {
    double k = 1.0;
    double min_separation = 2.0 * 3.141592653589793;  // lambdabar
    double segment_cap = 0.0;  // max piece length for mixed anisotropic media; 0 picks l_ex / 10
};

// X for a straight segment: exact for single-component media, piecewise for mixtures.
Matrix2cd segment_amplitude(const RaySegment& seg, const Medium& medium, const PropagationOptions& opt = {});
// X embedded into the lab frame: F2 X F2^T (transverse to the ray).
Matrix3cd lab_amplitude(const Matrix2cd& x, const Vector3d& direction);

// Far-field propagator between r2 (source) and r1 (observation):
// -X exp(i k R) / R in lab Cartesian components. Throws RangeError below min_separation.
Matrix3cd green_asymptote(const Vector3d& r1, const Vector3d& r2, double detuning, const Medium& medium,
                          const PropagationOptions& opt = {});

}  // namespace coldscatter::propagation
