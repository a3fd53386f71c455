#pragma once

#include <Eigen/Dense>
#include <complex>
#include <cstdint>
#include <utility>
#include <vector>

namespace coldscatter::microdipole {

using cd = std::complex<double>;
using Eigen::Matrix3cd;
using Eigen::MatrixXcd;
using Eigen::Vector3cd;
using Eigen::Vector3d;
using Eigen::VectorXcd;

// Units: hbar = gamma = 1, lengths in lambdabar (resonant k0 = 1).
// Vector model: F0 = 0 -> F = 1, reduced dipole d0^2 = 3/4 (single-atom width 1).
// Scalar model: coupling g^2 = 1/2 (single-atom width 1, resonant cross section 4 pi).
enum class Model { Scalar, Vector };

struct Configuration {
    std::vector<Vector3d> positions;
    Model model = Model::Vector;
    double detuning = 0.0;       // omega - omega0 (gamma)
    double contact_floor = 0.05; // minimum pair separation (lambdabar)
    double k = 1.0;              // photon wavenumber in the phase factors

    // Throws DomainError naming the first pair closer than the floor.
    void validate() const;
};

inline constexpr double kDipoleSquared = 0.75;
inline constexpr double kScalarCouplingSquared = 0.5;

// Spherical Hankel functions of the first kind, orders 0 and 2 (series for small x).
cd hankel0(double x);
cd hankel2(double x);

// D(R) = -k^3 { i (2/3) h0(kR) I + [R R^T / R^2 - I/3] i h2(kR) }. Throws DomainError for R = 0.
Matrix3cd field_green_tensor(const Vector3d& R, double k = 1.0);

struct BasisState {
    int atom;
    int component;  // 0, 1, 2 for x, y, z (vector model); 0 (scalar)
};

struct EffectiveHamiltonian {
    MatrixXcd H;                 // diagonal -detuning - i/2; off-diagonal pair self-energies
    std::vector<BasisState> basis;
    Model model = Model::Vector;
};

// Pair blocks d0^2 D(R_ab) (vector) or -(1/2) e^{iR}/R (scalar), evaluated at the resonance.
EffectiveHamiltonian build_effective_hamiltonian(const Configuration& c);

// Reduced transition amplitude A = sum_ab (d.e_out)^*_b (d.e_in)_a e^{i k_in r_a - i k_out r_b} R_ba
// with R = (E - H)^{-1} = (energy_shift - H_eff)^{-1}. The physical T matrix is
// (2 pi omega / V) A; V cancels in every cross section. k vectors are unit directions
// (scaled by c.k internally). Polarizations are ignored in the scalar model.
cd t_matrix_element(const Configuration& c, const EffectiveHamiltonian& h, const Vector3d& k_in, const Vector3cd& e_in,
                    const Vector3d& k_out, const Vector3cd& e_out, double energy_shift = 0.0);

// Q0 = -4 pi k Im A(forward)  (lambdabar^2).
double total_cross_section(const Configuration& c, const Vector3d& k_in, const Vector3cd& e_in);
// d sigma / d Omega = k^4 |A|^2.
double differential_cross_section(const Configuration& c, const Vector3d& k_in, const Vector3cd& e_in,
                                  const Vector3d& k_out, const Vector3cd& e_out);

// Reduces H to Hessenberg form once (H = Q T Q^H); each detuning then costs one O(n^2) solve.
class SpectralSolver {
public:
    explicit SpectralSolver(const Configuration& c);
    VectorXcd eigenvalues() const;  // of H at zero detuning
    cd amplitude(double detuning, const Vector3d& k_in, const Vector3cd& e_in, const Vector3d& k_out,
                 const Vector3cd& e_out) const;
    double total_cross_section(double detuning, const Vector3d& k_in, const Vector3cd& e_in) const;
    // Many detunings with one projection.
    std::vector<double> total_cross_section(const std::vector<double>& detunings, const Vector3d& k_in,
                                            const Vector3cd& e_in) const;
    double reconstruction_error() const { return recon_err_; }

private:
    Configuration c_;
    MatrixXcd T_, Q_;
    double recon_err_ = 0.0;
    cd contract(double detuning, const VectorXcd& p, const VectorXcd& q) const;
};

// ---- random configurations ------------------------------------------------------------

enum class CloudShape { UniformBall, Gaussian };

struct ConfigurationSpec {
    int atoms = 50;
    double density = 0.01;          // peak density n0 (lambdabar^-3)
    CloudShape shape = CloudShape::UniformBall;
    Model model = Model::Vector;
    double contact_floor = 0.05;
};

// Ball radius (uniform) or r0 (Gaussian) giving the requested peak density for `atoms`.
double configuration_size(const ConfigurationSpec& s);
// Positions drawn with rejection of pairs below the contact floor; deterministic in (seed, index).
Configuration random_configuration(const ConfigurationSpec& s, std::uint64_t seed, std::uint64_t index);

// Welford running mean and variance.
class RunningStats {
public:
    void add(double x);
    std::uint64_t count() const { return n_; }
    double mean() const { return mean_; }
    double variance() const;            // sample variance
    double standard_error() const;
    void merge(const RunningStats& o);  // parallel combination

private:
    std::uint64_t n_ = 0;
    double mean_ = 0.0, m2_ = 0.0;
};

struct AveragedSpectrum {
    std::vector<double> detuning, mean, stderr_;
    int configurations = 0;
};

// Configuration-averaged Q0(detuning) for incidence along z with x polarization.
AveragedSpectrum averaged_cross_section(const ConfigurationSpec& s, const std::vector<double>& detunings,
                                        int configurations, std::uint64_t seed, int workers = 1);

// ---- self-consistent medium ------------------------------------------------------------

struct Epsilon {
    cd eps{1.0};
    cd chi{0.0};
    cd sqrt_eps{1.0};
};

// Closed equation (s^2 - 1)(detuning + pi n + i s / 2) + 3 pi n = 0 with s = sqrt(eps), n the
// scaled density n0 lambdabar^3 (2F+1) / [3 (2F0+1)]. Tracked by homotopy from n = 0 (s = 1)
// with Newton steps. Throws NumericError when another root comes too close (both reported).
Epsilon self_consistent_epsilon(double n_scaled, double detuning);
// Residual of the closed equation (for tests and diagnostics).
cd self_consistent_residual(cd s, double n_scaled, double detuning);

struct SlabTransmission {
    cd t{1.0};
    double transmittance = 1.0;
};

// T = 2 sqrt(eps) / (2 sqrt(eps) cos psi - i (1 + eps) sin psi), psi = L sqrt(eps) k.
// The root with non-negative imaginary part is used unless `sqrt_eps` is supplied.
SlabTransmission slab_transmission(cd eps, double L, double k = 1.0);
SlabTransmission slab_transmission_with_root(cd eps, cd sqrt_eps, double L, double k = 1.0);
// Sweep with continuity tracking of sqrt(eps).
std::vector<SlabTransmission> slab_transmission_sweep(const std::vector<cd>& eps, double L, double k = 1.0);

}  // namespace coldscatter::microdipole
