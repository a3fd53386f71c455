#pragma once

#include <Eigen/Dense>
#include <functional>
#include <limits>
#include <vector>

namespace coldscatter::transport {

// Homogeneous diffusion parameters. Lengths in lambdabar; v_bar in units of c.
struct DiffusionModel {
    double v_bar = 1.0;
    double l0_bar = 1.0;       // extinction length
    double mean_cos = 0.0;     // <cos theta> of the phase function
    double albedo = 1.0;
    double l_g = std::numeric_limits<double>::infinity();  // gain length
    double r0 = 1.0;           // sphere radius

    void validate() const;     // throws DomainError
};

// ---- group velocity ------------------------------------------------------------------

struct GroupVelocity {
    double ratio = 1.0;            // v_g / c
    double dchi_domega = 0.0;      // d chi' / d omega (per gamma)
    double richardson_error = 0.0; // |extrapolated - fine| estimate of the derivative error
};

// 1/v_g = 1/c + 2 pi omega_bar / c * d chi'/d omega, with omega_bar in gamma units
// (lengths in lambdabar give c = omega_bar). Central differences at steps h and h/2 with a
// Richardson check; throws NumericError when they disagree by more than rel_tol.
GroupVelocity group_velocity(const std::function<double(double)>& chi_re, double detuning, double omega_bar,
                             double h = 1e-3, double rel_tol = 1e-6);
// Same from samples on a uniform detuning grid; `detuning` must be a grid point with two
// neighbours on each side.
GroupVelocity group_velocity(const std::vector<double>& grid, const std::vector<double>& chi_re, double detuning,
                             double omega_bar, double rel_tol = 1e-6);

// ---- diffusion -----------------------------------------------------------------------

struct Diffusion {
    double D = 0.0;
    double l_tr = 0.0;
};
// D = l0 / (3 (1 - <cos>)) v_bar. Throws DomainError for <cos> >= 1.
Diffusion diffusion_constant(const DiffusionModel& m);

// <cos theta> for a scattering pattern p(n) around the incident direction n_in.
double mean_cosine(const std::function<double(const Eigen::Vector3d&)>& pattern, const Eigen::Vector3d& n_in);

enum class SphereBoundary {
    Absorbing,   // W(r0) = 0
    Mixed,       // -D W'(r0) = v_bar W(r0) / 2
    Reflecting,  // W'(r0) = 0
};

struct SphereMode {
    double growth_rate = 0.0;        // dominant eigenvalue of D Lap + v/l_g - v (1 - a)/l0
    std::vector<double> r;           // radial grid, r[0] = 0
    std::vector<double> W;           // eigenfunction, W(0) = 1
    int grid_points = 0;             // points of the finer grid
    double refinement_change = 0.0;  // relative change between the two grids
};

// Radial finite differences (u = r W) with inverse power iteration; the eigenvalue is
// computed on n and 2n intervals and must agree to `refine_tol` (relative to D / r0^2).
SphereMode solve_gain_diffusion_sphere(const DiffusionModel& m, SphereBoundary boundary = SphereBoundary::Absorbing,
                                       int n = 400, double refine_tol = 5e-3);

// r0* = pi sqrt(l_tr l_g / 3); +inf without gain.
double letokhov_threshold(double l_tr, double l_g);

// Residual dW/dt + div J + v (1 - a)/l0 W - v/l_g W for spherically symmetric fields.
// W and J are [time][radius] (J radial). One time sample means a static field.
// Second-order differences; throws DomainError for inconsistent shapes or grids.
Eigen::MatrixXd continuity_residual(const std::vector<double>& r, const std::vector<double>& t,
                                    const Eigen::MatrixXd& W, const Eigen::MatrixXd& J, const DiffusionModel& m);

}  // namespace coldscatter::transport
