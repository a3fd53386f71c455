#pragma once

#include <Eigen/Dense>
#include <complex>
#include <functional>
#include <optional>
#include <vector>

#include "coldscatter/angular.hpp"

namespace coldscatter::medium {

using cd = std::complex<double>;
using angular::LevelScheme;

// Frequencies are detunings from the scheme's omega0 (units of gamma).
struct ControlField {
    Eigen::MatrixXcd V;              // excited x ground couplings V_{nm'} (units hbar*gamma)
    double detuning = 0.0;           // omega_c - omega0
    Eigen::Vector3cd polarization{0, 0, 1};
    int ground_level = 0;            // hyperfine level carrying the coupled sublevels
};

// Couplings V_{nm} = <n| d.eps |m> E0 restricted to one ground hyperfine level.
// Amplitude fixed by the reduced element: 2*Vbar = rabi_reduced with Vbar = <J||d||S> E0.
ControlField make_control(const LevelScheme& s, int ground_level, const Eigen::Vector3cd& polarization,
                          double rabi_reduced, double detuning);
// Amplitude fixed by the Rabi frequency 2|V| on one reference transition.
ControlField make_control_on_transition(const LevelScheme& s, int ground_level, const Eigen::Vector3cd& polarization,
                                        double rabi, double detuning, angular::HalfInt F0, angular::HalfInt M0,
                                        angular::HalfInt F, angular::HalfInt M);

struct GroundState {
    Eigen::MatrixXcd rho;  // over ground sublevels, trace 1
    double n0 = 1.0;       // atoms per lambdabar^3

    void validate(const LevelScheme& s) const;
};

GroundState isotropic_ground(const LevelScheme& s, int ground_level, double n0 = 1.0);
GroundState equilibrium_ground(const LevelScheme& s, double n0 = 1.0);  // weights 2F0+1 over all levels

struct Atom {
    LevelScheme scheme;
    std::optional<ControlField> control;
};

// Excited-excited propagator G(E) for energy E (offset from omega0), full excited space.
Eigen::MatrixXcd dressed_propagator(const Atom& atom, cd E);
// Same restricted to one block of excited indices sharing couplings.
Eigen::MatrixXcd dressed_propagator_block(const Atom& atom, cd E, const std::vector<int>& block);
// Connected blocks of the excited space under the control coupling.
std::vector<std::vector<int>> propagator_blocks(const Atom& atom);

// chi_{mu mu'} in Cartesian lab components, density folded in.
Eigen::Matrix3cd susceptibility(const Atom& atom, const GroundState& ground, double detuning);

// alpha^{(m'm)}_{mu' mu}(omega) for input detuning omega.
Eigen::Matrix3cd scattering_tensor(const Atom& atom, int m_out, int m_in, double detuning);
// All alpha^{(m'm)} for fixed input sublevel m, indexed by m'.
std::vector<Eigen::Matrix3cd> scattering_tensors_from(const Atom& atom, int m_in, double detuning);
// Output frequency after the m -> m' event.
double output_detuning(const LevelScheme& s, int m_out, int m_in, double detuning);

// Polarization-summed scattering cross section for input field e from sublevel m:
// sum_{m'} integral dOmega |P_perp alpha e|^2 = (8 pi / 3) sum_{m'} |alpha e|^2.
double scattering_cross_section(const Atom& atom, int m_in, const Eigen::Vector3cd& e, double detuning,
                                bool elastic_only = false);

struct TransverseDecomposition {
    cd chi0;
    Eigen::Vector3cd chivec;   // coefficients of sigma_x, sigma_y, sigma_z in the q = +-1 basis
    cd chi_len;                // principal sqrt of chivec . chivec
    Eigen::Vector3cd director; // chivec / chi_len; zero when isotropic
    bool isotropic = true;
    Eigen::Matrix3d frame;     // columns: local x, local y, ray direction
    Eigen::Matrix2cd projected;  // 2x2 block in the spherical q = +1, -1 basis
};

// Local frame: x along the transverse projection of lab z (lab x if the ray is along z).
Eigen::Matrix3d transverse_frame(const Eigen::Vector3d& direction);
TransverseDecomposition transverse_decompose(const Eigen::Matrix3cd& chi_lab, const Eigen::Vector3d& direction);
// Same decomposition via Wigner rotation of spherical tensor components.
TransverseDecomposition transverse_decompose_wigner(const Eigen::Matrix3cd& chi_lab, const Eigen::Vector3d& direction);
// Continuity-preserving square root: picks the sign closest to the previous value.
cd tracked_sqrt(cd z, cd previous);

struct KineticLengths {
    double sigma_ex = 0;        // per atom
    double sigma_sc = 0;        // elastic (same hyperfine level) part, per atom
    double sigma_sc_total = 0;  // all Raman channels
    double l_ex = 0;
    double l_sc = 0;
    double l_ls = 0;            // loss length, +inf when lossless; negative values never stored here
    double l_g = 0;             // gain length when loss is negative, else +inf
    double sigma_tot = 0;       // 4 pi Im chi / n0 for the probe polarization
    bool gain = false;
    int quadrature_order = 0;
};

// e is the probe polarization (principal axis for anisotropic media).
KineticLengths kinetic_lengths(const Atom& atom, const GroundState& ground, double detuning,
                               const Eigen::Vector3cd& e, const Eigen::Matrix3cd* extra_chi = nullptr);

// Angular integral of f(n) over the unit sphere, Gauss-Legendre x trapezoid product grid
// refined until doubling changes the result by < rel_tol.
double sphere_integral(const std::function<double(const Eigen::Vector3d&)>& f, double rel_tol = 1e-8,
                       int* order_used = nullptr);

struct SaturationResult {
    double s = 0;
    double i_coh = 0;
    double i_incoh = 0;
};
SaturationResult saturation_and_intensities(double rabi, double detuning, double gamma = 1.0);

double doppler_dephasing(double k, double v_bar, double gamma = 1.0);

// Stimulated Raman gain from atoms in ground level `pumped` driven by the control:
// chi = sum_{m in pumped, m'} rho_mm K K^dagger / (delta + i Gamma_R / 2), Im chi < 0 near delta = 0.
struct RamanGain {
    int pumped_level = 0;
    int final_level = 1;
    double extra_dephasing = 0.0;
};
Eigen::Matrix3cd raman_gain_susceptibility(const Atom& atom, const RamanGain& gain, double n_pumped, double detuning);
// Optical pumping rate out of the pumped level by the control.
double control_scattering_rate(const Atom& atom, int pumped_level);

}  // namespace coldscatter::medium
