#pragma once

#include <Eigen/Dense>
#include <complex>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "coldscatter/medium.hpp"
#include "coldscatter/propagation.hpp"
#include "coldscatter/rng.hpp"

namespace coldscatter::mcscatter {

using cd = std::complex<double>;
using Eigen::Matrix3cd;
using Eigen::Vector3cd;
using Eigen::Vector3d;

// Cloud of atoms with a density profile; the ground state is per atom (trace 1).
struct Cloud {
    std::shared_ptr<const propagation::DensityProfile> profile;
    medium::Atom atom;
    medium::GroundState ground;  // n0 ignored; density comes from the profile
    // Pumped atoms carried by the same profile, fraction of the local density.
    std::optional<medium::RamanGain> gain;
    double gain_fraction = 0.0;
    double scatterer_fraction = 1.0;
    // Extra susceptibility per unit density (propagation only; no scattering events).
    std::optional<Matrix3cd> background_chi;

    void validate() const;
};

// Gaussian cloud with resonance optical depth b0 for a closed transition of the scheme's
// strongest line: b0 = sqrt(2 pi) n0 sigma0 r0.
double resonance_cross_section(int twice_F0, int twice_F);  // sigma0 with k = 1
double gaussian_n0_for_b0(double b0, double r0, double sigma0);

enum class Channel { LinPar, LinPerp, HelPar, HelPerp };
const char* channel_name(Channel c);
Channel channel_from_name(const std::string& s);  // throws DomainError
bool channel_is_helical(Channel c);

enum class SourceMode { Beam, Volume, Point };

struct McConfig {
    Cloud cloud;
    double detuning = 0.0;              // probe (or emission) detuning
    Vector3d k_in = Vector3d::UnitZ();  // incident direction (beam mode)
    std::vector<Channel> channels{Channel::HelPar};  // must share one input family
    std::vector<double> theta;          // detection angles from exact backscattering (rad)
    int n_phi = 4;                      // azimuths averaged per angle
    SourceMode source = SourceMode::Beam;
    double beam_radius = 0.0;           // 0 picks 4 r0-equivalent extent
    int max_order = 50;
    double order_phase_damping = 0.0;   // heuristic e^{-kappa (n-1)} on crossed terms
    double omega0 = 6.333e7;            // optical frequency in gamma units (wavenumber of channels)
    double weight_cap = 1e150;          // trajectories beyond this weight are truncated
    // Instability: weighted fit of ln I_k over orders >= instability_min_order; flagged when the
    // slope exceeds instability_z standard errors (or on weight overflow).
    int instability_min_order = 2;
    double instability_z = 3.0;
    // Spheres around the origin for flux and path-length tallies (flights after emission or scattering).
    std::vector<double> tally_radii;
};

struct RunOptions {
    std::uint64_t trajectories = 10000;
    std::uint64_t seed = 1;
    int workers = 1;
    std::uint64_t chunk = 2048;   // trajectories per deterministic chunk
    int record_chains = 0;        // keep the first N chains (for inspection and tests)
    bool scratch_reverse = false; // skip the incremental reverse product (cross-check)
};

struct ScatterEvent {
    Vector3d position;
    int m_in = 0;
    int m_out = 0;
    double freq_in = 0.0;   // photon detuning arriving at the atom
    double freq_out = 0.0;
    Matrix3cd alpha;        // sampled tensor alpha^{(m_out m_in)}(freq_in)
};

struct ScatterChain {
    Vector3d entry_point;      // where the incident ray crosses the source plane
    Vector3d k_in;
    Vector3cd e_in;
    std::vector<ScatterEvent> events;
    std::vector<Eigen::Matrix2cd> segment_amplitudes;  // entry + between events + final exit
    double weight = 0.0;       // weight at the last recorded vertex
    Vector3d exit_direction = Vector3d::Zero();  // zero when truncated
};

// Amplitudes of a recorded beam chain toward k_out with analyzer e_det (transverse to k_out).
struct ChainAmplitudes {
    cd direct;
    cd reverse;
};

struct ChannelResult {
    Channel channel;
    std::vector<double> single, ladder, crossed;           // per theta bin
    std::vector<double> single_err, ladder_err, crossed_err;
    std::vector<double> eta, eta_err;                      // with single scattering
    std::vector<double> eta_multi, eta_multi_err;          // single scattering excluded
    std::vector<std::vector<double>> ladder_by_order;      // [bin][order-1]
    std::vector<std::vector<double>> crossed_by_order;
    std::vector<std::vector<double>> ladder_by_order_err;
};

struct McResult {
    std::uint64_t trajectories = 0;
    std::vector<double> theta;
    std::vector<ChannelResult> channels;
    // analog bookkeeping over all directions
    double injected = 0.0, escaped = 0.0, absorbed = 0.0, truncated = 0.0;
    std::vector<double> escaped_by_order, escaped_by_order_err;  // index = number of scatterings
    std::uint64_t truncated_trajectories = 0;
    std::uint64_t overflow_trajectories = 0;
    bool instability = false;
    int instability_order = -1;         // order of the intensity minimum when flagged
    double tail_growth = 0.0, tail_growth_err = 0.0;  // d ln I_k / dk over the order tail
    double mean_free_path_gain = 0.0;   // mean weight multiplier per free path (diagnostic)
    // per tally radius: net outward weight crossing the sphere; weighted path length inside the
    // shell between the previous radius (or 0) and this one. Both per trajectory.
    std::vector<double> radial_flux, radial_flux_err, shell_path, shell_path_err;
    std::vector<std::string> warnings;
    std::vector<ScatterChain> chains;
};

// ---- building blocks ---------------------------------------------------------------

// Frequency-resolved single-atom data for a cloud.
class CloudOptics {
public:
    CloudOptics(const Cloud& cloud, double omega0);

    struct Transition {
        int m_out;
        double freq_out;
        Matrix3cd alpha;
    };
    struct Data {
        double freq = 0.0;
        double k = 1.0;
        Matrix3cd chi_unit;           // total (scatterers + gain) per unit density
        bool isotropic = false;
        cd chi0{0.0};                 // valid when isotropic
        double sigma_ref = 0.0;       // polarization-averaged scatterer extinction per atom
        std::vector<int> m_in;        // populated sublevels
        std::vector<double> pop;
        std::vector<std::vector<Transition>> transitions;  // per populated sublevel
    };

    const Data& at(double freq);
    // Propagation amplitude in lab components for a column along direction d.
    Matrix3cd amplitude(const Data& d, const Vector3d& dir, double column) const;
    // Applies the amplitude to a transverse field (cheap when isotropic).
    Vector3cd propagate(const Data& d, const Vector3d& dir, double column, const Vector3cd& e) const;
    // Polarization-resolved scattering cross section per atom, all channels.
    double sigma_sc(const Data& d, const Vector3cd& e_hat) const;
    const Cloud& cloud() const { return cloud_; }

private:
    Cloud cloud_;
    double omega0_;
    std::vector<std::pair<long long, std::unique_ptr<Data>>> cache_;
};

// Samples the column to the next event: exponential with rate sigma; returns +inf on escape
// (when the column exceeds `available`).
double sample_column(double sigma, double available, rng::Philox& g);

// Path length along the ray for a sampled column; +inf when it escapes.
double sample_free_path(const propagation::DensityProfile& p, const Vector3d& pos, const Vector3d& dir,
                        double sigma, rng::Philox& g);

struct ScatterOutcome {
    Vector3d direction;
    Vector3cd polarization;  // normalized, transverse to direction
    int m_in = 0;
    int m_out = 0;
    double freq_out = 0.0;
    const Matrix3cd* alpha = nullptr;
};

// Draws sublevel, channel and direction with density proportional to rho_m |P_perp alpha e|^2.
ScatterOutcome scatter_event(const CloudOptics::Data& d, const Vector3cd& e_hat, rng::Philox& g);

// Direct and reverse-path amplitudes of a recorded chain, from scratch.
ChainAmplitudes chain_amplitudes(CloudOptics& optics, const ScatterChain& chain, const Vector3d& k_out,
                                 const Vector3cd& e_det);

// Analyzer for a channel at detection direction k_out near backscattering.
Vector3cd analyzer(Channel c, const Vector3d& k_in, const Vector3cd& e_in, const Vector3d& k_out);
// Input polarization for the channel family.
Vector3cd input_polarization(Channel c, const Vector3d& k_in);

// ---- engines ----------------------------------------------------------------------

McResult run(const McConfig& cfg, const RunOptions& opt);

McResult simulate_ladder(const McConfig& cfg, const RunOptions& opt);
McResult cbs_enhancement(const McConfig& cfg, const RunOptions& opt);
// Volume sources over the pumped atoms, amplitude and gain from the dressed susceptibility.
McResult gain_transport(const McConfig& cfg, const RunOptions& opt);

}  // namespace coldscatter::mcscatter
