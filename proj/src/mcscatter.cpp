#include "coldscatter/mcscatter.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

#include "coldscatter/errors.hpp"

namespace coldscatter::mcscatter {

namespace {
constexpr double kPi = 3.141592653589793238462643383279502884;
constexpr double kInf = std::numeric_limits<double>::infinity();
const cd I(0.0, 1.0);

Vector3d rotate_towards(const Vector3d& from, const Vector3d& to, const Vector3d& v) {
    const Vector3d axis = from.cross(to);
    const double s = axis.norm(), c = from.dot(to);
    if (s < 1e-15) {
        if (c > 0) return v;
        // antiparallel: rotate by pi around any axis perpendicular to `from`
        Vector3d p = from.cross(Vector3d::UnitX());
        if (p.norm() < 1e-8) p = from.cross(Vector3d::UnitY());
        return Eigen::AngleAxisd(kPi, p.normalized()) * v;
    }
    return Eigen::AngleAxisd(std::atan2(s, c), axis / s) * v;
}

Vector3cd rotate_towards(const Vector3d& from, const Vector3d& to, const Vector3cd& v) {
    return rotate_towards(from, to, Vector3d(v.real())).cast<cd>() + I * rotate_towards(from, to, Vector3d(v.imag())).cast<cd>();
}

Vector3d isotropic_direction(rng::Philox& g) {
    const double ct = 2.0 * g.uniform() - 1.0, st = std::sqrt(std::max(0.0, 1.0 - ct * ct));
    const double ph = 2.0 * kPi * g.uniform();
    return {st * std::cos(ph), st * std::sin(ph), ct};
}

// Column from -infinity to r along travel direction d.
double column_behind(const propagation::DensityProfile& p, const Vector3d& r, const Vector3d& d) {
    return p.column_to_infinity(r, -d, 0.0);
}
double column_ahead(const propagation::DensityProfile& p, const Vector3d& r, const Vector3d& d) {
    return p.column_to_infinity(r, d, 0.0);
}
}  // namespace

// ---- cloud ----------------------------------------------------------------------

void Cloud::validate() const {
    if (!profile) throw DomainError("cloud needs a density profile");
    atom.scheme.validate();
    ground.validate(atom.scheme);
    if (!(scatterer_fraction > 0.0 && scatterer_fraction <= 1.0)) throw DomainError("scatterer fraction must be in (0, 1]");
    if (gain) {
        if (!atom.control) throw DomainError("Raman gain needs a control field");
        if (!(gain_fraction >= 0.0 && gain_fraction + scatterer_fraction <= 1.0 + 1e-12))
            throw DomainError("gain fraction must be >= 0 with scatterer + gain fractions <= 1");
    }
}

double resonance_cross_section(int twice_F0, int twice_F) {
    return (twice_F + 1.0) / (twice_F0 + 1.0) * 2.0 * kPi;
}

double gaussian_n0_for_b0(double b0, double r0, double sigma0) {
    if (!(b0 >= 0.0) || !(r0 > 0.0) || !(sigma0 > 0.0)) throw DomainError("b0 >= 0, r0 > 0, sigma0 > 0 required");
    return b0 / (std::sqrt(2.0 * kPi) * sigma0 * r0);
}

const char* channel_name(Channel c) {
    switch (c) {
        case Channel::LinPar: return "lin_par";
        case Channel::LinPerp: return "lin_perp";
        case Channel::HelPar: return "hel_par";
        case Channel::HelPerp: return "hel_perp";
    }
    return "?";
}

Channel channel_from_name(const std::string& s) {
    for (Channel c : {Channel::LinPar, Channel::LinPerp, Channel::HelPar, Channel::HelPerp})
        if (s == channel_name(c)) return c;
    throw DomainError("unknown polarization channel '" + s + "'");
}

bool channel_is_helical(Channel c) { return c == Channel::HelPar || c == Channel::HelPerp; }

Vector3cd input_polarization(Channel c, const Vector3d& k_in) {
    const Eigen::Matrix3d F = medium::transverse_frame(k_in);
    if (!channel_is_helical(c)) return F.col(0).cast<cd>();
    return -(F.col(0).cast<cd>() + I * F.col(1).cast<cd>()) / std::sqrt(2.0);
}

Vector3cd analyzer(Channel c, const Vector3d& k_in, const Vector3cd& e_in, const Vector3d& k_out) {
    Vector3cd e0;
    switch (c) {
        case Channel::LinPar: e0 = e_in; break;
        case Channel::LinPerp: e0 = k_in.cast<cd>().cross(e_in); break;
        case Channel::HelPar: e0 = e_in.conjugate(); break;
        case Channel::HelPerp: e0 = e_in; break;
    }
    Vector3cd e = rotate_towards(Vector3d(-k_in), k_out.normalized(), e0);
    e -= k_out.cast<cd>() * k_out.cast<cd>().dot(e);  // numerical transversality
    return e.normalized();
}

// ---- optics cache -----------------------------------------------------------------

CloudOptics::CloudOptics(const Cloud& cloud, double omega0) : cloud_(cloud), omega0_(omega0) { cloud_.validate(); }

const CloudOptics::Data& CloudOptics::at(double freq) {
    const long long key = std::llround(freq * 1e6);
    for (const auto& [k, d] : cache_)
        if (k == key) return *d;
    auto d = std::make_unique<Data>();
    d->freq = freq;
    d->k = propagation::wavenumber(freq, omega0_);
    const auto& s = cloud_.atom.scheme;
    medium::GroundState gs = cloud_.ground;
    gs.n0 = cloud_.scatterer_fraction;
    const Matrix3cd chi_s = medium::susceptibility(cloud_.atom, gs, freq);
    Matrix3cd chi = chi_s;
    if (cloud_.gain && cloud_.gain_fraction > 0.0)
        chi += medium::raman_gain_susceptibility(cloud_.atom, *cloud_.gain, cloud_.gain_fraction, freq);
    if (cloud_.background_chi) chi += *cloud_.background_chi;
    d->chi_unit = chi;
    const cd tr = chi.trace() / 3.0;
    d->isotropic = (chi - tr * Matrix3cd::Identity()).norm() <= 1e-12 * std::max(chi.norm(), 1e-300);
    d->chi0 = tr;
    d->sigma_ref = 4.0 * kPi * (chi_s.trace().imag() / 3.0);
    if (!(d->sigma_ref > 0.0)) {
        std::ostringstream os;
        os << "scatterer extinction is not positive at detuning " << freq;
        throw DomainError(os.str());
    }
    const auto g = s.ground_sublevels();
    for (int m = 0; m < s.n_ground(); ++m) {
        const double p = gs.rho(m, m).real();
        if (p <= 1e-14) continue;
        d->m_in.push_back(m);
        d->pop.push_back(p * cloud_.scatterer_fraction);
        const auto al = medium::scattering_tensors_from(cloud_.atom, m, freq);
        double mx = 0.0;
        for (const auto& a : al) mx = std::max(mx, a.norm());
        std::vector<Transition> ts;
        for (int mo = 0; mo < static_cast<int>(al.size()); ++mo) {
            if (al[mo].norm() <= 1e-14 * mx) continue;
            const double fo = (g[mo].level == g[m].level) ? freq : medium::output_detuning(s, mo, m, freq);
            ts.push_back({mo, fo, al[mo]});
        }
        d->transitions.push_back(std::move(ts));
    }
    cache_.emplace_back(key, std::move(d));
    return *cache_.back().second;
}

Matrix3cd CloudOptics::amplitude(const Data& d, const Vector3d& dir, double column) const {
    if (d.isotropic) {
        const Eigen::Matrix3d P = Eigen::Matrix3d::Identity() - dir * dir.transpose();
        return std::exp(I * (2.0 * kPi * d.k * column) * d.chi0) * P.cast<cd>();
    }
    const auto dec = medium::transverse_decompose(d.chi_unit, dir);
    const double f = 2.0 * kPi * d.k * column;
    const Eigen::Matrix2cd X = propagation::amplitude_matrix_from_vector(f * dec.chi0, f * dec.chivec);
    const Eigen::Matrix<double, 3, 2> F2 = dec.frame.leftCols<2>();
    return F2.cast<cd>() * X * F2.transpose().cast<cd>();
}

Vector3cd CloudOptics::propagate(const Data& d, const Vector3d& dir, double column, const Vector3cd& e) const {
    if (d.isotropic) {
        const cd de = dir(0) * e(0) + dir(1) * e(1) + dir(2) * e(2);
        return std::exp(I * (2.0 * kPi * d.k * column) * d.chi0) * (e - de * dir.cast<cd>());
    }
    return amplitude(d, dir, column) * e;
}

double CloudOptics::sigma_sc(const Data& d, const Vector3cd& e) const {
    double acc = 0.0;
    for (size_t i = 0; i < d.m_in.size(); ++i) {
        double s = 0.0;
        for (const auto& t : d.transitions[i]) s += (t.alpha * e).squaredNorm();
        acc += d.pop[i] * s;
    }
    return 8.0 * kPi / 3.0 * acc;
}

// ---- sampling ----------------------------------------------------------------------

double sample_column(double sigma, double available, rng::Philox& g) {
    const double n = -std::log(g.uniform_pos()) / sigma;
    return n >= available ? kInf : n;
}

double sample_free_path(const propagation::DensityProfile& p, const Vector3d& pos, const Vector3d& dir, double sigma,
                        rng::Philox& g) {
    const double tau = -std::log(g.uniform_pos());
    return p.advance(pos, dir, 0.0, tau / sigma);
}

namespace {
// Direction from the dipole pattern |P_perp p|^2 by rejection (acceptance 2/3).
Vector3d dipole_direction(const Vector3cd& p, rng::Philox& g) {
    const double p2 = p.squaredNorm();
    for (;;) {
        const Vector3d n = isotropic_direction(g);
        const cd np = n(0) * p(0) + n(1) * p(1) + n(2) * p(2);
        if (g.uniform() * p2 <= p2 - std::norm(np)) return n;
    }
}
}  // namespace

ScatterOutcome scatter_event(const CloudOptics::Data& d, const Vector3cd& e, rng::Philox& g) {
    double total = 0.0;
    for (size_t i = 0; i < d.m_in.size(); ++i)
        for (const auto& t : d.transitions[i]) total += d.pop[i] * (t.alpha * e).squaredNorm();
    double u = g.uniform() * total;
    size_t si = 0, st = 0;
    bool found = false;
    for (size_t i = 0; i < d.m_in.size() && !found; ++i)
        for (size_t j = 0; j < d.transitions[i].size(); ++j) {
            const double w = d.pop[i] * (d.transitions[i][j].alpha * e).squaredNorm();
            si = i;
            st = j;
            if (u < w) {
                found = true;
                break;
            }
            u -= w;
        }
    const auto& t = d.transitions[si][st];
    const Vector3cd p = t.alpha * e;
    ScatterOutcome o;
    o.direction = dipole_direction(p, g);
    const cd np = o.direction.cast<cd>().transpose() * p;
    o.polarization = (p - o.direction.cast<cd>() * np).normalized();
    o.m_in = d.m_in[si];
    o.m_out = t.m_out;
    o.freq_out = t.freq_out;
    o.alpha = &t.alpha;
    return o;
}

namespace {
const Matrix3cd* find_alpha(const CloudOptics::Data& d, int m_in, int m_out) {
    for (size_t i = 0; i < d.m_in.size(); ++i)
        if (d.m_in[i] == m_in)
            for (const auto& t : d.transitions[i])
                if (t.m_out == m_out) return &t.alpha;
    return nullptr;
}

const Matrix3cd& alpha_or_zero(const CloudOptics::Data& d, int m_in, int m_out) {
    static const Matrix3cd zero = Matrix3cd::Zero();
    const Matrix3cd* a = find_alpha(d, m_in, m_out);
    return a ? *a : zero;
}

struct Vertex {
    Vector3d r;
    int m_in, m_out;
    double f_in, f_out;
};

// Reverse-path vector before the exit from the first atom, from scratch. `prev` holds the
// vertices before the last one (at rn), whose transition is last_in -> last_out.
// Returns the vector after alpha_1 and the frequency leaving atom 1.
std::pair<Vector3cd, double> reverse_from_scratch(CloudOptics& optics, const std::vector<Vertex>& prev,
                                                  const Vector3d& rn, int last_in, int last_out, double f_in,
                                                  const Vector3d& k_in, const Vector3cd& e_in) {
    const auto& prof = *optics.cloud().profile;
    const auto& s = optics.cloud().atom.scheme;
    const auto gl = s.ground_sublevels();
    auto shift = [&](int mi, int mo, double f) {
        return gl[mi].level == gl[mo].level ? f : medium::output_detuning(s, mo, mi, f);
    };
    double f = f_in;
    const auto& d0 = optics.at(f);
    Vector3cd v = optics.propagate(d0, k_in, column_behind(prof, rn, k_in), e_in);
    v = alpha_or_zero(d0, last_in, last_out) * v;
    f = shift(last_in, last_out, f);
    const int np = static_cast<int>(prev.size());
    for (int i = np - 1; i >= 0; --i) {
        const Vector3d& from = (i == np - 1) ? rn : prev[i + 1].r;
        const Vector3d seg = prev[i].r - from;
        const double len = seg.norm();
        const Vector3d dir = seg / len;
        const double col = prof.column(from, dir, 0.0, len);
        const auto& di = optics.at(f);
        v = optics.propagate(di, dir, col, v);
        v = alpha_or_zero(di, prev[i].m_in, prev[i].m_out) * v;
        f = shift(prev[i].m_in, prev[i].m_out, f);
    }
    return {v, f};
}
}  // namespace

ChainAmplitudes chain_amplitudes(CloudOptics& optics, const ScatterChain& chain, const Vector3d& k_out,
                                 const Vector3cd& e_det) {
    if (chain.events.empty()) throw DomainError("empty chain");
    const auto& prof = *optics.cloud().profile;
    const int n = static_cast<int>(chain.events.size());
    // direct
    const auto& d0 = optics.at(chain.events[0].freq_in);
    Vector3cd a = optics.propagate(d0, chain.k_in, column_behind(prof, chain.events[0].position, chain.k_in), chain.e_in);
    for (int i = 0; i < n; ++i) {
        const auto& ev = chain.events[i];
        a = alpha_or_zero(optics.at(ev.freq_in), ev.m_in, ev.m_out) * a;
        if (i + 1 < n) {
            const Vector3d seg = chain.events[i + 1].position - ev.position;
            const double len = seg.norm();
            a = optics.propagate(optics.at(ev.freq_out), seg / len, prof.column(ev.position, seg / len, 0.0, len), a);
        }
    }
    const auto& last = chain.events.back();
    const auto& dx = optics.at(last.freq_out);
    const Vector3cd out = optics.amplitude(dx, k_out, column_ahead(prof, last.position, k_out)) * a;
    ChainAmplitudes r;
    r.direct = e_det.dot(out);
    // reverse
    std::vector<Vertex> ch;
    for (int i = 0; i + 1 < n; ++i) {
        const auto& ev = chain.events[i];
        ch.push_back({ev.position, ev.m_in, ev.m_out, ev.freq_in, ev.freq_out});
    }
    auto [v, f] = reverse_from_scratch(optics, ch, last.position, last.m_in, last.m_out, chain.events[0].freq_in,
                                       chain.k_in, chain.e_in);
    const auto& df = optics.at(f);
    const Vector3cd outr = optics.amplitude(df, k_out, column_ahead(prof, chain.events[0].position, k_out)) * v;
    const double phase = optics.at(chain.events[0].freq_in).k *
                         (chain.k_in + k_out).dot(last.position - chain.events[0].position);
    r.reverse = e_det.dot(outr) * std::exp(I * phase);
    return r;
}

// ---- engine ------------------------------------------------------------------------

namespace {

struct Detector {
    Vector3d dir;
    int bin;
    std::vector<Vector3cd> analyzers;  // per channel
};

struct Accum {
    int C = 0, B = 0, K = 0;
    std::vector<double> S, S2, L, L2, X, X2;                // [c][b]
    std::vector<double> num, den, num2, den2, numden;      // eta with single
    std::vector<double> numM, denM, numM2, denM2, numdenM; // eta multi
    std::vector<double> Lk, Lk2, Xk;                       // [c][b][k]
    std::vector<double> esc, esc2;                         // [k]
    std::vector<double> flux, flux2, path, path2;          // [radius]
    double injected = 0, escaped = 0, absorbed = 0, truncated = 0;
    double wsum = 0, wcount = 0;
    std::uint64_t n = 0, trunc_n = 0, overflow_n = 0;
    std::vector<ScatterChain> chains;

    void init(int c, int b, int k, int nr = 0) {
        for (auto* v : {&flux, &flux2, &path, &path2}) v->assign(static_cast<size_t>(nr), 0.0);
        C = c;
        B = b;
        K = k;
        for (auto* v : {&S, &S2, &L, &L2, &X, &X2, &num, &den, &num2, &den2, &numden, &numM, &denM, &numM2, &denM2, &numdenM})
            v->assign(static_cast<size_t>(C * B), 0.0);
        for (auto* v : {&Lk, &Lk2, &Xk}) v->assign(static_cast<size_t>(C * B * K), 0.0);
        esc.assign(static_cast<size_t>(K + 1), 0.0);
        esc2.assign(static_cast<size_t>(K + 1), 0.0);
    }
    void merge(const Accum& o) {
        auto add = [](std::vector<double>& a, const std::vector<double>& b) {
            for (size_t i = 0; i < a.size(); ++i) a[i] += b[i];
        };
        add(S, o.S); add(S2, o.S2); add(L, o.L); add(L2, o.L2); add(X, o.X); add(X2, o.X2);
        add(num, o.num); add(den, o.den); add(num2, o.num2); add(den2, o.den2); add(numden, o.numden);
        add(numM, o.numM); add(denM, o.denM); add(numM2, o.numM2); add(denM2, o.denM2); add(numdenM, o.numdenM);
        add(Lk, o.Lk); add(Lk2, o.Lk2); add(Xk, o.Xk); add(esc, o.esc); add(esc2, o.esc2);
        add(flux, o.flux); add(flux2, o.flux2); add(path, o.path); add(path2, o.path2);
        injected += o.injected; escaped += o.escaped; absorbed += o.absorbed; truncated += o.truncated;
        wsum += o.wsum; wcount += o.wcount;
        n += o.n; trunc_n += o.trunc_n; overflow_n += o.overflow_n;
        for (const auto& c : o.chains) chains.push_back(c);
    }
};

struct Setup {
    McConfig cfg;
    bool crossed = true;
    bool scratch = false;
    Vector3cd e_in;
    std::vector<Detector> detectors;
    int bins = 0;
    std::vector<int> per_bin;  // detectors per bin
    double beam_radius = 0.0;
    Vector3d beam_center = Vector3d::Zero();
    double start_back = 0.0;
};

Setup make_setup(const McConfig& cfg, bool crossed) {
    Setup s;
    s.cfg = cfg;
    s.crossed = crossed && cfg.source == SourceMode::Beam;
    cfg.cloud.validate();
    if (cfg.channels.empty()) throw DomainError("at least one polarization channel is required");
    for (Channel c : cfg.channels)
        if (channel_is_helical(c) != channel_is_helical(cfg.channels[0]))
            throw DomainError("linear and helical channels need separate runs (different input polarization)");
    if (cfg.max_order < 1) throw DomainError("max_order must be >= 1");
    if (cfg.n_phi < 1) throw DomainError("n_phi must be >= 1");
    if (cfg.instability_min_order < 0 || !(cfg.instability_z >= 0.0))
        throw DomainError("instability_min_order and instability_z must be >= 0");
    for (size_t i = 0; i < cfg.tally_radii.size(); ++i)
        if (!(cfg.tally_radii[i] > 0.0) || (i > 0 && !(cfg.tally_radii[i] > cfg.tally_radii[i - 1])))
            throw DomainError("tally radii must be positive and increasing");
    s.cfg.k_in = cfg.k_in.normalized();
    s.e_in = input_polarization(cfg.channels[0], s.cfg.k_in);
    const Eigen::Matrix3d F = medium::transverse_frame(s.cfg.k_in);
    s.bins = static_cast<int>(cfg.theta.size());
    s.per_bin.assign(s.bins, 0);
    for (int b = 0; b < s.bins; ++b) {
        const double th = cfg.theta[b];
        if (!(th >= 0.0 && th <= kPi)) throw DomainError("detection angles must lie in [0, pi]");
        const int nphi = th == 0.0 ? 1 : cfg.n_phi;
        for (int j = 0; j < nphi; ++j) {
            const double ph = 2.0 * kPi * j / nphi;
            Detector d;
            d.dir = (-std::cos(th) * s.cfg.k_in + std::sin(th) * (std::cos(ph) * F.col(0) + std::sin(ph) * F.col(1))).normalized();
            d.bin = b;
            for (Channel c : cfg.channels) d.analyzers.push_back(analyzer(c, s.cfg.k_in, s.e_in, d.dir));
            s.detectors.push_back(d);
            ++s.per_bin[b];
        }
    }
    const auto* gp = dynamic_cast<const propagation::GaussianProfile*>(cfg.cloud.profile.get());
    s.beam_radius = cfg.beam_radius > 0.0 ? cfg.beam_radius : (gp ? 4.0 * gp->r0() : cfg.cloud.profile->extent());
    if (dynamic_cast<const propagation::SlabProfile*>(cfg.cloud.profile.get()) && !(cfg.beam_radius > 0.0)) s.beam_radius = 1.0;
    s.start_back = cfg.cloud.profile->extent() + 1.0;
    return s;
}

class Worker {
public:
    Worker(const Setup& s) : s_(s), optics_(s.cfg.cloud, s.cfg.omega0), prof_(*s.cfg.cloud.profile) {
        const int C = static_cast<int>(s.cfg.channels.size());
        tS_.assign(C * s.bins, 0.0);
        tL_.assign(C * s.bins, 0.0);
        tX_.assign(C * s.bins, 0.0);
        tF_.assign(s.cfg.tally_radii.size(), 0.0);
        tP_.assign(s.cfg.tally_radii.size(), 0.0);
    }

    void run_chunk(std::uint64_t first, std::uint64_t count, Accum& acc, int record_limit) {
        for (std::uint64_t t = first; t < first + count; ++t) trajectory(t, acc, record_limit);
    }

private:
    const Setup& s_;
    CloudOptics optics_;
    const propagation::DensityProfile& prof_;
    std::vector<double> tS_, tL_, tX_, tF_, tP_;
    std::vector<Vertex> chain_;

    int C() const { return static_cast<int>(s_.cfg.channels.size()); }

    void trajectory(std::uint64_t t, Accum& acc, int record_limit) {
        rng::Philox g(acc_seed_, t);
        std::fill(tS_.begin(), tS_.end(), 0.0);
        std::fill(tL_.begin(), tL_.end(), 0.0);
        std::fill(tX_.begin(), tX_.end(), 0.0);
        std::fill(tF_.begin(), tF_.end(), 0.0);
        std::fill(tP_.begin(), tP_.end(), 0.0);
        chain_.clear();
        ++acc.n;
        const bool record = static_cast<int>(acc.chains.size()) < record_limit && record_limit > 0;
        ScatterChain rec;

        const auto& cfg = s_.cfg;
        const Vector3d kin = cfg.k_in;
        double f = cfg.detuning;
        Vector3d r, dir;
        Vector3cd ahat;      // normalized propagated amplitude (with phase)
        double w = 0.0;      // weight arriving at the current vertex (beam) or emitted (volume)
        int order = 0;

        if (cfg.source == SourceMode::Beam) {
            const Eigen::Matrix3d F = medium::transverse_frame(kin);
            const double rad = s_.beam_radius * std::sqrt(g.uniform()), ph = 2.0 * kPi * g.uniform();
            const Vector3d p0 = s_.beam_center - s_.start_back * kin + rad * (std::cos(ph) * F.col(0) + std::sin(ph) * F.col(1));
            const double area = kPi * s_.beam_radius * s_.beam_radius;
            const double ntot = column_ahead(prof_, p0, kin);
            const auto& d = optics_.at(f);
            const double tau_tot = d.sigma_ref * ntot;
            if (!(tau_tot > 0.0)) {
                flush(acc);
                return;
            }
            const double frac = -std::expm1(-tau_tot);
            const double tau = -std::log1p(-g.uniform() * frac);
            const double ncol = tau / d.sigma_ref;
            double sx = prof_.advance(p0, kin, 0.0, ncol);
            if (!std::isfinite(sx)) sx = prof_.advance(p0, kin, 0.0, ncol * (1 - 1e-12));
            r = p0 + sx * kin;
            dir = kin;
            const Vector3cd E = optics_.propagate(d, kin, ncol, s_.e_in);
            const double inten = E.squaredNorm();
            const Vector3cd exit = optics_.propagate(d, kin, ntot, s_.e_in);
            acc.injected += area * (1.0 - exit.squaredNorm());
            ahat = E / std::sqrt(inten);
            const double sig = optics_.sigma_sc(d, ahat);
            const double W = sig / d.sigma_ref * std::exp(std::log(inten) + tau);
            acc.absorbed += area * frac * std::exp(std::log(inten) + tau) / d.sigma_ref *
                            (scat_extinction(d, ahat) - sig);
            w = area * frac * W;
            acc.wsum += W;
            acc.wcount += 1;
            order = 1;
            loga_ = 0.5 * std::log(inten);
            if (record) {
                rec.entry_point = p0;
                rec.k_in = kin;
                rec.e_in = s_.e_in;
            }
        } else {
            r = cfg.source == SourceMode::Point ? Vector3d::Zero() : prof_.sample_point(g.uniform(), g.uniform(), g.uniform());
            dir = isotropic_direction(g);
            Vector3cd e(cd(g.normal(), g.normal()), cd(g.normal(), g.normal()), cd(g.normal(), g.normal()));
            e -= dir.cast<cd>() * dir.cast<cd>().dot(e);
            ahat = e.normalized();
            acc.injected += 1.0;
            w = 1.0;
            order = 0;
            loga_ = 0.0;
            // free flight from the source
            if (!fly(acc, g, r, dir, ahat, w, f, order)) {
                flush(acc);
                return;
            }
        }

        // vertices
        bool elastic = true;
        Matrix3cd Bhat = Matrix3cd::Identity();
        double logb = 0.0;
        for (;;) {
            const auto& d = optics_.at(f);
            const double sig = optics_.sigma_sc(d, ahat);
            if (!s_.detectors.empty()) peel(d, r, ahat, w / sig, order, elastic, Bhat, logb);
            // scatter
            const ScatterOutcome o = scatter_event(d, ahat, g);
            chain_.push_back({r, o.m_in, o.m_out, f, o.freq_out});
            if (record) rec.events.push_back({r, o.m_in, o.m_out, f, o.freq_out, *o.alpha});
            const Vector3cd p = (*o.alpha) * ahat;
            const Vector3cd pt = p - o.direction.cast<cd>() * (o.direction.cast<cd>().transpose() * p)(0);
            loga_ += std::log(pt.norm());
            Vector3cd e = pt / pt.norm();
            if (o.freq_out != d.freq) elastic = false;
            const double f_new = o.freq_out;
            if (order >= cfg.max_order) {
                acc.truncated += w;
                ++acc.trunc_n;
                break;
            }
            // free flight to the next vertex
            const Vector3d r_old = r;
            Vector3d ndir = o.direction;
            double fl = f_new;
            Vector3cd ehat = e;
            if (!fly(acc, g, r, ndir, ehat, w, fl, order)) {
                if (record) rec.exit_direction = ndir;
                break;
            }
            // incremental reverse product for elastic chains: B <- B alpha X(r_new -> r_old)
            if (s_.crossed && elastic && !s_.scratch) {
                const Vector3d back = r_old - r;
                const double len = back.norm();
                const Matrix3cd Xr = optics_.amplitude(optics_.at(f_new), back / len, lastcol_);
                Matrix3cd nb = (order == 2) ? Xr : Matrix3cd(Bhat * (*o.alpha) * Xr);
                const double nn = nb.norm();
                if (nn > 0.0) {
                    logb = (order == 2 ? 0.0 : logb) + std::log(nn);
                    Bhat = nb / nn;
                } else {
                    elastic = false;
                }
            }
            ahat = ehat;
            dir = ndir;
            f = fl;
            if (w > cfg.weight_cap || !std::isfinite(w)) {
                acc.truncated += std::isfinite(w) ? w : 0.0;
                ++acc.overflow_n;
                ++acc.trunc_n;
                break;
            }
        }
        if (record) {
            rec.weight = w;
            acc.chains.push_back(std::move(rec));
        }
        flush(acc);
    }

public:
    std::uint64_t acc_seed_ = 1;

private:
    double loga_ = 0.0;
    double lastcol_ = 0.0;

    double scat_extinction(const CloudOptics::Data& d, const Vector3cd& e) const {
        double acc = 0.0;
        // optical theorem per populated sublevel: 4 pi Im(e^dag alpha^{(mm)} e)
        for (size_t i = 0; i < d.m_in.size(); ++i)
            for (const auto& t : d.transitions[i])
                if (t.m_out == d.m_in[i]) acc += d.pop[i] * (e.dot(t.alpha * e)).imag();
        return 4.0 * kPi * acc;
    }

    // Advances from r along dir with normalized field e. Returns false on escape (weight booked).
    // On success r, e (arriving, normalized), w (arrival weight), f and order are updated.
    bool fly(Accum& acc, rng::Philox& g, Vector3d& r, Vector3d& dir, Vector3cd& e, double& w, double& f, int& order) {
        const auto& d = optics_.at(f);
        const double avail = column_ahead(prof_, r, dir);
        const double ncol = sample_column(d.sigma_ref, avail, g);
        double sx = kInf;
        if (std::isfinite(ncol)) {
            sx = prof_.advance(r, dir, 0.0, ncol);
            if (!std::isfinite(sx)) sx = prof_.advance(r, dir, 0.0, ncol * (1 - 1e-12));
        }
        if (!tF_.empty()) tally(d, r, dir, e, w, sx);
        if (!std::isfinite(ncol)) {
            const Vector3cd ex = optics_.propagate(d, dir, avail, e);
            const double we = w * ex.squaredNorm() * std::exp(d.sigma_ref * avail);
            acc.escaped += we;
            acc.esc[order] += we;
            acc.esc2[order] += we * we;
            return false;
        }
        const Vector3cd E = optics_.propagate(d, dir, ncol, e);
        const double inten = E.squaredNorm();
        const Vector3cd eh = E / std::sqrt(inten);
        const double sig = optics_.sigma_sc(d, eh);
        const double base = std::exp(std::log(inten) + d.sigma_ref * ncol) / d.sigma_ref;
        acc.absorbed += w * base * (scat_extinction(d, eh) - sig);
        const double W = base * sig;
        acc.wsum += W;
        acc.wcount += 1;
        w *= W;
        loga_ += 0.5 * std::log(inten);
        lastcol_ = ncol;
        r = r + sx * dir;
        e = eh;
        ++order;
        return true;
    }

    // Flight weight at distance s along the ray.
    double flight_weight(const CloudOptics::Data& d, const Vector3d& r, const Vector3d& dir, const Vector3cd& e,
                         double w, double s) const {
        const double n = prof_.column(r, dir, 0.0, s);
        return w * optics_.propagate(d, dir, n, e).squaredNorm() * std::exp(d.sigma_ref * n);
    }

    void tally(const CloudOptics::Data& d, const Vector3d& r, const Vector3d& dir, const Vector3cd& e, double w,
               double smax) {
        const auto& R = s_.cfg.tally_radii;
        const double b = r.dot(dir), rr = r.squaredNorm();
        double inside_prev = 0.0;
        for (size_t j = 0; j < R.size(); ++j) {
            const double disc = b * b - (rr - R[j] * R[j]);
            double inside = 0.0;
            if (disc > 0.0) {
                const double q = std::sqrt(disc);
                const double s0 = -b - q, s1 = -b + q;
                if (s0 > 0.0 && s0 < smax) tF_[j] -= flight_weight(d, r, dir, e, w, s0);
                if (s1 > 0.0 && s1 < smax) tF_[j] += flight_weight(d, r, dir, e, w, s1);
                const double a0 = std::max(s0, 0.0), a1 = std::min(s1, smax);
                if (a1 > a0) inside = (a1 - a0) * flight_weight(d, r, dir, e, w, 0.5 * (a0 + a1));
            }
            tP_[j] += inside - inside_prev;
            inside_prev = inside;
        }
    }

    struct PeelTerm {
        double pop;
        const CloudOptics::Data* out;
        Vector3cd v;        // alpha a_hat (direct, before the exit)
        Vector3cd vr;       // reverse path before the exit from atom 1, scaled by 1/|a_n|
        const CloudOptics::Data* out_rev;
    };
    std::vector<PeelTerm> terms_;

    // Next-event estimation toward every detector; crossed terms from the reverse path.
    void peel(const CloudOptics::Data& d, const Vector3d& r, const Vector3cd& ahat, double wfac, int order,
              bool elastic, const Matrix3cd& Bhat, double logb) {
        const int Cn = C();
        const auto& cfg = s_.cfg;
        const bool do_cross = s_.crossed && order >= 2;
        const double damp = std::exp(-cfg.order_phase_damping * (order - 1));
        const int K = cfg.max_order;
        const Vector3d kin = cfg.k_in;
        Vector3d r1 = r;
        terms_.clear();
        if (do_cross) {
            const auto& c1 = chain_.front();
            r1 = c1.r;
            const auto& din = optics_.at(c1.f_in);
            const Vector3cd entry = optics_.propagate(din, kin, column_behind(prof_, r, kin), s_.e_in);
            const Matrix3cd& a1 = alpha_or_zero(din, c1.m_in, c1.m_out);
            const Matrix3cd M = a1 * Bhat * std::exp(logb - loga_);
            for (size_t i = 0; i < d.m_in.size(); ++i)
                for (const auto& t : d.transitions[i]) {
                    PeelTerm pt{d.pop[i], &optics_.at(t.freq_out), t.alpha * ahat, Vector3cd::Zero(), nullptr};
                    if (elastic && !s_.scratch && t.freq_out == d.freq) {
                        pt.vr = M * (t.alpha * entry);
                        pt.out_rev = pt.out;
                    } else {
                        auto [vv, fx] = reverse_from_scratch(optics_, chain_, r, d.m_in[i], t.m_out, chain_.front().f_in, kin, s_.e_in);
                        pt.vr = vv * std::exp(-loga_);
                        pt.out_rev = &optics_.at(fx);
                    }
                    terms_.push_back(pt);
                }
        } else {
            for (size_t i = 0; i < d.m_in.size(); ++i)
                for (const auto& t : d.transitions[i])
                    terms_.push_back({d.pop[i], &optics_.at(t.freq_out), t.alpha * ahat, Vector3cd::Zero(), nullptr});
        }
        const double k0 = optics_.at(cfg.detuning).k;
        for (const auto& det : s_.detectors) {
            const double col_out = column_ahead(prof_, r, det.dir);
            const double col_out1 = do_cross ? column_ahead(prof_, r1, det.dir) : 0.0;
            const cd ph = do_cross ? std::exp(I * (k0 * (kin + det.dir).dot(r - r1))) : cd(1.0);
            const double scale = 1.0 / s_.per_bin[det.bin];
            std::array<double, 4> lad{}, crs{};
            for (const auto& pt : terms_) {
                const Vector3cd v = optics_.propagate(*pt.out, det.dir, col_out, pt.v);
                Vector3cd vr;
                if (do_cross) vr = optics_.propagate(*pt.out_rev, det.dir, col_out1, pt.vr) * ph;
                for (int c = 0; c < Cn; ++c) {
                    const cd dir_amp = det.analyzers[c].dot(v);
                    lad[c] += pt.pop * std::norm(dir_amp);
                    if (do_cross) crs[c] += pt.pop * (std::conj(dir_amp) * det.analyzers[c].dot(vr)).real();
                }
            }
            for (int c = 0; c < Cn; ++c) {
                const int idx = c * s_.bins + det.bin;
                const double l = wfac * lad[c] * scale;
                const double x = wfac * crs[c] * scale * damp;
                if (order == 1)
                    tS_[idx] += l;
                else
                    tL_[idx] += l;
                tX_[idx] += x;
                const size_t kk = static_cast<size_t>(idx) * K + (order - 1);
                pend_L_.push_back({kk, l});
                pend_X_.push_back({kk, x});
            }
        }
    }

    std::vector<std::pair<size_t, double>> pend_L_, pend_X_;

    void flush(Accum& acc) {
        // per-order contributions: combine entries of the same slot before squaring
        std::sort(pend_L_.begin(), pend_L_.end());
        for (size_t i = 0; i < pend_L_.size();) {
            size_t j = i;
            double s = 0.0;
            while (j < pend_L_.size() && pend_L_[j].first == pend_L_[i].first) s += pend_L_[j++].second;
            acc.Lk[pend_L_[i].first] += s;
            acc.Lk2[pend_L_[i].first] += s * s;
            i = j;
        }
        for (const auto& [k, v] : pend_X_) acc.Xk[k] += v;
        pend_L_.clear();
        pend_X_.clear();
        for (size_t j = 0; j < tF_.size(); ++j) {
            acc.flux[j] += tF_[j];
            acc.flux2[j] += tF_[j] * tF_[j];
            acc.path[j] += tP_[j];
            acc.path2[j] += tP_[j] * tP_[j];
        }
        for (size_t i = 0; i < tS_.size(); ++i) {
            const double S = tS_[i], L = tL_[i], X = tX_[i];
            acc.S[i] += S;
            acc.S2[i] += S * S;
            acc.L[i] += L;
            acc.L2[i] += L * L;
            acc.X[i] += X;
            acc.X2[i] += X * X;
            const double nu = S + L + X, de = S + L;
            acc.num[i] += nu;
            acc.den[i] += de;
            acc.num2[i] += nu * nu;
            acc.den2[i] += de * de;
            acc.numden[i] += nu * de;
            const double nm = L + X;
            acc.numM[i] += nm;
            acc.denM[i] += L;
            acc.numM2[i] += nm * nm;
            acc.denM2[i] += L * L;
            acc.numdenM[i] += nm * L;
        }
    }
};

double mean_err(double s, double s2, double n) {
    if (n < 2) return 0.0;
    const double m = s / n;
    const double var = std::max(0.0, (s2 / n - m * m)) * n / (n - 1);
    return std::sqrt(var / n);
}

// Ratio estimator sum(x)/sum(y) with delta-method standard error.
std::pair<double, double> ratio(double sx, double sy, double sxx, double syy, double sxy, double n) {
    if (!(sy > 0.0)) return {1.0, 0.0};
    const double r = sx / sy;
    if (n < 2) return {r, 0.0};
    const double ybar = sy / n;
    const double s2 = std::max(0.0, (sxx - 2 * r * sxy + r * r * syy) / (n - 1));
    return {r, std::sqrt(s2 / n) / ybar};
}

McResult finalize(const Setup& s, Accum& a) {
    McResult r;
    const auto& cfg = s.cfg;
    const double n = static_cast<double>(a.n);
    r.trajectories = a.n;
    r.theta = cfg.theta;
    const int K = cfg.max_order;
    bool any_multi = false;
    for (int c = 0; c < static_cast<int>(cfg.channels.size()); ++c) {
        ChannelResult cr;
        cr.channel = cfg.channels[c];
        for (int b = 0; b < s.bins; ++b) {
            const int i = c * s.bins + b;
            cr.single.push_back(a.S[i] / n);
            cr.ladder.push_back(a.L[i] / n);
            cr.crossed.push_back(a.X[i] / n);
            cr.single_err.push_back(mean_err(a.S[i], a.S2[i], n));
            cr.ladder_err.push_back(mean_err(a.L[i], a.L2[i], n));
            cr.crossed_err.push_back(mean_err(a.X[i], a.X2[i], n));
            auto e1 = ratio(a.num[i], a.den[i], a.num2[i], a.den2[i], a.numden[i], n);
            auto e2 = ratio(a.numM[i], a.denM[i], a.numM2[i], a.denM2[i], a.numdenM[i], n);
            if (a.L[i] > 0.0) any_multi = true;
            cr.eta.push_back(e1.first);
            cr.eta_err.push_back(e1.second);
            cr.eta_multi.push_back(e2.first);
            cr.eta_multi_err.push_back(e2.second);
            std::vector<double> lk(K), xk(K), lke(K);
            for (int k = 0; k < K; ++k) {
                const size_t kk = static_cast<size_t>(i) * K + k;
                lk[k] = a.Lk[kk] / n;
                xk[k] = a.Xk[kk] / n;
                lke[k] = mean_err(a.Lk[kk], a.Lk2[kk], n);
            }
            cr.ladder_by_order.push_back(lk);
            cr.crossed_by_order.push_back(xk);
            cr.ladder_by_order_err.push_back(lke);
        }
        r.channels.push_back(std::move(cr));
    }
    if (s.crossed && s.bins > 0 && !any_multi) r.warnings.push_back("no multiple-scattering contributions: eta set to 1");
    r.injected = a.injected / n;
    r.escaped = a.escaped / n;
    r.absorbed = a.absorbed / n;
    r.truncated = a.truncated / n;
    r.truncated_trajectories = a.trunc_n;
    r.overflow_trajectories = a.overflow_n;
    for (int k = 0; k <= K; ++k) {
        r.escaped_by_order.push_back(a.esc[k] / n);
        r.escaped_by_order_err.push_back(mean_err(a.esc[k], a.esc2[k], n));
    }
    r.mean_free_path_gain = a.wcount > 0 ? a.wsum / a.wcount : 0.0;
    for (size_t j = 0; j < a.flux.size(); ++j) {
        r.radial_flux.push_back(a.flux[j] / n);
        r.radial_flux_err.push_back(mean_err(a.flux[j], a.flux2[j], n));
        r.shell_path.push_back(a.path[j] / n);
        r.shell_path_err.push_back(mean_err(a.path[j], a.path2[j], n));
    }
    // tail growth: weighted fit of ln I_k against k
    {
        double sw = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
        for (int k = std::max(cfg.instability_min_order, 1); k <= K; ++k) {
            const double v = r.escaped_by_order[k], e = r.escaped_by_order_err[k];
            if (!(v > 0.0) || !(e > 0.0) || e >= 0.5 * v) continue;
            const double w = (v / e) * (v / e), y = std::log(v);
            sw += w, sx += w * k, sy += w * y, sxx += w * k * k, sxy += w * k * y;
        }
        const double det = sw * sxx - sx * sx;
        if (sw > 0 && det > 1e-12 * sw * sxx) {
            r.tail_growth = (sw * sxy - sx * sy) / det;
            r.tail_growth_err = std::sqrt(sw / det);
        }
    }
    // instability: the fitted tail grows by more than z standard errors
    if (r.tail_growth_err > 0.0 && r.tail_growth > cfg.instability_z * r.tail_growth_err) {
        r.instability = true;
        int kmin = std::max(cfg.instability_min_order, 1);
        for (int k = kmin; k <= K; ++k)
            if (r.escaped_by_order[k] > 0.0 && r.escaped_by_order[k] < r.escaped_by_order[kmin]) kmin = k;
        r.instability_order = kmin;
    }
    if (a.overflow_n > 0) {
        r.instability = true;
        r.warnings.push_back("weight overflow: trajectories truncated");
        if (r.instability_order < 0) r.instability_order = K;
    }
    if (a.trunc_n > 0 && a.overflow_n == 0)
        r.warnings.push_back(std::to_string(a.trunc_n) + " trajectories reached max_order");
    r.chains = std::move(a.chains);
    return r;
}

McResult run_engine(const McConfig& cfg, const RunOptions& opt, bool crossed) {
    Setup s = make_setup(cfg, crossed);
    s.scratch = opt.scratch_reverse;
    if (opt.trajectories == 0) throw DomainError("trajectory count must be positive");
    const std::uint64_t chunk = std::max<std::uint64_t>(1, opt.chunk);
    const std::uint64_t nchunks = (opt.trajectories + chunk - 1) / chunk;
    const int C = static_cast<int>(cfg.channels.size());
    std::vector<Accum> parts(nchunks);
    std::atomic<std::uint64_t> next{0};
    std::mutex err_mu;
    std::exception_ptr err;
    auto work = [&]() {
        try {
            Worker w(s);
            w.acc_seed_ = opt.seed;
            for (;;) {
                const std::uint64_t c = next.fetch_add(1);
                if (c >= nchunks) break;
                Accum& a = parts[c];
                a.init(C, s.bins, cfg.max_order, static_cast<int>(cfg.tally_radii.size()));
                const std::uint64_t first = c * chunk;
                const std::uint64_t cnt = std::min(chunk, opt.trajectories - first);
                const int rec = (c == 0) ? opt.record_chains : 0;
                w.run_chunk(first, cnt, a, rec);
            }
        } catch (...) {
            std::lock_guard<std::mutex> lk(err_mu);
            if (!err) err = std::current_exception();
            next.store(nchunks);
        }
    };
    const int nw = std::max(1, std::min<int>(opt.workers, static_cast<int>(nchunks)));
    if (nw == 1) {
        work();
    } else {
        std::vector<std::thread> th;
        for (int i = 0; i < nw; ++i) th.emplace_back(work);
        for (auto& t : th) t.join();
    }
    if (err) std::rethrow_exception(err);
    Accum total;
    total.init(C, s.bins, cfg.max_order, static_cast<int>(cfg.tally_radii.size()));
    for (const auto& p : parts) total.merge(p);
    return finalize(s, total);
}

}  // namespace

McResult run(const McConfig& cfg, const RunOptions& opt) { return run_engine(cfg, opt, true); }
McResult simulate_ladder(const McConfig& cfg, const RunOptions& opt) { return run_engine(cfg, opt, false); }
McResult cbs_enhancement(const McConfig& cfg, const RunOptions& opt) {
    if (cfg.source != SourceMode::Beam) throw DomainError("coherent backscattering needs the beam source");
    if (cfg.theta.empty()) throw DomainError("coherent backscattering needs a theta grid");
    return run_engine(cfg, opt, true);
}
McResult gain_transport(const McConfig& cfg, const RunOptions& opt) { return run_engine(cfg, opt, false); }

}  // namespace coldscatter::mcscatter
