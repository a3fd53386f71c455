#include "coldscatter/angular.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <mutex>
#include <shared_mutex>
#include <sstream>
#include <unordered_map>

#include "coldscatter/errors.hpp"

namespace coldscatter::angular {

namespace {

constexpr int kMaxFactorial = 400;

const std::array<double, kMaxFactorial + 1>& log_factorials() {
    static const auto table = [] {
        std::array<double, kMaxFactorial + 1> t{};
        for (int n = 0; n <= kMaxFactorial; ++n) t[n] = std::lgamma(n + 1.0);
        return t;
    }();
    return table;
}

double lf(int n) {
    if (n < 0 || n > kMaxFactorial) throw DomainError("factorial argument out of range: " + std::to_string(n));
    return log_factorials()[n];
}

// twice-values -> integer value, requires the sum to be even
int half(int twice) { return twice / 2; }

double log_delta(int a, int b, int c) {  // twice-values
    return 0.5 * (lf(half(a + b - c)) + lf(half(a - b + c)) + lf(half(-a + b + c)) - lf(half(a + b + c) + 1));
}

bool tri2(int a, int b, int c) {
    return a >= 0 && b >= 0 && c >= 0 && c <= a + b && c >= std::abs(a - b) && ((a + b + c) % 2 == 0);
}

struct Cache {
    std::unordered_map<std::uint64_t, double> map;
    std::shared_mutex mutex;

    template <class F>
    double get(std::uint64_t key, F&& compute) {
        {
            std::shared_lock lock(mutex);
            auto it = map.find(key);
            if (it != map.end()) return it->second;
        }
        double v = compute();
        std::unique_lock lock(mutex);
        map.emplace(key, v);
        return v;
    }
};

std::uint64_t pack(std::initializer_list<int> vals) {
    std::uint64_t k = 0;
    for (int v : vals) k = (k << 10) | static_cast<std::uint64_t>((v + 512) & 0x3ff);
    return k;
}

void check_range(int twice) {
    if (std::abs(twice) > 200) throw DomainError("angular momentum too large");
}

double cg_raw(int j1, int m1, int j2, int m2, int J, int M) {
    if (m1 + m2 != M) return 0.0;
    if (!tri2(j1, j2, J)) return 0.0;
    if (std::abs(m1) > j1 || std::abs(m2) > j2 || std::abs(M) > J) return 0.0;
    if ((j1 + m1) % 2 || (j2 + m2) % 2 || (J + M) % 2) return 0.0;

    const double pre = 0.5 * (std::log(J + 1.0) + lf(half(J + j1 - j2)) + lf(half(J - j1 + j2)) +
                              lf(half(j1 + j2 - J)) - lf(half(j1 + j2 + J) + 1) + lf(half(J + M)) +
                              lf(half(J - M)) + lf(half(j1 - m1)) + lf(half(j1 + m1)) + lf(half(j2 - m2)) +
                              lf(half(j2 + m2)));
    const int kmin = std::max({0, half(j2 - J - m1), half(j1 - J + m2)});
    const int kmax = std::min({half(j1 + j2 - J), half(j1 - m1), half(j2 + m2)});
    double sum = 0.0;
    for (int k = kmin; k <= kmax; ++k) {
        const double l = lf(k) + lf(half(j1 + j2 - J) - k) + lf(half(j1 - m1) - k) + lf(half(j2 + m2) - k) +
                         lf(half(J - j2 + m1) + k) + lf(half(J - j1 - m2) + k);
        sum += ((k & 1) ? -1.0 : 1.0) * std::exp(pre - l);
    }
    return sum;
}

double sixj_raw(int a, int b, int c, int d, int e, int f) {
    if (!tri2(a, b, c) || !tri2(a, e, f) || !tri2(d, b, f) || !tri2(d, e, c)) return 0.0;
    const double pre = log_delta(a, b, c) + log_delta(a, e, f) + log_delta(d, b, f) + log_delta(d, e, c);
    const int tmin = std::max({half(a + b + c), half(a + e + f), half(d + b + f), half(d + e + c)});
    const int tmax = std::min({half(a + b + d + e), half(a + c + d + f), half(b + c + e + f)});
    double sum = 0.0;
    for (int t = tmin; t <= tmax; ++t) {
        const double l = lf(t + 1) - lf(t - half(a + b + c)) - lf(t - half(a + e + f)) - lf(t - half(d + b + f)) -
                         lf(t - half(d + e + c)) - lf(half(a + b + d + e) - t) - lf(half(a + c + d + f) - t) -
                         lf(half(b + c + e + f) - t);
        sum += ((t & 1) ? -1.0 : 1.0) * std::exp(pre + l);
    }
    return sum;
}

Cache& cg_cache() { static Cache c; return c; }
Cache& sixj_cache() { static Cache c; return c; }

double sign_pow(int n) { return (n % 2 == 0) ? 1.0 : -1.0; }

}  // namespace

HalfInt HalfInt::from_double(double v) {
    const double t = 2.0 * v;
    const long r = std::lround(t);
    if (std::abs(t - static_cast<double>(r)) > 1e-9) throw DomainError("not a half-integer: " + std::to_string(v));
    return from_twice(static_cast<int>(r));
}

std::string HalfInt::str() const {
    if (is_integer()) return std::to_string(twice / 2);
    return std::to_string(twice) + "/2";
}

std::vector<HalfInt> projections(HalfInt j) {
    std::vector<HalfInt> out;
    for (int t = -j.twice; t <= j.twice; t += 2) out.push_back(HalfInt::from_twice(t));
    return out;
}

bool triangle(HalfInt a, HalfInt b, HalfInt c) { return tri2(a.twice, b.twice, c.twice); }

double clebsch_gordan(HalfInt j1, HalfInt m1, HalfInt j2, HalfInt m2, HalfInt J, HalfInt M) {
    for (int v : {j1.twice, j2.twice, J.twice}) {
        check_range(v);
        if (v < 0) throw DomainError("negative angular momentum");
    }
    if (m1.twice + m2.twice != M.twice) return 0.0;
    const auto key = pack({j1.twice, m1.twice, j2.twice, m2.twice, J.twice, M.twice});
    return cg_cache().get(key, [&] { return cg_raw(j1.twice, m1.twice, j2.twice, m2.twice, J.twice, M.twice); });
}

double wigner_3j(HalfInt j1, HalfInt j2, HalfInt j3, HalfInt m1, HalfInt m2, HalfInt m3) {
    // (j1 j2 j3; m1 m2 m3) = (-1)^{j1-j2-m3} C^{j3,-m3}_{j1 m1, j2 m2} / sqrt(2 j3 + 1)
    const int ph = j1.twice - j2.twice - m3.twice;
    if (ph % 2) return 0.0;
    return sign_pow(ph / 2) * clebsch_gordan(j1, m1, j2, m2, j3, -m3) / std::sqrt(j3.twice + 1.0);
}

double wigner_6j(HalfInt j1, HalfInt j2, HalfInt j3, HalfInt j4, HalfInt j5, HalfInt j6) {
    for (int v : {j1.twice, j2.twice, j3.twice, j4.twice, j5.twice, j6.twice}) {
        check_range(v);
        if (v < 0) throw DomainError("negative angular momentum");
    }
    const auto key = pack({j1.twice, j2.twice, j3.twice, j4.twice, j5.twice, j6.twice});
    return sixj_cache().get(key, [&] { return sixj_raw(j1.twice, j2.twice, j3.twice, j4.twice, j5.twice, j6.twice); });
}

Eigen::Matrix3d wigner_small_d1(double b) {
    const double c = std::cos(b), s = std::sin(b), r = 1.0 / std::sqrt(2.0);
    Eigen::Matrix3d d;
    d << (1 + c) / 2, -s * r, (1 - c) / 2,
         s * r, c, -s * r,
         (1 - c) / 2, s * r, (1 + c) / 2;
    return d;
}

Eigen::Matrix3cd wigner_rotation_rank1(double alpha, double beta, double gamma) {
    const Eigen::Matrix3d d = wigner_small_d1(beta);
    Eigen::Matrix3cd D;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            const int qp = index_q(i), q = index_q(j);
            D(i, j) = std::polar(1.0, -qp * alpha - q * gamma) * d(i, j);
        }
    return D;
}

Eigen::Matrix3d euler_rotation(double alpha, double beta, double gamma) {
    using Eigen::AngleAxisd;
    using Eigen::Vector3d;
    return (AngleAxisd(alpha, Vector3d::UnitZ()) * AngleAxisd(beta, Vector3d::UnitY()) *
            AngleAxisd(gamma, Vector3d::UnitZ()))
        .toRotationMatrix();
}

Eigen::Vector3d euler_angles(const Eigen::Matrix3d& R) {
    const double c = std::clamp(R(2, 2), -1.0, 1.0);
    const double beta = std::acos(c);
    if (std::abs(std::sin(beta)) < 1e-12) {
        if (c > 0) return {std::atan2(R(1, 0), R(0, 0)), 0.0, 0.0};
        return {std::atan2(-R(1, 0), -R(0, 0)), M_PI, 0.0};
    }
    return {std::atan2(R(1, 2), R(0, 2)), beta, std::atan2(R(2, 1), -R(2, 0))};
}

Eigen::Vector3cd spherical_unit(int q) {
    const double r = 1.0 / std::sqrt(2.0);
    const cd I(0, 1);
    switch (q) {
        case 1: return Eigen::Vector3cd(-r, -I * r, 0);
        case 0: return Eigen::Vector3cd(0, 0, 1);
        case -1: return Eigen::Vector3cd(r, -I * r, 0);
        default: throw DomainError("spherical index must be -1, 0 or 1");
    }
}

Eigen::Vector3cd cartesian_to_spherical(const Eigen::Vector3cd& a) {
    Eigen::Vector3cd out;
    for (int i = 0; i < 3; ++i) out(i) = a.transpose() * spherical_unit(index_q(i));
    return out;
}

Eigen::Vector3cd spherical_to_cartesian(const Eigen::Vector3cd& aq) {
    const double r = 1.0 / std::sqrt(2.0);
    const cd I(0, 1);
    const cd ap = aq(0), a0 = aq(1), am = aq(2);
    return Eigen::Vector3cd((am - ap) * r, I * (am + ap) * r, a0);
}

Eigen::Matrix3cd tensor_to_spherical(const Eigen::Matrix3cd& t) {
    Eigen::Matrix3cd U;  // columns e_q
    for (int i = 0; i < 3; ++i) U.col(i) = spherical_unit(index_q(i));
    return U.transpose() * t * U.conjugate();
}

Eigen::Matrix3cd tensor_from_spherical(const Eigen::Matrix3cd& tq) {
    Eigen::Matrix3cd U;
    for (int i = 0; i < 3; ++i) U.col(i) = spherical_unit(index_q(i));
    // U is unitary: U^T^{-1} = U^*, (U^*)^{-1} = U^T
    return U.conjugate() * tq * U.transpose();
}

// ---------------------------------------------------------------- level scheme

void LevelScheme::validate() const {
    if (S.twice < 0 || I.twice < 0 || J.twice < 0) throw DomainError("negative angular momentum in level scheme");
    if (!triangle(S, HalfInt::whole(1), J)) throw DomainError("J and S are not connected by a dipole transition");
    if (ground.empty() || excited.empty()) throw DomainError("level scheme needs ground and excited levels");
    for (const auto& g : ground)
        if (!triangle(S, I, g.F)) throw DomainError("ground F0=" + g.F.str() + " not allowed for S, I");
    for (const auto& e : excited)
        if (!triangle(J, I, e.F)) throw DomainError("excited F=" + e.F.str() + " not allowed for J, I");
    for (size_t i = 0; i < ground.size(); ++i)
        for (size_t j = i + 1; j < ground.size(); ++j)
            if (ground[i].F == ground[j].F) throw DomainError("duplicate ground level");
    for (size_t i = 0; i < excited.size(); ++i)
        for (size_t j = i + 1; j < excited.size(); ++j)
            if (excited[i].F == excited[j].F) throw DomainError("duplicate excited level");
    if (!(omega0 > 0)) throw DomainError("omega0 must be positive");
}

std::vector<Sublevel> LevelScheme::ground_sublevels() const {
    std::vector<Sublevel> out;
    for (size_t l = 0; l < ground.size(); ++l)
        for (auto M : projections(ground[l].F)) out.push_back({static_cast<int>(l), ground[l].F, M, ground[l].energy});
    return out;
}

std::vector<Sublevel> LevelScheme::excited_sublevels() const {
    std::vector<Sublevel> out;
    for (size_t l = 0; l < excited.size(); ++l)
        for (auto M : projections(excited[l].F))
            out.push_back({static_cast<int>(l), excited[l].F, M, excited[l].energy});
    return out;
}

int LevelScheme::n_ground() const {
    int n = 0;
    for (const auto& g : ground) n += g.F.twice + 1;
    return n;
}

int LevelScheme::n_excited() const {
    int n = 0;
    for (const auto& e : excited) n += e.F.twice + 1;
    return n;
}

int LevelScheme::ground_level_index(HalfInt F0) const {
    for (size_t l = 0; l < ground.size(); ++l)
        if (ground[l].F == F0) return static_cast<int>(l);
    return -1;
}

int LevelScheme::excited_level_index(HalfInt F) const {
    for (size_t l = 0; l < excited.size(); ++l)
        if (excited[l].F == F) return static_cast<int>(l);
    return -1;
}

int LevelScheme::ground_index(HalfInt F0, HalfInt M0) const {
    int off = 0;
    for (const auto& g : ground) {
        if (g.F == F0) {
            if (std::abs(M0.twice) > F0.twice || (M0.twice - F0.twice) % 2) return -1;
            return off + (M0.twice + F0.twice) / 2;
        }
        off += g.F.twice + 1;
    }
    return -1;
}

int LevelScheme::excited_index(HalfInt F, HalfInt M) const {
    int off = 0;
    for (const auto& e : excited) {
        if (e.F == F) {
            if (std::abs(M.twice) > F.twice || (M.twice - F.twice) % 2) return -1;
            return off + (M.twice + F.twice) / 2;
        }
        off += e.F.twice + 1;
    }
    return -1;
}

LevelScheme two_level_scheme() {
    LevelScheme s;
    s.name = "two-level";
    s.S = HalfInt::whole(0);
    s.I = HalfInt::whole(0);
    s.J = HalfInt::whole(1);
    s.ground = {{HalfInt::whole(0), 0.0}};
    s.excited = {{HalfInt::whole(1), 0.0}};
    s.omega0 = 6.3335e7;
    return s;
}

namespace {
constexpr double kRbGammaMHz = 6.0666;
}

LevelScheme rb85_d2() {
    LevelScheme s;
    s.name = "rb85-d2";
    s.S = HalfInt::from_twice(1);
    s.I = HalfInt::from_twice(5);
    s.J = HalfInt::from_twice(3);
    const double hfs = 3035.732 / kRbGammaMHz;
    s.ground = {{HalfInt::whole(2), -hfs}, {HalfInt::whole(3), 0.0}};
    const double d43 = 120.640 / kRbGammaMHz, d32 = 63.401 / kRbGammaMHz, d21 = 29.372 / kRbGammaMHz;
    s.excited = {{HalfInt::whole(1), -(d43 + d32 + d21)},
                 {HalfInt::whole(2), -(d43 + d32)},
                 {HalfInt::whole(3), -d43},
                 {HalfInt::whole(4), 0.0}};
    s.omega0 = 384.230e6 / kRbGammaMHz;
    return s;
}

LevelScheme rb87_d2() {
    LevelScheme s;
    s.name = "rb87-d2";
    s.S = HalfInt::from_twice(1);
    s.I = HalfInt::from_twice(3);
    s.J = HalfInt::from_twice(3);
    const double hfs = 6834.683 / kRbGammaMHz;
    s.ground = {{HalfInt::whole(1), -hfs}, {HalfInt::whole(2), 0.0}};
    const double d32 = 266.650 / kRbGammaMHz, d21 = 156.947 / kRbGammaMHz, d10 = 72.218 / kRbGammaMHz;
    s.excited = {{HalfInt::whole(0), -(d32 + d21 + d10)},
                 {HalfInt::whole(1), -(d32 + d21)},
                 {HalfInt::whole(2), -d32},
                 {HalfInt::whole(3), 0.0}};
    s.omega0 = 384.230e6 / kRbGammaMHz;
    return s;
}

LevelScheme rb87_d1_like_f1() {
    LevelScheme s = rb87_d2();
    s.name = "rb87-eit";
    s.excited = {{HalfInt::whole(1), 0.0}};
    // ground F0=1 carries the probe at omega0, F0=2 lies 1126 gamma above
    s.ground = {{HalfInt::whole(1), 0.0}, {HalfInt::whole(2), 6834.683 / kRbGammaMHz}};
    return s;
}

// ---------------------------------------------------------------- matrix elements

double reduced_dipole_electronic(const LevelScheme& s) { return std::sqrt(3.0 * (s.J.twice + 1) / 4.0); }

double reduced_dipole_hyperfine(const LevelScheme& s, HalfInt F, HalfInt F0) {
    const int ph2 = F0.twice + s.J.twice + s.I.twice - 2;
    if (ph2 % 2) throw DomainError("non-integer phase in reduced dipole element");
    return sign_pow(ph2 / 2) * std::sqrt((F.twice + 1.0) * (F0.twice + 1.0)) *
           wigner_6j(s.S, s.I, F0, F, HalfInt::whole(1), s.J) * reduced_dipole_electronic(s);
}

double dipole_matrix_element(const LevelScheme& s, HalfInt F, HalfInt M, HalfInt F0, HalfInt M0, int q) {
    if (q < -1 || q > 1) throw DomainError("spherical index must be -1, 0 or 1");
    if (std::abs(M.twice) > F.twice || std::abs(M0.twice) > F0.twice) throw DomainError("projection exceeds F");
    return reduced_dipole_hyperfine(s, F, F0) / std::sqrt(F.twice + 1.0) *
           clebsch_gordan(F0, M0, HalfInt::whole(1), HalfInt::whole(q), F, M);
}

double magnetic_matrix_element(const LevelScheme& s, HalfInt F0p, HalfInt M0p, HalfInt F0, HalfInt M0, int q) {
    if (q < -1 || q > 1) throw DomainError("spherical index must be -1, 0 or 1");
    const int ph2 = F0.twice + s.S.twice + s.I.twice - 2;
    if (ph2 % 2) throw DomainError("non-integer phase in magnetic element");
    const double red = sign_pow(ph2 / 2) * std::sqrt((F0p.twice + 1.0) * (F0.twice + 1.0)) *
                       wigner_6j(s.S, s.I, F0, F0p, HalfInt::whole(1), s.S) * std::sqrt(6.0);
    return red / std::sqrt(F0p.twice + 1.0) * clebsch_gordan(F0, M0, HalfInt::whole(1), HalfInt::whole(q), F0p, M0p);
}

std::vector<Eigen::MatrixXd> dipole_spherical(const LevelScheme& s) {
    const auto g = s.ground_sublevels();
    const auto e = s.excited_sublevels();
    std::vector<Eigen::MatrixXd> D(3, Eigen::MatrixXd::Zero(e.size(), g.size()));
    for (size_t n = 0; n < e.size(); ++n)
        for (size_t m = 0; m < g.size(); ++m) {
            const int q = (e[n].M.twice - g[m].M.twice);
            if (std::abs(q) > 2) continue;
            D[q_index(q / 2)](n, m) = dipole_matrix_element(s, e[n].F, e[n].M, g[m].F, g[m].M, q / 2);
        }
    return D;
}

std::vector<Eigen::MatrixXcd> dipole_cartesian(const LevelScheme& s) {
    const auto Dq = dipole_spherical(s);
    const double r = 1.0 / std::sqrt(2.0);
    const cd I(0, 1);
    const Eigen::MatrixXcd dp = Dq[q_index(1)].cast<cd>();
    const Eigen::MatrixXcd d0 = Dq[q_index(0)].cast<cd>();
    const Eigen::MatrixXcd dm = Dq[q_index(-1)].cast<cd>();
    return {(dm - dp) * r, I * (dm + dp) * r, d0};
}

Eigen::MatrixXcd repopulation(const LevelScheme& s, const Eigen::MatrixXcd& rho, double gamma) {
    const auto g = s.ground_sublevels();
    const auto e = s.excited_sublevels();
    if (rho.rows() != static_cast<long>(e.size()) || rho.cols() != static_cast<long>(e.size()))
        throw DomainError("excited density matrix has wrong dimension");
    const HalfInt one = HalfInt::whole(1);
    Eigen::MatrixXcd out = Eigen::MatrixXcd::Zero(g.size(), g.size());
    for (size_t mp = 0; mp < g.size(); ++mp)
        for (size_t m = 0; m < g.size(); ++m)
            for (size_t np = 0; np < e.size(); ++np)
                for (size_t n = 0; n < e.size(); ++n) {
                    if (rho(np, n) == cd(0.0)) continue;
                    const int q2 = e[np].M.twice - g[mp].M.twice;
                    if (q2 != e[n].M.twice - g[m].M.twice || std::abs(q2) > 2) continue;
                    const HalfInt q = HalfInt::from_twice(q2);
                    const double c1 = clebsch_gordan(g[mp].F, g[mp].M, one, q, e[np].F, e[np].M);
                    const double c2 = clebsch_gordan(g[m].F, g[m].M, one, q, e[n].F, e[n].M);
                    if (c1 == 0.0 || c2 == 0.0) continue;
                    const double ph = sign_pow((g[m].F.twice - g[mp].F.twice) / 2);
                    const double f = ph * std::sqrt((g[mp].F.twice + 1.0) * (g[m].F.twice + 1.0)) * (s.J.twice + 1.0) *
                                     wigner_6j(s.S, s.I, g[mp].F, e[np].F, one, s.J) *
                                     wigner_6j(s.S, s.I, g[m].F, e[n].F, one, s.J);
                    out(mp, m) += gamma * rho(np, n) * c1 * c2 * f;
                }
    return out;
}

}  // namespace coldscatter::angular
