#pragma once

#include <Eigen/Dense>
#include <complex>
#include <string>
#include <vector>

namespace coldscatter::angular {

using cd = std::complex<double>;

// Angular momentum value stored as twice its value (exact for half-integers).
struct HalfInt {
    int twice = 0;

    constexpr HalfInt() = default;
    static constexpr HalfInt from_twice(int t) { HalfInt h; h.twice = t; return h; }
    static constexpr HalfInt whole(int n) { return from_twice(2 * n); }
    static HalfInt from_double(double v);

    constexpr double value() const { return 0.5 * twice; }
    constexpr bool is_integer() const { return (twice & 1) == 0; }

    constexpr HalfInt operator-() const { return from_twice(-twice); }
    constexpr HalfInt operator+(HalfInt o) const { return from_twice(twice + o.twice); }
    constexpr HalfInt operator-(HalfInt o) const { return from_twice(twice - o.twice); }
    constexpr bool operator==(const HalfInt&) const = default;
    constexpr auto operator<=>(const HalfInt&) const = default;

    std::string str() const;
};

// Projections -j, -j+1, ..., j.
std::vector<HalfInt> projections(HalfInt j);
bool triangle(HalfInt a, HalfInt b, HalfInt c);

// C^{J M}_{j1 m1, j2 m2}, Condon-Shortley phase.
double clebsch_gordan(HalfInt j1, HalfInt m1, HalfInt j2, HalfInt m2, HalfInt J, HalfInt M);
double wigner_3j(HalfInt j1, HalfInt j2, HalfInt j3, HalfInt m1, HalfInt m2, HalfInt m3);
double wigner_6j(HalfInt j1, HalfInt j2, HalfInt j3, HalfInt j4, HalfInt j5, HalfInt j6);

// Rank-1 Wigner matrix D_{q'q}(alpha, beta, gamma); rows/cols ordered q = +1, 0, -1.
Eigen::Matrix3cd wigner_rotation_rank1(double alpha, double beta, double gamma);
// Small-d matrix, same ordering.
Eigen::Matrix3d wigner_small_d1(double beta);
// Active rotation Rz(alpha) Ry(beta) Rz(gamma).
Eigen::Matrix3d euler_rotation(double alpha, double beta, double gamma);

// zyz Euler angles (alpha, beta, gamma) of a proper rotation matrix.
Eigen::Vector3d euler_angles(const Eigen::Matrix3d& R);

inline int q_index(int q) { return 1 - q; }
inline int index_q(int i) { return 1 - i; }

// Spherical unit vectors e_{+1}, e_0, e_{-1} in Cartesian components.
Eigen::Vector3cd spherical_unit(int q);
// Covariant components A_q = A . e_q, ordered q = +1, 0, -1.
Eigen::Vector3cd cartesian_to_spherical(const Eigen::Vector3cd& a);
Eigen::Vector3cd spherical_to_cartesian(const Eigen::Vector3cd& aq);
// Tensor components T_{q1}^{q2} = e_{q1}^T T e_{q2}^*.
Eigen::Matrix3cd tensor_to_spherical(const Eigen::Matrix3cd& t);
Eigen::Matrix3cd tensor_from_spherical(const Eigen::Matrix3cd& tq);

struct Level {
    HalfInt F;
    double energy = 0.0;  // units of gamma; excited energies are offsets from omega0
};

struct Sublevel {
    int level = 0;  // index into ground or excited level list
    HalfInt F;
    HalfInt M;
    double energy = 0.0;
};

// Hyperfine structure of a single ground/excited electronic pair.
struct LevelScheme {
    HalfInt S = HalfInt::from_twice(1);  // ground electronic angular momentum
    HalfInt I;
    HalfInt J;
    std::vector<Level> ground;
    std::vector<Level> excited;
    double omega0 = 1.0e8;  // optical frequency in units of gamma
    std::string name;

    // Throws DomainError for levels that violate the coupling rules.
    void validate() const;

    std::vector<Sublevel> ground_sublevels() const;
    std::vector<Sublevel> excited_sublevels() const;
    int ground_index(HalfInt F0, HalfInt M0) const;
    int excited_index(HalfInt F, HalfInt M) const;
    int ground_level_index(HalfInt F0) const;
    int excited_level_index(HalfInt F) const;
    int n_ground() const;
    int n_excited() const;
};

// Presets.
LevelScheme two_level_scheme();  // F0 = 0 -> F = 1
LevelScheme rb85_d2();
LevelScheme rb87_d2();
LevelScheme rb87_d1_like_f1();  // F0 = 1, 2 -> F = 1 only (EIT scheme)

// Reduced electronic element <J||d||S> in units where gamma = hbar = k = 1.
double reduced_dipole_electronic(const LevelScheme& s);
double reduced_dipole_hyperfine(const LevelScheme& s, HalfInt F, HalfInt F0);
// <F M | d_q | F0 M0>, d_q = d . e_q.
double dipole_matrix_element(const LevelScheme& s, HalfInt F, HalfInt M, HalfInt F0, HalfInt M0, int q);
// <F0' M0' | m_q | F0 M0> in Bohr magnetons (electron spin only).
double magnetic_matrix_element(const LevelScheme& s, HalfInt F0p, HalfInt M0p, HalfInt F0, HalfInt M0, int q);

// Cartesian dipole matrices D_mu (excited x ground), entries <n|d_mu|m>.
std::vector<Eigen::MatrixXcd> dipole_cartesian(const LevelScheme& s);
// Same in the spherical basis, index q_index(q).
std::vector<Eigen::MatrixXd> dipole_spherical(const LevelScheme& s);

// Spontaneous repopulation of the ground manifold from an excited-state density matrix.
Eigen::MatrixXcd repopulation(const LevelScheme& s, const Eigen::MatrixXcd& rho_excited, double gamma = 1.0);

}  // namespace coldscatter::angular
