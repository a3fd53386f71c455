#include "coldscatter/medium.hpp"

#include <boost/math/special_functions/legendre.hpp>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "coldscatter/errors.hpp"

namespace coldscatter::medium {

using angular::HalfInt;
using Eigen::Matrix3cd;
using Eigen::MatrixXcd;
using Eigen::Vector3cd;
using Eigen::Vector3d;

namespace {

const cd I(0.0, 1.0);

constexpr double kPoleCondition = 1e12;

std::vector<int> level_columns(const LevelScheme& s, int level) {
    std::vector<int> cols;
    const auto g = s.ground_sublevels();
    for (size_t m = 0; m < g.size(); ++m)
        if (g[m].level == level) cols.push_back(static_cast<int>(m));
    return cols;
}

int find_root(std::vector<int>& parent, int i) {
    while (parent[i] != i) i = parent[i] = parent[parent[i]];
    return i;
}

}  // namespace

ControlField make_control(const LevelScheme& s, int ground_level, const Vector3cd& polarization, double rabi_reduced,
                          double detuning) {
    s.validate();
    if (ground_level < 0 || ground_level >= static_cast<int>(s.ground.size()))
        throw DomainError("control ground level index out of range");
    if (polarization.norm() == 0.0) throw DomainError("control polarization must be nonzero");
    const Vector3cd eps = polarization.normalized();
    const double E0 = rabi_reduced / (2.0 * angular::reduced_dipole_electronic(s));
    const auto D = angular::dipole_cartesian(s);
    ControlField c;
    c.detuning = detuning;
    c.polarization = eps;
    c.ground_level = ground_level;
    c.V = MatrixXcd::Zero(s.n_excited(), s.n_ground());
    for (int m : level_columns(s, ground_level))
        for (int mu = 0; mu < 3; ++mu) c.V.col(m) += E0 * eps(mu) * D[mu].col(m);
    return c;
}

ControlField make_control_on_transition(const LevelScheme& s, int ground_level, const Vector3cd& polarization,
                                        double rabi, double detuning, HalfInt F0, HalfInt M0, HalfInt F, HalfInt M) {
    ControlField c = make_control(s, ground_level, polarization, 1.0, detuning);
    const int n = s.excited_index(F, M), m = s.ground_index(F0, M0);
    if (n < 0 || m < 0) throw DomainError("reference transition sublevels not in the scheme");
    const double ref = std::abs(c.V(n, m));
    if (ref == 0.0) throw DomainError("reference transition is not driven by this polarization");
    c.V *= (0.5 * rabi) / ref;
    return c;
}

void GroundState::validate(const LevelScheme& s) const {
    const int ng = s.n_ground();
    if (rho.rows() != ng || rho.cols() != ng) throw DomainError("ground density matrix has wrong dimension");
    if (!(n0 >= 0.0) || !std::isfinite(n0)) throw DomainError("density must be finite and non-negative");
    if ((rho - rho.adjoint()).norm() > 1e-10) throw DomainError("ground density matrix is not Hermitian");
    const auto g = s.ground_sublevels();
    for (int i = 0; i < ng; ++i)
        for (int j = 0; j < ng; ++j)
            if (g[i].level != g[j].level && std::abs(rho(i, j)) > 1e-14)
                throw DomainError("ground coherences between different hyperfine levels are not supported");
    const double tr = rho.trace().real();
    if (rho.norm() > 0.0 && std::abs(tr - 1.0) > 1e-10) throw DomainError("ground density matrix must have unit trace");
    if (rho.norm() > 0.0) {
        Eigen::SelfAdjointEigenSolver<MatrixXcd> es(rho);
        if (es.eigenvalues().minCoeff() < -1e-10) throw DomainError("ground density matrix is not positive");
    }
}

GroundState isotropic_ground(const LevelScheme& s, int ground_level, double n0) {
    GroundState g;
    g.n0 = n0;
    g.rho = MatrixXcd::Zero(s.n_ground(), s.n_ground());
    const auto cols = level_columns(s, ground_level);
    if (cols.empty()) throw DomainError("ground level index out of range");
    for (int m : cols) g.rho(m, m) = 1.0 / cols.size();
    return g;
}

GroundState equilibrium_ground(const LevelScheme& s, double n0) {
    GroundState g;
    g.n0 = n0;
    const int ng = s.n_ground();
    g.rho = MatrixXcd::Identity(ng, ng) / static_cast<double>(ng);
    return g;
}

// ---------------------------------------------------------------- propagator

std::vector<std::vector<int>> propagator_blocks(const Atom& atom) {
    const int ne = atom.scheme.n_excited();
    std::vector<int> parent(ne);
    std::iota(parent.begin(), parent.end(), 0);
    if (atom.control) {
        const auto& V = atom.control->V;
        for (int m = 0; m < V.cols(); ++m) {
            int first = -1;
            for (int n = 0; n < ne; ++n) {
                if (V(n, m) == cd(0.0)) continue;
                if (first < 0) first = n;
                else parent[find_root(parent, n)] = find_root(parent, first);
            }
        }
    }
    std::vector<std::vector<int>> blocks;
    std::vector<int> root_to_block(ne, -1);
    for (int n = 0; n < ne; ++n) {
        const int r = find_root(parent, n);
        if (root_to_block[r] < 0) {
            root_to_block[r] = static_cast<int>(blocks.size());
            blocks.emplace_back();
        }
        blocks[root_to_block[r]].push_back(n);
    }
    return blocks;
}

MatrixXcd dressed_propagator_block(const Atom& atom, cd E, const std::vector<int>& block) {
    const auto e = atom.scheme.excited_sublevels();
    const auto g = atom.scheme.ground_sublevels();
    const int nb = static_cast<int>(block.size());
    std::vector<int> coupled;
    if (atom.control) {
        const auto& V = atom.control->V;
        for (int m = 0; m < V.cols(); ++m)
            for (int n : block)
                if (V(n, m) != cd(0.0)) {
                    coupled.push_back(m);
                    break;
                }
    }
    if (coupled.empty()) {
        MatrixXcd G = MatrixXcd::Zero(nb, nb);
        for (int i = 0; i < nb; ++i) G(i, i) = 1.0 / (E - e[block[i]].energy + 0.5 * I);
        return G;
    }
    // Bordered system: the Schur complement on the excited block is the bracket of the dressed equation,
    // and stays regular at exact two-photon resonance.
    const int nc = static_cast<int>(coupled.size());
    const auto& V = atom.control->V;
    MatrixXcd B = MatrixXcd::Zero(nb + nc, nb + nc);
    for (int i = 0; i < nb; ++i) B(i, i) = E - e[block[i]].energy + 0.5 * I;
    for (int j = 0; j < nc; ++j) {
        B(nb + j, nb + j) = E - atom.control->detuning - g[coupled[j]].energy;
        for (int i = 0; i < nb; ++i) {
            B(i, nb + j) = -V(block[i], coupled[j]);
            B(nb + j, i) = -std::conj(V(block[i], coupled[j]));
        }
    }
    Eigen::JacobiSVD<MatrixXcd> svd(B);
    const auto sv = svd.singularValues();
    const double cond = sv(0) / sv(sv.size() - 1);
    if (!(cond < kPoleCondition)) {
        std::ostringstream os;
        os << "E=" << E << " condition=" << cond << " smallest singular value=" << sv(sv.size() - 1);
        throw NumericError("dressed propagator: energy too close to a pole", os.str());
    }
    const MatrixXcd Binv = B.partialPivLu().inverse();
    return Binv.topLeftCorner(nb, nb);
}

MatrixXcd dressed_propagator(const Atom& atom, cd E) {
    const int ne = atom.scheme.n_excited();
    MatrixXcd G = MatrixXcd::Zero(ne, ne);
    for (const auto& block : propagator_blocks(atom)) {
        const MatrixXcd Gb = dressed_propagator_block(atom, E, block);
        for (size_t i = 0; i < block.size(); ++i)
            for (size_t j = 0; j < block.size(); ++j) G(block[i], block[j]) = Gb(i, j);
    }
    return G;
}

// ---------------------------------------------------------------- susceptibility and scattering

Matrix3cd susceptibility(const Atom& atom, const GroundState& ground, double detuning) {
    const auto& s = atom.scheme;
    ground.validate(s);
    Matrix3cd chi = Matrix3cd::Zero();
    if (ground.n0 == 0.0 || ground.rho.norm() == 0.0) return chi;
    const auto D = angular::dipole_cartesian(s);
    for (int level = 0; level < static_cast<int>(s.ground.size()); ++level) {
        const auto cols = level_columns(s, level);
        bool any = false;
        for (int a : cols)
            for (int b : cols) any = any || ground.rho(a, b) != cd(0.0);
        if (!any) continue;
        const MatrixXcd G = dressed_propagator(atom, detuning + s.ground[level].energy);
        for (int mup = 0; mup < 3; ++mup) {
            const MatrixXcd GD = G * D[mup];  // excited x ground
            for (int mu = 0; mu < 3; ++mu) {
                cd acc = 0.0;
                for (int m : cols)
                    for (int mp : cols) {
                        const cd r = ground.rho(mp, m);
                        if (r == cd(0.0)) continue;
                        acc += r * D[mu].col(m).dot(GD.col(mp));  // conj(<n|d_mu|m>) G <n'|d_mu'|m'>
                    }
                chi(mu, mup) -= acc;
            }
        }
    }
    return chi * ground.n0;
}

std::vector<Matrix3cd> scattering_tensors_from(const Atom& atom, int m_in, double detuning) {
    const auto& s = atom.scheme;
    const int ng = s.n_ground();
    if (m_in < 0 || m_in >= ng) throw DomainError("ground sublevel index out of range");
    const auto g = s.ground_sublevels();
    const auto D = angular::dipole_cartesian(s);
    const MatrixXcd G = dressed_propagator(atom, detuning + g[m_in].energy);
    std::vector<Eigen::VectorXcd> GDm(3);
    for (int mu = 0; mu < 3; ++mu) GDm[mu] = G * D[mu].col(m_in);
    std::vector<Matrix3cd> out(ng);
    for (int mo = 0; mo < ng; ++mo)
        for (int mup = 0; mup < 3; ++mup)
            for (int mu = 0; mu < 3; ++mu) out[mo](mup, mu) = -D[mup].col(mo).dot(GDm[mu]);
    return out;
}

Matrix3cd scattering_tensor(const Atom& atom, int m_out, int m_in, double detuning) {
    if (m_out < 0 || m_out >= atom.scheme.n_ground()) throw DomainError("ground sublevel index out of range");
    return scattering_tensors_from(atom, m_in, detuning)[m_out];
}

double output_detuning(const LevelScheme& s, int m_out, int m_in, double detuning) {
    const auto g = s.ground_sublevels();
    return detuning + g[m_in].energy - g[m_out].energy;
}

double scattering_cross_section(const Atom& atom, int m_in, const Vector3cd& e, double detuning, bool elastic_only) {
    const auto al = scattering_tensors_from(atom, m_in, detuning);
    const auto g = atom.scheme.ground_sublevels();
    double sum = 0.0;
    for (size_t mo = 0; mo < al.size(); ++mo) {
        if (elastic_only && g[mo].level != g[m_in].level) continue;
        sum += (al[mo] * e).squaredNorm();
    }
    return 8.0 * M_PI / 3.0 * sum;
}

// ---------------------------------------------------------------- transverse decomposition

Eigen::Matrix3d transverse_frame(const Vector3d& direction) {
    const double nrm = direction.norm();
    if (!(nrm > 0.0)) throw DomainError("ray direction must be nonzero");
    const Vector3d z = direction / nrm;
    Vector3d x = Vector3d::UnitZ() - z.z() * z;
    if (x.norm() < 1e-12) x = Vector3d::UnitX() - z.x() * z;
    x.normalize();
    Eigen::Matrix3d F;
    F.col(0) = x;
    F.col(1) = z.cross(x);
    F.col(2) = z;
    return F;
}

namespace {

TransverseDecomposition decompose_projected(const Eigen::Matrix2cd& M, const Eigen::Matrix3d& frame) {
    TransverseDecomposition d;
    d.frame = frame;
    d.projected = M;
    d.chi0 = 0.5 * (M(0, 0) + M(1, 1));
    d.chivec = Vector3cd(0.5 * (M(0, 1) + M(1, 0)), 0.5 * I * (M(0, 1) - M(1, 0)), 0.5 * (M(0, 0) - M(1, 1)));
    d.chi_len = std::sqrt(cd(d.chivec.transpose() * d.chivec));
    const double scale = M.norm();
    d.isotropic = !(d.chivec.norm() > 1e-13 * scale);
    if (d.isotropic) {
        d.chivec.setZero();
        d.chi_len = 0.0;
        d.director.setZero();
    } else if (std::abs(d.chi_len) > 1e-13 * scale) {
        d.director = d.chivec / d.chi_len;
    } else {
        d.director.setZero();  // nilpotent case: amplitude built from chivec directly
    }
    return d;
}

Eigen::Matrix2cd spherical_transverse(const Matrix3cd& chi_sph) {
    Eigen::Matrix2cd M;
    const int p = angular::q_index(1), m = angular::q_index(-1);
    M << chi_sph(p, p), chi_sph(p, m), chi_sph(m, p), chi_sph(m, m);
    return M;
}

}  // namespace

TransverseDecomposition transverse_decompose(const Matrix3cd& chi_lab, const Vector3d& direction) {
    const Eigen::Matrix3d F = transverse_frame(direction);
    const Matrix3cd local = F.transpose().cast<cd>() * chi_lab * F.cast<cd>();
    return decompose_projected(spherical_transverse(angular::tensor_to_spherical(local)), F);
}

TransverseDecomposition transverse_decompose_wigner(const Matrix3cd& chi_lab, const Vector3d& direction) {
    const Eigen::Matrix3d F = transverse_frame(direction);
    const Vector3d eul = angular::euler_angles(F);
    const Matrix3cd D = angular::wigner_rotation_rank1(eul(0), eul(1), eul(2));
    const Matrix3cd lab = angular::tensor_to_spherical(chi_lab);
    const Matrix3cd local = D.transpose() * lab * D.conjugate();
    return decompose_projected(spherical_transverse(local), F);
}

cd tracked_sqrt(cd z, cd previous) {
    const cd s = std::sqrt(z);
    return (std::abs(s - previous) <= std::abs(-s - previous)) ? s : -s;
}

// ---------------------------------------------------------------- kinetic lengths

double sphere_integral(const std::function<double(const Vector3d&)>& f, double rel_tol, int* order_used) {
    auto rule = [&](int n) {
        const auto zeros = boost::math::legendre_p_zeros<double>(n);
        std::vector<std::pair<double, double>> nodes;
        for (double x : zeros) {
            const double dp = boost::math::legendre_p_prime<double>(n, x);
            const double w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes.push_back({x, w});
            if (x != 0.0) nodes.push_back({-x, w});
        }
        const int nphi = 2 * n;
        double sum = 0.0;
        for (auto [c, w] : nodes) {
            const double st = std::sqrt(std::max(0.0, 1.0 - c * c));
            for (int k = 0; k < nphi; ++k) {
                const double ph = 2.0 * M_PI * (k + 0.5) / nphi;
                sum += w * (2.0 * M_PI / nphi) * f(Vector3d(st * std::cos(ph), st * std::sin(ph), c));
            }
        }
        return sum;
    };
    int n = 6;
    double prev = rule(n);
    for (int iter = 0; iter < 6; ++iter) {
        const int n2 = 2 * n;
        const double cur = rule(n2);
        if (std::abs(cur - prev) <= rel_tol * std::max(std::abs(cur), 1e-300)) {
            if (order_used) *order_used = n2;
            return cur;
        }
        prev = cur;
        n = n2;
    }
    throw NumericError("angular quadrature did not converge", "last order " + std::to_string(n));
}

KineticLengths kinetic_lengths(const Atom& atom, const GroundState& ground, double detuning, const Vector3cd& e_in,
                               const Matrix3cd* extra_chi) {
    const auto& s = atom.scheme;
    if (e_in.norm() == 0.0) throw DomainError("probe polarization must be nonzero");
    const Vector3cd e = e_in.normalized();
    Matrix3cd chi = susceptibility(atom, ground, detuning);
    if (extra_chi) chi += *extra_chi;
    KineticLengths k;
    const double inv_lex = 4.0 * M_PI * std::imag(e.dot(chi * e));
    const double n0 = ground.n0;
    const auto g = s.ground_sublevels();

    std::vector<std::pair<double, std::vector<Eigen::Vector3cd>>> sources;  // (population, alpha e for each m')
    std::vector<std::vector<bool>> elastic;
    for (int m = 0; m < s.n_ground(); ++m) {
        const double p = ground.rho(m, m).real();
        if (p <= 0.0) continue;
        const auto al = scattering_tensors_from(atom, m, detuning);
        std::vector<Vector3cd> v;
        std::vector<bool> el;
        for (size_t mo = 0; mo < al.size(); ++mo) {
            v.push_back(al[mo] * e);
            el.push_back(g[mo].level == g[m].level);
        }
        sources.push_back({p, v});
        elastic.push_back(el);
    }
    auto integrand = [&](bool elastic_only) {
        return [&, elastic_only](const Vector3d& n) {
            double acc = 0.0;
            for (size_t i = 0; i < sources.size(); ++i)
                for (size_t mo = 0; mo < sources[i].second.size(); ++mo) {
                    if (elastic_only && !elastic[i][mo]) continue;
                    const Vector3cd& v = sources[i].second[mo];
                    acc += sources[i].first * (v.squaredNorm() - std::norm(n.cast<cd>().dot(v)));
                }
            return acc;
        };
    };
    int order = 0;
    k.sigma_sc = sources.empty() ? 0.0 : sphere_integral(integrand(true), 1e-8, &order);
    k.sigma_sc_total = sources.empty() ? 0.0 : sphere_integral(integrand(false), 1e-8, nullptr);
    k.quadrature_order = order;
    const double inf = std::numeric_limits<double>::infinity();
    k.sigma_ex = n0 > 0 ? inv_lex / n0 : 0.0;
    k.sigma_tot = n0 > 0 ? 4.0 * M_PI * std::imag(chi.trace()) / 3.0 / n0 : 0.0;
    k.l_ex = inv_lex != 0.0 ? 1.0 / inv_lex : inf;
    const double inv_lsc = n0 * k.sigma_sc;
    k.l_sc = inv_lsc > 0 ? 1.0 / inv_lsc : inf;
    const double inv_lls = inv_lex - inv_lsc;
    const double tol = 1e-7 * std::max(std::abs(inv_lex), std::abs(inv_lsc));
    k.l_ls = inf;
    k.l_g = inf;
    if (inv_lls < -tol) {
        k.gain = true;
        k.l_g = -1.0 / inv_lls;
    } else if (inv_lls > tol) {
        k.l_ls = 1.0 / inv_lls;
    }
    return k;
}

// ---------------------------------------------------------------- saturation, dephasing

SaturationResult saturation_and_intensities(double rabi, double detuning, double gamma) {
    if (!(gamma > 0)) throw DomainError("gamma must be positive");
    SaturationResult r;
    r.s = 0.5 * rabi * rabi / (detuning * detuning + 0.25 * gamma * gamma);
    const double d = 1.0 + r.s;
    r.i_coh = r.s / (2.0 * d * d);
    r.i_incoh = r.s * r.s / (2.0 * d * d);
    return r;
}

double doppler_dephasing(double k, double v_bar, double gamma) {
    if (!(gamma > 0)) throw DomainError("gamma must be positive");
    return k * std::abs(v_bar) / gamma;
}

// ---------------------------------------------------------------- Raman gain

double control_scattering_rate(const Atom& atom, int pumped_level) {
    if (!atom.control) return 0.0;
    const auto& s = atom.scheme;
    const auto e = s.excited_sublevels();
    const auto cols = level_columns(s, pumped_level);
    if (cols.empty()) throw DomainError("pumped level index out of range");
    double rate = 0.0;
    for (int m : cols)
        for (size_t n = 0; n < e.size(); ++n) {
            const double det = atom.control->detuning + s.ground[pumped_level].energy - e[n].energy;
            rate += std::norm(atom.control->V(n, m)) / (det * det + 0.25);
        }
    return rate / cols.size();
}

Matrix3cd raman_gain_susceptibility(const Atom& atom, const RamanGain& gain, double n_pumped, double detuning) {
    Matrix3cd chi = Matrix3cd::Zero();
    if (!atom.control || n_pumped == 0.0) return chi;
    const auto& s = atom.scheme;
    const auto e = s.excited_sublevels();
    const auto D = angular::dipole_cartesian(s);
    const auto from = level_columns(s, gain.pumped_level);
    const auto to = level_columns(s, gain.final_level);
    if (from.empty() || to.empty()) throw DomainError("Raman gain levels out of range");
    const double Em = s.ground[gain.pumped_level].energy, Emp = s.ground[gain.final_level].energy;
    const double width = control_scattering_rate(atom, gain.pumped_level) + gain.extra_dephasing;
    if (!(width > 0)) throw DomainError("Raman gain needs a positive two-photon width");
    const double delta = detuning - (atom.control->detuning + Em - Emp);
    const cd lorentz = 1.0 / (delta + 0.5 * I * width);
    const double pop = 1.0 / from.size();
    for (int m : from)
        for (int mp : to) {
            Vector3cd K = Vector3cd::Zero();
            for (size_t n = 0; n < e.size(); ++n) {
                const cd v = atom.control->V(n, m);
                if (v == cd(0.0)) continue;
                const cd den = atom.control->detuning + Em - e[n].energy + 0.5 * I;
                for (int mu = 0; mu < 3; ++mu) K(mu) += std::conj(D[mu](n, mp)) * v / den;
            }
            chi += pop * K * K.adjoint() * lorentz;
        }
    return chi * n_pumped;
}

}  // namespace coldscatter::medium
