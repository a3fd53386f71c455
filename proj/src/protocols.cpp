#include "coldscatter/protocols.hpp"

#include "coldscatter/errors.hpp"

#include <cmath>
#include <limits>

namespace coldscatter::protocols {

namespace {

void check_nbar(double n_bar) {
    if (!(n_bar >= 0.0) || !std::isfinite(n_bar)) throw DomainError("mean photon number must be finite and >= 0");
}

}  // namespace

double schmidt_coefficient(double n_bar, std::int64_t m, std::int64_t n) {
    check_nbar(n_bar);
    if (m < 0 || n < 0) throw DomainError("Schmidt indices must be non-negative");
    const double sign = (n % 2 == 0) ? 1.0 : -1.0;
    if (n_bar == 0.0) return (m == 0 && n == 0) ? 1.0 : 0.0;
    const double half = 0.5 * static_cast<double>(m + n);
    const double l1 = std::log1p(n_bar);
    return sign * std::exp(half * (std::log(n_bar) - l1) - l1);
}

void PsiMinusState::validate() const {
    check_nbar(n_bar);
    if (n_max < 0) throw DomainError("truncation must be >= 0");
}

double PsiMinusState::truncated_norm() const {
    validate();
    double sum = 0.0, comp = 0.0;  // Neumaier
    for (int m = 0; m <= n_max; ++m)
        for (int n = 0; n <= n_max; ++n) {
            const double v = schmidt_coefficient(n_bar, m, n);
            const double t = v * v;
            const double s = sum + t;
            comp += std::abs(sum) >= std::abs(t) ? (sum - s) + t : (t - s) + sum;
            sum = s;
        }
    return sum + comp;
}

double tail_bound(double n_bar, int n_max) {
    check_nbar(n_bar);
    if (n_max < 0) throw DomainError("truncation must be >= 0");
    if (n_bar == 0.0) return 0.0;
    const double lx = std::log(n_bar) - std::log1p(n_bar);
    return 2.0 * std::exp((n_max + 1.0) * lx);
}

int truncation_for(double n_bar, double tol) {
    check_nbar(n_bar);
    if (!(tol > 0.0) || !(tol < 1.0)) throw DomainError("tolerance must lie in (0, 1)");
    if (n_bar == 0.0) return 0;
    const double lx = std::log(n_bar) - std::log1p(n_bar);
    const double need = std::log(tol / 2.0) / lx - 1.0;
    if (!(need < std::numeric_limits<int>::max() - 2.0)) throw RangeError("truncation too large for this tolerance");
    int N = std::max(0, static_cast<int>(std::ceil(need)));
    while (N > 0 && tail_bound(n_bar, N - 1) <= tol) --N;
    while (tail_bound(n_bar, N) > tol) ++N;
    return N;
}

double mz_phase(double xi, double n_atoms) {
    if (!(xi >= 0.0) || !std::isfinite(xi)) throw DomainError("xi must be finite and >= 0");
    if (!(n_atoms >= 0.0) || !std::isfinite(n_atoms)) throw DomainError("atom number must be finite and >= 0");
    return xi * n_atoms;
}

double mz_signal(double i_mean, double xi, double n_atoms) {
    if (!std::isfinite(i_mean)) throw DomainError("mean current must be finite");
    return i_mean * mz_phase(xi, n_atoms);
}

}  // namespace coldscatter::protocols
