#pragma once

#include <cstdint>

namespace coldscatter::protocols {

// Lambda_mn = (-1)^n nbar^{(m+n)/2} / (1 + nbar)^{(m+n)/2 + 1}, evaluated in log space.
double schmidt_coefficient(double n_bar, std::int64_t m, std::int64_t n);

struct PsiMinusState {
    double n_bar = 0.0;  // mean photon number per mode
    int n_max = 0;       // truncation, 0 <= m, n <= n_max

    void validate() const;  // throws DomainError
    // Sum of Lambda^2 over the truncated square (compensated summation).
    double truncated_norm() const;
};

// Upper bound on 1 - truncated norm: 2 x^{N+1} with x = nbar / (1 + nbar).
double tail_bound(double n_bar, int n_max);
// Smallest N with tail_bound(n_bar, N) <= tol.
int truncation_for(double n_bar, double tol);

// Balanced Mach-Zehnder difference current i_minus = i_mean * delta_phi, delta_phi = xi * n_atoms
// (unit proportionality constant).
double mz_phase(double xi, double n_atoms);
double mz_signal(double i_mean, double xi, double n_atoms);

}  // namespace coldscatter::protocols
