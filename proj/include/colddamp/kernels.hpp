#pragma once

// Structure-aware kernels for the ladder-operator algebra.
//
// Every operator the master equations touch (a, a\dag, n, and the rotated
// quadrature X_w = w a\dag + conj(w) a) is banded, so all superoperator
// applications run in O(D^2) instead of the O(D^3) of generic matrix
// products. These kernels are the hot path of both the RK4 theory
// integrator and the stochastic trajectory engine; test_fock and
// test_moments pin them against the generic dense operations.

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <vector>

namespace colddamp::kernels {

using Complex = std::complex<double>;
using Matrix = Eigen::MatrixXcd;

struct SqrtTable {
    std::vector<double> s;  // s[k] = sqrt(k), k = 0..dim

    explicit SqrtTable(int dim) : s(dim + 1) {
        for (int k = 0; k <= dim; ++k) s[k] = std::sqrt(double(k));
    }
    int dim() const { return int(s.size()) - 1; }
};

// out += g_down * D[a] mu + g_up * D[a\dag] mu, where
//   D[a]mu[n,m]     = s(n+1) s(m+1) mu[n+1,m+1] - (n+m)/2 mu[n,m]
//   D[a\dag]mu[n,m] = s(n) s(m) mu[n-1,m-1] - (c_n+c_m)/2 mu[n,m]
// with c_k = k+1 except c_{D-1} = 0 (truncated a a\dag).
inline void add_thermal_dissipators(Matrix& out, const Matrix& mu,
                                    double g_down, double g_up,
                                    const SqrtTable& st) {
    const int D = int(mu.rows());
    const auto& s = st.s;
    for (int m = 0; m < D; ++m) {
        const double cm = (m == D - 1) ? 0.0 : double(m + 1);
        for (int n = 0; n < D; ++n) {
            const double cn = (n == D - 1) ? 0.0 : double(n + 1);
            Complex acc = -g_down * 0.5 * double(n + m) * mu(n, m) -
                          g_up * 0.5 * (cn + cm) * mu(n, m);
            if (n + 1 < D && m + 1 < D)
                acc += g_down * s[n + 1] * s[m + 1] * mu(n + 1, m + 1);
            if (n > 0 && m > 0) acc += g_up * s[n] * s[m] * mu(n - 1, m - 1);
            out(n, m) += acc;
        }
    }
}

// out = X_w * mu with X_w = w a\dag + conj(w) a:
//   (X_w mu)[n,m] = w s(n) mu[n-1,m] + conj(w) s(n+1) mu[n+1,m]
inline void quad_mul_left(Matrix& out, const Matrix& mu, Complex w,
                          const SqrtTable& st) {
    const int D = int(mu.rows());
    const auto& s = st.s;
    const Complex wc = std::conj(w);
    for (int m = 0; m < D; ++m) {
        for (int n = 0; n < D; ++n) {
            Complex acc(0, 0);
            if (n > 0) acc += w * s[n] * mu(n - 1, m);
            if (n + 1 < D) acc += wc * s[n + 1] * mu(n + 1, m);
            out(n, m) = acc;
        }
    }
}

//   (mu X_w)[n,m] = w s(m+1) mu[n,m+1] + conj(w) s(m) mu[n,m-1]
inline void quad_mul_right(Matrix& out, const Matrix& mu, Complex w,
                           const SqrtTable& st) {
    const int D = int(mu.rows());
    const auto& s = st.s;
    const Complex wc = std::conj(w);
    for (int m = 0; m < D; ++m) {
        for (int n = 0; n < D; ++n) {
            Complex acc(0, 0);
            if (m + 1 < D) acc += w * s[m + 1] * mu(n, m + 1);
            if (m > 0) acc += wc * s[m] * mu(n, m - 1);
            out(n, m) = acc;
        }
    }
}

// out = X_w mu + mu X_w (anticommutator)
inline void quad_anticommutator(Matrix& out, const Matrix& mu, Complex w,
                                const SqrtTable& st) {
    const int D = int(mu.rows());
    const auto& s = st.s;
    const Complex wc = std::conj(w);
    for (int m = 0; m < D; ++m) {
        for (int n = 0; n < D; ++n) {
            Complex acc(0, 0);
            if (n > 0) acc += w * s[n] * mu(n - 1, m);
            if (n + 1 < D) acc += wc * s[n + 1] * mu(n + 1, m);
            if (m + 1 < D) acc += w * s[m + 1] * mu(n, m + 1);
            if (m > 0) acc += wc * s[m] * mu(n, m - 1);
            out(n, m) = acc;
        }
    }
}

// out = [X_w, mu]
inline void quad_commutator(Matrix& out, const Matrix& mu, Complex w,
                            const SqrtTable& st) {
    const int D = int(mu.rows());
    const auto& s = st.s;
    const Complex wc = std::conj(w);
    for (int m = 0; m < D; ++m) {
        for (int n = 0; n < D; ++n) {
            Complex acc(0, 0);
            if (n > 0) acc += w * s[n] * mu(n - 1, m);
            if (n + 1 < D) acc += wc * s[n + 1] * mu(n + 1, m);
            if (m + 1 < D) acc -= w * s[m + 1] * mu(n, m + 1);
            if (m > 0) acc -= wc * s[m] * mu(n, m - 1);
            out(n, m) = acc;
        }
    }
}

// tr(X_w mu) for Hermitian mu: real by construction, computed directly from
// the first off-diagonal.
inline double quad_expectation(const Matrix& mu, Complex w,
                               const SqrtTable& st) {
    const int D = int(mu.rows());
    const auto& s = st.s;
    Complex acc(0, 0);
    for (int n = 0; n + 1 < D; ++n)
        acc += w * s[n + 1] * mu(n, n + 1) + std::conj(w) * s[n + 1] * mu(n + 1, n);
    return acc.real();
}

inline double number_expectation(const Matrix& mu) {
    const int D = int(mu.rows());
    double acc = 0.0;
    for (int n = 0; n < D; ++n) acc += double(n) * mu(n, n).real();
    return acc;
}

}  // namespace colddamp::kernels
