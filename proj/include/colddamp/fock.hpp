#pragma once

// Truncated Fock-space operator algebra on dense complex matrices.
//
// Dimensions stay small (D <= ~300) in every scenario of this project, so
// everything is dense; the SME engine has structure-aware kernels of its own
// that are unit-tested against the generic operations here.

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <complex>
#include <utility>

#include "colddamp/errors.hpp"

namespace colddamp::fock {

using Complex = std::complex<double>;
using Matrix = Eigen::MatrixXcd;

struct Operator {
    int dim = 0;
    Matrix m;

    Operator() = default;
    Operator(int d, Matrix mat) : dim(d), m(std::move(mat)) {}

    static Operator zero(int dim) { return {dim, Matrix::Zero(dim, dim)}; }
    static Operator identity(int dim) {
        return {dim, Matrix::Identity(dim, dim)};
    }

    double hermiticity_defect() const {
        return (m - m.adjoint()).cwiseAbs().maxCoeff();
    }
};

inline void require_dim(int dim) {
    if (dim < 2)
        throw invalid_dimension_error("Fock dimension must be >= 2, got " +
                                      std::to_string(dim));
}

inline void require_same_dim(const Operator& a, const Operator& b) {
    if (a.dim != b.dim)
        throw invalid_dimension_error("operator dimension mismatch: " +
                                      std::to_string(a.dim) + " vs " +
                                      std::to_string(b.dim));
}

inline Operator annihilation(int dim) {
    require_dim(dim);
    Matrix a = Matrix::Zero(dim, dim);
    for (int n = 1; n < dim; ++n) a(n - 1, n) = std::sqrt(double(n));
    return {dim, std::move(a)};
}

inline Operator creation(int dim) {
    Operator a = annihilation(dim);
    return {dim, a.m.adjoint()};
}

inline Operator number_operator(int dim) {
    require_dim(dim);
    Matrix n = Matrix::Zero(dim, dim);
    for (int k = 0; k < dim; ++k) n(k, k) = double(k);
    return {dim, std::move(n)};
}

// (z, p) = (a + a\dag, i(a\dag - a)); both Hermitian, [z, p] = 2i away from
// the truncation edge.
inline std::pair<Operator, Operator> quadratures(int dim) {
    Operator a = annihilation(dim);
    Matrix z = a.m + a.m.adjoint().eval();
    Matrix p = Complex(0, 1) * (a.m.adjoint().eval() - a.m);
    return {Operator{dim, std::move(z)}, Operator{dim, std::move(p)}};
}

// D[c]rho = c rho c\dag - (c\dag c rho + rho c\dag c)/2
inline Operator dissipator_apply(const Operator& c, const Operator& rho) {
    require_same_dim(c, rho);
    Matrix cdc = c.m.adjoint() * c.m;
    Matrix out = c.m * rho.m * c.m.adjoint() -
                 0.5 * (cdc * rho.m + rho.m * cdc);
    return {c.dim, std::move(out)};
}

struct DensityMatrix {
    Operator op;
    double trace_tol = 1e-9;

    int dim() const { return op.dim; }

    double trace_defect() const {
        return std::abs(op.m.trace().real() - 1.0) +
               std::abs(op.m.trace().imag());
    }

    double min_eigenvalue() const {
        Eigen::SelfAdjointEigenSolver<Matrix> es(op.m,
                                                 Eigen::EigenvaluesOnly);
        return es.eigenvalues().minCoeff();
    }

    // Trace of an observable against this state; imaginary part discarded
    // (Hermitian observables only).
    double expectation(const Operator& obs) const {
        return (obs.m * op.m).trace().real();
    }

    double top_level_population() const {
        return op.m(op.dim - 1, op.dim - 1).real();
    }

    void check(bool check_eigenvalues = true) const {
        if (trace_defect() > trace_tol)
            throw positivity_error("density-matrix trace defect " +
                                   std::to_string(trace_defect()));
        if (op.hermiticity_defect() > 1e-12)
            throw positivity_error("density matrix not Hermitian");
        if (check_eigenvalues && min_eigenvalue() < -1e-8)
            throw positivity_error("density-matrix eigenvalue " +
                                   std::to_string(min_eigenvalue()));
    }
};

// Smallest truncation whose thermal tail population stays below `tail_tol`
// for mean occupation N, floored at the ceil(12 (N+1)) rule of thumb.
// For N >~ 3.5 the rule of thumb alone leaves a tail slightly above 1e-6,
// so the bound below takes precedence.
inline int default_dim(double n_mean, double tail_tol = 1e-6) {
    int dim = static_cast<int>(std::ceil(12.0 * (n_mean + 1.0)));
    if (dim < 2) dim = 2;
    if (n_mean > 0.0) {
        const double r = n_mean / (n_mean + 1.0);
        // tail(dim) = r^dim for the geometric distribution
        const int tail_dim =
            static_cast<int>(std::ceil(std::log(tail_tol) / std::log(r))) + 1;
        if (tail_dim > dim) dim = tail_dim;
    }
    return dim;
}

inline double thermal_tail(double n_mean, int dim) {
    if (n_mean <= 0.0) return 0.0;
    return std::pow(n_mean / (n_mean + 1.0), double(dim));
}

// Diagonal Boltzmann state p_n \propto (N/(N+1))^n renormalized on the
// truncated space. Requires the tail beyond `dim` to be < 1e-6.
inline DensityMatrix thermal_state(double n_mean, int dim) {
    require_dim(dim);
    if (n_mean < 0.0) throw param_error("thermal_state: N must be >= 0");
    if (thermal_tail(n_mean, dim) >= 1e-6)
        throw truncation_error(
            "truncation-too-small: thermal tail " +
            std::to_string(thermal_tail(n_mean, dim)) + " at dim " +
            std::to_string(dim));

    DensityMatrix rho;
    rho.op = Operator::zero(dim);
    if (n_mean == 0.0) {
        rho.op.m(0, 0) = 1.0;
        return rho;
    }
    const double r = n_mean / (n_mean + 1.0);
    double norm = 0.0;
    for (int n = 0; n < dim; ++n) norm += std::pow(r, double(n));
    for (int n = 0; n < dim; ++n)
        rho.op.m(n, n) = std::pow(r, double(n)) / norm;
    return rho;
}

inline DensityMatrix fock_state(int n, int dim) {
    require_dim(dim);
    if (n < 0 || n >= dim)
        throw invalid_dimension_error("fock_state level out of range");
    DensityMatrix rho;
    rho.op = Operator::zero(dim);
    rho.op.m(n, n) = 1.0;
    return rho;
}

inline void hermitize(Matrix& m) {
    m = 0.5 * (m + m.adjoint().eval());
}

inline void renormalize_trace(Matrix& m) {
    const double tr = m.trace().real();
    m /= tr;
}

}  // namespace colddamp::fock
