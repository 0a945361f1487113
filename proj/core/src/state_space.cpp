#include "celldiag/state_space.hpp"

#include "celldiag/errors.hpp"

#include <cmath>
#include <string>

namespace celldiag {

namespace {

// Continuous-time spherical-diffusion generator. Interior rows use the
// central stencil; the i = 1 row folds the zero-gradient ghost c0 = c1 (whose
// coefficient vanishes anyway); the i = N row folds the one-sided flux ghost,
// which puts the whole current forcing into beta1.
Eigen::MatrixXd electrochemical_generator(const CellParams& p) {
    const int n = p.N;
    const double g = p.gamma1();
    Eigen::MatrixXd G = Eigen::MatrixXd::Zero(n, n);
    G(0, 0) = -2.0 * g;
    if (n > 1) G(0, 1) = 2.0 * g;
    for (int r = 1; r < n - 1; ++r) {
        const double i = r + 1;
        G(r, r - 1) = (1.0 - 1.0 / i) * g;
        G(r, r) = -2.0 * g;
        G(r, r + 1) = (1.0 + 1.0 / i) * g;
    }
    if (n > 1) {
        const double Nn = n;
        G(n - 1, n - 2) = (1.0 - 1.0 / Nn) * g;
        G(n - 1, n - 1) = -(1.0 - 1.0 / Nn) * g;
    }
    return G;
}

// Cylindrical-conduction generator; the j = M row folds the one-sided
// convection ghost, leaving the ambient forcing for B2.
Eigen::MatrixXd thermal_generator(const CellParams& p) {
    const int m = p.M;
    const double g = p.gamma2();
    const double hk = p.delta_y() * p.h_conv / p.k_th;
    Eigen::MatrixXd G = Eigen::MatrixXd::Zero(m, m);
    G(0, 0) = -1.5 * g;
    if (m > 1) G(0, 1) = 1.5 * g;
    for (int r = 1; r < m - 1; ++r) {
        const double j = r + 1;
        G(r, r - 1) = (1.0 - 1.0 / (2.0 * j)) * g;
        G(r, r) = -2.0 * g;
        G(r, r + 1) = (1.0 + 1.0 / (2.0 * j)) * g;
    }
    if (m > 1) {
        const double Mm = m;
        G(m - 1, m - 2) = (1.0 - 1.0 / (2.0 * Mm)) * g;
        G(m - 1, m - 1) = -2.0 * g + (1.0 + 1.0 / (2.0 * Mm)) * g * (1.0 - hk);
    }
    return G;
}

double max_abs_diagonal(const Eigen::MatrixXd& G) {
    return G.diagonal().cwiseAbs().maxCoeff();
}

}  // namespace

double electrochemical_stability_ratio(const CellParams& p) {
    return p.dt * max_abs_diagonal(electrochemical_generator(p));
}

double thermal_stability_ratio(const CellParams& p) {
    return p.dt * max_abs_diagonal(thermal_generator(p));
}

void build_electrochemical(const CellParams& p, Eigen::MatrixXd& A1, Eigen::VectorXd& B1) {
    if (p.N < 2) throw ConfigError("build_electrochemical: node count must be >= 2");
    const Eigen::MatrixXd G = electrochemical_generator(p);
    const double ratio = p.dt * max_abs_diagonal(G);
    if (ratio > 1.0) {
        throw StabilityError("build_electrochemical: dt violates explicit-Euler bound, dt*max|diag| = " +
                                 std::to_string(ratio),
                             ratio);
    }
    A1 = Eigen::MatrixXd::Identity(p.N, p.N) + p.dt * G;
    const double beta1 = -(1.0 + 1.0 / p.N) / (p.a_a() * p.F * p.A_a * p.L_a * p.delta_x());
    B1 = Eigen::VectorXd::Zero(p.N);
    B1(p.N - 1) = p.dt * beta1;
}

void build_thermal(const CellParams& p, Eigen::MatrixXd& A2, Eigen::VectorXd& B2,
                   Eigen::RowVectorXd& C2) {
    if (p.M < 2) throw ConfigError("build_thermal: node count must be >= 2");
    const Eigen::MatrixXd G = thermal_generator(p);
    const double ratio = p.dt * max_abs_diagonal(G);
    if (ratio > 1.0) {
        throw StabilityError("build_thermal: dt violates explicit-Euler bound, dt*max|diag| = " +
                                 std::to_string(ratio),
                             ratio);
    }
    A2 = Eigen::MatrixXd::Identity(p.M, p.M) + p.dt * G;
    const double beta2 =
        (1.0 + 1.0 / (2.0 * p.M)) * p.gamma2() * p.delta_y() * p.h_conv / p.k_th;
    B2 = Eigen::VectorXd::Zero(p.M);
    B2(p.M - 1) = p.dt * beta2;
    C2 = Eigen::RowVectorXd::Zero(p.M);
    C2(p.M - 1) = 1.0;
}

StateSpace build_state_space(const CellParams& p) {
    StateSpace ss;
    build_electrochemical(p, ss.A1, ss.B1);
    build_thermal(p, ss.A2, ss.B2, ss.C2);
    ss.C1 = Eigen::RowVectorXd::Zero(p.N);
    ss.D1 = 0.0;
    ss.offset = 0.0;
    ss.dt = p.dt;
    return ss;
}

}  // namespace celldiag
