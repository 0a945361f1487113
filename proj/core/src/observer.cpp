#include "celldiag/observer.hpp"

#include "celldiag/errors.hpp"
#include "celldiag/voltage.hpp"

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <string>
#include <tuple>

namespace celldiag {

Eigen::VectorXd design_gain(const Eigen::MatrixXd& A, const Eigen::RowVectorXd& C,
                            const std::vector<double>& spectrum) {
    const long n = A.rows();
    if (A.cols() != n || C.cols() != n) throw ConfigError("design_gain: dimension mismatch");
    if (static_cast<long>(spectrum.size()) != n) {
        throw ConfigError("design_gain: need one eigenvalue target per state");
    }
    for (double s : spectrum) {
        if (!(std::abs(s) < 1.0)) {
            throw ConfigError("design_gain: targets must lie strictly inside the unit disk");
        }
    }

    Eigen::MatrixXd obs(n, n);
    Eigen::RowVectorXd row = C;
    for (long i = 0; i < n; ++i) {
        obs.row(i) = row;
        row = row * A;
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(obs);
    qr.setThreshold(1e-14);
    if (qr.rank() < n) {
        throw DesignError("design_gain: (A, C) unobservable, observability rank " +
                          std::to_string(qr.rank()) + " < " + std::to_string(n));
    }

    // desired characteristic polynomial coefficients (monic, ascending powers)
    std::vector<double> coeff(static_cast<std::size_t>(n) + 1, 0.0);
    coeff[0] = 1.0;  // working poly starts as "1"
    std::size_t deg = 0;
    for (double lambda : spectrum) {
        ++deg;
        std::vector<double> next(coeff);
        for (std::size_t i = deg; i > 0; --i) next[i] = coeff[i - 1] - lambda * coeff[i];
        next[0] = -lambda * coeff[0];
        coeff = next;
    }

    // q(A) by Horner on matrices: q(A) = A^n + c_{n-1} A^{n-1} + ... + c_0 I
    Eigen::MatrixXd qA = Eigen::MatrixXd::Identity(n, n);
    for (long i = n - 1; i >= 0; --i) {
        qA = qA * A + coeff[static_cast<std::size_t>(i)] * Eigen::MatrixXd::Identity(n, n);
    }

    Eigen::VectorXd e_n = Eigen::VectorXd::Zero(n);
    e_n(n - 1) = 1.0;
    const Eigen::VectorXd w = qr.solve(e_n);
    return qA * w;
}

Eigen::MatrixXd solve_discrete_lyapunov(const Eigen::MatrixXd& A, const Eigen::MatrixXd& Q) {
    const long n = A.rows();
    if (A.cols() != n || Q.rows() != n || Q.cols() != n) {
        throw ConfigError("solve_discrete_lyapunov: dimension mismatch");
    }
    // vec(A^T P A) = (A^T kron A^T) vec(P)  =>  (I - A^T kron A^T) vec(P) = vec(Q)
    const Eigen::MatrixXd At = A.transpose();
    Eigen::MatrixXd kron(n * n, n * n);
    for (long i = 0; i < n; ++i) {
        for (long j = 0; j < n; ++j) {
            kron.block(i * n, j * n, n, n) = At(i, j) * At;
        }
    }
    const Eigen::MatrixXd lhs = Eigen::MatrixXd::Identity(n * n, n * n) - kron;
    Eigen::VectorXd q_vec(n * n);
    for (long c = 0; c < n; ++c) q_vec.segment(c * n, n) = Q.col(c);
    const Eigen::VectorXd p_vec = lhs.partialPivLu().solve(q_vec);
    Eigen::MatrixXd P(n, n);
    for (long c = 0; c < n; ++c) P.col(c) = p_vec.segment(c * n, n);
    return 0.5 * (P + P.transpose());
}

VerificationReport verify_lyapunov(const Eigen::MatrixXd& A, const Eigen::RowVectorXd& C,
                                   const Eigen::VectorXd& L, double gamma) {
    if (!(gamma > 0.0)) throw ConfigError("verify_lyapunov: gamma must be positive");
    VerificationReport rep;
    rep.gamma = gamma;

    const Eigen::MatrixXd A_cl = A - L * C;
    rep.spectral_radius = A_cl.eigenvalues().cwiseAbs().maxCoeff();
    if (rep.spectral_radius >= 1.0) {
        rep.stable = false;
        rep.passing = false;
        return rep;
    }
    rep.stable = true;

    const long n = A.rows();
    rep.P = solve_discrete_lyapunov(A_cl, Eigen::MatrixXd::Identity(n, n));

    const Eigen::MatrixXd lyap = A_cl.transpose() * rep.P * A_cl - rep.P;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (lyap + lyap.transpose()));
    rep.lambda_Q = es.eigenvalues().minCoeff();

    Eigen::JacobiSVD<Eigen::MatrixXd> svd(A_cl.transpose() * rep.P);
    rep.x = svd.singularValues()(0);

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ep(rep.P);
    rep.lambda_P_max = ep.eigenvalues().maxCoeff();
    const double lambda_p_min = ep.eigenvalues().minCoeff();

    rep.margin = rep.lambda_Q + gamma * rep.x;
    rep.passing = rep.margin < 0.0 && lambda_p_min > 0.0;
    return rep;
}

std::vector<VerificationReport> verify_gamma_sweep(const Eigen::MatrixXd& A,
                                                   const Eigen::RowVectorXd& C,
                                                   const Eigen::VectorXd& L, double gamma_lo,
                                                   double gamma_hi, int points) {
    if (!(gamma_lo > 0.0 && gamma_hi >= gamma_lo) || points < 1) {
        throw ConfigError("verify_gamma_sweep: bad gamma grid");
    }
    std::vector<VerificationReport> out;
    out.reserve(points);
    for (int i = 0; i < points; ++i) {
        const double f = points == 1 ? 0.0 : static_cast<double>(i) / (points - 1);
        const double gamma = gamma_lo * std::pow(gamma_hi / gamma_lo, f);
        out.push_back(verify_lyapunov(A, C, L, gamma));
    }
    return out;
}

std::optional<VerificationReport> best_margin(const std::vector<VerificationReport>& sweep) {
    std::optional<VerificationReport> best;
    for (const auto& r : sweep) {
        if (!r.passing) continue;
        if (!best || r.margin < best->margin) best = r;
    }
    return best;
}

double ultimate_bound(const VerificationReport& report, double eta_bound) {
    if (!report.passing) throw DesignError("ultimate_bound: undefined for a failing report");
    if (eta_bound < 0.0) throw ConfigError("ultimate_bound: eta_bound must be >= 0");
    const double num = report.lambda_P_max + report.x / report.gamma;
    const double radius2 = -num / report.margin * eta_bound * eta_bound;
    return std::sqrt(std::max(radius2, 0.0));
}

namespace {

// f2 term of the thermal observer: heat generation from the estimated
// concentration and the measured voltage, spread uniformly over the nodes.
// The estimated surface stoichiometry is clamped to the OCP domains so a
// transiently-off estimate cannot throw; real divergence trips the envelope.
double observer_heat_rate(const Eigen::VectorXd& z1_hat, double current, double v_meas,
                          const CellParams& p) {
    double c_surf = z1_hat(z1_hat.size() - 1);
    const double lo_a = p.ocp_anode.theta_min() * p.c_max_a;
    const double hi_a = p.ocp_anode.theta_max() * p.c_max_a;
    c_surf = std::clamp(c_surf, std::max(lo_a, 1e-9 * p.c_max_a),
                        std::min(hi_a, (1.0 - 1e-9) * p.c_max_a));
    // clamp again through the cathode window
    const double th_c = p.theta_cathode(c_surf);
    const double th_c_cl =
        std::clamp(th_c, p.ocp_cathode.theta_min(), p.ocp_cathode.theta_max());
    const double th_a = p.theta_anode(c_surf);
    const double thermo = p.ocp_cathode.value(th_c_cl) + p.ocp_anode.value(th_a);
    const double q_dot = current * (thermo - v_meas);
    return q_dot / (p.rho * p.C_p * p.V_b);
}

bool estimate_sane(const Eigen::VectorXd& z1_hat, const Eigen::VectorXd& z2_hat,
                   const CellParams& p) {
    for (long i = 0; i < z1_hat.size(); ++i) {
        if (!std::isfinite(z1_hat[i]) || z1_hat[i] < -0.5 * p.c_max_a ||
            z1_hat[i] > 1.5 * p.c_max_a) {
            return false;
        }
    }
    for (long j = 0; j < z2_hat.size(); ++j) {
        if (!std::isfinite(z2_hat[j]) || z2_hat[j] < 100.0 || z2_hat[j] > 1000.0) return false;
    }
    return true;
}

}  // namespace

std::pair<ObserverState, Residuals> observer_step(const ObserverState& obs,
                                                  const MeasurementSample& meas,
                                                  const ObserverGains& gains, const GPModel* gp_v,
                                                  const GPModel* gp_t, const StateSpace& ss,
                                                  const CellParams& params,
                                                  const ObserverOptions& options) {
    Eigen::RowVectorXd c1 = ss.C1;
    double d1 = ss.D1;
    double offset = ss.offset;
    if (options.relinearize_each_step) {
        const VoltageLinearization lin =
            linearize_voltage(params, obs.z1_hat, meas.I, obs.z2_hat.mean());
        c1 = lin.C1;
        d1 = lin.D1;
        offset = lin.offset;
    }

    // only the posterior mean corrects the output; the variance is logged
    double omega_v_hat = 0.0, var_v = 0.0;
    if (gp_v && gp_v->trained()) {
        Eigen::VectorXd q(2);
        q << meas.I, meas.V_meas;
        std::tie(omega_v_hat, var_v) = gp_v->predict(q);
    }
    double omega_t_hat = 0.0, var_t = 0.0;
    if (gp_t && gp_t->trained()) {
        Eigen::VectorXd q(3);
        q << meas.I, meas.V_meas, meas.T_meas;
        std::tie(omega_t_hat, var_t) = gp_t->predict(q);
    }

    Residuals res;
    res.t = meas.t;
    res.gp_var_V = var_v;
    res.gp_var_T = var_t;
    const double y1_hat = c1 * obs.z1_hat + d1 * meas.I + offset + omega_v_hat;
    res.r_V = meas.V_meas - y1_hat;
    const double y2_hat = ss.C2 * obs.z2_hat + omega_t_hat;
    res.r_T = meas.T_meas - y2_hat;

    ObserverState next;
    next.t = meas.t + ss.dt;
    next.z1_hat = ss.A1 * obs.z1_hat + ss.B1 * meas.I + gains.L_V * res.r_V;
    const double f2 = ss.dt * observer_heat_rate(obs.z1_hat, meas.I, meas.V_meas, params);
    next.z2_hat = ss.A2 * obs.z2_hat + Eigen::VectorXd::Constant(obs.z2_hat.size(), f2) +
                  ss.B2 * meas.T_inf + gains.L_T * res.r_T;

    if (!estimate_sane(next.z1_hat, next.z2_hat, params)) {
        throw DivergedError("observer_step: estimate left sanity envelope at t = " +
                                std::to_string(meas.t),
                            static_cast<long>(meas.t / std::max(ss.dt, 1e-12)));
    }
    return {next, res};
}

}  // namespace celldiag
