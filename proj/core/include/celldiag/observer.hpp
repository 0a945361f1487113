#pragma once

#include "celldiag/cell.hpp"
#include "celldiag/gp.hpp"
#include "celldiag/state_space.hpp"

#include <Eigen/Core>

#include <optional>
#include <utility>
#include <vector>

namespace celldiag {

/// Output-injection gains for the two detection observers.
struct ObserverGains {
    Eigen::VectorXd L_V;  ///< electrochemical observer gain, length N
    Eigen::VectorXd L_T;  ///< thermal observer gain, length M
};

struct ObserverState {
    Eigen::VectorXd z1_hat;
    Eigen::VectorXd z2_hat;
    double t = 0.0;
};

struct Residuals {
    double r_V = 0.0;  ///< voltage residual [V]
    double r_T = 0.0;  ///< thermal residual [K]
    double t = 0.0;
    double gp_var_V = 0.0;  ///< GP posterior variance at the query (0 without a model)
    double gp_var_T = 0.0;
};

/// Single-output eigenvalue placement (Ackermann). `spectrum` must hold real
/// targets strictly inside the unit disk, one per state. Throws DesignError
/// for unobservable pairs.
[[nodiscard]] Eigen::VectorXd design_gain(const Eigen::MatrixXd& A, const Eigen::RowVectorXd& C,
                                          const std::vector<double>& spectrum);

/// Lyapunov-condition audit for a gain: P solves
/// (A-LC)^T P (A-LC) - P = -I, and the margin is lambda_Q + gamma * x with
/// x = ||(A-LC)^T P||. Passing requires margin < 0.
struct VerificationReport {
    bool stable = false;          ///< A - LC Schur stable (P exists)
    bool passing = false;         ///< margin < 0
    double spectral_radius = 0.0;
    Eigen::MatrixXd P;
    double lambda_Q = 0.0;        ///< min eigenvalue of (A-LC)^T P (A-LC) - P
    double x = 0.0;               ///< ||(A-LC)^T P|| (spectral norm)
    double gamma = 0.0;
    double margin = 0.0;          ///< lambda_Q + gamma * x
    double lambda_P_max = 0.0;
};

[[nodiscard]] VerificationReport verify_lyapunov(const Eigen::MatrixXd& A,
                                                 const Eigen::RowVectorXd& C,
                                                 const Eigen::VectorXd& L, double gamma);

/// Runs verify_lyapunov over a logarithmic gamma grid and returns all reports.
[[nodiscard]] std::vector<VerificationReport> verify_gamma_sweep(
    const Eigen::MatrixXd& A, const Eigen::RowVectorXd& C, const Eigen::VectorXd& L,
    double gamma_lo = 1e-6, double gamma_hi = 1.0, int points = 13);

/// Report with the most negative margin from a sweep; nullopt if none passes.
[[nodiscard]] std::optional<VerificationReport> best_margin(
    const std::vector<VerificationReport>& sweep);

/// Guaranteed residual ball under disturbances bounded by `eta_bound`:
/// radius^2 = -(lambda_P_max + x/gamma) / margin * eta_bound^2.
/// Throws DesignError for a failing report.
[[nodiscard]] double ultimate_bound(const VerificationReport& report, double eta_bound);

/// Solve A^T P A - P = -Q for symmetric Q (Kronecker vectorization; intended
/// for the modest state dimensions used here).
[[nodiscard]] Eigen::MatrixXd solve_discrete_lyapunov(const Eigen::MatrixXd& A,
                                                      const Eigen::MatrixXd& Q);

struct MeasurementSample {
    double t = 0.0;
    double I = 0.0;
    double V_meas = 0.0;
    double T_meas = 0.0;
    double T_inf = 298.15;
};

struct ObserverOptions {
    /// Recompute C1/D1/offset at the current estimate each step instead of
    /// using the fixed operating point carried by the StateSpace.
    bool relinearize_each_step = false;
};

/// One step of both detection observers. GP uncertainty estimates are queried
/// at the measured inputs; pass nullptr to run with omega_hat = 0. `ss` must
/// carry C1/D1/offset. Returns the updated state and residuals at sample time.
[[nodiscard]] std::pair<ObserverState, Residuals> observer_step(
    const ObserverState& obs, const MeasurementSample& meas, const ObserverGains& gains,
    const GPModel* gp_v, const GPModel* gp_t, const StateSpace& ss, const CellParams& params,
    const ObserverOptions& options = {});

}  // namespace celldiag
