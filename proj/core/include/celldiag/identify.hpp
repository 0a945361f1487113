#pragma once

#include "celldiag/cell.hpp"
#include "celldiag/sim.hpp"

#include <Eigen/Core>

#include <array>
#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace celldiag {

/// Identified parameter vector order: {D, A_a, A_c, R_b, m_Li, eps_a, eps_c,
/// h_conv, C_p, k_th}.
inline constexpr int kThetaDim = 10;
inline constexpr std::array<const char*, kThetaDim> kThetaNames = {
    "D", "A_a", "A_c", "R_b", "m_Li", "eps_a", "eps_c", "h_conv", "C_p", "k_th"};

[[nodiscard]] Eigen::VectorXd theta_from_params(const CellParams& p);
[[nodiscard]] CellParams params_with_theta(const CellParams& base, const Eigen::VectorXd& theta);

/// Weighted-RMS fit of model voltage/temperature to one measured cycle.
struct IdentificationProblem {
    std::vector<CycleRecord> data;  ///< measured cycles (current profile replayed)
    CellParams base;                ///< carries non-identified constants and OCP maps
    Eigen::VectorXd theta0;
    Eigen::VectorXd lower, upper;
    double weight_v = 1.0;          ///< voltage-RMS weight
    double weight_t = 1.0;          ///< temperature-RMS weight

    void validate() const;
};

/// weight_v * rms(V_model - V_meas) + weight_t * rms(T_model - T_meas),
/// simulated open-loop under each record's current profile. Simulation
/// failures return a large finite penalty so the optimizer can step away.
[[nodiscard]] double rms_cost(const Eigen::VectorXd& theta, const IdentificationProblem& problem);

struct IdentifyOptions {
    int budget = 4000;       ///< cost-evaluation budget across restarts
    int restarts = 4;        ///< random restarts (seeded)
    unsigned seed = 1;
    double simplex_step = 0.12;  ///< initial simplex size in normalized coordinates
    double tol = 1e-10;          ///< simplex cost-spread convergence tolerance
};

/// Bound-constrained simplex minimization of an arbitrary objective on
/// [lower, upper] (restarted Nelder-Mead on normalized coordinates).
struct SimplexResult {
    Eigen::VectorXd x;
    double cost = 0.0;
    bool converged = false;
    long evaluations = 0;
};

[[nodiscard]] SimplexResult simplex_minimize(
    const std::function<double(const Eigen::VectorXd&)>& objective, const Eigen::VectorXd& x0,
    const Eigen::VectorXd& lower, const Eigen::VectorXd& upper, const IdentifyOptions& options = {},
    std::vector<double>* trace = nullptr);

struct SensitivityEntry {
    std::string name;
    double cost_delta = 0.0;  ///< max |cost change| under +-5% perturbation
    bool sensitive = false;
};

struct IdentifyReport {
    double initial_cost = 0.0;
    double final_cost = 0.0;
    long evaluations = 0;
    long penalized_evaluations = 0;
    bool converged = false;
    std::vector<double> trace;  ///< best cost after each improvement
    std::vector<SensitivityEntry> sensitivity;
};

/// Bound-constrained simplex search with restarts. Deterministic per seed;
/// the result never leaves [lower, upper] and never exceeds cost(theta0).
[[nodiscard]] std::pair<Eigen::VectorXd, IdentifyReport> identify(
    const IdentificationProblem& problem, const IdentifyOptions& options = {});

}  // namespace celldiag
