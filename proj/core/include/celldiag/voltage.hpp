#pragma once

#include "celldiag/cell.hpp"

#include <Eigen/Core>

namespace celldiag {

/// Nonlinear terminal-voltage map. Positive current discharges the cell, so
/// the ohmic and electrode-overpotential terms lower the voltage for I > 0.
/// Throws DomainError (naming the electrode) when a surface stoichiometry
/// leaves its OCP map domain.
[[nodiscard]] double terminal_voltage(const Eigen::VectorXd& z1, double current,
                                      double temperature_K, const CellParams& p);

/// Irreversible heat generation [W]: current times the gap between electrode
/// thermodynamic potential and terminal voltage.
[[nodiscard]] double heat_generation(const Eigen::VectorXd& z1, double current,
                                     double v_term, const CellParams& p);

/// First-order expansion of terminal_voltage around an operating point.
struct VoltageLinearization {
    Eigen::RowVectorXd C1;  ///< single nonzero entry at the surface node
    double D1 = 0.0;        ///< dV/dI at the operating point
    double offset = 0.0;    ///< V(op) - C1*z1_op - D1*I_op, carried by callers
    bool one_sided_derivative = false;  ///< OCP slope taken one-sided at a domain edge
};

[[nodiscard]] VoltageLinearization linearize_voltage(const CellParams& p,
                                                     const Eigen::VectorXd& z1_op, double current_op,
                                                     double temperature_op_K);

}  // namespace celldiag
