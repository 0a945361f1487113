#pragma once

#include "celldiag/cell.hpp"

#include <Eigen/Core>

namespace celldiag {

/// Discrete-time state-space matrices, forward-Euler at step dt.
/// C1/D1/offset are filled by linearize_voltage; the heat forcing enters the
/// thermal update separately (identical per node) and is not folded into B2.
struct StateSpace {
    Eigen::MatrixXd A1;      ///< N x N
    Eigen::VectorXd B1;      ///< N (current input)
    Eigen::MatrixXd A2;      ///< M x M
    Eigen::VectorXd B2;      ///< M (ambient-temperature input)
    Eigen::RowVectorXd C2;   ///< 1 x M, surface-node selector
    Eigen::RowVectorXd C1;   ///< 1 x N, from linearization
    double D1 = 0.0;         ///< current feedthrough, from linearization
    double offset = 0.0;     ///< affine term of the linearized voltage output
    double dt = 0.0;
};

/// Euler-discretized spherical-diffusion matrices (A1, B1).
/// Throws StabilityError when dt violates the explicit-Euler bound.
void build_electrochemical(const CellParams& p, Eigen::MatrixXd& A1, Eigen::VectorXd& B1);

/// Euler-discretized cylindrical-conduction matrices (A2, B2, C2) with the
/// convection boundary row. Same stability guard as build_electrochemical.
void build_thermal(const CellParams& p, Eigen::MatrixXd& A2, Eigen::VectorXd& B2,
                   Eigen::RowVectorXd& C2);

/// Both builders plus C2; C1/D1/offset left zero.
[[nodiscard]] StateSpace build_state_space(const CellParams& p);

/// dt * max |generator diagonal| for the electrochemical stencil; must be <= 1.
[[nodiscard]] double electrochemical_stability_ratio(const CellParams& p);
/// Same for the thermal stencil.
[[nodiscard]] double thermal_stability_ratio(const CellParams& p);

}  // namespace celldiag
