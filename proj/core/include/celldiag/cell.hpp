#pragma once

#include "celldiag/ocp_map.hpp"

#include <Eigen/Core>

#include <filesystem>

namespace celldiag {

/// Physical and geometric constants of the electrochemical-thermal cell model,
/// plus the open-circuit-potential maps. Immutable after construction in
/// practice: treat instances as value objects.
struct CellParams {
    // electrochemical
    double D = 1.022e-14;    ///< anode diffusion coefficient [m^2/s]
    double X = 1e-5;         ///< particle radius [m]
    int N = 5;               ///< electrochemical node count
    double A_a = 0.09;       ///< anode current-collector area [m^2]
    double A_c = 0.048;      ///< cathode current-collector area [m^2]
    double L_a = 7e-5;       ///< anode thickness [m]
    double L_c = 7e-5;       ///< cathode thickness [m]
    double eps_a = 0.8;      ///< anode active-material volume fraction
    double eps_c = 0.6516;   ///< cathode active-material volume fraction
    double R_b = 0.006;      ///< internal resistance [ohm]
    double m_Li = 0.1796;    ///< total lithium [mol]
    double alpha_a = 0.5;    ///< anode charge-transfer coefficient
    double alpha_c = 0.5;    ///< cathode charge-transfer coefficient
    double i0_a = 10.0;      ///< anode exchange current density [A/m^2]
    double i0_c = 10.0;      ///< cathode exchange current density [A/m^2]
    double c_max_a = 3.1e4;  ///< anode saturation concentration [mol/m^3]
    double c_max_c = 8.5e4;  ///< cathode saturation concentration [mol/m^3]

    // thermal
    double Y = 9e-3;      ///< cell radius [m]
    int M = 5;            ///< thermal node count
    double rho = 2700.0;  ///< density [kg/m^3]
    double C_p = 907.0;   ///< specific heat [J/(kg K)]
    double k_th = 1.79;   ///< thermal conductivity [W/(m K)]
    double h_conv = 16.78;  ///< convection coefficient [W/(m^2 K)]
    double V_b = 1.25e-4;   ///< cell volume [m^3]

    // constants
    double F = 96485.33212;  ///< Faraday constant [C/mol]
    double R_gas = 8.31446;  ///< gas constant [J/(mol K)]

    double dt = 1.0;  ///< sample time [s]

    // state-of-charge bookkeeping (placeholders, configurable)
    double q_nominal_Ah = 3.0;     ///< nominal capacity [Ah]
    double theta_a_empty = 0.026;  ///< anode stoichiometry at 0% SOC

    OcpMap ocp_anode;
    OcpMap ocp_cathode;
    std::filesystem::path ocp_anode_source;    ///< where the anode map was loaded from
    std::filesystem::path ocp_cathode_source;  ///< where the cathode map was loaded from

    // --- derived quantities, recomputed on every call ---
    [[nodiscard]] double a_a() const { return 3.0 * eps_a / X; }
    [[nodiscard]] double a_c() const { return 3.0 * eps_c / X; }
    [[nodiscard]] double alpha1() const { return -(eps_a * A_a * L_a) / (eps_c * A_c * L_c); }
    [[nodiscard]] double alpha2() const { return m_Li / (eps_c * A_c * L_c); }
    [[nodiscard]] double delta_x() const { return X / N; }
    [[nodiscard]] double delta_y() const { return Y / M; }
    [[nodiscard]] double gamma1() const { return D / (delta_x() * delta_x()); }
    [[nodiscard]] double gamma2() const { return k_th / (rho * C_p * delta_y() * delta_y()); }
    /// Anode stoichiometry span corresponding to the nominal capacity.
    [[nodiscard]] double theta_a_span() const {
        return q_nominal_Ah * 3600.0 / (F * eps_a * A_a * L_a * c_max_a);
    }
    /// Span as realized by the N-node scheme: the discrete volume-weighted
    /// lithium intake rate is 2N/(2N+1) of the continuum value, so SOC
    /// bookkeeping uses this factor to keep coulomb counting exact.
    [[nodiscard]] double theta_a_span_discrete() const {
        return theta_a_span() * (2.0 * N) / (2.0 * N + 1.0);
    }

    /// Anode surface stoichiometry for a surface concentration.
    [[nodiscard]] double theta_anode(double c_surf) const { return c_surf / c_max_a; }
    /// Cathode surface stoichiometry implied by lithium bookkeeping.
    [[nodiscard]] double theta_cathode(double c_surf) const {
        return (alpha1() * c_surf + alpha2()) / c_max_c;
    }

    /// Throws ConfigError when invariants fail.
    void validate() const;

    static CellParams load(const std::filesystem::path& config_path);
    void save(const std::filesystem::path& config_path) const;
};

/// Concentration and temperature node vectors plus simulation time.
struct PlantState {
    Eigen::VectorXd z1;  ///< lithium concentration per node [mol/m^3], length N
    Eigen::VectorXd z2;  ///< temperature per node [K], length M
    double t = 0.0;      ///< time [s]
};

/// Uniform state at the given SOC and temperature.
[[nodiscard]] PlantState make_uniform_state(const CellParams& p, double soc, double temperature_K);

/// Volume-weighted (i^2 shell weights) mean concentration of z1.
[[nodiscard]] double mean_concentration(const Eigen::VectorXd& z1);

/// Radius-weighted mean temperature of z2 (cylindrical shells).
[[nodiscard]] double mean_temperature(const Eigen::VectorXd& z2);

/// SOC implied by the volume-mean anode stoichiometry.
[[nodiscard]] double soc_of(const CellParams& p, const PlantState& s);

/// Sanity envelope check; returns false when z1 leaves [0, c_max_a] or z2 leaves [200, 500] K.
[[nodiscard]] bool state_within_envelope(const CellParams& p, const PlantState& s);

}  // namespace celldiag
