#pragma once

#include "celldiag/cell.hpp"
#include "celldiag/state_space.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace celldiag {

enum class ProtocolKind { constant_current, cccv, fast_charge_profile, csv_replay };

[[nodiscard]] std::string to_string(ProtocolKind kind);
[[nodiscard]] ProtocolKind protocol_kind_from_string(const std::string& s);

/// Charging/discharging protocol. Positive current discharges (sign convention
/// of the plant model), so charge protocols use negative setpoints.
struct Protocol {
    ProtocolKind kind = ProtocolKind::constant_current;
    double current_A = 0.0;    ///< CC setpoint (signed)
    double cv_limit_V = 4.2;   ///< CV hold voltage
    double cutoff_A = 0.1;     ///< CV taper cutoff (magnitude)
    double soc_stop = -1.0;    ///< stop when SOC crosses this (< 0 disables)
    double duration_s = -1.0;  ///< fixed duration (< 0 disables; 0 = single sample)
    double i_max = 10.0;       ///< current magnitude bound
    std::vector<std::pair<double, double>> profile;  ///< (t, I) samples, zero-order hold
    long max_steps = 200000;   ///< non-termination guard

    void validate() const;
};

struct VoltageFault {
    double a1 = 0.0;  ///< exponential-component magnitude [V]
    double a2 = 0.0;  ///< sine-component magnitude [V]
    double mu = 0.0;  ///< exponential phase offset [rad]
    double t_on = 0.0;
    double t_off = 0.0;
    /// Square the exponent (exp(-0.5 (x1-mu)^2) instead of exp(-0.5 (x1-mu))).
    bool gaussian_bump = false;
};

struct ThermalFault {
    double power_W = 0.0;
    double t_on = 0.0;
    double t_off = 0.0;
};

struct FaultConfig {
    std::optional<VoltageFault> voltage;
    std::optional<ThermalFault> thermal;

    [[nodiscard]] bool any() const { return voltage.has_value() || thermal.has_value(); }
    void validate() const;
};

/// Additive voltage fault at time t; zero outside the window. Inside the
/// window x1 ramps linearly over [-pi, pi] and x2 over [pi/3, pi].
[[nodiscard]] double voltage_fault_signal(double t, const FaultConfig& cfg);

/// Injected thermal power [W] at time t; zero outside the window.
[[nodiscard]] double thermal_fault_power(double t, const FaultConfig& cfg);

struct VoltageUncertainty {
    double noise_std = 0.0;           ///< band-limited sensor noise std [V]
    double bias = 0.0;                ///< sensor bias [V]
    double drift_per_s = 0.0;         ///< sensor drift rate [V/s]
    double r_growth_per_cycle = 0.0;  ///< plant R_b growth per cycle (fraction)
};

struct ThermalUncertainty {
    double noise_std = 0.0;          ///< band-limited sensor noise std [K]
    double bias = 0.0;               ///< sensor bias [K]
    double convection_factor = 1.0;  ///< plant h_conv multiplier (model keeps nominal)
    double reversible_heat_W = 0.0;  ///< unmodelled smooth heat surrogate amplitude [W]
};

struct UncertaintyConfig {
    VoltageUncertainty voltage;
    ThermalUncertainty thermal;
    std::uint64_t seed = 0;          ///< fixed per run for reproducibility
    double noise_cutoff_hz = 0.01;   ///< one-pole filter cutoff for sensor noise

    void validate() const;
};

/// Uniformly sampled measurement series of one cycle, with ground-truth
/// channels retained for oracle tests: V_meas = V_true + wV + dV sample-wise.
struct CycleRecord {
    std::vector<double> t, I, V_meas, T_meas;          // measured channels
    std::vector<double> V_true, T_true, dV, dT, wV, wT;  // ground truth

    int cycle_index = 0;
    std::uint64_t seed = 0;
    double dt = 1.0;
    double initial_soc = 0.0;
    double initial_theta_a = 0.0;
    double initial_T = 298.15;
    double T_inf = 298.15;
    Protocol protocol;
    FaultConfig fault;
    UncertaintyConfig uncertainty;

    [[nodiscard]] std::size_t size() const { return t.size(); }
};

/// Per-sample stochastic and slow-drift state of the uncertainty generators.
struct UncertaintyState {
    std::mt19937_64 rng_v;
    std::mt19937_64 rng_t;
    double lp_v = 0.0;  ///< one-pole filter state, voltage noise
    double lp_t = 0.0;  ///< one-pole filter state, thermal noise
    double r_b_factor = 1.0;
    bool primed = false;

    static UncertaintyState seeded(const UncertaintyConfig& cfg, int cycle_index);
};

struct StepOutput {
    double V_true = 0.0, V_meas = 0.0;
    double T_true = 0.0, T_meas = 0.0;   // surface node
    double dV = 0.0, dT_power = 0.0;     // injected fault signal / power
    double wV = 0.0, wT = 0.0;           // uncertainty realizations
    double Q_dot = 0.0;                  // heat generation [W], fault excluded
};

/// One forward-Euler plant step: outputs evaluated at the current state, then
/// the state advances by dt. `truth` carries the plant-side parameter set
/// (uncertainty perturbations already applied); `ss` must be built from it.
[[nodiscard]] PlantState step(const PlantState& state, double current, double T_inf,
                              const CellParams& truth, const StateSpace& ss,
                              const FaultConfig& fault, const UncertaintyConfig& unc,
                              UncertaintyState& unc_state, StepOutput& out);

/// Plant-side parameter set for a cycle: R_b growth and convection error applied.
[[nodiscard]] CellParams plant_truth_params(const CellParams& nominal, const UncertaintyConfig& unc,
                                            int cycle_index);

/// Run one protocol to termination. Deterministic for fixed inputs and seed.
[[nodiscard]] CycleRecord run_cycle(const PlantState& initial, const Protocol& protocol,
                                    const FaultConfig& fault, const UncertaintyConfig& unc,
                                    std::uint64_t seed, const CellParams& nominal, double T_inf,
                                    int cycle_index = 0);

// --- persistence (fixed, versioned CSV schema + JSON metadata sidecar) ---

void write_record_csv(const std::filesystem::path& csv_path, const CycleRecord& record);
[[nodiscard]] CycleRecord read_record_csv(const std::filesystem::path& csv_path);

/// Two-column (t, I) CSV for the csv_replay protocol.
[[nodiscard]] std::vector<std::pair<double, double>> read_current_profile(
    const std::filesystem::path& csv_path);

}  // namespace celldiag
