#pragma once

#include "celldiag/cell.hpp"
#include "celldiag/detector.hpp"
#include "celldiag/gp.hpp"
#include "celldiag/identify.hpp"
#include "celldiag/observer.hpp"
#include "celldiag/sim.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace celldiag {

struct ThresholdSpec {
    enum class Mode { fixed, calibrate };
    Mode mode = Mode::fixed;
    double delta_V = 0.01;  ///< [V]
    double delta_T = 0.5;   ///< [K]
    int calibration_runs = 3;
};

/// One self-contained experiment: cell, protocol, fault/uncertainty configs,
/// observer design, GP hyperparameters, threshold source, seeds, output dir.
struct Scenario {
    std::string name;
    std::filesystem::path cell_config;
    Protocol protocol;
    FaultConfig fault;
    UncertaintyConfig uncertainty;

    std::vector<double> spectrum_v;  ///< explicit observer spectra; empty = damped open loop
    std::vector<double> spectrum_t;
    double damping_v = 0.999;  ///< open-loop eigenvalue damping when spectrum unset
    double damping_t = 0.75;
    bool relinearize = false;
    double linearization_soc = 0.5;
    std::map<std::string, double> observer_scale;  ///< observer-model parameter error factors

    GPHyper hyper_v, hyper_t;
    long gp_cap = 500;
    int learn_cycles = 0;  ///< no-fault training cycles run before detection

    ThresholdSpec thresholds;
    std::uint64_t seed = 1;
    std::filesystem::path output_dir;
    double initial_soc = 0.05;
    double initial_T = 298.15;
    double T_inf = 298.15;
    int cycle_index = 0;

    /// Parse a flat key-value scenario file. Relative paths resolve against
    /// the scenario file directory; CELLDIAG_OUT_DIR overrides output_dir.
    static Scenario load(const std::filesystem::path& path);

    [[nodiscard]] CellParams load_cell() const;
};

/// Observer-side context: the (possibly deliberately mis-scaled) model,
/// linearization, and designed gains.
struct DetectorSetup {
    CellParams params;
    StateSpace ss;
    ObserverGains gains;
    ObserverOptions options;
    std::vector<double> spectrum_v, spectrum_t;
};

/// Real parts of the open-loop eigenvalues scaled by `damping`, ascending.
[[nodiscard]] std::vector<double> default_spectrum(const Eigen::MatrixXd& A, double damping);

[[nodiscard]] DetectorSetup make_detector_setup(const Scenario& scenario);

/// Run both observers over a record; the observer initializes from the
/// record's initial-condition metadata.
[[nodiscard]] ResidualTrace run_observer(const CycleRecord& record, const DetectorSetup& setup,
                                         const GPModel* gp_v, const GPModel* gp_t);

// --- command entry points (shared by the CLI and the test suites) ---

struct SimulateResult {
    std::filesystem::path record_csv;
    std::filesystem::path meta_json;
    CycleRecord record;
};

/// `simulate`: run the scenario protocol once and persist the record.
[[nodiscard]] SimulateResult cmd_simulate(const Scenario& scenario);

struct DetectResult {
    std::filesystem::path residual_csv;
    std::filesystem::path decision_json;
    ResidualTrace trace;
    FaultDecision decision;
    Thresholds thresholds;
    bool gp_loaded = false;
};

/// `detect`: observers + decision over a persisted record. GP artifacts are
/// read from the scenario output dir when present; absent artifacts mean
/// omega_hat = 0 (with a warning in the decision JSON).
[[nodiscard]] DetectResult cmd_detect(const Scenario& scenario,
                                      const std::filesystem::path& record_csv);

/// `calibrate`: run no-fault cycles, collect residuals, set thresholds to the
/// per-channel max |r|, persist to a key-value file. Returns the thresholds.
[[nodiscard]] Thresholds cmd_calibrate(const Scenario& scenario);

struct LearnResult {
    std::filesystem::path gp_v_json;
    std::filesystem::path gp_t_json;
    std::filesystem::path ledger_json;
    int version = 0;
    bool refused = false;  ///< record was faulty; learning gate refused it
};

/// `learn`: fit both GP uncertainty models on a (clean) record and persist
/// them. A record whose decision flags a fault is refused.
[[nodiscard]] LearnResult cmd_learn(const Scenario& scenario,
                                    const std::filesystem::path& record_csv);

struct VerifyResult {
    std::vector<VerificationReport> sweep_v, sweep_t;
    bool pass = false;  ///< both observers have a passing gamma
    std::string table;  ///< aligned margin table
    std::filesystem::path report_json;
};

/// `verify`: gamma-sweep Lyapunov audit of the scenario's observer gains.
[[nodiscard]] VerifyResult cmd_verify(const Scenario& scenario);

/// `identify`: problem JSON in, identified cell config + report JSON out.
struct IdentifyFiles {
    std::filesystem::path identified_config;
    std::filesystem::path report_json;
    Eigen::VectorXd theta;
    IdentifyReport report;
};
[[nodiscard]] IdentifyFiles cmd_identify(const std::filesystem::path& problem_json,
                                         const std::filesystem::path& output_dir);

/// `schema-check`: validate a persisted artifact against its schema.
/// Recognizes record CSVs, residual CSVs, decision/gp/ledger/campaign JSONs,
/// and threshold/cell key-value configs. Returns a human-readable error list.
[[nodiscard]] std::vector<std::string> schema_check(const std::filesystem::path& artifact);

// --- campaigns ---

struct CampaignRow {
    std::string name;
    bool ok = false;
    std::string error;
    bool detected_v = false, detected_t = false;
    double latency_v = -1.0, latency_t = -1.0;
    int false_alarms = 0;
    double value = 0.0;  ///< sweep coordinate (amplitude, factor, ...)
};

struct CampaignSummary {
    std::string name;
    std::vector<CampaignRow> rows;
    std::optional<double> min_detectable_W;  ///< from a thermal bisection sweep
    std::optional<double> false_alarm_onset_factor;
    bool all_ok = false;
    std::filesystem::path summary_json;
    std::filesystem::path summary_txt;
};

/// Run a campaign JSON: scenario list (parallel, bounded worker pool) plus
/// optional sweeps (thermal-amplitude bisection, observer-parameter sweep).
/// CELLDIAG_WORKERS overrides `workers`; 0 means hardware concurrency.
[[nodiscard]] CampaignSummary run_campaign(const std::filesystem::path& campaign_json,
                                           unsigned workers = 0);

/// Single-scenario detection flow used by campaigns: optional training
/// cycles, one simulate, one detect, latency extraction.
[[nodiscard]] CampaignRow run_scenario_flow(const Scenario& scenario);

}  // namespace celldiag
