#pragma once

#include "celldiag/gp.hpp"
#include "celldiag/observer.hpp"
#include "celldiag/sim.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace celldiag {

/// Residual thresholds with calibration provenance.
struct Thresholds {
    double delta_V = 0.0;  ///< [V], strictly positive
    double delta_T = 0.0;  ///< [K], strictly positive
    std::vector<std::string> provenance;

    void validate() const;
};

/// Time-aligned residual series, the detector's input.
struct ResidualTrace {
    std::vector<double> t;
    std::vector<double> r_V;
    std::vector<double> r_T;

    [[nodiscard]] std::size_t size() const { return t.size(); }
};

/// Per-sample comparison outcome. A flag is set iff |r| > delta at that
/// sample (boundary |r| = delta counts as no fault).
struct FaultDecision {
    std::vector<std::uint8_t> voltage_flags;
    std::vector<std::uint8_t> thermal_flags;
    std::optional<double> first_crossing_V;  ///< sample time of first |r_V| > delta_V
    std::optional<double> first_crossing_T;

    [[nodiscard]] bool any_fault() const;
};

/// delta_i = max |r_i| over all samples of all no-fault records, per channel.
/// `run_ids` label the calibration runs in the provenance list.
[[nodiscard]] Thresholds calibrate(const std::vector<ResidualTrace>& records,
                                   const std::vector<std::string>& run_ids);

[[nodiscard]] FaultDecision decide(const ResidualTrace& residuals, const Thresholds& thresholds);

/// Optional k-of-n persistence filter over the raw flags (off by default in
/// all shipped configurations): a sample is flagged iff at least k of the
/// trailing n raw flags are set. First crossings are recomputed.
[[nodiscard]] FaultDecision debounce(const FaultDecision& decision,
                                     const std::vector<double>& t, int k, int n);

enum class Channel { voltage, thermal };

struct LatencyResult {
    bool detected = false;
    bool false_alarm = false;      ///< crossing strictly before the onset
    double latency_s = 0.0;        ///< first crossing minus onset (when detected)
    double crossing_t = 0.0;
};

/// First-crossing latency for one channel relative to a fault onset.
[[nodiscard]] LatencyResult latency(const FaultDecision& decision, Channel channel, double onset_s);

/// Per-cycle bookkeeping of the lifetime learning loop.
struct LedgerEntry {
    int cycle_index = 0;
    bool fault_detected = false;
    bool used_for_training = false;
    int gp_version = 0;
};

struct LearningLedger {
    std::vector<LedgerEntry> entries;
    int last_trained_cycle = -1;  ///< cycle the current GP artifacts came from
    int version = 0;              ///< bumped on every retrain with new data
};

/// Single-cycle update of the lifetime learning loop: retrain both GPs on the
/// new cycle when it is clean, otherwise fall back (idempotently) to the most
/// recent clean cycle. GP models stay absent until a clean cycle exists.
class LifetimeLearner {
public:
    LifetimeLearner(GPHyper hyper_v = {}, GPHyper hyper_t = {}, long cap = 500)
        : hyper_v_(std::move(hyper_v)), hyper_t_(std::move(hyper_t)), cap_(cap) {}

    void update(const CycleRecord& cycle, const FaultDecision& decision, const CellParams& params,
                const StateSpace& ss);

    [[nodiscard]] const LearningLedger& ledger() const { return ledger_; }
    [[nodiscard]] const GPModel* gp_voltage() const { return gp_v_ ? &*gp_v_ : nullptr; }
    [[nodiscard]] const GPModel* gp_thermal() const { return gp_t_ ? &*gp_t_ : nullptr; }
    [[nodiscard]] int version() const { return ledger_.version; }

private:
    void train_on(const CycleRecord& cycle, const CellParams& params, const StateSpace& ss);

    GPHyper hyper_v_, hyper_t_;
    long cap_ = 500;
    LearningLedger ledger_;
    std::optional<GPModel> gp_v_, gp_t_;
    std::optional<CycleRecord> last_clean_;
};

}  // namespace celldiag
