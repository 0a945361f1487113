#include "celldiag/detector.hpp"

#include "celldiag/errors.hpp"

#include <algorithm>
#include <cmath>

namespace celldiag {

void Thresholds::validate() const {
    if (!(delta_V > 0.0) || !(delta_T > 0.0)) {
        throw ConfigError("thresholds must be strictly positive");
    }
}

bool FaultDecision::any_fault() const {
    return first_crossing_V.has_value() || first_crossing_T.has_value();
}

Thresholds calibrate(const std::vector<ResidualTrace>& records,
                     const std::vector<std::string>& run_ids) {
    if (records.empty()) throw ConfigError("calibrate: need at least one no-fault record");
    Thresholds th;
    th.delta_V = 0.0;
    th.delta_T = 0.0;
    for (const auto& rec : records) {
        for (double r : rec.r_V) th.delta_V = std::max(th.delta_V, std::abs(r));
        for (double r : rec.r_T) th.delta_T = std::max(th.delta_T, std::abs(r));
    }
    th.provenance = run_ids;
    if (th.provenance.empty()) {
        for (std::size_t i = 0; i < records.size(); ++i) {
            th.provenance.push_back("run-" + std::to_string(i));
        }
    }
    return th;
}

FaultDecision decide(const ResidualTrace& residuals, const Thresholds& thresholds) {
    thresholds.validate();
    FaultDecision d;
    const std::size_t n = residuals.size();
    d.voltage_flags.resize(n, 0);
    d.thermal_flags.resize(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        if (std::abs(residuals.r_V[i]) > thresholds.delta_V) {
            d.voltage_flags[i] = 1;
            if (!d.first_crossing_V) d.first_crossing_V = residuals.t[i];
        }
        if (std::abs(residuals.r_T[i]) > thresholds.delta_T) {
            d.thermal_flags[i] = 1;
            if (!d.first_crossing_T) d.first_crossing_T = residuals.t[i];
        }
    }
    return d;
}

FaultDecision debounce(const FaultDecision& decision, const std::vector<double>& t, int k, int n) {
    if (k < 1 || n < k) throw ConfigError("debounce: need 1 <= k <= n");
    FaultDecision out;
    const std::size_t len = decision.voltage_flags.size();
    out.voltage_flags.resize(len, 0);
    out.thermal_flags.resize(len, 0);
    auto run = [&](const std::vector<std::uint8_t>& in, std::vector<std::uint8_t>& flags,
                   std::optional<double>& crossing) {
        for (std::size_t i = 0; i < len; ++i) {
            int count = 0;
            for (int j = 0; j < n && j <= static_cast<int>(i); ++j) count += in[i - j];
            if (count >= k) {
                flags[i] = 1;
                if (!crossing) crossing = t[i];
            }
        }
    };
    run(decision.voltage_flags, out.voltage_flags, out.first_crossing_V);
    run(decision.thermal_flags, out.thermal_flags, out.first_crossing_T);
    return out;
}

LatencyResult latency(const FaultDecision& decision, Channel channel, double onset_s) {
    const std::optional<double>& crossing =
        channel == Channel::voltage ? decision.first_crossing_V : decision.first_crossing_T;
    LatencyResult r;
    if (!crossing) return r;
    r.crossing_t = *crossing;
    if (*crossing < onset_s) {
        r.false_alarm = true;
        return r;
    }
    r.detected = true;
    r.latency_s = *crossing - onset_s;
    return r;
}

void LifetimeLearner::train_on(const CycleRecord& cycle, const CellParams& params,
                               const StateSpace& ss) {
    gp_v_ = GPModel::fit(build_voltage_dataset(cycle, params, ss), hyper_v_, cap_);
    gp_t_ = GPModel::fit(build_thermal_dataset(cycle, params, ss), hyper_t_, cap_);
    ledger_.last_trained_cycle = cycle.cycle_index;
    ++ledger_.version;
}

void LifetimeLearner::update(const CycleRecord& cycle, const FaultDecision& decision,
                             const CellParams& params, const StateSpace& ss) {
    LedgerEntry entry;
    entry.cycle_index = cycle.cycle_index;
    entry.fault_detected = decision.any_fault();

    if (!entry.fault_detected) {
        train_on(cycle, params, ss);
        last_clean_ = cycle;
        entry.used_for_training = true;
    } else if (last_clean_) {
        // fall back to the most recent clean cycle; retraining on the cycle
        // the artifacts already came from is a no-op
        if (ledger_.last_trained_cycle != last_clean_->cycle_index) {
            train_on(*last_clean_, params, ss);
        }
        entry.used_for_training = false;
    }
    entry.gp_version = ledger_.version;
    ledger_.entries.push_back(entry);
}

}  // namespace celldiag
