#include <catch2/catch_amalgamated.hpp>

#include "celldiag/detector.hpp"
#include "celldiag/errors.hpp"
#include "celldiag/scenario.hpp"
#include "celldiag/voltage.hpp"

#include "test_helpers.hpp"

#include <cmath>

using namespace celldiag;
using Catch::Approx;

namespace {

ResidualTrace trace_from(const std::vector<double>& r_v, const std::vector<double>& r_t,
                         double dt = 1.0, double t0 = 0.0) {
    ResidualTrace tr;
    for (std::size_t i = 0; i < r_v.size(); ++i) {
        tr.t.push_back(t0 + dt * i);
        tr.r_V.push_back(r_v[i]);
        tr.r_T.push_back(i < r_t.size() ? r_t[i] : 0.0);
    }
    return tr;
}

}  // namespace

TEST_CASE("calibration takes the max absolute residual", "[detector][calibrate]") {
    const ResidualTrace tr = trace_from({0.002, -0.008, 0.005}, {0.1, -0.3, 0.2});
    const Thresholds th = calibrate({tr}, {"run-a"});
    CHECK(th.delta_V == Approx(0.008).epsilon(1e-15));
    CHECK(th.delta_T == Approx(0.3).epsilon(1e-15));
    REQUIRE(th.provenance.size() == 1);
    CHECK(th.provenance[0] == "run-a");
}

TEST_CASE("calibration over two records is the max of per-record maxima",
          "[detector][calibrate]") {
    const ResidualTrace a = trace_from({0.004, -0.002}, {0.1});
    const ResidualTrace b = trace_from({-0.009, 0.001}, {0.4});
    const Thresholds th = calibrate({a, b}, {"a", "b"});
    CHECK(th.delta_V == Approx(0.009));
    CHECK(th.delta_T == Approx(0.4));
}

TEST_CASE("calibration rejects empty input", "[detector][calibrate]") {
    CHECK_THROWS_AS(calibrate({}, {}), ConfigError);
}

TEST_CASE("the shipped threshold defaults are the reference values", "[detector]") {
    const ThresholdSpec spec;
    CHECK(spec.delta_V == 0.01);
    CHECK(spec.delta_T == 0.5);
}

TEST_CASE("sub-threshold residuals raise no flags", "[detector][decide]") {
    Thresholds th;
    th.delta_V = 0.01;
    th.delta_T = 0.5;
    const ResidualTrace tr = trace_from({0.002, -0.009, 0.0}, {0.1, 0.49, -0.3});
    const FaultDecision d = decide(tr, th);
    CHECK_FALSE(d.any_fault());
    CHECK_FALSE(d.first_crossing_V.has_value());
    CHECK_FALSE(d.first_crossing_T.has_value());
}

TEST_CASE("a thermal crossing at 315 s after a 311 s onset is a 4 s latency",
          "[detector][decide]") {
    Thresholds th;
    th.delta_V = 0.01;
    th.delta_T = 0.5;
    // residual trace: quiet until t = 315, then above threshold
    std::vector<double> r_t(400, 0.05);
    for (std::size_t i = 315; i < 400; ++i) r_t[i] = 0.9;
    const ResidualTrace tr = trace_from(std::vector<double>(400, 0.0), r_t);
    const FaultDecision d = decide(tr, th);
    REQUIRE(d.first_crossing_T.has_value());
    CHECK(*d.first_crossing_T == 315.0);

    const LatencyResult lr = latency(d, Channel::thermal, 311.0);
    CHECK(lr.detected);
    CHECK_FALSE(lr.false_alarm);
    CHECK(lr.latency_s == Approx(4.0));
}

TEST_CASE("a residual exactly at the threshold is no fault", "[detector][decide]") {
    Thresholds th;
    th.delta_V = 0.01;
    th.delta_T = 0.5;
    const ResidualTrace tr = trace_from({0.01, -0.01}, {0.5, -0.5});
    const FaultDecision d = decide(tr, th);
    CHECK_FALSE(d.any_fault());
}

TEST_CASE("latency edge cases: onset-sample crossing, no crossing, false alarm",
          "[detector][latency]") {
    Thresholds th;
    th.delta_V = 0.01;
    th.delta_T = 0.5;

    std::vector<double> rv(100, 0.0);
    for (std::size_t i = 40; i < 100; ++i) rv[i] = 0.02;
    const FaultDecision d = decide(trace_from(rv, {}), th);

    const LatencyResult at_onset = latency(d, Channel::voltage, 40.0);
    CHECK(at_onset.detected);
    CHECK(at_onset.latency_s == 0.0);

    const LatencyResult none = latency(d, Channel::thermal, 40.0);
    CHECK_FALSE(none.detected);
    CHECK_FALSE(none.false_alarm);

    const LatencyResult early = latency(d, Channel::voltage, 60.0);
    CHECK(early.false_alarm);
    CHECK_FALSE(early.detected);
}

TEST_CASE("debounce requires k of n samples", "[detector][decide]") {
    Thresholds th;
    th.delta_V = 0.01;
    th.delta_T = 0.5;
    // single-sample blip followed by a sustained crossing
    std::vector<double> rv(30, 0.0);
    rv[5] = 0.02;
    for (std::size_t i = 15; i < 30; ++i) rv[i] = 0.02;
    const ResidualTrace tr = trace_from(rv, {});
    const FaultDecision raw = decide(tr, th);
    REQUIRE(raw.first_crossing_V.has_value());
    CHECK(*raw.first_crossing_V == 5.0);

    const FaultDecision filtered = debounce(raw, tr.t, 3, 4);
    REQUIRE(filtered.first_crossing_V.has_value());
    CHECK(*filtered.first_crossing_V == 17.0);
}

namespace {

/// Synthetic ten-cycle script: clean and faulty cycles alternate in a fixed
/// pattern; decisions are forced so the ledger trace is exactly checkable.
struct TenCycleScript {
    // cycle index -> faulty?
    std::vector<bool> faulty{false, true, false, false, true, true, false, true, false, true};
};

CycleRecord tiny_record(const CellParams& p, int cycle_index) {
    Protocol cc;
    cc.kind = ProtocolKind::constant_current;
    cc.current_A = -1.0;
    cc.duration_s = 30.0;
    FaultConfig nf;
    UncertaintyConfig nu;
    const PlantState init = make_uniform_state(p, 0.3, 298.15);
    CycleRecord rec = run_cycle(init, cc, nf, nu, 100 + cycle_index, p, 298.15, cycle_index);
    return rec;
}

FaultDecision forced_decision(std::size_t n, bool faulty) {
    FaultDecision d;
    d.voltage_flags.assign(n, 0);
    d.thermal_flags.assign(n, 0);
    if (faulty) {
        d.voltage_flags[n / 2] = 1;
        d.first_crossing_V = static_cast<double>(n / 2);
    }
    return d;
}

}  // namespace

TEST_CASE("lifetime learning follows the clean-cycle gate exactly", "[detector][lifetime]") {
    const CellParams p = test::default_cell();
    StateSpace ss = build_state_space(p);
    const PlantState op = make_uniform_state(p, 0.5, 298.15);
    const VoltageLinearization lin = linearize_voltage(p, op.z1, 0.0, 298.15);
    ss.C1 = lin.C1;
    ss.D1 = lin.D1;
    ss.offset = lin.offset;

    const TenCycleScript script;
    LifetimeLearner learner;

    // hand trace of the gated loop:
    //   clean cycle  -> train on it, version bumps
    //   faulty cycle -> refit from the last clean cycle; a refit on the cycle
    //                   the artifacts already came from changes nothing
    const std::vector<int> expected_version{1, 1, 2, 3, 3, 3, 4, 4, 5, 5};
    const std::vector<int> expected_trained_cycle{0, 0, 2, 3, 3, 3, 6, 6, 8, 8};

    for (int c = 0; c < 10; ++c) {
        const CycleRecord rec = tiny_record(p, c);
        const FaultDecision d = forced_decision(rec.size(), script.faulty[c]);
        learner.update(rec, d, p, ss);

        const LedgerEntry& e = learner.ledger().entries.back();
        CHECK(e.cycle_index == c);
        CHECK(e.fault_detected == script.faulty[c]);
        CHECK(e.used_for_training == !script.faulty[c]);
        CHECK(e.gp_version == expected_version[c]);
        CHECK(learner.ledger().last_trained_cycle == expected_trained_cycle[c]);
    }

    // gate correctness: no GP ever trained on a flagged cycle
    for (const auto& e : learner.ledger().entries) {
        if (e.fault_detected) CHECK_FALSE(e.used_for_training);
    }
    CHECK(learner.gp_voltage() != nullptr);
    CHECK(learner.gp_thermal() != nullptr);
    CHECK(learner.gp_voltage()->source_cycle() == 8);
}

TEST_CASE("learning stays uninitialized until a clean cycle arrives", "[detector][lifetime]") {
    const CellParams p = test::default_cell();
    StateSpace ss = build_state_space(p);
    const PlantState op = make_uniform_state(p, 0.5, 298.15);
    const VoltageLinearization lin = linearize_voltage(p, op.z1, 0.0, 298.15);
    ss.C1 = lin.C1;
    ss.D1 = lin.D1;
    ss.offset = lin.offset;

    LifetimeLearner learner;
    const CycleRecord rec = tiny_record(p, 0);
    learner.update(rec, forced_decision(rec.size(), true), p, ss);
    CHECK(learner.gp_voltage() == nullptr);
    CHECK(learner.gp_thermal() == nullptr);
    CHECK(learner.version() == 0);
    CHECK_FALSE(learner.ledger().entries[0].used_for_training);
}

TEST_CASE("calibration soundness: no false alarms when replaying calibration members",
          "[detector][property]") {
    // with thresholds set to the max |r| over a family, replaying any member
    // cannot cross (strict inequality at the boundary)
    std::vector<ResidualTrace> family;
    std::mt19937_64 rng(77);
    std::uniform_real_distribution<double> u(-0.008, 0.008);
    for (int r = 0; r < 5; ++r) {
        std::vector<double> rv(200), rt(200);
        for (int i = 0; i < 200; ++i) {
            rv[i] = u(rng);
            rt[i] = 30.0 * u(rng);
        }
        family.push_back(trace_from(rv, rt));
    }
    const Thresholds th = calibrate(family, {});
    for (const auto& member : family) {
        CHECK_FALSE(decide(member, th).any_fault());
    }
}
