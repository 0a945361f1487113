#include "celldiag/gp.hpp"
#include "celldiag/observer.hpp"
#include "celldiag/scenario.hpp"
#include "celldiag/sim.hpp"
#include "celldiag/state_space.hpp"
#include "celldiag/voltage.hpp"

#include <benchmark/benchmark.h>

#include <random>

using namespace celldiag;

namespace {

CellParams bench_cell() { return CellParams::load(CELLDIAG_DATA_DIR "/cell_default.cfg"); }

void BM_PlantStep(benchmark::State& state) {
    const CellParams p = bench_cell();
    const StateSpace ss = build_state_space(p);
    FaultConfig nf;
    UncertaintyConfig nu;
    UncertaintyState us = UncertaintyState::seeded(nu, 0);
    PlantState s = make_uniform_state(p, 0.3, 298.15);
    StepOutput out;
    for (auto _ : state) {
        s = step(s, -2.0, 298.15, p, ss, nf, nu, us, out);
        benchmark::DoNotOptimize(out.V_meas);
        if (s.z1(p.N - 1) > 0.9 * p.c_max_a) s = make_uniform_state(p, 0.3, 298.15);
    }
}
BENCHMARK(BM_PlantStep);

void BM_TerminalVoltage(benchmark::State& state) {
    const CellParams p = bench_cell();
    const PlantState s = make_uniform_state(p, 0.5, 298.15);
    for (auto _ : state) {
        benchmark::DoNotOptimize(terminal_voltage(s.z1, -3.0, 298.15, p));
    }
}
BENCHMARK(BM_TerminalVoltage);

void BM_CycleCCCV(benchmark::State& state) {
    const CellParams p = bench_cell();
    Protocol cccv;
    cccv.kind = ProtocolKind::cccv;
    cccv.current_A = -4.0;
    cccv.cv_limit_V = 4.2;
    cccv.cutoff_A = 0.5;
    FaultConfig nf;
    UncertaintyConfig nu;
    const PlantState init = make_uniform_state(p, 0.05, 298.15);
    for (auto _ : state) {
        const CycleRecord rec = run_cycle(init, cccv, nf, nu, 1, p, 298.15, 0);
        benchmark::DoNotOptimize(rec.size());
    }
}
BENCHMARK(BM_CycleCCCV)->Unit(benchmark::kMillisecond);

void BM_GpFit(benchmark::State& state) {
    const long n = state.range(0);
    std::mt19937_64 rng(7);
    std::normal_distribution<double> g(0.0, 1.0);
    UncertaintyDataset d;
    d.inputs.resize(n, 2);
    d.labels.resize(n);
    for (long i = 0; i < n; ++i) {
        d.inputs(i, 0) = g(rng);
        d.inputs(i, 1) = g(rng);
        d.labels(i) = g(rng);
    }
    for (auto _ : state) {
        const GPModel m = GPModel::fit(d, {}, n);
        benchmark::DoNotOptimize(m.train_size());
    }
}
BENCHMARK(BM_GpFit)->Arg(100)->Arg(250)->Arg(500)->Unit(benchmark::kMillisecond);

void BM_GpPredict(benchmark::State& state) {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> g(0.0, 1.0);
    UncertaintyDataset d;
    d.inputs.resize(500, 2);
    d.labels.resize(500);
    for (long i = 0; i < 500; ++i) {
        d.inputs(i, 0) = g(rng);
        d.inputs(i, 1) = g(rng);
        d.labels(i) = g(rng);
    }
    const GPModel m = GPModel::fit(d, {}, 500);
    Eigen::VectorXd q(2);
    q << 0.3, -0.2;
    for (auto _ : state) {
        benchmark::DoNotOptimize(m.predict(q));
    }
}
BENCHMARK(BM_GpPredict);

void BM_ObserverStep(benchmark::State& state) {
    const CellParams p = bench_cell();
    StateSpace ss = build_state_space(p);
    const PlantState op = make_uniform_state(p, 0.5, 298.15);
    const VoltageLinearization lin = linearize_voltage(p, op.z1, 0.0, 298.15);
    ss.C1 = lin.C1;
    ss.D1 = lin.D1;
    ss.offset = lin.offset;
    ObserverGains gains;
    gains.L_V = design_gain(ss.A1, ss.C1, default_spectrum(ss.A1, 0.999));
    gains.L_T = design_gain(ss.A2, ss.C2, default_spectrum(ss.A2, 0.75));

    ObserverState obs;
    obs.z1_hat = op.z1;
    obs.z2_hat = op.z2;
    MeasurementSample m;
    m.I = -2.0;
    m.V_meas = 3.8;
    m.T_meas = 298.3;
    m.T_inf = 298.15;
    for (auto _ : state) {
        auto [next, res] = observer_step(obs, m, gains, nullptr, nullptr, ss, p);
        benchmark::DoNotOptimize(res.r_V);
        obs.z1_hat = op.z1;  // keep the estimate pinned
        obs.z2_hat = op.z2;
    }
}
BENCHMARK(BM_ObserverStep);

void BM_LyapunovSolve(benchmark::State& state) {
    const CellParams p = bench_cell();
    StateSpace ss = build_state_space(p);
    const PlantState op = make_uniform_state(p, 0.5, 298.15);
    const VoltageLinearization lin = linearize_voltage(p, op.z1, 0.0, 298.15);
    ss.C1 = lin.C1;
    const Eigen::VectorXd L = design_gain(ss.A1, ss.C1, default_spectrum(ss.A1, 0.999));
    for (auto _ : state) {
        benchmark::DoNotOptimize(verify_lyapunov(ss.A1, ss.C1, L, 1e-4));
    }
}
BENCHMARK(BM_LyapunovSolve);

}  // namespace

BENCHMARK_MAIN();
