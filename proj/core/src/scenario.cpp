#include "celldiag/scenario.hpp"

#include "celldiag/csv.hpp"
#include "celldiag/errors.hpp"
#include "celldiag/kv_config.hpp"
#include "celldiag/version.hpp"
#include "celldiag/voltage.hpp"

#include <json.hpp>

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

namespace celldiag {

using nlohmann::json;

namespace {

std::vector<double> parse_double_list(const std::string& s) {
    std::vector<double> out;
    std::string item;
    std::istringstream in(s);
    while (std::getline(in, item, ',')) {
        if (!item.empty()) out.push_back(std::stod(item));
    }
    return out;
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& rel) {
    std::filesystem::path p(rel);
    return p.is_absolute() ? p : base / p;
}

}  // namespace

Scenario Scenario::load(const std::filesystem::path& path) {
    const KvFile kv = KvFile::parse_file(path);
    const auto base = std::filesystem::absolute(path).parent_path();

    Scenario s;
    s.name = kv.get_string_or("name", path.stem().string());
    s.cell_config = resolve(base, kv.get_string("cell"));
    s.seed = static_cast<std::uint64_t>(kv.get_int_or("seed", 1));
    s.initial_soc = kv.get_double_or("initial_soc", 0.05);
    s.initial_T = kv.get_double_or("initial_T", 298.15);
    s.T_inf = kv.get_double_or("T_inf", s.initial_T);
    s.cycle_index = static_cast<int>(kv.get_int_or("cycle_index", 0));

    if (const char* env = std::getenv("CELLDIAG_OUT_DIR"); env && *env) {
        s.output_dir = std::filesystem::path(env) / s.name;
    } else {
        s.output_dir = resolve(base, kv.get_string_or("output_dir", "out/" + s.name));
    }

    s.protocol.kind = protocol_kind_from_string(kv.get_string_or("protocol.kind", "cccv"));
    s.protocol.current_A = kv.get_double_or("protocol.current_A", -4.0);
    s.protocol.cv_limit_V = kv.get_double_or("protocol.cv_limit_V", 4.2);
    s.protocol.cutoff_A = kv.get_double_or("protocol.cutoff_A", 0.15);
    s.protocol.soc_stop = kv.get_double_or("protocol.soc_stop", -1.0);
    s.protocol.duration_s = kv.get_double_or("protocol.duration_s", -1.0);
    s.protocol.i_max = kv.get_double_or("protocol.i_max", 10.0);
    s.protocol.max_steps = kv.get_int_or("protocol.max_steps", 200000);
    if (kv.has("protocol.profile_csv")) {
        s.protocol.profile = read_current_profile(resolve(base, kv.get_string("protocol.profile_csv")));
    }

    if (kv.has("fault.voltage.a1") || kv.has("fault.voltage.a2")) {
        VoltageFault f;
        f.a1 = kv.get_double_or("fault.voltage.a1", 0.0);
        f.a2 = kv.get_double_or("fault.voltage.a2", 0.0);
        f.mu = kv.get_double_or("fault.voltage.mu", 0.0);
        f.t_on = kv.get_double("fault.voltage.t_on");
        f.t_off = kv.get_double("fault.voltage.t_off");
        f.gaussian_bump = kv.get_bool_or("fault.voltage.gaussian_bump", false);
        s.fault.voltage = f;
    }
    if (kv.has("fault.thermal.power_W")) {
        ThermalFault f;
        f.power_W = kv.get_double("fault.thermal.power_W");
        f.t_on = kv.get_double("fault.thermal.t_on");
        f.t_off = kv.get_double("fault.thermal.t_off");
        s.fault.thermal = f;
    }

    s.uncertainty.voltage.noise_std = kv.get_double_or("uncertainty.voltage.noise_std", 0.0);
    s.uncertainty.voltage.bias = kv.get_double_or("uncertainty.voltage.bias", 0.0);
    s.uncertainty.voltage.drift_per_s = kv.get_double_or("uncertainty.voltage.drift_per_s", 0.0);
    s.uncertainty.voltage.r_growth_per_cycle =
        kv.get_double_or("uncertainty.voltage.r_growth_per_cycle", 0.0);
    s.uncertainty.thermal.noise_std = kv.get_double_or("uncertainty.thermal.noise_std", 0.0);
    s.uncertainty.thermal.bias = kv.get_double_or("uncertainty.thermal.bias", 0.0);
    s.uncertainty.thermal.convection_factor =
        kv.get_double_or("uncertainty.thermal.convection_factor", 1.0);
    s.uncertainty.thermal.reversible_heat_W =
        kv.get_double_or("uncertainty.thermal.reversible_heat_W", 0.0);
    s.uncertainty.noise_cutoff_hz = kv.get_double_or("uncertainty.noise_cutoff_hz", 0.01);
    s.uncertainty.seed = s.seed;

    if (kv.has("observer.spectrum_v")) s.spectrum_v = parse_double_list(kv.get_string("observer.spectrum_v"));
    if (kv.has("observer.spectrum_t")) s.spectrum_t = parse_double_list(kv.get_string("observer.spectrum_t"));
    s.damping_v = kv.get_double_or("observer.damping_v", s.damping_v);
    s.damping_t = kv.get_double_or("observer.damping_t", s.damping_t);
    s.relinearize = kv.get_bool_or("observer.relinearize", false);
    s.linearization_soc = kv.get_double_or("observer.linearization_soc", 0.5);
    for (const auto& key : kv.keys_with_prefix("observer.scale.")) {
        s.observer_scale[key.substr(std::string("observer.scale.").size())] = kv.get_double(key);
    }

    s.hyper_v.sigma_p2 = kv.get_double_or("gp.voltage.sigma_p2", -1.0);
    s.hyper_t.sigma_p2 = kv.get_double_or("gp.thermal.sigma_p2", -1.0);
    s.hyper_v.jitter_rel = kv.get_double_or("gp.voltage.jitter_rel", -1.0);
    s.hyper_t.jitter_rel = kv.get_double_or("gp.thermal.jitter_rel", -1.0);
    if (kv.has("gp.voltage.length_scales")) {
        const auto ls = parse_double_list(kv.get_string("gp.voltage.length_scales"));
        s.hyper_v.length_scales = Eigen::Map<const Eigen::VectorXd>(ls.data(), ls.size());
    }
    if (kv.has("gp.thermal.length_scales")) {
        const auto ls = parse_double_list(kv.get_string("gp.thermal.length_scales"));
        s.hyper_t.length_scales = Eigen::Map<const Eigen::VectorXd>(ls.data(), ls.size());
    }
    s.gp_cap = kv.get_int_or("gp.cap", 500);
    s.learn_cycles = static_cast<int>(kv.get_int_or("learn.cycles", 0));

    const std::string mode = kv.get_string_or("thresholds.mode", "fixed");
    if (mode == "fixed") {
        s.thresholds.mode = ThresholdSpec::Mode::fixed;
    } else if (mode == "calibrate") {
        s.thresholds.mode = ThresholdSpec::Mode::calibrate;
    } else {
        throw ConfigError(path.string() + ": thresholds.mode must be fixed|calibrate");
    }
    s.thresholds.delta_V = kv.get_double_or("thresholds.delta_V", 0.01);
    s.thresholds.delta_T = kv.get_double_or("thresholds.delta_T", 0.5);
    s.thresholds.calibration_runs = static_cast<int>(kv.get_int_or("thresholds.calibration_runs", 3));

    if (!std::filesystem::exists(s.cell_config)) {
        throw ConfigError(path.string() + ": cell config does not exist: " + s.cell_config.string());
    }
    return s;
}

CellParams Scenario::load_cell() const { return CellParams::load(cell_config); }

std::vector<double> default_spectrum(const Eigen::MatrixXd& A, double damping) {
    Eigen::VectorXcd eig = A.eigenvalues();
    std::vector<double> out(static_cast<std::size_t>(eig.size()));
    for (long i = 0; i < eig.size(); ++i) out[static_cast<std::size_t>(i)] = eig[i].real() * damping;
    std::sort(out.begin(), out.end());
    return out;
}

namespace {

CellParams apply_observer_scale(const CellParams& nominal,
                                const std::map<std::string, double>& scale) {
    CellParams p = nominal;
    for (const auto& [name, factor] : scale) {
        // a_a is derived (3 eps_a / X, never stored), so an a_a error is
        // introduced through its eps_a factor
        if (name == "eps_a" || name == "a_a") p.eps_a *= factor;
        else if (name == "eps_c") p.eps_c *= factor;
        else if (name == "D") p.D *= factor;
        else if (name == "R_b") p.R_b *= factor;
        else if (name == "h_conv") p.h_conv *= factor;
        else if (name == "C_p") p.C_p *= factor;
        else if (name == "k_th") p.k_th *= factor;
        else if (name == "m_Li") p.m_Li *= factor;
        else if (name == "A_a") p.A_a *= factor;
        else if (name == "A_c") p.A_c *= factor;
        else throw ConfigError("observer.scale: unknown parameter `" + name + "`");
    }
    return p;
}

}  // namespace

DetectorSetup make_detector_setup(const Scenario& scenario) {
    DetectorSetup setup;
    setup.params = apply_observer_scale(scenario.load_cell(), scenario.observer_scale);
    setup.params.validate();
    setup.ss = build_state_space(setup.params);

    const PlantState op = make_uniform_state(setup.params, scenario.linearization_soc, scenario.initial_T);
    const VoltageLinearization lin = linearize_voltage(setup.params, op.z1, 0.0, scenario.initial_T);
    setup.ss.C1 = lin.C1;
    setup.ss.D1 = lin.D1;
    setup.ss.offset = lin.offset;

    setup.spectrum_v = scenario.spectrum_v.empty()
                           ? default_spectrum(setup.ss.A1, scenario.damping_v)
                           : scenario.spectrum_v;
    setup.spectrum_t = scenario.spectrum_t.empty()
                           ? default_spectrum(setup.ss.A2, scenario.damping_t)
                           : scenario.spectrum_t;
    setup.gains.L_V = design_gain(setup.ss.A1, setup.ss.C1, setup.spectrum_v);
    setup.gains.L_T = design_gain(setup.ss.A2, setup.ss.C2, setup.spectrum_t);
    setup.options.relinearize_each_step = scenario.relinearize;
    return setup;
}

ResidualTrace run_observer(const CycleRecord& record, const DetectorSetup& setup,
                           const GPModel* gp_v, const GPModel* gp_t) {
    ObserverState obs;
    obs.z1_hat = Eigen::VectorXd::Constant(setup.params.N,
                                           record.initial_theta_a * setup.params.c_max_a);
    obs.z2_hat = Eigen::VectorXd::Constant(setup.params.M, record.initial_T);
    obs.t = record.t.empty() ? 0.0 : record.t.front();

    ResidualTrace trace;
    trace.t.reserve(record.size());
    trace.r_V.reserve(record.size());
    trace.r_T.reserve(record.size());
    for (std::size_t i = 0; i < record.size(); ++i) {
        MeasurementSample m;
        m.t = record.t[i];
        m.I = record.I[i];
        m.V_meas = record.V_meas[i];
        m.T_meas = record.T_meas[i];
        m.T_inf = record.T_inf;
        auto [next, res] = observer_step(obs, m, setup.gains, gp_v, gp_t, setup.ss, setup.params,
                                         setup.options);
        trace.t.push_back(res.t);
        trace.r_V.push_back(res.r_V);
        trace.r_T.push_back(res.r_T);
        obs = next;
    }
    return trace;
}

SimulateResult cmd_simulate(const Scenario& scenario) {
    const CellParams nominal = scenario.load_cell();
    const PlantState init = make_uniform_state(nominal, scenario.initial_soc, scenario.initial_T);
    CycleRecord rec = run_cycle(init, scenario.protocol, scenario.fault, scenario.uncertainty,
                                scenario.seed, nominal, scenario.T_inf, scenario.cycle_index);

    SimulateResult out;
    out.record_csv = scenario.output_dir / "record.csv";
    out.meta_json = scenario.output_dir / "record.meta.json";
    write_record_csv(out.record_csv, rec);
    out.record = std::move(rec);
    return out;
}

namespace {

struct GpArtifacts {
    std::optional<GPModel> v, t;
};

GpArtifacts load_gp_artifacts(const Scenario& scenario) {
    GpArtifacts a;
    const auto pv = scenario.output_dir / "gp_v.json";
    const auto pt = scenario.output_dir / "gp_t.json";
    if (std::filesystem::exists(pv)) a.v = GPModel::load(pv);
    if (std::filesystem::exists(pt)) a.t = GPModel::load(pt);
    return a;
}

/// Train in-memory GPs on `learn_cycles` clean cycles (Algorithm-style loop:
/// last clean cycle wins). Training always runs against the unscaled observer
/// model: the observer.scale knobs represent parameter drift introduced
/// after the uncertainty models were learned.
GpArtifacts train_inline(const Scenario& scenario) {
    GpArtifacts a;
    if (scenario.learn_cycles <= 0) return a;
    Scenario nominal_scn = scenario;
    nominal_scn.observer_scale.clear();
    const DetectorSetup setup = make_detector_setup(nominal_scn);
    const CellParams nominal = scenario.load_cell();
    FaultConfig no_fault;
    LifetimeLearner learner(scenario.hyper_v, scenario.hyper_t, scenario.gp_cap);
    for (int c = 0; c < scenario.learn_cycles; ++c) {
        const PlantState init = make_uniform_state(nominal, scenario.initial_soc, scenario.initial_T);
        const CycleRecord rec =
            run_cycle(init, scenario.protocol, no_fault, scenario.uncertainty,
                      scenario.seed + 1000 + static_cast<std::uint64_t>(c), nominal, scenario.T_inf,
                      scenario.cycle_index + c);
        FaultDecision clean;  // training cycles are fault-free by construction
        clean.voltage_flags.assign(rec.size(), 0);
        clean.thermal_flags.assign(rec.size(), 0);
        learner.update(rec, clean, setup.params, setup.ss);
    }
    if (learner.gp_voltage()) a.v = *learner.gp_voltage();
    if (learner.gp_thermal()) a.t = *learner.gp_thermal();
    return a;
}

Thresholds calibrate_with(const Scenario& scenario, const DetectorSetup& setup,
                          const GPModel* gp_v, const GPModel* gp_t) {
    const CellParams nominal = scenario.load_cell();
    FaultConfig no_fault;
    std::vector<ResidualTrace> traces;
    std::vector<std::string> ids;
    for (int r = 0; r < scenario.thresholds.calibration_runs; ++r) {
        const PlantState init = make_uniform_state(nominal, scenario.initial_soc, scenario.initial_T);
        const CycleRecord rec =
            run_cycle(init, scenario.protocol, no_fault, scenario.uncertainty,
                      scenario.seed + 2000 + static_cast<std::uint64_t>(r), nominal, scenario.T_inf,
                      scenario.cycle_index + r);
        traces.push_back(run_observer(rec, setup, gp_v, gp_t));
        ids.push_back(scenario.name + "/cal-" + std::to_string(r));
    }
    return calibrate(traces, ids);
}

long settling_samples(const DetectorSetup& setup) {
    auto radius = [](const Eigen::MatrixXd& A, const Eigen::VectorXd& L,
                     const Eigen::RowVectorXd& C) {
        return (A - L * C).eigenvalues().cwiseAbs().maxCoeff();
    };
    const double rho = std::max(radius(setup.ss.A1, setup.gains.L_V, setup.ss.C1),
                                radius(setup.ss.A2, setup.gains.L_T, setup.ss.C2));
    if (rho >= 1.0) return -1;
    return static_cast<long>(std::ceil(10.0 / (1.0 - rho)));
}

}  // namespace

DetectResult cmd_detect(const Scenario& scenario, const std::filesystem::path& record_csv) {
    const CycleRecord rec = read_record_csv(record_csv);
    const DetectorSetup setup = make_detector_setup(scenario);

    GpArtifacts gps = load_gp_artifacts(scenario);
    if (!gps.v && !gps.t) gps = train_inline(scenario);
    const GPModel* gp_v = gps.v ? &*gps.v : nullptr;
    const GPModel* gp_t = gps.t ? &*gps.t : nullptr;

    DetectResult out;
    out.gp_loaded = gp_v != nullptr || gp_t != nullptr;
    out.trace = run_observer(rec, setup, gp_v, gp_t);

    if (scenario.thresholds.mode == ThresholdSpec::Mode::fixed) {
        out.thresholds.delta_V = scenario.thresholds.delta_V;
        out.thresholds.delta_T = scenario.thresholds.delta_T;
        out.thresholds.provenance = {"fixed:" + scenario.name};
    } else {
        out.thresholds = calibrate_with(scenario, setup, gp_v, gp_t);
    }
    out.decision = decide(out.trace, out.thresholds);

    // residual CSV
    CsvTable t;
    t.header = {"t", "r_V", "r_T", "delta_V", "delta_T", "flag_V", "flag_T"};
    for (std::size_t i = 0; i < out.trace.size(); ++i) {
        t.rows.push_back({out.trace.t[i], out.trace.r_V[i], out.trace.r_T[i],
                          out.thresholds.delta_V, out.thresholds.delta_T,
                          static_cast<double>(out.decision.voltage_flags[i]),
                          static_cast<double>(out.decision.thermal_flags[i])});
    }
    out.residual_csv = scenario.output_dir / "residuals.csv";
    write_csv(out.residual_csv, t);

    const long settle = settling_samples(setup);
    json j{{"schema_version", kJsonArtifactSchemaVersion},
           {"scenario", scenario.name},
           {"record", record_csv.string()},
           {"gp_artifacts_loaded", out.gp_loaded},
           {"warning", out.gp_loaded ? "" : "no GP artifacts; running with omega_hat = 0"},
           {"thresholds", {{"delta_V", out.thresholds.delta_V}, {"delta_T", out.thresholds.delta_T}}},
           {"settling_samples", settle},
           {"record_samples", rec.size()},
           {"shorter_than_settling", settle > 0 && rec.size() < static_cast<std::size_t>(settle)},
           {"voltage",
            {{"detected", out.decision.first_crossing_V.has_value()},
             {"first_crossing_s",
              out.decision.first_crossing_V ? json(*out.decision.first_crossing_V) : json()}}},
           {"thermal",
            {{"detected", out.decision.first_crossing_T.has_value()},
             {"first_crossing_s",
              out.decision.first_crossing_T ? json(*out.decision.first_crossing_T) : json()}}}};
    out.decision_json = scenario.output_dir / "decision.json";
    write_file_atomic(out.decision_json, j.dump(2) + "\n");
    return out;
}

Thresholds cmd_calibrate(const Scenario& scenario) {
    const DetectorSetup setup = make_detector_setup(scenario);
    GpArtifacts gps = load_gp_artifacts(scenario);
    if (!gps.v && !gps.t) gps = train_inline(scenario);
    const Thresholds th = calibrate_with(scenario, setup, gps.v ? &*gps.v : nullptr,
                                         gps.t ? &*gps.t : nullptr);
    KvFile kv;
    kv.set("delta_V", th.delta_V);
    kv.set("delta_T", th.delta_T);
    for (std::size_t i = 0; i < th.provenance.size(); ++i) {
        kv.set("provenance." + std::to_string(i), th.provenance[i]);
    }
    kv.write_file(scenario.output_dir / "thresholds.cfg");
    return th;
}

LearnResult cmd_learn(const Scenario& scenario, const std::filesystem::path& record_csv) {
    const CycleRecord rec = read_record_csv(record_csv);
    const DetectorSetup setup = make_detector_setup(scenario);

    // Learning gate: a record simulated with an injected fault is refused
    // outright; otherwise, with existing artifacts, decide first and refuse a
    // flagged cycle. The very first training cycle is otherwise ungated (the
    // observers start from omega_hat = 0 and cannot classify yet).
    GpArtifacts gps = load_gp_artifacts(scenario);
    LearnResult out;
    if (rec.fault.any()) {
        out.refused = true;
        return out;
    }
    if (gps.v || gps.t) {
        const ResidualTrace trace =
            run_observer(rec, setup, gps.v ? &*gps.v : nullptr, gps.t ? &*gps.t : nullptr);
        Thresholds th;
        th.delta_V = scenario.thresholds.delta_V;
        th.delta_T = scenario.thresholds.delta_T;
        th.provenance = {"fixed:" + scenario.name};
        const FaultDecision decision = decide(trace, th);
        if (decision.any_fault()) {
            out.refused = true;
            return out;
        }
    }

    const GPModel gv = GPModel::fit(build_voltage_dataset(rec, setup.params, setup.ss),
                                    scenario.hyper_v, scenario.gp_cap);
    const GPModel gt = GPModel::fit(build_thermal_dataset(rec, setup.params, setup.ss),
                                    scenario.hyper_t, scenario.gp_cap);

    int version = 1;
    const auto ledger_path = scenario.output_dir / "ledger.json";
    json ledger = json::array();
    if (std::ifstream in(ledger_path); in) {
        ledger = json::parse(in);
        if (!ledger.empty()) version = ledger.back().at("gp_version").get<int>() + 1;
    }
    out.gp_v_json = scenario.output_dir / "gp_v.json";
    out.gp_t_json = scenario.output_dir / "gp_t.json";
    gv.save(out.gp_v_json, version);
    gt.save(out.gp_t_json, version);
    ledger.push_back({{"cycle_index", rec.cycle_index},
                      {"fault_detected", false},
                      {"used_for_training", true},
                      {"gp_version", version}});
    out.ledger_json = ledger_path;
    write_file_atomic(ledger_path, ledger.dump(2) + "\n");
    out.version = version;
    return out;
}

VerifyResult cmd_verify(const Scenario& scenario) {
    const DetectorSetup setup = make_detector_setup(scenario);
    VerifyResult out;
    out.sweep_v = verify_gamma_sweep(setup.ss.A1, setup.ss.C1, setup.gains.L_V);
    out.sweep_t = verify_gamma_sweep(setup.ss.A2, setup.ss.C2, setup.gains.L_T);
    const auto best_v = best_margin(out.sweep_v);
    const auto best_t = best_margin(out.sweep_t);
    out.pass = best_v.has_value() && best_t.has_value();

    std::ostringstream tab;
    auto print_sweep = [&tab](const char* label, const std::vector<VerificationReport>& sweep) {
        tab << label << "\n";
        tab << "  gamma        lambda_Q     x            margin       pass\n";
        for (const auto& r : sweep) {
            char line[160];
            std::snprintf(line, sizeof line, "  %-12.4g %-12.6g %-12.6g %-12.6g %s\n", r.gamma,
                          r.lambda_Q, r.x, r.margin, r.passing ? "yes" : "no");
            tab << line;
        }
    };
    print_sweep("electrochemical observer", out.sweep_v);
    print_sweep("thermal observer", out.sweep_t);
    out.table = tab.str();

    auto sweep_json = [](const std::vector<VerificationReport>& sweep) {
        json arr = json::array();
        for (const auto& r : sweep) {
            arr.push_back({{"gamma", r.gamma},
                           {"stable", r.stable},
                           {"passing", r.passing},
                           {"spectral_radius", r.spectral_radius},
                           {"lambda_Q", r.lambda_Q},
                           {"x", r.x},
                           {"margin", r.margin},
                           {"lambda_P_max", r.lambda_P_max}});
        }
        return arr;
    };
    json j{{"schema_version", kJsonArtifactSchemaVersion},
           {"scenario", scenario.name},
           {"pass", out.pass},
           {"gains",
            {{"L_V", std::vector<double>(setup.gains.L_V.begin(), setup.gains.L_V.end())},
             {"L_T", std::vector<double>(setup.gains.L_T.begin(), setup.gains.L_T.end())},
             {"spectrum_v", setup.spectrum_v},
             {"spectrum_t", setup.spectrum_t}}},
           {"voltage_sweep", sweep_json(out.sweep_v)},
           {"thermal_sweep", sweep_json(out.sweep_t)}};
    out.report_json = scenario.output_dir / "verify.json";
    write_file_atomic(out.report_json, j.dump(2) + "\n");
    return out;
}

IdentifyFiles cmd_identify(const std::filesystem::path& problem_json,
                           const std::filesystem::path& output_dir) {
    std::ifstream in(problem_json);
    if (!in) throw ConfigError("cannot open identification problem: " + problem_json.string());
    json j = json::parse(in);
    const auto base = std::filesystem::absolute(problem_json).parent_path();

    IdentificationProblem prob;
    prob.base = CellParams::load(resolve(base, j.at("cell").get<std::string>()));
    for (const auto& rec_path : j.at("records")) {
        prob.data.push_back(read_record_csv(resolve(base, rec_path.get<std::string>())));
    }
    auto vec10 = [](const json& arr) {
        if (arr.size() != kThetaDim) throw ConfigError("identify: theta arrays need 10 entries");
        Eigen::VectorXd v(kThetaDim);
        for (int i = 0; i < kThetaDim; ++i) v[i] = arr[static_cast<std::size_t>(i)].get<double>();
        return v;
    };
    prob.theta0 = j.contains("theta0") ? vec10(j.at("theta0")) : theta_from_params(prob.base);
    if (j.contains("lower")) {
        prob.lower = vec10(j.at("lower"));
        prob.upper = vec10(j.at("upper"));
    } else {
        prob.lower = 0.5 * prob.theta0;
        prob.upper = 2.0 * prob.theta0;
    }
    prob.weight_v = j.value("weight_v", 1.0);
    prob.weight_t = j.value("weight_t", 1.0);

    IdentifyOptions opt;
    opt.budget = j.value("budget", 2000);
    opt.restarts = j.value("restarts", 3);
    opt.seed = j.value("seed", 1u);

    auto [theta, report] = identify(prob, opt);

    IdentifyFiles out;
    out.theta = theta;
    out.report = report;
    out.identified_config = output_dir / "identified_cell.cfg";
    params_with_theta(prob.base, theta).save(out.identified_config);

    json rep{{"schema_version", kJsonArtifactSchemaVersion},
             {"initial_cost", report.initial_cost},
             {"final_cost", report.final_cost},
             {"evaluations", report.evaluations},
             {"penalized_evaluations", report.penalized_evaluations},
             {"converged", report.converged},
             {"trace", report.trace}};
    json sens = json::array();
    json theta_map = json::object();
    for (int i = 0; i < kThetaDim; ++i) {
        theta_map[kThetaNames[static_cast<std::size_t>(i)]] = theta[i];
        sens.push_back({{"name", report.sensitivity[static_cast<std::size_t>(i)].name},
                        {"cost_delta", report.sensitivity[static_cast<std::size_t>(i)].cost_delta},
                        {"sensitive", report.sensitivity[static_cast<std::size_t>(i)].sensitive}});
    }
    rep["theta"] = theta_map;
    rep["sensitivity"] = sens;
    out.report_json = output_dir / "identify_report.json";
    write_file_atomic(out.report_json, rep.dump(2) + "\n");
    return out;
}

std::vector<std::string> schema_check(const std::filesystem::path& artifact) {
    std::vector<std::string> errors;
    if (!std::filesystem::exists(artifact)) {
        errors.push_back("file does not exist: " + artifact.string());
        return errors;
    }
    const std::string name = artifact.filename().string();
    const std::string ext = artifact.extension().string();
    try {
        if (ext == ".csv") {
            const CsvTable t = read_csv(artifact);
            std::string header;
            for (std::size_t i = 0; i < t.header.size(); ++i) {
                header += (i ? "," : "") + t.header[i];
            }
            if (header == kRecordCsvHeader) {
                // column count already enforced per row by read_csv
            } else if (header == kResidualCsvHeader) {
                for (const auto& row : t.rows) {
                    if (row[5] != 0.0 && row[5] != 1.0) errors.push_back("flag_V not boolean");
                    if (row[6] != 0.0 && row[6] != 1.0) errors.push_back("flag_T not boolean");
                }
            } else if (t.header.size() == 2) {
                // two-column map/profile csv
            } else {
                errors.push_back("unrecognized csv header: " + header);
            }
        } else if (ext == ".json") {
            std::ifstream in(artifact);
            json j = json::parse(in);
            if (name.find("gp_") == 0 || (j.contains("inputs") && j.contains("labels"))) {
                for (const char* key : {"schema_version", "kind", "hyper", "inputs", "labels",
                                        "input_mean", "input_scale"}) {
                    if (!j.contains(key)) errors.push_back(std::string("gp artifact missing `") + key + "`");
                }
            } else if (j.is_array()) {
                for (const auto& e : j) {
                    for (const char* key : {"cycle_index", "fault_detected", "used_for_training",
                                            "gp_version"}) {
                        if (!e.contains(key)) errors.push_back(std::string("ledger entry missing `") + key + "`");
                    }
                }
            } else if (j.contains("voltage") && j.contains("thermal") && j.contains("thresholds")) {
                // decision json
            } else if (j.contains("scenarios") || j.contains("sweeps")) {
                // campaign json
            } else if (j.contains("schema_version")) {
                // other versioned artifact
            } else {
                errors.push_back("unrecognized json artifact");
            }
        } else if (ext == ".cfg" || ext == ".scn") {
            (void)KvFile::parse_file(artifact);
        } else {
            errors.push_back("unrecognized artifact type: " + ext);
        }
    } catch (const std::exception& e) {
        errors.push_back(e.what());
    }
    return errors;
}

CampaignRow run_scenario_flow(const Scenario& scenario) {
    CampaignRow row;
    row.name = scenario.name;
    try {
        const SimulateResult sim = cmd_simulate(scenario);
        const DetectResult det = cmd_detect(scenario, sim.record_csv);

        if (scenario.fault.voltage) {
            const LatencyResult lr =
                latency(det.decision, Channel::voltage, scenario.fault.voltage->t_on);
            row.detected_v = lr.detected;
            if (lr.detected) row.latency_v = lr.latency_s;
            if (lr.false_alarm) ++row.false_alarms;
        } else if (det.decision.first_crossing_V) {
            ++row.false_alarms;
        }
        if (scenario.fault.thermal) {
            const LatencyResult lr =
                latency(det.decision, Channel::thermal, scenario.fault.thermal->t_on);
            row.detected_t = lr.detected;
            if (lr.detected) row.latency_t = lr.latency_s;
            if (lr.false_alarm) ++row.false_alarms;
        } else if (det.decision.first_crossing_T) {
            ++row.false_alarms;
        }
        row.ok = true;
    } catch (const std::exception& e) {
        row.ok = false;
        row.error = e.what();
    }
    return row;
}

namespace {

unsigned resolve_workers(unsigned requested) {
    if (const char* env = std::getenv("CELLDIAG_WORKERS"); env && *env) {
        const long v = std::strtol(env, nullptr, 10);
        if (v > 0) return static_cast<unsigned>(v);
    }
    if (requested > 0) return requested;
    const unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? hw : 2;
}

}  // namespace

CampaignSummary run_campaign(const std::filesystem::path& campaign_json, unsigned workers) {
    std::ifstream in(campaign_json);
    if (!in) throw ConfigError("cannot open campaign: " + campaign_json.string());
    json j = json::parse(in);
    const auto base = std::filesystem::absolute(campaign_json).parent_path();

    CampaignSummary summary;
    summary.name = j.value("name", campaign_json.stem().string());

    std::vector<Scenario> scenarios;
    if (j.contains("scenarios")) {
        for (const auto& sp : j.at("scenarios")) {
            scenarios.push_back(Scenario::load(resolve(base, sp.get<std::string>())));
        }
    }

    summary.rows.resize(scenarios.size());
    if (!scenarios.empty()) {
        std::atomic<std::size_t> next{0};
        const unsigned n_workers =
            std::min<unsigned>(resolve_workers(workers), static_cast<unsigned>(scenarios.size()));
        std::vector<std::thread> pool;
        pool.reserve(n_workers);
        for (unsigned w = 0; w < n_workers; ++w) {
            pool.emplace_back([&]() {
                for (;;) {
                    const std::size_t i = next.fetch_add(1);
                    if (i >= scenarios.size()) return;
                    summary.rows[i] = run_scenario_flow(scenarios[i]);
                }
            });
        }
        for (auto& th : pool) th.join();
    }

    if (j.contains("sweeps")) {
        for (const auto& sweep : j.at("sweeps")) {
            const std::string type = sweep.at("type").get<std::string>();
            const Scenario base_scn = Scenario::load(resolve(base, sweep.at("scenario").get<std::string>()));
            if (type == "thermal_bisection") {
                double lo = sweep.at("lo_W").get<double>();
                double hi = sweep.at("hi_W").get<double>();
                const double tol = sweep.value("tol_W", 5.0);
                auto detected_at = [&](double amp) {
                    Scenario s = base_scn;
                    s.name = base_scn.name + "-bisect-" + format_double(amp);
                    s.output_dir = base_scn.output_dir / ("bisect-" + format_double(amp));
                    if (!s.fault.thermal) throw ConfigError("thermal_bisection: scenario has no thermal fault");
                    s.fault.thermal->power_W = amp;
                    CampaignRow row = run_scenario_flow(s);
                    if (!row.ok) throw std::runtime_error("bisection scenario failed: " + row.error);
                    row.value = amp;
                    summary.rows.push_back(row);
                    return row.detected_t;
                };
                const bool hi_det = detected_at(hi);
                const bool lo_det = detected_at(lo);
                if (hi_det && !lo_det) {
                    while (hi - lo > tol) {
                        const double mid = 0.5 * (lo + hi);
                        if (detected_at(mid)) hi = mid;
                        else lo = mid;
                    }
                    summary.min_detectable_W = 0.5 * (lo + hi);
                }
            } else if (type == "param_sweep") {
                const std::string param = sweep.at("param").get<std::string>();
                for (const auto& f : sweep.at("factors")) {
                    const double factor = f.get<double>();
                    Scenario s = base_scn;
                    s.name = base_scn.name + "-" + param + "-" + format_double(factor);
                    s.output_dir = base_scn.output_dir / (param + "-" + format_double(factor));
                    s.observer_scale[param] = factor;
                    CampaignRow row = run_scenario_flow(s);
                    row.value = factor;
                    summary.rows.push_back(row);
                    if (row.ok && row.false_alarms > 0 && !summary.false_alarm_onset_factor) {
                        summary.false_alarm_onset_factor = factor;
                    }
                }
            } else {
                throw ConfigError("campaign: unknown sweep type `" + type + "`");
            }
        }
    }

    summary.all_ok = std::all_of(summary.rows.begin(), summary.rows.end(),
                                 [](const CampaignRow& r) { return r.ok; });

    // machine-readable summary + aligned text table
    json rows = json::array();
    for (const auto& r : summary.rows) {
        rows.push_back({{"name", r.name},
                        {"ok", r.ok},
                        {"error", r.error},
                        {"detected_v", r.detected_v},
                        {"detected_t", r.detected_t},
                        {"latency_v_s", r.latency_v},
                        {"latency_t_s", r.latency_t},
                        {"false_alarms", r.false_alarms},
                        {"value", r.value}});
    }
    json out{{"schema_version", kJsonArtifactSchemaVersion},
             {"name", summary.name},
             {"all_ok", summary.all_ok},
             {"rows", rows}};
    if (summary.min_detectable_W) out["min_detectable_W"] = *summary.min_detectable_W;
    if (summary.false_alarm_onset_factor) {
        out["false_alarm_onset_factor"] = *summary.false_alarm_onset_factor;
    }

    std::filesystem::path out_dir = base / "out";
    if (const char* env = std::getenv("CELLDIAG_OUT_DIR"); env && *env) out_dir = env;
    summary.summary_json = out_dir / (summary.name + "_summary.json");
    write_file_atomic(summary.summary_json, out.dump(2) + "\n");

    std::ostringstream tab;
    char line[256];
    std::snprintf(line, sizeof line, "%-40s %-4s %-6s %-6s %-10s %-10s %-6s %-10s\n", "scenario",
                  "ok", "det_V", "det_T", "lat_V[s]", "lat_T[s]", "FA", "value");
    tab << line;
    for (const auto& r : summary.rows) {
        std::snprintf(line, sizeof line, "%-40s %-4s %-6s %-6s %-10.6g %-10.6g %-6d %-10.6g\n",
                      r.name.c_str(), r.ok ? "yes" : "NO", r.detected_v ? "yes" : "no",
                      r.detected_t ? "yes" : "no", r.latency_v, r.latency_t, r.false_alarms,
                      r.value);
        tab << line;
    }
    if (summary.min_detectable_W) {
        tab << "min detectable thermal fault: " << format_double(*summary.min_detectable_W)
            << " W\n";
    }
    if (summary.false_alarm_onset_factor) {
        tab << "false-alarm onset factor: " << format_double(*summary.false_alarm_onset_factor)
            << "\n";
    }
    summary.summary_txt = out_dir / (summary.name + "_summary.txt");
    write_file_atomic(summary.summary_txt, tab.str());
    return summary;
}

}  // namespace celldiag
