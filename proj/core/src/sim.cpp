#include "celldiag/sim.hpp"

#include "celldiag/csv.hpp"
#include "celldiag/errors.hpp"
#include "celldiag/kv_config.hpp"
#include "celldiag/version.hpp"
#include "celldiag/voltage.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

namespace celldiag {

using nlohmann::json;

namespace {

constexpr double kPi = std::numbers::pi;

std::uint64_t splitmix64(std::uint64_t& x) {
    x += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

}  // namespace

std::string to_string(ProtocolKind kind) {
    switch (kind) {
        case ProtocolKind::constant_current: return "constant_current";
        case ProtocolKind::cccv: return "cccv";
        case ProtocolKind::fast_charge_profile: return "fast_charge_profile";
        case ProtocolKind::csv_replay: return "csv_replay";
    }
    return "unknown";
}

ProtocolKind protocol_kind_from_string(const std::string& s) {
    if (s == "constant_current") return ProtocolKind::constant_current;
    if (s == "cccv") return ProtocolKind::cccv;
    if (s == "fast_charge_profile") return ProtocolKind::fast_charge_profile;
    if (s == "csv_replay") return ProtocolKind::csv_replay;
    throw ConfigError("unknown protocol kind: " + s);
}

void Protocol::validate() const {
    if (kind == ProtocolKind::cccv && !(cv_limit_V >= 2.5 && cv_limit_V <= 4.2)) {
        throw ConfigError("protocol: CV limit must lie within [2.5, 4.2] V");
    }
    if (std::abs(current_A) > i_max) {
        throw ConfigError("protocol: |current| exceeds i_max");
    }
    for (const auto& [ts, is] : profile) {
        (void)ts;
        if (std::abs(is) > i_max) throw ConfigError("protocol: profile current exceeds i_max");
    }
    if ((kind == ProtocolKind::fast_charge_profile || kind == ProtocolKind::csv_replay) &&
        profile.empty()) {
        throw ConfigError("protocol: profile kind requires samples");
    }
    if (kind == ProtocolKind::cccv && !(cutoff_A > 0.0)) {
        throw ConfigError("protocol: CV cutoff current must be positive");
    }
    if (max_steps < 1) throw ConfigError("protocol: max_steps must be >= 1");
}

void FaultConfig::validate() const {
    if (voltage) {
        if (!(voltage->t_on < voltage->t_off)) throw ConfigError("voltage fault: t_on must be < t_off");
        if (voltage->a1 < 0.0 || voltage->a2 < 0.0) throw ConfigError("voltage fault: amplitudes must be >= 0");
    }
    if (thermal) {
        if (!(thermal->t_on < thermal->t_off)) throw ConfigError("thermal fault: t_on must be < t_off");
        if (thermal->power_W < 0.0) throw ConfigError("thermal fault: power must be >= 0");
    }
}

void UncertaintyConfig::validate() const {
    if (voltage.noise_std < 0.0 || thermal.noise_std < 0.0) {
        throw ConfigError("uncertainty: noise std must be >= 0");
    }
    if (!(thermal.convection_factor > 0.0)) {
        throw ConfigError("uncertainty: convection factor must be positive");
    }
}

double voltage_fault_signal(double t, const FaultConfig& cfg) {
    if (!cfg.voltage) return 0.0;
    const VoltageFault& f = *cfg.voltage;
    if (t < f.t_on || t > f.t_off) return 0.0;
    const double s = (t - f.t_on) / (f.t_off - f.t_on);
    const double x1 = -kPi + 2.0 * kPi * s;
    const double x2 = kPi / 3.0 + (2.0 * kPi / 3.0) * s;
    const double arg = x1 - f.mu;
    const double expo = f.gaussian_bump ? std::exp(-0.5 * arg * arg) : std::exp(-0.5 * arg);
    return f.a1 * expo + f.a2 * std::sin(x2);
}

double thermal_fault_power(double t, const FaultConfig& cfg) {
    if (!cfg.thermal) return 0.0;
    const ThermalFault& f = *cfg.thermal;
    if (t < f.t_on || t > f.t_off) return 0.0;
    return f.power_W;
}

UncertaintyState UncertaintyState::seeded(const UncertaintyConfig& cfg, int cycle_index) {
    UncertaintyState s;
    std::uint64_t x = cfg.seed ^ (0xA0761D6478BD642FULL + static_cast<std::uint64_t>(cycle_index));
    s.rng_v.seed(splitmix64(x));
    s.rng_t.seed(splitmix64(x));
    s.r_b_factor = 1.0 + cfg.voltage.r_growth_per_cycle * cycle_index;
    return s;
}

CellParams plant_truth_params(const CellParams& nominal, const UncertaintyConfig& unc,
                              int cycle_index) {
    CellParams truth = nominal;
    truth.R_b *= 1.0 + unc.voltage.r_growth_per_cycle * cycle_index;
    truth.h_conv *= unc.thermal.convection_factor;
    return truth;
}

namespace {

struct NoiseChannel {
    double a;      // one-pole coefficient
    double scale;  // maps filter state to configured stationary std
};

NoiseChannel make_channel(double cutoff_hz, double dt, double std) {
    NoiseChannel c;
    c.a = std::exp(-2.0 * kPi * cutoff_hz * dt);
    const double stat = std::sqrt((1.0 - c.a) / (1.0 + c.a));
    c.scale = stat > 0.0 ? std / stat : 0.0;
    return c;
}

double advance_noise(double& lp, std::mt19937_64& rng, const NoiseChannel& c, bool& primed) {
    std::normal_distribution<double> n01(0.0, 1.0);
    if (!primed) {
        // start the filter in its stationary distribution
        lp = n01(rng) * std::sqrt((1.0 - c.a) / (1.0 + c.a));
        primed = true;
    } else {
        lp = c.a * lp + (1.0 - c.a) * n01(rng);
    }
    return lp * c.scale;
}

}  // namespace

PlantState step(const PlantState& state, double current, double T_inf, const CellParams& truth,
                const StateSpace& ss, const FaultConfig& fault, const UncertaintyConfig& unc,
                UncertaintyState& unc_state, StepOutput& out) {
    const double t_avg = mean_temperature(state.z2);
    out.V_true = terminal_voltage(state.z1, current, t_avg, truth);
    out.Q_dot = heat_generation(state.z1, current, out.V_true, truth);

    // smooth unmodelled-heat surrogate, odd in current
    const double soc = soc_of(truth, state);
    const double q_rev =
        unc.thermal.reversible_heat_W * std::sin(2.0 * kPi * soc) * std::tanh(current);

    out.dT_power = thermal_fault_power(state.t, fault);
    out.dV = voltage_fault_signal(state.t, fault);

    const NoiseChannel ch_v = make_channel(unc.noise_cutoff_hz, truth.dt, unc.voltage.noise_std);
    const NoiseChannel ch_t = make_channel(unc.noise_cutoff_hz, truth.dt, unc.thermal.noise_std);
    bool primed_v = unc_state.primed;
    bool primed_t = unc_state.primed;
    const double noise_v = advance_noise(unc_state.lp_v, unc_state.rng_v, ch_v, primed_v);
    const double noise_t = advance_noise(unc_state.lp_t, unc_state.rng_t, ch_t, primed_t);
    unc_state.primed = true;

    out.wV = unc.voltage.bias + unc.voltage.drift_per_s * state.t + noise_v;
    out.wT = unc.thermal.bias + noise_t;

    out.V_meas = out.V_true + out.wV + out.dV;
    out.T_true = state.z2(state.z2.size() - 1);
    out.T_meas = out.T_true + out.wT;

    PlantState next;
    next.z1 = ss.A1 * state.z1 + ss.B1 * current;
    const double heat_rate = (out.Q_dot + q_rev + out.dT_power) / (truth.rho * truth.C_p * truth.V_b);
    next.z2 = ss.A2 * state.z2 + ss.B2 * T_inf +
              Eigen::VectorXd::Constant(state.z2.size(), truth.dt * heat_rate);
    next.t = state.t + truth.dt;
    return next;
}

CycleRecord run_cycle(const PlantState& initial, const Protocol& protocol, const FaultConfig& fault,
                      const UncertaintyConfig& unc, std::uint64_t seed, const CellParams& nominal,
                      double T_inf, int cycle_index) {
    protocol.validate();
    fault.validate();
    unc.validate();

    UncertaintyConfig unc_seeded = unc;
    unc_seeded.seed = seed;
    CellParams truth = plant_truth_params(nominal, unc_seeded, cycle_index);
    truth.validate();
    const StateSpace ss = build_state_space(truth);
    UncertaintyState unc_state = UncertaintyState::seeded(unc_seeded, cycle_index);

    CycleRecord rec;
    rec.cycle_index = cycle_index;
    rec.seed = seed;
    rec.dt = truth.dt;
    rec.initial_soc = soc_of(nominal, initial);
    rec.initial_theta_a = mean_concentration(initial.z1) / nominal.c_max_a;
    rec.initial_T = initial.z2(0);
    rec.T_inf = T_inf;
    rec.protocol = protocol;
    rec.fault = fault;
    rec.uncertainty = unc_seeded;

    PlantState state = initial;
    bool cv_mode = false;
    double cv_kp = 0.0;
    double current = protocol.current_A;
    double prev_v_true = 0.0;
    const bool charging = protocol.current_A < 0.0;

    for (long k = 0;; ++k) {
        if (k >= protocol.max_steps) {
            throw DivergedError("run_cycle: protocol did not terminate within max_steps", k);
        }

        // choose the current for this sample
        switch (protocol.kind) {
            case ProtocolKind::constant_current:
                current = protocol.current_A;
                break;
            case ProtocolKind::cccv:
                if (cv_mode) {
                    double i_next = current + cv_kp * (prev_v_true - protocol.cv_limit_V);
                    if (charging) {
                        i_next = std::clamp(i_next, protocol.current_A, 0.0);
                    } else {
                        i_next = std::clamp(i_next, 0.0, protocol.current_A);
                    }
                    current = i_next;
                } else {
                    current = protocol.current_A;
                }
                break;
            case ProtocolKind::fast_charge_profile:
            case ProtocolKind::csv_replay: {
                // zero-order hold on the profile grid
                auto it = std::upper_bound(
                    protocol.profile.begin(), protocol.profile.end(), state.t,
                    [](double t, const std::pair<double, double>& s) { return t < s.first; });
                if (it == protocol.profile.begin()) {
                    current = protocol.profile.front().second;
                } else {
                    current = std::prev(it)->second;
                }
                break;
            }
        }

        StepOutput out;
        PlantState next = step(state, current, T_inf, truth, ss, fault, unc_seeded, unc_state, out);

        rec.t.push_back(state.t);
        rec.I.push_back(current);
        rec.V_meas.push_back(out.V_meas);
        rec.T_meas.push_back(out.T_meas);
        rec.V_true.push_back(out.V_true);
        rec.T_true.push_back(out.T_true);
        rec.dV.push_back(out.dV);
        rec.dT.push_back(out.dT_power);
        rec.wV.push_back(out.wV);
        rec.wT.push_back(out.wT);

        prev_v_true = out.V_true;

        // termination checks against the sample just recorded
        if (protocol.duration_s >= 0.0 && state.t >= protocol.duration_s) break;
        if (protocol.soc_stop >= 0.0) {
            const double soc = soc_of(truth, state);
            if ((charging && soc >= protocol.soc_stop) || (!charging && soc <= protocol.soc_stop)) {
                break;
            }
        }
        if (protocol.kind == ProtocolKind::cccv) {
            if (!cv_mode) {
                const bool crossed = charging ? out.V_true >= protocol.cv_limit_V
                                              : out.V_true <= protocol.cv_limit_V;
                if (crossed) {
                    cv_mode = true;
                    const VoltageLinearization lin = linearize_voltage(
                        truth, state.z1, current, mean_temperature(state.z2));
                    cv_kp = -0.7 / lin.D1;
                }
            } else if (std::abs(current) <= protocol.cutoff_A) {
                break;
            }
        }
        if ((protocol.kind == ProtocolKind::fast_charge_profile ||
             protocol.kind == ProtocolKind::csv_replay) &&
            next.t > protocol.profile.back().first) {
            break;
        }

        if (!state_within_envelope(truth, next)) {
            throw DivergedError("run_cycle: state left sanity envelope at step " + std::to_string(k),
                                k);
        }
        state = next;
    }
    return rec;
}

// --- persistence ---

namespace {

json protocol_to_json(const Protocol& p) {
    json j{{"kind", to_string(p.kind)},    {"current_A", p.current_A},
           {"cv_limit_V", p.cv_limit_V},   {"cutoff_A", p.cutoff_A},
           {"soc_stop", p.soc_stop},       {"duration_s", p.duration_s},
           {"i_max", p.i_max},             {"max_steps", p.max_steps}};
    if (!p.profile.empty()) {
        json prof = json::array();
        for (const auto& [t, i] : p.profile) prof.push_back({t, i});
        j["profile"] = prof;
    }
    return j;
}

Protocol protocol_from_json(const json& j) {
    Protocol p;
    p.kind = protocol_kind_from_string(j.at("kind").get<std::string>());
    p.current_A = j.at("current_A").get<double>();
    p.cv_limit_V = j.at("cv_limit_V").get<double>();
    p.cutoff_A = j.at("cutoff_A").get<double>();
    p.soc_stop = j.at("soc_stop").get<double>();
    p.duration_s = j.at("duration_s").get<double>();
    p.i_max = j.at("i_max").get<double>();
    p.max_steps = j.at("max_steps").get<long>();
    if (j.contains("profile")) {
        for (const auto& s : j.at("profile")) {
            p.profile.emplace_back(s.at(0).get<double>(), s.at(1).get<double>());
        }
    }
    return p;
}

json fault_to_json(const FaultConfig& f) {
    json j = json::object();
    if (f.voltage) {
        j["voltage"] = {{"a1", f.voltage->a1},     {"a2", f.voltage->a2},
                        {"mu", f.voltage->mu},     {"t_on", f.voltage->t_on},
                        {"t_off", f.voltage->t_off}, {"gaussian_bump", f.voltage->gaussian_bump}};
    }
    if (f.thermal) {
        j["thermal"] = {{"power_W", f.thermal->power_W},
                        {"t_on", f.thermal->t_on},
                        {"t_off", f.thermal->t_off}};
    }
    return j;
}

FaultConfig fault_from_json(const json& j) {
    FaultConfig f;
    if (j.contains("voltage")) {
        VoltageFault v;
        const json& jv = j.at("voltage");
        v.a1 = jv.at("a1").get<double>();
        v.a2 = jv.at("a2").get<double>();
        v.mu = jv.at("mu").get<double>();
        v.t_on = jv.at("t_on").get<double>();
        v.t_off = jv.at("t_off").get<double>();
        v.gaussian_bump = jv.at("gaussian_bump").get<bool>();
        f.voltage = v;
    }
    if (j.contains("thermal")) {
        ThermalFault t;
        const json& jt = j.at("thermal");
        t.power_W = jt.at("power_W").get<double>();
        t.t_on = jt.at("t_on").get<double>();
        t.t_off = jt.at("t_off").get<double>();
        f.thermal = t;
    }
    return f;
}

json uncertainty_to_json(const UncertaintyConfig& u) {
    return json{{"voltage",
                 {{"noise_std", u.voltage.noise_std},
                  {"bias", u.voltage.bias},
                  {"drift_per_s", u.voltage.drift_per_s},
                  {"r_growth_per_cycle", u.voltage.r_growth_per_cycle}}},
                {"thermal",
                 {{"noise_std", u.thermal.noise_std},
                  {"bias", u.thermal.bias},
                  {"convection_factor", u.thermal.convection_factor},
                  {"reversible_heat_W", u.thermal.reversible_heat_W}}},
                {"seed", u.seed},
                {"noise_cutoff_hz", u.noise_cutoff_hz}};
}

UncertaintyConfig uncertainty_from_json(const json& j) {
    UncertaintyConfig u;
    const json& jv = j.at("voltage");
    u.voltage.noise_std = jv.at("noise_std").get<double>();
    u.voltage.bias = jv.at("bias").get<double>();
    u.voltage.drift_per_s = jv.at("drift_per_s").get<double>();
    u.voltage.r_growth_per_cycle = jv.at("r_growth_per_cycle").get<double>();
    const json& jt = j.at("thermal");
    u.thermal.noise_std = jt.at("noise_std").get<double>();
    u.thermal.bias = jt.at("bias").get<double>();
    u.thermal.convection_factor = jt.at("convection_factor").get<double>();
    u.thermal.reversible_heat_W = jt.at("reversible_heat_W").get<double>();
    u.seed = j.at("seed").get<std::uint64_t>();
    u.noise_cutoff_hz = j.at("noise_cutoff_hz").get<double>();
    return u;
}

std::filesystem::path meta_path_for(const std::filesystem::path& csv_path) {
    std::filesystem::path p = csv_path;
    p.replace_extension(".meta.json");
    return p;
}

}  // namespace

void write_record_csv(const std::filesystem::path& csv_path, const CycleRecord& record) {
    CsvTable t;
    t.header = {"t", "I", "V_meas", "T_meas", "V_true", "T_true", "dV", "dT", "wV", "wT"};
    t.rows.reserve(record.size());
    for (std::size_t i = 0; i < record.size(); ++i) {
        t.rows.push_back({record.t[i], record.I[i], record.V_meas[i], record.T_meas[i],
                          record.V_true[i], record.T_true[i], record.dV[i], record.dT[i],
                          record.wV[i], record.wT[i]});
    }
    write_csv(csv_path, t);

    json meta{{"schema_version", kRecordCsvSchemaVersion},
              {"cycle_index", record.cycle_index},
              {"seed", record.seed},
              {"dt", record.dt},
              {"initial_soc", record.initial_soc},
              {"initial_theta_a", record.initial_theta_a},
              {"initial_T", record.initial_T},
              {"T_inf", record.T_inf},
              {"protocol", protocol_to_json(record.protocol)},
              {"fault", fault_to_json(record.fault)},
              {"uncertainty", uncertainty_to_json(record.uncertainty)}};
    write_file_atomic(meta_path_for(csv_path), meta.dump(2) + "\n");
}

CycleRecord read_record_csv(const std::filesystem::path& csv_path) {
    const CsvTable t = read_csv(csv_path);
    const std::vector<std::string> expect = {"t",      "I",      "V_meas", "T_meas", "V_true",
                                             "T_true", "dV",     "dT",     "wV",     "wT"};
    if (t.header != expect) {
        throw ConfigError(csv_path.string() + ": unexpected record csv header");
    }
    CycleRecord rec;
    for (const auto& row : t.rows) {
        rec.t.push_back(row[0]);
        rec.I.push_back(row[1]);
        rec.V_meas.push_back(row[2]);
        rec.T_meas.push_back(row[3]);
        rec.V_true.push_back(row[4]);
        rec.T_true.push_back(row[5]);
        rec.dV.push_back(row[6]);
        rec.dT.push_back(row[7]);
        rec.wV.push_back(row[8]);
        rec.wT.push_back(row[9]);
    }

    const auto mp = meta_path_for(csv_path);
    std::ifstream in(mp);
    if (in) {
        json meta = json::parse(in);
        rec.cycle_index = meta.at("cycle_index").get<int>();
        rec.seed = meta.at("seed").get<std::uint64_t>();
        rec.dt = meta.at("dt").get<double>();
        rec.initial_soc = meta.at("initial_soc").get<double>();
        rec.initial_theta_a = meta.at("initial_theta_a").get<double>();
        rec.initial_T = meta.at("initial_T").get<double>();
        rec.T_inf = meta.at("T_inf").get<double>();
        rec.protocol = protocol_from_json(meta.at("protocol"));
        rec.fault = fault_from_json(meta.at("fault"));
        rec.uncertainty = uncertainty_from_json(meta.at("uncertainty"));
    } else if (rec.t.size() >= 2) {
        rec.dt = rec.t[1] - rec.t[0];
    }
    return rec;
}

std::vector<std::pair<double, double>> read_current_profile(const std::filesystem::path& csv_path) {
    const CsvTable t = read_csv(csv_path);
    if (t.header.size() != 2) {
        throw ConfigError(csv_path.string() + ": current profile needs two columns (t, I)");
    }
    std::vector<std::pair<double, double>> out;
    out.reserve(t.rows.size());
    for (const auto& row : t.rows) out.emplace_back(row[0], row[1]);
    return out;
}

}  // namespace celldiag
