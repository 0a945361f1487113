#include "celldiag/cell.hpp"

#include "celldiag/errors.hpp"
#include "celldiag/kv_config.hpp"

#include <cmath>

namespace celldiag {

namespace {

void require_positive(double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) {
        throw ConfigError(std::string("cell params: `") + name + "` must be strictly positive");
    }
}

}  // namespace

void CellParams::validate() const {
    require_positive(D, "D");
    require_positive(X, "X");
    require_positive(Y, "Y");
    require_positive(A_a, "A_a");
    require_positive(A_c, "A_c");
    require_positive(L_a, "L_a");
    require_positive(L_c, "L_c");
    require_positive(rho, "rho");
    require_positive(C_p, "C_p");
    require_positive(k_th, "k_th");
    require_positive(h_conv, "h_conv");
    require_positive(V_b, "V_b");
    require_positive(dt, "dt");
    require_positive(R_b, "R_b");
    require_positive(m_Li, "m_Li");
    require_positive(i0_a, "i0_a");
    require_positive(i0_c, "i0_c");
    require_positive(c_max_a, "c_max_a");
    require_positive(c_max_c, "c_max_c");
    require_positive(alpha_a, "alpha_a");
    require_positive(alpha_c, "alpha_c");
    require_positive(F, "F");
    require_positive(R_gas, "R_gas");
    require_positive(q_nominal_Ah, "q_nominal_Ah");
    if (!(eps_a > 0.0 && eps_a <= 1.0)) throw ConfigError("cell params: eps_a must be in (0, 1]");
    if (!(eps_c > 0.0 && eps_c <= 1.0)) throw ConfigError("cell params: eps_c must be in (0, 1]");
    if (N < 2) throw ConfigError("cell params: node count N must be >= 2");
    if (M < 2) throw ConfigError("cell params: node count M must be >= 2");
    if (!(alpha1() < 0.0)) throw ConfigError("cell params: alpha1 must be negative");
    if (!(alpha2() > 0.0)) throw ConfigError("cell params: alpha2 must be positive");
    if (ocp_anode.knot_count() < 2) throw ConfigError("cell params: anode OCP map not loaded");
    if (ocp_cathode.knot_count() < 2) throw ConfigError("cell params: cathode OCP map not loaded");
}

CellParams CellParams::load(const std::filesystem::path& config_path) {
    const KvFile kv = KvFile::parse_file(config_path);
    CellParams p;
    p.D = kv.get_double_or("D", p.D);
    p.X = kv.get_double_or("X", p.X);
    p.Y = kv.get_double_or("Y", p.Y);
    p.N = static_cast<int>(kv.get_int_or("N", p.N));
    p.M = static_cast<int>(kv.get_int_or("M", p.M));
    p.A_a = kv.get_double_or("A_a", p.A_a);
    p.A_c = kv.get_double_or("A_c", p.A_c);
    p.L_a = kv.get_double_or("L_a", p.L_a);
    p.L_c = kv.get_double_or("L_c", p.L_c);
    p.eps_a = kv.get_double_or("eps_a", p.eps_a);
    p.eps_c = kv.get_double_or("eps_c", p.eps_c);
    p.R_b = kv.get_double_or("R_b", p.R_b);
    p.m_Li = kv.get_double_or("m_Li", p.m_Li);
    p.alpha_a = kv.get_double_or("alpha_a", p.alpha_a);
    p.alpha_c = kv.get_double_or("alpha_c", p.alpha_c);
    p.i0_a = kv.get_double_or("i0_a", p.i0_a);
    p.i0_c = kv.get_double_or("i0_c", p.i0_c);
    p.c_max_a = kv.get_double_or("c_max_a", p.c_max_a);
    p.c_max_c = kv.get_double_or("c_max_c", p.c_max_c);
    p.rho = kv.get_double_or("rho", p.rho);
    p.C_p = kv.get_double_or("C_p", p.C_p);
    p.k_th = kv.get_double_or("k_th", p.k_th);
    p.h_conv = kv.get_double_or("h_conv", p.h_conv);
    p.V_b = kv.get_double_or("V_b", p.V_b);
    p.F = kv.get_double_or("F", p.F);
    p.R_gas = kv.get_double_or("R_gas", p.R_gas);
    p.dt = kv.get_double_or("dt", p.dt);
    p.q_nominal_Ah = kv.get_double_or("q_nominal_Ah", p.q_nominal_Ah);
    p.theta_a_empty = kv.get_double_or("theta_a_empty", p.theta_a_empty);

    const auto base = config_path.parent_path();
    auto resolve = [&base](const std::string& rel) {
        std::filesystem::path q(rel);
        return q.is_absolute() ? q : base / q;
    };
    p.ocp_anode_source = resolve(kv.get_string("ocp_anode"));
    p.ocp_cathode_source = resolve(kv.get_string("ocp_cathode"));
    p.ocp_anode = OcpMap::load_csv(p.ocp_anode_source, "ocp_anode");
    p.ocp_cathode = OcpMap::load_csv(p.ocp_cathode_source, "ocp_cathode");
    p.validate();
    return p;
}

void CellParams::save(const std::filesystem::path& config_path) const {
    KvFile kv;
    kv.set("D", D);
    kv.set("X", X);
    kv.set("Y", Y);
    kv.set("N", static_cast<long>(N));
    kv.set("M", static_cast<long>(M));
    kv.set("A_a", A_a);
    kv.set("A_c", A_c);
    kv.set("L_a", L_a);
    kv.set("L_c", L_c);
    kv.set("eps_a", eps_a);
    kv.set("eps_c", eps_c);
    kv.set("R_b", R_b);
    kv.set("m_Li", m_Li);
    kv.set("alpha_a", alpha_a);
    kv.set("alpha_c", alpha_c);
    kv.set("i0_a", i0_a);
    kv.set("i0_c", i0_c);
    kv.set("c_max_a", c_max_a);
    kv.set("c_max_c", c_max_c);
    kv.set("rho", rho);
    kv.set("C_p", C_p);
    kv.set("k_th", k_th);
    kv.set("h_conv", h_conv);
    kv.set("V_b", V_b);
    kv.set("F", F);
    kv.set("R_gas", R_gas);
    kv.set("dt", dt);
    kv.set("q_nominal_Ah", q_nominal_Ah);
    kv.set("theta_a_empty", theta_a_empty);
    kv.set("ocp_anode", ocp_anode_source.empty() ? std::string("ocp_anode_v1.csv")
                                                  : ocp_anode_source.string());
    kv.set("ocp_cathode", ocp_cathode_source.empty() ? std::string("ocp_cathode_v1.csv")
                                                     : ocp_cathode_source.string());
    kv.write_file(config_path);
}

PlantState make_uniform_state(const CellParams& p, double soc, double temperature_K) {
    PlantState s;
    const double theta = p.theta_a_empty + soc * p.theta_a_span_discrete();
    s.z1 = Eigen::VectorXd::Constant(p.N, theta * p.c_max_a);
    s.z2 = Eigen::VectorXd::Constant(p.M, temperature_K);
    s.t = 0.0;
    return s;
}

double mean_concentration(const Eigen::VectorXd& z1) {
    double num = 0.0, den = 0.0;
    for (int i = 0; i < z1.size(); ++i) {
        const double w = static_cast<double>(i + 1) * static_cast<double>(i + 1);
        num += w * z1[i];
        den += w;
    }
    return num / den;
}

double mean_temperature(const Eigen::VectorXd& z2) {
    double num = 0.0, den = 0.0;
    for (int j = 0; j < z2.size(); ++j) {
        const double w = static_cast<double>(j + 1);
        num += w * z2[j];
        den += w;
    }
    return num / den;
}

double soc_of(const CellParams& p, const PlantState& s) {
    const double theta = mean_concentration(s.z1) / p.c_max_a;
    return (theta - p.theta_a_empty) / p.theta_a_span_discrete();
}

bool state_within_envelope(const CellParams& p, const PlantState& s) {
    for (int i = 0; i < s.z1.size(); ++i) {
        if (!(s.z1[i] >= 0.0 && s.z1[i] <= p.c_max_a) || !std::isfinite(s.z1[i])) return false;
    }
    for (int j = 0; j < s.z2.size(); ++j) {
        if (!(s.z2[j] >= 200.0 && s.z2[j] <= 500.0) || !std::isfinite(s.z2[j])) return false;
    }
    return true;
}

}  // namespace celldiag
