#include "celldiag/voltage.hpp"

#include "celldiag/errors.hpp"

#include <cmath>

namespace celldiag {

namespace {

struct SurfaceStoich {
    double theta_a;
    double theta_c;
};

SurfaceStoich surface_stoichiometry(const Eigen::VectorXd& z1, const CellParams& p) {
    const double c_surf = z1(z1.size() - 1);
    if (!(c_surf > 0.0 && c_surf < p.c_max_a)) {
        throw DomainError("anode: surface concentration " + std::to_string(c_surf) +
                          " outside (0, c_max_a)");
    }
    SurfaceStoich s{p.theta_anode(c_surf), p.theta_cathode(c_surf)};
    if (!p.ocp_anode.contains(s.theta_a)) {
        throw DomainError("anode: stoichiometry " + std::to_string(s.theta_a) +
                          " outside OCP map domain");
    }
    if (!p.ocp_cathode.contains(s.theta_c)) {
        throw DomainError("cathode: stoichiometry " + std::to_string(s.theta_c) +
                          " outside OCP map domain");
    }
    return s;
}

}  // namespace

double terminal_voltage(const Eigen::VectorXd& z1, double current, double temperature_K,
                        const CellParams& p) {
    const SurfaceStoich s = surface_stoichiometry(z1, p);
    const double thermo = p.ocp_cathode.value(s.theta_c) + p.ocp_anode.value(s.theta_a);
    const double rt = p.R_gas * temperature_K;
    const double eta_c =
        (rt / (p.alpha_c * p.F)) * std::asinh(current / (2.0 * p.a_c() * p.A_c * p.L_c * p.i0_c));
    const double eta_a =
        (rt / (p.alpha_a * p.F)) * std::asinh(current / (2.0 * p.a_a() * p.A_a * p.L_a * p.i0_a));
    return thermo - p.R_b * current - eta_c - eta_a;
}

double heat_generation(const Eigen::VectorXd& z1, double current, double v_term,
                       const CellParams& p) {
    const SurfaceStoich s = surface_stoichiometry(z1, p);
    const double thermo = p.ocp_cathode.value(s.theta_c) + p.ocp_anode.value(s.theta_a);
    return current * (thermo - v_term);
}

VoltageLinearization linearize_voltage(const CellParams& p, const Eigen::VectorXd& z1_op,
                                       double current_op, double temperature_op_K) {
    const SurfaceStoich s = surface_stoichiometry(z1_op, p);

    bool one_sided_a = false;
    bool one_sided_c = false;
    const double dUa = p.ocp_anode.derivative(s.theta_a, &one_sided_a);
    const double dUc = p.ocp_cathode.derivative(s.theta_c, &one_sided_c);

    VoltageLinearization lin;
    lin.one_sided_derivative = one_sided_a || one_sided_c;
    lin.C1 = Eigen::RowVectorXd::Zero(z1_op.size());
    // dV/dc_N: OCP maps take stoichiometry, so their slopes carry 1/c_max factors.
    lin.C1(z1_op.size() - 1) = dUc * p.alpha1() / p.c_max_c + dUa / p.c_max_a;

    const double rt = p.R_gas * temperature_op_K;
    const double den_c = 2.0 * p.a_c() * p.A_c * p.L_c * p.i0_c;
    const double den_a = 2.0 * p.a_a() * p.A_a * p.L_a * p.i0_a;
    const double u_c = current_op / den_c;
    const double u_a = current_op / den_a;
    lin.D1 = -p.R_b - (rt / (p.alpha_c * p.F)) / (den_c * std::sqrt(1.0 + u_c * u_c)) -
             (rt / (p.alpha_a * p.F)) / (den_a * std::sqrt(1.0 + u_a * u_a));

    const double v_op = terminal_voltage(z1_op, current_op, temperature_op_K, p);
    lin.offset = v_op - lin.C1 * z1_op - lin.D1 * current_op;
    return lin;
}

}  // namespace celldiag
