#include "celldiag/identify.hpp"

#include "celldiag/errors.hpp"
#include "celldiag/state_space.hpp"
#include "celldiag/voltage.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace celldiag {

namespace {
constexpr double kPenaltyCost = 1e6;
}

Eigen::VectorXd theta_from_params(const CellParams& p) {
    Eigen::VectorXd th(kThetaDim);
    th << p.D, p.A_a, p.A_c, p.R_b, p.m_Li, p.eps_a, p.eps_c, p.h_conv, p.C_p, p.k_th;
    return th;
}

CellParams params_with_theta(const CellParams& base, const Eigen::VectorXd& theta) {
    if (theta.size() != kThetaDim) throw ConfigError("theta must have 10 entries");
    CellParams p = base;
    p.D = theta[0];
    p.A_a = theta[1];
    p.A_c = theta[2];
    p.R_b = theta[3];
    p.m_Li = theta[4];
    p.eps_a = theta[5];
    p.eps_c = theta[6];
    p.h_conv = theta[7];
    p.C_p = theta[8];
    p.k_th = theta[9];
    return p;
}

void IdentificationProblem::validate() const {
    if (data.empty()) throw ConfigError("identification: need at least one data cycle");
    for (const auto& rec : data) {
        if (rec.size() < 2) throw ConfigError("identification: data cycle too short");
    }
    if (theta0.size() != kThetaDim || lower.size() != kThetaDim || upper.size() != kThetaDim) {
        throw ConfigError("identification: theta0/bounds must have 10 entries");
    }
    for (int i = 0; i < kThetaDim; ++i) {
        if (!(lower[i] < upper[i])) throw ConfigError("identification: empty bound interval");
        if (theta0[i] < lower[i] || theta0[i] > upper[i]) {
            throw ConfigError("identification: theta0 outside bounds");
        }
    }
    if (weight_v < 0.0 || weight_t < 0.0 || (weight_v == 0.0 && weight_t == 0.0)) {
        throw ConfigError("identification: weights must be >= 0 and not both zero");
    }
}

double rms_cost(const Eigen::VectorXd& theta, const IdentificationProblem& problem) {
    CellParams p = params_with_theta(problem.base, theta);
    try {
        p.validate();
        const StateSpace ss = build_state_space(p);

        double sum_v = 0.0, sum_t = 0.0;
        long count = 0;
        for (const auto& rec : problem.data) {
            Eigen::VectorXd z1 = Eigen::VectorXd::Constant(p.N, rec.initial_theta_a * p.c_max_a);
            Eigen::VectorXd z2 = Eigen::VectorXd::Constant(p.M, rec.initial_T);
            const double heat_scale = p.dt / (p.rho * p.C_p * p.V_b);
            for (std::size_t l = 0; l < rec.size(); ++l) {
                const double i_l = rec.I[l];
                const double t_avg = mean_temperature(z2);
                const double v_model = terminal_voltage(z1, i_l, t_avg, p);
                const double t_model = z2[p.M - 1];
                const double ev = v_model - rec.V_meas[l];
                const double et = t_model - rec.T_meas[l];
                sum_v += ev * ev;
                sum_t += et * et;
                ++count;

                const double q_dot = heat_generation(z1, i_l, v_model, p);
                z2 = ss.A2 * z2 + ss.B2 * rec.T_inf +
                     Eigen::VectorXd::Constant(p.M, heat_scale * q_dot);
                z1 = ss.A1 * z1 + ss.B1 * i_l;
                if (!z1.allFinite() || !z2.allFinite()) throw DivergedError("nan state", l);
            }
        }
        if (count == 0) return kPenaltyCost;
        return problem.weight_v * std::sqrt(sum_v / count) +
               problem.weight_t * std::sqrt(sum_t / count);
    } catch (const std::exception&) {
        return kPenaltyCost;
    }
}

namespace {

struct NormalizedObjective {
    const std::function<double(const Eigen::VectorXd&)>& fn;
    Eigen::VectorXd lo, span;
    long evals = 0;

    double operator()(Eigen::VectorXd& x) {
        for (int i = 0; i < x.size(); ++i) x[i] = std::clamp(x[i], 0.0, 1.0);
        ++evals;
        return fn(lo + span.cwiseProduct(x));
    }
};

struct NmOutcome {
    Eigen::VectorXd x;
    double cost = 0.0;
    bool converged = false;
};

NmOutcome nelder_mead(NormalizedObjective& eval, const Eigen::VectorXd& x0, double step,
                      long budget, double tol, std::vector<double>* trace) {
    const int d = static_cast<int>(x0.size());
    const int m = d + 1;
    std::vector<Eigen::VectorXd> pts(m);
    std::vector<double> cost(m);
    pts[0] = x0;
    cost[0] = eval(pts[0]);
    for (int i = 1; i < m; ++i) {
        pts[i] = x0;
        pts[i][i - 1] = std::clamp(x0[i - 1] + (x0[i - 1] > 0.5 ? -step : step), 0.0, 1.0);
        cost[i] = eval(pts[i]);
    }

    auto order = [&]() {
        std::vector<int> idx(m);
        std::iota(idx.begin(), idx.end(), 0);
        std::sort(idx.begin(), idx.end(), [&](int a, int b) { return cost[a] < cost[b]; });
        std::vector<Eigen::VectorXd> p2(m);
        std::vector<double> c2(m);
        for (int i = 0; i < m; ++i) {
            p2[i] = pts[idx[i]];
            c2[i] = cost[idx[i]];
        }
        pts.swap(p2);
        cost.swap(c2);
    };
    order();
    double best_seen = cost[0];
    if (trace) trace->push_back(best_seen);

    NmOutcome res;
    while (eval.evals < budget) {
        if (cost[m - 1] - cost[0] < tol) {
            res.converged = true;
            break;
        }
        Eigen::VectorXd centroid = Eigen::VectorXd::Zero(d);
        for (int i = 0; i < m - 1; ++i) centroid += pts[i];
        centroid /= (m - 1);

        Eigen::VectorXd xr = centroid + (centroid - pts[m - 1]);
        double cr = eval(xr);
        if (cr < cost[0]) {
            Eigen::VectorXd xe = centroid + 2.0 * (centroid - pts[m - 1]);
            const double ce = eval(xe);
            if (ce < cr) {
                pts[m - 1] = xe;
                cost[m - 1] = ce;
            } else {
                pts[m - 1] = xr;
                cost[m - 1] = cr;
            }
        } else if (cr < cost[m - 2]) {
            pts[m - 1] = xr;
            cost[m - 1] = cr;
        } else {
            Eigen::VectorXd xc = centroid + 0.5 * (pts[m - 1] - centroid);
            const double cc = eval(xc);
            if (cc < cost[m - 1]) {
                pts[m - 1] = xc;
                cost[m - 1] = cc;
            } else {
                for (int i = 1; i < m; ++i) {
                    pts[i] = pts[0] + 0.5 * (pts[i] - pts[0]);
                    cost[i] = eval(pts[i]);
                    if (eval.evals >= budget) break;
                }
            }
        }
        order();
        if (cost[0] < best_seen) {
            best_seen = cost[0];
            if (trace) trace->push_back(best_seen);
        }
    }
    res.x = pts[0];
    res.cost = cost[0];
    return res;
}

}  // namespace

SimplexResult simplex_minimize(const std::function<double(const Eigen::VectorXd&)>& objective,
                               const Eigen::VectorXd& x0, const Eigen::VectorXd& lower,
                               const Eigen::VectorXd& upper, const IdentifyOptions& options,
                               std::vector<double>* trace) {
    const int d = static_cast<int>(x0.size());
    if (lower.size() != d || upper.size() != d) {
        throw ConfigError("simplex_minimize: bound dimension mismatch");
    }
    for (int i = 0; i < d; ++i) {
        if (!(lower[i] < upper[i])) throw ConfigError("simplex_minimize: empty bound interval");
    }

    NormalizedObjective eval{objective, lower, upper - lower};
    Eigen::VectorXd n0 = (x0 - lower).cwiseQuotient(upper - lower);
    Eigen::VectorXd probe = n0;
    const double c0 = eval(probe);

    std::mt19937_64 rng(options.seed);
    std::uniform_real_distribution<double> jitter(-0.15, 0.15);

    Eigen::VectorXd best_x = n0;
    double best_cost = c0;
    bool converged = false;

    const int rounds = std::max(1, options.restarts);
    const long per_round = options.budget / rounds;
    for (int r = 0; r < rounds && eval.evals < options.budget; ++r) {
        Eigen::VectorXd start = best_x;
        if (r > 0) {
            for (int i = 0; i < start.size(); ++i) {
                start[i] = std::clamp(start[i] + jitter(rng), 0.0, 1.0);
            }
        }
        const long budget_r = std::min<long>(options.budget, eval.evals + per_round);
        NmOutcome res =
            nelder_mead(eval, start, options.simplex_step, budget_r, options.tol, trace);
        if (res.cost < best_cost) {
            best_cost = res.cost;
            best_x = res.x;
        }
        converged = converged || res.converged;
        if (best_cost <= options.tol) break;
    }

    SimplexResult out;
    out.x = lower + (upper - lower).cwiseProduct(best_x);
    out.cost = best_cost;
    out.converged = converged || best_cost <= options.tol;
    out.evaluations = eval.evals;
    return out;
}

std::pair<Eigen::VectorXd, IdentifyReport> identify(const IdentificationProblem& problem,
                                                    const IdentifyOptions& options) {
    problem.validate();
    IdentifyReport report;
    report.initial_cost = rms_cost(problem.theta0, problem);

    long penalized = 0;
    auto objective = [&problem, &penalized](const Eigen::VectorXd& theta) {
        const double c = rms_cost(theta, problem);
        if (c >= kPenaltyCost) ++penalized;
        return c;
    };

    const SimplexResult res = simplex_minimize(objective, problem.theta0, problem.lower,
                                               problem.upper, options, &report.trace);
    Eigen::VectorXd theta_star = res.x;
    report.final_cost = res.cost;
    report.evaluations = res.evaluations;
    report.penalized_evaluations = penalized;
    report.converged = res.converged;

    // never worse than the starting point
    if (report.final_cost > report.initial_cost) {
        theta_star = problem.theta0;
        report.final_cost = report.initial_cost;
    }

    // +-5% per-parameter sensitivity at the solution
    double max_delta = 0.0;
    for (int i = 0; i < kThetaDim; ++i) {
        SensitivityEntry s;
        s.name = kThetaNames[static_cast<std::size_t>(i)];
        double delta = 0.0;
        for (double f : {0.95, 1.05}) {
            Eigen::VectorXd th = theta_star;
            th[i] = std::clamp(th[i] * f, problem.lower[i], problem.upper[i]);
            delta = std::max(delta, std::abs(rms_cost(th, problem) - report.final_cost));
        }
        s.cost_delta = delta;
        max_delta = std::max(max_delta, delta);
        report.sensitivity.push_back(s);
    }
    // flat = cost change below 0.1% of the largest per-parameter change
    for (auto& s : report.sensitivity) {
        s.sensitive = max_delta > 0.0 && s.cost_delta > 1e-3 * max_delta;
    }

    return {theta_star, report};
}

}  // namespace celldiag
