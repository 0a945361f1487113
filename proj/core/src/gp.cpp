#include "celldiag/gp.hpp"

#include "celldiag/errors.hpp"
#include "celldiag/kv_config.hpp"
#include "celldiag/version.hpp"
#include "celldiag/voltage.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>

namespace celldiag {

using nlohmann::json;

void GPHyper::validate(int dim) const {
    if (!(sigma_p2 > 0.0)) throw ConfigError("gp hyper: sigma_p2 must be positive");
    if (length_scales.size() != dim) {
        throw ConfigError("gp hyper: need one length scale per input dimension");
    }
    for (int i = 0; i < length_scales.size(); ++i) {
        if (!(length_scales[i] > 0.0)) throw ConfigError("gp hyper: length scales must be positive");
    }
    if (jitter >= 0.0 && jitter < 1e-12 * sigma_p2) {
        throw ConfigError("gp hyper: jitter below 1e-12 * sigma_p2");
    }
}

double kernel(const Eigen::VectorXd& v1, const Eigen::VectorXd& v2, const GPHyper& hyper) {
    if (v1.size() != v2.size() || v1.size() != hyper.length_scales.size()) {
        throw ConfigError("gp kernel: dimension mismatch");
    }
    double q = 0.0;
    for (int i = 0; i < v1.size(); ++i) {
        const double d = (v1[i] - v2[i]) / hyper.length_scales[i];
        q += d * d;
    }
    return hyper.sigma_p2 * std::exp(-0.5 * q);
}

GPModel GPModel::fit(const UncertaintyDataset& data, GPHyper hyper, long cap) {
    if (data.size() < 1) throw ConfigError("gp fit: need at least one training point");
    if (data.labels.size() != data.inputs.rows()) {
        throw ConfigError("gp fit: label count must equal input row count");
    }
    if (!data.inputs.allFinite() || !data.labels.allFinite()) {
        throw ConfigError("gp fit: inputs/labels must be finite");
    }

    GPModel m;
    m.kind_ = data.kind;
    m.source_cycle_ = data.source_cycle;

    // uniform time stride down to the cap
    const long n_raw = data.size();
    if (cap > 0 && n_raw > cap) {
        const long stride = (n_raw + cap - 1) / cap;
        const long n = (n_raw + stride - 1) / stride;
        m.raw_inputs_.resize(n, data.inputs.cols());
        m.labels_.resize(n);
        for (long i = 0, r = 0; i < n_raw; i += stride, ++r) {
            m.raw_inputs_.row(r) = data.inputs.row(i);
            m.labels_[r] = data.labels[i];
        }
    } else {
        m.raw_inputs_ = data.inputs;
        m.labels_ = data.labels;
    }
    const long n = m.raw_inputs_.rows();
    const int d = static_cast<int>(m.raw_inputs_.cols());

    // per-dimension standardization from the training cycle
    m.mean_ = m.raw_inputs_.colwise().mean();
    m.scale_.resize(d);
    for (int j = 0; j < d; ++j) {
        const double var =
            (m.raw_inputs_.col(j).array() - m.mean_[j]).square().sum() / std::max<long>(n, 1);
        m.scale_[j] = var > 1e-24 ? std::sqrt(var) : 1.0;
    }
    m.train_std_ = (m.raw_inputs_.rowwise() - m.mean_.transpose()).array().rowwise() /
                   m.scale_.transpose().array();

    // hyperparameter defaults after standardization
    if (hyper.length_scales.size() == 0) hyper.length_scales = Eigen::VectorXd::Ones(d);
    if (!(hyper.sigma_p2 > 0.0)) {
        const double mean_y = m.labels_.mean();
        const double var_y = (m.labels_.array() - mean_y).square().sum() / std::max<long>(n, 1);
        hyper.sigma_p2 = var_y > 0.0 ? var_y : 1e-12;
    }
    hyper.validate(d);
    m.hyper_ = hyper;

    Eigen::MatrixXd K(n, n);
    for (long i = 0; i < n; ++i) {
        for (long j = 0; j <= i; ++j) {
            const double v = kernel(m.train_std_.row(i), m.train_std_.row(j), hyper);
            K(i, j) = v;
            K(j, i) = v;
        }
    }

    double jitter = hyper.jitter >= 0.0
                        ? hyper.jitter
                        : (hyper.jitter_rel > 0.0 ? hyper.jitter_rel : 1e-6) * hyper.sigma_p2;
    constexpr int kEscalations = 3;
    for (int attempt = 0;; ++attempt) {
        Eigen::MatrixXd Kj = K + jitter * Eigen::MatrixXd::Identity(n, n);
        m.llt_.compute(Kj);
        if (m.llt_.info() == Eigen::Success) break;
        if (attempt >= kEscalations) {
            throw ConditioningError(
                "gp fit: covariance factorization failed after jitter escalation to " +
                    std::to_string(jitter),
                jitter);
        }
        jitter *= 10.0;
    }
    m.jitter_ = jitter;
    m.alpha_ = m.llt_.solve(m.labels_);
    return m;
}

std::pair<double, double> GPModel::predict(const Eigen::VectorXd& query) const {
    if (!trained()) throw ConfigError("gp predict: model not fitted");
    if (query.size() != input_dim()) throw ConfigError("gp predict: dimension mismatch");

    const Eigen::VectorXd q = (query - mean_).array() / scale_.array();
    const long n = train_std_.rows();
    Eigen::VectorXd k_star(n);
    for (long i = 0; i < n; ++i) k_star[i] = kernel(q, train_std_.row(i), hyper_);

    const double mean = k_star.dot(alpha_);
    const double k_qq = hyper_.sigma_p2;  // kernel(q, q)
    double var = k_qq - k_star.dot(llt_.solve(k_star));
    if (var < 0.0) var = 0.0;
    return {mean, var};
}

double GPModel::factor_residual() const {
    if (!trained()) return 0.0;
    const long n = train_std_.rows();
    Eigen::MatrixXd K(n, n);
    for (long i = 0; i < n; ++i) {
        for (long j = 0; j <= i; ++j) {
            const double v = kernel(train_std_.row(i), train_std_.row(j), hyper_);
            K(i, j) = v;
            K(j, i) = v;
        }
    }
    K += jitter_ * Eigen::MatrixXd::Identity(n, n);
    const Eigen::MatrixXd L = llt_.matrixL();
    return (L * L.transpose() - K).norm() / K.norm();
}

void GPModel::save(const std::filesystem::path& path, int version) const {
    if (!trained()) throw ConfigError("gp save: model not fitted");
    json j;
    j["schema_version"] = kGpArtifactSchemaVersion;
    j["artifact_version"] = version;
    j["kind"] = kind_ == UncertaintyDataset::Kind::voltage ? "voltage" : "thermal";
    j["source_cycle"] = source_cycle_;
    j["hyper"] = {{"sigma_p2", hyper_.sigma_p2},
                  {"length_scales", std::vector<double>(hyper_.length_scales.begin(),
                                                        hyper_.length_scales.end())},
                  {"jitter", jitter_}};
    j["input_mean"] = std::vector<double>(mean_.begin(), mean_.end());
    j["input_scale"] = std::vector<double>(scale_.begin(), scale_.end());
    json rows = json::array();
    for (long i = 0; i < raw_inputs_.rows(); ++i) {
        json r = json::array();
        for (int c = 0; c < raw_inputs_.cols(); ++c) r.push_back(raw_inputs_(i, c));
        rows.push_back(r);
    }
    j["inputs"] = rows;
    j["labels"] = std::vector<double>(labels_.begin(), labels_.end());
    write_file_atomic(path, j.dump(2) + "\n");
}

GPModel GPModel::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("gp load: cannot open " + path.string());
    json j = json::parse(in);

    UncertaintyDataset data;
    data.kind = j.at("kind").get<std::string>() == "thermal" ? UncertaintyDataset::Kind::thermal
                                                             : UncertaintyDataset::Kind::voltage;
    data.source_cycle = j.at("source_cycle").get<int>();
    const auto& rows = j.at("inputs");
    const auto& labels = j.at("labels");
    const long n = static_cast<long>(rows.size());
    const int d = n > 0 ? static_cast<int>(rows[0].size()) : 0;
    data.inputs.resize(n, d);
    data.labels.resize(n);
    for (long i = 0; i < n; ++i) {
        for (int c = 0; c < d; ++c) data.inputs(i, c) = rows[i][c].get<double>();
        data.labels[i] = labels[i].get<double>();
    }

    GPHyper hyper;
    hyper.sigma_p2 = j.at("hyper").at("sigma_p2").get<double>();
    const auto ls = j.at("hyper").at("length_scales").get<std::vector<double>>();
    hyper.length_scales = Eigen::Map<const Eigen::VectorXd>(ls.data(), ls.size());
    hyper.jitter = j.at("hyper").at("jitter").get<double>();

    GPModel m = fit(data, hyper, /*cap=*/0);  // factor recomputed; data already capped
    m.artifact_version_ = j.at("artifact_version").get<int>();
    return m;
}

namespace {

void check_cycle(const CycleRecord& cycle) {
    if (cycle.size() < 10) throw ConfigError("dataset builder: cycle shorter than 10 samples");
}

Eigen::VectorXd initial_concentration(const CycleRecord& cycle, const CellParams& p) {
    return Eigen::VectorXd::Constant(p.N, cycle.initial_theta_a * p.c_max_a);
}

}  // namespace

UncertaintyDataset build_voltage_dataset(const CycleRecord& cycle, const CellParams& params,
                                         const StateSpace& ss) {
    check_cycle(cycle);
    const long n = static_cast<long>(cycle.size());
    UncertaintyDataset d;
    d.kind = UncertaintyDataset::Kind::voltage;
    d.source_cycle = cycle.cycle_index;
    d.inputs.resize(n, 2);
    d.labels.resize(n);

    Eigen::VectorXd z1 = initial_concentration(cycle, params);
    for (long l = 0; l < n; ++l) {
        const double i_l = cycle.I[l];
        const double v_lin = ss.C1 * z1 + ss.D1 * i_l + ss.offset;
        d.inputs(l, 0) = i_l;
        d.inputs(l, 1) = cycle.V_meas[l];
        d.labels[l] = cycle.V_meas[l] - v_lin;
        z1 = ss.A1 * z1 + ss.B1 * i_l;
    }
    return d;
}

UncertaintyDataset build_thermal_dataset(const CycleRecord& cycle, const CellParams& params,
                                         const StateSpace& ss) {
    check_cycle(cycle);
    const long n = static_cast<long>(cycle.size());
    UncertaintyDataset d;
    d.kind = UncertaintyDataset::Kind::thermal;
    d.source_cycle = cycle.cycle_index;
    d.inputs.resize(n, 3);
    d.labels.resize(n);

    Eigen::VectorXd z1 = initial_concentration(cycle, params);
    Eigen::VectorXd z2 = Eigen::VectorXd::Constant(params.M, cycle.initial_T);
    const double heat_scale = params.dt / (params.rho * params.C_p * params.V_b);
    for (long l = 0; l < n; ++l) {
        const double i_l = cycle.I[l];
        const double t_model = ss.C2 * z2;
        d.inputs(l, 0) = i_l;
        d.inputs(l, 1) = cycle.V_meas[l];
        d.inputs(l, 2) = cycle.T_meas[l];
        d.labels[l] = cycle.T_meas[l] - t_model;

        // f2 evaluated with the rolled-out concentration and the measured voltage
        const double q_dot = heat_generation(z1, i_l, cycle.V_meas[l], params);
        z2 = ss.A2 * z2 + ss.B2 * cycle.T_inf +
             Eigen::VectorXd::Constant(params.M, heat_scale * q_dot);
        z1 = ss.A1 * z1 + ss.B1 * i_l;
    }
    return d;
}

}  // namespace celldiag
