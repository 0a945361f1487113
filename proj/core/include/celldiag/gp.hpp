#pragma once

#include "celldiag/cell.hpp"
#include "celldiag/sim.hpp"
#include "celldiag/state_space.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <filesystem>
#include <utility>

namespace celldiag {

/// Squared-exponential kernel hyperparameters. Non-positive sigma_p2 and an
/// empty length-scale vector resolve to data-driven defaults at fit time
/// (label variance, unit scales per standardized dimension).
struct GPHyper {
    double sigma_p2 = -1.0;          ///< signal variance [output units^2]; <= 0 = auto
    Eigen::VectorXd length_scales;   ///< one per input dimension (standardized units)
    double jitter = -1.0;            ///< diagonal jitter; < 0 = auto
    double jitter_rel = -1.0;        ///< jitter as a fraction of sigma_p2; < 0 = 1e-6

    void validate(int dim) const;
};

/// sigma_p^2 * exp(-1/2 (v1-v2)^T L^-2 (v1-v2)); symmetric, bounded by sigma_p^2.
[[nodiscard]] double kernel(const Eigen::VectorXd& v1, const Eigen::VectorXd& v2,
                            const GPHyper& hyper);

/// Training set for one uncertainty channel.
struct UncertaintyDataset {
    enum class Kind { voltage, thermal };
    Kind kind = Kind::voltage;
    Eigen::MatrixXd inputs;  ///< n x d raw inputs: (I, V) or (I, V, T)
    Eigen::VectorXd labels;  ///< n uncertainty samples
    int source_cycle = -1;

    [[nodiscard]] long size() const { return inputs.rows(); }
    [[nodiscard]] int dim() const { return static_cast<int>(inputs.cols()); }
};

/// Zero-mean GP regressor with precomputed Cholesky factor and alpha vector.
/// Immutable after fit; safe for concurrent predict calls.
class GPModel {
public:
    GPModel() = default;

    /// Standardizes inputs, builds the jittered covariance, factorizes, and
    /// precomputes alpha. Subsamples by uniform stride when n exceeds `cap`.
    /// GPHyper defaults resolve to sigma_p2 = var(labels), unit length scales.
    static GPModel fit(const UncertaintyDataset& data, GPHyper hyper = {}, long cap = 500);

    /// Posterior (mean, variance) at a raw query; variance clamped at 0.
    [[nodiscard]] std::pair<double, double> predict(const Eigen::VectorXd& query) const;
    [[nodiscard]] double predict_mean(const Eigen::VectorXd& query) const {
        return predict(query).first;
    }

    [[nodiscard]] bool trained() const { return train_std_.rows() > 0; }
    [[nodiscard]] int input_dim() const { return static_cast<int>(raw_inputs_.cols()); }
    [[nodiscard]] long train_size() const { return train_std_.rows(); }
    [[nodiscard]] const GPHyper& hyper() const { return hyper_; }
    [[nodiscard]] double applied_jitter() const { return jitter_; }
    [[nodiscard]] const Eigen::MatrixXd& raw_inputs() const { return raw_inputs_; }
    [[nodiscard]] const Eigen::VectorXd& labels() const { return labels_; }
    [[nodiscard]] const Eigen::VectorXd& input_mean() const { return mean_; }
    [[nodiscard]] const Eigen::VectorXd& input_scale() const { return scale_; }
    [[nodiscard]] UncertaintyDataset::Kind kind() const { return kind_; }
    [[nodiscard]] int source_cycle() const { return source_cycle_; }

    /// Reconstruction check: || L L^T - (K + jitter I) ||_F relative.
    [[nodiscard]] double factor_residual() const;

    /// Persist raw inputs, labels, hyperparameters, and standardization
    /// constants; the factor is recomputed on load, never stored.
    void save(const std::filesystem::path& path, int version = 1) const;
    static GPModel load(const std::filesystem::path& path);
    [[nodiscard]] int artifact_version() const { return artifact_version_; }

private:
    Eigen::MatrixXd raw_inputs_;  // pre-standardization, post-subsampling
    Eigen::VectorXd labels_;
    Eigen::MatrixXd train_std_;   // standardized inputs
    Eigen::VectorXd mean_, scale_;
    GPHyper hyper_;
    double jitter_ = 0.0;
    Eigen::LLT<Eigen::MatrixXd> llt_;
    Eigen::VectorXd alpha_;
    UncertaintyDataset::Kind kind_ = UncertaintyDataset::Kind::voltage;
    int source_cycle_ = -1;
    int artifact_version_ = 1;
};

/// D_V builder: open-loop model rollout over the cycle's current profile;
/// labels are measured voltage minus the linearized model output (affine
/// offset included); inputs are (I, V_meas). `ss` must carry C1/D1/offset.
[[nodiscard]] UncertaintyDataset build_voltage_dataset(const CycleRecord& cycle,
                                                       const CellParams& params,
                                                       const StateSpace& ss);

/// D_T builder: labels are measured surface temperature minus the open-loop
/// thermal model output; inputs are (I, V_meas, T_meas).
[[nodiscard]] UncertaintyDataset build_thermal_dataset(const CycleRecord& cycle,
                                                       const CellParams& params,
                                                       const StateSpace& ss);

}  // namespace celldiag
