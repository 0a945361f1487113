#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace celldiag {

/// Open-circuit-potential map: volts as a monotone piecewise-cubic function of
/// surface stoichiometry. Built from (stoichiometry, volts) knots with strictly
/// increasing stoichiometry; slopes follow the Fritsch-Carlson limiter so the
/// interpolant preserves the knots' monotonicity.
class OcpMap {
public:
    OcpMap() = default;
    OcpMap(std::vector<double> theta, std::vector<double> volts, std::string name = "ocp");

    /// Load from two-column CSV (stoichiometry, volts).
    static OcpMap load_csv(const std::filesystem::path& path, const std::string& name = "");

    /// Potential at stoichiometry `theta`. Throws DomainError outside [min, max].
    [[nodiscard]] double value(double theta) const;

    /// dU/dtheta. One-sided at knots where the cubic pieces disagree;
    /// `clamped_to_knot` (optional out) reports that case.
    [[nodiscard]] double derivative(double theta, bool* one_sided = nullptr) const;

    [[nodiscard]] double theta_min() const { return theta_.front(); }
    [[nodiscard]] double theta_max() const { return theta_.back(); }
    [[nodiscard]] bool contains(double theta) const {
        return theta >= theta_.front() && theta <= theta_.back();
    }
    [[nodiscard]] const std::string& name() const { return name_; }
    [[nodiscard]] std::size_t knot_count() const { return theta_.size(); }
    [[nodiscard]] const std::vector<double>& knots() const { return theta_; }

private:
    [[nodiscard]] std::size_t interval(double theta) const;

    std::vector<double> theta_;
    std::vector<double> volts_;
    std::vector<double> slope_;  // Hermite slope per knot
    std::string name_;
};

}  // namespace celldiag
