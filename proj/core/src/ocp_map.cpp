#include "celldiag/ocp_map.hpp"

#include "celldiag/csv.hpp"
#include "celldiag/errors.hpp"

#include <algorithm>
#include <cmath>

namespace celldiag {

OcpMap::OcpMap(std::vector<double> theta, std::vector<double> volts, std::string name)
    : theta_(std::move(theta)), volts_(std::move(volts)), name_(std::move(name)) {
    if (theta_.size() < 2 || theta_.size() != volts_.size()) {
        throw ConfigError("ocp map `" + name_ + "`: need >= 2 (theta, volts) knots");
    }
    for (std::size_t i = 1; i < theta_.size(); ++i) {
        if (!(theta_[i] > theta_[i - 1])) {
            throw ConfigError("ocp map `" + name_ + "`: stoichiometry column must be strictly increasing");
        }
    }

    // Fritsch-Carlson monotone slopes.
    const std::size_t n = theta_.size();
    std::vector<double> d(n - 1);
    for (std::size_t i = 0; i + 1 < n; ++i) {
        d[i] = (volts_[i + 1] - volts_[i]) / (theta_[i + 1] - theta_[i]);
    }
    slope_.assign(n, 0.0);
    slope_[0] = d[0];
    slope_[n - 1] = d[n - 2];
    for (std::size_t i = 1; i + 1 < n; ++i) {
        if (d[i - 1] * d[i] <= 0.0) {
            slope_[i] = 0.0;
        } else {
            // harmonic mean weighted by interval widths
            const double w1 = 2.0 * (theta_[i + 1] - theta_[i]) + (theta_[i] - theta_[i - 1]);
            const double w2 = (theta_[i + 1] - theta_[i]) + 2.0 * (theta_[i] - theta_[i - 1]);
            slope_[i] = (w1 + w2) / (w1 / d[i - 1] + w2 / d[i]);
        }
    }
    // clamp endpoint slopes against overshoot
    for (std::size_t i : {std::size_t{0}, n - 1}) {
        const double di = (i == 0) ? d[0] : d[n - 2];
        if (slope_[i] * di <= 0.0) {
            slope_[i] = 0.0;
        } else if (std::abs(slope_[i]) > 3.0 * std::abs(di)) {
            slope_[i] = 3.0 * di;
        }
    }
}

OcpMap OcpMap::load_csv(const std::filesystem::path& path, const std::string& name) {
    CsvTable t = read_csv(path);
    if (t.header.size() != 2) {
        throw ConfigError("ocp map csv `" + path.string() + "`: expected two columns");
    }
    std::vector<double> theta, volts;
    theta.reserve(t.rows.size());
    volts.reserve(t.rows.size());
    for (const auto& row : t.rows) {
        theta.push_back(row[0]);
        volts.push_back(row[1]);
    }
    return OcpMap(std::move(theta), std::move(volts), name.empty() ? path.stem().string() : name);
}

std::size_t OcpMap::interval(double theta) const {
    if (!contains(theta)) {
        throw DomainError("ocp map `" + name_ + "`: stoichiometry " + std::to_string(theta) +
                          " outside domain [" + std::to_string(theta_.front()) + ", " +
                          std::to_string(theta_.back()) + "]");
    }
    auto it = std::upper_bound(theta_.begin(), theta_.end(), theta);
    std::size_t i = static_cast<std::size_t>(it - theta_.begin());
    if (i == 0) return 0;
    if (i >= theta_.size()) return theta_.size() - 2;
    return i - 1;
}

double OcpMap::value(double theta) const {
    const std::size_t i = interval(theta);
    const double h = theta_[i + 1] - theta_[i];
    const double s = (theta - theta_[i]) / h;
    const double h00 = (1 + 2 * s) * (1 - s) * (1 - s);
    const double h10 = s * (1 - s) * (1 - s);
    const double h01 = s * s * (3 - 2 * s);
    const double h11 = s * s * (s - 1);
    return h00 * volts_[i] + h10 * h * slope_[i] + h01 * volts_[i + 1] + h11 * h * slope_[i + 1];
}

double OcpMap::derivative(double theta, bool* one_sided) const {
    if (one_sided) *one_sided = false;
    // At an interior knot the two cubic pieces share the Hermite slope, so the
    // derivative is continuous; flag only exact endpoint evaluation.
    const std::size_t i = interval(theta);
    if (one_sided && (theta == theta_.front() || theta == theta_.back())) *one_sided = true;
    const double h = theta_[i + 1] - theta_[i];
    const double s = (theta - theta_[i]) / h;
    const double d00 = (6 * s * s - 6 * s) / h;
    const double d10 = 3 * s * s - 4 * s + 1;
    const double d01 = (6 * s - 6 * s * s) / h;
    const double d11 = 3 * s * s - 2 * s;
    return d00 * volts_[i] + d10 * slope_[i] + d01 * volts_[i + 1] + d11 * slope_[i + 1];
}

}  // namespace celldiag
