#pragma once

#include <stdexcept>
#include <string>

namespace celldiag {

/// Invalid configuration value (bad node count, non-positive physical constant, ...).
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Explicit-Euler stability guard violated for the requested dt.
class StabilityError : public std::runtime_error {
public:
    StabilityError(const std::string& what, double ratio)
        : std::runtime_error(what), ratio_(ratio) {}
    /// dt * max |generator diagonal|; must stay <= 1.
    [[nodiscard]] double ratio() const noexcept { return ratio_; }

private:
    double ratio_;
};

/// Evaluation outside an OCP map's stoichiometry domain.
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Plant or observer state left its sanity envelope.
class DivergedError : public std::runtime_error {
public:
    DivergedError(const std::string& what, long step)
        : std::runtime_error(what), step_(step) {}
    [[nodiscard]] long step() const noexcept { return step_; }

private:
    long step_;
};

/// Observer gain synthesis failure (unobservable pair, ill-conditioned placement).
class DesignError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Covariance factorization failed even after jitter escalation.
class ConditioningError : public std::runtime_error {
public:
    ConditioningError(const std::string& what, double final_jitter)
        : std::runtime_error(what), final_jitter_(final_jitter) {}
    [[nodiscard]] double final_jitter() const noexcept { return final_jitter_; }

private:
    double final_jitter_;
};

}  // namespace celldiag
