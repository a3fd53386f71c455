#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace coldscatter {

// Invalid quantum numbers, unphysical parameters, unsupported combinations.
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

// Non-convergence, singular systems, overflow, tracked root lost.
class NumericError : public std::runtime_error {
public:
    NumericError(const std::string& what, std::string diagnostics = {})
        : std::runtime_error(what), diagnostics_(std::move(diagnostics)) {}
    const std::string& diagnostics() const noexcept { return diagnostics_; }

private:
    std::string diagnostics_;
};

// Evaluation outside a stated validity regime.
class RangeError : public std::out_of_range {
public:
    using std::out_of_range::out_of_range;
};

struct ConfigIssue {
    int line = 0;
    int column = 0;
    std::string message;
};

class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(std::vector<ConfigIssue> issues);
    const std::vector<ConfigIssue>& issues() const noexcept { return issues_; }

private:
    std::vector<ConfigIssue> issues_;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace coldscatter
