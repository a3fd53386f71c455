#include "coldscatter/errors.hpp"

namespace coldscatter {

namespace {
std::string join(const std::vector<ConfigIssue>& issues) {
    std::string out;
    for (const auto& i : issues) {
        if (!out.empty()) out += '\n';
        out += "line " + std::to_string(i.line) + ", col " + std::to_string(i.column) + ": " + i.message;
    }
    return out.empty() ? "invalid configuration" : out;
}
}  // namespace

ConfigError::ConfigError(std::vector<ConfigIssue> issues) : std::runtime_error(join(issues)), issues_(std::move(issues)) {}

}  // namespace coldscatter
