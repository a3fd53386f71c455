#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "coldscatter/config.hpp"

namespace coldscatter::scenario {

const std::vector<std::string>& scenario_names();
std::optional<config::Schema> schema_for(const std::string& scenario);

config::ScenarioConfig parse_file(const std::string& path);  // ConfigError / IoError
config::ScenarioConfig parse_text(const std::string& text);  // ConfigError

// One CSV file: rows of (sweep value, value, stat_err[, order][, channel]).
struct Table {
    std::string name;                      // file suffix
    std::string sweep_var, sweep_unit;
    std::string value_name, value_unit;
    bool has_order = false, has_channel = false;
    struct Row {
        double sweep = 0.0;
        double value = 0.0;
        double err = 0.0;
        int order = 0;
        std::string channel;
    };
    std::vector<Row> rows;
};

struct ResultRecord {
    std::string scenario;
    std::string config_hash;
    std::string version;
    std::string config_text;  // canonical echo
    std::uint64_t seed = 0;
    int workers = 1;
    std::vector<Table> tables;
    std::map<std::string, double> summary;
    std::vector<std::string> warnings;
    bool complete = true;
    std::string error;        // with scenario context when incomplete
    enum class ErrorKind { None, Domain, Numeric } error_kind = ErrorKind::None;
    double wall_time_s = 0.0; // written to a separate timing file so results stay bit-stable
};

struct RunContext {
    int workers = 0;  // 0 uses run.workers from the configuration
    std::function<void(const std::string&)> progress;  // side channel (may be empty)
};

// Engine errors do not escape: the record is returned with complete = false, the rows
// computed so far and the error message.
ResultRecord run_scenario(const config::ScenarioConfig& cfg, const RunContext& ctx = {});

std::string csv_text(const Table& t);
std::string json_text(const ResultRecord& r);

// Writes <dir>/<prefix>_<table>.csv, <prefix>.json and <prefix>.timing.json for the formats
// requested ("csv", "json"). Creates `dir`. Throws IoError with the failing path.
std::vector<std::string> emit_results(const ResultRecord& r, const std::string& dir, const std::string& prefix,
                                      const std::vector<std::string>& formats);

std::string version_string();

}  // namespace coldscatter::scenario
