#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "coldscatter/errors.hpp"

namespace coldscatter::config {

// Grammar (line oriented):
//   # or ; starts a comment (whole line, or after whitespace inside a value)
//   key = value               top level (only `scenario`)
//   [section]
//   key = value [unit]
// Keys are [a-z0-9_]+. Values: numbers, integers, words, comma lists, grids "start:step:stop" or
// "v1, v2, ...", position lists "x y z; x y z". A trailing unit suffix is checked against the key's
// dimension. All physics uses gamma = 1, lambdabar = 1.

enum class Dim { None, Length, Frequency, Angle, Density };
enum class Kind { Number, Integer, Word, WordList, Grid, Positions };

struct Grid {
    bool is_range = false;
    double start = 0.0, step = 0.0, stop = 0.0;
    std::vector<double> list;
    std::vector<double> values() const;
};

struct Value {
    Kind kind = Kind::Number;
    double number = 0.0;
    std::int64_t integer = 0;
    std::string word;
    std::vector<std::string> words;
    Grid grid;
    std::vector<std::array<double, 3>> positions;
    std::string canonical() const;
    bool operator==(const Value& o) const { return canonical() == o.canonical(); }
};

struct KeySpec {
    std::string name;
    Kind kind = Kind::Number;
    Dim dim = Dim::None;
    std::optional<std::string> default_text;  // parsed like user input; absent = optional key
    bool required = false;
    std::optional<double> min, max;           // for numbers, integers and grid entries
    bool min_exclusive = false, max_exclusive = false;
    bool allow_infinity = false;              // accepts "inf"
    std::vector<std::string> choices;         // for words and word lists
    bool hashed = true;                       // false for keys that cannot change results
    std::string help;
};

struct SectionSpec {
    std::string name;
    std::vector<KeySpec> keys;
    bool hashed = true;  // false for sections that do not change results
};

class ScenarioConfig;

struct Schema {
    std::vector<SectionSpec> sections;
    // Cross-key checks after every value parsed; append issues (use ScenarioConfig::line_of).
    std::function<void(const ScenarioConfig&, std::vector<ConfigIssue>&)> check;
    const SectionSpec* section(const std::string& name) const;
    const KeySpec* key(const std::string& path) const;
};

// Schema lookup by scenario name; returns nullopt for unknown scenarios.
using SchemaProvider = std::function<std::optional<Schema>(const std::string& scenario)>;

class ScenarioConfig {
public:
    std::string scenario;
    std::map<std::string, std::map<std::string, Value>> values;
    std::map<std::string, int> lines;  // source line per key path (not part of the value)

    bool has(const std::string& path) const;
    const Value& at(const std::string& path) const;  // "section.key"; throws DomainError
    double number(const std::string& path) const;
    std::int64_t integer(const std::string& path) const;
    const std::string& word(const std::string& path) const;
    const std::vector<std::string>& words(const std::string& path) const;
    std::vector<double> grid(const std::string& path) const;
    const std::vector<std::array<double, 3>>& positions(const std::string& path) const;

    // Sorted sections and keys, defaults filled, numbers in base units with 17 digits.
    std::string canonical() const;
    // FNV-1a 64 of the canonical text restricted to hashed sections.
    std::uint64_t hash(const Schema& schema) const;
    std::string hash_hex(const Schema& schema) const;
    // Replaces one value by re-parsing `text` against the schema (throws ConfigError).
    void set(const Schema& schema, const std::string& path, const std::string& text);
    int line_of(const std::string& path) const;

    bool operator==(const ScenarioConfig& o) const { return canonical() == o.canonical(); }
};

std::uint64_t fnv1a64(const std::string& s);

// Parses and validates; throws ConfigError listing every issue found.
ScenarioConfig parse_config_text(const std::string& text, const SchemaProvider& schemas);
ScenarioConfig parse_config(const std::string& path, const SchemaProvider& schemas);  // IoError when unreadable

// Closest allowed key (edit distance, unit suffixes and common synonyms); empty when nothing is close.
std::string suggest_key(const std::string& key, const std::vector<std::string>& allowed);
std::size_t edit_distance(const std::string& a, const std::string& b);

const char* dim_unit(Dim d);

}  // namespace coldscatter::config
