#include "coldscatter/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace coldscatter::config {

namespace {

std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : s) {
        if (ch == sep) {
            out.push_back(trim(cur));
            cur.clear();
        } else {
            cur += ch;
        }
    }
    out.push_back(trim(cur));
    return out;
}

bool valid_name(const std::string& s) {
    if (s.empty()) return false;
    return std::all_of(s.begin(), s.end(), [](char c) { return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_'; });
}

std::string format_number(double x) {
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    if (x == 0.0) return "0";
    char buf[64];
    auto r = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, r.ptr);
}

struct UnitScale {
    const char* name;
    double factor;
};

std::vector<UnitScale> units_for(Dim d) {
    switch (d) {
        case Dim::Length: return {{"lambdabar", 1.0}};
        case Dim::Frequency: return {{"gamma", 1.0}};
        case Dim::Angle: return {{"rad", 1.0}, {"mrad", 1e-3}, {"deg", M_PI / 180.0}};
        case Dim::Density: return {{"lambdabar^-3", 1.0}};
        case Dim::None: return {};
    }
    return {};
}

const char* dim_name(Dim d) {
    switch (d) {
        case Dim::Length: return "lengths are in lambdabar";
        case Dim::Frequency: return "frequencies are in gamma";
        case Dim::Angle: return "angles are in rad (mrad and deg accepted)";
        case Dim::Density: return "densities are in lambdabar^-3";
        case Dim::None: return "the quantity is dimensionless";
    }
    return "";
}

bool looks_like_unit(const std::string& tok) {
    if (tok.empty() || tok == "inf" || tok == "-inf" || tok == "+inf") return false;
    char c = tok[0];
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z');
}

// Parsing of one value against a key spec; errors carry the key path.
class ValueParser {
public:
    ValueParser(const KeySpec& k, std::string path) : k_(k), path_(std::move(path)) {}

    std::optional<Value> parse(const std::string& raw, std::vector<std::string>& errs) {
        Value v;
        v.kind = k_.kind;
        std::string text = raw;
        double scale = 1.0;
        if (k_.kind == Kind::Number || k_.kind == Kind::Integer || k_.kind == Kind::Grid || k_.kind == Kind::Positions) {
            auto sp = text.find_last_of(" \t");
            std::string last = sp == std::string::npos ? text : text.substr(sp + 1);
            if (looks_like_unit(last)) {
                std::string body = sp == std::string::npos ? std::string{} : trim(text.substr(0, sp));
                auto us = units_for(k_.dim);
                auto it = std::find_if(us.begin(), us.end(), [&](const UnitScale& u) { return last == u.name; });
                if (it == us.end()) {
                    errs.push_back(path_ + ": unit '" + last + "' not allowed; " + dim_name(k_.dim));
                    return std::nullopt;
                }
                if (body.empty()) {
                    errs.push_back(path_ + ": missing value before unit '" + last + "'");
                    return std::nullopt;
                }
                scale = it->factor;
                text = body;
            }
        }
        switch (k_.kind) {
            case Kind::Number: {
                auto x = number(text, errs);
                if (!x) return std::nullopt;
                v.number = *x * scale;
                if (!in_range(v.number, errs)) return std::nullopt;
                break;
            }
            case Kind::Integer: {
                auto x = number(text, errs);
                if (!x) return std::nullopt;
                if (std::floor(*x) != *x || std::fabs(*x) > 9.0e15) {
                    errs.push_back(path_ + ": expected an integer, got '" + text + "'");
                    return std::nullopt;
                }
                v.integer = static_cast<std::int64_t>(*x);
                if (!in_range(static_cast<double>(v.integer), errs)) return std::nullopt;
                break;
            }
            case Kind::Word: {
                if (!check_word(text, errs)) return std::nullopt;
                v.word = text;
                break;
            }
            case Kind::WordList: {
                for (const auto& w : split(text, ',')) {
                    if (!check_word(w, errs)) return std::nullopt;
                    if (std::find(v.words.begin(), v.words.end(), w) != v.words.end()) {
                        errs.push_back(path_ + ": duplicate entry '" + w + "'");
                        return std::nullopt;
                    }
                    v.words.push_back(w);
                }
                break;
            }
            case Kind::Grid: {
                if (!grid(text, scale, v.grid, errs)) return std::nullopt;
                break;
            }
            case Kind::Positions: {
                for (const auto& row : split(text, ';')) {
                    std::istringstream is(row);
                    std::vector<std::string> toks;
                    for (std::string t; is >> t;) toks.push_back(t);
                    if (toks.size() != 3) {
                        errs.push_back(path_ + ": each position needs three coordinates, got '" + row + "'");
                        return std::nullopt;
                    }
                    std::array<double, 3> p{};
                    for (int i = 0; i < 3; ++i) {
                        auto x = number(toks[i], errs);
                        if (!x || std::isinf(*x)) {
                            if (x) errs.push_back(path_ + ": coordinates must be finite");
                            return std::nullopt;
                        }
                        p[i] = *x * scale;
                    }
                    v.positions.push_back(p);
                }
                break;
            }
        }
        return v;
    }

private:
    const KeySpec& k_;
    std::string path_;

    std::optional<double> number(const std::string& t, std::vector<std::string>& errs) {
        std::string s = t;
        if (s == "inf" || s == "+inf") {
            if (!k_.allow_infinity) {
                errs.push_back(path_ + ": infinity not allowed");
                return std::nullopt;
            }
            return std::numeric_limits<double>::infinity();
        }
        if (!s.empty() && s[0] == '+') s = s.substr(1);
        double x = 0.0;
        auto r = std::from_chars(s.data(), s.data() + s.size(), x);
        if (s.empty() || r.ec != std::errc() || r.ptr != s.data() + s.size() || !std::isfinite(x)) {
            errs.push_back(path_ + ": expected a number, got '" + t + "'");
            return std::nullopt;
        }
        return x;
    }

    bool in_range(double x, std::vector<std::string>& errs) {
        if (k_.min) {
            bool bad = k_.min_exclusive ? !(x > *k_.min) : !(x >= *k_.min);
            if (bad) {
                errs.push_back(path_ + ": must be " + (k_.min_exclusive ? "> " : ">= ") + format_number(*k_.min) +
                               ", got " + format_number(x));
                return false;
            }
        }
        if (k_.max) {
            bool bad = k_.max_exclusive ? !(x < *k_.max) : !(x <= *k_.max);
            if (bad) {
                errs.push_back(path_ + ": must be " + (k_.max_exclusive ? "< " : "<= ") + format_number(*k_.max) +
                               ", got " + format_number(x));
                return false;
            }
        }
        return true;
    }

    bool check_word(const std::string& w, std::vector<std::string>& errs) {
        if (w.empty()) {
            errs.push_back(path_ + ": empty value");
            return false;
        }
        if (k_.choices.empty()) return true;
        if (std::find(k_.choices.begin(), k_.choices.end(), w) != k_.choices.end()) return true;
        std::string msg = path_ + ": '" + w + "' is not one of {";
        for (std::size_t i = 0; i < k_.choices.size(); ++i) msg += (i ? ", " : "") + k_.choices[i];
        msg += "}";
        auto s = suggest_key(w, k_.choices);
        if (!s.empty()) msg += "; did you mean '" + s + "'?";
        errs.push_back(msg);
        return false;
    }

    bool grid(const std::string& t, double scale, Grid& g, std::vector<std::string>& errs) {
        if (t.find(':') != std::string::npos) {
            auto parts = split(t, ':');
            if (parts.size() != 3) {
                errs.push_back(path_ + ": range must be start:step:stop, got '" + t + "'");
                return false;
            }
            auto a = number(parts[0], errs), st = number(parts[1], errs), b = number(parts[2], errs);
            if (!a || !st || !b) return false;
            g.is_range = true;
            g.start = *a * scale;
            g.step = *st * scale;
            g.stop = *b * scale;
            if (g.step == 0.0 || (g.stop - g.start) * g.step < 0.0 || std::isinf(g.start) || std::isinf(g.stop)) {
                errs.push_back(path_ + ": step must be nonzero and point from start to stop");
                return false;
            }
            if ((g.stop - g.start) / g.step > 1e6) {
                errs.push_back(path_ + ": range has more than 1e6 points");
                return false;
            }
        } else {
            for (const auto& item : split(t, ',')) {
                auto x = number(item, errs);
                if (!x) return false;
                g.list.push_back(*x * scale);
            }
        }
        for (double x : g.values())
            if (!in_range(x, errs)) return false;
        return true;
    }
};

std::optional<Value> parse_value(const KeySpec& k, const std::string& path, const std::string& text,
                                 std::vector<std::string>& errs) {
    return ValueParser(k, path).parse(text, errs);
}

const std::vector<std::pair<std::string, std::string>>& synonyms() {
    static const std::vector<std::pair<std::string, std::string>> s{
        {"radius", "r0"},          {"rms_radius", "r0"},     {"size", "r0"},      {"width", "r0"},
        {"density", "n0"},         {"peak_density", "n0"},   {"optical_depth", "b0"}, {"od", "b0"},
        {"delta", "detuning"},     {"omega", "rabi"},        {"rabi_frequency", "rabi"},
        {"n_trajectories", "trajectories"}, {"ntraj", "trajectories"}, {"threads", "workers"},
        {"thickness", "length"},   {"angles", "theta"},
    };
    return s;
}

}  // namespace

const char* dim_unit(Dim d) {
    switch (d) {
        case Dim::Length: return "lambdabar";
        case Dim::Frequency: return "gamma";
        case Dim::Angle: return "rad";
        case Dim::Density: return "lambdabar^-3";
        case Dim::None: return "1";
    }
    return "1";
}

std::vector<double> Grid::values() const {
    if (!is_range) return list;
    std::vector<double> out;
    long n = static_cast<long>(std::floor((stop - start) / step + 1e-9)) + 1;
    out.reserve(static_cast<std::size_t>(n));
    for (long i = 0; i < n; ++i) out.push_back(start + static_cast<double>(i) * step);
    return out;
}

std::string Value::canonical() const {
    switch (kind) {
        case Kind::Number: return format_number(number);
        case Kind::Integer: return std::to_string(integer);
        case Kind::Word: return word;
        case Kind::WordList: {
            std::string s;
            for (std::size_t i = 0; i < words.size(); ++i) s += (i ? ", " : "") + words[i];
            return s;
        }
        case Kind::Grid: {
            if (grid.is_range)
                return format_number(grid.start) + ":" + format_number(grid.step) + ":" + format_number(grid.stop);
            std::string s;
            for (std::size_t i = 0; i < grid.list.size(); ++i) s += (i ? ", " : "") + format_number(grid.list[i]);
            return s;
        }
        case Kind::Positions: {
            std::string s;
            for (std::size_t i = 0; i < positions.size(); ++i) {
                if (i) s += "; ";
                s += format_number(positions[i][0]) + " " + format_number(positions[i][1]) + " " +
                     format_number(positions[i][2]);
            }
            return s;
        }
    }
    return {};
}

const SectionSpec* Schema::section(const std::string& name) const {
    for (const auto& s : sections)
        if (s.name == name) return &s;
    return nullptr;
}

const KeySpec* Schema::key(const std::string& path) const {
    auto dot = path.find('.');
    if (dot == std::string::npos) return nullptr;
    const auto* sec = section(path.substr(0, dot));
    if (!sec) return nullptr;
    std::string k = path.substr(dot + 1);
    for (const auto& ks : sec->keys)
        if (ks.name == k) return &ks;
    return nullptr;
}

std::size_t edit_distance(const std::string& a, const std::string& b) {
    std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
    for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
    for (std::size_t i = 1; i <= a.size(); ++i) {
        cur[0] = i;
        for (std::size_t j = 1; j <= b.size(); ++j)
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0u : 1u)});
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

namespace {
// Key with a unit suffix removed ("radius_mm" -> "radius"); unchanged when there is none.
std::string strip_unit_suffix(const std::string& key) {
    static const char* suffixes[] = {"_mm", "_um", "_nm", "_cm", "_m", "_mhz", "_khz", "_ghz", "_hz", "_ms",
                                     "_us", "_ns", "_s", "_deg", "_mrad", "_rad", "_lambdabar", "_gamma", "_k"};
    for (const char* suf : suffixes) {
        std::string sf(suf);
        if (key.size() > sf.size() && key.compare(key.size() - sf.size(), sf.size(), sf) == 0)
            return key.substr(0, key.size() - sf.size());
    }
    return key;
}
}  // namespace

std::string suggest_key(const std::string& key, const std::vector<std::string>& allowed) {
    auto has = [&](const std::string& k) { return std::find(allowed.begin(), allowed.end(), k) != allowed.end(); };
    const std::string base = strip_unit_suffix(key);
    if (base != key && has(base)) return base;
    for (const auto& [from, to] : synonyms())
        if ((base == from || key == from) && has(to)) return to;
    std::string best;
    std::size_t best_d = std::numeric_limits<std::size_t>::max();
    for (const auto& a : allowed) {
        std::size_t d = std::min(edit_distance(key, a), edit_distance(base, a));
        if (d < best_d) {
            best_d = d;
            best = a;
        }
    }
    std::size_t limit = std::max<std::size_t>(2, key.size() / 3);
    return best_d <= limit ? best : std::string{};
}

bool ScenarioConfig::has(const std::string& path) const {
    auto dot = path.find('.');
    if (dot == std::string::npos) return false;
    auto it = values.find(path.substr(0, dot));
    return it != values.end() && it->second.count(path.substr(dot + 1)) > 0;
}

const Value& ScenarioConfig::at(const std::string& path) const {
    auto dot = path.find('.');
    if (dot != std::string::npos) {
        auto it = values.find(path.substr(0, dot));
        if (it != values.end()) {
            auto jt = it->second.find(path.substr(dot + 1));
            if (jt != it->second.end()) return jt->second;
        }
    }
    throw DomainError("configuration has no value for '" + path + "'");
}

double ScenarioConfig::number(const std::string& path) const {
    const auto& v = at(path);
    if (v.kind == Kind::Integer) return static_cast<double>(v.integer);
    if (v.kind != Kind::Number) throw DomainError("'" + path + "' is not a number");
    return v.number;
}

std::int64_t ScenarioConfig::integer(const std::string& path) const {
    const auto& v = at(path);
    if (v.kind != Kind::Integer) throw DomainError("'" + path + "' is not an integer");
    return v.integer;
}

const std::string& ScenarioConfig::word(const std::string& path) const {
    const auto& v = at(path);
    if (v.kind != Kind::Word) throw DomainError("'" + path + "' is not a word");
    return v.word;
}

const std::vector<std::string>& ScenarioConfig::words(const std::string& path) const {
    const auto& v = at(path);
    if (v.kind != Kind::WordList) throw DomainError("'" + path + "' is not a list");
    return v.words;
}

std::vector<double> ScenarioConfig::grid(const std::string& path) const {
    const auto& v = at(path);
    if (v.kind == Kind::Number) return {v.number};
    if (v.kind != Kind::Grid) throw DomainError("'" + path + "' is not a grid");
    return v.grid.values();
}

const std::vector<std::array<double, 3>>& ScenarioConfig::positions(const std::string& path) const {
    const auto& v = at(path);
    if (v.kind != Kind::Positions) throw DomainError("'" + path + "' is not a position list");
    return v.positions;
}

int ScenarioConfig::line_of(const std::string& path) const {
    auto it = lines.find(path);
    return it == lines.end() ? 0 : it->second;
}

std::string ScenarioConfig::canonical() const {
    std::string out = "scenario = " + scenario + "\n";
    for (const auto& [sec, keys] : values) {
        out += "\n[" + sec + "]\n";
        for (const auto& [k, v] : keys) out += k + " = " + v.canonical() + "\n";
    }
    return out;
}

std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t ScenarioConfig::hash(const Schema& schema) const {
    std::string text = "scenario = " + scenario + "\n";
    for (const auto& [sec, keys] : values) {
        const auto* ss = schema.section(sec);
        if (ss && !ss->hashed) continue;
        text += "\n[" + sec + "]\n";
        for (const auto& [k, v] : keys) {
            const auto* ks = schema.key(sec + "." + k);
            if (ks && !ks->hashed) continue;
            text += k + " = " + v.canonical() + "\n";
        }
    }
    return fnv1a64(text);
}

std::string ScenarioConfig::hash_hex(const Schema& schema) const {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash(schema)));
    return buf;
}

void ScenarioConfig::set(const Schema& schema, const std::string& path, const std::string& text) {
    const auto* ks = schema.key(path);
    if (!ks) throw ConfigError({{0, 0, "unknown key '" + path + "'"}});
    std::vector<std::string> errs;
    auto v = parse_value(*ks, path, trim(text), errs);
    if (!v) throw ConfigError({{0, 0, errs.empty() ? path + ": invalid value" : errs.front()}});
    auto dot = path.find('.');
    values[path.substr(0, dot)][path.substr(dot + 1)] = *v;
    std::vector<ConfigIssue> issues;
    if (schema.check) schema.check(*this, issues);
    if (!issues.empty()) throw ConfigError(issues);
}

ScenarioConfig parse_config_text(const std::string& text, const SchemaProvider& schemas) {
    struct Entry {
        std::string section, key, value;
        int line, key_col, value_col;
    };
    std::vector<ConfigIssue> issues;
    std::vector<Entry> entries;
    std::vector<std::pair<std::string, int>> section_lines;

    std::istringstream in(text);
    std::string raw;
    std::string section;
    int lineno = 0;
    while (std::getline(in, raw)) {
        ++lineno;
        // strip comments: whole line, or '#'/';' preceded by whitespace
        std::string line = raw;
        for (std::size_t i = 0; i < line.size(); ++i) {
            if ((line[i] == '#' || line[i] == ';') && (i == 0 || line[i - 1] == ' ' || line[i - 1] == '\t')) {
                bool only_ws = line.find_first_not_of(" \t") == i;
                // ';' separates positions; only treat it as a comment at line start
                if (line[i] == ';' && !only_ws) continue;
                line.resize(i);
                break;
            }
        }
        std::string t = trim(line);
        if (t.empty()) continue;
        int first_col = static_cast<int>(line.find_first_not_of(" \t")) + 1;
        if (t.front() == '[') {
            if (t.back() != ']') {
                issues.push_back({lineno, first_col + static_cast<int>(t.size()), "expected ']' to close section header"});
                continue;
            }
            std::string name = trim(t.substr(1, t.size() - 2));
            if (!valid_name(name)) {
                issues.push_back({lineno, first_col + 1, "invalid section name '" + name + "'"});
                section = "\x01";
                continue;
            }
            section = name;
            section_lines.push_back({name, lineno});
            continue;
        }
        auto eq = line.find('=');
        if (eq == std::string::npos) {
            issues.push_back({lineno, first_col, "expected 'key = value' or '[section]'"});
            continue;
        }
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (!valid_name(key)) {
            issues.push_back({lineno, first_col, "invalid key name '" + key + "' (use lowercase letters, digits, '_')"});
            continue;
        }
        int value_col = static_cast<int>(eq) + 2;
        auto vpos = line.find_first_not_of(" \t", eq + 1);
        if (vpos != std::string::npos) value_col = static_cast<int>(vpos) + 1;
        if (value.empty()) {
            issues.push_back({lineno, value_col, "missing value for '" + key + "'"});
            continue;
        }
        if (section == "\x01") continue;
        entries.push_back({section, key, value, lineno, first_col, value_col});
    }

    ScenarioConfig cfg;
    std::optional<Schema> schema;
    bool have_scenario = false;
    for (const auto& e : entries) {
        if (!e.section.empty()) continue;
        if (e.key != "scenario") {
            std::string msg = "unknown top-level key '" + e.key + "' (only 'scenario' is allowed outside sections)";
            issues.push_back({e.line, e.key_col, msg});
            continue;
        }
        if (have_scenario) {
            issues.push_back({e.line, e.key_col, "duplicate key 'scenario'"});
            continue;
        }
        have_scenario = true;
        cfg.scenario = e.value;
        schema = schemas(e.value);
        if (!schema) {
            static const std::vector<std::string> names{"cbs-cone", "ladder-spectrum", "gain-transport", "eit-spectrum",
                                                        "coupled-dipole-spectrum", "selfconsistent-slab",
                                                        "diffusion-threshold", "protocol-utils"};
            std::string msg = "scenario: unknown scenario '" + e.value + "'";
            auto s = suggest_key(e.value, names);
            if (!s.empty()) msg += "; did you mean '" + s + "'?";
            issues.push_back({e.line, e.value_col, msg});
        }
        cfg.lines["scenario"] = e.line;
    }
    if (!have_scenario) issues.push_back({1, 1, "missing required key 'scenario'"});
    if (!schema) throw ConfigError(issues);

    std::vector<std::string> section_names;
    for (const auto& s : schema->sections) section_names.push_back(s.name);
    for (const auto& [name, ln] : section_lines) {
        if (schema->section(name)) continue;
        std::string msg = "unknown section [" + name + "] for scenario '" + cfg.scenario + "'";
        auto s = suggest_key(name, section_names);
        if (!s.empty()) msg += "; did you mean [" + s + "]?";
        issues.push_back({ln, 1, msg});
    }

    for (const auto& e : entries) {
        if (e.section.empty()) continue;
        const auto* sec = schema->section(e.section);
        if (!sec) continue;  // reported above
        std::string path = e.section + "." + e.key;
        const KeySpec* ks = schema->key(path);
        if (!ks) {
            std::vector<std::string> allowed;
            for (const auto& k : sec->keys) allowed.push_back(k.name);
            std::string msg = "unknown key '" + path + "'";
            auto s = suggest_key(e.key, allowed);
            if (strip_unit_suffix(e.key) != e.key) msg += "; units are not part of key names (lengths in lambdabar, frequencies in gamma)";
            if (!s.empty()) msg += "; did you mean '" + e.section + "." + s + "'?";
            issues.push_back({e.line, e.key_col, msg});
            continue;
        }
        if (cfg.lines.count(path)) {
            issues.push_back({e.line, e.key_col,
                              "duplicate key '" + path + "' (first set on line " + std::to_string(cfg.lines[path]) + ")"});
            continue;
        }
        cfg.lines[path] = e.line;
        std::vector<std::string> errs;
        auto v = parse_value(*ks, path, e.value, errs);
        for (const auto& m : errs) issues.push_back({e.line, e.value_col, m});
        if (v) cfg.values[e.section][e.key] = *v;
    }

    // defaults and required keys
    for (const auto& sec : schema->sections) {
        for (const auto& ks : sec.keys) {
            std::string path = sec.name + "." + ks.name;
            if (cfg.lines.count(path)) continue;
            if (ks.required) {
                issues.push_back({0, 0, "missing required key '" + path + "'"});
                continue;
            }
            if (!ks.default_text) continue;
            std::vector<std::string> errs;
            auto v = parse_value(ks, path, *ks.default_text, errs);
            if (!v) throw std::logic_error("bad default for " + path);
            cfg.values[sec.name][ks.name] = *v;
        }
    }
    if (schema->check) schema->check(cfg, issues);  // checks skip keys that failed to parse
    if (!issues.empty()) {
        std::stable_sort(issues.begin(), issues.end(), [](const ConfigIssue& a, const ConfigIssue& b) {
            if ((a.line == 0) != (b.line == 0)) return b.line == 0;
            return a.line < b.line;
        });
        throw ConfigError(issues);
    }
    return cfg;
}

ScenarioConfig parse_config(const std::string& path, const SchemaProvider& schemas) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot read configuration '" + path + "'");
    std::ostringstream ss;
    ss << f.rdbuf();
    if (f.bad()) throw IoError("error reading configuration '" + path + "'");
    return parse_config_text(ss.str(), schemas);
}

}  // namespace coldscatter::config
