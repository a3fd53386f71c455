#include "coldscatter/scenario.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <json.hpp>

#include "coldscatter/angular.hpp"
#include "coldscatter/errors.hpp"
#include "coldscatter/mcscatter.hpp"
#include "coldscatter/medium.hpp"
#include "coldscatter/microdipole.hpp"
#include "coldscatter/propagation.hpp"
#include "coldscatter/protocols.hpp"
#include "coldscatter/transport.hpp"

#ifndef COLDSCATTER_VERSION
#define COLDSCATTER_VERSION "0.0.0"
#endif

namespace coldscatter::scenario {

using config::Dim;
using config::Kind;
using config::KeySpec;
using config::ScenarioConfig;
using config::Schema;
using config::SectionSpec;
using cd = std::complex<double>;

namespace {

constexpr double kPi = 3.14159265358979323846;

// ---- schema helpers ---------------------------------------------------------------

KeySpec num(std::string name, Dim dim, std::optional<std::string> def, std::optional<double> min = std::nullopt,
            bool min_excl = false, std::optional<double> max = std::nullopt, bool max_excl = false) {
    KeySpec k;
    k.name = std::move(name);
    k.kind = Kind::Number;
    k.dim = dim;
    k.default_text = std::move(def);
    k.min = min;
    k.min_exclusive = min_excl;
    k.max = max;
    k.max_exclusive = max_excl;
    return k;
}

KeySpec integer(std::string name, std::optional<std::string> def, std::optional<double> min = std::nullopt,
                std::optional<double> max = std::nullopt) {
    KeySpec k;
    k.name = std::move(name);
    k.kind = Kind::Integer;
    k.default_text = std::move(def);
    k.min = min;
    k.max = max;
    return k;
}

KeySpec word(std::string name, std::vector<std::string> choices, std::optional<std::string> def) {
    KeySpec k;
    k.name = std::move(name);
    k.kind = Kind::Word;
    k.choices = std::move(choices);
    k.default_text = std::move(def);
    return k;
}

KeySpec words(std::string name, std::vector<std::string> choices, std::optional<std::string> def) {
    KeySpec k = word(std::move(name), std::move(choices), std::move(def));
    k.kind = Kind::WordList;
    return k;
}

KeySpec grid(std::string name, Dim dim, std::optional<std::string> def, bool required = false) {
    KeySpec k;
    k.name = std::move(name);
    k.kind = Kind::Grid;
    k.dim = dim;
    k.default_text = std::move(def);
    k.required = required;
    return k;
}

const std::vector<std::string> kSchemes{"two-level", "rb85-d2", "rb87-d2", "rb87-d1-f1"};
const std::vector<std::string> kPolarizations{"x", "y", "z", "sigma+", "sigma-"};

SectionSpec atom_section(const std::string& scheme_default, const std::string& ground_default) {
    return {"atom",
            {word("scheme", kSchemes, scheme_default), integer("ground_level", ground_default, 0),
             word("population", {"isotropic", "equilibrium"}, "isotropic")}};
}

SectionSpec probe_section(bool with_polarization) {
    SectionSpec s{"probe",
                  {num("detuning", Dim::Frequency, "0"), integer("excited_level", "-1", -1)}};
    if (with_polarization) s.keys.push_back(word("polarization", kPolarizations, "sigma+"));
    return s;
}

SectionSpec control_section(const std::string& level, const std::string& rabi) {
    return {"control",
            {num("rabi", Dim::Frequency, rabi, 0.0), num("detuning", Dim::Frequency, "0"),
             integer("level", level, 0), integer("excited_level", "-1", -1),
             word("polarization", kPolarizations, "z"), word("rabi_on", {"reduced", "transition"}, "transition"),
             integer("reference_m", "0")}};
}

SectionSpec cloud_section() {
    return {"cloud",
            {word("profile", {"gaussian", "sphere"}, "gaussian"), num("b0", Dim::None, std::nullopt, 0.0, true),
             num("n0", Dim::Density, std::nullopt, 0.0, true), num("r0", Dim::Length, "20", 0.0, true)}};
}

SectionSpec mc_section(const std::string& trajectories, const std::string& max_order, const std::string& source) {
    return {"mc",
            {integer("trajectories", trajectories, 1), integer("max_order", max_order, 1),
             integer("chunk", "2048", 1), word("source", {"beam", "volume", "point"}, source),
             num("instability_z", Dim::None, "3", 0.0), integer("instability_min_order", "2", 0)}};
}

SectionSpec run_section() {
    SectionSpec s{"run", {integer("seed", "1", 0), integer("workers", "1", 1)}};
    s.keys[1].hashed = false;  // results do not depend on the worker count
    return s;
}

SectionSpec output_section() {
    SectionSpec s{"output",
                  {word("dir", {}, "."), word("prefix", {}, std::nullopt),
                   words("formats", {"csv", "json"}, "csv, json")},
                  false};
    return s;
}

SectionSpec detection_section() {
    return {"detection",
            {words("channels", {"hel_par", "hel_perp", "lin_par", "lin_perp"}, "hel_par"),
             grid("theta", Dim::Angle, "0"), integer("n_phi", "4", 1)}};
}

SectionSpec sweep_section(std::vector<std::string> variables, const std::string& var_default, Dim dim,
                          const std::string& values_default) {
    SectionSpec s{"sweep", {word("variable", std::move(variables), var_default), grid("values", dim, values_default)}};
    return s;
}

angular::LevelScheme scheme_by_name(const std::string& n) {
    if (n == "two-level") return angular::two_level_scheme();
    if (n == "rb85-d2") return angular::rb85_d2();
    if (n == "rb87-d2") return angular::rb87_d2();
    if (n == "rb87-d1-f1") return angular::rb87_d1_like_f1();
    throw DomainError("unknown scheme '" + n + "'");
}

Eigen::Vector3cd polarization_vector(const std::string& p) {
    if (p == "x") return {1, 0, 0};
    if (p == "y") return {0, 1, 0};
    if (p == "z") return {0, 0, 1};
    const double r = 1.0 / std::sqrt(2.0);
    if (p == "sigma+") return Eigen::Vector3cd(-r, cd(0, -r), 0);
    if (p == "sigma-") return Eigen::Vector3cd(r, cd(0, -r), 0);
    throw DomainError("unknown polarization '" + p + "'");
}

int resolve_excited(const angular::LevelScheme& s, std::int64_t idx) {
    return idx < 0 ? s.n_excited() > 0 ? static_cast<int>(s.excited.size()) - 1 : 0 : static_cast<int>(idx);
}

void issue(std::vector<ConfigIssue>& out, const ScenarioConfig& c, const std::string& path, const std::string& msg) {
    out.push_back({c.line_of(path), 0, path + ": " + msg});
}

// Level indices against the chosen scheme.
void check_levels(const ScenarioConfig& c, std::vector<ConfigIssue>& out) {
    if (!c.has("atom.scheme")) return;
    const auto s = scheme_by_name(c.word("atom.scheme"));
    const auto ng = static_cast<std::int64_t>(s.ground.size());
    const auto ne = static_cast<std::int64_t>(s.excited.size());
    auto ground_ok = [&](const std::string& p) {
        if (c.has(p) && c.integer(p) >= ng)
            issue(out, c, p, "ground level " + std::to_string(c.integer(p)) + " does not exist (scheme has " +
                                 std::to_string(ng) + ")");
    };
    auto excited_ok = [&](const std::string& p) {
        if (c.has(p) && c.integer(p) >= ne)
            issue(out, c, p, "excited level " + std::to_string(c.integer(p)) + " does not exist (scheme has " +
                                 std::to_string(ne) + ")");
    };
    ground_ok("atom.ground_level");
    ground_ok("control.level");
    ground_ok("gain.pumped_level");
    ground_ok("gain.final_level");
    excited_ok("probe.excited_level");
    excited_ok("control.excited_level");
    if (c.has("gain.pumped_level") && c.has("gain.final_level") &&
        c.integer("gain.pumped_level") == c.integer("gain.final_level"))
        issue(out, c, "gain.final_level", "must differ from gain.pumped_level");
    if (c.has("control.rabi_on") && c.word("control.rabi_on") == "transition" && c.has("control.polarization")) {
        const auto& p = c.word("control.polarization");
        if (p == "x" || p == "y")
            issue(out, c, "control.polarization",
                  "a transition-referenced Rabi frequency needs z, sigma+ or sigma- (or rabi_on = reduced)");
    }
}

void check_cloud(const ScenarioConfig& c, std::vector<ConfigIssue>& out) {
    // present even when the value itself was rejected
    const bool b = c.line_of("cloud.b0") > 0, n = c.line_of("cloud.n0") > 0;
    if (b == n) issue(out, c, b ? "cloud.n0" : "cloud.b0", "give exactly one of cloud.b0 and cloud.n0");
}

void check_channels(const ScenarioConfig& c, std::vector<ConfigIssue>& out) {
    if (!c.has("detection.channels")) return;
    const auto& ch = c.words("detection.channels");
    const bool hel = ch.front().rfind("hel", 0) == 0;
    for (const auto& x : ch)
        if ((x.rfind("hel", 0) == 0) != hel)
            issue(out, c, "detection.channels", "helicity and linear channels need different inputs; run them separately");
    if (c.has("detection.theta"))
        for (double t : c.grid("detection.theta"))
            if (t < 0.0 || t > 0.5 * kPi) issue(out, c, "detection.theta", "angles must lie in [0, pi/2]");
}

// ---- schemas -------------------------------------------------------------------------

std::optional<Schema> build_schema(const std::string& name) {
    Schema s;
    if (name == "cbs-cone") {
        s.sections = {atom_section("two-level", "0"), probe_section(false), cloud_section(), detection_section(),
                      mc_section("10000", "50", "beam"), run_section(), output_section()};
        s.check = [](const ScenarioConfig& c, std::vector<ConfigIssue>& o) {
            check_levels(c, o);
            check_cloud(c, o);
            check_channels(c, o);
        };
    } else if (name == "ladder-spectrum") {
        s.sections = {atom_section("two-level", "0"), probe_section(false), cloud_section(), detection_section(),
                      mc_section("10000", "50", "beam"), run_section(),
                      sweep_section({"detuning"}, "detuning", Dim::Frequency, "-2:0.5:2"), output_section()};
        s.check = [](const ScenarioConfig& c, std::vector<ConfigIssue>& o) {
            check_levels(c, o);
            check_cloud(c, o);
            check_channels(c, o);
        };
    } else if (name == "gain-transport") {
        SectionSpec gain{"gain",
                         {integer("pumped_level", "0", 0), integer("final_level", "1", 0),
                          num("fraction", Dim::None, "0.5", 0.0, true, 1.0, true),
                          num("dephasing", Dim::Frequency, "0.01", 0.0)}};
        s.sections = {atom_section("rb85-d2", "1"), probe_section(false), control_section("0", "1"), gain,
                      cloud_section(), mc_section("20000", "40", "volume"), run_section(),
                      sweep_section({"rabi", "detuning"}, "rabi", Dim::Frequency, "1, 2, 4, 8, 16, 32"),
                      output_section()};
        s.check = [](const ScenarioConfig& c, std::vector<ConfigIssue>& o) {
            check_levels(c, o);
            check_cloud(c, o);
            if (c.has("control.rabi_on") && c.word("control.rabi_on") == "transition")
                issue(o, c, "control.rabi_on", "gain-transport uses the reduced Rabi frequency (set rabi_on = reduced)");
            if (c.has("sweep.variable") && c.word("sweep.variable") == "rabi" && c.has("sweep.values"))
                for (double v : c.grid("sweep.values"))
                    if (v < 0.0) issue(o, c, "sweep.values", "Rabi frequencies must be >= 0");
        };
        for (auto& k : s.sections[2].keys)
            if (k.name == "rabi_on") k.default_text = "reduced";
    } else if (name == "eit-spectrum") {
        s.sections = {atom_section("rb87-d1-f1", "0"), probe_section(true), control_section("1", "1"),
                      {"medium", {num("n0", Dim::Density, "0.01", 0.0, true)}},
                      sweep_section({"detuning"}, "detuning", Dim::Frequency, "-3:0.05:3"), run_section(),
                      output_section()};
        s.check = [](const ScenarioConfig& c, std::vector<ConfigIssue>& o) { check_levels(c, o); };
    } else if (name == "coupled-dipole-spectrum") {
        KeySpec pos;
        pos.name = "positions";
        pos.kind = Kind::Positions;
        pos.dim = Dim::Length;
        s.sections = {{"microdipole",
                       {word("model", {"scalar", "vector"}, "vector"), integer("atoms", "50", 1, 2000),
                        num("density", Dim::Density, "0.01", 0.0, true),
                        word("shape", {"ball", "gaussian"}, "gaussian"), integer("configurations", "100", 1),
                        num("contact_floor", Dim::Length, "0.05", 0.0, true), pos}},
                      sweep_section({"detuning"}, "detuning", Dim::Frequency, "-3:0.1:3"), run_section(),
                      output_section()};
        s.check = [](const ScenarioConfig& c, std::vector<ConfigIssue>& o) {
            if (!c.has("microdipole.positions") || !c.has("microdipole.contact_floor")) return;
            microdipole::Configuration conf;
            for (const auto& p : c.positions("microdipole.positions")) conf.positions.emplace_back(p[0], p[1], p[2]);
            conf.contact_floor = c.number("microdipole.contact_floor");
            try {
                conf.validate();
            } catch (const DomainError& e) {
                issue(o, c, "microdipole.positions", e.what());
            }
        };
    } else if (name == "selfconsistent-slab") {
        s.sections = {{"medium", {num("density", Dim::None, "0.01", 0.0)}},
                      {"slab", {num("length", Dim::Length, "20", 0.0)}},
                      sweep_section({"detuning"}, "detuning", Dim::Frequency, "-3:0.05:3"), run_section(),
                      output_section()};
    } else if (name == "diffusion-threshold") {
        s.sections = {{"diffusion",
                       {num("v_bar", Dim::None, "1", 0.0, true), num("l0", Dim::Length, "1", 0.0, true),
                        num("mean_cos", Dim::None, "0", -1.0, false, 1.0, true),
                        num("albedo", Dim::None, "1", 0.0, false, 1.0), num("l_g", Dim::Length, "10", 0.0, true),
                        word("boundary", {"absorbing", "mixed", "reflecting"}, "absorbing"),
                        integer("grid_points", "400", 20, 20000)}},
                      sweep_section({"r0"}, "r0", Dim::Length, "1:0.25:6"), run_section(), output_section()};
        s.sections[0].keys[4].allow_infinity = true;
        s.check = [](const ScenarioConfig& c, std::vector<ConfigIssue>& o) {
            if (c.has("sweep.values"))
                for (double v : c.grid("sweep.values"))
                    if (!(v > 0.0)) issue(o, c, "sweep.values", "radii must be > 0");
        };
    } else if (name == "protocol-utils") {
        s.sections = {{"protocol",
                       {num("n_bar", Dim::None, "1", 0.0), num("tolerance", Dim::None, "1e-12", 0.0, true, 1.0, true),
                        num("xi", Dim::None, "0.01", 0.0), num("i_mean", Dim::None, "1", 0.0)}},
                      sweep_section({"n_atoms"}, "n_atoms", Dim::None, "0:100:1000"), run_section(),
                      output_section()};
        s.check = [](const ScenarioConfig& c, std::vector<ConfigIssue>& o) {
            if (c.has("sweep.values"))
                for (double v : c.grid("sweep.values"))
                    if (v < 0.0) issue(o, c, "sweep.values", "atom numbers must be >= 0");
        };
    } else {
        return std::nullopt;
    }
    return s;
}

// ---- formatting ----------------------------------------------------------------------

std::string fmt(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    if (x == 0.0) return "0";
    char buf[64];
    auto r = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, r.ptr);
}

Table make_table(std::string name, std::string sweep_var, std::string sweep_unit, std::string value_name,
                 std::string value_unit, bool order = false, bool channel = false) {
    Table t;
    t.name = std::move(name);
    t.sweep_var = std::move(sweep_var);
    t.sweep_unit = std::move(sweep_unit);
    t.value_name = std::move(value_name);
    t.value_unit = std::move(value_unit);
    t.has_order = order;
    t.has_channel = channel;
    return t;
}

// ---- runners ---------------------------------------------------------------------------

struct Runner {
    const ScenarioConfig& c;
    ResultRecord& r;
    const RunContext& ctx;
    int workers;
    std::string where;  // current sweep point, for error context

    void progress(const std::string& m) const {
        if (ctx.progress) ctx.progress(r.scenario + ": " + m);
    }

    double probe_absolute(const angular::LevelScheme& s, double rel) const {
        const int e = resolve_excited(s, c.integer("probe.excited_level"));
        return s.excited[e].energy - s.ground[c.integer("atom.ground_level")].energy + rel;
    }

    medium::GroundState ground(const angular::LevelScheme& s, double n0 = 1.0) const {
        return c.word("atom.population") == "equilibrium" ? medium::equilibrium_ground(s, n0)
                                                            : medium::isotropic_ground(s, c.integer("atom.ground_level"), n0);
    }

    std::optional<medium::ControlField> control(const angular::LevelScheme& s, double rabi) const {
        const int g = static_cast<int>(c.integer("control.level"));
        const int e = resolve_excited(s, c.integer("control.excited_level"));
        const double dc = s.excited[e].energy - s.ground[g].energy + c.number("control.detuning");
        const auto pol_name = c.word("control.polarization");
        const auto pol = polarization_vector(pol_name);
        if (c.word("control.rabi_on") == "reduced") return medium::make_control(s, g, pol, rabi, dc);
        const int q = pol_name == "sigma+" ? 1 : pol_name == "sigma-" ? -1 : 0;
        const auto M0 = c.integer("control.reference_m");
        using angular::HalfInt;
        return medium::make_control_on_transition(s, g, pol, rabi, dc, s.ground[g].F, HalfInt::whole(static_cast<int>(M0)),
                                                  s.excited[e].F, HalfInt::whole(static_cast<int>(M0) + q));
    }

    double sigma_reference(const angular::LevelScheme& s) const {
        int f0 = 0, f = 0;
        for (const auto& l : s.ground) f0 = std::max(f0, l.F.twice);
        for (const auto& l : s.excited) f = std::max(f, l.F.twice);
        return mcscatter::resonance_cross_section(f0, f);
    }

    // Cloud profile; b0 refers to the scatterer density.
    std::shared_ptr<const propagation::DensityProfile> profile(const angular::LevelScheme& s, double scatterer_fraction) const {
        const double r0 = c.number("cloud.r0");
        const bool gauss = c.word("cloud.profile") == "gaussian";
        double n0 = 0.0;
        if (c.has("cloud.n0")) {
            n0 = c.number("cloud.n0");
        } else {
            const double b0 = c.number("cloud.b0");
            const double sig = sigma_reference(s);
            n0 = (gauss ? mcscatter::gaussian_n0_for_b0(b0, r0, sig) : b0 / (2.0 * r0 * sig)) / scatterer_fraction;
        }
        if (gauss) return std::make_shared<propagation::GaussianProfile>(n0, r0);
        return std::make_shared<propagation::UniformSphereProfile>(n0, r0);
    }

    mcscatter::RunOptions run_options() const {
        mcscatter::RunOptions o;
        o.trajectories = static_cast<std::uint64_t>(c.integer("mc.trajectories"));
        o.seed = static_cast<std::uint64_t>(c.integer("run.seed"));
        o.workers = workers;
        o.chunk = static_cast<std::uint64_t>(c.integer("mc.chunk"));
        return o;
    }

    mcscatter::McConfig mc_base(const angular::LevelScheme& s) const {
        mcscatter::McConfig m;
        m.cloud.atom = medium::Atom{s, std::nullopt};
        m.cloud.ground = ground(s);
        m.cloud.profile = profile(s, 1.0);
        m.max_order = static_cast<int>(c.integer("mc.max_order"));
        m.omega0 = s.omega0;
        m.instability_z = c.number("mc.instability_z");
        m.instability_min_order = static_cast<int>(c.integer("mc.instability_min_order"));
        const auto& src = c.word("mc.source");
        m.source = src == "beam" ? mcscatter::SourceMode::Beam
                                 : src == "volume" ? mcscatter::SourceMode::Volume : mcscatter::SourceMode::Point;
        if (c.has("detection.channels")) {
            m.channels.clear();
            for (const auto& ch : c.words("detection.channels")) m.channels.push_back(mcscatter::channel_from_name(ch));
            m.theta = c.grid("detection.theta");
            m.n_phi = static_cast<int>(c.integer("detection.n_phi"));
        }
        return m;
    }

    void record_mc(const mcscatter::McResult& m) {
        for (const auto& w : m.warnings)
            if (std::find(r.warnings.begin(), r.warnings.end(), w) == r.warnings.end()) r.warnings.push_back(w);
    }

    void cbs_cone() {
        const auto s = scheme_by_name(c.word("atom.scheme"));
        auto m = mc_base(s);
        m.detuning = probe_absolute(s, c.number("probe.detuning"));
        progress("running " + std::to_string(c.integer("mc.trajectories")) + " trajectories");
        const auto res = mcscatter::cbs_enhancement(m, run_options());
        record_mc(res);
        struct Q {
            const char* name;
            const char* unit;
            std::vector<double> mcscatter::ChannelResult::*v;
            std::vector<double> mcscatter::ChannelResult::*e;
        };
        const Q qs[] = {{"eta", "1", &mcscatter::ChannelResult::eta, &mcscatter::ChannelResult::eta_err},
                        {"eta_multi", "1", &mcscatter::ChannelResult::eta_multi, &mcscatter::ChannelResult::eta_multi_err},
                        {"ladder", "1/sr", &mcscatter::ChannelResult::ladder, &mcscatter::ChannelResult::ladder_err},
                        {"crossed", "1/sr", &mcscatter::ChannelResult::crossed, &mcscatter::ChannelResult::crossed_err},
                        {"single", "1/sr", &mcscatter::ChannelResult::single, &mcscatter::ChannelResult::single_err}};
        for (const auto& q : qs) {
            auto t = make_table(q.name, "theta", "rad", q.name, q.unit, false, true);
            for (const auto& ch : res.channels)
                for (std::size_t b = 0; b < res.theta.size(); ++b)
                    t.rows.push_back({res.theta[b], (ch.*q.v)[b], (ch.*q.e)[b], 0, mcscatter::channel_name(ch.channel)});
            r.tables.push_back(std::move(t));
        }
        r.summary["injected"] = res.injected;
        r.summary["escaped"] = res.escaped;
        r.summary["escaped_fraction"] = res.injected > 0.0 ? res.escaped / res.injected : 0.0;
        r.summary["absorbed"] = res.absorbed;
        r.summary["truncated"] = res.truncated;
        r.summary["trajectories"] = static_cast<double>(res.trajectories);
    }

    void ladder_spectrum() {
        const auto s = scheme_by_name(c.word("atom.scheme"));
        auto m = mc_base(s);
        auto lad = make_table("ladder", "detuning", "gamma", "ladder", "1/sr", false, true);
        auto esc = make_table("escaped", "detuning", "gamma", "escaped", "1");
        auto order = make_table("escaped_by_order", "detuning", "gamma", "escaped", "1", true);
        r.tables = {lad, esc, order};
        for (double d : c.grid("sweep.values")) {
            where = "detuning = " + fmt(d);
            progress(where);
            m.detuning = probe_absolute(s, c.number("probe.detuning") + d);
            const auto res = mcscatter::simulate_ladder(m, run_options());
            record_mc(res);
            for (const auto& ch : res.channels)
                r.tables[0].rows.push_back({d, ch.ladder[0], ch.ladder_err[0], 0, mcscatter::channel_name(ch.channel)});
            r.tables[1].rows.push_back({d, res.injected > 0.0 ? res.escaped / res.injected : 0.0, 0.0, 0, ""});
            for (std::size_t k = 1; k < res.escaped_by_order.size(); ++k)
                r.tables[2].rows.push_back({d, res.escaped_by_order[k], res.escaped_by_order_err[k], static_cast<int>(k), ""});
        }
    }

    void gain_transport() {
        const auto s = scheme_by_name(c.word("atom.scheme"));
        const std::string var = c.word("sweep.variable");
        const double frac = c.number("gain.fraction");
        auto tail = make_table("tail_growth", var, "gamma", "tail_growth", "1/order");
        auto flag = make_table("instability", var, "gamma", "instability", "1");
        auto order = make_table("escaped_by_order", var, "gamma", "escaped", "1", true);
        r.tables = {tail, flag, order};
        double first_flag = std::numeric_limits<double>::quiet_NaN();
        for (double v : c.grid("sweep.values")) {
            where = var + " = " + fmt(v);
            progress(where);
            auto m = mc_base(s);
            const double rabi = var == "rabi" ? v : c.number("control.rabi");
            const double det = c.number("probe.detuning") + (var == "detuning" ? v : 0.0);
            m.cloud.atom = medium::Atom{s, control(s, rabi)};
            m.cloud.gain = medium::RamanGain{static_cast<int>(c.integer("gain.pumped_level")),
                                             static_cast<int>(c.integer("gain.final_level")), c.number("gain.dephasing")};
            m.cloud.gain_fraction = frac;
            m.cloud.scatterer_fraction = 1.0 - frac;
            m.cloud.profile = profile(s, 1.0 - frac);
            m.detuning = probe_absolute(s, det);
            const auto res = mcscatter::gain_transport(m, run_options());
            record_mc(res);
            r.tables[0].rows.push_back({v, res.tail_growth, res.tail_growth_err, 0, ""});
            r.tables[1].rows.push_back({v, res.instability ? 1.0 : 0.0, 0.0, 0, ""});
            for (std::size_t k = 1; k < res.escaped_by_order.size(); ++k)
                r.tables[2].rows.push_back({v, res.escaped_by_order[k], res.escaped_by_order_err[k], static_cast<int>(k), ""});
            if (res.instability && std::isnan(first_flag)) first_flag = v;
        }
        r.summary["first_unstable_" + var] = first_flag;
    }

    void eit_spectrum() {
        const auto s = scheme_by_name(c.word("atom.scheme"));
        const auto gs = ground(s, c.number("medium.n0"));
        const medium::Atom bare{s, std::nullopt};
        const medium::Atom dressed{s, control(s, c.number("control.rabi"))};
        const auto e = polarization_vector(c.word("probe.polarization"));
        auto proj = [&](const medium::Atom& a, double rel) {
            return cd(e.dot(medium::susceptibility(a, gs, probe_absolute(s, rel)) * e));
        };
        auto re = make_table("chi_re", "detuning", "gamma", "chi_re", "1");
        auto im = make_table("chi_im", "detuning", "gamma", "chi_im", "1");
        auto im0 = make_table("chi_im_undressed", "detuning", "gamma", "chi_im", "1");
        r.tables = {re, im, im0};
        for (double d : c.grid("sweep.values")) {
            where = "detuning = " + fmt(d);
            const double rel = c.number("probe.detuning") + d;
            const cd x = proj(dressed, rel);
            r.tables[0].rows.push_back({d, x.real(), 0.0, 0, ""});
            r.tables[1].rows.push_back({d, x.imag(), 0.0, 0, ""});
            r.tables[2].rows.push_back({d, proj(bare, rel).imag(), 0.0, 0, ""});
        }
        // two-photon resonance: relative probe detuning equal to the relative control detuning
        where = "two-photon resonance";
        const double two_photon = c.number("control.detuning");
        const double ratio = proj(dressed, two_photon).imag() / proj(bare, 0.0).imag();
        r.summary["two_photon_detuning"] = two_photon;
        r.summary["transparency_ratio"] = ratio;
        try {
            const auto vg = transport::group_velocity(
                [&](double rel) { return proj(dressed, rel).real(); }, two_photon, s.omega0, 1e-3, 1e-4);
            r.summary["group_velocity_ratio"] = vg.ratio;
        } catch (const NumericError& ex) {
            r.warnings.push_back(std::string("group velocity not converged: ") + ex.what());
        }
    }

    void coupled_dipole() {
        using namespace microdipole;
        const Model model = c.word("microdipole.model") == "scalar" ? Model::Scalar : Model::Vector;
        const auto det = c.grid("sweep.values");
        auto q = make_table("q0", "detuning", "gamma", "q0", "lambdabar^2");
        if (c.has("microdipole.positions")) {
            Configuration conf;
            conf.model = model;
            conf.contact_floor = c.number("microdipole.contact_floor");
            for (const auto& p : c.positions("microdipole.positions")) conf.positions.emplace_back(p[0], p[1], p[2]);
            progress("fixed configuration of " + std::to_string(conf.positions.size()) + " atoms");
            const SpectralSolver solver(conf);
            const auto q0 = solver.total_cross_section(det, Vector3d::UnitZ(), Vector3cd(1, 0, 0));
            for (std::size_t i = 0; i < det.size(); ++i) q.rows.push_back({det[i], q0[i], 0.0, 0, ""});
            r.summary["configurations"] = 1;
        } else {
            ConfigurationSpec spec;
            spec.atoms = static_cast<int>(c.integer("microdipole.atoms"));
            spec.density = c.number("microdipole.density");
            spec.shape = c.word("microdipole.shape") == "ball" ? CloudShape::UniformBall : CloudShape::Gaussian;
            spec.model = model;
            spec.contact_floor = c.number("microdipole.contact_floor");
            const int nconf = static_cast<int>(c.integer("microdipole.configurations"));
            progress("averaging " + std::to_string(nconf) + " configurations");
            const auto avg = averaged_cross_section(spec, det, nconf, static_cast<std::uint64_t>(c.integer("run.seed")), workers);
            for (std::size_t i = 0; i < det.size(); ++i) q.rows.push_back({det[i], avg.mean[i], avg.stderr_[i], 0, ""});
            r.summary["configurations"] = nconf;
            r.summary["cloud_size"] = configuration_size(spec);
        }
        double best = -1.0, at = 0.0;
        for (const auto& row : q.rows)
            if (row.value > best) {
                best = row.value;
                at = row.sweep;
            }
        r.summary["peak_detuning"] = at;
        r.summary["peak_q0"] = best;
        r.tables.push_back(std::move(q));
    }

    void selfconsistent_slab() {
        using namespace microdipole;
        const double n = c.number("medium.density");
        const double L = c.number("slab.length");
        auto er = make_table("eps_re", "detuning", "gamma", "eps_re", "1");
        auto ei = make_table("eps_im", "detuning", "gamma", "eps_im", "1");
        auto tr = make_table("transmittance", "detuning", "gamma", "transmittance", "1");
        auto beer = make_table("beer", "detuning", "gamma", "transmittance", "1");
        r.tables = {er, ei, tr, beer};
        cd prev_root{1.0};
        bool first = true;
        for (double d : c.grid("sweep.values")) {
            where = "detuning = " + fmt(d);
            const auto eps = self_consistent_epsilon(n, d);
            cd root = eps.sqrt_eps;
            if (!first && std::abs(-root - prev_root) < std::abs(root - prev_root)) root = -root;
            prev_root = root;
            first = false;
            const auto t = slab_transmission_with_root(eps.eps, root, L);
            r.tables[0].rows.push_back({d, eps.eps.real(), 0.0, 0, ""});
            r.tables[1].rows.push_back({d, eps.eps.imag(), 0.0, 0, ""});
            r.tables[2].rows.push_back({d, t.transmittance, 0.0, 0, ""});
            // dilute reference with sigma0 = 6 pi for the scaled density of F0 = 0 -> F = 1
            r.tables[3].rows.push_back({d, std::exp(-6.0 * kPi * n * L / (1.0 + 4.0 * d * d)), 0.0, 0, ""});
        }
    }

    void diffusion_threshold() {
        transport::DiffusionModel m;
        m.v_bar = c.number("diffusion.v_bar");
        m.l0_bar = c.number("diffusion.l0");
        m.mean_cos = c.number("diffusion.mean_cos");
        m.albedo = c.number("diffusion.albedo");
        m.l_g = c.number("diffusion.l_g");
        const auto& b = c.word("diffusion.boundary");
        const auto bc = b == "absorbing" ? transport::SphereBoundary::Absorbing
                                         : b == "mixed" ? transport::SphereBoundary::Mixed : transport::SphereBoundary::Reflecting;
        const int n = static_cast<int>(c.integer("diffusion.grid_points"));
        auto g = make_table("growth_rate", "r0", "lambdabar", "growth_rate", "gamma");
        std::vector<double> radii = c.grid("sweep.values"), rates;
        for (double r0 : radii) {
            where = "r0 = " + fmt(r0);
            m.r0 = r0;
            const auto mode = transport::solve_gain_diffusion_sphere(m, bc, n);
            g.rows.push_back({r0, mode.growth_rate, 0.0, 0, ""});
            rates.push_back(mode.growth_rate);
        }
        r.tables.push_back(std::move(g));
        const auto D = transport::diffusion_constant(m);
        r.summary["l_tr"] = D.l_tr;
        r.summary["threshold_r0"] = transport::letokhov_threshold(D.l_tr, m.l_g);
        double crossing = std::numeric_limits<double>::quiet_NaN();
        for (std::size_t i = 1; i < rates.size(); ++i)
            if ((rates[i - 1] < 0.0) != (rates[i] < 0.0)) {
                crossing = radii[i - 1] - rates[i - 1] * (radii[i] - radii[i - 1]) / (rates[i] - rates[i - 1]);
                break;
            }
        r.summary["crossing_r0"] = crossing;
    }

    void protocol_utils() {
        const double nbar = c.number("protocol.n_bar");
        const double tol = c.number("protocol.tolerance");
        const int N = protocols::truncation_for(nbar, tol);
        protocols::PsiMinusState st{nbar, N};
        r.summary["n_max"] = N;
        r.summary["truncated_norm"] = st.truncated_norm();
        r.summary["tail_bound"] = protocols::tail_bound(nbar, N);
        auto lam = make_table("schmidt", "m_plus_n", "1", "lambda", "1");
        for (int k = 0; k <= 2 * N; ++k)
            lam.rows.push_back({static_cast<double>(k), protocols::schmidt_coefficient(nbar, k, 0), 0.0, 0, ""});
        auto mz = make_table("mz_signal", "n_atoms", "1", "signal", "1");
        for (double na : c.grid("sweep.values")) {
            where = "n_atoms = " + fmt(na);
            mz.rows.push_back({na, protocols::mz_signal(c.number("protocol.i_mean"), c.number("protocol.xi"), na), 0.0, 0, ""});
        }
        r.tables = {lam, mz};
    }
};

}  // namespace

std::string version_string() { return COLDSCATTER_VERSION; }

const std::vector<std::string>& scenario_names() {
    static const std::vector<std::string> n{"cbs-cone", "ladder-spectrum", "gain-transport", "eit-spectrum",
                                            "coupled-dipole-spectrum", "selfconsistent-slab", "diffusion-threshold",
                                            "protocol-utils"};
    return n;
}

std::optional<Schema> schema_for(const std::string& scenario) { return build_schema(scenario); }

ScenarioConfig parse_file(const std::string& path) { return config::parse_config(path, schema_for); }
ScenarioConfig parse_text(const std::string& text) { return config::parse_config_text(text, schema_for); }

ResultRecord run_scenario(const ScenarioConfig& cfg, const RunContext& ctx) {
    const auto schema = schema_for(cfg.scenario);
    if (!schema) throw DomainError("unknown scenario '" + cfg.scenario + "'");
    ResultRecord r;
    r.scenario = cfg.scenario;
    r.config_hash = cfg.hash_hex(*schema);
    r.version = version_string();
    r.config_text = cfg.canonical();
    r.seed = static_cast<std::uint64_t>(cfg.integer("run.seed"));
    r.workers = ctx.workers > 0 ? ctx.workers : static_cast<int>(cfg.integer("run.workers"));

    Runner run{cfg, r, ctx, r.workers, {}};
    const auto t0 = std::chrono::steady_clock::now();
    auto fail = [&](ResultRecord::ErrorKind kind, const std::string& what) {
        r.complete = false;
        r.error_kind = kind;
        r.error = "scenario '" + cfg.scenario + "'" + (run.where.empty() ? "" : " at " + run.where) + ": " + what;
    };
    try {
        const auto& s = cfg.scenario;
        if (s == "cbs-cone") run.cbs_cone();
        else if (s == "ladder-spectrum") run.ladder_spectrum();
        else if (s == "gain-transport") run.gain_transport();
        else if (s == "eit-spectrum") run.eit_spectrum();
        else if (s == "coupled-dipole-spectrum") run.coupled_dipole();
        else if (s == "selfconsistent-slab") run.selfconsistent_slab();
        else if (s == "diffusion-threshold") run.diffusion_threshold();
        else if (s == "protocol-utils") run.protocol_utils();
    } catch (const NumericError& e) {
        fail(ResultRecord::ErrorKind::Numeric, e.diagnostics().empty() ? e.what() : std::string(e.what()) + " (" + e.diagnostics() + ")");
    } catch (const RangeError& e) {
        fail(ResultRecord::ErrorKind::Numeric, e.what());
    } catch (const DomainError& e) {
        fail(ResultRecord::ErrorKind::Domain, e.what());
    }
    r.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return r;
}

std::string csv_text(const Table& t) {
    std::string out = t.sweep_var + " [" + t.sweep_unit + "],value [" + t.value_unit + "],stat_err [" + t.value_unit + "]";
    if (t.has_order) out += ",order";
    if (t.has_channel) out += ",channel";
    out += "\n";
    for (const auto& row : t.rows) {
        out += fmt(row.sweep) + "," + fmt(row.value) + "," + fmt(row.err);
        if (t.has_order) out += "," + std::to_string(row.order);
        if (t.has_channel) out += "," + row.channel;
        out += "\n";
    }
    return out;
}

std::string json_text(const ResultRecord& r) {
    using nlohmann::ordered_json;
    auto num = [](double x) -> ordered_json { return std::isfinite(x) ? ordered_json(x) : ordered_json(nullptr); };
    ordered_json j;
    j["scenario"] = r.scenario;
    j["status"] = r.complete ? "complete" : "incomplete";
    if (!r.complete) j["error"] = r.error;
    j["config_hash"] = r.config_hash;
    j["version"] = r.version;
    j["seed"] = r.seed;
    j["config"] = r.config_text;
    ordered_json summary = ordered_json::object();
    for (const auto& [k, v] : r.summary) summary[k] = num(v);
    j["summary"] = summary;
    j["warnings"] = r.warnings;
    ordered_json tables = ordered_json::array();
    for (const auto& t : r.tables) {
        ordered_json tj;
        tj["name"] = t.name;
        tj["sweep_var"] = t.sweep_var;
        tj["sweep_unit"] = t.sweep_unit;
        tj["value"] = t.value_name;
        tj["value_unit"] = t.value_unit;
        ordered_json rows = ordered_json::array();
        for (const auto& row : t.rows) {
            ordered_json rj;
            rj[t.sweep_var] = num(row.sweep);
            rj["value"] = num(row.value);
            rj["stat_err"] = num(row.err);
            if (t.has_order) rj["order"] = row.order;
            if (t.has_channel) rj["channel"] = row.channel;
            rows.push_back(rj);
        }
        tj["rows"] = rows;
        tables.push_back(tj);
    }
    j["tables"] = tables;
    return j.dump(2) + "\n";
}

std::vector<std::string> emit_results(const ResultRecord& r, const std::string& dir, const std::string& prefix,
                                      const std::vector<std::string>& formats) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory '" + dir + "': " + ec.message());
    std::vector<std::string> written;
    auto write = [&](const std::string& name, const std::string& body) {
        const std::string path = (fs::path(dir) / name).string();
        std::ofstream f(path, std::ios::binary | std::ios::trunc);
        if (!f) throw IoError("cannot open '" + path + "' for writing");
        f << body;
        f.close();
        if (!f) throw IoError("error writing '" + path + "'");
        written.push_back(path);
    };
    const bool csv = std::find(formats.begin(), formats.end(), "csv") != formats.end();
    const bool json = std::find(formats.begin(), formats.end(), "json") != formats.end();
    if (csv)
        for (const auto& t : r.tables) write(prefix + "_" + t.name + ".csv", csv_text(t));
    if (json) {
        write(prefix + ".json", json_text(r));
        nlohmann::ordered_json t;
        t["scenario"] = r.scenario;
        t["config_hash"] = r.config_hash;
        t["workers"] = r.workers;
        t["wall_time_s"] = r.wall_time_s;
        write(prefix + ".timing.json", t.dump(2) + "\n");
    }
    return written;
}

}  // namespace coldscatter::scenario
