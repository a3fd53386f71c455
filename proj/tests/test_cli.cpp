#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "coldscatter/config.hpp"
#include "coldscatter/errors.hpp"
#include "coldscatter/scenario.hpp"
#include "oracles.hpp"

using namespace coldscatter;
using config::ScenarioConfig;
namespace fs = std::filesystem;

namespace {

constexpr double kPi = 3.14159265358979323846;

std::vector<ConfigIssue> issues_of(const std::string& text) {
    try {
        scenario::parse_text(text);
    } catch (const ConfigError& e) {
        return e.issues();
    }
    return {};
}

bool mentions(const std::vector<ConfigIssue>& issues, const std::string& needle) {
    for (const auto& i : issues)
        if (i.message.find(needle) != std::string::npos) return true;
    return false;
}

const scenario::Table& table(const scenario::ResultRecord& r, const std::string& name) {
    for (const auto& t : r.tables)
        if (t.name == name) return t;
    throw std::runtime_error("no table " + name);
}

std::string hash(const ScenarioConfig& c) { return c.hash_hex(*scenario::schema_for(c.scenario)); }

fs::path scratch_dir(const std::string& name) {
    fs::path p = fs::temp_directory_path() / ("coldscatter_cli_" + name + "_" + std::to_string(::getpid()));
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

void write_file(const fs::path& p, const std::string& body) {
    std::ofstream f(p);
    f << body;
}

std::string read_file(const fs::path& p) {
    std::ifstream f(p);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

const std::map<std::string, std::string>& minimal_configs() {
    static const std::map<std::string, std::string> m{
        {"cbs-cone", "scenario = cbs-cone\n[cloud]\nb0 = 2\n"},
        {"ladder-spectrum", "scenario = ladder-spectrum\n[cloud]\nb0 = 2\n"},
        {"gain-transport", "scenario = gain-transport\n[cloud]\nb0 = 5\n"},
        {"eit-spectrum", "scenario = eit-spectrum\n"},
        {"coupled-dipole-spectrum", "scenario = coupled-dipole-spectrum\n"},
        {"selfconsistent-slab", "scenario = selfconsistent-slab\n"},
        {"diffusion-threshold", "scenario = diffusion-threshold\n"},
        {"protocol-utils", "scenario = protocol-utils\n"},
    };
    return m;
}

}  // namespace

// ---- parsing ---------------------------------------------------------------------------

TEST(Parse, MinimalCbsConeFillsDefaults) {
    const auto c = scenario::parse_text("scenario = cbs-cone\n[cloud]\nb0 = 5\n");
    EXPECT_EQ(c.scenario, "cbs-cone");
    EXPECT_EQ(c.word("atom.scheme"), "two-level");
    EXPECT_EQ(c.word("cloud.profile"), "gaussian");
    EXPECT_EQ(c.number("cloud.r0"), 20.0);
    EXPECT_EQ(c.number("cloud.b0"), 5.0);
    EXPECT_FALSE(c.has("cloud.n0"));
    EXPECT_EQ(c.integer("mc.trajectories"), 10000);
    EXPECT_EQ(c.integer("mc.max_order"), 50);
    EXPECT_EQ(c.integer("run.seed"), 1);
    EXPECT_EQ(c.words("detection.channels"), std::vector<std::string>{"hel_par"});
    EXPECT_EQ(c.grid("detection.theta"), std::vector<double>{0.0});
    EXPECT_EQ(c.words("output.formats"), (std::vector<std::string>{"csv", "json"}));
}

TEST(Parse, EveryScenarioHasAMinimalConfig) {
    ASSERT_EQ(minimal_configs().size(), scenario::scenario_names().size());
    for (const auto& n : scenario::scenario_names()) {
        ASSERT_TRUE(minimal_configs().count(n)) << n;
        EXPECT_NO_THROW(scenario::parse_text(minimal_configs().at(n))) << n;
    }
}

TEST(Parse, NegativeDensityNamesKeyPath) {
    const auto is = issues_of("scenario = cbs-cone\n[cloud]\nn0 = -1\n");
    ASSERT_FALSE(is.empty());
    EXPECT_TRUE(mentions(is, "cloud.n0"));
    EXPECT_EQ(is.front().line, 3);
    EXPECT_GT(is.front().column, 0);
    // the rejected value still counts as given: no spurious "give one of b0/n0"
    EXPECT_FALSE(mentions(is, "exactly one"));
}

TEST(Parse, UnitNamedKeyRejectedWithSuggestion) {
    const auto is = issues_of("scenario = cbs-cone\n[cloud]\nb0 = 3\nradius_mm = 2\n");
    ASSERT_EQ(is.size(), 1u);
    EXPECT_TRUE(mentions(is, "unknown key 'cloud.radius_mm'"));
    EXPECT_TRUE(mentions(is, "did you mean 'cloud.r0'"));
    EXPECT_TRUE(mentions(is, "lambdabar"));
    EXPECT_EQ(is[0].line, 4);
}

TEST(Parse, TypoSuggestsNearestKey) {
    const auto is = issues_of("scenario = cbs-cone\n[cloud]\nb0 = 3\n[mc]\ntrajectoris = 10\n");
    EXPECT_TRUE(mentions(is, "did you mean 'mc.trajectories'"));
    const auto s = issues_of("scenario = cbs-cone\n[cloud]\nb0 = 3\nprofile = gausian\n");
    EXPECT_TRUE(mentions(s, "did you mean 'gaussian'"));
    const auto sc = issues_of("scenario = cbs-cones\n");
    EXPECT_TRUE(mentions(sc, "did you mean 'cbs-cone'"));
}

TEST(Parse, UnitViolationsAreNamed) {
    auto is = issues_of("scenario = cbs-cone\n[cloud]\nb0 = 3\nr0 = 5 mm\n");
    ASSERT_EQ(is.size(), 1u);
    EXPECT_TRUE(mentions(is, "unit 'mm'"));
    EXPECT_TRUE(mentions(is, "cloud.r0"));
    is = issues_of("scenario = cbs-cone\n[cloud]\nb0 = 3 gamma\n");
    EXPECT_TRUE(mentions(is, "unit 'gamma'"));
    is = issues_of("scenario = cbs-cone\n[probe]\ndetuning = 2 MHz\n[cloud]\nb0=1\n");
    EXPECT_TRUE(mentions(is, "frequencies are in gamma"));
}

TEST(Parse, AcceptedUnitsAreConverted) {
    const auto c = scenario::parse_text(
        "scenario = cbs-cone\n[cloud]\nb0 = 3\nr0 = 7 lambdabar\n[probe]\ndetuning = -0.5 gamma\n"
        "[detection]\ntheta = 0:1:4 mrad\n");
    EXPECT_EQ(c.number("cloud.r0"), 7.0);
    EXPECT_EQ(c.number("probe.detuning"), -0.5);
    const auto th = c.grid("detection.theta");
    ASSERT_EQ(th.size(), 5u);
    EXPECT_DOUBLE_EQ(th[4], 4e-3);
    const auto d = scenario::parse_text("scenario = cbs-cone\n[cloud]\nb0=3\n[detection]\ntheta = 0, 90 deg\n");
    EXPECT_DOUBLE_EQ(d.grid("detection.theta")[1], kPi / 2);
}

TEST(Parse, SyntaxErrorsCarryLineAndColumn) {
    auto is = issues_of("scenario = cbs-cone\n[cloud\nb0 = 1\n");
    ASSERT_FALSE(is.empty());
    EXPECT_EQ(is[0].line, 2);
    EXPECT_EQ(is[0].column, 7);
    is = issues_of("scenario = cbs-cone\n[cloud]\n  b0 1\n");
    ASSERT_FALSE(is.empty());
    EXPECT_EQ(is[0].line, 3);
    EXPECT_EQ(is[0].column, 3);
    is = issues_of("scenario = cbs-cone\n[cloud]\nb0 = \n");
    EXPECT_TRUE(mentions(is, "missing value"));
    is = issues_of("scenario = cbs-cone\n[cloud]\nB0 = 1\n");
    EXPECT_TRUE(mentions(is, "invalid key name"));
}

TEST(Parse, AllErrorsAreCollected) {
    const auto is = issues_of(
        "scenario = cbs-cone\n[cloud]\nn0 = -1\nradius_mm = 3\nr0 = 5 mm\n[mc]\ntrajectories = 1.5\n"
        "[bogus]\nx = 1\ngarbage\n[cloud]\nn0 = 2\n");
    EXPECT_GE(is.size(), 7u);
    EXPECT_TRUE(mentions(is, "cloud.n0"));
    EXPECT_TRUE(mentions(is, "radius_mm"));
    EXPECT_TRUE(mentions(is, "unit 'mm'"));
    EXPECT_TRUE(mentions(is, "expected an integer"));
    EXPECT_TRUE(mentions(is, "[bogus]"));
    EXPECT_TRUE(mentions(is, "expected 'key = value'"));
    EXPECT_TRUE(mentions(is, "duplicate key 'cloud.n0'"));
    for (std::size_t i = 1; i < is.size(); ++i)
        if (is[i].line > 0) EXPECT_LE(is[i - 1].line, is[i].line);
}

TEST(Parse, MissingScenarioAndCrossChecks) {
    EXPECT_TRUE(mentions(issues_of("[cloud]\nb0 = 1\n"), "missing required key 'scenario'"));
    EXPECT_TRUE(mentions(issues_of("scenario = cbs-cone\n"), "give exactly one"));
    EXPECT_TRUE(mentions(issues_of("scenario = cbs-cone\n[cloud]\nb0 = 1\nn0 = 1\n"), "give exactly one"));
    EXPECT_TRUE(mentions(issues_of("scenario = cbs-cone\n[cloud]\nb0 = 1\n[atom]\nground_level = 3\n"),
                         "atom.ground_level"));
    EXPECT_TRUE(mentions(issues_of("scenario = cbs-cone\n[cloud]\nb0 = 1\n[detection]\nchannels = hel_par, lin_par\n"),
                         "detection.channels"));
    EXPECT_TRUE(mentions(issues_of("scenario = coupled-dipole-spectrum\n[microdipole]\npositions = 0 0 0; 0 0 0.01\n"),
                         "microdipole.positions"));
    EXPECT_TRUE(mentions(issues_of("scenario = selfconsistent-slab\n[cloud]\nb0 = 1\n"), "unknown section [cloud]"));
    EXPECT_TRUE(mentions(issues_of("scenario = diffusion-threshold\n[diffusion]\nl_g = -1\n"), "diffusion.l_g"));
    EXPECT_TRUE(mentions(issues_of("scenario = cbs-cone\n[cloud]\nb0 = inf\n"), "infinity"));
}

TEST(Parse, CommentsAndWhitespaceAreIgnored) {
    const auto a = scenario::parse_text("scenario = cbs-cone\n[cloud]\nb0 = 3\nr0 = 12\n");
    const auto b = scenario::parse_text(
        "# header\n\n  scenario   =   cbs-cone   # trailing\n; another comment\n[ cloud ]\n\tr0=12.0 lambdabar\nb0 = 3e0\n");
    EXPECT_EQ(a, b);
    EXPECT_EQ(hash(a), hash(b));
}

TEST(Parse, UnreadableFileIsIoError) {
    EXPECT_THROW(scenario::parse_file("/nonexistent/dir/config.ini"), IoError);
}

TEST(Parse, EditDistanceAndSuggestions) {
    EXPECT_EQ(config::edit_distance("", ""), 0u);
    EXPECT_EQ(config::edit_distance("kitten", "sitting"), 3u);
    EXPECT_EQ(config::edit_distance("abc", ""), 3u);
    EXPECT_EQ(config::suggest_key("r0_mm", {"r0", "b0"}), "r0");
    EXPECT_EQ(config::suggest_key("density", {"r0", "n0"}), "n0");
    EXPECT_EQ(config::suggest_key("zzzzzzzz", {"r0", "n0"}), "");
}

// ---- canonical form and hash -----------------------------------------------------------

TEST(Canonical, RoundTripForEveryScenario) {
    for (const auto& [name, text] : minimal_configs()) {
        const auto c = scenario::parse_text(text);
        const auto c2 = scenario::parse_text(c.canonical());
        EXPECT_EQ(c.canonical(), c2.canonical()) << name;
        EXPECT_EQ(hash(c), hash(c2)) << name;
        EXPECT_EQ(c2.canonical(), scenario::parse_text(c2.canonical()).canonical()) << name;
    }
}

TEST(Canonical, RandomValuesRoundTripExactly) {
    std::mt19937_64 g(7);
    std::uniform_real_distribution<double> u(-8.0, 8.0), angle(0.0, 1.5);
    for (int i = 0; i < 200; ++i) {
        const double r0 = std::pow(10.0, u(g) / 4.0 + 1.0);
        const double det = u(g) * std::exp(u(g));
        const double b0 = std::pow(10.0, u(g) / 8.0);
        std::ostringstream s;
        s.precision(17);
        s << "scenario = cbs-cone\n[cloud]\nb0 = " << b0 << "\nr0 = " << r0 << "\n[probe]\ndetuning = " << det
          << "\n[detection]\ntheta = 0, " << angle(g) << "\n";
        const auto c = scenario::parse_text(s.str());
        const auto c2 = scenario::parse_text(c.canonical());
        ASSERT_EQ(c2.number("cloud.r0"), c.number("cloud.r0"));
        ASSERT_EQ(c2.number("probe.detuning"), c.number("probe.detuning"));
        ASSERT_EQ(c2.grid("detection.theta"), c.grid("detection.theta"));
        ASSERT_EQ(c.canonical(), c2.canonical());
    }
}

TEST(Hash, Fnv1aReferenceVectors) {
    EXPECT_EQ(config::fnv1a64(""), 0xcbf29ce484222325ULL);
    EXPECT_EQ(config::fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
    EXPECT_EQ(config::fnv1a64("foobar"), 0x85944171f73967e8ULL);
}

TEST(Hash, ChangesIffSemanticFieldChanges) {
    const std::string base = "scenario = cbs-cone\n[cloud]\nb0 = 3\n";
    const auto c0 = scenario::parse_text(base);
    const std::string h0 = hash(c0);
    // one edit per hashed key
    const std::vector<std::pair<std::string, std::string>> semantic{
        {"atom", "scheme = rb85-d2\nground_level = 1"},
        {"atom", "population = equilibrium"},
        {"probe", "detuning = 0.25"},
        {"probe", "excited_level = 0"},
        {"cloud", "profile = sphere"},
        {"cloud", "r0 = 21"},
        {"detection", "channels = hel_perp"},
        {"detection", "theta = 0, 0.001"},
        {"detection", "n_phi = 8"},
        {"mc", "trajectories = 10001"},
        {"mc", "max_order = 49"},
        {"mc", "chunk = 1024"},
        {"mc", "source = volume"},
        {"mc", "instability_z = 2"},
        {"mc", "instability_min_order = 3"},
        {"run", "seed = 2"},
    };
    std::set<std::string> seen{h0};
    for (const auto& [sec, kv] : semantic) {
        const auto c = scenario::parse_text(base + "[" + sec + "]\n" + kv + "\n");
        const std::string h = hash(c);
        EXPECT_NE(h, h0) << kv;
        EXPECT_TRUE(seen.insert(h).second) << "collision for " << kv;
    }
    EXPECT_NE(hash(scenario::parse_text("scenario = cbs-cone\n[cloud]\nb0 = 3.0000000000000004\n")), h0);
    // non-semantic: worker count, output location and formats, spelling of the same value
    EXPECT_EQ(hash(scenario::parse_text(base + "[run]\nworkers = 8\n")), h0);
    EXPECT_EQ(hash(scenario::parse_text(base + "[output]\ndir = /tmp/x\nprefix = p\nformats = csv\n")), h0);
    EXPECT_EQ(hash(scenario::parse_text("scenario = cbs-cone\n[cloud]\nb0 = 3\nr0 = 20 lambdabar\n")), h0);
    // explicit defaults hash like omitted ones
    EXPECT_EQ(hash(scenario::parse_text(base + "[mc]\ntrajectories = 1e4\n")), h0);
}

TEST(Hash, OverridesThroughSetAreValidated) {
    auto c = scenario::parse_text("scenario = cbs-cone\n[cloud]\nb0 = 3\n");
    const auto schema = *scenario::schema_for("cbs-cone");
    const auto h0 = hash(c);
    c.set(schema, "run.workers", "4");
    EXPECT_EQ(hash(c), h0);
    c.set(schema, "run.seed", "99");
    EXPECT_NE(hash(c), h0);
    EXPECT_THROW(c.set(schema, "run.seed", "-1"), ConfigError);
    EXPECT_THROW(c.set(schema, "run.nothing", "1"), ConfigError);
}

// ---- scenarios ---------------------------------------------------------------------------

TEST(Scenario, CoupledDipolePairMatchesOracle) {
    const Eigen::Vector3d ra(0.0, 0.0, 0.0), rb(0.3, -0.4, 1.1);
    for (const std::string model : {"scalar", "vector"}) {
        const auto c = scenario::parse_text("scenario = coupled-dipole-spectrum\n[microdipole]\nmodel = " + model +
                                            "\npositions = 0 0 0; 0.3 -0.4 1.1\n[sweep]\nvalues = -5:0.05:4.95\n");
        const auto r = scenario::run_scenario(c);
        ASSERT_TRUE(r.complete) << r.error;
        const auto& q = table(r, "q0");
        ASSERT_EQ(q.rows.size(), 200u);
        double worst = 0.0;
        for (const auto& row : q.rows) {
            const Eigen::Vector3d z = Eigen::Vector3d::UnitZ();
            const Eigen::Vector3cd x(1, 0, 0);
            const auto A = model == "scalar" ? oracle::scalar_pair_amplitude(ra, rb, z, z, row.sweep)
                                             : oracle::vector_pair_amplitude(ra, rb, z, x, z, x, row.sweep);
            const double q0 = -4.0 * kPi * A.imag();
            worst = std::max(worst, std::abs(row.value - q0) / std::max(1.0, std::abs(q0)));
        }
        EXPECT_LT(worst, 1e-12) << model;
    }
}

TEST(Scenario, DiffusionThresholdSignChangeAtThresholdRadius) {
    const auto c = scenario::parse_text(
        "scenario = diffusion-threshold\n[diffusion]\nl0 = 1\nl_g = 10\nmean_cos = 0.2\n[sweep]\nvalues = 4:0.1:8\n");
    const auto r = scenario::run_scenario(c);
    ASSERT_TRUE(r.complete) << r.error;
    const double l_tr = 1.0 / 0.8;
    const double expected = kPi * std::sqrt(l_tr * 10.0 / 3.0);
    EXPECT_NEAR(r.summary.at("threshold_r0"), expected, 1e-12);
    const auto& g = table(r, "growth_rate");
    EXPECT_LT(g.rows.front().value, 0.0);
    EXPECT_GT(g.rows.back().value, 0.0);
    for (std::size_t i = 1; i < g.rows.size(); ++i) EXPECT_GT(g.rows[i].value, g.rows[i - 1].value);
    EXPECT_LT(std::abs(r.summary.at("crossing_r0") - expected) / expected, 0.01);
}

TEST(Scenario, CbsConeDispatchesAndIsReproducible) {
    const std::string text =
        "scenario = cbs-cone\n[cloud]\nb0 = 2\nr0 = 5\n[detection]\ntheta = 0, 0.05\nchannels = hel_par, hel_perp\n"
        "[mc]\ntrajectories = 3000\nchunk = 512\nmax_order = 20\n";
    const auto c = scenario::parse_text(text);
    const auto a = scenario::run_scenario(c);
    ASSERT_TRUE(a.complete) << a.error;
    const auto& eta = table(a, "eta");
    ASSERT_EQ(eta.rows.size(), 4u);  // 2 channels x 2 angles
    EXPECT_EQ(eta.rows[0].channel, "hel_par");
    EXPECT_EQ(eta.rows[2].channel, "hel_perp");
    EXPECT_GT(eta.rows[0].value, 1.0);
    EXPECT_NEAR(a.summary.at("escaped_fraction"), 1.0, 1e-6);
    scenario::RunContext two;
    two.workers = 3;
    const auto b = scenario::run_scenario(c, two);
    ASSERT_EQ(a.tables.size(), b.tables.size());
    for (std::size_t i = 0; i < a.tables.size(); ++i) EXPECT_EQ(scenario::csv_text(a.tables[i]), scenario::csv_text(b.tables[i]));
    EXPECT_EQ(scenario::json_text(a), scenario::json_text(b));
    auto other = c;
    other.set(*scenario::schema_for("cbs-cone"), "run.seed", "2");
    EXPECT_NE(scenario::csv_text(scenario::run_scenario(other).tables[0]), scenario::csv_text(a.tables[0]));
}

TEST(Scenario, LadderAndGainScenariosRun) {
    const auto l = scenario::run_scenario(scenario::parse_text(
        "scenario = ladder-spectrum\n[cloud]\nb0 = 2\nr0 = 5\n[mc]\ntrajectories = 500\nmax_order = 10\n"
        "[sweep]\nvalues = -1, 0, 1\n"));
    ASSERT_TRUE(l.complete) << l.error;
    EXPECT_EQ(table(l, "escaped").rows.size(), 3u);
    EXPECT_TRUE(table(l, "escaped_by_order").has_order);
    const auto g = scenario::run_scenario(scenario::parse_text(
        "scenario = gain-transport\n[cloud]\nb0 = 3\nr0 = 10\n[mc]\ntrajectories = 300\nmax_order = 10\n"
        "[sweep]\nvalues = 1, 4\n"));
    ASSERT_TRUE(g.complete) << g.error;
    EXPECT_EQ(table(g, "instability").rows.size(), 2u);
    EXPECT_EQ(table(g, "tail_growth").sweep_var, "rabi");
}

TEST(Scenario, EitScenarioShowsTransparency) {
    const auto r = scenario::run_scenario(scenario::parse_text("scenario = eit-spectrum\n[sweep]\nvalues = -1:0.5:1\n"));
    ASSERT_TRUE(r.complete) << r.error;
    EXPECT_LT(r.summary.at("transparency_ratio"), 0.1);
    const auto& dressed = table(r, "chi_im");
    const auto& bare = table(r, "chi_im_undressed");
    EXPECT_LT(dressed.rows[2].value, 0.1 * bare.rows[2].value);
}

TEST(Scenario, ProtocolUtilitiesNormalized) {
    const auto r = scenario::run_scenario(scenario::parse_text("scenario = protocol-utils\n[protocol]\nn_bar = 10\n"));
    ASSERT_TRUE(r.complete);
    EXPECT_NEAR(r.summary.at("truncated_norm"), 1.0, 1e-9);
    const auto& mz = table(r, "mz_signal");
    EXPECT_EQ(mz.rows[1].value, 0.01 * 100.0);
}

TEST(Scenario, BranchCollisionLeavesIncompleteRecord) {
    const auto r = scenario::run_scenario(
        scenario::parse_text("scenario = selfconsistent-slab\n[medium]\ndensity = 0.1\n[sweep]\nvalues = 0:0.05:1\n"));
    EXPECT_FALSE(r.complete);
    EXPECT_EQ(r.error_kind, scenario::ResultRecord::ErrorKind::Numeric);
    EXPECT_NE(r.error.find("selfconsistent-slab"), std::string::npos);
    EXPECT_NE(r.error.find("detuning"), std::string::npos);
    const auto& t = table(r, "transmittance");
    EXPECT_GT(t.rows.size(), 0u);
    EXPECT_LT(t.rows.size(), 21u);
    EXPECT_NE(scenario::json_text(r).find("\"status\": \"incomplete\""), std::string::npos);
}

TEST(Emit, CsvSchemaAndFiles) {
    const auto r = scenario::run_scenario(scenario::parse_text("scenario = selfconsistent-slab\n[sweep]\nvalues = 0, 1\n"));
    const auto dir = scratch_dir("emit");
    const auto files = scenario::emit_results(r, dir.string(), "x", {"csv", "json"});
    EXPECT_EQ(files.size(), r.tables.size() + 2);
    const std::string csv = read_file(dir / "x_transmittance.csv");
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "detuning [gamma],value [1],stat_err [1]");
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
    const std::string js = read_file(dir / "x.json");
    EXPECT_NE(js.find("\"config_hash\": \"" + r.config_hash + "\""), std::string::npos);
    EXPECT_NE(js.find("\"version\""), std::string::npos);
    EXPECT_EQ(js.find("wall_time"), std::string::npos);
    EXPECT_NE(read_file(dir / "x.timing.json").find("wall_time_s"), std::string::npos);
    // echo parses back to the same configuration
    const auto c = scenario::parse_text(r.config_text);
    EXPECT_EQ(hash(c), r.config_hash);
    // unwritable location
    write_file(dir / "blocker", "x");
    EXPECT_THROW(scenario::emit_results(r, (dir / "blocker" / "sub").string(), "x", {"csv"}), IoError);
    fs::remove_all(dir);
}

// ---- the binary ------------------------------------------------------------------------

class Binary : public ::testing::Test {
protected:
    void SetUp() override {
        const char* p = std::getenv("COLDSCATTER_CLI");
        if (!p) GTEST_SKIP() << "COLDSCATTER_CLI not set";
        exe_ = p;
        dir_ = scratch_dir("bin");
    }
    void TearDown() override {
        if (!dir_.empty()) fs::remove_all(dir_);
    }
    int run(const std::string& args, const std::string& env = "") {
        const std::string cmd = env + " \"" + exe_ + "\" " + args + " >\"" + (dir_ / "stdout").string() + "\" 2>\"" +
                                (dir_ / "stderr").string() + "\"";
        const int rc = std::system(cmd.c_str());
        return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
    }
    std::string err() { return read_file(dir_ / "stderr"); }
    std::string out() { return read_file(dir_ / "stdout"); }
    std::string exe_;
    fs::path dir_;
};

TEST_F(Binary, ValidateExitCodes) {
    write_file(dir_ / "ok.ini", "scenario = protocol-utils\n");
    EXPECT_EQ(run("validate " + (dir_ / "ok.ini").string()), 0);
    EXPECT_NE(out().find("config_hash"), std::string::npos);
    write_file(dir_ / "bad.ini", "scenario = cbs-cone\n[cloud]\nn0 = -1\nradius_mm = 1\n");
    EXPECT_EQ(run("validate " + (dir_ / "bad.ini").string()), 1);
    EXPECT_NE(err().find("bad.ini:3:"), std::string::npos);
    EXPECT_NE(err().find("cloud.n0"), std::string::npos);
    EXPECT_NE(err().find("cloud.radius_mm"), std::string::npos);
    EXPECT_EQ(run("validate " + (dir_ / "missing.ini").string()), 3);
    EXPECT_EQ(run("frobnicate"), 1);
}

TEST_F(Binary, RunWritesResultsAndHonoursOverrides) {
    const auto cfg = dir_ / "cd.ini";
    write_file(cfg, "scenario = coupled-dipole-spectrum\n[microdipole]\natoms = 5\nconfigurations = 3\n"
                    "[sweep]\nvalues = -1:1:1\n[output]\ndir = " + (dir_ / "fromconfig").string() + "\n");
    ASSERT_EQ(run("run -q " + cfg.string()), 0) << err();
    EXPECT_TRUE(fs::exists(dir_ / "fromconfig" / "coupled-dipole-spectrum_q0.csv"));
    ASSERT_EQ(run("run -q " + cfg.string(), "COLDSCATTER_OUTPUT_DIR=" + (dir_ / "fromenv").string()), 0) << err();
    EXPECT_TRUE(fs::exists(dir_ / "fromenv" / "coupled-dipole-spectrum_q0.csv"));
    ASSERT_EQ(run("run -q " + cfg.string() + " --out " + (dir_ / "a").string() + " --workers 2",
                  "COLDSCATTER_OUTPUT_DIR=" + (dir_ / "ignored").string()), 0) << err();
    EXPECT_FALSE(fs::exists(dir_ / "ignored"));
    ASSERT_EQ(run("run -q " + cfg.string() + " --out " + (dir_ / "b").string()), 0);
    EXPECT_EQ(read_file(dir_ / "a" / "coupled-dipole-spectrum_q0.csv"), read_file(dir_ / "b" / "coupled-dipole-spectrum_q0.csv"));
    // the echo records the worker count, so JSON is compared between identical invocations
    ASSERT_EQ(run("run -q " + cfg.string() + " --out " + (dir_ / "b2").string()), 0);
    EXPECT_EQ(read_file(dir_ / "b" / "coupled-dipole-spectrum.json"), read_file(dir_ / "b2" / "coupled-dipole-spectrum.json"));
    ASSERT_EQ(run("run -q " + cfg.string() + " --seed 5 --out " + (dir_ / "c").string()), 0);
    EXPECT_NE(read_file(dir_ / "a" / "coupled-dipole-spectrum_q0.csv"), read_file(dir_ / "c" / "coupled-dipole-spectrum_q0.csv"));
    EXPECT_EQ(run("run -q " + cfg.string() + " --seed -3"), 1);
    // progress goes to stderr
    ASSERT_EQ(run("run " + cfg.string() + " --out " + (dir_ / "d").string()), 0);
    EXPECT_NE(err().find("[progress]"), std::string::npos);
    EXPECT_EQ(out().find("[progress]"), std::string::npos);
}

TEST_F(Binary, NumericAndIoFailures) {
    const auto cfg = dir_ / "slab.ini";
    write_file(cfg, "scenario = selfconsistent-slab\n[medium]\ndensity = 0.1\n[sweep]\nvalues = 0:0.05:1\n");
    EXPECT_EQ(run("run -q " + cfg.string() + " --out " + (dir_ / "o").string()), 2);
    EXPECT_NE(err().find("branch collision"), std::string::npos);
    EXPECT_NE(read_file(dir_ / "o" / "selfconsistent-slab.json").find("incomplete"), std::string::npos);
    write_file(dir_ / "file", "x");
    write_file(cfg, "scenario = protocol-utils\n");
    EXPECT_EQ(run("run -q " + cfg.string() + " --out " + (dir_ / "file" / "x").string()), 3);
    EXPECT_NE(err().find((dir_ / "file").string()), std::string::npos);
}
