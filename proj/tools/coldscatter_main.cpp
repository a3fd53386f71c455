#include <CLI11.hpp>
#include <cstdlib>
#include <iostream>
#include <string>

#include "coldscatter/errors.hpp"
#include "coldscatter/scenario.hpp"

namespace {

using namespace coldscatter;

enum Exit { kOk = 0, kConfig = 1, kNumeric = 2, kIo = 3 };

void print_issues(const std::string& path, const ConfigError& e) {
    for (const auto& i : e.issues()) {
        std::cerr << path;
        if (i.line > 0) std::cerr << ":" << i.line << ":" << (i.column > 0 ? i.column : 1);
        std::cerr << ": error: " << i.message << "\n";
    }
}

int cmd_validate(const std::string& path) {
    try {
        const auto cfg = scenario::parse_file(path);
        std::cout << cfg.canonical();
        std::cout << "# config_hash = " << cfg.hash_hex(*scenario::schema_for(cfg.scenario)) << "\n";
        return kOk;
    } catch (const ConfigError& e) {
        print_issues(path, e);
        return kConfig;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kIo;
    }
}

int cmd_run(const std::string& path, const std::string& seed, const std::string& workers, const std::string& out,
            bool quiet) {
    config::ScenarioConfig cfg;
    try {
        cfg = scenario::parse_file(path);
        const auto schema = *scenario::schema_for(cfg.scenario);
        if (!seed.empty()) cfg.set(schema, "run.seed", seed);
        if (!workers.empty()) cfg.set(schema, "run.workers", workers);
    } catch (const ConfigError& e) {
        print_issues(path, e);
        return kConfig;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kIo;
    }

    // --out, then the environment, then the configuration
    std::string dir = cfg.word("output.dir");
    if (const char* env = std::getenv("COLDSCATTER_OUTPUT_DIR"); env && *env) dir = env;
    if (!out.empty()) dir = out;
    const std::string prefix = cfg.has("output.prefix") ? cfg.word("output.prefix") : cfg.scenario;

    scenario::RunContext ctx;
    if (!quiet) ctx.progress = [](const std::string& m) { std::cerr << "[progress] " << m << "\n"; };
    const auto rec = scenario::run_scenario(cfg, ctx);

    try {
        for (const auto& f : scenario::emit_results(rec, dir, prefix, cfg.words("output.formats")))
            std::cout << "wrote " << f << "\n";
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kIo;
    }
    for (const auto& w : rec.warnings) std::cerr << "warning: " << w << "\n";
    if (!rec.complete) {
        std::cerr << "error: " << rec.error << "\n(partial results written, marked incomplete)\n";
        return rec.error_kind == scenario::ResultRecord::ErrorKind::Domain ? kConfig : kNumeric;
    }
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multiple scattering of light in cold atomic clouds"};
    app.set_version_flag("--version", coldscatter::scenario::version_string());
    app.require_subcommand(1);

    std::string run_path, seed, workers, out;
    bool quiet = false;
    auto* run = app.add_subcommand("run", "Run a scenario and write CSV/JSON results");
    run->add_option("config", run_path, "Configuration file")->required();
    run->add_option("--seed", seed, "Override run.seed");
    run->add_option("--workers", workers, "Override run.workers");
    run->add_option("--out", out, "Output directory (overrides COLDSCATTER_OUTPUT_DIR and output.dir)");
    run->add_flag("-q,--quiet", quiet, "No progress on stderr");

    std::string validate_path;
    auto* validate = app.add_subcommand("validate", "Parse a configuration and print its canonical form");
    validate->add_option("config", validate_path, "Configuration file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kConfig;
    }

    if (run->parsed()) return cmd_run(run_path, seed, workers, out, quiet);
    if (validate->parsed()) return cmd_validate(validate_path);
    return kConfig;
}
