#include "cascade/experiment.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <exception>
#include <string>
#include <vector>

int main(int argc, char** argv)
{
    CLI::App app{"Numerical lab for coupled cascade wave systems on (0,1)"};
    std::string config_path, outdir = ".";
    std::vector<std::string> overrides;
    bool expect_fail = false;
    app.add_option("config", config_path, "Experiment configuration (INI)")->required();
    app.add_option("-o,--output", outdir, "Directory for CSV and report artifacts");
    app.add_option("-s,--set", overrides, "Override a key, as section.key=value")->allow_extra_args(false);
    app.add_flag("--expect-fail", expect_fail, "Exit 0 only when a check fails or the run is refused");
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        cascade::ExperimentConfig cfg = cascade::load_config(config_path, overrides);
        expect_fail = expect_fail || cfg.expect_fail;
        cascade::RunResult r = cascade::run_experiment(cfg, outdir);
        std::printf("%s: %s\n", cascade::kind_name(cfg.kind).c_str(), config_path.c_str());
        for (const auto& c : r.checks) {
            if (c.relation == "in")
                std::printf("  %-34s %-5s %.6g in [%.6g, %.6g]\n", c.name.c_str(), c.passed ? "ok" : "FAIL", c.value,
                            c.limit, c.upper);
            else
                std::printf("  %-34s %-5s %.6g %s %.6g\n", c.name.c_str(), c.passed ? "ok" : "FAIL", c.value,
                            c.relation.c_str(), c.limit);
        }
        if (r.refused)
            std::printf("  refused: %s\n", r.diagnostic.c_str());
        for (const auto& f : r.files)
            std::printf("  wrote %s\n", f.c_str());
        const int code = cascade::exit_code(r, expect_fail);
        std::printf("%s%s\n", r.passed() ? "pass" : "fail", expect_fail ? " (failure expected)" : "");
        return code;
    } catch (const cascade::ConfigError& e) {
        std::fprintf(stderr, "configuration error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
}
