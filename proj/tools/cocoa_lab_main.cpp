#include <cstdio>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "cocoa/error.hpp"
#include "cocoa/runner.hpp"

int main(int argc, char** argv) {
    CLI::App app{"cocoa-lab: policy-gradient credit assignment experiments"};

    std::string scenario;
    std::string scenario_help = "scenario to run (";
    {
        bool first = true;
        for (const std::string& n : cocoa::scenario_names()) {
            if (!first) scenario_help += ", ";
            scenario_help += n;
            first = false;
        }
        scenario_help += ")";
    }
    app.add_option("scenario", scenario, scenario_help)->required();

    std::string config_path;
    app.add_option("--config", config_path, "JSON config file merged over the defaults");
    long long seed = -1;
    app.add_option("--seed", seed, "seed override (takes precedence over the config)");
    std::string out_dir;
    app.add_option("--out", out_dir, "output directory (default: cocoa-lab-<scenario>)");
    std::vector<std::string> overrides;
    app.add_option("--override", overrides, "key=value config override, repeatable");

    CLI11_PARSE(app, argc, argv);

    try {
        return cocoa::run_scenario(scenario, config_path, out_dir, seed, overrides);
    } catch (const cocoa::Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
}
