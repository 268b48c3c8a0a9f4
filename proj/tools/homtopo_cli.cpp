// Command-line front end: homtopo <command> [--config file] [flags]

#include <iostream>

#include <CLI11.hpp>

#include "homtopo/cli/run.hpp"

int main(int argc, char **argv) {
    using namespace homtopo;
    CLI::App app{"Homogenization-based topology optimization"};
    app.require_subcommand(1);

    std::string config_path, output, table, design;
    std::vector<std::string> sets;
    double epsilon = 0, hmin = 0, eta = 0;
    int newton = 0;

    for (const auto &name : command_names()) {
        auto *sub = app.add_subcommand(name);
        sub->add_option("-c,--config", config_path, "JSON configuration file")->check(CLI::ExistingFile);
        sub->add_option("--set", sets, "override a key, e.g. --set domain.nx=80")->take_all();
        sub->add_option("-o,--output", output, "output directory");
        sub->add_option("--table", table, "micro table CSV (dehomog)");
        sub->add_option("--design", design, "design CSV with index,m1,m2,alpha (dehomog)");
        sub->add_option("--epsilon", epsilon, "lattice period");
        sub->add_option("--hmin", hmin, "minimal feature size");
        sub->add_option("--eta", eta, "orientation smoothing length");
        sub->add_option("--newton-iters", newton, "orientation regularization iterations");
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    }
    const CLI::App *sub = app.get_subcommands().front();
    const std::string command = sub->get_name();

    try {
        const Json file = config_path.empty() ? Json::object() : read_json_file(config_path);
        std::vector<Json> overrides;
        for (const auto &s : sets) overrides.push_back(parse_assignment(s));
        auto flag = [&](const char *opt, const std::string &key, const Json &value) {
            if (sub->count(opt)) overrides.push_back(detail::at_path(key, value));
        };
        flag("--output", "output.dir", output);
        flag("--table", "dehomog.table", table);
        flag("--design", "dehomog.design", design);
        flag("--epsilon", "dehomog.epsilon", epsilon);
        flag("--hmin", "dehomog.h_min", hmin);
        flag("--eta", "dehomog.eta", eta);
        flag("--newton-iters", "dehomog.newton_iterations", newton);
        const RunConfig cfg = resolve_config(command, file, overrides);
        const int code = run_and_report(cfg, std::cerr);
        if (code == kExitOk) std::cout << command << ": wrote " << cfg.output_dir << "\n";
        return code;
    } catch (const ConfigError &e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception &e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitOther;
    }
}
