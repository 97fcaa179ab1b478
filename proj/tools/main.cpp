#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "splitlora/runner.hpp"

int main(int argc, char** argv) {
    CLI::App app{"split federated LoRA fine-tuning simulator"};
    app.require_subcommand(1);

    std::string config_path;
    std::optional<std::uint64_t> seed_override;
    std::optional<std::string> out_override;
    CLI::App* run = app.add_subcommand("run", "execute a training run from a JSON config");
    run->add_option("--config", config_path, "path to the run config")->required();
    std::uint64_t seed_value = 0;
    auto* seed_opt = run->add_option("--seed", seed_value, "override the config seed");
    std::string out_value;
    auto* out_opt = run->add_option("--out", out_value, "override the output directory");

    std::string report_dir;
    CLI::App* report = app.add_subcommand("report", "tabulate a finished run");
    report->add_option("--in", report_dir, "run directory")->required();

    std::vector<std::string> compare_dirs;
    double threshold = 0.0;
    CLI::App* compare = app.add_subcommand("compare", "compare finished runs");
    compare->add_option("--in", compare_dirs, "run directories")->required()->expected(-2);
    compare->add_option("--threshold", threshold, "mean_ce threshold for time-to-threshold")
        ->required();

    CLI11_PARSE(app, argc, argv);

    if (run->parsed()) {
        if (seed_opt->count() > 0) {
            seed_override = seed_value;
        }
        if (out_opt->count() > 0) {
            out_override = out_value;
        }
        return splitlora::cmd_run(config_path, seed_override, out_override, std::cout, std::cerr);
    }
    if (report->parsed()) {
        return splitlora::cmd_report(report_dir, std::cout, std::cerr);
    }
    return splitlora::cmd_compare(compare_dirs, threshold, std::cout, std::cerr);
}
