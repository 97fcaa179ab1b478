#include "splitlora/runner.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "splitlora/config.hpp"
#include "splitlora/error.hpp"

namespace splitlora {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

std::string number_str(double v) {
    return json(v).dump();  // shortest round-trip form, byte-stable
}

json summary_json(const TrainingConfig& cfg, const TrainingLog& log) {
    json summary;
    summary["mode"] = mode_name(cfg.mode);
    summary["rounds"] = cfg.rounds;
    if (log.records.empty()) {
        summary["final_mean_ce"] = nullptr;
        summary["final_ppl"] = nullptr;
        summary["total_bytes"] = json::object();
        summary["total_flops"] = json::object();
        summary["total_sim_time_s"] = 0.0;
    } else {
        const RoundRecord& last = log.records.back();
        summary["final_mean_ce"] = last.loss.mean_ce;
        summary["final_ppl"] = last.loss.ppl;
        summary["total_bytes"] = last.cum_bytes;
        summary["total_flops"] = last.cum_flops;
        summary["total_sim_time_s"] = last.sim_time_s;
    }
    summary["trainable_parameters"] = {
        {"client", log.trainable_client},
        {"server", log.trainable_server},
        {"total", log.trainable_client + log.trainable_server},
    };
    return summary;
}

void write_checkpoints(const fs::path& dir, const TrainingLog& log) {
    for (const CheckpointSnapshot& snap : log.checkpoints) {
        std::ostringstream name;
        name << "round_" << std::setw(6) << std::setfill('0') << snap.round;
        const fs::path round_dir = dir / "checkpoints" / name.str();
        fs::create_directories(round_dir);
        for (std::size_t i = 0; i < snap.client_sets.size(); ++i) {
            save_adapters(round_dir / ("client_" + std::to_string(i) + ".slra"),
                          snap.client_sets[i]);
        }
        if (!snap.server_set.empty()) {
            save_adapters(round_dir / "server.slra", snap.server_set);
        }
    }
}

struct LoadedRun {
    json summary;
    std::vector<json> records;
};

// Returns false after printing a diagnostic; parse failures name the line.
bool load_run_dir(const std::string& dir, LoadedRun& run, std::ostream& err) {
    const fs::path log_path = fs::path(dir) / "log.jsonl";
    const fs::path summary_path = fs::path(dir) / "summary.json";
    std::ifstream log_file(log_path);
    if (!log_file) {
        err << "error: cannot open " << log_path.string() << "\n";
        return false;
    }
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(log_file, line)) {
        ++line_no;
        if (line.empty()) {
            continue;
        }
        try {
            run.records.push_back(json::parse(line));
        } catch (const json::parse_error&) {
            err << "error: " << log_path.string() << " line " << line_no << ": invalid JSON\n";
            return false;
        }
    }
    std::ifstream summary_file(summary_path);
    if (!summary_file) {
        err << "error: cannot open " << summary_path.string() << "\n";
        return false;
    }
    try {
        run.summary = json::parse(summary_file);
    } catch (const json::parse_error&) {
        err << "error: " << summary_path.string() << ": invalid JSON\n";
        return false;
    }
    return true;
}

std::uint64_t total_bytes_of(const json& record) {
    std::uint64_t total = 0;
    if (record.contains("cum_bytes")) {
        for (const auto& item : record.at("cum_bytes").items()) {
            total += item.value().get<std::uint64_t>();
        }
    }
    return total;
}

}  // namespace

std::string round_record_json(const RoundRecord& record) {
    json j;
    j["round"] = record.round;
    j["mean_ce"] = record.loss.mean_ce;
    j["ppl"] = record.loss.ppl;
    j["per_client_ce"] = record.loss.per_client_ce;
    j["cum_bytes"] = record.cum_bytes;
    j["cum_flops"] = record.cum_flops;
    j["sim_time_s"] = record.sim_time_s;
    return j.dump();
}

int cmd_run(const std::string& config_path, std::optional<std::uint64_t> seed_override,
            std::optional<std::string> out_override, std::ostream& out, std::ostream& err) {
    json doc;
    {
        std::ifstream file(config_path);
        if (!file) {
            err << "error: cannot open config " << config_path << "\n";
            return kExitBadConfig;
        }
        try {
            doc = json::parse(file);
        } catch (const json::parse_error& e) {
            err << "error: config " << config_path << ": " << e.what() << "\n";
            return kExitBadConfig;
        }
    }
    RunConfig rc;
    try {
        rc = parse_run_config(doc);
        if (seed_override) {
            rc.train.seed = *seed_override;
        }
        if (out_override) {
            rc.out_dir = *out_override;
        }
        validate_config(rc.train);
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << "\n";
        return kExitBadConfig;
    }
    if (rc.train.epochs) {
        err << "warning: config field 'epochs' is accepted but unused by the round loop\n";
    }

    try {
        const TrainingLog log = run_mode(rc.train);

        const fs::path dir(rc.out_dir);
        fs::create_directories(dir);
        {
            std::ofstream log_file(dir / "log.jsonl", std::ios::trunc);
            if (!log_file) {
                throw DataError("cannot write " + (dir / "log.jsonl").string());
            }
            for (const RoundRecord& record : log.records) {
                log_file << round_record_json(record) << '\n';
            }
        }
        {
            std::ofstream summary_file(dir / "summary.json", std::ios::trunc);
            if (!summary_file) {
                throw DataError("cannot write " + (dir / "summary.json").string());
            }
            summary_file << summary_json(rc.train, log).dump(2) << '\n';
        }
        write_checkpoints(dir, log);

        out << mode_name(rc.train.mode) << ": " << log.records.size() << " rounds";
        if (!log.records.empty()) {
            out << ", final mean_ce " << log.records.back().loss.mean_ce << ", ppl "
                << log.records.back().loss.ppl;
        }
        out << ", outputs in " << dir.string() << "\n";
        return kExitOk;
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << "\n";
        return kExitBadConfig;
    } catch (const std::exception& e) {
        err << "error: training failed: " << e.what() << "\n";
        return kExitRuntime;
    }
}

int cmd_report(const std::string& run_dir, std::ostream& out, std::ostream& err) {
    LoadedRun run;
    if (!load_run_dir(run_dir, run, err)) {
        return kExitBadConfig;
    }
    out << std::left << std::setw(8) << "round" << std::setw(14) << "mean_ce" << std::setw(14)
        << "ppl" << std::setw(16) << "cum_bytes" << "sim_time_s\n";

    const fs::path csv_path = fs::path(run_dir) / "summary.csv";
    std::ofstream csv(csv_path, std::ios::trunc);
    if (!csv) {
        err << "error: cannot write " << csv_path.string() << "\n";
        return kExitBadConfig;
    }
    csv << "round,mean_ce,ppl,cum_bytes,sim_time_s\n";
    try {
        for (const json& record : run.records) {
            const int round = record.at("round").get<int>();
            const double mean_ce = record.at("mean_ce").get<double>();
            const double ppl = record.at("ppl").get<double>();
            const std::uint64_t bytes = total_bytes_of(record);
            const double sim_time = record.at("sim_time_s").get<double>();
            out << std::left << std::setw(8) << round << std::setw(14) << mean_ce
                << std::setw(14) << ppl << std::setw(16) << bytes << sim_time << "\n";
            csv << round << ',' << number_str(mean_ce) << ',' << number_str(ppl) << ',' << bytes
                << ',' << number_str(sim_time) << '\n';
        }
    } catch (const json::exception& e) {
        err << "error: malformed record in " << run_dir << ": " << e.what() << "\n";
        return kExitBadConfig;
    }
    out << "wrote " << csv_path.string() << "\n";
    return kExitOk;
}

int cmd_compare(const std::vector<std::string>& run_dirs, double threshold, std::ostream& out,
                std::ostream& err) {
    if (run_dirs.size() < 2) {
        err << "error: compare needs at least two run directories\n";
        return kExitBadConfig;
    }
    out << std::left << std::setw(28) << "run" << std::setw(10) << "rounds" << std::setw(14)
        << "final_ce" << std::setw(14) << "final_ppl" << std::setw(20) << "time_to_threshold"
        << "bytes_to_threshold\n";
    for (const std::string& dir : run_dirs) {
        LoadedRun run;
        if (!load_run_dir(dir, run, err)) {
            return kExitBadConfig;
        }
        std::string time_str = "not reached";
        std::string bytes_str = "not reached";
        try {
            for (const json& record : run.records) {
                if (record.at("mean_ce").get<double>() <= threshold) {
                    time_str = number_str(record.at("sim_time_s").get<double>());
                    bytes_str = std::to_string(total_bytes_of(record));
                    break;
                }
            }
            const json& final_ce = run.summary.at("final_mean_ce");
            const json& final_ppl = run.summary.at("final_ppl");
            out << std::left << std::setw(28) << dir << std::setw(10) << run.records.size()
                << std::setw(14) << (final_ce.is_null() ? "n/a" : number_str(final_ce.get<double>()))
                << std::setw(14)
                << (final_ppl.is_null() ? "n/a" : number_str(final_ppl.get<double>()))
                << std::setw(20) << time_str << bytes_str << "\n";
        } catch (const json::exception& e) {
            err << "error: malformed run data in " << dir << ": " << e.what() << "\n";
            return kExitBadConfig;
        }
    }
    return kExitOk;
}

}  // namespace splitlora
