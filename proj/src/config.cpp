#include "splitlora/config.hpp"

#include <initializer_list>
#include <string>

#include "splitlora/error.hpp"

namespace splitlora {

namespace {

using nlohmann::json;

void reject_unknown_keys(const json& obj, const char* ctx,
                         std::initializer_list<const char*> allowed) {
    for (const auto& item : obj.items()) {
        bool known = false;
        for (const char* key : allowed) {
            if (item.key() == key) {
                known = true;
                break;
            }
        }
        if (!known) {
            throw ConfigError(std::string("config: unknown key '") + item.key() + "' in " + ctx);
        }
    }
}

const json* find(const json& obj, const char* key) {
    auto it = obj.find(key);
    return it == obj.end() ? nullptr : &*it;
}

std::int64_t get_int(const json& obj, const char* ctx, const char* key, std::int64_t fallback) {
    const json* v = find(obj, key);
    if (v == nullptr) {
        return fallback;
    }
    if (!v->is_number_integer()) {
        throw ConfigError(std::string("config: '") + key + "' in " + ctx + " must be an integer");
    }
    return v->get<std::int64_t>();
}

double get_real(const json& obj, const char* ctx, const char* key, double fallback) {
    const json* v = find(obj, key);
    if (v == nullptr) {
        return fallback;
    }
    if (!v->is_number()) {
        throw ConfigError(std::string("config: '") + key + "' in " + ctx + " must be a number");
    }
    return v->get<double>();
}

std::string get_string(const json& obj, const char* ctx, const char* key,
                       const std::string& fallback) {
    const json* v = find(obj, key);
    if (v == nullptr) {
        return fallback;
    }
    if (!v->is_string()) {
        throw ConfigError(std::string("config: '") + key + "' in " + ctx + " must be a string");
    }
    return v->get<std::string>();
}

bool get_bool(const json& obj, const char* ctx, const char* key, bool fallback) {
    const json* v = find(obj, key);
    if (v == nullptr) {
        return fallback;
    }
    if (!v->is_boolean()) {
        throw ConfigError(std::string("config: '") + key + "' in " + ctx + " must be a boolean");
    }
    return v->get<bool>();
}

}  // namespace

std::string mode_name(RunMode mode) {
    switch (mode) {
        case RunMode::splitlora:
            return "splitlora";
        case RunMode::cenlora:
            return "cenlora";
        case RunMode::fedlora:
            return "fedlora";
    }
    return "unknown";
}

RunConfig parse_run_config(const json& doc) {
    if (!doc.is_object()) {
        throw ConfigError("config: document must be a JSON object");
    }
    reject_unknown_keys(doc, "the top level",
                        {"mode", "seed", "rounds", "clients", "aggregation_interval",
                         "batch_size", "client_lr", "server_lr", "cut_layer", "adapter", "model",
                         "dataset", "costs", "output", "epochs"});

    RunConfig rc;
    TrainingConfig& cfg = rc.train;

    const std::string mode = get_string(doc, "the top level", "mode", "splitlora");
    if (mode == "splitlora") {
        cfg.mode = RunMode::splitlora;
    } else if (mode == "cenlora") {
        cfg.mode = RunMode::cenlora;
    } else if (mode == "fedlora") {
        cfg.mode = RunMode::fedlora;
    } else {
        throw ConfigError("config: mode must be splitlora, cenlora or fedlora");
    }

    const std::int64_t seed = get_int(doc, "the top level", "seed", 1);
    if (seed < 0) {
        throw ConfigError("config: seed must be nonnegative");
    }
    cfg.seed = static_cast<std::uint64_t>(seed);
    cfg.rounds = static_cast<int>(get_int(doc, "the top level", "rounds", 100));
    cfg.clients = static_cast<int>(get_int(doc, "the top level", "clients", 3));
    cfg.agg_interval =
        static_cast<int>(get_int(doc, "the top level", "aggregation_interval", 1));
    cfg.batch_size = static_cast<int>(get_int(doc, "the top level", "batch_size", 8));
    cfg.client_lr = get_real(doc, "the top level", "client_lr", 0.0002);
    cfg.server_lr = get_real(doc, "the top level", "server_lr", 0.0002);
    cfg.cut_layer = static_cast<int>(get_int(doc, "the top level", "cut_layer", 4));
    if (const json* epochs = find(doc, "epochs")) {
        if (!epochs->is_number_integer()) {
            throw ConfigError("config: 'epochs' must be an integer");
        }
        cfg.epochs = epochs->get<long>();
    }

    if (const json* adapter = find(doc, "adapter")) {
        if (!adapter->is_object()) {
            throw ConfigError("config: 'adapter' must be an object");
        }
        reject_unknown_keys(*adapter, "adapter", {"rank", "alpha", "init_sigma", "sites"});
        const std::int64_t rank = get_int(*adapter, "adapter", "rank", 4);
        if (rank < 1) {
            throw ConfigError("config: adapter rank must be >= 1");
        }
        cfg.adapter.rank = static_cast<std::size_t>(rank);
        cfg.adapter.alpha =
            get_real(*adapter, "adapter", "alpha", static_cast<double>(cfg.adapter.rank));
        cfg.adapter.sigma = get_real(*adapter, "adapter", "init_sigma", 0.02);
        if (const json* sites = find(*adapter, "sites")) {
            if (!sites->is_array()) {
                throw ConfigError("config: adapter sites must be an array of strings");
            }
            for (const json& site : *sites) {
                if (!site.is_string()) {
                    throw ConfigError("config: adapter sites must be strings");
                }
                cfg.adapter.sites.push_back(site.get<std::string>());
            }
        }
    } else {
        cfg.adapter.alpha = static_cast<double>(cfg.adapter.rank);
    }

    if (const json* model = find(doc, "model")) {
        if (!model->is_object()) {
            throw ConfigError("config: 'model' must be an object");
        }
        reject_unknown_keys(*model, "model",
                            {"vocab", "seq_len", "embed_dim", "blocks", "mlp_hidden",
                             "weight_sigma"});
        cfg.model.vocab = static_cast<int>(get_int(*model, "model", "vocab", 64));
        cfg.model.seq_len = static_cast<int>(get_int(*model, "model", "seq_len", 16));
        cfg.model.embed_dim = static_cast<int>(get_int(*model, "model", "embed_dim", 32));
        cfg.model.blocks = static_cast<int>(get_int(*model, "model", "blocks", 12));
        cfg.model.mlp_hidden = static_cast<int>(get_int(*model, "model", "mlp_hidden", 64));
        cfg.model.weight_sigma = get_real(*model, "model", "weight_sigma", 0.0);
    }

    if (const json* dataset = find(doc, "dataset")) {
        if (!dataset->is_object()) {
            throw ConfigError("config: 'dataset' must be an object");
        }
        reject_unknown_keys(*dataset, "dataset",
                            {"task", "samples", "partition", "concentration",
                             "duplicate_across_clients"});
        const std::string task = get_string(*dataset, "dataset", "task", "copy_next_token");
        if (task == "copy_next_token") {
            cfg.data.task = SyntheticTask::copy_next_token;
        } else if (task == "pattern_classify") {
            cfg.data.task = SyntheticTask::pattern_classify;
        } else {
            throw ConfigError("config: task must be copy_next_token or pattern_classify");
        }
        const std::int64_t samples = get_int(*dataset, "dataset", "samples", 1536);
        if (samples < 1) {
            throw ConfigError("config: dataset samples must be >= 1");
        }
        cfg.data.samples = static_cast<std::size_t>(samples);
        const std::string part = get_string(*dataset, "dataset", "partition", "iid");
        if (part == "iid") {
            cfg.data.partition = PartitionMode::iid;
        } else if (part == "label_skew") {
            cfg.data.partition = PartitionMode::label_skew;
        } else {
            throw ConfigError("config: partition must be iid or label_skew");
        }
        cfg.data.concentration = get_real(*dataset, "dataset", "concentration", 1.0);
        cfg.data.duplicate_across_clients =
            get_bool(*dataset, "dataset", "duplicate_across_clients", false);
    }

    if (const json* costs = find(doc, "costs")) {
        if (!costs->is_object()) {
            throw ConfigError("config: 'costs' must be an object");
        }
        reject_unknown_keys(*costs, "costs",
                            {"client_flops_per_sec", "server_flops_per_sec",
                             "aggregator_flops_per_sec", "client_server_bits_per_sec",
                             "client_aggregator_bits_per_sec", "wire_bytes_per_element"});
        cfg.costs.compute.client_flops_per_sec =
            get_real(*costs, "costs", "client_flops_per_sec", 35.6e12);
        cfg.costs.compute.server_flops_per_sec =
            get_real(*costs, "costs", "server_flops_per_sec", 284.8e12);
        cfg.costs.compute.aggregator_flops_per_sec =
            get_real(*costs, "costs", "aggregator_flops_per_sec", 35.6e12);
        cfg.costs.links.client_server_bits_per_sec =
            get_real(*costs, "costs", "client_server_bits_per_sec", 600e6);
        cfg.costs.links.client_aggregator_bits_per_sec =
            get_real(*costs, "costs", "client_aggregator_bits_per_sec", 300e6);
        const std::int64_t wire = get_int(*costs, "costs", "wire_bytes_per_element", 4);
        if (wire < 1) {
            throw ConfigError("config: wire_bytes_per_element must be >= 1");
        }
        cfg.costs.wire_bytes_per_element = static_cast<std::uint64_t>(wire);
    }

    if (const json* output = find(doc, "output")) {
        if (!output->is_object()) {
            throw ConfigError("config: 'output' must be an object");
        }
        reject_unknown_keys(*output, "output", {"dir", "checkpoint_every"});
        rc.out_dir = get_string(*output, "output", "dir", rc.out_dir);
        cfg.checkpoint_every =
            static_cast<int>(get_int(*output, "output", "checkpoint_every", 0));
    }

    validate_config(cfg);
    return rc;
}

}  // namespace splitlora
