#include "splitlora/protocol.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

#include "splitlora/error.hpp"

namespace splitlora {

std::vector<LayerSpec> arch_from(const ModelConfig& model) {
    return token_stack_arch(model.vocab, model.embed_dim, model.blocks, model.mlp_hidden);
}

double effective_weight_sigma(const ModelConfig& model) {
    if (model.weight_sigma > 0.0) {
        return model.weight_sigma;
    }
    return 1.0 / std::sqrt(static_cast<double>(model.embed_dim));
}

namespace {

const char* kSiteNames[] = {"q", "k", "v", "o", "mlp_in", "mlp_out", "dense", "head"};

std::string client_entity(int client_id) {
    return "client_" + std::to_string(client_id);
}

void apply_sgd(AdapterSet& set, const AdapterGradients& grads, double lr) {
    if (lr == 0.0) {
        return;  // explicit fixed point; sgd_update itself requires gamma > 0
    }
    for (LoraAdapter& adapter : set.adapters) {
        const AdapterGradients::Entry* entry = grads.find(adapter.site_id);
        if (entry == nullptr) {
            throw StateError("apply_sgd: no gradient for site " +
                             std::to_string(adapter.site_id));
        }
        adapter = sgd_update(adapter, entry->ga, entry->gb, lr);
    }
}

std::vector<double> data_share_weights(const std::vector<ClientNode>& clients) {
    double total = 0.0;
    for (const ClientNode& c : clients) {
        total += static_cast<double>(c.data.size());
    }
    std::vector<double> weights;
    weights.reserve(clients.size());
    for (const ClientNode& c : clients) {
        weights.push_back(static_cast<double>(c.data.size()) / total);
    }
    return weights;
}

}  // namespace

void validate_config(const TrainingConfig& config) {
    if (config.clients < 1) {
        throw ConfigError("config: clients must be >= 1");
    }
    if (config.rounds < 0) {
        throw ConfigError("config: rounds must be >= 0");
    }
    if (config.agg_interval < 1) {
        throw ConfigError("config: aggregation_interval must be >= 1");
    }
    if (config.batch_size < 1) {
        throw ConfigError("config: batch_size must be >= 1");
    }
    if (!(config.client_lr >= 0.0) || !(config.server_lr >= 0.0)) {
        throw ConfigError("config: learning rates must be >= 0");
    }
    if (config.checkpoint_every < 0) {
        throw ConfigError("config: checkpoint_every must be >= 0");
    }
    const ModelConfig& m = config.model;
    if (m.vocab < 2 || m.seq_len < 1 || m.embed_dim < 1 || m.blocks < 1 || m.mlp_hidden < 1) {
        throw ConfigError("config: model dimensions out of range");
    }
    if (!(m.weight_sigma >= 0.0)) {
        throw ConfigError("config: weight_sigma must be >= 0");
    }
    const int total_layers = m.blocks + 2;  // embedding + blocks + head
    if (config.cut_layer < 1 || config.cut_layer > total_layers - 1) {
        throw ConfigError("config: cut_layer " + std::to_string(config.cut_layer) +
                          " outside [1, " + std::to_string(total_layers - 1) + "]");
    }
    const AdapterConfig& a = config.adapter;
    if (a.rank < 1) {
        throw ConfigError("config: adapter rank must be >= 1");
    }
    if (!(a.sigma >= 0.0)) {
        throw ConfigError("config: adapter sigma must be >= 0");
    }
    if (!std::isfinite(a.alpha / static_cast<double>(a.rank))) {
        throw ConfigError("config: adapter alpha/rank must be finite");
    }
    for (const std::string& name : a.sites) {
        if (std::find(std::begin(kSiteNames), std::end(kSiteNames), name) ==
            std::end(kSiteNames)) {
            throw ConfigError("config: unknown adapter site '" + name + "'");
        }
    }
    const auto arch = arch_from(m);
    bool any_site = false;
    for (const WeightSite& site : enumerate_sites(arch, 0, total_layers)) {
        if (!a.sites.empty() &&
            std::find(a.sites.begin(), a.sites.end(), site.name) == a.sites.end()) {
            continue;
        }
        any_site = true;
        if (a.rank > std::min(site.d, site.m)) {
            throw ConfigError("config: rank " + std::to_string(a.rank) +
                              " exceeds min dim of site '" + site.name + "' (" +
                              std::to_string(std::min(site.d, site.m)) + ")");
        }
    }
    if (!any_site) {
        throw ConfigError("config: adapter site list selects no sites");
    }
    const DataConfig& d = config.data;
    if (d.samples < 1) {
        throw ConfigError("config: dataset needs at least one sample");
    }
    if (!d.duplicate_across_clients && d.samples < static_cast<std::size_t>(config.clients)) {
        throw ConfigError("config: fewer samples than clients");
    }
    if (d.partition == PartitionMode::label_skew && !(d.concentration > 0.0)) {
        throw ConfigError("config: concentration must be > 0 for label_skew");
    }
    const CostConfig& c = config.costs;
    if (!(c.compute.client_flops_per_sec > 0.0) || !(c.compute.server_flops_per_sec > 0.0) ||
        !(c.compute.aggregator_flops_per_sec > 0.0)) {
        throw ConfigError("config: compute rates must be positive");
    }
    if (!(c.links.client_server_bits_per_sec > 0.0) ||
        !(c.links.client_aggregator_bits_per_sec > 0.0)) {
        throw ConfigError("config: link rates must be positive");
    }
    if (c.wire_bytes_per_element < 1) {
        throw ConfigError("config: wire_bytes_per_element must be >= 1");
    }
}

std::uint64_t Transport::send(Message message, int round) {
    const std::uint64_t bytes = payload_bytes(message, wire_bytes_);
    MessageEvent event;
    event.round = round;
    event.link = message.link_id;
    event.bytes = bytes;
    if (const auto* act = std::get_if<ActivationsMsg>(&message.payload)) {
        event.kind = 'A';
        event.client_id = act->client_id;
    } else if (const auto* grads = std::get_if<ActivationGradsMsg>(&message.payload)) {
        event.kind = 'G';
        event.client_id = grads->client_id;
    } else if (const auto* up = std::get_if<AdapterUploadMsg>(&message.payload)) {
        event.kind = 'U';
        event.client_id = up->client_id;
    } else {
        event.kind = 'B';
    }
    events_.push_back(std::move(event));
    if (ledger_ != nullptr) {
        ledger_->add_bytes(message.link_id, bytes);
    }
    queue_.push_back(std::move(message));
    return bytes;
}

Message Transport::receive() {
    if (queue_.empty()) {
        throw StateError("Transport::receive: queue is empty");
    }
    Message msg = std::move(queue_.front());
    queue_.pop_front();
    return msg;
}

RoundOutcome run_round(int t, std::vector<ClientNode>& clients, ServerNode& server,
                       Transport& transport, const ProtocolContext& ctx) {
    if (t < 1) {
        throw ParameterError("run_round: round index must be >= 1");
    }
    if (ctx.model == nullptr || ctx.config == nullptr) {
        throw StateError("run_round: missing protocol context");
    }
    if (clients.empty() || ctx.weights.size() != clients.size()) {
        throw StructureError("run_round: weights do not match client count");
    }
    const TrainingConfig& cfg = *ctx.config;
    const SplitModel& model = *ctx.model;
    const auto client_layers = model.client_layers();
    const auto server_layers = model.server_layers();

    RoundOutcome outcome;
    RoundTrace& trace = outcome.trace;

    // a1 client-side forward (logically parallel), a2 activation uplink
    std::vector<ForwardCache> caches(clients.size());
    for (std::size_t i = 0; i < clients.size(); ++i) {
        ClientNode& client = clients[i];
        Batch batch = sample_minibatch(client.data, static_cast<std::size_t>(cfg.batch_size),
                                       client.batch_rng);
        ClientPass pass = client_forward(model, client.adapters, batch.x);
        caches[i] = std::move(pass.cache);
        const std::size_t rows = pass.activations.rows();
        trace.client_forward_flops.push_back(
            flops_of_pass(client_layers, rows, PassDirection::forward));
        trace.client_backward_flops.push_back(
            flops_of_pass(client_layers, rows, PassDirection::backward));
        Message msg{client_server_link(client.client_id),
                    ActivationsMsg{client.client_id, t, std::move(pass.activations),
                                   std::move(batch.labels)}};
        trace.uplink_bytes.push_back(transport.send(std::move(msg), t));
    }

    // a3 server-side forward, loss, backward and adapter update
    std::vector<Matrix> act_parts;
    std::vector<std::uint32_t> labels;
    std::vector<LossSlice> slices;
    ConcatActivations concat;
    std::size_t row_at = 0;
    for (std::size_t i = 0; i < clients.size(); ++i) {
        Message msg = transport.receive();
        auto* act = std::get_if<ActivationsMsg>(&msg.payload);
        if (act == nullptr || act->client_id != clients[i].client_id) {
            throw StateError("run_round: unexpected message in the activation phase");
        }
        const std::size_t rows = act->s.rows();
        slices.push_back({act->client_id, row_at, row_at + rows, ctx.weights[i]});
        row_at += rows;
        labels.insert(labels.end(), act->labels.begin(), act->labels.end());
        concat.rows_per_client.push_back(rows);
        act_parts.push_back(std::move(act->s));
    }
    concat.s = vstack(act_parts);
    ServerPass spass = server_forward(model, server.adapters, concat);
    auto [report, g_logits] = compute_loss(spass.logits, labels, slices);
    trace.server_flops =
        flops_of_pass(server_layers, concat.s.rows(), PassDirection::forward) +
        flops_of_pass(server_layers, concat.s.rows(), PassDirection::backward);
    ServerBackwardResult sback = server_backward(model, server.adapters, spass.cache, g_logits);
    apply_sgd(server.adapters, sback.grads, server.lr);

    // a4 activation-gradient downlink
    for (std::size_t i = 0; i < clients.size(); ++i) {
        Message msg{client_server_link(clients[i].client_id),
                    ActivationGradsMsg{clients[i].client_id, t, std::move(sback.ds[i])}};
        trace.downlink_bytes.push_back(transport.send(std::move(msg), t));
    }

    // a5 client-side backward and adapter update
    for (std::size_t i = 0; i < clients.size(); ++i) {
        Message msg = transport.receive();
        auto* grads_msg = std::get_if<ActivationGradsMsg>(&msg.payload);
        if (grads_msg == nullptr || grads_msg->client_id != clients[i].client_id) {
            throw StateError("run_round: unexpected message in the gradient phase");
        }
        AdapterGradients grads =
            client_backward(model, clients[i].adapters, caches[i], grads_msg->ds);
        apply_sgd(clients[i].adapters, grads, clients[i].lr);
    }

    outcome.loss = std::move(report);
    return outcome;
}

AdapterSet run_aggregation(int t, std::vector<ClientNode>& clients, AggregatorNode& aggregator,
                           Transport& transport, const ProtocolContext& ctx, RoundTrace* trace) {
    if (clients.empty() || ctx.weights.size() != clients.size()) {
        throw StructureError("run_aggregation: weights do not match client count");
    }
    RoundTrace::Aggregation agg;

    // b1 adapter upload
    for (ClientNode& client : clients) {
        Message msg{client_aggregator_link(client.client_id),
                    AdapterUploadMsg{client.client_id, t, client.adapters}};
        agg.upload_bytes.push_back(transport.send(std::move(msg), t));
    }
    std::vector<AdapterSet> sets;
    sets.reserve(clients.size());
    for (std::size_t i = 0; i < clients.size(); ++i) {
        Message msg = transport.receive();
        auto* up = std::get_if<AdapterUploadMsg>(&msg.payload);
        if (up == nullptr || up->client_id != clients[i].client_id) {
            throw StateError("run_aggregation: unexpected message in the upload phase");
        }
        sets.push_back(std::move(up->set));
    }

    // b2 separate weighted averaging of the decomposition matrices
    AdapterSet aggregate_set = aggregate(sets, ctx.weights);
    aggregator.last_aggregate = aggregate_set;
    aggregator.last_round = t;
    agg.aggregator_flops = 0;  // averaging cost is not modeled

    // b3 broadcast; clients adopt the aggregate as their next initial set
    for (ClientNode& client : clients) {
        Message msg{client_aggregator_link(client.client_id),
                    AdapterBroadcastMsg{t, aggregate_set}};
        agg.broadcast_bytes.push_back(transport.send(std::move(msg), t));
    }
    for (ClientNode& client : clients) {
        Message msg = transport.receive();
        auto* down = std::get_if<AdapterBroadcastMsg>(&msg.payload);
        if (down == nullptr) {
            throw StateError("run_aggregation: unexpected message in the broadcast phase");
        }
        client.adapters = std::move(down->set);
    }
    if (trace != nullptr) {
        trace->aggregation = std::move(agg);
    }
    return aggregate_set;
}

TrainingLog run_training(const TrainingConfig& config) {
    validate_config(config);
    const SeededRng root(config.seed);
    SeededRng data_rng = root.derive(kStreamDataset);
    SeededRng part_rng = root.derive(kStreamPartition);
    SeededRng model_rng = root.derive(kStreamModel);
    const SeededRng adapter_rng = root.derive(kStreamAdapters);

    Dataset full = gen_synthetic(config.data.task, config.model.vocab, config.model.seq_len,
                                 config.data.samples, data_rng);
    std::vector<Dataset> parts;
    if (config.data.duplicate_across_clients) {
        parts.assign(static_cast<std::size_t>(config.clients), full);
    } else {
        parts = partition(full, config.clients,
                          {config.data.partition, config.data.concentration}, part_rng);
    }
    for (const Dataset& part : parts) {
        if (part.size() < static_cast<std::size_t>(config.batch_size)) {
            throw ConfigError("config: a client partition is smaller than batch_size");
        }
    }

    auto base = std::make_shared<const BaseModel>(
        build_model(arch_from(config.model), config.model.vocab, config.model.seq_len,
                    effective_weight_sigma(config.model), model_rng));
    const SplitModel model = split(base, config.cut_layer);
    const AdapterSet client_template =
        init_adapter_set(*base, 0, config.cut_layer, config.adapter.rank, config.adapter.alpha,
                         config.adapter.sigma, adapter_rng, config.adapter.sites);
    AdapterSet server_set =
        init_adapter_set(*base, config.cut_layer, base->layer_count(), config.adapter.rank,
                         config.adapter.alpha, config.adapter.sigma, adapter_rng,
                         config.adapter.sites);

    std::vector<ClientNode> clients;
    clients.reserve(static_cast<std::size_t>(config.clients));
    for (int i = 0; i < config.clients; ++i) {
        ClientNode node;
        node.client_id = i;
        node.data = std::move(parts[static_cast<std::size_t>(i)]);
        node.adapters = client_template;
        node.batch_rng = root.derive(kStreamClientBatchBase + static_cast<std::uint64_t>(i));
        node.lr = config.client_lr;
        clients.push_back(std::move(node));
    }
    ServerNode server{std::move(server_set), config.server_lr};
    AggregatorNode aggregator;
    const std::vector<double> weights = data_share_weights(clients);

    CostLedger ledger;
    ledger.add_flops("server", 0);
    ledger.add_flops("aggregator", 0);
    for (const ClientNode& c : clients) {
        ledger.add_flops(client_entity(c.client_id), 0);
        ledger.add_bytes(client_server_link(c.client_id), 0);
        ledger.add_bytes(client_aggregator_link(c.client_id), 0);
    }
    Transport transport(&ledger, config.costs.wire_bytes_per_element);
    const ProtocolContext ctx{&model, &config, weights};

    TrainingLog log;
    log.trainable_client = count_trainable(client_template);
    log.trainable_server = count_trainable(server.adapters);

    auto snapshot = [&](int round) {
        CheckpointSnapshot snap;
        snap.round = round;
        for (const ClientNode& c : clients) {
            snap.client_sets.push_back(c.adapters);
        }
        snap.server_set = server.adapters;
        log.checkpoints.push_back(std::move(snap));
    };

    for (int t = 1; t <= config.rounds; ++t) {
        RoundOutcome outcome = run_round(t, clients, server, transport, ctx);
        if (t % config.agg_interval == 0) {
            run_aggregation(t, clients, aggregator, transport, ctx, &outcome.trace);
        }
        for (std::size_t i = 0; i < clients.size(); ++i) {
            ledger.add_flops(client_entity(clients[i].client_id),
                             outcome.trace.client_forward_flops[i] +
                                 outcome.trace.client_backward_flops[i]);
        }
        ledger.add_flops("server", outcome.trace.server_flops);
        if (outcome.trace.aggregation) {
            ledger.add_flops("aggregator", outcome.trace.aggregation->aggregator_flops);
        }
        ledger.advance_time(round_latency(outcome.trace, config.costs.compute, config.costs.links));
        log.records.push_back(
            {t, std::move(outcome.loss), ledger.bytes, ledger.flops, ledger.sim_time_s});
        if (config.checkpoint_every > 0 && t % config.checkpoint_every == 0) {
            snapshot(t);
        }
    }
    snapshot(config.rounds);
    for (const ClientNode& c : clients) {
        log.client_adapters.push_back(c.adapters);
    }
    log.server_adapters = server.adapters;
    log.message_events = transport.events();
    return log;
}

TrainingLog run_baseline_cenlora(const TrainingConfig& config) {
    validate_config(config);
    const SeededRng root(config.seed);
    SeededRng data_rng = root.derive(kStreamDataset);
    SeededRng model_rng = root.derive(kStreamModel);
    const SeededRng adapter_rng = root.derive(kStreamAdapters);

    Dataset full = gen_synthetic(config.data.task, config.model.vocab, config.model.seq_len,
                                 config.data.samples, data_rng);
    if (full.size() < static_cast<std::size_t>(config.batch_size)) {
        throw ConfigError("config: dataset is smaller than batch_size");
    }
    auto base = std::make_shared<const BaseModel>(
        build_model(arch_from(config.model), config.model.vocab, config.model.seq_len,
                    effective_weight_sigma(config.model), model_rng));
    const int layer_count = base->layer_count();
    AdapterSet set = init_adapter_set(*base, 0, layer_count, config.adapter.rank,
                                      config.adapter.alpha, config.adapter.sigma, adapter_rng,
                                      config.adapter.sites);
    SeededRng batch_rng = root.derive(kStreamClientBatchBase);

    CostLedger ledger;
    ledger.add_flops(client_entity(0), 0);
    const std::span<const LayerSpec> layers{base->layers()};

    TrainingLog log;
    log.trainable_client = count_trainable(set);

    auto snapshot = [&](int round) {
        CheckpointSnapshot snap;
        snap.round = round;
        snap.client_sets.push_back(set);
        log.checkpoints.push_back(std::move(snap));
    };

    for (int t = 1; t <= config.rounds; ++t) {
        Batch batch =
            sample_minibatch(full, static_cast<std::size_t>(config.batch_size), batch_rng);
        auto [logits, cache] = forward_layers(*base, 0, layer_count, set, batch.x);
        const LossSlice slice{0, 0, logits.rows(), 1.0};
        auto [report, g_logits] = compute_loss(logits, batch.labels, {&slice, 1});
        LayerRangeBackward bw = backward_layers(*base, set, cache, g_logits);
        apply_sgd(set, bw.grads, config.client_lr);

        const std::uint64_t flops =
            flops_of_pass(layers, logits.rows(), PassDirection::forward) +
            flops_of_pass(layers, logits.rows(), PassDirection::backward);
        ledger.add_flops(client_entity(0), flops);
        ledger.advance_time(static_cast<double>(flops) /
                            config.costs.compute.client_flops_per_sec);
        log.records.push_back(
            {t, std::move(report), ledger.bytes, ledger.flops, ledger.sim_time_s});
        if (config.checkpoint_every > 0 && t % config.checkpoint_every == 0) {
            snapshot(t);
        }
    }
    snapshot(config.rounds);
    log.client_adapters.push_back(std::move(set));
    return log;
}

TrainingLog run_baseline_fedlora(const TrainingConfig& config) {
    validate_config(config);
    const SeededRng root(config.seed);
    SeededRng data_rng = root.derive(kStreamDataset);
    SeededRng part_rng = root.derive(kStreamPartition);
    SeededRng model_rng = root.derive(kStreamModel);
    const SeededRng adapter_rng = root.derive(kStreamAdapters);

    Dataset full = gen_synthetic(config.data.task, config.model.vocab, config.model.seq_len,
                                 config.data.samples, data_rng);
    std::vector<Dataset> parts;
    if (config.data.duplicate_across_clients) {
        parts.assign(static_cast<std::size_t>(config.clients), full);
    } else {
        parts = partition(full, config.clients,
                          {config.data.partition, config.data.concentration}, part_rng);
    }
    for (const Dataset& part : parts) {
        if (part.size() < static_cast<std::size_t>(config.batch_size)) {
            throw ConfigError("config: a client partition is smaller than batch_size");
        }
    }
    auto base = std::make_shared<const BaseModel>(
        build_model(arch_from(config.model), config.model.vocab, config.model.seq_len,
                    effective_weight_sigma(config.model), model_rng));
    const int layer_count = base->layer_count();
    const AdapterSet full_template =
        init_adapter_set(*base, 0, layer_count, config.adapter.rank, config.adapter.alpha,
                         config.adapter.sigma, adapter_rng, config.adapter.sites);

    std::vector<ClientNode> clients;
    for (int i = 0; i < config.clients; ++i) {
        ClientNode node;
        node.client_id = i;
        node.data = std::move(parts[static_cast<std::size_t>(i)]);
        node.adapters = full_template;
        node.batch_rng = root.derive(kStreamClientBatchBase + static_cast<std::uint64_t>(i));
        node.lr = config.client_lr;
        clients.push_back(std::move(node));
    }
    const std::vector<double> weights = data_share_weights(clients);

    CostLedger ledger;
    for (const ClientNode& c : clients) {
        ledger.add_flops(client_entity(c.client_id), 0);
        ledger.add_bytes(client_server_link(c.client_id), 0);
    }
    Transport transport(&ledger, config.costs.wire_bytes_per_element);
    const std::span<const LayerSpec> layers{base->layers()};

    TrainingLog log;
    log.trainable_client = count_trainable(full_template);

    auto snapshot = [&](int round) {
        CheckpointSnapshot snap;
        snap.round = round;
        for (const ClientNode& c : clients) {
            snap.client_sets.push_back(c.adapters);
        }
        log.checkpoints.push_back(std::move(snap));
    };

    for (int t = 1; t <= config.rounds; ++t) {
        // Local full-model fine-tuning, one mini-batch per client.
        LossReport report;
        double weighted_ce = 0.0;
        std::size_t total_rows = 0;
        std::vector<std::size_t> rows_per_client;
        double max_compute_s = 0.0;
        for (ClientNode& client : clients) {
            Batch batch = sample_minibatch(client.data,
                                           static_cast<std::size_t>(config.batch_size),
                                           client.batch_rng);
            auto [logits, cache] = forward_layers(*base, 0, layer_count, client.adapters, batch.x);
            const LossSlice slice{client.client_id, 0, logits.rows(), 1.0};
            auto [local, g_logits] = compute_loss(logits, batch.labels, {&slice, 1});
            LayerRangeBackward bw = backward_layers(*base, client.adapters, cache, g_logits);
            apply_sgd(client.adapters, bw.grads, client.lr);

            const std::uint64_t flops =
                flops_of_pass(layers, logits.rows(), PassDirection::forward) +
                flops_of_pass(layers, logits.rows(), PassDirection::backward);
            ledger.add_flops(client_entity(client.client_id), flops);
            max_compute_s = std::max(max_compute_s, static_cast<double>(flops) /
                                                        config.costs.compute.client_flops_per_sec);
            report.per_client_ce.push_back(local.mean_ce);
            rows_per_client.push_back(logits.rows());
            total_rows += logits.rows();
        }
        for (std::size_t i = 0; i < clients.size(); ++i) {
            weighted_ce += (static_cast<double>(rows_per_client[i]) /
                            static_cast<double>(total_rows)) *
                           report.per_client_ce[i];
        }
        report.mean_ce = weighted_ce;
        report.ppl = std::exp(weighted_ce);

        double latency = max_compute_s;
        if (t % config.agg_interval == 0) {
            // Adapter aggregation on the central server over the
            // client-server links.
            std::vector<std::uint64_t> upload_bytes;
            for (ClientNode& client : clients) {
                Message msg{client_server_link(client.client_id),
                            AdapterUploadMsg{client.client_id, t, client.adapters}};
                upload_bytes.push_back(transport.send(std::move(msg), t));
            }
            std::vector<AdapterSet> sets;
            for (std::size_t i = 0; i < clients.size(); ++i) {
                Message msg = transport.receive();
                auto* up = std::get_if<AdapterUploadMsg>(&msg.payload);
                if (up == nullptr) {
                    throw StateError("fedlora: unexpected message in the upload phase");
                }
                sets.push_back(std::move(up->set));
            }
            AdapterSet aggregate_set = aggregate(sets, weights);
            std::vector<std::uint64_t> broadcast_bytes;
            for (ClientNode& client : clients) {
                Message msg{client_server_link(client.client_id),
                            AdapterBroadcastMsg{t, aggregate_set}};
                broadcast_bytes.push_back(transport.send(std::move(msg), t));
            }
            for (ClientNode& client : clients) {
                Message msg = transport.receive();
                auto* down = std::get_if<AdapterBroadcastMsg>(&msg.payload);
                if (down == nullptr) {
                    throw StateError("fedlora: unexpected message in the broadcast phase");
                }
                client.adapters = std::move(down->set);
            }
            double up_s = 0.0;
            double down_s = 0.0;
            for (std::size_t i = 0; i < clients.size(); ++i) {
                up_s = std::max(up_s, static_cast<double>(upload_bytes[i]) * 8.0 /
                                          config.costs.links.client_server_bits_per_sec);
                down_s = std::max(down_s, static_cast<double>(broadcast_bytes[i]) * 8.0 /
                                              config.costs.links.client_server_bits_per_sec);
            }
            latency += up_s + down_s;
        }
        ledger.advance_time(latency);
        log.records.push_back(
            {t, std::move(report), ledger.bytes, ledger.flops, ledger.sim_time_s});
        if (config.checkpoint_every > 0 && t % config.checkpoint_every == 0) {
            snapshot(t);
        }
    }
    snapshot(config.rounds);
    for (const ClientNode& c : clients) {
        log.client_adapters.push_back(c.adapters);
    }
    log.message_events = transport.events();
    return log;
}

TrainingLog run_mode(const TrainingConfig& config) {
    switch (config.mode) {
        case RunMode::splitlora:
            return run_training(config);
        case RunMode::cenlora:
            return run_baseline_cenlora(config);
        case RunMode::fedlora:
            return run_baseline_fedlora(config);
    }
    throw ConfigError("run_mode: unknown mode");
}

}  // namespace splitlora
