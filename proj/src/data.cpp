#include "splitlora/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <string>

#include <json.hpp>

#include "splitlora/error.hpp"

namespace splitlora {

Dataset gen_synthetic(SyntheticTask task, int vocab, int seq_len, std::size_t n, SeededRng& rng) {
    if (vocab < 2 || seq_len < 1) {
        throw ParameterError("gen_synthetic: vocab must be >= 2 and seq_len >= 1");
    }
    if (n < 1) {
        throw ParameterError("gen_synthetic: need at least one sample");
    }
    const auto v = static_cast<std::uint64_t>(vocab);
    const auto s = static_cast<std::size_t>(seq_len);
    const std::uint32_t num_classes = static_cast<std::uint32_t>(std::min(vocab, 8));
    Dataset out;
    out.vocab = vocab;
    out.seq_len = seq_len;
    out.samples.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        Sample sample;
        sample.x.resize(s);
        sample.y.resize(s);
        for (std::size_t t = 0; t < s; ++t) {
            sample.x[t] = static_cast<std::uint32_t>(rng.next_below(v));
        }
        if (task == SyntheticTask::copy_next_token) {
            for (std::size_t t = 0; t < s; ++t) {
                sample.y[t] = sample.x[(t + 1) % s];
            }
        } else {
            const std::uint32_t cls = sample.x[0] % num_classes;
            std::fill(sample.y.begin(), sample.y.end(), cls);
        }
        out.samples.push_back(std::move(sample));
    }
    return out;
}

namespace {

// Fisher-Yates over idx, descending pivot.
void shuffle_indices(std::vector<std::size_t>& idx, SeededRng& rng) {
    for (std::size_t i = idx.size(); i > 1; --i) {
        const std::size_t j = rng.next_below(i);
        std::swap(idx[i - 1], idx[j]);
    }
}

// Marsaglia-Tsang gamma sampler; shapes below 1 use the G(a) = G(a+1)*U^(1/a)
// boost.
double gamma_draw(SeededRng& rng, double alpha) {
    if (alpha < 1.0) {
        const double u = rng.next_unit();
        return gamma_draw(rng, alpha + 1.0) * std::pow(u, 1.0 / alpha);
    }
    const double d = alpha - 1.0 / 3.0;
    const double c = 1.0 / (3.0 * std::sqrt(d));
    for (;;) {
        double x = 0.0;
        double v = 0.0;
        do {
            x = rng.next_gaussian();
            v = 1.0 + c * x;
        } while (v <= 0.0);
        v = v * v * v;
        const double u = rng.next_unit();
        if (u < 1.0 - 0.0331 * x * x * x * x) {
            return d * v;
        }
        if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) {
            return d * v;
        }
    }
}

}  // namespace

std::vector<Dataset> partition(const Dataset& dataset, int n_clients, const PartitionSpec& spec,
                               SeededRng& rng) {
    if (n_clients < 1) {
        throw ParameterError("partition: need at least one client");
    }
    if (dataset.size() < static_cast<std::size_t>(n_clients)) {
        throw ParameterError("partition: dataset smaller than client count");
    }
    if (spec.mode == PartitionMode::label_skew && !(spec.concentration > 0.0)) {
        throw ParameterError("partition: concentration must be > 0 for label_skew");
    }
    const auto n = static_cast<std::size_t>(n_clients);
    std::vector<std::vector<std::size_t>> assigned(n);

    if (spec.mode == PartitionMode::iid) {
        std::vector<std::size_t> idx(dataset.size());
        std::iota(idx.begin(), idx.end(), 0);
        shuffle_indices(idx, rng);
        for (std::size_t i = 0; i < idx.size(); ++i) {
            assigned[i % n].push_back(idx[i]);
        }
    } else {
        std::map<std::uint32_t, std::vector<std::size_t>> by_class;
        for (std::size_t i = 0; i < dataset.size(); ++i) {
            if (dataset.samples[i].y.empty()) {
                throw DataError("partition: sample without labels");
            }
            by_class[dataset.samples[i].y[0]].push_back(i);
        }
        std::vector<double> proportions(n);
        for (auto& [cls, members] : by_class) {
            shuffle_indices(members, rng);
            double total = 0.0;
            for (std::size_t c = 0; c < n; ++c) {
                proportions[c] = gamma_draw(rng, spec.concentration);
                total += proportions[c];
            }
            if (total <= 0.0) {
                std::fill(proportions.begin(), proportions.end(), 1.0 / static_cast<double>(n));
                total = 1.0;
            }
            for (std::size_t c = 0; c < n; ++c) {
                proportions[c] /= total;
            }
            for (std::size_t member : members) {
                const double u = rng.next_unit();
                double cum = 0.0;
                std::size_t pick = n - 1;
                for (std::size_t c = 0; c < n; ++c) {
                    cum += proportions[c];
                    if (u < cum) {
                        pick = c;
                        break;
                    }
                }
                assigned[pick].push_back(member);
            }
        }
        // No client may end up empty.
        for (std::size_t c = 0; c < n; ++c) {
            while (assigned[c].empty()) {
                std::size_t donor = 0;
                for (std::size_t d = 1; d < n; ++d) {
                    if (assigned[d].size() > assigned[donor].size()) {
                        donor = d;
                    }
                }
                if (assigned[donor].size() <= 1) {
                    throw DataError("partition: cannot repair empty client");
                }
                assigned[c].push_back(assigned[donor].back());
                assigned[donor].pop_back();
            }
        }
    }

    std::vector<Dataset> parts(n);
    for (std::size_t c = 0; c < n; ++c) {
        parts[c].vocab = dataset.vocab;
        parts[c].seq_len = dataset.seq_len;
        parts[c].samples.reserve(assigned[c].size());
        for (std::size_t i : assigned[c]) {
            parts[c].samples.push_back(dataset.samples[i]);
        }
    }
    return parts;
}

Batch sample_minibatch(const Dataset& dataset, std::size_t b, SeededRng& rng) {
    if (b < 1 || b > dataset.size()) {
        throw ParameterError("sample_minibatch: batch size " + std::to_string(b) +
                             " outside [1, " + std::to_string(dataset.size()) + "]");
    }
    std::vector<std::size_t> idx(dataset.size());
    std::iota(idx.begin(), idx.end(), 0);
    for (std::size_t i = 0; i < b; ++i) {
        const std::size_t j = i + rng.next_below(idx.size() - i);
        std::swap(idx[i], idx[j]);
    }
    const auto s = static_cast<std::size_t>(dataset.seq_len);
    TokenGrid grid;
    grid.batch = static_cast<int>(b);
    grid.seq_len = dataset.seq_len;
    grid.ids.reserve(b * s);
    std::vector<std::uint32_t> labels;
    labels.reserve(b * s);
    for (std::size_t i = 0; i < b; ++i) {
        const Sample& sample = dataset.samples[idx[i]];
        if (sample.x.size() != s || sample.y.size() != s) {
            throw DataError("sample_minibatch: sample length mismatch");
        }
        grid.ids.insert(grid.ids.end(), sample.x.begin(), sample.x.end());
        labels.insert(labels.end(), sample.y.begin(), sample.y.end());
    }
    Batch batch;
    batch.x = std::move(grid);
    batch.labels = std::move(labels);
    batch.batch = static_cast<int>(b);
    return batch;
}

void dump_dataset_jsonl(const std::filesystem::path& path, const Dataset& dataset) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw DataError("dump_dataset_jsonl: cannot open " + path.string());
    }
    for (const Sample& sample : dataset.samples) {
        nlohmann::json line;
        line["x"] = sample.x;
        line["y"] = sample.y;
        out << line.dump() << '\n';
    }
}

Dataset load_dataset_jsonl(const std::filesystem::path& path, int vocab, int seq_len) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("load_dataset_jsonl: cannot open " + path.string());
    }
    Dataset out;
    out.vocab = vocab;
    out.seq_len = seq_len;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) {
            continue;
        }
        nlohmann::json parsed;
        try {
            parsed = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error&) {
            throw DataError("load_dataset_jsonl: parse error at line " + std::to_string(line_no));
        }
        Sample sample;
        sample.x = parsed.at("x").get<std::vector<std::uint32_t>>();
        sample.y = parsed.at("y").get<std::vector<std::uint32_t>>();
        if (sample.x.size() != static_cast<std::size_t>(seq_len) ||
            sample.y.size() != sample.x.size()) {
            throw DataError("load_dataset_jsonl: bad sample length at line " +
                            std::to_string(line_no));
        }
        for (std::uint32_t t : sample.x) {
            if (t >= static_cast<std::uint32_t>(vocab)) {
                throw DataError("load_dataset_jsonl: token out of vocab at line " +
                                std::to_string(line_no));
            }
        }
        out.samples.push_back(std::move(sample));
    }
    return out;
}

}  // namespace splitlora
