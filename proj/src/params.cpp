#include "fedbn/params.hpp"

#include <cmath>
#include <limits>
#include <map>

#include "fedbn/errors.hpp"

namespace fedbn {

NetworkStructure bind_structure(const NetworkStructure& s, const std::vector<AttributeSchema>& schema) {
    std::vector<AttributeSchema> nodes;
    for (const auto& node : s.nodes()) {
        const AttributeSchema* match = nullptr;
        for (const auto& a : schema) {
            if (a.name == node.name) match = &a;
        }
        if (!match) throw SchemaError("structure node '" + node.name + "' is not in the data");
        if (without_missing_state(*match).states != without_missing_state(node).states) {
            throw SchemaError("states of '" + node.name + "' differ between structure and data");
        }
        nodes.push_back(*match);
    }
    NetworkStructure out(std::move(nodes), s.all_parents());
    out.validate();
    return out;
}

BayesianNetwork ml_parameters(const NetworkStructure& structure, CountOracle& counts, double alpha) {
    if (alpha < 0) throw DomainError("pseudocount must be non-negative");
    const NetworkStructure s = bind_structure(structure, counts.schema());
    std::vector<Cpt> cpts;
    for (size_t i = 0; i < s.size(); ++i) {
        std::vector<int> parents;
        for (int p : s.parents(i)) parents.push_back(counts.attribute_index(s.node(p).name));
        const auto table = family_counts(counts, counts.attribute_index(s.node(i).name), parents);
        Cpt cpt = uniform_cpt(s, i);
        const size_t r = cpt.cardinality;
        for (size_t j = 0; j < cpt.rows(); ++j) {
            int64_t n_j = 0;
            for (size_t k = 0; k < r; ++k) n_j += table[j * r + k];
            const double denom = static_cast<double>(n_j) + static_cast<double>(r) * alpha;
            if (denom <= 0) continue;  // stays uniform
            for (size_t k = 0; k < r; ++k) {
                cpt.probabilities[j * r + k] = (static_cast<double>(table[j * r + k]) + alpha) / denom;
            }
        }
        cpts.push_back(std::move(cpt));
    }
    return BayesianNetwork(s, std::move(cpts));
}

Dataset generate_synthetic(const BayesianNetwork& intermediate, size_t n_samples, Rng& rng) {
    const auto& s = intermediate.structure();
    Dataset out;
    for (const auto& node : s.nodes()) out.schema.push_back(without_missing_state(node));
    out.records = sample_records(intermediate, n_samples, rng);
    std::vector<int> missing_state(s.size());
    for (size_t i = 0; i < s.size(); ++i) missing_state[i] = s.node(i).missing_state();
    for (auto& rec : out.records) {
        for (size_t i = 0; i < rec.size(); ++i) {
            if (rec[i] == missing_state[i]) rec[i] = kMissing;
        }
    }
    return out;
}

namespace {

struct WeightedRecord {
    std::vector<int> cells;  // network node order
    double weight = 0;
    bool complete = true;
};

std::vector<WeightedRecord> compress(const NetworkStructure& s, const Dataset& data) {
    std::vector<int> column(s.size());
    for (size_t i = 0; i < s.size(); ++i) {
        const int c = data.attribute_index(s.node(i).name);
        if (data.schema[c].states != s.node(i).states) {
            throw SchemaError("states of '" + s.node(i).name + "' differ between structure and data");
        }
        column[i] = c;
    }
    std::map<std::vector<int>, double> tally;
    for (const auto& rec : data.records) {
        std::vector<int> cells(s.size());
        size_t missing = 0;
        for (size_t i = 0; i < s.size(); ++i) {
            cells[i] = rec[column[i]];
            missing += cells[i] == kMissing;
        }
        if (missing > kMaxMissingPerRecord) {
            throw DomainError("a record has " + std::to_string(missing) + " missing cells; at most " +
                              std::to_string(kMaxMissingPerRecord) + " are supported, consider coarser bins");
        }
        tally[std::move(cells)] += 1.0;
    }
    std::vector<WeightedRecord> out;
    for (auto& [cells, w] : tally) {
        bool complete = true;
        for (int v : cells) complete = complete && v != kMissing;
        out.push_back({cells, w, complete});
    }
    return out;
}

// Accumulates weight·indicator(completion) into the expected family counts.
void add_counts(const NetworkStructure& s, std::span<const int> full, double w, std::vector<std::vector<double>>& ec) {
    for (size_t i = 0; i < s.size(); ++i) {
        ec[i][parent_row(s, i, full) * s.node(i).cardinality() + static_cast<size_t>(full[i])] += w;
    }
}

double e_step(const BayesianNetwork& net, const std::vector<WeightedRecord>& records,
              std::vector<std::vector<double>>& ec) {
    const auto& s = net.structure();
    for (size_t i = 0; i < s.size(); ++i) std::fill(ec[i].begin(), ec[i].end(), 0.0);
    double ll = 0.0;
    std::vector<std::pair<std::vector<int>, double>> completions;
    for (const auto& rec : records) {
        if (rec.complete) {
            const double p = joint_probability(net, rec.cells);
            ll += rec.weight * std::log(p);
            add_counts(s, rec.cells, rec.weight, ec);
            continue;
        }
        completions.clear();
        double total = 0.0;
        for_each_completion(s, rec.cells, [&](const std::vector<int>& full) {
            const double p = joint_probability(net, full);
            if (p > 0) {
                completions.emplace_back(full, p);
                total += p;
            }
        });
        if (total <= 0) {
            ll = -std::numeric_limits<double>::infinity();
            continue;
        }
        ll += rec.weight * std::log(total);
        for (const auto& [full, p] : completions) add_counts(s, full, rec.weight * p / total, ec);
    }
    return ll;
}

void m_step(BayesianNetwork& net, const std::vector<std::vector<double>>& ec) {
    for (size_t i = 0; i < net.size(); ++i) {
        Cpt& cpt = net.cpt(i);
        const size_t r = cpt.cardinality;
        for (size_t j = 0; j < cpt.rows(); ++j) {
            double n_j = 0.0;
            for (size_t k = 0; k < r; ++k) n_j += ec[i][j * r + k];
            for (size_t k = 0; k < r; ++k) {
                cpt.probabilities[j * r + k] = n_j > 0 ? ec[i][j * r + k] / n_j : 1.0 / static_cast<double>(r);
            }
        }
    }
}

void dirichlet_init(BayesianNetwork& net, Rng& rng) {
    for (size_t i = 0; i < net.size(); ++i) {
        Cpt& cpt = net.cpt(i);
        for (size_t j = 0; j < cpt.rows(); ++j) {
            auto row = cpt.row(j);
            double total = 0.0;
            for (double& v : row) total += (v = rng.exponential());
            for (double& v : row) v /= total;
        }
    }
}

}  // namespace

EmResult em_train(const NetworkStructure& structure, const Dataset& data, const EmConfig& cfg) {
    if (cfg.restarts < 1) throw DomainError("EM needs at least one restart");
    if (cfg.max_iterations < 1) throw DomainError("EM needs at least one iteration");
    if (!(cfg.tolerance > 0)) throw DomainError("EM tolerance must be positive");
    const NetworkStructure s = strip_missing_states(structure);
    const auto records = compress(s, data);

    EmResult result;
    std::vector<std::vector<double>> ec(s.size());
    for (size_t i = 0; i < s.size(); ++i) ec[i].resize(s.parent_configurations(i) * s.node(i).cardinality());

    bool have_best = false;
    for (int restart = 0; restart < cfg.restarts; ++restart) {
        Rng rng(derive_seed(cfg.seed, static_cast<uint64_t>(restart)));
        BayesianNetwork net(s);
        dirichlet_init(net, rng);
        EmTrace trace;
        trace.restart = restart;
        for (int t = 0;; ++t) {
            const double ll = e_step(net, records, ec);
            trace.log_likelihood.push_back(ll);
            if (t > 0 && ll - trace.log_likelihood[t - 1] < cfg.tolerance) {
                trace.converged = true;
                break;
            }
            if (t == cfg.max_iterations) break;
            m_step(net, ec);
        }
        const double final_ll = trace.log_likelihood.back();
        if (!have_best || final_ll > result.log_likelihood) {
            have_best = true;
            result.network = net;
            result.best_restart = restart;
            result.log_likelihood = final_ll;
        }
        result.traces.push_back(std::move(trace));
    }
    return result;
}

TrainReport federated_train(CountOracle& oracle, const TrainOptions& options) {
    if (options.structure.has_value() == options.k2.has_value()) {
        throw ConfigError("give either a structure or a K2 node order, not both or neither");
    }
    const ComplexityCounter before = oracle.complexity();
    const uint64_t queries_before = oracle.queries();
    TrainReport report;
    if (options.k2) {
        ScoreLedger ledger;
        report.structure = k2_search(oracle, *options.k2, &ledger);
        report.k2_ledger = std::move(ledger);
    } else {
        report.structure = bind_structure(*options.structure, oracle.schema());
    }

    report.intermediate = ml_parameters(report.structure, oracle, options.alpha);

    const size_t n = options.n_synth ? options.n_synth : oracle.num_records();
    Rng rng(derive_seed(options.seed, 0x5e));
    const Dataset synthetic = generate_synthetic(report.intermediate, n, rng);
    report.synthetic_records = synthetic.num_records();
    report.synthetic_missing_cells = synthetic.missing_cells();
    report.synthetic_missing_rate =
        n ? static_cast<double>(report.synthetic_missing_cells) / static_cast<double>(n * synthetic.num_attributes())
          : 0.0;

    EmResult em = em_train(report.structure, synthetic, options.em);
    report.traces = std::move(em.traces);
    report.best_restart = em.best_restart;
    report.final_log_likelihood = em.log_likelihood;
    report.final_network = std::move(em.network);
    report.complexity = oracle.complexity() - before;
    report.count_queries = oracle.queries() - queries_before;
    return report;
}

}  // namespace fedbn
