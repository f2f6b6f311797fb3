#include "fedbn/k2.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "fedbn/errors.hpp"

namespace fedbn {

double k2_family_score(size_t cardinality, std::span<const int64_t> counts) {
    if (cardinality == 0) throw DomainError("family score needs at least one child state");
    if (counts.size() % cardinality != 0) throw DomainError("count table is not a multiple of the child cardinality");
    const double r = static_cast<double>(cardinality);
    const double lg_r = std::lgamma(r);
    double score = 0.0;
    for (size_t j = 0; j < counts.size() / cardinality; ++j) {
        int64_t n_j = 0;
        double row = lg_r;
        for (size_t k = 0; k < cardinality; ++k) {
            const int64_t a = counts[j * cardinality + k];
            if (a < 0) throw DomainError("negative count in family score");
            n_j += a;
            row += std::lgamma(static_cast<double>(a) + 1.0);
        }
        score += row - std::lgamma(static_cast<double>(n_j) + r);
    }
    return score;
}

std::vector<int64_t> family_counts(CountOracle& oracle, int child, std::span<const int> parents) {
    const auto& schema = oracle.schema();
    const size_t r = schema.at(child).cardinality();
    size_t q = 1;
    for (int p : parents) q *= schema.at(p).cardinality();
    std::vector<int64_t> out(q * r);
    std::vector<int> config(parents.size(), 0);
    for (size_t j = 0; j < q; ++j) {
        Conditions base;
        for (size_t i = 0; i < parents.size(); ++i) base[schema[parents[i]].name] = config[i];
        for (size_t k = 0; k < r; ++k) {
            Conditions c = base;
            c[schema[child].name] = static_cast<int>(k);
            out[j * r + k] = static_cast<int64_t>(oracle.count(c));
        }
        for (size_t i = parents.size(); i-- > 0;) {
            if (static_cast<size_t>(++config[i]) < schema[parents[i]].cardinality()) break;
            config[i] = 0;
        }
    }
    return out;
}

NetworkStructure k2_search(CountOracle& oracle, const K2Config& cfg, ScoreLedger* ledger) {
    if (cfg.max_parents < 0) throw DomainError("max_parents must be non-negative");
    const auto& schema = oracle.schema();
    if (cfg.node_order.size() != schema.size()) throw SchemaError("node order must list every attribute exactly once");
    std::vector<int> order;
    std::set<std::string> seen;
    for (const auto& name : cfg.node_order) {
        if (!seen.insert(name).second) throw SchemaError("node order repeats '" + name + "'");
        order.push_back(oracle.attribute_index(name));
    }
    const uint64_t queries_before = oracle.queries();

    std::vector<AttributeSchema> nodes;
    for (int idx : order) nodes.push_back(schema[idx]);
    NetworkStructure out(nodes);

    for (size_t pos = 0; pos < order.size(); ++pos) {
        const int child = order[pos];
        std::vector<int> parents;  // oracle indices
        double best = k2_family_score(schema[child].cardinality(), family_counts(oracle, child, parents));
        if (ledger) ledger->steps.push_back({schema[child].name, {}, best});
        while (static_cast<int>(parents.size()) < cfg.max_parents) {
            int pick = -1;
            double pick_score = best;
            for (size_t cand = 0; cand < pos; ++cand) {
                const int c = order[cand];
                if (std::find(parents.begin(), parents.end(), c) != parents.end()) continue;
                std::vector<int> trial = parents;
                trial.push_back(c);
                const double s = k2_family_score(schema[child].cardinality(), family_counts(oracle, child, trial));
                if (s > pick_score) {  // strict, so the earliest candidate keeps ties
                    pick_score = s;
                    pick = c;
                }
            }
            if (pick < 0) break;
            parents.push_back(pick);
            best = pick_score;
            if (ledger) {
                K2Step step{schema[child].name, {}, best};
                for (int p : parents) step.parents.push_back(schema[p].name);
                ledger->steps.push_back(std::move(step));
            }
        }
        std::vector<int> local;
        for (int p : parents) local.push_back(out.index_of(schema[p].name));
        out.set_parents(static_cast<int>(pos), std::move(local));
    }
    if (ledger) ledger->queries += oracle.queries() - queries_before;
    return out;
}

}  // namespace fedbn
