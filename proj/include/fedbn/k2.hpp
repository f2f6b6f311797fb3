#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fedbn/network.hpp"
#include "fedbn/runtime.hpp"

namespace fedbn {

struct K2Config {
    /// Permutation of the oracle schema's attribute names.
    std::vector<std::string> node_order;
    int max_parents = 3;
};

struct K2Step {
    std::string node;
    /// Parent set after this step, in acceptance order.
    std::vector<std::string> parents;
    double score = 0.0;
};

struct ScoreLedger {
    /// Per node: the empty-set score first, then one entry per accepted parent.
    std::vector<K2Step> steps;
    /// count() calls issued against the oracle during the search.
    uint64_t queries = 0;
};

/// Log K2 family score of a q×r count table (row j = parent configuration,
/// column k = child state): Σ_j [lnΓ(r) − lnΓ(N_j + r) + Σ_k lnΓ(a_jk + 1)].
double k2_family_score(size_t cardinality, std::span<const int64_t> counts);

/// a_jk for `child` under `parents` (indices into oracle.schema()), laid out
/// row-major in parent order, last parent fastest.
std::vector<int64_t> family_counts(CountOracle& oracle, int child, std::span<const int> parents);

/// Greedy K2. The result lists nodes in node_order with parents in the
/// order they were accepted.
NetworkStructure k2_search(CountOracle& oracle, const K2Config& cfg, ScoreLedger* ledger = nullptr);

}  // namespace fedbn
