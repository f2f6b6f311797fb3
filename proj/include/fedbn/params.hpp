#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "fedbn/dataset.hpp"
#include "fedbn/k2.hpp"
#include "fedbn/network.hpp"
#include "fedbn/runtime.hpp"

namespace fedbn {

/// Replaces each node schema with the schema of the same-named attribute in
/// `schema`. Throws SchemaError when a node is absent or its ordinary states
/// differ.
NetworkStructure bind_structure(const NetworkStructure& s, const std::vector<AttributeSchema>& schema);

/// Maximum-likelihood CPTs from counts: (N(x, y) + α) / (N(y) + r·α), with
/// N(y) obtained by summing over x; a zero denominator yields a uniform row.
BayesianNetwork ml_parameters(const NetworkStructure& s, CountOracle& counts, double alpha = 0.0);

/// Ancestral sampling; sampled MISSING states become missing cells and the
/// returned schema carries no MISSING state.
Dataset generate_synthetic(const BayesianNetwork& intermediate, size_t n_samples, Rng& rng);

struct EmConfig {
    int restarts = 5;
    int max_iterations = 100;
    double tolerance = 1e-6;
    uint64_t seed = 0;
};

struct EmTrace {
    int restart = 0;
    /// Log-likelihood of the parameters in force at each iteration.
    std::vector<double> log_likelihood;
    bool converged = false;
};

struct EmResult {
    BayesianNetwork network;
    std::vector<EmTrace> traces;
    int best_restart = 0;
    double log_likelihood = 0.0;
};

inline constexpr size_t kMaxMissingPerRecord = 20;

/// EM with flat-Dirichlet restarts. The structure's MISSING states are
/// dropped; data columns are matched to nodes by name.
EmResult em_train(const NetworkStructure& structure, const Dataset& data, const EmConfig& cfg);

struct TrainOptions {
    /// Exactly one of structure / k2 must be set.
    std::optional<NetworkStructure> structure;
    std::optional<K2Config> k2;
    /// 0 means "as many as the oracle has records".
    size_t n_synth = 0;
    EmConfig em;
    double alpha = 0.0;
    uint64_t seed = 0;
};

struct TrainReport {
    NetworkStructure structure;  // with MISSING states where modeled
    std::optional<ScoreLedger> k2_ledger;
    BayesianNetwork intermediate;
    size_t synthetic_records = 0;
    size_t synthetic_missing_cells = 0;
    double synthetic_missing_rate = 0.0;
    std::vector<EmTrace> traces;
    int best_restart = 0;
    double final_log_likelihood = 0.0;
    BayesianNetwork final_network;
    ComplexityCounter complexity;
    uint64_t count_queries = 0;
};

/// Missing-as-value ML over the oracle, synthetic sampling from that
/// intermediate model, then EM on the synthetic records.
TrainReport federated_train(CountOracle& oracle, const TrainOptions& options);

}  // namespace fedbn
