#pragma once

#include <cstddef>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "fedbn/random.hpp"

namespace fedbn {

/// Cell value for a missing or unobserved state.
inline constexpr int kMissing = -1;

/// Reserved state label used when missingness is modeled as a value.
/// Data values equal to this label are escaped on ingest.
inline const std::string kMissingLabel = "<missing>";

struct AttributeSchema {
    std::string name;
    std::vector<std::string> states;

    size_t cardinality() const { return states.size(); }
    /// Index of `label`, or throws SchemaError.
    int state_index(const std::string& label) const;
    /// Index of the MISSING state, or kMissing when not modeled.
    int missing_state() const;
    bool has_missing_state() const { return missing_state() != kMissing; }
    void validate() const;

    bool operator==(const AttributeSchema&) const = default;
};

/// Copy of `attr` with the MISSING state appended (no-op when present).
AttributeSchema with_missing_state(AttributeSchema attr);
/// Copy of `attr` with the MISSING state removed.
AttributeSchema without_missing_state(AttributeSchema attr);

/// Maps a modeled state index to the cell value it matches: the MISSING
/// state maps to kMissing, every other state to itself.
inline int condition_state(const AttributeSchema& attr, int state) {
    return state == attr.missing_state() ? kMissing : state;
}

class NetworkStructure {
public:
    NetworkStructure() = default;
    explicit NetworkStructure(std::vector<AttributeSchema> nodes);
    NetworkStructure(std::vector<AttributeSchema> nodes, std::vector<std::vector<int>> parents);

    size_t size() const { return nodes_.size(); }
    const std::vector<AttributeSchema>& nodes() const { return nodes_; }
    const AttributeSchema& node(size_t i) const { return nodes_.at(i); }
    const std::vector<int>& parents(size_t i) const { return parents_.at(i); }
    const std::vector<std::vector<int>>& all_parents() const { return parents_; }

    int index_of(const std::string& name) const;
    /// Appends `parent` to the parent list of `child`; rejects cycles and duplicates.
    void add_parent(int child, int parent);
    void set_parents(int child, std::vector<int> parents);
    std::vector<int> topological_order() const;
    /// Number of joint parent configurations of node `i` (q_i).
    size_t parent_configurations(size_t i) const;
    /// Σ_i q_i·(r_i − 1).
    size_t free_parameters() const;
    void validate() const;

    /// Named edge set (parent, child), for comparing structures across node orders.
    std::vector<std::pair<std::string, std::string>> edges() const;

    bool operator==(const NetworkStructure&) const = default;

private:
    std::vector<AttributeSchema> nodes_;
    std::vector<std::vector<int>> parents_;
};

/// Conditional probability table of one node. Rows enumerate parent
/// configurations row-major over the parents in declared order (the last
/// parent varies fastest); each row holds one probability per node state.
struct Cpt {
    size_t cardinality = 0;
    std::vector<size_t> parent_cardinalities;
    std::vector<double> probabilities;

    size_t rows() const;
    std::span<double> row(size_t j) { return {probabilities.data() + j * cardinality, cardinality}; }
    std::span<const double> row(size_t j) const {
        return {probabilities.data() + j * cardinality, cardinality};
    }
    double at(size_t j, size_t k) const { return probabilities[j * cardinality + k]; }

    bool operator==(const Cpt&) const = default;
};

/// Row index for the parent states of `node` taken from a full assignment.
size_t parent_row(const NetworkStructure& s, size_t node, std::span<const int> assignment);
/// Parent states for row `j` of node `node`.
std::vector<int> parent_states_of_row(const NetworkStructure& s, size_t node, size_t j);

class BayesianNetwork {
public:
    BayesianNetwork() = default;
    /// Network with uniform CPTs.
    explicit BayesianNetwork(NetworkStructure structure);
    BayesianNetwork(NetworkStructure structure, std::vector<Cpt> cpts);

    const NetworkStructure& structure() const { return structure_; }
    size_t size() const { return structure_.size(); }
    const Cpt& cpt(size_t i) const { return cpts_.at(i); }
    Cpt& cpt(size_t i) { return cpts_.at(i); }
    const std::vector<Cpt>& cpts() const { return cpts_; }

    /// Checks CPT shapes against the structure and row sums against 1e-9.
    void validate() const;

    bool operator==(const BayesianNetwork&) const = default;

private:
    NetworkStructure structure_;
    std::vector<Cpt> cpts_;
};

Cpt uniform_cpt(const NetworkStructure& s, size_t node);

double joint_probability(const BayesianNetwork& net, std::span<const int> assignment);
double joint_probability(const BayesianNetwork& net, const std::map<std::string, std::string>& assignment);

/// P(observed cells) for a partial assignment (kMissing = unobserved),
/// summing out unobserved nodes exactly.
double marginal_probability(const BayesianNetwork& net, std::span<const int> partial);

/// Exact posterior over the states of `target` given `evidence`
/// (one entry per node, kMissing where unobserved; the target entry must be kMissing).
std::vector<double> posterior(const BayesianNetwork& net, size_t target, std::span<const int> evidence);

std::vector<int> sample_record(const BayesianNetwork& net, Rng& rng);
/// n ancestral draws, equal to n successive sample_record calls.
std::vector<std::vector<int>> sample_records(const BayesianNetwork& net, size_t n, Rng& rng);

struct LogLikelihood {
    double value = 0.0;
    /// Records whose probability under the network is zero; when non-zero, value is -inf.
    size_t zero_probability_records = 0;
    bool finite() const { return zero_probability_records == 0; }
};

/// Log-likelihood of row-major records (kMissing cells are marginalized).
LogLikelihood log_likelihood(const BayesianNetwork& net, std::span<const std::vector<int>> records);
/// log_likelihood minus the free parameter count; closer to 0 is better.
LogLikelihood aic(const BayesianNetwork& net, std::span<const std::vector<int>> records);

/// Enumerates all completions of `partial` over its kMissing cells and
/// calls fn(completion). Caller bounds the number of missing cells.
template <class Fn>
void for_each_completion(const NetworkStructure& s, std::vector<int> partial, Fn&& fn) {
    std::vector<size_t> hidden;
    for (size_t i = 0; i < partial.size(); ++i) {
        if (partial[i] == kMissing) hidden.push_back(i);
    }
    for (size_t h : hidden) partial[h] = 0;
    while (true) {
        fn(static_cast<const std::vector<int>&>(partial));
        size_t pos = hidden.size();
        while (pos > 0) {
            const size_t h = hidden[pos - 1];
            if (static_cast<size_t>(++partial[h]) < s.node(h).cardinality()) break;
            partial[h] = 0;
            --pos;
        }
        if (pos == 0) return;
    }
}

// Text format: line oriented, labels percent-escaped, probabilities %.17g.
void write_network(std::ostream& os, const BayesianNetwork& net);
void write_structure(std::ostream& os, const NetworkStructure& s);
std::string network_to_string(const BayesianNetwork& net);
std::string structure_to_string(const NetworkStructure& s);

/// Parsed network file; `cpts_present` is false for structure-only files.
struct ParsedNetwork {
    NetworkStructure structure;
    std::vector<Cpt> cpts;
    bool cpts_present = false;
    BayesianNetwork network() const;
};
ParsedNetwork read_network(std::istream& is);
ParsedNetwork network_from_string(const std::string& text);
ParsedNetwork load_network_file(const std::string& path);
void save_network_file(const std::string& path, const BayesianNetwork& net);
void save_structure_file(const std::string& path, const NetworkStructure& s);

/// Same graph with every MISSING state removed from the node schemas.
NetworkStructure strip_missing_states(const NetworkStructure& s);

}  // namespace fedbn
