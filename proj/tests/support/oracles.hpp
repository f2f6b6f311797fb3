#pragma once

// Reference computations the library is checked against. Each one is
// written from the definitions, without calling the routine it verifies.

#include <boost/multiprecision/cpp_int.hpp>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fedbn/dataset.hpp"
#include "fedbn/network.hpp"
#include "fedbn/random.hpp"

namespace oracle {

using fedbn::BayesianNetwork;
using fedbn::Dataset;

/// Product of CPT lookups, computing each row index from scratch.
inline double joint(const BayesianNetwork& net, const std::vector<int>& x) {
    double p = 1.0;
    const auto& s = net.structure();
    for (size_t i = 0; i < s.size(); ++i) {
        size_t row = 0;
        size_t stride = 1;
        const auto& ps = s.parents(i);
        for (size_t k = ps.size(); k-- > 0;) {
            row += stride * static_cast<size_t>(x[ps[k]]);
            stride *= s.node(ps[k]).cardinality();
        }
        p *= net.cpt(i).probabilities[row * s.node(i).cardinality() + static_cast<size_t>(x[i])];
    }
    return p;
}

/// Calls fn on every full assignment of the network's nodes.
template <class Fn>
void each_assignment(const BayesianNetwork& net, Fn&& fn) {
    const auto& s = net.structure();
    std::vector<int> x(s.size(), 0);
    while (true) {
        fn(x);
        size_t i = 0;
        for (; i < x.size(); ++i) {
            if (static_cast<size_t>(++x[i]) < s.node(i).cardinality()) break;
            x[i] = 0;
        }
        if (i == x.size()) return;
    }
}

/// Posterior of `target` by summing the full joint table.
inline std::vector<double> posterior(const BayesianNetwork& net, size_t target, const std::vector<int>& evidence) {
    std::vector<double> out(net.structure().node(target).cardinality(), 0.0);
    each_assignment(net, [&](const std::vector<int>& x) {
        for (size_t i = 0; i < x.size(); ++i) {
            if (evidence[i] != fedbn::kMissing && evidence[i] != x[i]) return;
        }
        out[x[target]] += joint(net, x);
    });
    double total = 0;
    for (double v : out) total += v;
    for (double& v : out) v /= total;
    return out;
}

/// P(observed cells), by the full joint table.
inline double marginal(const BayesianNetwork& net, const std::vector<int>& partial) {
    double total = 0;
    each_assignment(net, [&](const std::vector<int>& x) {
        for (size_t i = 0; i < x.size(); ++i) {
            if (partial[i] != fedbn::kMissing && partial[i] != x[i]) return;
        }
        total += joint(net, x);
    });
    return total;
}

/// Σ_r Π_p v_p[r] in plain integers.
inline uint64_t dot(const std::vector<std::vector<uint8_t>>& vectors) {
    uint64_t total = 0;
    for (size_t r = 0; r < vectors[0].size(); ++r) {
        uint64_t prod = 1;
        for (const auto& v : vectors) prod *= v[r];
        total += prod;
    }
    return total;
}

/// Records matching every (attribute name → cell value) condition, where a
/// value of kMissing matches missing cells.
inline uint64_t filter_count(const Dataset& ds, const std::map<std::string, int>& conditions,
                             const std::vector<size_t>* rows = nullptr) {
    uint64_t n = 0;
    auto test = [&](const std::vector<int>& rec) {
        for (const auto& [name, value] : conditions) {
            size_t c = 0;
            while (ds.schema[c].name != name) ++c;
            if (rec[c] != value) return false;
        }
        return true;
    };
    if (rows) {
        for (size_t r : *rows) n += test(ds.records[r]);
    } else {
        for (const auto& rec : ds.records) n += test(rec);
    }
    return n;
}

/// Fraction of positive/negative pairs ordered correctly, ties counting half.
inline double concordant_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    double good = 0;
    double pairs = 0;
    for (size_t i = 0; i < scores.size(); ++i) {
        if (labels[i] != 1) continue;
        for (size_t j = 0; j < scores.size(); ++j) {
            if (labels[j] == 1) continue;
            pairs += 1;
            if (scores[i] > scores[j]) good += 1;
            if (scores[i] == scores[j]) good += 0.5;
        }
    }
    return good / pairs;
}

using boost::multiprecision::cpp_int;

inline cpp_int factorial(unsigned n) {
    cpp_int f = 1;
    for (unsigned k = 2; k <= n; ++k) f *= k;
    return f;
}

inline double big_log(const cpp_int& v) {
    const unsigned bits = static_cast<unsigned>(boost::multiprecision::msb(v));
    if (bits < 60) return std::log(v.convert_to<double>());
    const unsigned shift = bits - 60;
    const cpp_int top = v >> shift;
    return std::log(top.convert_to<double>()) + shift * std::log(2.0);
}

/// log of Π_j (r−1)!/(N_j + r − 1)! Π_k a_jk! with exact integers.
inline double k2_score(size_t r, const std::vector<int64_t>& counts) {
    cpp_int num = 1;
    cpp_int den = 1;
    for (size_t j = 0; j < counts.size() / r; ++j) {
        unsigned n_j = 0;
        for (size_t k = 0; k < r; ++k) {
            n_j += static_cast<unsigned>(counts[j * r + k]);
            num *= factorial(static_cast<unsigned>(counts[j * r + k]));
        }
        num *= factorial(static_cast<unsigned>(r - 1));
        den *= factorial(n_j + static_cast<unsigned>(r) - 1);
    }
    return big_log(num) - big_log(den);
}

// ---- random instances ----------------------------------------------------

/// Random DAG over n nodes with 2..max_states states; parents only from
/// earlier nodes, at most max_parents each; CPT rows from a flat Dirichlet.
inline BayesianNetwork random_network(size_t n, fedbn::Rng& rng, size_t max_states = 3, size_t max_parents = 2,
                                      double edge_probability = 0.4) {
    std::vector<fedbn::AttributeSchema> nodes;
    for (size_t i = 0; i < n; ++i) {
        fedbn::AttributeSchema a;
        a.name = "v" + std::to_string(i);
        const size_t r = 2 + rng.below(max_states - 1);
        for (size_t k = 0; k < r; ++k) a.states.push_back("s" + std::to_string(k));
        nodes.push_back(a);
    }
    std::vector<std::vector<int>> parents(n);
    for (size_t i = 1; i < n; ++i) {
        for (size_t p = 0; p < i && parents[i].size() < max_parents; ++p) {
            if (rng.uniform() < edge_probability) parents[i].push_back(static_cast<int>(p));
        }
    }
    fedbn::NetworkStructure s(nodes, parents);
    BayesianNetwork net(s);
    for (size_t i = 0; i < n; ++i) {
        auto& cpt = net.cpt(i);
        for (size_t j = 0; j < cpt.rows(); ++j) {
            auto row = cpt.row(j);
            double total = 0;
            for (double& v : row) total += (v = rng.exponential());
            for (double& v : row) v /= total;
        }
    }
    return net;
}

inline Dataset sample_dataset(const BayesianNetwork& net, size_t n, fedbn::Rng& rng) {
    Dataset ds;
    ds.schema = net.structure().nodes();
    ds.records = fedbn::sample_records(net, n, rng);
    return ds;
}

/// Random split of the attribute names into `parties` non-empty groups.
inline std::vector<std::vector<std::string>> random_groups(const Dataset& ds, size_t parties, fedbn::Rng& rng) {
    std::vector<std::string> names;
    for (const auto& a : ds.schema) names.push_back(a.name);
    rng.shuffle(names.begin(), names.end());
    std::vector<std::vector<std::string>> groups(parties);
    for (size_t i = 0; i < names.size(); ++i) {
        groups[i < parties ? i : rng.below(parties)].push_back(names[i]);
    }
    return groups;
}

}  // namespace oracle
