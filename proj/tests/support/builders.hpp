#pragma once

#include <string>
#include <vector>

#include "fedbn/network.hpp"

namespace build {

struct NodeSpec {
    std::string name;
    std::vector<std::string> states;
    std::vector<std::string> parents;
    std::vector<std::vector<double>> rows;
};

/// Network from a list of node specs; parents are referenced by name.
inline fedbn::BayesianNetwork network(const std::vector<NodeSpec>& specs) {
    std::vector<fedbn::AttributeSchema> nodes;
    for (const auto& s : specs) nodes.push_back({s.name, s.states});
    std::vector<std::vector<int>> parents;
    for (const auto& s : specs) {
        std::vector<int> ps;
        for (const auto& p : s.parents) {
            for (size_t i = 0; i < specs.size(); ++i) {
                if (specs[i].name == p) ps.push_back(static_cast<int>(i));
            }
        }
        parents.push_back(ps);
    }
    fedbn::NetworkStructure st(nodes, parents);
    std::vector<fedbn::Cpt> cpts;
    for (size_t i = 0; i < specs.size(); ++i) {
        fedbn::Cpt c = fedbn::uniform_cpt(st, i);
        c.probabilities.clear();
        for (const auto& r : specs[i].rows) c.probabilities.insert(c.probabilities.end(), r.begin(), r.end());
        cpts.push_back(c);
    }
    return fedbn::BayesianNetwork(st, cpts);
}

inline std::vector<std::string> binary() { return {"0", "1"}; }

}  // namespace build
