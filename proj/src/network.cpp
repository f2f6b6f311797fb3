#include "fedbn/network.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_map>

#include "fedbn/errors.hpp"

namespace fedbn {

namespace {

// Cap on the joint configurations an exact query may enumerate.
constexpr double kMaxEnumeration = 5e7;

std::string escape_label(const std::string& s) {
    std::string out;
    for (unsigned char c : s) {
        if (c <= ' ' || c == '%' || c == 0x7f) {
            char buf[4];
            std::snprintf(buf, sizeof buf, "%%%02X", c);
            out += buf;
        } else {
            out += static_cast<char>(c);
        }
    }
    if (out.empty()) out = "%";
    return out;
}

std::string unescape_label(const std::string& s) {
    if (s == "%") return {};
    std::string out;
    for (size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '%') {
            if (i + 2 >= s.size()) throw FormatError("bad escape in label: " + s);
            out += static_cast<char>(std::stoi(s.substr(i + 1, 2), nullptr, 16));
            i += 2;
        } else {
            out += s[i];
        }
    }
    return out;
}

std::string format_probability(double p) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", p);
    return buf;
}

// Nodes that `roots` depend on, including the roots themselves.
std::vector<bool> ancestral_closure(const NetworkStructure& s, const std::vector<bool>& roots) {
    std::vector<bool> keep = roots;
    std::vector<size_t> stack;
    for (size_t i = 0; i < keep.size(); ++i) {
        if (keep[i]) stack.push_back(i);
    }
    while (!stack.empty()) {
        const size_t v = stack.back();
        stack.pop_back();
        for (int p : s.parents(v)) {
            if (!keep[p]) {
                keep[p] = true;
                stack.push_back(p);
            }
        }
    }
    return keep;
}

double product_over(const BayesianNetwork& net, const std::vector<bool>& nodes, std::span<const int> a) {
    double p = 1.0;
    for (size_t i = 0; i < net.size(); ++i) {
        if (!nodes[i]) continue;
        p *= net.cpt(i).at(parent_row(net.structure(), i, a), static_cast<size_t>(a[i]));
        if (p == 0.0) return 0.0;
    }
    return p;
}

void check_assignment(const NetworkStructure& s, std::span<const int> a, bool allow_missing) {
    if (a.size() != s.size()) {
        throw SchemaError("assignment has " + std::to_string(a.size()) + " entries, network has " +
                          std::to_string(s.size()) + " nodes");
    }
    for (size_t i = 0; i < a.size(); ++i) {
        if (a[i] == kMissing && allow_missing) continue;
        if (a[i] < 0 || static_cast<size_t>(a[i]) >= s.node(i).cardinality()) {
            throw SchemaError("invalid state " + std::to_string(a[i]) + " for node " + s.node(i).name);
        }
    }
}

// Sums the product of `relevant` CPT entries over all completions of the
// relevant unobserved nodes, after fixing irrelevant ones to state 0.
template <class Fn>
void enumerate_relevant(const BayesianNetwork& net, std::vector<int> partial, const std::vector<bool>& relevant,
                        Fn&& fn) {
    double configs = 1.0;
    for (size_t i = 0; i < partial.size(); ++i) {
        if (!relevant[i]) {
            partial[i] = 0;
        } else if (partial[i] == kMissing) {
            configs *= static_cast<double>(net.structure().node(i).cardinality());
        }
    }
    if (configs > kMaxEnumeration) {
        throw DomainError("exact enumeration over " + std::to_string(configs) + " configurations exceeds the limit");
    }
    for_each_completion(net.structure(), std::move(partial), [&](const std::vector<int>& full) {
        fn(full, product_over(net, relevant, full));
    });
}

}  // namespace

int AttributeSchema::state_index(const std::string& label) const {
    for (size_t k = 0; k < states.size(); ++k) {
        if (states[k] == label) return static_cast<int>(k);
    }
    throw SchemaError("attribute " + name + " has no state '" + label + "'");
}

int AttributeSchema::missing_state() const {
    for (size_t k = 0; k < states.size(); ++k) {
        if (states[k] == kMissingLabel) return static_cast<int>(k);
    }
    return kMissing;
}

void AttributeSchema::validate() const {
    if (states.empty()) throw SchemaError("attribute " + name + " has no states");
    std::set<std::string> seen;
    for (const auto& s : states) {
        if (!seen.insert(s).second) throw SchemaError("attribute " + name + " repeats state '" + s + "'");
    }
}

AttributeSchema with_missing_state(AttributeSchema attr) {
    if (!attr.has_missing_state()) attr.states.push_back(kMissingLabel);
    return attr;
}

AttributeSchema without_missing_state(AttributeSchema attr) {
    std::erase(attr.states, kMissingLabel);
    return attr;
}

NetworkStructure::NetworkStructure(std::vector<AttributeSchema> nodes)
    : nodes_(std::move(nodes)), parents_(nodes_.size()) {
    validate();
}

NetworkStructure::NetworkStructure(std::vector<AttributeSchema> nodes, std::vector<std::vector<int>> parents)
    : nodes_(std::move(nodes)), parents_(std::move(parents)) {
    validate();
}

int NetworkStructure::index_of(const std::string& name) const {
    for (size_t i = 0; i < nodes_.size(); ++i) {
        if (nodes_[i].name == name) return static_cast<int>(i);
    }
    throw SchemaError("unknown node '" + name + "'");
}

void NetworkStructure::add_parent(int child, int parent) {
    auto ps = parents_.at(child);
    ps.push_back(parent);
    set_parents(child, std::move(ps));
}

void NetworkStructure::set_parents(int child, std::vector<int> parents) {
    auto saved = std::move(parents_.at(child));
    parents_.at(child) = std::move(parents);
    try {
        validate();
    } catch (...) {
        parents_.at(child) = std::move(saved);
        throw;
    }
}

std::vector<int> NetworkStructure::topological_order() const {
    const size_t n = nodes_.size();
    std::vector<int> indegree(n, 0);
    std::vector<std::vector<int>> children(n);
    for (size_t i = 0; i < n; ++i) {
        for (int p : parents_[i]) {
            children[p].push_back(static_cast<int>(i));
            ++indegree[i];
        }
    }
    // Kahn's algorithm, lowest index first so the order is canonical
    std::set<int> ready;
    for (size_t i = 0; i < n; ++i) {
        if (indegree[i] == 0) ready.insert(static_cast<int>(i));
    }
    std::vector<int> order;
    while (!ready.empty()) {
        const int v = *ready.begin();
        ready.erase(ready.begin());
        order.push_back(v);
        for (int c : children[v]) {
            if (--indegree[c] == 0) ready.insert(c);
        }
    }
    if (order.size() != n) throw SchemaError("parent relation contains a cycle");
    return order;
}

size_t NetworkStructure::parent_configurations(size_t i) const {
    size_t q = 1;
    for (int p : parents_.at(i)) q *= nodes_[p].cardinality();
    return q;
}

size_t NetworkStructure::free_parameters() const {
    size_t k = 0;
    for (size_t i = 0; i < nodes_.size(); ++i) k += parent_configurations(i) * (nodes_[i].cardinality() - 1);
    return k;
}

void NetworkStructure::validate() const {
    if (parents_.size() != nodes_.size()) throw SchemaError("parent list count does not match node count");
    std::set<std::string> names;
    for (const auto& a : nodes_) {
        a.validate();
        if (!names.insert(a.name).second) throw SchemaError("duplicate node '" + a.name + "'");
    }
    for (size_t i = 0; i < parents_.size(); ++i) {
        std::set<int> seen;
        for (int p : parents_[i]) {
            if (p < 0 || static_cast<size_t>(p) >= nodes_.size()) throw SchemaError("parent index out of range");
            if (static_cast<size_t>(p) == i) throw SchemaError("node " + nodes_[i].name + " is its own parent");
            if (!seen.insert(p).second) {
                throw SchemaError("node " + nodes_[i].name + " lists parent " + nodes_[p].name + " twice");
            }
        }
    }
    (void)topological_order();
}

std::vector<std::pair<std::string, std::string>> NetworkStructure::edges() const {
    std::vector<std::pair<std::string, std::string>> out;
    for (size_t i = 0; i < nodes_.size(); ++i) {
        for (int p : parents_[i]) out.emplace_back(nodes_[p].name, nodes_[i].name);
    }
    std::sort(out.begin(), out.end());
    return out;
}

size_t Cpt::rows() const {
    size_t q = 1;
    for (size_t c : parent_cardinalities) q *= c;
    return q;
}

size_t parent_row(const NetworkStructure& s, size_t node, std::span<const int> assignment) {
    size_t row = 0;
    for (int p : s.parents(node)) {
        row = row * s.node(p).cardinality() + static_cast<size_t>(assignment[p]);
    }
    return row;
}

std::vector<int> parent_states_of_row(const NetworkStructure& s, size_t node, size_t j) {
    const auto& ps = s.parents(node);
    std::vector<int> states(ps.size());
    for (size_t k = ps.size(); k-- > 0;) {
        const size_t card = s.node(ps[k]).cardinality();
        states[k] = static_cast<int>(j % card);
        j /= card;
    }
    return states;
}

Cpt uniform_cpt(const NetworkStructure& s, size_t node) {
    Cpt cpt;
    cpt.cardinality = s.node(node).cardinality();
    for (int p : s.parents(node)) cpt.parent_cardinalities.push_back(s.node(p).cardinality());
    cpt.probabilities.assign(cpt.rows() * cpt.cardinality, 1.0 / static_cast<double>(cpt.cardinality));
    return cpt;
}

BayesianNetwork::BayesianNetwork(NetworkStructure structure) : structure_(std::move(structure)) {
    for (size_t i = 0; i < structure_.size(); ++i) cpts_.push_back(uniform_cpt(structure_, i));
}

BayesianNetwork::BayesianNetwork(NetworkStructure structure, std::vector<Cpt> cpts)
    : structure_(std::move(structure)), cpts_(std::move(cpts)) {
    validate();
}

void BayesianNetwork::validate() const {
    structure_.validate();
    if (cpts_.size() != structure_.size()) throw SchemaError("every node needs exactly one CPT");
    for (size_t i = 0; i < cpts_.size(); ++i) {
        const Cpt& c = cpts_[i];
        const auto& name = structure_.node(i).name;
        if (c.cardinality != structure_.node(i).cardinality()) throw SchemaError("CPT of " + name + " has wrong width");
        std::vector<size_t> expected;
        for (int p : structure_.parents(i)) expected.push_back(structure_.node(p).cardinality());
        if (c.parent_cardinalities != expected) throw SchemaError("CPT axes of " + name + " do not match its parents");
        if (c.probabilities.size() != c.rows() * c.cardinality) throw SchemaError("CPT of " + name + " has wrong size");
        for (size_t j = 0; j < c.rows(); ++j) {
            double sum = 0.0;
            for (double p : c.row(j)) {
                if (!(p >= 0.0 && p <= 1.0)) throw SchemaError("CPT of " + name + " has an entry outside [0,1]");
                sum += p;
            }
            if (std::abs(sum - 1.0) > 1e-9) {
                throw SchemaError("CPT row " + std::to_string(j) + " of " + name + " sums to " + format_probability(sum));
            }
        }
    }
}

double joint_probability(const BayesianNetwork& net, std::span<const int> assignment) {
    check_assignment(net.structure(), assignment, false);
    double p = 1.0;
    for (size_t i = 0; i < net.size(); ++i) {
        p *= net.cpt(i).at(parent_row(net.structure(), i, assignment), static_cast<size_t>(assignment[i]));
    }
    return p;
}

double joint_probability(const BayesianNetwork& net, const std::map<std::string, std::string>& assignment) {
    const auto& s = net.structure();
    std::vector<int> a(s.size(), kMissing);
    for (const auto& [name, label] : assignment) {
        const int i = s.index_of(name);
        a[i] = s.node(i).state_index(label);
    }
    for (size_t i = 0; i < a.size(); ++i) {
        if (a[i] == kMissing) throw SchemaError("assignment does not cover node " + s.node(i).name);
    }
    return joint_probability(net, a);
}

double marginal_probability(const BayesianNetwork& net, std::span<const int> partial) {
    const auto& s = net.structure();
    check_assignment(s, partial, true);
    std::vector<bool> observed(s.size());
    for (size_t i = 0; i < s.size(); ++i) observed[i] = partial[i] != kMissing;
    const auto relevant = ancestral_closure(s, observed);
    double total = 0.0;
    enumerate_relevant(net, {partial.begin(), partial.end()}, relevant,
                       [&](const std::vector<int>&, double p) { total += p; });
    return total;
}

std::vector<double> posterior(const BayesianNetwork& net, size_t target, std::span<const int> evidence) {
    const auto& s = net.structure();
    check_assignment(s, evidence, true);
    if (target >= s.size()) throw SchemaError("target index out of range");
    if (evidence[target] != kMissing) throw SchemaError("evidence must not include the target " + s.node(target).name);

    std::vector<bool> roots(s.size());
    for (size_t i = 0; i < s.size(); ++i) roots[i] = evidence[i] != kMissing;
    roots[target] = true;
    const auto relevant = ancestral_closure(s, roots);

    std::vector<double> dist(s.node(target).cardinality(), 0.0);
    enumerate_relevant(net, {evidence.begin(), evidence.end()}, relevant,
                       [&](const std::vector<int>& full, double p) { dist[full[target]] += p; });
    const double total = std::accumulate(dist.begin(), dist.end(), 0.0);
    if (!(total > 0.0)) throw DegenerateEvidenceError("evidence has probability zero under the network");
    for (double& d : dist) d /= total;
    return dist;
}

namespace {

std::vector<int> draw(const BayesianNetwork& net, const std::vector<int>& order, Rng& rng) {
    const auto& s = net.structure();
    std::vector<int> a(s.size(), 0);
    for (int v : order) {
        a[v] = static_cast<int>(rng.categorical(net.cpt(v).row(parent_row(s, v, a))));
    }
    return a;
}

}  // namespace

std::vector<int> sample_record(const BayesianNetwork& net, Rng& rng) {
    return draw(net, net.structure().topological_order(), rng);
}

std::vector<std::vector<int>> sample_records(const BayesianNetwork& net, size_t n, Rng& rng) {
    const auto order = net.structure().topological_order();
    std::vector<std::vector<int>> out;
    out.reserve(n);
    for (size_t i = 0; i < n; ++i) out.push_back(draw(net, order, rng));
    return out;
}

LogLikelihood log_likelihood(const BayesianNetwork& net, std::span<const std::vector<int>> records) {
    LogLikelihood ll;
    for (const auto& r : records) {
        const bool complete = std::find(r.begin(), r.end(), kMissing) == r.end();
        const double p = complete ? joint_probability(net, r) : marginal_probability(net, r);
        if (p > 0.0) {
            ll.value += std::log(p);
        } else {
            ++ll.zero_probability_records;
        }
    }
    if (ll.zero_probability_records > 0) ll.value = -std::numeric_limits<double>::infinity();
    return ll;
}

LogLikelihood aic(const BayesianNetwork& net, std::span<const std::vector<int>> records) {
    LogLikelihood score = log_likelihood(net, records);
    score.value -= static_cast<double>(net.structure().free_parameters());
    return score;
}

NetworkStructure strip_missing_states(const NetworkStructure& s) {
    std::vector<AttributeSchema> nodes;
    for (const auto& a : s.nodes()) nodes.push_back(without_missing_state(a));
    return NetworkStructure(std::move(nodes), s.all_parents());
}

// ---- serialization -------------------------------------------------------

namespace {

void write_impl(std::ostream& os, const NetworkStructure& s, const std::vector<Cpt>* cpts) {
    os << "fedbn-network 1\n";
    for (size_t i = 0; i < s.size(); ++i) {
        const auto& a = s.node(i);
        os << "node " << escape_label(a.name) << "\n";
        os << "states";
        for (const auto& st : a.states) os << ' ' << escape_label(st);
        os << "\nparents";
        for (int p : s.parents(i)) os << ' ' << escape_label(s.node(p).name);
        os << "\n";
        if (cpts) {
            const Cpt& c = (*cpts)[i];
            for (size_t j = 0; j < c.rows(); ++j) {
                os << "row";
                for (double p : c.row(j)) os << ' ' << format_probability(p);
                os << "\n";
            }
        }
        os << "end\n";
    }
}

}  // namespace

void write_network(std::ostream& os, const BayesianNetwork& net) { write_impl(os, net.structure(), &net.cpts()); }

void write_structure(std::ostream& os, const NetworkStructure& s) { write_impl(os, s, nullptr); }

std::string network_to_string(const BayesianNetwork& net) {
    std::ostringstream os;
    write_network(os, net);
    return os.str();
}

std::string structure_to_string(const NetworkStructure& s) {
    std::ostringstream os;
    write_structure(os, s);
    return os.str();
}

BayesianNetwork ParsedNetwork::network() const {
    if (!cpts_present) throw FormatError("network file has no CPTs");
    return BayesianNetwork(structure, cpts);
}

ParsedNetwork read_network(std::istream& is) {
    struct Block {
        AttributeSchema attr;
        std::vector<std::string> parent_names;
        std::vector<std::vector<double>> rows;
    };
    std::string line;
    size_t line_no = 0;
    auto fail = [&](const std::string& what) {
        throw FormatError("network line " + std::to_string(line_no) + ": " + what);
    };
    if (!std::getline(is, line) || line != "fedbn-network 1") {
        line_no = 1;
        fail("missing 'fedbn-network 1' header");
    }
    ++line_no;
    std::vector<Block> blocks;
    bool open = false;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string key;
        ls >> key;
        std::vector<std::string> toks;
        for (std::string t; ls >> t;) toks.push_back(t);
        if (key == "node") {
            if (open) fail("node block not closed");
            if (toks.size() != 1) fail("node needs one name");
            blocks.push_back({});
            blocks.back().attr.name = unescape_label(toks[0]);
            open = true;
        } else if (!open) {
            fail("'" + key + "' outside a node block");
        } else if (key == "states") {
            for (const auto& t : toks) blocks.back().attr.states.push_back(unescape_label(t));
        } else if (key == "parents") {
            for (const auto& t : toks) blocks.back().parent_names.push_back(unescape_label(t));
        } else if (key == "row") {
            std::vector<double> row;
            for (const auto& t : toks) {
                char* end = nullptr;
                const double v = std::strtod(t.c_str(), &end);
                if (end == t.c_str() || *end != '\0') fail("bad probability '" + t + "'");
                row.push_back(v);
            }
            blocks.back().rows.push_back(std::move(row));
        } else if (key == "end") {
            open = false;
        } else {
            fail("unknown key '" + key + "'");
        }
    }
    if (open) fail("unterminated node block");

    std::vector<AttributeSchema> nodes;
    std::unordered_map<std::string, int> index;
    for (const auto& b : blocks) {
        index[b.attr.name] = static_cast<int>(nodes.size());
        nodes.push_back(b.attr);
    }
    std::vector<std::vector<int>> parents;
    for (const auto& b : blocks) {
        std::vector<int> ps;
        for (const auto& pn : b.parent_names) {
            auto it = index.find(pn);
            if (it == index.end()) throw FormatError("node " + b.attr.name + " references unknown parent " + pn);
            ps.push_back(it->second);
        }
        parents.push_back(std::move(ps));
    }
    ParsedNetwork out;
    out.structure = NetworkStructure(std::move(nodes), std::move(parents));
    size_t with_rows = 0;
    for (const auto& b : blocks) with_rows += b.rows.empty() ? 0 : 1;
    if (with_rows == 0) return out;
    if (with_rows != blocks.size()) throw FormatError("either every node or no node may carry CPT rows");
    for (size_t i = 0; i < blocks.size(); ++i) {
        Cpt c = uniform_cpt(out.structure, i);
        if (blocks[i].rows.size() != c.rows()) {
            throw FormatError("node " + blocks[i].attr.name + " needs " + std::to_string(c.rows()) + " rows");
        }
        c.probabilities.clear();
        for (const auto& r : blocks[i].rows) {
            if (r.size() != c.cardinality) throw FormatError("row width mismatch for node " + blocks[i].attr.name);
            c.probabilities.insert(c.probabilities.end(), r.begin(), r.end());
        }
        out.cpts.push_back(std::move(c));
    }
    out.cpts_present = true;
    (void)out.network();
    return out;
}

ParsedNetwork network_from_string(const std::string& text) {
    std::istringstream is(text);
    return read_network(is);
}

ParsedNetwork load_network_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open network file " + path);
    return read_network(in);
}

void save_network_file(const std::string& path, const BayesianNetwork& net) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot write " + path);
    write_network(out, net);
}

void save_structure_file(const std::string& path, const NetworkStructure& s) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot write " + path);
    write_structure(out, s);
}

}  // namespace fedbn
