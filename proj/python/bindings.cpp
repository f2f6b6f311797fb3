#include <pybind11/operators.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <memory>
#include <optional>

#include "experiment.hpp"
#include "fedbn/errors.hpp"
#include "fedbn/k2.hpp"
#include "fedbn/params.hpp"
#include "fedbn/runtime.hpp"
#include "fedbn/ssp.hpp"
#include "fedbn/validation.hpp"

namespace py = pybind11;
using namespace fedbn;

namespace {

/// Label conditions from Python: None or the MISSING label select missing cells.
Conditions to_conditions(const CountOracle& oracle, const std::map<std::string, std::optional<std::string>>& given) {
    Conditions out;
    for (const auto& [name, label] : given) {
        const int a = oracle.attribute_index(name);
        const auto& attr = oracle.schema()[static_cast<size_t>(a)];
        out[name] = !label || *label == kMissingLabel ? kMissing : attr.state_index(*label);
    }
    return out;
}

py::dict complexity_dict(const ComplexityCounter& c) {
    py::dict d;
    d["protocols_run"] = c.protocols_run;
    d["subprotocols_run"] = c.subprotocols_run;
    d["multiplications"] = c.multiplications;
    return d;
}

py::list traces_list(const std::vector<EmTrace>& traces) {
    py::list out;
    for (const auto& t : traces) {
        py::dict d;
        d["restart"] = t.restart;
        d["converged"] = t.converged;
        d["log_likelihood"] = t.log_likelihood;
        out.append(d);
    }
    return out;
}

py::dict report_dict(const TrainReport& r) {
    py::dict d;
    d["structure"] = r.structure;
    d["intermediate"] = r.intermediate;
    d["final"] = r.final_network;
    d["synthetic_records"] = r.synthetic_records;
    d["synthetic_missing_rate"] = r.synthetic_missing_rate;
    d["traces"] = traces_list(r.traces);
    d["best_restart"] = r.best_restart;
    d["final_log_likelihood"] = r.final_log_likelihood;
    d["count_queries"] = r.count_queries;
    d["complexity"] = complexity_dict(r.complexity);
    return d;
}

py::dict metrics_dict(const MetricsReport& m) {
    py::dict d;
    d["scheme"] = m.scheme;
    d["target"] = m.target;
    d["mean_auc"] = m.mean_auc;
    d["pooled_auc"] = m.pooled_auc;
    d["evaluated_records"] = m.evaluated_records;
    d["excluded_missing_target"] = m.excluded_missing_target;
    d["aic"] = m.aic;
    py::list folds;
    for (const auto& f : m.folds) {
        py::dict fd;
        fd["fold"] = f.fold;
        fd["records"] = f.records;
        fd["auc"] = f.auc;
        fd["note"] = f.note;
        folds.append(fd);
    }
    d["folds"] = folds;
    return d;
}

TrainOptions train_options(const CountOracle& oracle, const std::optional<NetworkStructure>& structure,
                           const std::optional<std::vector<std::string>>& order, int max_parents, size_t n_synth,
                           int restarts, int max_iterations, double tolerance, double alpha, uint64_t seed) {
    TrainOptions opts;
    if (structure) opts.structure = bind_structure(*structure, oracle.schema());
    if (order) opts.k2 = K2Config{*order, max_parents};
    opts.n_synth = n_synth;
    opts.em = {restarts, max_iterations, tolerance, derive_seed(seed, 1)};
    opts.alpha = alpha;
    opts.seed = derive_seed(seed, 2);
    return opts;
}

/// Methods shared by the central and federated count oracles.
template <class Holder>
void bind_oracle_methods(py::class_<Holder>& cls) {
    cls.def("count",
            [](Holder& h, const std::map<std::string, std::optional<std::string>>& conditions) {
                return h.oracle().count(to_conditions(h.oracle(), conditions));
            },
            py::arg("conditions"), "Records satisfying every condition; None selects missing cells.")
        .def_property_readonly("num_records", [](Holder& h) { return h.oracle().num_records(); })
        .def_property_readonly("schema", [](Holder& h) { return h.oracle().schema(); })
        .def(
            "k2",
            [](Holder& h, const std::vector<std::string>& order, int max_parents) {
                return k2_search(h.oracle(), K2Config{order, max_parents});
            },
            py::arg("order"), py::arg("max_parents") = 3)
        .def(
            "ml",
            [](Holder& h, const NetworkStructure& s, double alpha) {
                return ml_parameters(bind_structure(s, h.oracle().schema()), h.oracle(), alpha);
            },
            py::arg("structure"), py::arg("alpha") = 0.0)
        .def(
            "train",
            [](Holder& h, std::optional<NetworkStructure> structure, std::optional<std::vector<std::string>> order,
               int max_parents, size_t n_synth, int restarts, int max_iterations, double tolerance, double alpha,
               uint64_t seed) {
                const auto opts = train_options(h.oracle(), structure, order, max_parents, n_synth, restarts,
                                                max_iterations, tolerance, alpha, seed);
                TrainReport report;
                {
                    py::gil_scoped_release release;
                    report = federated_train(h.oracle(), opts);
                }
                return report_dict(report);
            },
            py::arg("structure") = py::none(), py::arg("order") = py::none(), py::arg("max_parents") = 3,
            py::arg("n_synth") = 0, py::arg("restarts") = 5, py::arg("max_iterations") = 100,
            py::arg("tolerance") = 1e-6, py::arg("alpha") = 0.0, py::arg("seed") = 0,
            "Missing-as-value ML, synthetic sampling, then EM. Give exactly one of structure / order.")
        .def(
            "sanitize",
            [](Holder& h, const BayesianNetwork& net, size_t k) { return sanitize_cpts(net, k, h.oracle()); },
            py::arg("network"), py::arg("k") = kDefaultMinSupport);
}

struct PyCentral {
    explicit PyCentral(Dataset d) : counter(std::move(d)) {}
    CountOracle& oracle() { return counter; }
    CentralCounter counter;
};

struct PyFederation {
    PyFederation(const Dataset& data, const std::vector<std::vector<std::string>>& groups, uint64_t seed, bool cache)
        : fed(std::make_unique<InProcessFederation>(partition_vertical(data, groups), seed,
                                                    CoordinatorOptions{.cache = cache, .seed = seed})) {}
    CountOracle& oracle() { return fed->coordinator(); }
    std::unique_ptr<InProcessFederation> fed;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Bayesian networks over vertically partitioned data";

    auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<SchemaError>(m, "SchemaError", base);
    py::register_exception<FormatError>(m, "FormatError", base);
    py::register_exception<PartitionError>(m, "PartitionError", base);
    py::register_exception<LocalityError>(m, "LocalityError", base);
    py::register_exception<AlignmentError>(m, "AlignmentError", base);
    py::register_exception<RegistrationError>(m, "RegistrationError", base);
    py::register_exception<DomainError>(m, "DomainError", base);
    py::register_exception<DegenerateEvidenceError>(m, "DegenerateEvidenceError", base);
    py::register_exception<ProtocolError>(m, "ProtocolError", base);
    py::register_exception<TransportError>(m, "TransportError", base);
    py::register_exception<SessionError>(m, "SessionError", base);
    py::register_exception<SizingError>(m, "SizingError", base);
    py::register_exception<UndefinedAucError>(m, "UndefinedAucError", base);
    py::register_exception<ConfigError>(m, "ConfigError", base);

    m.attr("MISSING") = kMissingLabel;

    py::class_<AttributeSchema>(m, "Attribute")
        .def(py::init<std::string, std::vector<std::string>>(), py::arg("name"), py::arg("states"))
        .def_readonly("name", &AttributeSchema::name)
        .def_readonly("states", &AttributeSchema::states)
        .def_property_readonly("cardinality", &AttributeSchema::cardinality)
        .def("__repr__", [](const AttributeSchema& a) { return "Attribute(" + a.name + ")"; });

    py::class_<Dataset>(m, "Dataset")
        .def(py::init([](std::vector<AttributeSchema> schema, std::vector<std::vector<int>> records) {
                 Dataset d{std::move(schema), std::move(records)};
                 d.validate();
                 return d;
             }),
             py::arg("schema"), py::arg("records"), "Records hold state indices; -1 marks a missing cell.")
        .def_readonly("schema", &Dataset::schema)
        .def_readonly("records", &Dataset::records)
        .def_property_readonly("num_records", &Dataset::num_records)
        .def_property_readonly("missing_cells", &Dataset::missing_cells)
        .def_property_readonly("names",
                               [](const Dataset& d) {
                                   std::vector<std::string> n;
                                   for (const auto& a : d.schema) n.push_back(a.name);
                                   return n;
                               })
        .def("to_csv", [](const Dataset& d) { return dataset_to_csv(d); })
        .def("__len__", &Dataset::num_records);

    m.def(
        "load_csv", [](const std::string& path, const std::string& sentinel) {
            return load_csv(path, std::nullopt, CsvOptions{sentinel});
        },
        py::arg("path"), py::arg("missing_sentinel") = "");
    m.def(
        "inject_missing",
        [](const Dataset& d, double fraction, uint64_t seed) {
            Rng rng(seed);
            return inject_missing(d, fraction, rng);
        },
        py::arg("data"), py::arg("fraction"), py::arg("seed"));
    m.def("equal_split", &equal_split, py::arg("data"), py::arg("seed"));

    py::class_<NetworkStructure>(m, "Structure")
        .def_property_readonly("nodes", &NetworkStructure::nodes)
        .def_property_readonly("edges", &NetworkStructure::edges)
        .def(
            "parents",
            [](const NetworkStructure& s, const std::string& node) {
                std::vector<std::string> out;
                for (int p : s.parents(static_cast<size_t>(s.index_of(node)))) {
                    out.push_back(s.node(static_cast<size_t>(p)).name);
                }
                return out;
            },
            py::arg("node"))
        .def_property_readonly("free_parameters", &NetworkStructure::free_parameters)
        .def("to_string", &structure_to_string)
        .def(py::self == py::self);

    py::class_<BayesianNetwork>(m, "Network")
        .def_property_readonly("structure", &BayesianNetwork::structure)
        .def(
            "cpt",
            [](const BayesianNetwork& net, const std::string& node) {
                const auto& c = net.cpt(static_cast<size_t>(net.structure().index_of(node)));
                std::vector<std::vector<double>> rows;
                for (size_t j = 0; j < c.rows(); ++j) rows.emplace_back(c.row(j).begin(), c.row(j).end());
                return rows;
            },
            py::arg("node"), "Rows are parent configurations, the last parent varying fastest.")
        .def("to_string", &network_to_string)
        .def(
            "sample",
            [](const BayesianNetwork& net, size_t n, uint64_t seed) {
                Rng rng(seed);
                Dataset d;
                d.schema = net.structure().nodes();
                d.records = sample_records(net, n, rng);
                return d;
            },
            py::arg("n"), py::arg("seed"))
        .def(py::self == py::self);

    m.def("load_network", [](const std::string& path) { return load_network_file(path).network(); }, py::arg("path"));
    m.def("load_structure", [](const std::string& path) { return load_network_file(path).structure; }, py::arg("path"));
    m.def("parse_network", [](const std::string& text) { return network_from_string(text).network(); }, py::arg("text"));

    m.def("subprotocol_count", &subprotocol_count, py::arg("parties"));
    m.def(
        "scalar_product",
        [](const std::vector<std::vector<uint8_t>>& vectors, uint64_t seed) {
            std::vector<MembershipVector> mv;
            for (const auto& v : vectors) mv.push_back({v});
            ComplexityCounter counter;
            const uint64_t value = n_party_scalar_product(mv, CommodityServer(seed), counter);
            return py::make_tuple(value, complexity_dict(counter));
        },
        py::arg("vectors"), py::arg("commodity_seed") = 0,
        "Secure Σ_r ∏_p bits over in-process parties; returns (value, complexity).");

    m.def(
        "auc",
        [](const std::vector<double>& scores, const std::vector<int>& labels) { return binary_auc(scores, labels); },
        py::arg("scores"), py::arg("labels"));
    m.def(
        "validate_public",
        [](const BayesianNetwork& net, const Dataset& holdout, const std::string& target) {
            return metrics_dict(validate_public(net, holdout, target));
        },
        py::arg("network"), py::arg("holdout"), py::arg("target"));
    m.def(
        "em",
        [](const NetworkStructure& s, const Dataset& data, int restarts, int max_iterations, double tolerance,
           uint64_t seed) {
            const auto r = em_train(s, data, {restarts, max_iterations, tolerance, seed});
            py::dict d;
            d["network"] = r.network;
            d["traces"] = traces_list(r.traces);
            d["log_likelihood"] = r.log_likelihood;
            d["best_restart"] = r.best_restart;
            return d;
        },
        py::arg("structure"), py::arg("data"), py::arg("restarts") = 5, py::arg("max_iterations") = 100,
        py::arg("tolerance") = 1e-6, py::arg("seed") = 0);

    py::class_<PyCentral> central(m, "Central", "Plaintext counting over pooled data.");
    central.def(py::init<Dataset>(), py::arg("data"));
    bind_oracle_methods(central);

    py::class_<PyFederation> federation(m, "Federation", "In-process commodity, parties and coordinator.");
    federation.def(py::init<const Dataset&, const std::vector<std::vector<std::string>>&, uint64_t, bool>(),
                   py::arg("data"), py::arg("groups"), py::arg("seed") = 0, py::arg("cache") = true)
        .def_property_readonly("complexity", [](PyFederation& f) { return complexity_dict(f.fed->coordinator().complexity()); })
        .def_property_readonly("sessions", [](PyFederation& f) { return f.fed->coordinator().sessions_run(); })
        .def_property_readonly("cache_hits", [](PyFederation& f) { return f.fed->coordinator().cache_hits(); })
        .def_property_readonly("num_parties", [](PyFederation& f) { return f.fed->coordinator().num_parties(); });
    bind_oracle_methods(federation);

    m.def(
        "run_config",
        [](const std::filesystem::path& config, const std::string& mode, const std::filesystem::path& out,
           std::optional<uint64_t> seed) {
            const auto cfg = app::load_config(config, seed);
            if (mode != "train" && mode != "validate" && mode != "benchmark") {
                throw ConfigError("mode must be train, validate or benchmark");
            }
            app::RunOutput r;
            {
                py::gil_scoped_release release;
                r = mode == "train" ? app::cmd_train(cfg, out)
                    : mode == "validate" ? app::cmd_validate(cfg, out)
                                         : app::cmd_benchmark(cfg, out);
            }
            return py::make_tuple(r.dir, r.files);
        },
        py::arg("config"), py::arg("mode") = "train", py::arg("out") = "runs", py::arg("seed") = py::none(),
        "Runs a config file in-process; returns (run directory, written files).");
}
