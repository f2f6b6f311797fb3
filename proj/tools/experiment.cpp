#include "experiment.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "fedbn/errors.hpp"
#include "fedbn/k2.hpp"

namespace fedbn::app {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Seed streams derived from the run seed.
enum Stream : uint64_t {
    kGenerate = 1,
    kMissing = 2,
    kHoldout = 3,
    kSplit = 4,
    kCommodity = 5,
    kSessions = 6,
    kTrain = 7,
    kEm = 8,
    kValidation = 9,
};

void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
    if (!j.is_object()) throw ConfigError(where + " must be an object");
    for (const auto& [key, _] : j.items()) {
        bool ok = false;
        for (const char* a : allowed) ok = ok || key == a;
        if (!ok) throw ConfigError("unknown key '" + key + "' in " + where);
    }
}

template <class T>
T get_or(const json& j, const char* key, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config key '") + key + "': " + e.what());
    }
}

fs::path resolve(const fs::path& base, const std::string& p) {
    const fs::path path(p);
    return path.is_absolute() ? path : base / path;
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw ConfigError("cannot read " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw ConfigError("cannot write " + p.string());
    out << text;
    if (!out) throw ConfigError("write to " + p.string() + " failed");
}

}  // namespace

ExperimentConfig parse_config(const json& j, const fs::path& base_dir, std::optional<uint64_t> seed_override) {
    check_keys(j, "config",
               {"name", "seed", "dataset", "bins", "missing_fraction", "partition", "parties", "structure", "node_order",
                "max_parents", "em", "n_synth", "alpha", "sanitize", "validation", "transport", "cache"});
    ExperimentConfig cfg;
    cfg.base_dir = base_dir;
    if (!seed_override && !j.contains("seed")) throw ConfigError("config must set a seed");
    cfg.seed = seed_override ? *seed_override : get_or<uint64_t>(j, "seed", 0);
    cfg.canonical = j;
    cfg.canonical["seed"] = cfg.seed;
    cfg.name = get_or<std::string>(j, "name", "experiment");

    if (!j.contains("dataset")) throw ConfigError("config must name a dataset");
    const json& d = j.at("dataset");
    check_keys(d, "dataset", {"path", "generate", "missing_sentinel"});
    if (d.contains("path") == d.contains("generate")) throw ConfigError("dataset needs exactly one of path / generate");
    if (d.contains("path")) {
        cfg.dataset_path = resolve(base_dir, d.at("path").get<std::string>());
        if (!fs::exists(*cfg.dataset_path)) throw ConfigError("dataset " + cfg.dataset_path->string() + " not found");
    } else {
        const json& g = d.at("generate");
        check_keys(g, "dataset.generate", {"network", "records"});
        cfg.generator_network = resolve(base_dir, get_or<std::string>(g, "network", ""));
        if (!fs::exists(*cfg.generator_network)) {
            throw ConfigError("generator network " + cfg.generator_network->string() + " not found");
        }
        cfg.generator_records = get_or<size_t>(g, "records", 0);
        if (cfg.generator_records == 0) throw ConfigError("dataset.generate.records must be positive");
    }
    cfg.missing_sentinel = get_or<std::string>(d, "missing_sentinel", "");

    const std::string bins = get_or<std::string>(j, "bins", "");
    if (bins == "auto") {
        cfg.bins = ExperimentConfig::Bins::automatic;
    } else if (!bins.empty()) {
        cfg.bins = ExperimentConfig::Bins::file;
        cfg.bins_path = resolve(base_dir, bins);
        if (!fs::exists(cfg.bins_path)) throw ConfigError("bins file " + cfg.bins_path.string() + " not found");
    }
    cfg.missing_fraction = get_or<double>(j, "missing_fraction", 0.0);
    if (cfg.missing_fraction < 0 || cfg.missing_fraction >= 1) throw ConfigError("missing_fraction must lie in [0, 1)");

    if (j.contains("partition")) {
        check_keys(j.at("partition"), "partition", {"equal_split_seed"});
        cfg.equal_split_seed = get_or<uint64_t>(j.at("partition"), "equal_split_seed", 0);
    }
    if (j.contains("parties")) {
        for (const auto& p : j.at("parties")) {
            check_keys(p, "parties[]", {"id", "attributes", "address"});
            PartyConfig pc;
            pc.id = get_or<std::string>(p, "id", "");
            if (pc.id.empty()) throw ConfigError("every party needs an id");
            pc.attributes = get_or<std::vector<std::string>>(p, "attributes", {});
            if (p.contains("address")) pc.address = Endpoint::parse(p.at("address").get<std::string>());
            cfg.parties.push_back(std::move(pc));
        }
    }
    const bool explicit_groups =
        !cfg.parties.empty() && std::all_of(cfg.parties.begin(), cfg.parties.end(),
                                            [](const PartyConfig& p) { return !p.attributes.empty(); });
    if (explicit_groups && cfg.equal_split_seed) throw ConfigError("give party attributes or equal_split_seed, not both");
    if (!explicit_groups && std::any_of(cfg.parties.begin(), cfg.parties.end(),
                                        [](const PartyConfig& p) { return !p.attributes.empty(); })) {
        throw ConfigError("either every party lists its attributes or none does");
    }
    if (!explicit_groups && !cfg.parties.empty() && cfg.parties.size() != 2) {
        throw ConfigError("an equal split needs exactly two parties");
    }

    if (j.contains("structure") == j.contains("node_order")) {
        throw ConfigError("give exactly one of structure / node_order");
    }
    if (j.contains("structure")) {
        cfg.structure_path = resolve(base_dir, j.at("structure").get<std::string>());
        if (!fs::exists(*cfg.structure_path)) throw ConfigError("structure " + cfg.structure_path->string() + " not found");
    } else {
        cfg.node_order = get_or<std::vector<std::string>>(j, "node_order", {});
    }
    cfg.max_parents = get_or<int>(j, "max_parents", 3);
    if (cfg.max_parents < 0) throw ConfigError("max_parents must be non-negative");
    if (j.contains("em")) {
        const json& e = j.at("em");
        check_keys(e, "em", {"restarts", "max_iterations", "tolerance"});
        cfg.em.restarts = get_or<int>(e, "restarts", cfg.em.restarts);
        cfg.em.max_iterations = get_or<int>(e, "max_iterations", cfg.em.max_iterations);
        cfg.em.tolerance = get_or<double>(e, "tolerance", cfg.em.tolerance);
        if (cfg.em.restarts < 1 || cfg.em.max_iterations < 1 || !(cfg.em.tolerance > 0)) {
            throw ConfigError("em settings must be positive");
        }
    }
    cfg.em.seed = derive_seed(cfg.seed, kEm);
    cfg.n_synth = get_or<size_t>(j, "n_synth", 0);
    cfg.alpha = get_or<double>(j, "alpha", 0.0);
    if (cfg.alpha < 0) throw ConfigError("alpha must be non-negative");
    if (j.contains("sanitize")) {
        check_keys(j.at("sanitize"), "sanitize", {"k"});
        cfg.sanitize_k = get_or<size_t>(j.at("sanitize"), "k", kDefaultMinSupport);
        if (*cfg.sanitize_k < 1) throw ConfigError("sanitize.k must be at least 1");
    }

    if (j.contains("validation")) {
        const json& v = j.at("validation");
        check_keys(v, "validation",
                   {"scheme", "folds", "target", "split_fraction", "holdout_fraction", "holdout_path",
                    "min_validation_rows"});
        const std::string scheme = get_or<std::string>(v, "scheme", "all");
        if (scheme == "all") {
            cfg.schemes = {Scheme::public_holdout, Scheme::scv, Scheme::svdg};
        } else {
            cfg.schemes = {parse_scheme(scheme)};
        }
        cfg.folds = get_or<int>(v, "folds", 10);
        cfg.target = get_or<std::string>(v, "target", "");
        cfg.split_fraction = get_or<double>(v, "split_fraction", 0.8);
        cfg.holdout_fraction = get_or<double>(v, "holdout_fraction", 0.0);
        if (cfg.holdout_fraction < 0 || cfg.holdout_fraction >= 1) throw ConfigError("holdout_fraction must lie in [0, 1)");
        if (v.contains("holdout_path")) {
            cfg.holdout_path = resolve(base_dir, v.at("holdout_path").get<std::string>());
            if (cfg.holdout_fraction > 0) throw ConfigError("give holdout_path or holdout_fraction, not both");
        }
        cfg.min_validation_rows = get_or<size_t>(v, "min_validation_rows", 30);
        if (cfg.target.empty()) throw ConfigError("validation.target is required");
        if (cfg.folds < 2) throw ConfigError("validation.folds must be at least 2");
        if (!(cfg.split_fraction > 0 && cfg.split_fraction < 1)) throw ConfigError("split_fraction must lie in (0, 1)");
    }

    if (j.contains("transport")) {
        const json& t = j.at("transport");
        check_keys(t, "transport", {"mode", "commodity", "shutdown_on_finish"});
        cfg.transport = parse_transport_mode(get_or<std::string>(t, "mode", "in_process"));
        if (t.contains("commodity")) cfg.commodity = Endpoint::parse(t.at("commodity").get<std::string>());
        cfg.shutdown_on_finish = get_or<bool>(t, "shutdown_on_finish", true);
    }
    if (cfg.transport == TransportMode::socket) {
        if (!cfg.commodity) throw ConfigError("socket transport needs a commodity address");
        if (cfg.parties.size() < 2) throw ConfigError("socket transport needs the parties listed with addresses");
        for (const auto& p : cfg.parties) {
            if (!p.address) throw ConfigError("party '" + p.id + "' has no address");
        }
    }
    cfg.cache = get_or<bool>(j, "cache", true);
    return cfg;
}

ExperimentConfig load_config(const fs::path& path, std::optional<uint64_t> seed_override) {
    json j;
    try {
        j = json::parse(read_file(path));
    } catch (const json::parse_error& e) {
        throw ConfigError("cannot parse " + path.string() + ": " + e.what());
    }
    return parse_config(j, fs::absolute(path).parent_path(), seed_override);
}

std::string run_id(const ExperimentConfig& cfg) {
    const std::string text = cfg.canonical.dump();
    uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

// ---- preprocessing -------------------------------------------------------

namespace {

std::optional<double> number(const std::string& s) {
    if (s.empty()) return std::nullopt;
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end != s.c_str() + s.size() || !std::isfinite(v)) return std::nullopt;
    return v;
}

// Numeric columns with more distinct values than this are discretized by "auto".
constexpr size_t kAutoBinDistinct = 10;

std::vector<BinSpec> automatic_bins(const RawTable& table, const CsvOptions& opts) {
    std::vector<BinSpec> out;
    for (size_t c = 0; c < table.header.size(); ++c) {
        std::vector<double> values;
        std::set<double> distinct;
        bool numeric = true;
        for (const auto& row : table.rows) {
            const std::string& cell = row[c];
            if (cell.empty() || (!opts.missing_sentinel.empty() && cell == opts.missing_sentinel)) continue;
            const auto v = number(cell);
            if (!v) {
                numeric = false;
                break;
            }
            values.push_back(*v);
            distinct.insert(*v);
        }
        if (numeric && distinct.size() > kAutoBinDistinct) out.push_back(discretize(table.header[c], values));
    }
    return out;
}

}  // namespace

PreparedData prepare_data(const ExperimentConfig& cfg) {
    PreparedData out;
    CsvOptions opts;
    opts.missing_sentinel = cfg.missing_sentinel;
    std::vector<BinSpec> bins;
    if (cfg.dataset_path) {
        const RawTable table = read_csv_table(cfg.dataset_path->string(), opts);
        if (cfg.bins == ExperimentConfig::Bins::automatic) bins = automatic_bins(table, opts);
        if (cfg.bins == ExperimentConfig::Bins::file) bins = bins_from_json(read_file(cfg.bins_path));
        out.full = dataset_from_table(table, std::nullopt, opts, bins);
    } else {
        const BayesianNetwork generator = load_network_file(cfg.generator_network->string()).network();
        Rng rng(derive_seed(cfg.seed, kGenerate));
        for (const auto& node : generator.structure().nodes()) out.full.schema.push_back(node);
        out.full.records = sample_records(generator, cfg.generator_records, rng);
        out.full.validate();
    }
    if (cfg.missing_fraction > 0) {
        Rng rng(derive_seed(cfg.seed, kMissing));
        out.full = inject_missing(out.full, cfg.missing_fraction, rng);
    }

    if (cfg.holdout_path) {
        out.train = out.full;
        out.holdout = dataset_from_table(read_csv_table(cfg.holdout_path->string(), opts), out.full.schema, opts, bins);
    } else if (cfg.holdout_fraction > 0) {
        const uint64_t seed = derive_seed(cfg.seed, kHoldout);
        const size_t n = out.full.num_records();
        out.train = out.full.select_rows(selected_rows(n, RowFilter::split(1.0 - cfg.holdout_fraction, seed, true)));
        out.holdout = out.full.select_rows(selected_rows(n, RowFilter::split(1.0 - cfg.holdout_fraction, seed, false)));
    } else {
        out.train = out.full;
    }

    const bool explicit_groups = !cfg.parties.empty() && !cfg.parties.front().attributes.empty();
    if (explicit_groups) {
        for (const auto& p : cfg.parties) {
            out.party_ids.push_back(p.id);
            out.groups.push_back(p.attributes);
        }
    } else {
        out.groups = equal_split(out.train, cfg.equal_split_seed ? *cfg.equal_split_seed : derive_seed(cfg.seed, kSplit));
        if (cfg.parties.empty()) {
            out.party_ids = {"party0", "party1"};
        } else {
            out.party_ids = {cfg.parties[0].id, cfg.parties[1].id};
        }
    }
    out.parts = partition_vertical(out.train, out.groups, out.party_ids);
    return out;
}

// ---- federation ----------------------------------------------------------

namespace {

CoordinatorOptions coordinator_options(const ExperimentConfig& cfg) {
    CoordinatorOptions o;
    o.cache = cfg.cache;
    o.seed = derive_seed(cfg.seed, kSessions);
    return o;
}

class Federation {
public:
    Federation(const ExperimentConfig& cfg, const PreparedData& data) : cfg_(cfg) {
        if (cfg.transport == TransportMode::in_process) {
            local_ = std::make_unique<InProcessFederation>(data.parts, derive_seed(cfg.seed, kCommodity),
                                                           coordinator_options(cfg));
        } else {
            std::vector<std::pair<std::string, Endpoint>> endpoints;
            for (const auto& id : data.party_ids) {
                for (const auto& p : cfg.parties) {
                    if (p.id == id) endpoints.emplace_back(id, *p.address);
                }
            }
            remote_ = std::make_unique<SocketFederation>(endpoints, coordinator_options(cfg));
        }
    }

    Coordinator& coordinator() { return local_ ? local_->coordinator() : remote_->coordinator(); }

    void finish() {
        if (!remote_ || !cfg_.shutdown_on_finish) return;
        remote_->coordinator().shutdown_parties();
        try {
            SocketLink link(*cfg_.commodity, 2000);
            link.call({SessionId{}, Phase::shutdown, {}});
        } catch (const std::exception&) {
            // commodity already stopped
        }
    }

private:
    const ExperimentConfig& cfg_;
    std::unique_ptr<InProcessFederation> local_;
    std::unique_ptr<SocketFederation> remote_;
};

TrainOptions train_options(const ExperimentConfig& cfg) {
    TrainOptions o;
    if (cfg.structure_path) {
        o.structure = load_network_file(cfg.structure_path->string()).structure;
    } else {
        o.k2 = K2Config{*cfg.node_order, cfg.max_parents};
    }
    o.n_synth = cfg.n_synth;
    o.em = cfg.em;
    o.alpha = cfg.alpha;
    o.seed = derive_seed(cfg.seed, kTrain);
    return o;
}

fs::path make_run_dir(const ExperimentConfig& cfg, const fs::path& out_root) {
    const fs::path dir = out_root / run_id(cfg);
    if (fs::exists(dir) && !fs::is_empty(dir)) {
        throw ConfigError("run directory " + dir.string() + " already exists; refusing to overwrite");
    }
    fs::create_directories(dir);
    return dir;
}

json counter_json(const ComplexityCounter& c) {
    return {{"protocols_run", c.protocols_run},
            {"subprotocols_run", c.subprotocols_run},
            {"multiplications", c.multiplications}};
}

// Central baseline on the pooled training rows: ML on complete data, EM on
// data with missing cells.
BayesianNetwork central_model(const ExperimentConfig& cfg, const PreparedData& data) {
    CentralCounter central(data.train);
    NetworkStructure structure;
    if (cfg.structure_path) {
        structure = bind_structure(load_network_file(cfg.structure_path->string()).structure, central.schema());
    } else {
        structure = k2_search(central, K2Config{*cfg.node_order, cfg.max_parents});
    }
    if (data.train.missing_cells() == 0) return ml_parameters(structure, central, cfg.alpha);
    EmConfig em = cfg.em;
    em.seed = derive_seed(cfg.seed, kEm + 100);
    return em_train(structure, data.train, em).network;
}

std::vector<std::vector<int>> network_records(const BayesianNetwork& net, const Dataset& data) {
    std::vector<int> cols;
    for (const auto& node : net.structure().nodes()) cols.push_back(data.attribute_index(node.name));
    std::vector<std::vector<int>> out;
    for (const auto& rec : data.records) {
        std::vector<int> row;
        for (int c : cols) row.push_back(rec[c]);
        out.push_back(std::move(row));
    }
    return out;
}

std::optional<double> finite_aic(const BayesianNetwork& net, const Dataset& data) {
    const LogLikelihood a = aic(net, network_records(net, data));
    if (!a.finite()) return std::nullopt;
    return a.value;
}

}  // namespace

json train_report_json(const TrainReport& r) {
    json j;
    json edges = json::array();
    for (const auto& [p, c] : r.structure.edges()) edges.push_back({p, c});
    j["edges"] = edges;
    j["free_parameters_intermediate"] = r.structure.free_parameters();
    j["free_parameters_final"] = r.final_network.structure().free_parameters();
    j["synthetic"] = {{"records", r.synthetic_records},
                      {"missing_cells", r.synthetic_missing_cells},
                      {"missing_rate", r.synthetic_missing_rate}};
    json traces = json::array();
    for (const auto& t : r.traces) {
        traces.push_back({{"restart", t.restart}, {"converged", t.converged}, {"log_likelihood", t.log_likelihood}});
    }
    j["em"] = {{"best_restart", r.best_restart}, {"final_log_likelihood", r.final_log_likelihood}, {"traces", traces}};
    if (r.k2_ledger) {
        json steps = json::array();
        for (const auto& s : r.k2_ledger->steps) {
            steps.push_back({{"node", s.node}, {"parents", s.parents}, {"score", s.score}});
        }
        j["k2"] = {{"steps", steps}, {"queries", r.k2_ledger->queries}};
    }
    j["count_queries"] = r.count_queries;
    j["complexity"] = counter_json(r.complexity);
    return j;
}

json complexity_json(const ComplexityCounter& c, size_t parties, uint64_t queries, uint64_t sessions,
                     uint64_t cache_hits) {
    json j = counter_json(c);
    j["parties"] = parties;
    j["count_queries"] = queries;
    j["sessions"] = sessions;
    j["cache_hits"] = cache_hits;
    j["subprotocols_per_protocol"] = parties >= 2 ? subprotocol_count(static_cast<int>(parties)) : 0;
    j["measured_subprotocols_per_protocol"] =
        c.protocols_run ? static_cast<double>(c.subprotocols_run) / static_cast<double>(c.protocols_run) : 0.0;
    return j;
}

RunOutput cmd_train(const ExperimentConfig& cfg, const fs::path& out_root) {
    const PreparedData data = prepare_data(cfg);
    const TrainOptions options = train_options(cfg);
    RunOutput out{make_run_dir(cfg, out_root), {}};
    Federation fed(cfg, data);
    Coordinator& coord = fed.coordinator();
    const TrainReport report = federated_train(coord, options);
    auto emit = [&](const std::string& name, const std::string& text) {
        write_file(out.dir / name, text);
        out.files.push_back(name);
    };
    emit("intermediate.bn", network_to_string(report.intermediate));
    emit("final.bn", network_to_string(report.final_network));
    if (cfg.sanitize_k) emit("final_sanitized.bn", network_to_string(sanitize_cpts(report.final_network, *cfg.sanitize_k, coord)));
    emit("train_report.json", train_report_json(report).dump(2) + "\n");
    emit("complexity.json", complexity_json(coord.complexity(), coord.num_parties(), coord.queries(),
                                            coord.sessions_run(), coord.cache_hits())
                                    .dump(2) +
                                "\n");
    fed.finish();
    return out;
}

RunOutput cmd_validate(const ExperimentConfig& cfg, const fs::path& out_root) {
    if (cfg.schemes.empty()) throw ConfigError("validate mode needs a validation section");
    const PreparedData data = prepare_data(cfg);
    const bool wants_public =
        std::find(cfg.schemes.begin(), cfg.schemes.end(), Scheme::public_holdout) != cfg.schemes.end();
    if (wants_public && !data.holdout) throw ConfigError("public validation needs holdout_fraction or holdout_path");
    const TrainOptions options = train_options(cfg);
    ValidationPlan plan;
    plan.folds = cfg.folds;
    plan.target = cfg.target;
    plan.split_fraction = cfg.split_fraction;
    plan.seed = derive_seed(cfg.seed, kValidation);
    plan.min_validation_rows = cfg.min_validation_rows;
    plan.validate();

    RunOutput out{make_run_dir(cfg, out_root), {}};
    Federation fed(cfg, data);
    Coordinator& coord = fed.coordinator();
    const TrainReport report = federated_train(coord, options);

    ComparisonRow row;
    row.dataset = cfg.name;
    row.missing_level = cfg.missing_fraction;
    std::vector<MetricsReport> reports;
    const BayesianNetwork central = central_model(cfg, data);
    row.aic_central = finite_aic(central, data.train);
    row.aic_federated = finite_aic(report.final_network, data.train);
    for (Scheme s : cfg.schemes) {
        switch (s) {
            case Scheme::public_holdout: {
                MetricsReport central_report = validate_public(central, *data.holdout, cfg.target);
                central_report.scheme = "central";
                row.central_auc = central_report.mean_auc;
                reports.push_back(std::move(central_report));
                reports.push_back(validate_public(report.final_network, *data.holdout, cfg.target));
                row.public_auc = reports.back().mean_auc;
                break;
            }
            case Scheme::scv: {
                const size_t n = cfg.n_synth ? cfg.n_synth : coord.num_records();
                reports.push_back(validate_scv(report.intermediate, report.structure, plan, cfg.em, n));
                row.scv_auc = reports.back().mean_auc ? reports.back().mean_auc : reports.back().pooled_auc;
                break;
            }
            case Scheme::svdg: {
                reports.push_back(validate_svdg(coord, plan, options));
                row.svdg_auc = reports.back().mean_auc;
                break;
            }
        }
    }
    const ComparisonRow rows[] = {row};
    write_file(out.dir / "final.bn", network_to_string(report.final_network));
    write_file(out.dir / "validation.tsv", comparison_tsv(rows));
    write_file(out.dir / "validation.json", metrics_json(reports, rows));
    out.files = {"final.bn", "validation.tsv", "validation.json"};
    fed.finish();
    return out;
}

RunOutput cmd_benchmark(const ExperimentConfig& cfg, const fs::path& out_root) {
    const PreparedData data = prepare_data(cfg);
    RunOutput out{make_run_dir(cfg, out_root), {}};
    const auto start = std::chrono::steady_clock::now();
    Federation fed(cfg, data);
    Coordinator& coord = fed.coordinator();
    NetworkStructure structure;
    if (cfg.structure_path) {
        structure = bind_structure(load_network_file(cfg.structure_path->string()).structure, coord.schema());
    } else {
        structure = k2_search(coord, K2Config{*cfg.node_order, cfg.max_parents});
    }
    const ComplexityCounter before = coord.complexity();
    ml_parameters(structure, coord, cfg.alpha);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const ComplexityCounter ml = coord.complexity() - before;

    size_t combinations = 0;
    for (size_t i = 0; i < structure.size(); ++i) {
        combinations += structure.parent_configurations(i) * structure.node(i).cardinality();
    }
    json j = complexity_json(coord.complexity(), coord.num_parties(), coord.queries(), coord.sessions_run(),
                             coord.cache_hits());
    j["records"] = coord.num_records();
    j["parent_child_combinations"] = combinations;
    j["parameter_learning"] = counter_json(ml);
    j["wall_seconds"] = seconds;
    write_file(out.dir / "benchmark.json", j.dump(2) + "\n");
    out.files = {"benchmark.json"};
    fed.finish();
    return out;
}

void cmd_party(const ExperimentConfig& cfg, const std::string& party_id, std::atomic<bool>& stop) {
    if (!cfg.commodity) throw ConfigError("party mode needs a commodity address");
    const PartyConfig* me = nullptr;
    for (const auto& p : cfg.parties) {
        if (p.id == party_id) me = &p;
    }
    if (!me || !me->address) throw ConfigError("party '" + party_id + "' has no address in the config");
    PreparedData data = prepare_data(cfg);
    for (auto& part : data.parts) {
        if (part.party_id == party_id) {
            serve_party(std::move(part), *me->address, *cfg.commodity, stop);
            return;
        }
    }
    throw ConfigError("party '" + party_id + "' holds no attributes");
}

void cmd_commodity(const ExperimentConfig& cfg, std::atomic<bool>& stop) {
    if (!cfg.commodity) throw ConfigError("commodity mode needs transport.commodity");
    serve_commodity(derive_seed(cfg.seed, kCommodity), *cfg.commodity, stop);
}

}  // namespace fedbn::app
