#include <doctest.h>

#include <cmath>

#include "builders.hpp"
#include "fedbn/errors.hpp"
#include "fedbn/params.hpp"
#include "oracles.hpp"

using namespace fedbn;

namespace {

BayesianNetwork asia() { return load_network_file(std::string(FEDBN_SOURCE_DIR) + "/data/asia.bn").network(); }

/// Σ_r log P(observed cells of r) by full-joint summation.
double reference_log_likelihood(const BayesianNetwork& net, const Dataset& data) {
    double ll = 0;
    for (const auto& rec : data.records) ll += std::log(oracle::marginal(net, rec));
    return ll;
}

Dataset column(std::vector<int> cells) {
    Dataset ds;
    ds.schema = {{"X", {"0", "1"}}};
    for (int c : cells) ds.records.push_back({c});
    return ds;
}

}  // namespace

TEST_CASE("ML entries are count ratios") {
    Dataset ds;
    ds.schema = {{"Y", {"y0", "y1", "y2"}}, {"X", {"x0", "x1"}}};
    ds.records = {{0, 1}, {0, 1}, {0, 1}, {0, 0}, {1, 0}, {1, 1}};
    NetworkStructure s(ds.schema, {{}, {0}});
    CentralCounter central(ds);
    const auto net = ml_parameters(s, central);
    CHECK(net.cpt(1).at(0, 1) == 0.75);
    CHECK(net.cpt(1).at(1, 0) == 0.5);
    // y2 never occurs, so its row falls back to uniform
    CHECK(net.cpt(1).at(2, 0) == 0.5);
    CHECK(net.cpt(1).at(2, 1) == 0.5);
    CHECK(net.cpt(0).at(0, 2) == 0.0);

    const auto smoothed = ml_parameters(s, central, 1.0);
    CHECK(smoothed.cpt(1).at(0, 1) == doctest::Approx(4.0 / 6.0));
    CHECK(smoothed.cpt(0).at(0, 2) == doctest::Approx(1.0 / 9.0));
    CHECK_THROWS_AS(ml_parameters(s, central, -1.0), DomainError);
}

TEST_CASE("federated ML is bit-identical to central ML") {
    Rng rng(41);
    for (int trial = 0; trial < 6; ++trial) {
        const auto net = oracle::random_network(10, rng, 3, 2, 0.35);
        auto ds = oracle::sample_dataset(net, 200 + rng.below(300), rng);
        if (trial % 2) ds = inject_missing(ds, 0.08, rng);
        CentralCounter central(ds);
        InProcessFederation fed(partition_vertical(ds, oracle::random_groups(ds, 2 + rng.below(2), rng)), rng.next());
        const auto a = ml_parameters(net.structure(), central);
        const auto b = ml_parameters(net.structure(), fed.coordinator());
        CHECK(a == b);
        // and every entry is exactly count / row total from the filter oracle
        const auto& s = a.structure();
        for (size_t i = 0; i < s.size(); ++i) {
            for (size_t j = 0; j < a.cpt(i).rows(); ++j) {
                const auto config = parent_states_of_row(s, i, j);
                std::map<std::string, int> cond;
                for (size_t p = 0; p < config.size(); ++p) {
                    const size_t parent = static_cast<size_t>(s.parents(i)[p]);
                    cond[s.node(parent).name] = condition_state(s.node(parent), config[p]);
                }
                const double row_total = static_cast<double>(oracle::filter_count(ds, cond));
                for (size_t k = 0; k < s.node(i).cardinality(); ++k) {
                    auto ck = cond;
                    ck[s.node(i).name] = condition_state(s.node(i), static_cast<int>(k));
                    const double expected = row_total > 0 ? static_cast<double>(oracle::filter_count(ds, ck)) / row_total
                                                          : 1.0 / static_cast<double>(s.node(i).cardinality());
                    CHECK(a.cpt(i).at(j, k) == expected);
                }
            }
        }
    }
}

TEST_CASE("MISSING is a modeled state only where cells are missing") {
    Rng rng(42);
    auto ds = oracle::sample_dataset(asia(), 500, rng);
    ds.records[3][2] = kMissing;
    ds.records[9][5] = kMissing;
    CentralCounter central(ds);
    const auto net = ml_parameters(asia().structure(), central);
    for (size_t i = 0; i < net.size(); ++i) {
        CHECK(net.structure().node(i).has_missing_state() == (i == 2 || i == 5));
    }
}

TEST_CASE("bind_structure rejects mismatched schemas") {
    const auto s = asia().structure();
    auto schema = s.nodes();
    schema.pop_back();
    CHECK_THROWS_AS(bind_structure(s, schema), SchemaError);
    schema = s.nodes();
    schema[0].states = {"a", "b"};
    CHECK_THROWS_AS(bind_structure(s, schema), SchemaError);
    schema = s.nodes();
    schema[1] = with_missing_state(schema[1]);
    CHECK(bind_structure(s, schema).node(1).has_missing_state());
}

TEST_CASE("synthetic data without MISSING mass is complete") {
    Rng rng(43);
    const auto ds = generate_synthetic(asia(), 2000, rng);
    CHECK(ds.num_records() == 2000);
    CHECK(ds.missing_cells() == 0);
    CHECK(ds.schema == asia().structure().nodes());
}

TEST_CASE("sampled MISSING states become missing cells") {
    auto gen = build::network({
        {"R", {"a", "b", kMissingLabel}, {}, {{0.4, 0.3, 0.3}}},
        {"C", {"u", "v"}, {"R"}, {{0.9, 0.1}, {0.2, 0.8}, {0.5, 0.5}}},
    });
    Rng rng(44);
    const auto ds = generate_synthetic(gen, 10000, rng);
    CHECK(ds.schema[0].states == std::vector<std::string>{"a", "b"});
    size_t missing = 0;
    for (const auto& rec : ds.records) missing += rec[0] == kMissing;
    const double rate = static_cast<double>(missing) / 10000.0;
    CHECK(rate >= 0.27);
    CHECK(rate <= 0.33);
    for (const auto& rec : ds.records) CHECK(rec[1] != kMissing);

    Rng again(44);
    const auto same = generate_synthetic(gen, 10000, again);
    CHECK(dataset_to_csv(same) == dataset_to_csv(ds));
}

TEST_CASE("synthetic samples reproduce the generator's CPTs") {
    const auto gen = asia();
    Rng rng(45);
    const auto ds = generate_synthetic(gen, 50000, rng);
    CentralCounter central(ds);
    const auto est = ml_parameters(gen.structure(), central);
    const auto& s = gen.structure();
    size_t rows_checked = 0;
    for (size_t i = 0; i < s.size(); ++i) {
        for (size_t j = 0; j < gen.cpt(i).rows(); ++j) {
            const auto config = parent_states_of_row(s, i, j);
            std::map<std::string, int> cond;
            for (size_t p = 0; p < config.size(); ++p) cond[s.node(static_cast<size_t>(s.parents(i)[p])).name] = config[p];
            if (oracle::filter_count(ds, cond) < 500) continue;
            ++rows_checked;
            for (size_t k = 0; k < s.node(i).cardinality(); ++k) {
                CHECK(std::abs(est.cpt(i).at(j, k) - gen.cpt(i).at(j, k)) <= 0.02);
            }
        }
    }
    CHECK(rows_checked >= 10);
}

TEST_CASE("EM on one binary column converges to the self-consistent fixed point") {
    const auto ds = column({1, 1, 0, kMissing});
    NetworkStructure s(ds.schema);
    const auto result = em_train(s, ds, {.restarts = 3, .max_iterations = 200, .tolerance = 1e-14, .seed = 1});
    // p ← (2 + p) / 4 has the fixed point 2/3
    CHECK(result.network.cpt(0).at(0, 1) == doctest::Approx(2.0 / 3.0).epsilon(1e-6));
    for (const auto& t : result.traces) CHECK(t.converged);
}

TEST_CASE("EM on complete data returns ML with identical restarts") {
    Rng rng(46);
    const auto ds = oracle::sample_dataset(asia(), 1000, rng);
    CentralCounter central(ds);
    const auto ml = ml_parameters(asia().structure(), central);
    const auto result = em_train(asia().structure(), ds, {.restarts = 4, .max_iterations = 50, .tolerance = 1e-9, .seed = 5});
    REQUIRE(result.traces.size() == 4);
    for (size_t i = 0; i < ml.size(); ++i) {
        for (size_t e = 0; e < ml.cpt(i).probabilities.size(); ++e) {
            CHECK(result.network.cpt(i).probabilities[e] == doctest::Approx(ml.cpt(i).probabilities[e]).epsilon(1e-12));
        }
    }
    const double final_ll = result.traces[0].log_likelihood.back();
    for (const auto& t : result.traces) {
        CHECK(t.converged);
        // one M-step reaches ML; the next E-step confirms no improvement
        CHECK(t.log_likelihood.size() == 3);
        CHECK(t.log_likelihood.back() == doctest::Approx(final_ll).epsilon(1e-12));
    }
}

TEST_CASE("EM traces ascend and report the true log-likelihood") {
    Rng rng(47);
    for (int trial = 0; trial < 8; ++trial) {
        const auto net = oracle::random_network(5, rng, 3, 2, 0.5);
        auto ds = inject_missing(oracle::sample_dataset(net, 300, rng), 0.15 + 0.05 * (trial % 3), rng);
        const auto result = em_train(net.structure(), ds, {.restarts = 3, .max_iterations = 60, .tolerance = 1e-7, .seed = rng.next()});
        double best = -INFINITY;
        for (const auto& t : result.traces) {
            for (size_t i = 1; i < t.log_likelihood.size(); ++i) {
                CHECK(t.log_likelihood[i] >= t.log_likelihood[i - 1] - 1e-9);
            }
            best = std::max(best, t.log_likelihood.back());
        }
        CHECK(result.log_likelihood == best);
        CHECK(result.traces[static_cast<size_t>(result.best_restart)].log_likelihood.back() == best);
        CHECK(result.log_likelihood == doctest::Approx(reference_log_likelihood(result.network, ds)).epsilon(1e-9));
    }
}

TEST_CASE("EM recovers parameters from MCAR data") {
    Rng rng(48);
    const auto truth = asia();
    const auto ds = inject_missing(oracle::sample_dataset(truth, 20000, rng), 0.2, rng);
    const auto result = em_train(truth.structure(), ds, {.restarts = 2, .max_iterations = 200, .tolerance = 1e-6, .seed = 3});
    // well-supported root and first-level entries
    CHECK(std::abs(result.network.cpt(1).at(0, 1) - truth.cpt(1).at(0, 1)) < 0.03);
    CHECK(std::abs(result.network.cpt(3).at(1, 1) - truth.cpt(3).at(1, 1)) < 0.03);
}

TEST_CASE("EM input validation") {
    const auto ds = column({1, 0});
    NetworkStructure s(ds.schema);
    CHECK_THROWS_AS(em_train(s, ds, {.restarts = 0}), DomainError);
    CHECK_THROWS_AS(em_train(s, ds, {.max_iterations = 0}), DomainError);
    CHECK_THROWS_AS(em_train(s, ds, {.tolerance = 0}), DomainError);

    NetworkStructure other({{"X", {"0", "1", "2"}}});
    CHECK_THROWS_AS(em_train(other, ds, {}), SchemaError);

    std::vector<AttributeSchema> wide;
    for (int i = 0; i < 21; ++i) wide.push_back({"c" + std::to_string(i), {"0", "1"}});
    Dataset gaps;
    gaps.schema = wide;
    gaps.records = {std::vector<int>(21, kMissing)};
    CHECK_THROWS_AS(em_train(NetworkStructure(wide), gaps, {.restarts = 1}), DomainError);
}

TEST_CASE("training pipeline") {
    Rng rng(49);
    auto ds = inject_missing(oracle::sample_dataset(asia(), 2000, rng), 0.1, rng);
    InProcessFederation fed(partition_vertical(ds, {{"asia", "smoke", "tub", "lung"}, {"bronc", "either", "xray", "dysp"}}), 9);
    TrainOptions opts;
    opts.structure = asia().structure();
    opts.em = {.restarts = 2, .max_iterations = 40, .tolerance = 1e-6, .seed = 3};
    opts.seed = 12;
    const auto report = federated_train(fed.coordinator(), opts);

    CHECK(report.synthetic_records == 2000);
    CHECK(report.synthetic_missing_rate > 0.05);
    CHECK(report.synthetic_missing_rate < 0.15);
    for (size_t i = 0; i < report.intermediate.size(); ++i) {
        CHECK(report.intermediate.structure().node(i).has_missing_state());
        CHECK_FALSE(report.final_network.structure().node(i).has_missing_state());
    }
    CHECK(report.traces.size() == 2);
    CHECK(report.complexity.protocols_run == fed.coordinator().sessions_run());
    CHECK(report.complexity.protocols_run > 0);
    CHECK(report.count_queries > 0);
    CHECK_FALSE(report.k2_ledger.has_value());

    SUBCASE("fixed seeds reproduce the report") {
        InProcessFederation again(partition_vertical(ds, {{"asia", "smoke", "tub", "lung"}, {"bronc", "either", "xray", "dysp"}}), 9);
        const auto second = federated_train(again.coordinator(), opts);
        CHECK(second.intermediate == report.intermediate);
        CHECK(second.final_network == report.final_network);
        CHECK(second.final_log_likelihood == report.final_log_likelihood);
        for (size_t r = 0; r < report.traces.size(); ++r) {
            CHECK(second.traces[r].log_likelihood == report.traces[r].log_likelihood);
        }
    }
    SUBCASE("structure and order together are rejected") {
        auto both = opts;
        both.k2 = K2Config{{"asia"}, 1};
        CHECK_THROWS_AS(federated_train(fed.coordinator(), both), ConfigError);
        auto neither = opts;
        neither.structure.reset();
        CHECK_THROWS_AS(federated_train(fed.coordinator(), neither), ConfigError);
    }
}

TEST_CASE("complete data gives an intermediate model without MISSING") {
    Rng rng(50);
    const auto ds = oracle::sample_dataset(asia(), 1500, rng);
    CentralCounter central(ds);
    TrainOptions opts;
    std::vector<std::string> order;
    for (const auto& a : ds.schema) order.push_back(a.name);
    opts.k2 = K2Config{order, 2};
    opts.em = {.restarts = 1, .max_iterations = 20, .tolerance = 1e-6, .seed = 1};
    const auto report = federated_train(central, opts);
    CHECK(report.synthetic_missing_cells == 0);
    REQUIRE(report.k2_ledger.has_value());
    for (const auto& node : report.intermediate.structure().nodes()) CHECK_FALSE(node.has_missing_state());
}
