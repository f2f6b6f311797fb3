#include <doctest.h>

#include <cmath>
#include <json.hpp>
#include <set>

#include "builders.hpp"
#include "fedbn/errors.hpp"
#include "fedbn/validation.hpp"
#include "oracles.hpp"

using namespace fedbn;

namespace {

BayesianNetwork asia() { return load_network_file(std::string(FEDBN_SOURCE_DIR) + "/data/asia.bn").network(); }

std::vector<std::vector<double>> binary_scores(const std::vector<double>& p1) {
    std::vector<std::vector<double>> out;
    for (double p : p1) out.push_back({1 - p, p});
    return out;
}

/// Target T with one informative parent X: P(T=1 | X=x) given per state.
BayesianNetwork channel(double p_given_0, double p_given_1) {
    return build::network({
        {"X", build::binary(), {}, {{0.5, 0.5}}},
        {"T", build::binary(), {"X"}, {{1 - p_given_0, p_given_0}, {1 - p_given_1, p_given_1}}},
        {"N", build::binary(), {}, {{0.3, 0.7}}},
    });
}

/// Records every row filter it is asked about.
class FilterSpy : public CountOracle {
public:
    explicit FilterSpy(CountOracle& base) : base_(base) {}
    uint64_t count(const Conditions& c, const RowFilter& rows) override {
        ++queries_;
        seen.insert(rows);
        return base_.count(c, rows);
    }
    const std::vector<AttributeSchema>& schema() const override { return base_.schema(); }
    size_t num_records() const override { return base_.num_records(); }
    uint64_t queries() const override { return queries_; }
    std::set<RowFilter> seen;

private:
    CountOracle& base_;
    uint64_t queries_ = 0;
};

}  // namespace

TEST_CASE("AUC examples") {
    const std::vector<int> labels{1, 0, 1, 0};
    CHECK(binary_auc(std::vector<double>{0.9, 0.1, 0.8, 0.2}, labels) == 1.0);
    CHECK(binary_auc(std::vector<double>{0.5, 0.5, 0.5, 0.5}, labels) == 0.5);
    CHECK(binary_auc(std::vector<double>{0.9, 0.8, 0.4, 0.3}, labels) == 0.75);
    CHECK(auc(binary_scores({0.9, 0.8, 0.4, 0.3}), labels) == 0.75);
    CHECK_THROWS_AS(binary_auc(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 1}), UndefinedAucError);
    CHECK_THROWS_AS(auc(binary_scores({0.1, 0.2}), std::vector<int>{0, 0}), UndefinedAucError);
}

TEST_CASE("AUC equals the concordant pair fraction") {
    Rng rng(51);
    for (int trial = 0; trial < 200; ++trial) {
        const size_t n = 2 + rng.below(60);
        std::vector<double> s(n);
        std::vector<int> y(n);
        for (size_t i = 0; i < n; ++i) {
            s[i] = static_cast<double>(rng.below(8)) / 8.0;  // coarse, so ties are common
            y[i] = static_cast<int>(rng.below(2));
        }
        y[0] = 0;
        y[1] = 1;
        CHECK(binary_auc(s, y) == doctest::Approx(oracle::concordant_auc(s, y)).epsilon(1e-12));
    }
}

TEST_CASE("AUC rank invariances") {
    Rng rng(52);
    for (int trial = 0; trial < 100; ++trial) {
        const size_t n = 10 + rng.below(50);
        std::vector<double> s(n), t(n), neg(n);
        std::vector<int> y(n);
        for (size_t i = 0; i < n; ++i) {
            s[i] = rng.uniform();
            t[i] = std::exp(3 * s[i]) - 7;
            neg[i] = -s[i];
            y[i] = i < 2 ? static_cast<int>(i) : static_cast<int>(rng.below(2));
        }
        const double a = binary_auc(s, y);
        CHECK(a >= 0.0);
        CHECK(a <= 1.0);
        CHECK(binary_auc(t, y) == doctest::Approx(a).epsilon(1e-12));
        CHECK(a + binary_auc(neg, y) == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("multiclass AUC is the prevalence-weighted one-vs-rest mean") {
    Rng rng(53);
    for (int trial = 0; trial < 50; ++trial) {
        const size_t n = 30 + rng.below(40);
        std::vector<std::vector<double>> scores(n, std::vector<double>(3));
        std::vector<int> y(n);
        for (size_t i = 0; i < n; ++i) {
            double tot = 0;
            for (auto& v : scores[i]) tot += (v = rng.uniform());
            for (auto& v : scores[i]) v /= tot;
            y[i] = static_cast<int>(i < 3 ? i : rng.below(3));
        }
        double expected = 0;
        for (int c = 0; c < 3; ++c) {
            std::vector<double> sc;
            std::vector<int> lc;
            double prevalence = 0;
            for (size_t i = 0; i < n; ++i) {
                sc.push_back(scores[i][static_cast<size_t>(c)]);
                lc.push_back(y[i] == c);
                prevalence += y[i] == c;
            }
            expected += prevalence / static_cast<double>(n) * oracle::concordant_auc(sc, lc);
        }
        CHECK(auc(scores, y) == doctest::Approx(expected).epsilon(1e-12));
    }
    // an absent class is skipped and the weights renormalize over present ones
    const std::vector<std::vector<double>> s3{{0.7, 0.2, 0.1}, {0.1, 0.8, 0.1}, {0.6, 0.3, 0.1}, {0.2, 0.7, 0.1}};
    CHECK(auc(s3, std::vector<int>{0, 1, 0, 1}) == 1.0);
}

TEST_CASE("public validation on a perfect deterministic channel") {
    const auto net = channel(0.0, 1.0);
    Rng rng(54);
    const auto holdout = oracle::sample_dataset(net, 500, rng);
    const auto report = validate_public(net, holdout, "T");
    REQUIRE(report.mean_auc.has_value());
    CHECK(*report.mean_auc == 1.0);
    CHECK(report.evaluated_records == 500);
    REQUIRE(report.aic.has_value());
    CHECK(std::isfinite(*report.aic));
    const auto again = validate_public(net, holdout, "T");
    CHECK(*again.mean_auc == *report.mean_auc);
    CHECK(*again.aic == *report.aic);
}

TEST_CASE("public validation with an independent target is near chance") {
    const auto net = channel(0.4, 0.4);
    Rng rng(55);
    const auto report = validate_public(net, oracle::sample_dataset(net, 2000, rng), "T");
    CHECK(std::abs(*report.mean_auc - 0.5) <= 0.05);
}

TEST_CASE("an informative channel scores clearly above chance") {
    // total variation between the class conditionals is 0.4
    const auto net = channel(0.3, 0.7);
    Rng rng(56);
    const auto report = validate_public(net, oracle::sample_dataset(net, 2000, rng), "T");
    CHECK(*report.mean_auc >= 0.6);
}

TEST_CASE("public validation skips missing targets and marginalizes missing evidence") {
    const auto net = channel(0.1, 0.9);
    Rng rng(57);
    auto holdout = oracle::sample_dataset(net, 300, rng);
    for (size_t r = 0; r < 20; ++r) holdout.records[r][1] = kMissing;
    for (size_t r = 20; r < 40; ++r) holdout.records[r][0] = kMissing;
    const auto report = validate_public(net, holdout, "T");
    CHECK(report.excluded_missing_target == 20);
    CHECK(report.evaluated_records == 280);
    const auto scored = score_records(net, holdout, "T");
    // X missing leaves the prior of T
    CHECK(scored.scores[0][1] == doctest::Approx(0.5));
    CHECK_THROWS_AS(validate_public(net, holdout, "nope"), SchemaError);
}

TEST_CASE("SCV on a faithful intermediate model tracks the public holdout") {
    Rng rng(58);
    const auto truth = asia();
    const auto train = oracle::sample_dataset(truth, 4000, rng);
    const auto holdout = oracle::sample_dataset(truth, 2000, rng);
    CentralCounter central(train);
    const auto intermediate = ml_parameters(truth.structure(), central);
    ValidationPlan plan{.scheme = Scheme::scv, .folds = 10, .target = "bronc", .seed = 4};
    const EmConfig em{.restarts = 1, .max_iterations = 30, .tolerance = 1e-6, .seed = 2};
    const auto scv = validate_scv(intermediate, truth.structure(), plan, em, 4000);
    const auto pub = validate_public(intermediate, holdout, "bronc");
    CHECK(scv.folds.size() == 10);
    for (const auto& f : scv.folds) CHECK(f.auc.has_value());
    CHECK(std::abs(*scv.mean_auc - *pub.mean_auc) <= 0.05);
    CHECK(scv.evaluated_records == 4000);
}

TEST_CASE("SCV leave-one-out completes") {
    Rng rng(59);
    const auto net = channel(0.2, 0.8);
    ValidationPlan plan{.scheme = Scheme::scv, .folds = 50, .target = "T", .seed = 1};
    const auto report = validate_scv(net, net.structure(), plan, {.restarts = 1, .max_iterations = 10, .seed = 1}, 50);
    CHECK(report.folds.size() == 50);
    for (const auto& f : report.folds) {
        CHECK(f.records == 1);
        CHECK_FALSE(f.auc.has_value());
        CHECK_FALSE(f.note.empty());
    }
    CHECK_FALSE(report.mean_auc.has_value());
    CHECK(report.pooled_auc.has_value());
    plan.folds = 51;
    CHECK_THROWS_AS(validate_scv(net, net.structure(), plan, {}, 50), SizingError);
}

TEST_CASE("plan validation") {
    ValidationPlan plan{.target = "T"};
    CHECK_NOTHROW(plan.validate());
    plan.folds = 1;
    CHECK_THROWS_AS(plan.validate(), ConfigError);
    plan.folds = 10;
    plan.split_fraction = 1.0;
    CHECK_THROWS_AS(plan.validate(), ConfigError);
    plan.split_fraction = 0.5;
    plan.target.clear();
    CHECK_THROWS_AS(plan.validate(), ConfigError);
    CHECK(parse_scheme("svdg") == Scheme::svdg);
    CHECK(scheme_name(Scheme::public_holdout) == "public");
    CHECK_THROWS_AS(parse_scheme("bogus"), ConfigError);
}

TEST_CASE("SVDG refuses undersized validation splits") {
    Rng rng(60);
    const auto ds = oracle::sample_dataset(channel(0.2, 0.8), 20, rng);
    CentralCounter central(ds);
    ValidationPlan plan{.scheme = Scheme::svdg, .target = "T", .split_fraction = 0.9, .seed = 3};
    TrainOptions train;
    train.structure = channel(0.2, 0.8).structure();
    CHECK_THROWS_AS(validate_svdg(central, plan, train), SizingError);
}

TEST_CASE("SVDG uses disjoint, exhaustive row sets") {
    Rng rng(61);
    const auto ds = oracle::sample_dataset(asia(), 600, rng);
    CentralCounter central(ds);
    FilterSpy spy(central);
    ValidationPlan plan{.scheme = Scheme::svdg, .target = "lung", .split_fraction = 0.7, .seed = 9};
    TrainOptions train;
    train.structure = asia().structure();
    train.em = {.restarts = 1, .max_iterations = 20, .seed = 1};
    const auto report = validate_svdg(spy, plan, train);
    REQUIRE(spy.seen.size() == 2);
    std::vector<int> hits(600, 0);
    for (const auto& f : spy.seen) {
        CHECK(f.kind != RowFilter::Kind::all);
        for (size_t r : selected_rows(600, f)) ++hits[r];
    }
    for (int h : hits) CHECK(h == 1);
    CHECK(report.evaluated_records == selected_rows(600, RowFilter::split(0.7, 9, false)).size());
}

TEST_CASE("SVDG on complete Asia data tracks the public holdout") {
    Rng rng(62);
    const auto truth = asia();
    const auto ds = oracle::sample_dataset(truth, 5000, rng);
    const auto holdout = oracle::sample_dataset(truth, 2000, rng);
    InProcessFederation fed(partition_vertical(ds, {{"asia", "smoke", "tub", "lung"}, {"bronc", "either", "xray", "dysp"}}), 4);
    ValidationPlan plan{.scheme = Scheme::svdg, .target = "bronc", .split_fraction = 0.8, .seed = 5};
    TrainOptions train;
    train.structure = truth.structure();
    train.em = {.restarts = 2, .max_iterations = 30, .seed = 3};
    train.seed = 6;
    const auto svdg = validate_svdg(fed.coordinator(), plan, train);
    const auto trained = federated_train(fed.coordinator(), train);
    const auto pub = validate_public(trained.final_network, holdout, "bronc");
    CHECK(std::abs(*svdg.mean_auc - *pub.mean_auc) <= 0.05);
}

TEST_CASE("sanitize replaces unsupported rows by the marginal") {
    Dataset ds;
    ds.schema = {{"Y", {"y0", "y1"}}, {"X", {"x0", "x1", "x2"}}};
    // y1 never occurs
    for (int r = 0; r < 40; ++r) ds.records.push_back({0, r % 4 == 0 ? 2 : r % 2});
    CentralCounter central(ds);
    const auto ml = ml_parameters(NetworkStructure(ds.schema, {{}, {0}}), central);
    const auto safe = sanitize_cpts(ml, 10, central);
    const auto row = safe.cpt(1).row(1);
    // marginal of X: 20 x0... computed from the filter oracle, then clamped with ε = 1/(2·3)
    const double total = 40;
    std::vector<double> marginal;
    for (int x = 0; x < 3; ++x) marginal.push_back(static_cast<double>(oracle::filter_count(ds, {{"X", x}})) / total);
    for (size_t k = 0; k < 3; ++k) CHECK(row[k] == doctest::Approx(marginal[k]));
}

TEST_CASE("sanitize clamps a certain entry") {
    Dataset ds;
    ds.schema = {{"A", {"a0", "a1"}}};
    for (int r = 0; r < 100; ++r) ds.records.push_back({1});
    CentralCounter central(ds);
    const auto ml = ml_parameters(NetworkStructure(ds.schema), central);
    CHECK(ml.cpt(0).at(0, 1) == 1.0);
    const auto safe = sanitize_cpts(ml, 10, central);
    CHECK(safe.cpt(0).at(0, 1) == doctest::Approx(1.0 - 1.0 / 204.0).epsilon(1e-15));
    CHECK(safe.cpt(0).at(0, 0) == doctest::Approx(1.0 / 204.0).epsilon(1e-15));
}

TEST_CASE("sanitize leaves compliant networks untouched and is idempotent") {
    Rng rng(63);
    for (int trial = 0; trial < 10; ++trial) {
        const auto net = oracle::random_network(5, rng, 3, 2, 0.5);
        const auto ds = oracle::sample_dataset(net, 80 + rng.below(400), rng);
        CentralCounter central(ds);
        const auto ml = ml_parameters(net.structure(), central);
        const size_t k = 1 + rng.below(15);
        const auto once = sanitize_cpts(ml, k, central);
        CHECK(sanitize_cpts(once, k, central) == once);
        for (const auto& cpt : once.cpts()) {
            for (size_t j = 0; j < cpt.rows(); ++j) {
                double sum = 0;
                for (double v : cpt.row(j)) {
                    CHECK(v > 0.0);
                    CHECK(v < 1.0);
                    sum += v;
                }
                CHECK(std::abs(sum - 1.0) <= 1e-9);
            }
        }
    }
    Dataset ds;
    ds.schema = {{"A", {"a0", "a1"}}};
    for (int r = 0; r < 100; ++r) ds.records.push_back({r % 3 == 0});
    CentralCounter central(ds);
    const auto ml = ml_parameters(NetworkStructure(ds.schema), central);
    CHECK(sanitize_cpts(ml, 10, central) == ml);
}

TEST_CASE("comparison table and JSON report") {
    ComparisonRow row{"asia", 0.1, 0.9, 0.88, 0.87, 0.86, -1000.0, -1030.0};
    CHECK(*row.aic_difference_percent() == doctest::Approx(3.0));
    ComparisonRow partial{"x", 0.0};
    CHECK_FALSE(partial.aic_difference_percent().has_value());
    const ComparisonRow rows[] = {row, partial};
    const auto tsv = comparison_tsv(rows);
    CHECK(tsv.rfind("dataset\tmissing\tauc_central\tauc_public\tauc_scv\tauc_svdg\taic_central\taic_federated\taic_diff_pct\n", 0) == 0);
    CHECK(tsv.find("asia\t0.10\t") != std::string::npos);
    CHECK(std::count(tsv.begin(), tsv.end(), '\n') == 3);

    MetricsReport m;
    m.scheme = "public";
    m.target = "T";
    m.folds.push_back({0, 12, 0.7, {}});
    m.mean_auc = 0.7;
    const MetricsReport reports[] = {m};
    const auto j = nlohmann::json::parse(metrics_json(reports, rows));
    CHECK(j["reports"][0]["scheme"] == "public");
    CHECK(j["reports"][0]["folds"][0]["records"] == 12);
    CHECK(j["table"][0]["aic_diff_pct"].get<double>() == doctest::Approx(3.0));
    CHECK(j["table"][1]["auc_central"].is_null());
}

TEST_CASE("records with impossible evidence are scored with the prior") {
    const auto net = build::network({
        {"A", build::binary(), {}, {{0.5, 0.5}}},
        {"B", build::binary(), {"A"}, {{1.0, 0.0}, {0.0, 1.0}}},
        {"T", build::binary(), {"A"}, {{0.8, 0.2}, {0.4, 0.6}}},
    });
    Dataset ds;
    ds.schema = net.structure().nodes();
    ds.records = {{0, 1, 1}, {0, 0, 0}, {1, 1, 1}};
    const auto scored = score_records(net, ds, "T");
    CHECK(scored.zero_probability_evidence == 1);
    CHECK(scored.scores[0][1] == doctest::Approx(0.4));
    CHECK(scored.scores[1][1] == doctest::Approx(0.2));
    CHECK(validate_public(net, ds, "T").zero_probability_evidence == 1);
}
