#include "fedbn/validation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include <json.hpp>

#include "fedbn/errors.hpp"

namespace fedbn {

double binary_auc(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size()) throw DomainError("scores and labels differ in length");
    const size_t n = scores.size();
    std::vector<size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return scores[a] < scores[b]; });
    double rank_sum = 0.0;
    size_t positives = 0;
    for (size_t i = 0; i < n;) {
        size_t j = i;
        while (j < n && scores[idx[j]] == scores[idx[i]]) ++j;
        const double midrank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
        for (size_t k = i; k < j; ++k) {
            if (labels[idx[k]] == 1) {
                rank_sum += midrank;
                ++positives;
            }
        }
        i = j;
    }
    const size_t negatives = n - positives;
    if (positives == 0 || negatives == 0) throw UndefinedAucError("AUC needs both positive and negative records");
    const double p = static_cast<double>(positives);
    return (rank_sum - p * (p + 1) / 2) / (p * static_cast<double>(negatives));
}

double auc(std::span<const std::vector<double>> scores, std::span<const int> labels) {
    if (scores.size() != labels.size()) throw DomainError("scores and labels differ in length");
    if (scores.empty()) throw UndefinedAucError("no records to score");
    const size_t classes = scores[0].size();
    if (classes < 2) throw UndefinedAucError("target has a single state");
    std::vector<size_t> prevalence(classes, 0);
    for (int l : labels) {
        if (l < 0 || static_cast<size_t>(l) >= classes) throw DomainError("label out of range");
        ++prevalence[l];
    }
    const size_t present = static_cast<size_t>(std::count_if(prevalence.begin(), prevalence.end(),
                                                             [](size_t c) { return c > 0; }));
    if (present < 2) throw UndefinedAucError("labels contain a single class");

    std::vector<double> column(scores.size());
    std::vector<int> hit(labels.size());
    auto one_vs_rest = [&](size_t c) {
        for (size_t r = 0; r < scores.size(); ++r) {
            column[r] = scores[r].at(c);
            hit[r] = labels[r] == static_cast<int>(c);
        }
        return binary_auc(column, hit);
    };
    if (classes == 2) return one_vs_rest(1);
    double total = 0.0;
    for (size_t c = 0; c < classes; ++c) {
        if (prevalence[c] > 0) total += static_cast<double>(prevalence[c]) * one_vs_rest(c);
    }
    return total / static_cast<double>(labels.size());
}

namespace {

// Column of each net node in `data`, checking that ordinary states agree.
std::vector<int> node_columns(const BayesianNetwork& net, const Dataset& data) {
    const auto& s = net.structure();
    std::vector<int> cols(s.size());
    for (size_t i = 0; i < s.size(); ++i) {
        const int c = data.attribute_index(s.node(i).name);
        if (without_missing_state(data.schema[c]).states != without_missing_state(s.node(i)).states) {
            throw SchemaError("states of '" + s.node(i).name + "' differ between network and data");
        }
        cols[i] = c;
    }
    return cols;
}

// Records in net node order; a MISSING state in the data maps to a missing cell.
std::vector<std::vector<int>> align_records(const BayesianNetwork& net, const Dataset& data) {
    const auto cols = node_columns(net, data);
    std::vector<std::vector<int>> out;
    out.reserve(data.num_records());
    for (const auto& rec : data.records) {
        std::vector<int> row(cols.size());
        for (size_t i = 0; i < cols.size(); ++i) {
            const int v = rec[cols[i]];
            row[i] = v == data.schema[cols[i]].missing_state() ? kMissing : v;
        }
        out.push_back(std::move(row));
    }
    return out;
}

void finish_folds(MetricsReport& report, const ScoredRecords& pooled) {
    double sum = 0.0;
    int defined = 0;
    for (const auto& f : report.folds) {
        if (f.auc) {
            sum += *f.auc;
            ++defined;
        }
    }
    if (defined > 0) report.mean_auc = sum / defined;
    try {
        report.pooled_auc = auc(pooled.scores, pooled.labels);
    } catch (const UndefinedAucError&) {
    }
    report.evaluated_records = pooled.labels.size();
    report.excluded_missing_target = pooled.excluded_missing_target;
    report.zero_probability_evidence = pooled.zero_probability_evidence;
}

}  // namespace

ScoredRecords score_records(const BayesianNetwork& net, const Dataset& data, const std::string& target) {
    const int t = net.structure().index_of(target);
    ScoredRecords out;
    std::vector<double> prior;
    for (auto& row : align_records(net, data)) {
        const int label = row[t];
        if (label == kMissing) {
            ++out.excluded_missing_target;
            continue;
        }
        row[t] = kMissing;
        try {
            out.scores.push_back(posterior(net, static_cast<size_t>(t), row));
        } catch (const DegenerateEvidenceError&) {
            // a combination the model rules out; it carries no ranking information
            if (prior.empty()) prior = posterior(net, static_cast<size_t>(t), std::vector<int>(net.size(), kMissing));
            out.scores.push_back(prior);
            ++out.zero_probability_evidence;
        }
        out.labels.push_back(label);
    }
    return out;
}

std::string scheme_name(Scheme s) {
    switch (s) {
        case Scheme::public_holdout:
            return "public";
        case Scheme::scv:
            return "scv";
        case Scheme::svdg:
            return "svdg";
    }
    return "?";
}

Scheme parse_scheme(const std::string& s) {
    if (s == "public") return Scheme::public_holdout;
    if (s == "scv") return Scheme::scv;
    if (s == "svdg") return Scheme::svdg;
    throw ConfigError("unknown validation scheme '" + s + "'");
}

void ValidationPlan::validate() const {
    if (folds < 2) throw ConfigError("folds must be at least 2");
    if (!(split_fraction > 0 && split_fraction < 1)) throw ConfigError("split fraction must lie in (0, 1)");
    if (target.empty()) throw ConfigError("validation needs a target attribute");
}

MetricsReport validate_public(const BayesianNetwork& net, const Dataset& holdout, const std::string& target) {
    MetricsReport report;
    report.scheme = "public";
    report.target = target;
    const ScoredRecords scored = score_records(net, holdout, target);
    FoldResult fold{0, scored.labels.size(), std::nullopt, {}};
    try {
        fold.auc = auc(scored.scores, scored.labels);
    } catch (const UndefinedAucError& e) {
        fold.note = e.what();
    }
    report.folds.push_back(fold);
    finish_folds(report, scored);
    const LogLikelihood a = aic(net, align_records(net, holdout));
    if (a.finite()) report.aic = a.value;
    return report;
}

MetricsReport validate_scv(const BayesianNetwork& intermediate, const NetworkStructure& structure,
                           const ValidationPlan& plan, const EmConfig& em, size_t n_synth) {
    plan.validate();
    if (static_cast<size_t>(plan.folds) > n_synth) throw SizingError("more folds than synthetic records");
    MetricsReport report;
    report.scheme = "scv";
    report.target = plan.target;
    Rng rng(derive_seed(plan.seed, 0x5c));
    const Dataset synthetic = generate_synthetic(intermediate, n_synth, rng);
    ScoredRecords pooled;
    for (int k = 0; k < plan.folds; ++k) {
        const auto train_rows =
            selected_rows(n_synth, RowFilter::fold(plan.folds, static_cast<uint64_t>(k), plan.seed, false));
        const auto test_rows =
            selected_rows(n_synth, RowFilter::fold(plan.folds, static_cast<uint64_t>(k), plan.seed, true));
        EmConfig fold_em = em;
        fold_em.seed = derive_seed(em.seed, 1000 + static_cast<uint64_t>(k));
        const EmResult trained = em_train(structure, synthetic.select_rows(train_rows), fold_em);
        const ScoredRecords scored = score_records(trained.network, synthetic.select_rows(test_rows), plan.target);
        FoldResult fold{k, scored.labels.size(), std::nullopt, {}};
        try {
            fold.auc = auc(scored.scores, scored.labels);
        } catch (const UndefinedAucError& e) {
            fold.note = e.what();
        }
        report.folds.push_back(fold);
        pooled.scores.insert(pooled.scores.end(), scored.scores.begin(), scored.scores.end());
        pooled.labels.insert(pooled.labels.end(), scored.labels.begin(), scored.labels.end());
        pooled.excluded_missing_target += scored.excluded_missing_target;
        pooled.zero_probability_evidence += scored.zero_probability_evidence;
    }
    finish_folds(report, pooled);
    return report;
}

MetricsReport validate_svdg(CountOracle& oracle, const ValidationPlan& plan, const TrainOptions& train) {
    plan.validate();
    const RowFilter train_rows = RowFilter::split(plan.split_fraction, plan.seed, true);
    const RowFilter valid_rows = RowFilter::split(plan.split_fraction, plan.seed, false);
    FilteredOracle train_oracle(oracle, train_rows);
    FilteredOracle valid_oracle(oracle, valid_rows);
    if (valid_oracle.num_records() < plan.min_validation_rows) {
        throw SizingError("SVDG validation split holds " + std::to_string(valid_oracle.num_records()) +
                          " rows, at least " + std::to_string(plan.min_validation_rows) + " are required");
    }
    TrainOptions opts = train;
    opts.n_synth = train.n_synth ? train.n_synth : train_oracle.num_records();
    const TrainReport trained = federated_train(train_oracle, opts);
    const BayesianNetwork generator = ml_parameters(trained.structure, valid_oracle, train.alpha);
    Rng rng(derive_seed(plan.seed, 0x5d));
    const Dataset synthetic = generate_synthetic(generator, valid_oracle.num_records(), rng);

    MetricsReport report;
    report.scheme = "svdg";
    report.target = plan.target;
    const ScoredRecords scored = score_records(trained.final_network, synthetic, plan.target);
    FoldResult fold{0, scored.labels.size(), std::nullopt, {}};
    try {
        fold.auc = auc(scored.scores, scored.labels);
    } catch (const UndefinedAucError& e) {
        fold.note = e.what();
    }
    report.folds.push_back(fold);
    finish_folds(report, scored);
    return report;
}

namespace {

// Raises entries below eps to eps and rescales the rest until stable.
void clamp_row(std::span<double> row, double eps) {
    std::vector<bool> fixed(row.size(), false);
    while (true) {
        size_t n_fixed = 0;
        double free_mass = 0.0;
        bool changed = false;
        for (size_t k = 0; k < row.size(); ++k) {
            if (!fixed[k] && row[k] < eps) {
                fixed[k] = true;
                changed = true;
            }
            if (fixed[k]) {
                ++n_fixed;
            } else {
                free_mass += row[k];
            }
        }
        if (!changed) return;
        const double target = 1.0 - static_cast<double>(n_fixed) * eps;
        for (size_t k = 0; k < row.size(); ++k) {
            if (fixed[k]) {
                row[k] = eps;
            } else {
                row[k] = free_mass > 0 ? row[k] * target / free_mass : target / static_cast<double>(row.size() - n_fixed);
            }
        }
    }
}

}  // namespace

BayesianNetwork sanitize_cpts(const BayesianNetwork& net, size_t k, CountOracle& counts) {
    if (k < 1) throw DomainError("minimum support must be at least 1");
    BayesianNetwork out = net;
    const auto& s = net.structure();
    for (size_t i = 0; i < s.size(); ++i) {
        const size_t r = s.node(i).cardinality();
        if (r < 2) continue;
        std::vector<int> parents;
        for (int p : s.parents(i)) parents.push_back(counts.attribute_index(s.node(p).name));
        const int child = counts.attribute_index(s.node(i).name);
        const auto table = family_counts(counts, child, parents);
        const auto marginal_counts = family_counts(counts, child, {});
        // ordinary states of the network node, located in the oracle's state list
        const auto& oracle_states = counts.schema()[child].states;
        std::vector<size_t> state_at(r);
        for (size_t x = 0; x < r; ++x) {
            state_at[x] = static_cast<size_t>(
                std::find(oracle_states.begin(), oracle_states.end(), s.node(i).states[x]) - oracle_states.begin());
            if (state_at[x] >= oracle_states.size()) throw SchemaError("state missing from count oracle");
        }
        const size_t oracle_r = oracle_states.size();
        std::vector<double> marginal(r);
        double marginal_total = 0.0;
        for (size_t x = 0; x < r; ++x) marginal_total += static_cast<double>(marginal_counts[state_at[x]]);
        for (size_t x = 0; x < r; ++x) {
            marginal[x] = marginal_total > 0 ? static_cast<double>(marginal_counts[state_at[x]]) / marginal_total
                                             : 1.0 / static_cast<double>(r);
        }

        // oracle parents may carry a MISSING state the network lacks
        Cpt& cpt = out.cpt(i);
        for (size_t j = 0; j < cpt.rows(); ++j) {
            const auto pstates = parent_states_of_row(s, i, j);
            size_t oracle_row = 0;
            for (size_t pi = 0; pi < parents.size(); ++pi) {
                const auto& ostates = counts.schema()[parents[pi]].states;
                const auto& label = s.node(s.parents(i)[pi]).states[pstates[pi]];
                const size_t pos = static_cast<size_t>(std::find(ostates.begin(), ostates.end(), label) - ostates.begin());
                oracle_row = oracle_row * ostates.size() + pos;
            }
            int64_t support = 0;
            for (size_t x = 0; x < r; ++x) support += table[oracle_row * oracle_r + state_at[x]];
            auto row = cpt.row(j);
            if (static_cast<size_t>(support) < k) std::copy(marginal.begin(), marginal.end(), row.begin());
            clamp_row(row, 1.0 / (2.0 * (static_cast<double>(support) + static_cast<double>(r))));
        }
    }
    return out;
}

// ---- reporting -----------------------------------------------------------

std::optional<double> ComparisonRow::aic_difference_percent() const {
    if (!aic_central || !aic_federated || *aic_central == 0) return std::nullopt;
    return 100.0 * std::fabs(*aic_federated - *aic_central) / std::fabs(*aic_central);
}

namespace {

std::string fmt(const std::optional<double>& v, const char* pattern = "%.4f") {
    if (!v) return "NA";
    char buf[64];
    std::snprintf(buf, sizeof buf, pattern, *v);
    return buf;
}

nlohmann::json opt(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

}  // namespace

std::string comparison_tsv(std::span<const ComparisonRow> rows) {
    std::string out = "dataset\tmissing\tauc_central\tauc_public\tauc_scv\tauc_svdg\taic_central\taic_federated\taic_diff_pct\n";
    for (const auto& r : rows) {
        out += r.dataset + "\t" + fmt(r.missing_level, "%.2f") + "\t" + fmt(r.central_auc) + "\t" + fmt(r.public_auc) +
               "\t" + fmt(r.scv_auc) + "\t" + fmt(r.svdg_auc) + "\t" + fmt(r.aic_central, "%.2f") + "\t" +
               fmt(r.aic_federated, "%.2f") + "\t" + fmt(r.aic_difference_percent(), "%.2f") + "\n";
    }
    return out;
}

std::string metrics_json(std::span<const MetricsReport> reports, std::span<const ComparisonRow> rows) {
    nlohmann::json j;
    j["reports"] = nlohmann::json::array();
    for (const auto& r : reports) {
        nlohmann::json folds = nlohmann::json::array();
        for (const auto& f : r.folds) {
            folds.push_back({{"fold", f.fold}, {"records", f.records}, {"auc", opt(f.auc)}, {"note", f.note}});
        }
        j["reports"].push_back({{"scheme", r.scheme},
                                {"target", r.target},
                                {"folds", folds},
                                {"mean_auc", opt(r.mean_auc)},
                                {"pooled_auc", opt(r.pooled_auc)},
                                {"evaluated_records", r.evaluated_records},
                                {"excluded_missing_target", r.excluded_missing_target},
                                {"zero_probability_evidence", r.zero_probability_evidence},
                                {"aic", opt(r.aic)}});
    }
    j["table"] = nlohmann::json::array();
    for (const auto& r : rows) {
        j["table"].push_back({{"dataset", r.dataset},
                              {"missing_level", r.missing_level},
                              {"auc_central", opt(r.central_auc)},
                              {"auc_public", opt(r.public_auc)},
                              {"auc_scv", opt(r.scv_auc)},
                              {"auc_svdg", opt(r.svdg_auc)},
                              {"aic_central", opt(r.aic_central)},
                              {"aic_federated", opt(r.aic_federated)},
                              {"aic_diff_pct", opt(r.aic_difference_percent())}});
    }
    return j.dump(2) + "\n";
}

}  // namespace fedbn
