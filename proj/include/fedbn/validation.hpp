#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fedbn/dataset.hpp"
#include "fedbn/network.hpp"
#include "fedbn/params.hpp"
#include "fedbn/runtime.hpp"

namespace fedbn {

/// Mann-Whitney AUC with midranks for ties; labels are 0/1, positive = 1.
double binary_auc(std::span<const double> scores, std::span<const int> labels);

/// scores[r] is a distribution over the target's states. Two states: AUC
/// of P(state 1). More: one-vs-rest AUCs weighted by class prevalence, over
/// the classes that occur. Throws UndefinedAucError for single-class labels.
double auc(std::span<const std::vector<double>> scores, std::span<const int> labels);

struct ScoredRecords {
    std::vector<std::vector<double>> scores;
    std::vector<int> labels;
    /// Records skipped because their target cell is missing.
    size_t excluded_missing_target = 0;
    /// Records whose evidence is impossible under the network; they are
    /// scored with the target's prior.
    size_t zero_probability_evidence = 0;
};

/// Posterior of `target` given each record's observed non-target cells.
/// Dataset columns are matched to network nodes by name.
ScoredRecords score_records(const BayesianNetwork& net, const Dataset& data, const std::string& target);

struct FoldResult {
    int fold = 0;
    size_t records = 0;
    std::optional<double> auc;
    /// Why the fold has no AUC, when it has none.
    std::string note;
};

struct MetricsReport {
    std::string scheme;
    std::string target;
    std::vector<FoldResult> folds;
    std::optional<double> mean_auc;
    /// AUC over the union of all scored records; defined even when every
    /// fold is single-class, e.g. leave-one-out.
    std::optional<double> pooled_auc;
    size_t evaluated_records = 0;
    size_t excluded_missing_target = 0;
    size_t zero_probability_evidence = 0;
    std::optional<double> aic;
};

enum class Scheme { public_holdout, scv, svdg };
std::string scheme_name(Scheme s);
Scheme parse_scheme(const std::string& s);

struct ValidationPlan {
    Scheme scheme = Scheme::public_holdout;
    int folds = 10;
    std::string target;
    double split_fraction = 0.8;
    uint64_t seed = 0;
    size_t min_validation_rows = 30;

    void validate() const;
};

/// Scores the network on a holdout set. The report's AIC is taken on the
/// holdout records.
MetricsReport validate_public(const BayesianNetwork& net, const Dataset& holdout, const std::string& target);

/// k-fold cross-validation on n_synth records sampled from the intermediate
/// model: EM on k − 1 folds, scoring on the held-out fold.
MetricsReport validate_scv(const BayesianNetwork& intermediate, const NetworkStructure& structure,
                           const ValidationPlan& plan, const EmConfig& em, size_t n_synth);

/// Row split of the private data: the three-step training on the first
/// part; missing-as-value ML on the second part generates as many synthetic
/// validation records as there are validation rows; the final model is
/// scored on those.
MetricsReport validate_svdg(CountOracle& oracle, const ValidationPlan& plan, const TrainOptions& train);

inline constexpr size_t kDefaultMinSupport = 10;

/// Rows supported by fewer than k records become the node's marginal, then
/// every entry below ε = 1/(2(N_ij + r)) is raised to ε and the remaining
/// mass rescaled over the other entries.
BayesianNetwork sanitize_cpts(const BayesianNetwork& net, size_t k, CountOracle& counts);

// ---- reporting -----------------------------------------------------------

/// One row of the comparison table.
struct ComparisonRow {
    std::string dataset;
    double missing_level = 0.0;
    std::optional<double> central_auc;
    std::optional<double> public_auc;
    std::optional<double> scv_auc;
    std::optional<double> svdg_auc;
    std::optional<double> aic_central;
    std::optional<double> aic_federated;

    /// 100·|AIC_fed − AIC_central| / |AIC_central|.
    std::optional<double> aic_difference_percent() const;
};

std::string comparison_tsv(std::span<const ComparisonRow> rows);
std::string metrics_json(std::span<const MetricsReport> reports, std::span<const ComparisonRow> rows);

}  // namespace fedbn
