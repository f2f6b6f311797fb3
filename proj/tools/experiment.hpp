#pragma once

#include <atomic>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fedbn/dataset.hpp"
#include "fedbn/params.hpp"
#include "fedbn/runtime.hpp"
#include "fedbn/transport.hpp"
#include "fedbn/validation.hpp"

namespace fedbn::app {

struct PartyConfig {
    std::string id;
    std::vector<std::string> attributes;
    std::optional<Endpoint> address;
};

struct ExperimentConfig {
    std::filesystem::path base_dir;
    /// Parsed file with the effective seed written back; hashed for the run directory.
    nlohmann::json canonical;
    uint64_t seed = 0;
    std::string name = "experiment";

    // data
    std::optional<std::filesystem::path> dataset_path;
    std::optional<std::filesystem::path> generator_network;
    size_t generator_records = 0;
    std::string missing_sentinel;
    enum class Bins { none, automatic, file } bins = Bins::none;
    std::filesystem::path bins_path;
    double missing_fraction = 0.0;
    double holdout_fraction = 0.0;
    std::optional<std::filesystem::path> holdout_path;

    // partition
    std::optional<uint64_t> equal_split_seed;
    std::vector<PartyConfig> parties;

    // learning
    std::optional<std::filesystem::path> structure_path;
    std::optional<std::vector<std::string>> node_order;
    int max_parents = 3;
    EmConfig em;
    size_t n_synth = 0;
    double alpha = 0.0;
    std::optional<size_t> sanitize_k;

    // validation
    std::vector<Scheme> schemes;
    int folds = 10;
    std::string target;
    double split_fraction = 0.8;
    size_t min_validation_rows = 30;

    // runtime
    TransportMode transport = TransportMode::in_process;
    std::optional<Endpoint> commodity;
    bool shutdown_on_finish = true;
    bool cache = true;
};

/// Strict parse: unknown keys, missing seed, or both/neither of structure and
/// node_order raise ConfigError. Relative paths resolve against base_dir.
ExperimentConfig parse_config(const nlohmann::json& j, const std::filesystem::path& base_dir,
                              std::optional<uint64_t> seed_override = std::nullopt);
ExperimentConfig load_config(const std::filesystem::path& path, std::optional<uint64_t> seed_override = std::nullopt);

/// Deterministic preprocessing, identical in every process of a run.
struct PreparedData {
    Dataset full;
    Dataset train;
    std::optional<Dataset> holdout;
    std::vector<std::string> party_ids;
    std::vector<std::vector<std::string>> groups;
    std::vector<LocalDataset> parts;
};

PreparedData prepare_data(const ExperimentConfig& cfg);

/// Directory name for a run: FNV-1a of the canonical config.
std::string run_id(const ExperimentConfig& cfg);

struct RunOutput {
    std::filesystem::path dir;
    std::vector<std::string> files;
};

RunOutput cmd_train(const ExperimentConfig& cfg, const std::filesystem::path& out_root);
RunOutput cmd_validate(const ExperimentConfig& cfg, const std::filesystem::path& out_root);
RunOutput cmd_benchmark(const ExperimentConfig& cfg, const std::filesystem::path& out_root);
void cmd_party(const ExperimentConfig& cfg, const std::string& party_id, std::atomic<bool>& stop);
void cmd_commodity(const ExperimentConfig& cfg, std::atomic<bool>& stop);

nlohmann::json train_report_json(const TrainReport& report);
nlohmann::json complexity_json(const ComplexityCounter& c, size_t parties, uint64_t queries, uint64_t sessions,
                               uint64_t cache_hits);

}  // namespace fedbn::app
