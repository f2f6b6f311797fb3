#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fedbn/network.hpp"
#include "fedbn/random.hpp"

namespace fedbn {

/// Attribute name → required state index, or kMissing for "is missing".
using Conditions = std::map<std::string, int>;

struct Dataset {
    std::vector<AttributeSchema> schema;
    /// records[r][c] is a state index of schema[c], or kMissing.
    std::vector<std::vector<int>> records;

    size_t num_records() const { return records.size(); }
    size_t num_attributes() const { return schema.size(); }
    int attribute_index(const std::string& name) const;
    size_t missing_cells() const;
    /// Schema with the MISSING state appended to every attribute holding a missing cell.
    std::vector<AttributeSchema> modeled_schema() const;
    /// Records re-encoded against modeled_schema(): missing cells become the MISSING state.
    std::vector<std::vector<int>> missing_as_value() const;
    Dataset select_rows(std::span<const size_t> rows) const;
    void validate() const;

    bool operator==(const Dataset&) const = default;
};

/// One party's vertical slice; rows align with the global dataset by index.
struct LocalDataset {
    std::string party_id;
    std::vector<AttributeSchema> columns;
    std::vector<std::vector<int>> records;

    size_t num_records() const { return records.size(); }
    int column_index(const std::string& name) const;
    bool holds(const std::string& name) const;
    /// Column schemas with MISSING appended where the column has missing cells.
    std::vector<AttributeSchema> modeled_columns() const;
};

// ---- CSV -----------------------------------------------------------------

struct CsvOptions {
    /// Cells equal to this string (after trimming) parse to MISSING; empty cells always do.
    std::string missing_sentinel;
    char delimiter = ',';
};

struct RawTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

RawTable read_csv_table(const std::string& path, const CsvOptions& opts = {});
RawTable parse_csv_table(const std::string& text, const CsvOptions& opts = {});

struct BinSpec;

/// Builds a dataset from a raw table. Without a schema, states are inferred
/// (sorted numerically when every value is numeric, lexically otherwise).
/// Columns with a BinSpec are discretized first.
Dataset dataset_from_table(const RawTable& table, const std::optional<std::vector<AttributeSchema>>& schema,
                           const CsvOptions& opts = {}, std::span<const BinSpec> bins = {});
Dataset load_csv(const std::string& path, const std::optional<std::vector<AttributeSchema>>& schema = std::nullopt,
                 const CsvOptions& opts = {});
void write_csv(const std::string& path, const Dataset& ds, const CsvOptions& opts = {});
std::string dataset_to_csv(const Dataset& ds, const CsvOptions& opts = {});

/// Escapes data values that would collide with the reserved MISSING label.
std::string escape_value(const std::string& v);
std::string unescape_value(const std::string& v);

// ---- partitioning --------------------------------------------------------

std::vector<LocalDataset> partition_vertical(const Dataset& ds, const std::vector<std::vector<std::string>>& groups,
                                             const std::vector<std::string>& party_ids = {});
/// Two groups of sizes ⌈m/2⌉ and ⌊m/2⌋ drawn by a seeded shuffle; each
/// group keeps the dataset's column order.
std::vector<std::vector<std::string>> equal_split(const Dataset& ds, uint64_t seed);
/// Column-wise reassembly; `order` gives the global attribute order.
Dataset reassemble(std::span<const LocalDataset> parts, const std::vector<std::string>& order);

// ---- corruption ----------------------------------------------------------

/// Sets exactly ⌊fraction·n·m⌋ cells, chosen uniformly without replacement, to MISSING.
Dataset inject_missing(const Dataset& ds, double fraction, Rng& rng);

// ---- discretization ------------------------------------------------------

/// Left-closed bins: bin b covers [cut_points[b-1], cut_points[b]).
struct BinSpec {
    std::string attribute;
    std::vector<double> cut_points;

    size_t bins() const { return cut_points.size() + 1; }
    size_t bin_of(double v) const;
    std::vector<std::string> labels() const;
    bool operator==(const BinSpec&) const = default;
};

/// Greedy equal-support binning. NaN values count as missing and are skipped.
BinSpec discretize(const std::string& attribute, std::span<const double> values, double min_fraction = 0.1,
                   size_t min_count = 10);

std::string bins_to_json(std::span<const BinSpec> bins);
std::vector<BinSpec> bins_from_json(const std::string& text);

// ---- membership ----------------------------------------------------------

struct MembershipVector {
    std::vector<uint8_t> bits;

    size_t size() const { return bits.size(); }
    size_t popcount() const;
    MembershipVector operator&(const MembershipVector& other) const;
    bool operator==(const MembershipVector&) const = default;
};

/// bit r = 1 iff record r satisfies every condition; all conditioned
/// attributes must be held locally.
MembershipVector membership_vector(const LocalDataset& local, const Conditions& conditions);

// ---- row selection -------------------------------------------------------

/// Seeded, shareable description of a row subset. Every party evaluates
/// the same filter to the same rows.
struct RowFilter {
    enum class Kind : uint8_t { all = 0, fold_held_out = 1, fold_training = 2, split_first = 3, split_second = 4 };
    Kind kind = Kind::all;
    uint64_t seed = 0;
    uint64_t a = 0;  // folds, or fraction bits for splits
    uint64_t b = 0;  // fold index

    static RowFilter everything() { return {}; }
    /// Rows of fold `index` of `folds` (held_out), or all other rows.
    static RowFilter fold(uint64_t folds, uint64_t index, uint64_t seed, bool held_out);
    /// First round(fraction·n) rows of a seeded permutation, or the remainder.
    static RowFilter split(double fraction, uint64_t seed, bool first);

    bool operator==(const RowFilter&) const = default;
    auto operator<=>(const RowFilter&) const = default;
};

std::vector<uint8_t> row_indicator(size_t n, const RowFilter& filter);
std::vector<size_t> selected_rows(size_t n, const RowFilter& filter);

}  // namespace fedbn
