#include "fedbn/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "fedbn/errors.hpp"

namespace fedbn {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::optional<double> parse_number(const std::string& s) {
    if (s.empty()) return std::nullopt;
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end != s.c_str() + s.size() || !std::isfinite(v)) return std::nullopt;
    return v;
}

std::vector<std::string> split_record(const std::string& line, char delim, size_t line_no) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == delim) {
            out.push_back(trim(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (quoted) throw FormatError("line " + std::to_string(line_no) + ": unterminated quote");
    out.push_back(trim(cur));
    return out;
}

std::string quote_field(const std::string& v, char delim) {
    if (v.find_first_of(std::string{delim, '"', '\n'}) == std::string::npos) return v;
    std::string out = "\"";
    for (char c : v) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

}  // namespace

// ---- Dataset -------------------------------------------------------------

int Dataset::attribute_index(const std::string& name) const {
    for (size_t i = 0; i < schema.size(); ++i) {
        if (schema[i].name == name) return static_cast<int>(i);
    }
    throw SchemaError("dataset has no attribute '" + name + "'");
}

size_t Dataset::missing_cells() const {
    size_t n = 0;
    for (const auto& r : records) n += static_cast<size_t>(std::count(r.begin(), r.end(), kMissing));
    return n;
}

std::vector<AttributeSchema> Dataset::modeled_schema() const {
    std::vector<AttributeSchema> out = schema;
    for (size_t c = 0; c < schema.size(); ++c) {
        const bool any = std::any_of(records.begin(), records.end(), [&](const auto& r) { return r[c] == kMissing; });
        if (any) out[c] = with_missing_state(out[c]);
    }
    return out;
}

std::vector<std::vector<int>> Dataset::missing_as_value() const {
    const auto modeled = modeled_schema();
    auto out = records;
    for (auto& r : out) {
        for (size_t c = 0; c < r.size(); ++c) {
            if (r[c] == kMissing) r[c] = modeled[c].missing_state();
        }
    }
    return out;
}

Dataset Dataset::select_rows(std::span<const size_t> rows) const {
    Dataset out{schema, {}};
    out.records.reserve(rows.size());
    for (size_t r : rows) out.records.push_back(records.at(r));
    return out;
}

void Dataset::validate() const {
    std::set<std::string> names;
    for (const auto& a : schema) {
        a.validate();
        if (a.has_missing_state()) throw SchemaError("dataset schema must not contain the MISSING state");
        if (!names.insert(a.name).second) throw SchemaError("duplicate attribute '" + a.name + "'");
    }
    for (size_t r = 0; r < records.size(); ++r) {
        if (records[r].size() != schema.size()) {
            throw FormatError("row " + std::to_string(r) + " has " + std::to_string(records[r].size()) +
                              " cells, expected " + std::to_string(schema.size()));
        }
        for (size_t c = 0; c < schema.size(); ++c) {
            const int v = records[r][c];
            if (v != kMissing && (v < 0 || static_cast<size_t>(v) >= schema[c].cardinality())) {
                throw SchemaError("row " + std::to_string(r) + " column " + schema[c].name + ": invalid state");
            }
        }
    }
}

int LocalDataset::column_index(const std::string& name) const {
    for (size_t i = 0; i < columns.size(); ++i) {
        if (columns[i].name == name) return static_cast<int>(i);
    }
    throw LocalityError("party " + party_id + " does not hold attribute '" + name + "'");
}

bool LocalDataset::holds(const std::string& name) const {
    return std::any_of(columns.begin(), columns.end(), [&](const auto& a) { return a.name == name; });
}

std::vector<AttributeSchema> LocalDataset::modeled_columns() const {
    Dataset view{columns, records};
    return view.modeled_schema();
}

// ---- CSV -----------------------------------------------------------------

std::string escape_value(const std::string& v) {
    if (v == kMissingLabel || (!v.empty() && v[0] == '\\')) return "\\" + v;
    return v;
}

std::string unescape_value(const std::string& v) {
    if (!v.empty() && v[0] == '\\') return v.substr(1);
    return v;
}

RawTable parse_csv_table(const std::string& text, const CsvOptions& opts) {
    RawTable t;
    std::istringstream in(text);
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        auto fields = split_record(line, opts.delimiter, line_no);
        if (t.header.empty()) {
            t.header = std::move(fields);
            continue;
        }
        if (fields.size() != t.header.size()) {
            throw FormatError("line " + std::to_string(line_no) + " has " + std::to_string(fields.size()) +
                              " fields, header has " + std::to_string(t.header.size()));
        }
        t.rows.push_back(std::move(fields));
    }
    if (t.header.empty()) throw FormatError("CSV input has no header row");
    return t;
}

RawTable read_csv_table(const std::string& path, const CsvOptions& opts) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_csv_table(ss.str(), opts);
}

Dataset dataset_from_table(const RawTable& table, const std::optional<std::vector<AttributeSchema>>& schema,
                           const CsvOptions& opts, std::span<const BinSpec> bins) {
    const size_t m = table.header.size();
    auto is_missing = [&](const std::string& cell) {
        return cell.empty() || (!opts.missing_sentinel.empty() && cell == opts.missing_sentinel);
    };
    std::vector<const BinSpec*> bin_of_col(m, nullptr);
    for (const auto& b : bins) {
        auto it = std::find(table.header.begin(), table.header.end(), b.attribute);
        if (it == table.header.end()) throw SchemaError("bins given for unknown column '" + b.attribute + "'");
        bin_of_col[static_cast<size_t>(it - table.header.begin())] = &b;
    }

    Dataset ds;
    ds.schema.resize(m);
    for (size_t c = 0; c < m; ++c) ds.schema[c].name = table.header[c];

    std::vector<std::vector<std::string>> values(table.rows.size(), std::vector<std::string>(m));
    for (size_t r = 0; r < table.rows.size(); ++r) {
        for (size_t c = 0; c < m; ++c) {
            const std::string& cell = table.rows[r][c];
            if (is_missing(cell)) {
                values[r][c] = kMissingLabel;  // marker; escaped data never equals it
                continue;
            }
            if (bin_of_col[c]) {
                auto v = parse_number(cell);
                if (!v) throw SchemaError("row " + std::to_string(r + 1) + " column " + table.header[c] +
                                          ": '" + cell + "' is not numeric");
                values[r][c] = bin_of_col[c]->labels()[bin_of_col[c]->bin_of(*v)];
            } else {
                values[r][c] = escape_value(cell);
            }
        }
    }

    if (schema) {
        if (schema->size() != m) throw SchemaError("schema has " + std::to_string(schema->size()) + " attributes, file has " + std::to_string(m));
        for (size_t c = 0; c < m; ++c) {
            if ((*schema)[c].name != table.header[c]) {
                throw SchemaError("header column " + std::to_string(c) + " is '" + table.header[c] +
                                  "', schema expects '" + (*schema)[c].name + "'");
            }
        }
        ds.schema = *schema;
    } else {
        for (size_t c = 0; c < m; ++c) {
            if (bin_of_col[c]) {
                ds.schema[c].states = bin_of_col[c]->labels();
                continue;
            }
            std::set<std::string> seen;
            for (const auto& row : values) {
                if (row[c] != kMissingLabel) seen.insert(row[c]);
            }
            std::vector<std::string> states(seen.begin(), seen.end());
            const bool numeric = std::all_of(states.begin(), states.end(), [](const auto& s) { return parse_number(s).has_value(); });
            if (numeric) {
                std::stable_sort(states.begin(), states.end(),
                                 [](const auto& x, const auto& y) { return *parse_number(x) < *parse_number(y); });
            }
            if (states.empty()) states.push_back("none");
            ds.schema[c].states = std::move(states);
        }
    }

    std::vector<std::unordered_map<std::string, int>> lookup(m);
    for (size_t c = 0; c < m; ++c) {
        for (size_t k = 0; k < ds.schema[c].states.size(); ++k) lookup[c][ds.schema[c].states[k]] = static_cast<int>(k);
    }
    ds.records.assign(values.size(), std::vector<int>(m, kMissing));
    for (size_t r = 0; r < values.size(); ++r) {
        for (size_t c = 0; c < m; ++c) {
            if (values[r][c] == kMissingLabel) continue;
            auto it = lookup[c].find(values[r][c]);
            if (it == lookup[c].end()) {
                throw SchemaError("row " + std::to_string(r + 1) + " column " + table.header[c] + ": value '" +
                                  unescape_value(values[r][c]) + "' is not a declared state");
            }
            ds.records[r][c] = it->second;
        }
    }
    ds.validate();
    return ds;
}

Dataset load_csv(const std::string& path, const std::optional<std::vector<AttributeSchema>>& schema,
                 const CsvOptions& opts) {
    return dataset_from_table(read_csv_table(path, opts), schema, opts);
}

std::string dataset_to_csv(const Dataset& ds, const CsvOptions& opts) {
    std::ostringstream os;
    for (size_t c = 0; c < ds.schema.size(); ++c) {
        if (c) os << opts.delimiter;
        os << quote_field(ds.schema[c].name, opts.delimiter);
    }
    os << '\n';
    for (const auto& r : ds.records) {
        for (size_t c = 0; c < r.size(); ++c) {
            if (c) os << opts.delimiter;
            if (r[c] == kMissing) {
                os << quote_field(opts.missing_sentinel, opts.delimiter);
            } else {
                os << quote_field(unescape_value(ds.schema[c].states[r[c]]), opts.delimiter);
            }
        }
        os << '\n';
    }
    return os.str();
}

void write_csv(const std::string& path, const Dataset& ds, const CsvOptions& opts) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot write " + path);
    out << dataset_to_csv(ds, opts);
}

// ---- partitioning --------------------------------------------------------

std::vector<LocalDataset> partition_vertical(const Dataset& ds, const std::vector<std::vector<std::string>>& groups,
                                             const std::vector<std::string>& party_ids) {
    if (!party_ids.empty() && party_ids.size() != groups.size()) {
        throw PartitionError("party id count does not match group count");
    }
    std::vector<int> owner(ds.num_attributes(), -1);
    for (size_t g = 0; g < groups.size(); ++g) {
        for (const auto& name : groups[g]) {
            int c;
            try {
                c = ds.attribute_index(name);
            } catch (const SchemaError&) {
                throw PartitionError("group " + std::to_string(g) + " names unknown attribute '" + name + "'");
            }
            if (owner[c] != -1) throw PartitionError("attribute '" + name + "' assigned to more than one party");
            owner[c] = static_cast<int>(g);
        }
    }
    for (size_t c = 0; c < owner.size(); ++c) {
        if (owner[c] == -1) throw PartitionError("attribute '" + ds.schema[c].name + "' assigned to no party");
    }
    std::vector<LocalDataset> parts(groups.size());
    for (size_t g = 0; g < groups.size(); ++g) {
        auto& p = parts[g];
        p.party_id = party_ids.empty() ? "party" + std::to_string(g) : party_ids[g];
        std::vector<int> cols;
        for (const auto& name : groups[g]) cols.push_back(ds.attribute_index(name));
        for (int c : cols) p.columns.push_back(ds.schema[c]);
        p.records.reserve(ds.num_records());
        for (const auto& r : ds.records) {
            std::vector<int> row;
            row.reserve(cols.size());
            for (int c : cols) row.push_back(r[c]);
            p.records.push_back(std::move(row));
        }
    }
    return parts;
}

std::vector<std::vector<std::string>> equal_split(const Dataset& ds, uint64_t seed) {
    std::vector<size_t> idx(ds.num_attributes());
    std::iota(idx.begin(), idx.end(), size_t{0});
    Rng rng(seed);
    rng.shuffle(idx.begin(), idx.end());
    const size_t first = (idx.size() + 1) / 2;
    std::vector<size_t> a(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(first));
    std::vector<size_t> b(idx.begin() + static_cast<std::ptrdiff_t>(first), idx.end());
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    std::vector<std::vector<std::string>> groups(2);
    for (size_t c : a) groups[0].push_back(ds.schema[c].name);
    for (size_t c : b) groups[1].push_back(ds.schema[c].name);
    return groups;
}

Dataset reassemble(std::span<const LocalDataset> parts, const std::vector<std::string>& order) {
    if (parts.empty()) throw PartitionError("no parties to reassemble");
    const size_t n = parts[0].num_records();
    for (const auto& p : parts) {
        if (p.num_records() != n) throw AlignmentError("parties disagree on record count");
    }
    Dataset ds;
    std::vector<std::pair<size_t, int>> src;
    for (const auto& name : order) {
        bool found = false;
        for (size_t p = 0; p < parts.size() && !found; ++p) {
            if (parts[p].holds(name)) {
                const int c = parts[p].column_index(name);
                ds.schema.push_back(parts[p].columns[c]);
                src.emplace_back(p, c);
                found = true;
            }
        }
        if (!found) throw PartitionError("no party holds attribute '" + name + "'");
    }
    ds.records.assign(n, std::vector<int>(order.size()));
    for (size_t r = 0; r < n; ++r) {
        for (size_t c = 0; c < src.size(); ++c) ds.records[r][c] = parts[src[c].first].records[r][src[c].second];
    }
    return ds;
}

// ---- corruption ----------------------------------------------------------

Dataset inject_missing(const Dataset& ds, double fraction, Rng& rng) {
    if (!(fraction >= 0.0 && fraction <= 1.0)) throw DomainError("missing fraction must lie in [0,1]");
    const size_t n = ds.num_records();
    const size_t m = ds.num_attributes();
    const size_t cells = n * m;
    const auto target = static_cast<size_t>(std::floor(fraction * static_cast<double>(cells) + 1e-9));
    Dataset out = ds;
    std::vector<size_t> idx(cells);
    std::iota(idx.begin(), idx.end(), size_t{0});
    // partial Fisher-Yates: the first `target` slots are a uniform sample without replacement
    for (size_t i = 0; i < target; ++i) {
        const size_t j = i + static_cast<size_t>(rng.below(cells - i));
        std::swap(idx[i], idx[j]);
        out.records[idx[i] / m][idx[i] % m] = kMissing;
    }
    return out;
}

// ---- discretization ------------------------------------------------------

size_t BinSpec::bin_of(double v) const {
    return static_cast<size_t>(std::upper_bound(cut_points.begin(), cut_points.end(), v) - cut_points.begin());
}

std::vector<std::string> BinSpec::labels() const {
    std::vector<std::string> out;
    for (size_t b = 0; b < bins(); ++b) out.push_back("bin" + std::to_string(b));
    return out;
}

BinSpec discretize(const std::string& attribute, std::span<const double> values, double min_fraction,
                   size_t min_count) {
    std::vector<double> v;
    for (double x : values) {
        if (!std::isnan(x)) v.push_back(x);
    }
    std::sort(v.begin(), v.end());
    BinSpec spec{attribute, {}};
    const size_t n = v.size();
    if (n < min_count) return spec;
    const size_t threshold =
        std::max(static_cast<size_t>(std::ceil(min_fraction * static_cast<double>(n) - 1e-9)), min_count);

    size_t start = 0;
    for (size_t i = 0; i < n; ++i) {
        const bool at_boundary = i + 1 == n || v[i + 1] != v[i];
        if (i + 1 - start >= threshold && at_boundary) {
            if (i + 1 < n) spec.cut_points.push_back(v[i + 1]);
            start = i + 1;
        }
    }
    // an undersized trailing bin joins its predecessor
    if (start < n && !spec.cut_points.empty()) spec.cut_points.pop_back();
    return spec;
}

std::string bins_to_json(std::span<const BinSpec> bins) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& b : bins) j.push_back({{"attribute", b.attribute}, {"cut_points", b.cut_points}});
    return j.dump(2);
}

std::vector<BinSpec> bins_from_json(const std::string& text) {
    std::vector<BinSpec> out;
    try {
        for (const auto& e : nlohmann::json::parse(text)) {
            BinSpec b{e.at("attribute").get<std::string>(), e.at("cut_points").get<std::vector<double>>()};
            if (!std::is_sorted(b.cut_points.begin(), b.cut_points.end()) ||
                std::adjacent_find(b.cut_points.begin(), b.cut_points.end()) != b.cut_points.end()) {
                throw FormatError("cut points of " + b.attribute + " are not strictly increasing");
            }
            out.push_back(std::move(b));
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("bad bins file: ") + e.what());
    }
    return out;
}

// ---- membership ----------------------------------------------------------

size_t MembershipVector::popcount() const {
    return static_cast<size_t>(std::count(bits.begin(), bits.end(), uint8_t{1}));
}

MembershipVector MembershipVector::operator&(const MembershipVector& other) const {
    if (other.size() != size()) throw DomainError("membership vectors differ in length");
    MembershipVector out{bits};
    for (size_t i = 0; i < bits.size(); ++i) out.bits[i] &= other.bits[i];
    return out;
}

MembershipVector membership_vector(const LocalDataset& local, const Conditions& conditions) {
    std::vector<std::pair<int, int>> checks;
    for (const auto& [name, state] : conditions) {
        const int c = local.column_index(name);
        if (state != kMissing && (state < 0 || static_cast<size_t>(state) >= local.columns[c].cardinality())) {
            throw SchemaError("condition on " + name + " uses invalid state " + std::to_string(state));
        }
        checks.emplace_back(c, state);
    }
    MembershipVector mv{std::vector<uint8_t>(local.num_records(), 1)};
    for (size_t r = 0; r < local.num_records(); ++r) {
        for (const auto& [c, state] : checks) {
            if (local.records[r][c] != state) {
                mv.bits[r] = 0;
                break;
            }
        }
    }
    return mv;
}

// ---- row selection -------------------------------------------------------

RowFilter RowFilter::fold(uint64_t folds, uint64_t index, uint64_t seed, bool held_out) {
    if (folds < 2 || index >= folds) throw DomainError("fold index out of range");
    return {held_out ? Kind::fold_held_out : Kind::fold_training, seed, folds, index};
}

RowFilter RowFilter::split(double fraction, uint64_t seed, bool first) {
    if (!(fraction > 0.0 && fraction < 1.0)) throw DomainError("split fraction must lie in (0,1)");
    return {first ? Kind::split_first : Kind::split_second, seed, std::bit_cast<uint64_t>(fraction), 0};
}

std::vector<uint8_t> row_indicator(size_t n, const RowFilter& f) {
    std::vector<uint8_t> out(n, 1);
    if (f.kind == RowFilter::Kind::all) return out;
    std::vector<size_t> perm(n);
    std::iota(perm.begin(), perm.end(), size_t{0});
    Rng rng(f.seed);
    rng.shuffle(perm.begin(), perm.end());
    switch (f.kind) {
        case RowFilter::Kind::fold_held_out:
        case RowFilter::Kind::fold_training: {
            const bool held = f.kind == RowFilter::Kind::fold_held_out;
            for (size_t pos = 0; pos < n; ++pos) {
                const bool in_fold = pos % f.a == f.b;
                out[perm[pos]] = in_fold == held ? 1 : 0;
            }
            break;
        }
        case RowFilter::Kind::split_first:
        case RowFilter::Kind::split_second: {
            const double fraction = std::bit_cast<double>(f.a);
            const auto cut = static_cast<size_t>(std::llround(fraction * static_cast<double>(n)));
            const bool first = f.kind == RowFilter::Kind::split_first;
            for (size_t pos = 0; pos < n; ++pos) out[perm[pos]] = (pos < cut) == first ? 1 : 0;
            break;
        }
        default:
            throw DomainError("unknown row filter kind");
    }
    return out;
}

std::vector<size_t> selected_rows(size_t n, const RowFilter& filter) {
    const auto ind = row_indicator(n, filter);
    std::vector<size_t> rows;
    for (size_t r = 0; r < n; ++r) {
        if (ind[r]) rows.push_back(r);
    }
    return rows;
}

}  // namespace fedbn
