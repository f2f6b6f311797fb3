#pragma once

#include <atomic>
#include <cstdint>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <utility>
#include <vector>

#include "fedbn/dataset.hpp"
#include "fedbn/ssp.hpp"
#include "fedbn/transport.hpp"

namespace fedbn {

/// Answers "how many records satisfy these conditions". Condition values are
/// state indices into schema(); the MISSING state (or kMissing) selects
/// missing cells.
class CountOracle {
public:
    virtual ~CountOracle() = default;
    virtual uint64_t count(const Conditions& conditions, const RowFilter& rows = RowFilter::everything()) = 0;
    /// Modeled schema: MISSING states present where the data has missing cells.
    virtual const std::vector<AttributeSchema>& schema() const = 0;
    virtual size_t num_records() const = 0;
    virtual ComplexityCounter complexity() const { return {}; }
    /// Number of count() calls served, including cache hits.
    virtual uint64_t queries() const = 0;

    int attribute_index(const std::string& name) const;
};

/// Plaintext counting over a pooled dataset. The centralized baseline.
class CentralCounter : public CountOracle {
public:
    explicit CentralCounter(Dataset data);

    uint64_t count(const Conditions& conditions, const RowFilter& rows = RowFilter::everything()) override;
    const std::vector<AttributeSchema>& schema() const override { return schema_; }
    size_t num_records() const override { return data_.num_records(); }
    uint64_t queries() const override { return queries_; }
    const Dataset& data() const { return data_; }

private:
    Dataset data_;
    std::vector<AttributeSchema> schema_;
    std::mutex row_cache_mutex_;
    std::map<RowFilter, std::vector<size_t>> row_cache_;
    std::atomic<uint64_t> queries_{0};
};

/// Restricts another oracle to a row subset.
class FilteredOracle : public CountOracle {
public:
    FilteredOracle(CountOracle& base, RowFilter rows);

    uint64_t count(const Conditions& conditions, const RowFilter& rows = RowFilter::everything()) override;
    const std::vector<AttributeSchema>& schema() const override { return base_.schema(); }
    size_t num_records() const override { return size_; }
    ComplexityCounter complexity() const override { return base_.complexity(); }
    uint64_t queries() const override { return queries_; }

private:
    CountOracle& base_;
    RowFilter rows_;
    size_t size_;
    std::atomic<uint64_t> queries_{0};
};

/// The conditions of one federated count in canonical form: missing
/// conditions normalized to kMissing, attributes ordered by name.
struct CountQuery {
    Conditions conditions;
    RowFilter rows;

    auto operator<=>(const CountQuery&) const = default;
};

/// Query body a party receives: its local conditions plus the row filter.
std::vector<uint64_t> encode_party_query(const RowFilter& rows, const std::vector<std::pair<int, int>>& local_conditions);
std::pair<RowFilter, Conditions> decode_party_query(const LocalDataset& local, std::span<const uint64_t> body);

/// A data party: a LocalDataset answering ssp sessions. Only masked vectors
/// and masked contributions leave it.
class Party {
public:
    Party(LocalDataset local, Link& commodity);

    ProtocolParty& handler() { return protocol_; }
    const LocalDataset& local() const { return local_; }
    const std::string& id() const { return local_.party_id; }
    /// [record count, id, column count, per column: name, state count, states...]
    std::vector<uint64_t> info_payload() const;

private:
    MembershipVector vector_for(const QuerySpec& spec) const;

    LocalDataset local_;
    std::vector<AttributeSchema> modeled_;
    ProtocolParty protocol_;
};

struct PartyInfo {
    std::string id;
    size_t num_records = 0;
    std::vector<AttributeSchema> columns;
};

PartyInfo decode_party_info(std::span<const uint64_t> payload);

struct CoordinatorOptions {
    bool cache = true;
    /// Seeds session ids.
    uint64_t seed = 0;
    /// Fresh-session retries after a transport failure.
    int retries = 1;
};

/// Drives federated counts over registered parties. Sees masked frames and
/// final counts only.
class Coordinator : public CountOracle {
public:
    explicit Coordinator(CoordinatorOptions options = {});

    /// Fetches the party's schema over `link`. Throws RegistrationError for a
    /// duplicate id and AlignmentError for a record-count mismatch.
    void register_party(const std::string& id, Link& link);

    uint64_t count(const Conditions& conditions, const RowFilter& rows = RowFilter::everything()) override;
    uint64_t federated_count(const CountQuery& query);

    const std::vector<AttributeSchema>& schema() const override { return schema_; }
    size_t num_records() const override { return num_records_; }
    ComplexityCounter complexity() const override;
    uint64_t queries() const override { return queries_; }
    uint64_t sessions_run() const { return sessions_; }
    uint64_t cache_hits() const { return cache_hits_; }
    size_t num_parties() const { return parties_.size(); }
    const std::vector<PartyInfo>& parties() const { return infos_; }
    /// Owning party index of every schema() attribute.
    int owner_of(const std::string& attribute) const;

    /// Asks every party to shut down; errors are ignored.
    void shutdown_parties();

private:
    CountQuery canonical(const Conditions& conditions, const RowFilter& rows) const;
    uint64_t run_query(const CountQuery& q);

    CoordinatorOptions options_;
    std::vector<Link*> parties_;
    std::vector<PartyInfo> infos_;
    std::vector<AttributeSchema> schema_;
    std::vector<int> owner_;
    std::vector<int> local_column_;
    size_t num_records_ = 0;

    mutable std::mutex mutex_;
    std::map<CountQuery, uint64_t> cache_;
    std::map<CountQuery, std::shared_future<uint64_t>> inflight_;
    ComplexityCounter counter_;
    std::atomic<uint64_t> queries_{0};
    std::atomic<uint64_t> sessions_{0};
    std::atomic<uint64_t> cache_hits_{0};
    std::atomic<uint64_t> session_counter_{0};
};

/// Everything for an in-process run: commodity, parties, links, coordinator.
class InProcessFederation {
public:
    InProcessFederation(std::vector<LocalDataset> parts, uint64_t commodity_seed, CoordinatorOptions options = {},
                        bool record_transcript = false);

    Coordinator& coordinator() { return *coordinator_; }
    Transcript& transcript() { return transcript_; }
    Party& party(size_t i) { return *parties_[i]; }
    size_t num_parties() const { return parties_.size(); }

private:
    Transcript transcript_;
    std::unique_ptr<CommodityServer> commodity_;
    std::unique_ptr<CommodityEndpoint> commodity_endpoint_;
    std::vector<std::unique_ptr<InProcessLink>> commodity_links_;
    std::vector<std::unique_ptr<Party>> parties_;
    std::vector<std::unique_ptr<InProcessLink>> party_links_;
    std::unique_ptr<Coordinator> coordinator_;
};

/// Coordinator wired to remote party processes.
class SocketFederation {
public:
    SocketFederation(const std::vector<std::pair<std::string, Endpoint>>& parties, CoordinatorOptions options = {},
                     int connect_timeout_ms = 10000);

    Coordinator& coordinator() { return *coordinator_; }

private:
    std::vector<std::unique_ptr<SocketLink>> links_;
    std::unique_ptr<Coordinator> coordinator_;
};

/// Serves a party until `stop` is raised or a shutdown frame arrives.
void serve_party(LocalDataset local, const Endpoint& bind, const Endpoint& commodity, std::atomic<bool>& stop,
                 std::function<void(uint16_t)> on_listening = {});
/// Serves the commodity until `stop` is raised or a shutdown frame arrives.
void serve_commodity(uint64_t seed, const Endpoint& bind, std::atomic<bool>& stop,
                     std::function<void(uint16_t)> on_listening = {});

}  // namespace fedbn
