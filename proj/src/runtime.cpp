#include "fedbn/runtime.hpp"

#include <algorithm>

#include "fedbn/errors.hpp"

namespace fedbn {

int CountOracle::attribute_index(const std::string& name) const {
    const auto& s = schema();
    for (size_t i = 0; i < s.size(); ++i) {
        if (s[i].name == name) return static_cast<int>(i);
    }
    throw SchemaError("unknown attribute '" + name + "'");
}

namespace {

// Resolves a condition value against a modeled attribute to a cell value.
int resolve_state(const AttributeSchema& attr, int state) {
    if (state == kMissing) return kMissing;
    if (state < 0 || state >= static_cast<int>(attr.cardinality())) {
        throw SchemaError("state " + std::to_string(state) + " out of range for '" + attr.name + "'");
    }
    return condition_state(attr, state);
}

}  // namespace

// ---- central -------------------------------------------------------------

CentralCounter::CentralCounter(Dataset data) : data_(std::move(data)), schema_(data_.modeled_schema()) {}

uint64_t CentralCounter::count(const Conditions& conditions, const RowFilter& rows) {
    ++queries_;
    std::vector<std::pair<size_t, int>> checks;
    for (const auto& [name, state] : conditions) {
        const int c = attribute_index(name);
        checks.emplace_back(static_cast<size_t>(c), resolve_state(schema_[c], state));
    }
    auto test = [&](const std::vector<int>& rec) {
        for (const auto& [c, v] : checks) {
            if (rec[c] != v) return false;
        }
        return true;
    };
    uint64_t n = 0;
    if (rows.kind == RowFilter::Kind::all) {
        for (const auto& rec : data_.records) n += test(rec);
        return n;
    }
    const std::vector<size_t>* selected = nullptr;
    {
        std::lock_guard lock(row_cache_mutex_);
        auto it = row_cache_.find(rows);
        if (it == row_cache_.end()) it = row_cache_.emplace(rows, selected_rows(data_.num_records(), rows)).first;
        selected = &it->second;
    }
    for (size_t r : *selected) n += test(data_.records[r]);
    return n;
}

FilteredOracle::FilteredOracle(CountOracle& base, RowFilter rows)
    : base_(base), rows_(rows), size_(static_cast<size_t>(base.count({}, rows))) {}

uint64_t FilteredOracle::count(const Conditions& conditions, const RowFilter& rows) {
    if (rows.kind != RowFilter::Kind::all) throw DomainError("filtered oracles do not compose");
    ++queries_;
    return base_.count(conditions, rows_);
}

// ---- party ---------------------------------------------------------------

std::vector<uint64_t> encode_party_query(const RowFilter& rows, const std::vector<std::pair<int, int>>& local_conditions) {
    std::vector<uint64_t> body{static_cast<uint64_t>(rows.kind), rows.seed, rows.a, rows.b, local_conditions.size()};
    for (const auto& [column, value] : local_conditions) {
        body.push_back(static_cast<uint64_t>(column));
        body.push_back(value == kMissing ? 0 : static_cast<uint64_t>(value) + 1);
    }
    return body;
}

std::pair<RowFilter, Conditions> decode_party_query(const LocalDataset& local, std::span<const uint64_t> body) {
    if (body.size() < 5) throw ProtocolError("query body too short");
    if (body[0] > static_cast<uint64_t>(RowFilter::Kind::split_second)) throw ProtocolError("unknown row filter");
    RowFilter rows{static_cast<RowFilter::Kind>(body[0]), body[1], body[2], body[3]};
    const uint64_t n = body[4];
    if (body.size() != 5 + 2 * n) throw ProtocolError("query body has the wrong size");
    Conditions conds;
    for (uint64_t i = 0; i < n; ++i) {
        const uint64_t column = body[5 + 2 * i];
        const uint64_t value = body[6 + 2 * i];
        if (column >= local.columns.size()) throw ProtocolError("query names a column this party does not hold");
        const auto& attr = local.columns[column];
        if (value > attr.cardinality()) throw ProtocolError("query state out of range for '" + attr.name + "'");
        if (!conds.emplace(attr.name, value == 0 ? kMissing : static_cast<int>(value - 1)).second) {
            throw ProtocolError("attribute '" + attr.name + "' conditioned twice");
        }
    }
    return {rows, conds};
}

Party::Party(LocalDataset local, Link& commodity)
    : local_(std::move(local)),
      modeled_(local_.modeled_columns()),
      protocol_(local_.party_id, commodity, [this](const QuerySpec& q) { return vector_for(q); },
                [this] { return info_payload(); }) {}

MembershipVector Party::vector_for(const QuerySpec& spec) const {
    const auto [rows, conds] = decode_party_query(local_, spec.body);
    MembershipVector v = membership_vector(local_, conds);
    if (rows.kind != RowFilter::Kind::all) {
        const auto keep = row_indicator(local_.num_records(), rows);
        for (size_t r = 0; r < v.bits.size(); ++r) v.bits[r] &= keep[r];
    }
    return v;
}

std::vector<uint64_t> Party::info_payload() const {
    std::vector<uint64_t> out{local_.num_records()};
    append_string(out, local_.party_id);
    out.push_back(modeled_.size());
    for (const auto& col : modeled_) {
        append_string(out, col.name);
        out.push_back(col.states.size());
        for (const auto& s : col.states) append_string(out, s);
    }
    return out;
}

PartyInfo decode_party_info(std::span<const uint64_t> payload) {
    PartyInfo info;
    size_t pos = 0;
    auto next = [&]() {
        if (pos >= payload.size()) throw ProtocolError("party info truncated");
        return payload[pos++];
    };
    info.num_records = static_cast<size_t>(next());
    info.id = read_string(payload, pos);
    const uint64_t ncols = next();
    for (uint64_t c = 0; c < ncols; ++c) {
        AttributeSchema attr;
        attr.name = read_string(payload, pos);
        const uint64_t ns = next();
        for (uint64_t s = 0; s < ns; ++s) attr.states.push_back(read_string(payload, pos));
        attr.validate();
        info.columns.push_back(std::move(attr));
    }
    if (pos != payload.size()) throw ProtocolError("party info has trailing data");
    return info;
}

// ---- coordinator ---------------------------------------------------------

Coordinator::Coordinator(CoordinatorOptions options) : options_(options) {}

void Coordinator::register_party(const std::string& id, Link& link) {
    std::lock_guard lock(mutex_);
    for (const auto& p : infos_) {
        if (p.id == id) throw RegistrationError("party '" + id + "' is already registered");
    }
    const Frame reply = link.call({SessionId::derive(options_.seed ^ 0x1f0, infos_.size()), Phase::info, {}});
    if (reply.phase == Phase::error) throw RegistrationError("party '" + id + "' refused: " + error_message(reply));
    if (reply.phase != Phase::info) throw ProtocolError("party '" + id + "' answered info in the wrong phase");
    PartyInfo info = decode_party_info(reply.payload);
    if (info.id != id) throw RegistrationError("party at this link identifies as '" + info.id + "', not '" + id + "'");
    if (!infos_.empty() && info.num_records != num_records_) {
        throw AlignmentError("party '" + id + "' holds " + std::to_string(info.num_records) + " records, expected " +
                             std::to_string(num_records_));
    }
    for (const auto& col : info.columns) {
        for (const auto& existing : schema_) {
            if (existing.name == col.name) throw RegistrationError("attribute '" + col.name + "' held twice");
        }
    }
    num_records_ = info.num_records;
    for (size_t c = 0; c < info.columns.size(); ++c) {
        schema_.push_back(info.columns[c]);
        owner_.push_back(static_cast<int>(parties_.size()));
        local_column_.push_back(static_cast<int>(c));
    }
    parties_.push_back(&link);
    infos_.push_back(std::move(info));
    cache_.clear();
}

int Coordinator::owner_of(const std::string& attribute) const {
    for (size_t i = 0; i < schema_.size(); ++i) {
        if (schema_[i].name == attribute) return owner_[i];
    }
    throw SchemaError("attribute '" + attribute + "' is held by no party");
}

ComplexityCounter Coordinator::complexity() const {
    std::lock_guard lock(mutex_);
    return counter_;
}

CountQuery Coordinator::canonical(const Conditions& conditions, const RowFilter& rows) const {
    CountQuery q;
    q.rows = rows;
    for (const auto& [name, state] : conditions) {
        const int idx = [&] {
            for (size_t i = 0; i < schema_.size(); ++i) {
                if (schema_[i].name == name) return static_cast<int>(i);
            }
            throw SchemaError("attribute '" + name + "' is held by no party");
        }();
        q.conditions[name] = resolve_state(schema_[idx], state);
    }
    return q;
}

uint64_t Coordinator::count(const Conditions& conditions, const RowFilter& rows) {
    return federated_count(canonical(conditions, rows));
}

uint64_t Coordinator::federated_count(const CountQuery& query) {
    ++queries_;
    if (parties_.size() < 2) throw DomainError("federated counting needs at least two registered parties");
    if (!options_.cache) return run_query(query);

    std::promise<uint64_t> promise;
    std::shared_future<uint64_t> wait_for;
    {
        std::lock_guard lock(mutex_);
        if (auto it = cache_.find(query); it != cache_.end()) {
            ++cache_hits_;
            return it->second;
        }
        if (auto it = inflight_.find(query); it != inflight_.end()) {
            ++cache_hits_;
            wait_for = it->second;
        } else {
            inflight_.emplace(query, promise.get_future().share());
        }
    }
    if (wait_for.valid()) return wait_for.get();

    try {
        const uint64_t value = run_query(query);
        std::lock_guard lock(mutex_);
        cache_.emplace(query, value);
        inflight_.erase(query);
        promise.set_value(value);
        return value;
    } catch (...) {
        {
            std::lock_guard lock(mutex_);
            inflight_.erase(query);
        }
        promise.set_exception(std::current_exception());
        throw;
    }
}

uint64_t Coordinator::run_query(const CountQuery& q) {
    std::vector<std::vector<std::pair<int, int>>> local(parties_.size());
    for (const auto& [name, value] : q.conditions) {
        const int idx = attribute_index(name);
        local[owner_[idx]].emplace_back(local_column_[idx], value);
    }
    std::vector<std::vector<uint64_t>> bodies;
    for (const auto& l : local) bodies.push_back(encode_party_query(q.rows, l));

    for (int attempt = 0;; ++attempt) {
        ProtocolSession session;
        session.id = SessionId::derive(options_.seed, session_counter_++);
        session.length = num_records_;
        for (const auto& p : infos_) session.participants.push_back(p.id);
        ComplexityCounter delta;
        try {
            const uint64_t result = run_protocol(session, parties_, bodies, delta);
            ++sessions_;
            std::lock_guard lock(mutex_);
            counter_ += delta;
            return result;
        } catch (const TransportError& e) {
            if (attempt >= options_.retries) {
                throw SessionError("count session failed after " + std::to_string(attempt + 1) + " attempt(s): " +
                                   e.what());
            }
        }
    }
}

void Coordinator::shutdown_parties() {
    for (size_t i = 0; i < parties_.size(); ++i) {
        try {
            parties_[i]->call({SessionId::derive(options_.seed ^ 0x5d, i), Phase::shutdown, {}});
        } catch (const std::exception&) {
            // already gone
        }
    }
}

// ---- federations ---------------------------------------------------------

InProcessFederation::InProcessFederation(std::vector<LocalDataset> parts, uint64_t commodity_seed,
                                         CoordinatorOptions options, bool record_transcript)
    : commodity_(std::make_unique<CommodityServer>(commodity_seed)),
      commodity_endpoint_(std::make_unique<CommodityEndpoint>(*commodity_)),
      coordinator_(std::make_unique<Coordinator>(options)) {
    Transcript* t = record_transcript ? &transcript_ : nullptr;
    for (auto& part : parts) {
        const std::string id = part.party_id;
        commodity_links_.push_back(std::make_unique<InProcessLink>(*commodity_endpoint_, id, "commodity", t));
        parties_.push_back(std::make_unique<Party>(std::move(part), *commodity_links_.back()));
        party_links_.push_back(std::make_unique<InProcessLink>(parties_.back()->handler(), "coordinator", id, t));
        coordinator_->register_party(id, *party_links_.back());
    }
}

SocketFederation::SocketFederation(const std::vector<std::pair<std::string, Endpoint>>& parties,
                                   CoordinatorOptions options, int connect_timeout_ms)
    : coordinator_(std::make_unique<Coordinator>(options)) {
    for (const auto& [id, endpoint] : parties) {
        links_.push_back(std::make_unique<SocketLink>(endpoint, connect_timeout_ms));
        coordinator_->register_party(id, *links_.back());
    }
}

namespace {

// Raises `stop` when a shutdown frame arrives, after answering it.
class StoppingHandler : public FrameHandler {
public:
    StoppingHandler(FrameHandler& inner, std::atomic<bool>& stop) : inner_(inner), stop_(stop) {}
    Frame handle(const Frame& request) override {
        Frame out = inner_.handle(request);
        if (request.phase == Phase::shutdown) stop_ = true;
        return out;
    }

private:
    FrameHandler& inner_;
    std::atomic<bool>& stop_;
};

}  // namespace

void serve_party(LocalDataset local, const Endpoint& bind, const Endpoint& commodity, std::atomic<bool>& stop,
                 std::function<void(uint16_t)> on_listening) {
    SocketLink commodity_link(commodity);
    Party party(std::move(local), commodity_link);
    StoppingHandler handler(party.handler(), stop);
    FrameServer server(handler, bind);
    if (on_listening) on_listening(server.port());
    server.run(stop);
}

void serve_commodity(uint64_t seed, const Endpoint& bind, std::atomic<bool>& stop,
                     std::function<void(uint16_t)> on_listening) {
    CommodityServer commodity(seed);
    CommodityEndpoint endpoint(commodity);
    StoppingHandler handler(endpoint, stop);
    FrameServer server(handler, bind);
    if (on_listening) on_listening(server.port());
    server.run(stop);
}

}  // namespace fedbn
