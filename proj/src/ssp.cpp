#include "fedbn/ssp.hpp"

#include <bit>

#include "fedbn/errors.hpp"
#include "fedbn/random.hpp"

namespace fedbn {

ComplexityCounter& ComplexityCounter::operator+=(const ComplexityCounter& o) {
    protocols_run += o.protocols_run;
    subprotocols_run += o.subprotocols_run;
    multiplications += o.multiplications;
    return *this;
}

ComplexityCounter ComplexityCounter::operator-(const ComplexityCounter& o) const {
    return {protocols_run - o.protocols_run, subprotocols_run - o.subprotocols_run,
            multiplications - o.multiplications};
}

uint64_t subprotocol_count(int n) {
    if (n < 2) throw DomainError("scalar product needs at least two parties, got " + std::to_string(n));
    if (n > 30) throw DomainError("party count " + std::to_string(n) + " is too large");
    uint64_t total = 0;
    uint64_t binom = 1;  // C(n, x), advanced incrementally
    for (int x = 1; x <= n; ++x) {
        binom = binom * static_cast<uint64_t>(n - x + 1) / static_cast<uint64_t>(x);
        if (x >= 2) total += binom;
    }
    return total;
}

std::vector<uint32_t> party_subsets(int n) {
    if (n < 2 || n > 30) throw DomainError("party count " + std::to_string(n) + " out of range");
    std::vector<uint32_t> out;
    for (uint32_t s = 1; s < (uint32_t{1} << n); ++s) {
        if (std::popcount(s) >= 2) out.push_back(s);
    }
    return out;
}

namespace {

std::vector<uint32_t> subsets_containing(int party, int n) {
    std::vector<uint32_t> out;
    for (uint32_t s : party_subsets(n)) {
        if (s & (uint32_t{1} << party)) out.push_back(s);
    }
    return out;
}

int highest_member(uint32_t s) { return 31 - std::countl_zero(s); }

}  // namespace

std::vector<uint64_t> MaskShare::encode() const {
    std::vector<uint64_t> out(mask);
    for (const auto& sh : subset_shares) out.insert(out.end(), sh.begin(), sh.end());
    out.push_back(offset);
    return out;
}

MaskShare MaskShare::decode(int party, int n, size_t length, std::span<const uint64_t> payload) {
    const size_t n_shares = subsets_containing(party, n).size();
    if (payload.size() != length * (1 + n_shares) + 1) throw ProtocolError("mask payload has the wrong size");
    MaskShare m;
    m.party = party;
    m.mask.assign(payload.begin(), payload.begin() + static_cast<std::ptrdiff_t>(length));
    size_t pos = length;
    for (size_t i = 0; i < n_shares; ++i, pos += length) {
        m.subset_shares.emplace_back(payload.begin() + static_cast<std::ptrdiff_t>(pos),
                                     payload.begin() + static_cast<std::ptrdiff_t>(pos + length));
    }
    m.offset = payload[pos];
    return m;
}

std::vector<MaskShare> CommodityServer::issue_all(const SessionId& session, int n, size_t length) const {
    const auto subsets = party_subsets(n);
    Rng rng(derive_seed(derive_seed(seed_ ^ session.word(0), session.word(1)),
                        (static_cast<uint64_t>(n) << 40) ^ length));
    std::vector<MaskShare> out(static_cast<size_t>(n));
    for (int p = 0; p < n; ++p) {
        out[p].party = p;
        out[p].mask.resize(length);
        for (auto& v : out[p].mask) v = rng.below(kModulus);
    }
    std::vector<uint64_t> product(length);
    for (uint32_t s : subsets) {
        std::fill(product.begin(), product.end(), 1);
        for (int p = 0; p < n; ++p) {
            if (!(s & (uint32_t{1} << p))) continue;
            for (size_t r = 0; r < length; ++r) product[r] = mod_mul(product[r], out[p].mask[r]);
        }
        // members but the highest draw uniform shares; the highest takes the remainder
        std::vector<uint64_t> remainder = product;
        const int last = highest_member(s);
        for (int p = 0; p < n; ++p) {
            if (!(s & (uint32_t{1} << p))) continue;
            if (p == last) {
                out[p].subset_shares.push_back(remainder);
                continue;
            }
            std::vector<uint64_t> share(length);
            for (size_t r = 0; r < length; ++r) {
                share[r] = rng.below(kModulus);
                remainder[r] = mod_sub(remainder[r], share[r]);
            }
            out[p].subset_shares.push_back(std::move(share));
        }
    }
    uint64_t total = 0;
    for (int p = 0; p + 1 < n; ++p) {
        out[p].offset = rng.below(kModulus);
        total = mod_add(total, out[p].offset);
    }
    out[n - 1].offset = mod_sub(0, total);
    return out;
}

MaskShare CommodityServer::issue(const SessionId& session, int party, int n, size_t length) const {
    if (party < 0 || party >= n) throw ProtocolError("party index out of range");
    return std::move(issue_all(session, n, length)[static_cast<size_t>(party)]);
}

Frame CommodityEndpoint::handle(const Frame& request) {
    if (request.phase == Phase::shutdown || request.phase == Phase::info) {
        return {request.session, Phase::done, {}};
    }
    if (request.phase != Phase::masking || request.payload.size() != 3) {
        return error_frame(request.session, "commodity expects a masking request [party, n, length]");
    }
    const auto party = static_cast<int>(request.payload[0]);
    const auto n = static_cast<int>(request.payload[1]);
    const auto length = static_cast<size_t>(request.payload[2]);
    if (n < 2 || n > 30 || party < 0 || party >= n) return error_frame(request.session, "bad party numbering");
    if (length * (static_cast<size_t>(1) << (n - 1)) * 8 > kMaxFrameBytes) {
        return error_frame(request.session, "mask request too large");
    }
    return {request.session, Phase::masking, server_.issue(request.session, party, n, length).encode()};
}

void check_binary(const MembershipVector& v) {
    for (size_t r = 0; r < v.bits.size(); ++r) {
        if (v.bits[r] > 1) throw ProtocolError("membership vector is not binary at position " + std::to_string(r));
    }
}

std::vector<uint64_t> mask_bits(const MembershipVector& bits, const MaskShare& share) {
    if (bits.size() != share.mask.size()) throw ProtocolError("mask length does not match the vector");
    std::vector<uint64_t> out(bits.size());
    for (size_t r = 0; r < bits.size(); ++r) out[r] = mod_add(bits.bits[r], share.mask[r]);
    return out;
}

Contribution local_contribution(int party, int n, std::span<const std::vector<uint64_t>> masked,
                                const MaskShare& share) {
    if (static_cast<int>(masked.size()) != n) throw ProtocolError("expected one masked vector per party");
    const size_t length = share.mask.size();
    for (const auto& v : masked) {
        if (v.size() != length) throw ProtocolError("masked vector length mismatch");
    }
    Contribution c;
    uint64_t acc = share.offset;

    // product of masked vectors over the parties outside `s`, for one record
    auto outside_product = [&](uint32_t s, size_t r, uint64_t start) {
        uint64_t prod = start;
        for (int q = 0; q < n; ++q) {
            if (s & (uint32_t{1} << q)) continue;
            prod = mod_mul(prod, masked[q][r]);
            ++c.multiplications;
        }
        return prod;
    };

    if (party == 0) {
        // Σ_r Π_q x̂_q needs n − 1 multiplications per record
        for (size_t r = 0; r < length; ++r) {
            uint64_t prod = masked[0][r];
            for (int q = 1; q < n; ++q) prod = mod_mul(prod, masked[q][r]);
            c.multiplications += static_cast<uint64_t>(n - 1);
            acc = mod_add(acc, prod);
        }
    }
    const uint32_t self = uint32_t{1} << party;
    for (size_t r = 0; r < length; ++r) acc = mod_sub(acc, outside_product(self, r, share.mask[r]));

    const auto subsets = subsets_containing(party, n);
    if (subsets.size() != share.subset_shares.size()) throw ProtocolError("mask share count mismatch");
    for (size_t i = 0; i < subsets.size(); ++i) {
        const uint32_t s = subsets[i];
        if (std::countr_zero(s) == party) ++c.subprotocols;
        const bool negative = std::popcount(s) % 2 == 1;
        uint64_t term = 0;
        for (size_t r = 0; r < length; ++r) term = mod_add(term, outside_product(s, r, share.subset_shares[i][r]));
        acc = negative ? mod_sub(acc, term) : mod_add(acc, term);
    }
    c.value = acc;
    return c;
}

// ---- party ---------------------------------------------------------------

ProtocolParty::ProtocolParty(std::string id, Link& commodity, VectorSource source, InfoSource info)
    : id_(std::move(id)), commodity_(commodity), source_(std::move(source)), info_(std::move(info)) {}

size_t ProtocolParty::open_sessions() const {
    std::lock_guard lock(mutex_);
    return sessions_.size();
}

Frame ProtocolParty::handle(const Frame& request) {
    try {
        switch (request.phase) {
            case Phase::masking:
                return on_query(request);
            case Phase::exchange:
                return on_exchange(request);
            case Phase::done:
            case Phase::error: {
                std::lock_guard lock(mutex_);
                sessions_.erase(request.session);
                return {request.session, Phase::done, {}};
            }
            case Phase::info:
                return {request.session, Phase::info, info_ ? info_() : std::vector<uint64_t>{}};
            case Phase::shutdown:
                shutdown_ = true;
                return {request.session, Phase::done, {}};
            default:
                return error_frame(request.session, "unexpected frame phase");
        }
    } catch (const std::exception& e) {
        std::lock_guard lock(mutex_);
        sessions_.erase(request.session);
        return error_frame(request.session, e.what());
    }
}

Frame ProtocolParty::on_query(const Frame& f) {
    if (f.payload.size() < 3) throw ProtocolError("query frame too short");
    QuerySpec spec;
    spec.party_index = static_cast<int>(f.payload[0]);
    spec.n_parties = static_cast<int>(f.payload[1]);
    spec.length = static_cast<size_t>(f.payload[2]);
    spec.body.assign(f.payload.begin() + 3, f.payload.end());
    if (spec.n_parties < 2 || spec.party_index < 0 || spec.party_index >= spec.n_parties) {
        throw ProtocolError("bad party numbering in query");
    }
    {
        std::lock_guard lock(mutex_);
        if (sessions_.count(f.session)) throw ProtocolError("session " + f.session.hex() + " already open");
    }
    const MembershipVector bits = source_(spec);
    if (bits.size() != spec.length) {
        throw ProtocolError("party " + id_ + " holds " + std::to_string(bits.size()) + " records, query expects " +
                            std::to_string(spec.length));
    }
    check_binary(bits);

    const Frame mask_request{f.session, Phase::masking,
                             {static_cast<uint64_t>(spec.party_index), static_cast<uint64_t>(spec.n_parties),
                              static_cast<uint64_t>(spec.length)}};
    const Frame mask_response = commodity_.call(mask_request);
    if (mask_response.phase == Phase::error) throw ProtocolError("commodity refused: " + error_message(mask_response));
    MaskShare share = MaskShare::decode(spec.party_index, spec.n_parties, spec.length, mask_response.payload);
    Frame out{f.session, Phase::exchange, mask_bits(bits, share)};

    std::lock_guard lock(mutex_);
    sessions_[f.session] = State{std::move(spec), std::move(share)};
    return out;
}

Frame ProtocolParty::on_exchange(const Frame& f) {
    State state;
    {
        std::lock_guard lock(mutex_);
        auto it = sessions_.find(f.session);
        if (it == sessions_.end()) throw ProtocolError("exchange for unknown session " + f.session.hex());
        state = std::move(it->second);
        sessions_.erase(it);
    }
    const int n = state.spec.n_parties;
    const size_t length = state.spec.length;
    if (f.payload.size() != 2 + static_cast<size_t>(n) * length || f.payload[0] != static_cast<uint64_t>(n) ||
        f.payload[1] != length) {
        throw ProtocolError("exchange frame does not match the session");
    }
    std::vector<std::vector<uint64_t>> masked(static_cast<size_t>(n));
    for (int p = 0; p < n; ++p) {
        const auto begin = f.payload.begin() + 2 + static_cast<std::ptrdiff_t>(p * length);
        masked[p].assign(begin, begin + static_cast<std::ptrdiff_t>(length));
    }
    const Contribution c = local_contribution(state.spec.party_index, n, masked, state.share);
    return {f.session, Phase::aggregation, {c.value, c.multiplications, c.subprotocols}};
}

// ---- coordinator side ----------------------------------------------------

namespace {

void abort_session(ProtocolSession& session, std::span<Link* const> parties) {
    session.aborted = true;
    session.result.reset();
    const Frame cancel{session.id, Phase::error, {}};
    for (Link* link : parties) {
        try {
            link->call(cancel);
        } catch (const std::exception&) {
            // party already unreachable; its state dies with it
        }
    }
}

Frame exchange(ProtocolSession& session, Link& link, const Frame& request, Phase expected) {
    session.transcript.push_back(request);
    Frame response = link.call(request);
    session.transcript.push_back(response);
    if (response.phase == Phase::error) throw ProtocolError(error_message(response));
    if (response.phase != expected) throw ProtocolError("party answered in an unexpected phase");
    return response;
}

}  // namespace

uint64_t run_protocol(ProtocolSession& session, std::span<Link* const> parties,
                      std::span<const std::vector<uint64_t>> bodies, ComplexityCounter& counter) {
    const int n = static_cast<int>(parties.size());
    if (n < 2) throw DomainError("scalar product needs at least two parties");
    if (bodies.size() != parties.size()) throw ProtocolError("one query body per party required");
    session.phase = SessionPhase::masking;
    session.aborted = false;
    session.result.reset();
    const size_t length = session.length;
    try {
        std::vector<std::vector<uint64_t>> masked(static_cast<size_t>(n));
        for (int p = 0; p < n; ++p) {
            Frame q{session.id, Phase::masking,
                    {static_cast<uint64_t>(p), static_cast<uint64_t>(n), static_cast<uint64_t>(length)}};
            q.payload.insert(q.payload.end(), bodies[p].begin(), bodies[p].end());
            Frame r = exchange(session, *parties[p], q, Phase::exchange);
            if (r.payload.size() != length) throw ProtocolError("masked vector has the wrong length");
            masked[p] = std::move(r.payload);
        }

        session.phase = SessionPhase::exchange;
        Frame broadcast{session.id, Phase::exchange, {static_cast<uint64_t>(n), static_cast<uint64_t>(length)}};
        broadcast.payload.reserve(2 + static_cast<size_t>(n) * length);
        for (const auto& v : masked) broadcast.payload.insert(broadcast.payload.end(), v.begin(), v.end());
        masked.clear();

        uint64_t total = 0;
        ComplexityCounter delta;
        delta.protocols_run = 1;
        for (int p = 0; p < n; ++p) {
            Frame r = exchange(session, *parties[p], broadcast, Phase::aggregation);
            if (r.payload.size() != 3) throw ProtocolError("aggregation frame has the wrong size");
            total = mod_add(total, r.payload[0]);
            delta.multiplications += r.payload[1];
            delta.subprotocols_run += r.payload[2];
            if (p == 0) session.phase = SessionPhase::aggregation;
        }
        session.phase = SessionPhase::done;
        session.result = total;
        counter += delta;
        return total;
    } catch (const ProtocolError&) {
        abort_session(session, parties);
        throw;
    } catch (const TransportError&) {
        abort_session(session, parties);
        throw;
    }
}

uint64_t n_party_scalar_product(std::span<const MembershipVector> vectors, const CommodityServer& commodity,
                                ComplexityCounter& counter, Transcript* transcript, const SessionId& session) {
    if (vectors.size() < 2) throw DomainError("scalar product needs at least two parties");
    for (const auto& v : vectors) {
        if (v.size() != vectors[0].size()) throw ProtocolError("membership vectors differ in length");
        check_binary(v);
    }
    CommodityEndpoint commodity_endpoint(commodity);
    const size_t n = vectors.size();
    std::vector<std::unique_ptr<InProcessLink>> commodity_links;
    std::vector<std::unique_ptr<ProtocolParty>> parties;
    std::vector<std::unique_ptr<InProcessLink>> party_links;
    std::vector<Link*> links;
    for (size_t p = 0; p < n; ++p) {
        const std::string id = "party" + std::to_string(p);
        commodity_links.push_back(std::make_unique<InProcessLink>(commodity_endpoint, id, "commodity", transcript));
        const MembershipVector* v = &vectors[p];
        parties.push_back(std::make_unique<ProtocolParty>(id, *commodity_links.back(),
                                                          [v](const QuerySpec&) { return *v; }));
        party_links.push_back(std::make_unique<InProcessLink>(*parties.back(), "coordinator", id, transcript));
        links.push_back(party_links.back().get());
    }
    ProtocolSession s;
    s.id = session;
    s.length = vectors[0].size();
    for (const auto& p : parties) s.participants.push_back(p->id());
    const std::vector<std::vector<uint64_t>> bodies(n);
    try {
        return run_protocol(s, links, bodies, counter);
    } catch (const TransportError& e) {
        throw SessionError(std::string("session aborted: ") + e.what());
    }
}

uint64_t two_party_scalar_product(const MembershipVector& a, const MembershipVector& b,
                                  const CommodityServer& commodity, ComplexityCounter& counter,
                                  Transcript* transcript, const SessionId& session) {
    const MembershipVector both[2] = {a, b};
    return n_party_scalar_product(both, commodity, counter, transcript, session);
}

}  // namespace fedbn
