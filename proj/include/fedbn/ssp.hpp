#pragma once

// N-party scalar product of binary vectors: Σ_r Π_p bits_p[r].
//
// Commodity-server construction over Z_M, M = 2^61 − 1. The commodity issues
// every party p a uniform mask R_p and, for every party subset S with
// |S| ≥ 2, additive shares of the elementwise product Π_{q∈S} R_q held by the
// members of S, plus zero-sum offsets. Each party publishes x̂_p = x_p + R_p.
// Expanding Π_p (x̂_p − R_p) over subsets gives one term per S; every party
// evaluates its share of the terms it can see and publishes the sum plus its
// offset. The published sums add up to the count. Each subset S with
// |S| ≥ 2 is one subprotocol.

#include <atomic>
#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fedbn/dataset.hpp"
#include "fedbn/transport.hpp"
#include "fedbn/wire.hpp"

namespace fedbn {

inline constexpr uint64_t kModulus = (uint64_t{1} << 61) - 1;

inline uint64_t mod_add(uint64_t a, uint64_t b) {
    uint64_t s = a + b;
    return s >= kModulus ? s - kModulus : s;
}
inline uint64_t mod_sub(uint64_t a, uint64_t b) { return a >= b ? a - b : a + kModulus - b; }
inline uint64_t mod_mul(uint64_t a, uint64_t b) {
    const unsigned __int128 x = static_cast<unsigned __int128>(a) * b;
    uint64_t r = static_cast<uint64_t>(x & kModulus) + static_cast<uint64_t>(x >> 61);
    return r >= kModulus ? r - kModulus : r;
}

struct ComplexityCounter {
    uint64_t protocols_run = 0;
    uint64_t subprotocols_run = 0;
    uint64_t multiplications = 0;

    ComplexityCounter& operator+=(const ComplexityCounter& o);
    ComplexityCounter operator-(const ComplexityCounter& o) const;
    bool operator==(const ComplexityCounter&) const = default;
};

/// Σ_{x=2..n} C(n, x). Throws DomainError for n < 2.
uint64_t subprotocol_count(int n);

/// Party subsets of size ≥ 2 as bitmasks, ascending.
std::vector<uint32_t> party_subsets(int n);

struct MaskShare {
    int party = 0;
    std::vector<uint64_t> mask;
    /// One share per subset containing `party`, in party_subsets() order.
    std::vector<std::vector<uint64_t>> subset_shares;
    uint64_t offset = 0;

    std::vector<uint64_t> encode() const;
    static MaskShare decode(int party, int n, size_t length, std::span<const uint64_t> payload);
};

/// Trusted initializer. Mask material is a pure function of (seed, session),
/// so concurrent requests for the same session agree without shared state.
class CommodityServer {
public:
    explicit CommodityServer(uint64_t seed) : seed_(seed) {}

    std::vector<MaskShare> issue_all(const SessionId& session, int n, size_t length) const;
    MaskShare issue(const SessionId& session, int party, int n, size_t length) const;

private:
    uint64_t seed_;
};

/// Frame interface of the commodity: a masking request [party, n, length]
/// gets the encoded MaskShare back.
class CommodityEndpoint : public FrameHandler {
public:
    explicit CommodityEndpoint(const CommodityServer& server) : server_(server) {}
    Frame handle(const Frame& request) override;

private:
    const CommodityServer& server_;
};

/// x̂ = bits + mask (mod M).
std::vector<uint64_t> mask_bits(const MembershipVector& bits, const MaskShare& share);

struct Contribution {
    uint64_t value = 0;
    uint64_t multiplications = 0;
    /// Subsets whose lowest member is this party, so each is tallied once.
    uint64_t subprotocols = 0;
};

/// The published, offset-masked share of the result held by `party`.
Contribution local_contribution(int party, int n, std::span<const std::vector<uint64_t>> masked,
                                const MaskShare& share);

/// What a party is asked to compute in one session.
struct QuerySpec {
    int party_index = 0;
    int n_parties = 0;
    size_t length = 0;
    /// Application-defined query body (conditions, row filter).
    std::vector<uint64_t> body;
};

/// Data-party side of the protocol. The source turns a query into the
/// party's private membership vector; everything that leaves the party is
/// masked.
class ProtocolParty : public FrameHandler {
public:
    using VectorSource = std::function<MembershipVector(const QuerySpec&)>;
    using InfoSource = std::function<std::vector<uint64_t>()>;

    ProtocolParty(std::string id, Link& commodity, VectorSource source, InfoSource info = {});

    Frame handle(const Frame& request) override;
    const std::string& id() const { return id_; }
    size_t open_sessions() const;
    bool shutdown_requested() const { return shutdown_; }

private:
    struct State {
        QuerySpec spec;
        MaskShare share;
    };

    Frame on_query(const Frame& f);
    Frame on_exchange(const Frame& f);

    std::string id_;
    Link& commodity_;
    VectorSource source_;
    InfoSource info_;
    mutable std::mutex mutex_;
    std::map<SessionId, State> sessions_;
    std::atomic<bool> shutdown_{false};
};

enum class SessionPhase { masking, exchange, aggregation, done };

/// Coordinator-side record of one protocol execution.
struct ProtocolSession {
    SessionId id;
    std::vector<std::string> participants;
    size_t length = 0;
    SessionPhase phase = SessionPhase::masking;
    bool aborted = false;
    std::vector<Frame> transcript;
    /// Set only once the session reaches done.
    std::optional<uint64_t> result;
};

/// Drives one session over `parties` (index = party position). `bodies[p]`
/// is the query body sent to party p. Throws ProtocolError when a party
/// rejects the session and TransportError when delivery fails; the session
/// is aborted and no result is set in both cases.
uint64_t run_protocol(ProtocolSession& session, std::span<Link* const> parties,
                      std::span<const std::vector<uint64_t>> bodies, ComplexityCounter& counter);

/// In-process execution over fixed vectors. Validates lengths and binarity
/// before any masking. Transport failures surface as SessionError.
uint64_t n_party_scalar_product(std::span<const MembershipVector> vectors, const CommodityServer& commodity,
                                ComplexityCounter& counter, Transcript* transcript = nullptr,
                                const SessionId& session = SessionId::derive(0, 0));
uint64_t two_party_scalar_product(const MembershipVector& a, const MembershipVector& b,
                                  const CommodityServer& commodity, ComplexityCounter& counter,
                                  Transcript* transcript = nullptr,
                                  const SessionId& session = SessionId::derive(0, 0));

/// Party-side validation shared by every entry point.
void check_binary(const MembershipVector& v);

}  // namespace fedbn
