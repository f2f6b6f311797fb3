#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace fedbn {

struct SessionId {
    std::array<uint8_t, 16> bytes{};

    /// Deterministic id for the `counter`-th session of a run seeded with `seed`.
    static SessionId derive(uint64_t seed, uint64_t counter);
    uint64_t word(size_t i) const;
    std::string hex() const;

    auto operator<=>(const SessionId&) const = default;
};

enum class Phase : uint8_t {
    masking = 0,
    exchange = 1,
    aggregation = 2,
    done = 3,
    info = 4,
    shutdown = 5,
    error = 0xFF,
};

/// Wire frame: u32 LE body length, then {session id: 16 bytes, phase: 1 byte,
/// payload: u64 LE limbs}.
struct Frame {
    SessionId session;
    Phase phase = Phase::done;
    std::vector<uint64_t> payload;

    bool operator==(const Frame&) const = default;
};

inline constexpr size_t kFrameHeaderBytes = 17;
inline constexpr size_t kMaxFrameBytes = size_t{1} << 28;

std::vector<uint8_t> encode_frame(const Frame& f);
/// Decodes a frame body (without the length prefix). Throws FormatError.
Frame decode_frame_body(std::span<const uint8_t> body);
/// Decodes a full length-prefixed frame.
Frame decode_frame(std::span<const uint8_t> bytes);

Frame error_frame(const SessionId& session, const std::string& message);
std::string error_message(const Frame& f);

/// Strings travel as [byte length, ceil(len/8) LE-packed limbs].
void append_string(std::vector<uint64_t>& payload, const std::string& s);
std::string read_string(std::span<const uint64_t> payload, size_t& pos);

}  // namespace fedbn
