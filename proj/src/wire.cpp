#include "fedbn/wire.hpp"

#include <algorithm>
#include <cstdio>

#include "fedbn/errors.hpp"
#include "fedbn/random.hpp"

namespace fedbn {

namespace {

void put_u64(std::vector<uint8_t>& out, uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

uint64_t get_u64(const uint8_t* p) {
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(p[i]) << (8 * i);
    return v;
}

}  // namespace

SessionId SessionId::derive(uint64_t seed, uint64_t counter) {
    SessionId id;
    const uint64_t hi = derive_seed(seed, 2 * counter + 1);
    const uint64_t lo = derive_seed(seed, 2 * counter + 2);
    for (int i = 0; i < 8; ++i) {
        id.bytes[i] = static_cast<uint8_t>(hi >> (8 * i));
        id.bytes[8 + i] = static_cast<uint8_t>(lo >> (8 * i));
    }
    return id;
}

uint64_t SessionId::word(size_t i) const { return get_u64(bytes.data() + 8 * i); }

std::string SessionId::hex() const {
    std::string s;
    char buf[3];
    for (uint8_t b : bytes) {
        std::snprintf(buf, sizeof buf, "%02x", b);
        s += buf;
    }
    return s;
}

std::vector<uint8_t> encode_frame(const Frame& f) {
    const size_t body = kFrameHeaderBytes + 8 * f.payload.size();
    if (body > kMaxFrameBytes) throw FormatError("frame exceeds maximum size");
    std::vector<uint8_t> out;
    out.reserve(4 + body);
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>(body >> (8 * i)));
    out.insert(out.end(), f.session.bytes.begin(), f.session.bytes.end());
    out.push_back(static_cast<uint8_t>(f.phase));
    for (uint64_t v : f.payload) put_u64(out, v);
    return out;
}

Frame decode_frame_body(std::span<const uint8_t> body) {
    if (body.size() < kFrameHeaderBytes) throw FormatError("frame shorter than its header");
    if ((body.size() - kFrameHeaderBytes) % 8 != 0) throw FormatError("frame payload is not a whole number of limbs");
    Frame f;
    std::copy(body.begin(), body.begin() + 16, f.session.bytes.begin());
    const uint8_t phase = body[16];
    if (phase > static_cast<uint8_t>(Phase::shutdown) && phase != static_cast<uint8_t>(Phase::error)) {
        throw FormatError("unknown frame phase " + std::to_string(phase));
    }
    f.phase = static_cast<Phase>(phase);
    const size_t limbs = (body.size() - kFrameHeaderBytes) / 8;
    f.payload.resize(limbs);
    for (size_t i = 0; i < limbs; ++i) f.payload[i] = get_u64(body.data() + kFrameHeaderBytes + 8 * i);
    return f;
}

Frame decode_frame(std::span<const uint8_t> bytes) {
    if (bytes.size() < 4) throw FormatError("frame missing length prefix");
    uint32_t len = 0;
    for (int i = 0; i < 4; ++i) len |= static_cast<uint32_t>(bytes[i]) << (8 * i);
    if (len != bytes.size() - 4) throw FormatError("frame length prefix does not match its size");
    return decode_frame_body(bytes.subspan(4));
}

Frame error_frame(const SessionId& session, const std::string& message) {
    Frame f{session, Phase::error, {}};
    append_string(f.payload, message);
    return f;
}

std::string error_message(const Frame& f) {
    size_t pos = 0;
    try {
        return read_string(f.payload, pos);
    } catch (const FormatError&) {
        return "unreadable error frame";
    }
}

void append_string(std::vector<uint64_t>& payload, const std::string& s) {
    payload.push_back(s.size());
    for (size_t i = 0; i < s.size(); i += 8) {
        uint64_t limb = 0;
        for (size_t k = 0; k < 8 && i + k < s.size(); ++k) {
            limb |= static_cast<uint64_t>(static_cast<uint8_t>(s[i + k])) << (8 * k);
        }
        payload.push_back(limb);
    }
}

std::string read_string(std::span<const uint64_t> payload, size_t& pos) {
    if (pos >= payload.size()) throw FormatError("string field truncated");
    const uint64_t len = payload[pos++];
    const uint64_t limbs = (len + 7) / 8;
    if (len > kMaxFrameBytes || pos + limbs > payload.size()) throw FormatError("string field truncated");
    std::string s;
    s.reserve(len);
    for (uint64_t i = 0; i < len; ++i) s += static_cast<char>((payload[pos + i / 8] >> (8 * (i % 8))) & 0xFF);
    pos += limbs;
    return s;
}

}  // namespace fedbn
