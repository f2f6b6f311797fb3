#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "fedbn/wire.hpp"

namespace fedbn {

enum class TransportMode { in_process, socket };

TransportMode parse_transport_mode(const std::string& s);

/// Server side of a request/response exchange.
class FrameHandler {
public:
    virtual ~FrameHandler() = default;
    virtual Frame handle(const Frame& request) = 0;
};

/// Client side: one request frame in, one response frame out. Throws
/// TransportError on delivery failure.
class Link {
public:
    virtual ~Link() = default;
    virtual Frame call(const Frame& request) = 0;
};

struct TranscriptEntry {
    std::string from;
    std::string to;
    Frame frame;
};

/// Thread-safe audit log of delivered frames.
class Transcript {
public:
    void record(std::string from, std::string to, const Frame& f);
    std::vector<TranscriptEntry> entries() const;
    size_t size() const;
    void clear();

private:
    mutable std::mutex mutex_;
    std::vector<TranscriptEntry> entries_;
};

/// Delivers frames by direct call. Requests and responses are round-tripped
/// through the wire encoding so both transports share one byte contract.
class InProcessLink : public Link {
public:
    InProcessLink(FrameHandler& handler, std::string client, std::string server, Transcript* transcript = nullptr);
    Frame call(const Frame& request) override;

private:
    FrameHandler& handler_;
    std::string client_;
    std::string server_;
    Transcript* transcript_;
};

struct Endpoint {
    std::string host = "127.0.0.1";
    uint16_t port = 0;

    static Endpoint parse(const std::string& text);
    std::string str() const;
};

/// Length-prefixed frames over one TCP stream, reconnecting on demand.
class SocketLink : public Link {
public:
    explicit SocketLink(Endpoint endpoint, int connect_timeout_ms = 10000);
    ~SocketLink() override;
    SocketLink(const SocketLink&) = delete;
    SocketLink& operator=(const SocketLink&) = delete;

    Frame call(const Frame& request) override;
    void close();

private:
    void connect_();

    Endpoint endpoint_;
    int connect_timeout_ms_;
    int fd_ = -1;
    std::mutex mutex_;
};

/// Serves a FrameHandler on a TCP port, one thread per connection.
/// A frame that cannot be decoded gets an error response and its connection
/// is closed; the server keeps running.
class FrameServer {
public:
    FrameServer(FrameHandler& handler, Endpoint bind);
    ~FrameServer();
    FrameServer(const FrameServer&) = delete;
    FrameServer& operator=(const FrameServer&) = delete;

    uint16_t port() const { return port_; }
    /// Blocks until `stop` becomes true.
    void run(const std::atomic<bool>& stop);

private:
    void serve_connection(int fd, const std::atomic<bool>& stop);

    FrameHandler& handler_;
    int listen_fd_ = -1;
    uint16_t port_ = 0;
};

/// Raw helpers, exposed for robustness tests.
void write_all(int fd, const std::vector<uint8_t>& bytes);
/// Reads one frame body; returns false on clean EOF before any byte.
bool read_frame_body(int fd, std::vector<uint8_t>& body, const std::atomic<bool>* stop = nullptr);

}  // namespace fedbn
