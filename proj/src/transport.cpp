#include "fedbn/transport.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <thread>

#include "fedbn/errors.hpp"

namespace fedbn {

TransportMode parse_transport_mode(const std::string& s) {
    if (s == "in_process") return TransportMode::in_process;
    if (s == "socket") return TransportMode::socket;
    throw ConfigError("unknown transport mode '" + s + "'");
}

void Transcript::record(std::string from, std::string to, const Frame& f) {
    std::lock_guard lock(mutex_);
    entries_.push_back({std::move(from), std::move(to), f});
}

std::vector<TranscriptEntry> Transcript::entries() const {
    std::lock_guard lock(mutex_);
    return entries_;
}

size_t Transcript::size() const {
    std::lock_guard lock(mutex_);
    return entries_.size();
}

void Transcript::clear() {
    std::lock_guard lock(mutex_);
    entries_.clear();
}

InProcessLink::InProcessLink(FrameHandler& handler, std::string client, std::string server, Transcript* transcript)
    : handler_(handler), client_(std::move(client)), server_(std::move(server)), transcript_(transcript) {}

Frame InProcessLink::call(const Frame& request) {
    const Frame delivered = decode_frame(encode_frame(request));
    if (transcript_) transcript_->record(client_, server_, delivered);
    const Frame response = decode_frame(encode_frame(handler_.handle(delivered)));
    if (transcript_) transcript_->record(server_, client_, response);
    return response;
}

Endpoint Endpoint::parse(const std::string& text) {
    const auto colon = text.rfind(':');
    if (colon == std::string::npos) throw ConfigError("endpoint '" + text + "' is not host:port");
    Endpoint e;
    e.host = text.substr(0, colon);
    const int port = std::stoi(text.substr(colon + 1));
    if (port < 0 || port > 65535) throw ConfigError("endpoint '" + text + "' has an invalid port");
    e.port = static_cast<uint16_t>(port);
    return e;
}

std::string Endpoint::str() const { return host + ":" + std::to_string(port); }

// ---- raw IO --------------------------------------------------------------

namespace {

// Waits until fd is readable; false if `stop` was raised first.
bool wait_readable(int fd, const std::atomic<bool>* stop) {
    while (true) {
        pollfd p{fd, POLLIN, 0};
        const int rc = ::poll(&p, 1, 200);
        if (rc > 0) return true;
        if (rc < 0 && errno != EINTR) throw TransportError(std::string("poll failed: ") + std::strerror(errno));
        if (stop && stop->load()) return false;
    }
}

// Reads exactly n bytes; returns bytes read before EOF.
size_t read_exact(int fd, uint8_t* buf, size_t n, const std::atomic<bool>* stop) {
    size_t got = 0;
    while (got < n) {
        if (!wait_readable(fd, stop)) throw TransportError("interrupted while reading");
        const ssize_t rc = ::recv(fd, buf + got, n - got, 0);
        if (rc == 0) return got;
        if (rc < 0) {
            if (errno == EINTR) continue;
            throw TransportError(std::string("recv failed: ") + std::strerror(errno));
        }
        got += static_cast<size_t>(rc);
    }
    return got;
}

}  // namespace

void write_all(int fd, const std::vector<uint8_t>& bytes) {
    size_t sent = 0;
    while (sent < bytes.size()) {
        const ssize_t rc = ::send(fd, bytes.data() + sent, bytes.size() - sent, MSG_NOSIGNAL);
        if (rc < 0) {
            if (errno == EINTR) continue;
            throw TransportError(std::string("send failed: ") + std::strerror(errno));
        }
        sent += static_cast<size_t>(rc);
    }
}

bool read_frame_body(int fd, std::vector<uint8_t>& body, const std::atomic<bool>* stop) {
    uint8_t prefix[4];
    if (stop && !wait_readable(fd, stop)) return false;
    const size_t got = read_exact(fd, prefix, 4, stop);
    if (got == 0) return false;
    if (got < 4) throw TransportError("connection closed inside a length prefix");
    uint32_t len = 0;
    for (int i = 0; i < 4; ++i) len |= static_cast<uint32_t>(prefix[i]) << (8 * i);
    if (len > kMaxFrameBytes) throw FormatError("frame length " + std::to_string(len) + " exceeds the maximum");
    if (len < kFrameHeaderBytes) throw FormatError("frame length " + std::to_string(len) + " is below the header size");
    body.resize(len);
    if (read_exact(fd, body.data(), len, stop) != len) throw TransportError("connection closed inside a frame");
    return true;
}

// ---- client --------------------------------------------------------------

SocketLink::SocketLink(Endpoint endpoint, int connect_timeout_ms)
    : endpoint_(std::move(endpoint)), connect_timeout_ms_(connect_timeout_ms) {}

SocketLink::~SocketLink() { close(); }

void SocketLink::close() {
    if (fd_ >= 0) {
        ::close(fd_);
        fd_ = -1;
    }
}

void SocketLink::connect_() {
    addrinfo hints{};
    hints.ai_family = AF_INET;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    const std::string port = std::to_string(endpoint_.port);
    if (::getaddrinfo(endpoint_.host.c_str(), port.c_str(), &hints, &res) != 0 || !res) {
        throw TransportError("cannot resolve " + endpoint_.str());
    }
    const auto deadline = std::chrono::steady_clock::now() + std::chrono::milliseconds(connect_timeout_ms_);
    int last_errno = 0;
    while (true) {
        const int fd = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
        if (fd < 0) {
            ::freeaddrinfo(res);
            throw TransportError("socket() failed");
        }
        if (::connect(fd, res->ai_addr, res->ai_addrlen) == 0) {
            int one = 1;
            ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
            fd_ = fd;
            ::freeaddrinfo(res);
            return;
        }
        last_errno = errno;
        ::close(fd);
        if (std::chrono::steady_clock::now() >= deadline) break;
        std::this_thread::sleep_for(std::chrono::milliseconds(50));
    }
    ::freeaddrinfo(res);
    throw TransportError("cannot connect to " + endpoint_.str() + ": " + std::strerror(last_errno));
}

Frame SocketLink::call(const Frame& request) {
    std::lock_guard lock(mutex_);
    try {
        if (fd_ < 0) connect_();
        write_all(fd_, encode_frame(request));
        std::vector<uint8_t> body;
        if (!read_frame_body(fd_, body)) throw TransportError("peer " + endpoint_.str() + " disconnected");
        return decode_frame_body(body);
    } catch (const FormatError& e) {
        close();
        throw TransportError(std::string("malformed response from ") + endpoint_.str() + ": " + e.what());
    } catch (const TransportError&) {
        close();
        throw;
    }
}

// ---- server --------------------------------------------------------------

FrameServer::FrameServer(FrameHandler& handler, Endpoint bind) : handler_(handler) {
    listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (listen_fd_ < 0) throw TransportError("socket() failed");
    int one = 1;
    ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(bind.port);
    if (::inet_pton(AF_INET, bind.host.c_str(), &addr.sin_addr) != 1) {
        ::close(listen_fd_);
        throw TransportError("cannot parse bind address " + bind.host);
    }
    if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 || ::listen(listen_fd_, 64) != 0) {
        const std::string why = std::strerror(errno);
        ::close(listen_fd_);
        throw TransportError("cannot bind " + bind.str() + ": " + why);
    }
    socklen_t len = sizeof addr;
    ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
}

FrameServer::~FrameServer() {
    if (listen_fd_ >= 0) ::close(listen_fd_);
}

void FrameServer::run(const std::atomic<bool>& stop) {
    std::vector<std::thread> workers;
    while (!stop.load()) {
        pollfd p{listen_fd_, POLLIN, 0};
        const int rc = ::poll(&p, 1, 200);
        if (rc <= 0) continue;
        const int fd = ::accept(listen_fd_, nullptr, nullptr);
        if (fd < 0) continue;
        int one = 1;
        ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
        workers.emplace_back([this, fd, &stop] { serve_connection(fd, stop); });
    }
    for (auto& w : workers) w.join();
}

void FrameServer::serve_connection(int fd, const std::atomic<bool>& stop) {
    try {
        std::vector<uint8_t> body;
        while (!stop.load()) {
            Frame request;
            try {
                if (!read_frame_body(fd, body, &stop)) break;
                request = decode_frame_body(body);
            } catch (const FormatError& e) {
                write_all(fd, encode_frame(error_frame(SessionId{}, std::string("rejected frame: ") + e.what())));
                break;
            }
            Frame response;
            try {
                response = handler_.handle(request);
            } catch (const std::exception& e) {
                response = error_frame(request.session, e.what());
            }
            write_all(fd, encode_frame(response));
        }
    } catch (const std::exception&) {
        // peer went away; nothing to report back
    }
    ::close(fd);
}

}  // namespace fedbn
