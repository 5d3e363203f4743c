#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <span>
#include <string>

#include "aaas/common/errors.hpp"
#include "aaas/proto/messages.hpp"

// Thin POSIX TCP wrapper plus a frame-oriented channel. Sockets are move-only
// owners of their file descriptor; TCP_NODELAY is set on every connected
// socket since the protocol is strict request/response.

namespace aaas::net {

class NetError : public Error {
public:
    explicit NetError(const std::string& what) : Error(what) {}
};

class BindFailure : public NetError {
public:
    explicit BindFailure(const std::string& what) : NetError(what) {}
};

class ConnectFailure : public NetError {
public:
    explicit ConnectFailure(const std::string& what) : NetError(what) {}
};

class Timeout : public NetError {
public:
    explicit Timeout(const std::string& what) : NetError(what) {}
};

class ConnectionClosed : public NetError {
public:
    explicit ConnectionClosed(const std::string& what) : NetError(what) {}
};

class TcpSocket {
public:
    TcpSocket() = default;
    explicit TcpSocket(int fd) : fd_(fd) {}
    TcpSocket(TcpSocket&& other) noexcept;
    TcpSocket& operator=(TcpSocket&& other) noexcept;
    TcpSocket(const TcpSocket&) = delete;
    TcpSocket& operator=(const TcpSocket&) = delete;
    ~TcpSocket();

    // Throws ConnectFailure (unreachable/refused) or Timeout.
    static TcpSocket connect(const std::string& host, std::uint16_t port,
                             std::chrono::milliseconds timeout);

    bool valid() const { return fd_ >= 0; }
    int fd() const { return fd_; }

    void send_all(std::span<const std::uint8_t> data);

    // Fills `buf` completely. Returns false on a clean peer close before the
    // first byte; throws ConnectionClosed on close mid-buffer and Timeout
    // when the deadline passes.
    bool recv_exact(std::span<std::uint8_t> buf,
                    std::optional<std::chrono::milliseconds> timeout = std::nullopt);

    // Interrupts any blocked reader/writer on this socket (used by shutdown
    // paths from another thread).
    void shutdown_both();
    void close();

private:
    int fd_ = -1;
};

class TcpListener {
public:
    TcpListener() = default;
    TcpListener(TcpListener&& other) noexcept;
    TcpListener& operator=(TcpListener&& other) noexcept;
    TcpListener(const TcpListener&) = delete;
    TcpListener& operator=(const TcpListener&) = delete;
    ~TcpListener();

    // Port 0 binds an ephemeral port; port() reports the actual one.
    static TcpListener bind(const std::string& host, std::uint16_t port, int backlog = 64);

    bool valid() const { return fd_ >= 0; }
    std::uint16_t port() const { return port_; }

    // Blocks until a connection arrives; returns an invalid socket once the
    // listener has been shut down.
    TcpSocket accept();

    void shutdown();  // unblocks accept()
    void close();

private:
    int fd_ = -1;
    std::uint16_t port_ = 0;
};

// Sends and receives whole protocol frames over a connected socket. Not
// internally synchronised; single-owner like the session it belongs to.
class FrameChannel {
public:
    explicit FrameChannel(TcpSocket& sock, std::uint64_t max_payload = proto::kDefaultMaxPayload)
        : sock_(sock), max_payload_(max_payload) {}

    void send(const proto::Command& cmd, std::uint64_t request_id);
    void send(const proto::Response& resp, std::uint64_t request_id);

    // One whole frame, or nullopt on clean EOF at a frame boundary. The
    // timeout covers the entire frame. Throws proto::FrameError on malformed
    // input; the offending header (when it parsed) stays available through
    // last_header() for best-effort error replies.
    std::optional<proto::DecodedFrame> recv(
        std::optional<std::chrono::milliseconds> timeout = std::nullopt);

    const std::optional<proto::FrameHeader>& last_header() const { return last_header_; }

private:
    TcpSocket& sock_;
    std::uint64_t max_payload_;
    std::optional<proto::FrameHeader> last_header_;
};

}  // namespace aaas::net
