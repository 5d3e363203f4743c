#include "aaas/net/net.hpp"

#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <utility>
#include <vector>

namespace aaas::net {

namespace {

using Clock = std::chrono::steady_clock;

std::string errno_text(int err) { return std::strerror(err); }

void set_nodelay(int fd) {
    int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
}

// Remaining milliseconds before the deadline, clamped at zero.
int remaining_ms(Clock::time_point deadline) {
    auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now());
    return left.count() > 0 ? static_cast<int>(left.count()) : 0;
}

struct AddrInfoList {
    addrinfo* head = nullptr;

    AddrInfoList() = default;
    AddrInfoList(AddrInfoList&& other) noexcept : head(std::exchange(other.head, nullptr)) {}
    AddrInfoList& operator=(AddrInfoList&& other) noexcept {
        if (this != &other) {
            if (head) ::freeaddrinfo(head);
            head = std::exchange(other.head, nullptr);
        }
        return *this;
    }
    AddrInfoList(const AddrInfoList&) = delete;
    AddrInfoList& operator=(const AddrInfoList&) = delete;
    ~AddrInfoList() {
        if (head) ::freeaddrinfo(head);
    }
};

AddrInfoList resolve(const std::string& host, std::uint16_t port, bool passive) {
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    if (passive) hints.ai_flags = AI_PASSIVE;

    AddrInfoList list;
    int rc = ::getaddrinfo(host.empty() ? nullptr : host.c_str(), std::to_string(port).c_str(),
                           &hints, &list.head);
    if (rc != 0)
        throw ConnectFailure("cannot resolve " + host + ": " + ::gai_strerror(rc));
    return list;
}

}  // namespace

TcpSocket::TcpSocket(TcpSocket&& other) noexcept : fd_(std::exchange(other.fd_, -1)) {}

TcpSocket& TcpSocket::operator=(TcpSocket&& other) noexcept {
    if (this != &other) {
        close();
        fd_ = std::exchange(other.fd_, -1);
    }
    return *this;
}

TcpSocket::~TcpSocket() { close(); }

void TcpSocket::close() {
    if (fd_ >= 0) {
        ::close(fd_);
        fd_ = -1;
    }
}

void TcpSocket::shutdown_both() {
    if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
}

TcpSocket TcpSocket::connect(const std::string& host, std::uint16_t port,
                             std::chrono::milliseconds timeout) {
    auto deadline = Clock::now() + timeout;
    auto list = resolve(host, port, false);

    std::string last_error = "no usable address";
    for (addrinfo* ai = list.head; ai; ai = ai->ai_next) {
        int fd = ::socket(ai->ai_family, SOCK_STREAM | SOCK_NONBLOCK, 0);
        if (fd < 0) {
            last_error = errno_text(errno);
            continue;
        }
        int rc = ::connect(fd, ai->ai_addr, ai->ai_addrlen);
        if (rc != 0 && errno == EINPROGRESS) {
            pollfd pfd{fd, POLLOUT, 0};
            int pr = ::poll(&pfd, 1, remaining_ms(deadline));
            if (pr == 0) {
                ::close(fd);
                throw Timeout("connect to " + host + ":" + std::to_string(port) + " timed out");
            }
            int err = 0;
            socklen_t len = sizeof err;
            ::getsockopt(fd, SOL_SOCKET, SO_ERROR, &err, &len);
            rc = err == 0 ? 0 : -1;
            errno = err;
        }
        if (rc != 0) {
            last_error = errno_text(errno);
            ::close(fd);
            continue;
        }
        // Back to blocking mode for plain send/recv.
        int flags = ::fcntl(fd, F_GETFL, 0);
        ::fcntl(fd, F_SETFL, flags & ~O_NONBLOCK);
        set_nodelay(fd);
        return TcpSocket(fd);
    }
    throw ConnectFailure("connect to " + host + ":" + std::to_string(port) + " failed: " +
                         last_error);
}

void TcpSocket::send_all(std::span<const std::uint8_t> data) {
    std::size_t sent = 0;
    while (sent < data.size()) {
        ssize_t n = ::send(fd_, data.data() + sent, data.size() - sent, MSG_NOSIGNAL);
        if (n < 0) {
            if (errno == EINTR) continue;
            if (errno == EPIPE || errno == ECONNRESET)
                throw ConnectionClosed("peer closed the connection during send");
            throw NetError(std::string("send failed: ") + errno_text(errno));
        }
        sent += static_cast<std::size_t>(n);
    }
}

bool TcpSocket::recv_exact(std::span<std::uint8_t> buf,
                           std::optional<std::chrono::milliseconds> timeout) {
    std::optional<Clock::time_point> deadline;
    if (timeout) deadline = Clock::now() + *timeout;

    std::size_t got = 0;
    while (got < buf.size()) {
        if (deadline) {
            pollfd pfd{fd_, POLLIN, 0};
            int pr = ::poll(&pfd, 1, remaining_ms(*deadline));
            if (pr == 0) throw Timeout("receive timed out");
            if (pr < 0) {
                if (errno == EINTR) continue;
                throw NetError(std::string("poll failed: ") + errno_text(errno));
            }
        }
        ssize_t n = ::recv(fd_, buf.data() + got, buf.size() - got, 0);
        if (n == 0) {
            if (got == 0) return false;
            throw ConnectionClosed("peer closed the connection mid-message");
        }
        if (n < 0) {
            if (errno == EINTR) continue;
            if (errno == ECONNRESET) throw ConnectionClosed("connection reset by peer");
            throw NetError(std::string("recv failed: ") + errno_text(errno));
        }
        got += static_cast<std::size_t>(n);
    }
    return true;
}

TcpListener::TcpListener(TcpListener&& other) noexcept
    : fd_(std::exchange(other.fd_, -1)), port_(std::exchange(other.port_, 0)) {}

TcpListener& TcpListener::operator=(TcpListener&& other) noexcept {
    if (this != &other) {
        close();
        fd_ = std::exchange(other.fd_, -1);
        port_ = std::exchange(other.port_, 0);
    }
    return *this;
}

TcpListener::~TcpListener() { close(); }

void TcpListener::close() {
    if (fd_ >= 0) {
        ::close(fd_);
        fd_ = -1;
    }
}

void TcpListener::shutdown() {
    if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
}

TcpListener TcpListener::bind(const std::string& host, std::uint16_t port, int backlog) {
    AddrInfoList list;
    try {
        list = resolve(host, port, true);
    } catch (const ConnectFailure& e) {
        throw BindFailure(e.what());
    }

    std::string last_error = "no usable address";
    for (addrinfo* ai = list.head; ai; ai = ai->ai_next) {
        int fd = ::socket(ai->ai_family, SOCK_STREAM, 0);
        if (fd < 0) {
            last_error = errno_text(errno);
            continue;
        }
        int one = 1;
        ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
        if (::bind(fd, ai->ai_addr, ai->ai_addrlen) != 0 || ::listen(fd, backlog) != 0) {
            last_error = errno_text(errno);
            ::close(fd);
            continue;
        }
        sockaddr_storage local{};
        socklen_t len = sizeof local;
        ::getsockname(fd, reinterpret_cast<sockaddr*>(&local), &len);
        std::uint16_t actual = 0;
        if (local.ss_family == AF_INET)
            actual = ntohs(reinterpret_cast<sockaddr_in*>(&local)->sin_port);
        else if (local.ss_family == AF_INET6)
            actual = ntohs(reinterpret_cast<sockaddr_in6*>(&local)->sin6_port);

        TcpListener out;
        out.fd_ = fd;
        out.port_ = actual;
        return out;
    }
    throw BindFailure("bind to " + host + ":" + std::to_string(port) + " failed: " + last_error);
}

TcpSocket TcpListener::accept() {
    for (;;) {
        int fd = ::accept(fd_, nullptr, nullptr);
        if (fd >= 0) {
            set_nodelay(fd);
            return TcpSocket(fd);
        }
        if (errno == EINTR || errno == ECONNABORTED) continue;
        return TcpSocket();  // listener shut down or closed
    }
}

void FrameChannel::send(const proto::Command& cmd, std::uint64_t request_id) {
    sock_.send_all(proto::encode_frame(cmd, request_id));
}

void FrameChannel::send(const proto::Response& resp, std::uint64_t request_id) {
    sock_.send_all(proto::encode_frame(resp, request_id));
}

std::optional<proto::DecodedFrame> FrameChannel::recv(
    std::optional<std::chrono::milliseconds> timeout) {
    last_header_.reset();

    std::uint8_t header[proto::kHeaderSize];
    if (!sock_.recv_exact(header, timeout)) return std::nullopt;

    proto::FrameHeader h = proto::decode_header(header, max_payload_);
    last_header_ = h;

    std::vector<std::uint8_t> payload(h.payload_len);
    if (h.payload_len > 0 && !sock_.recv_exact(payload, timeout))
        throw ConnectionClosed("peer closed the connection mid-frame");

    proto::DecodedFrame out;
    out.request_id = h.request_id;
    out.consumed = proto::kHeaderSize + static_cast<std::size_t>(h.payload_len);
    if (h.is_response)
        out.message = proto::decode_response_payload(h.raw_type, payload);
    else
        out.message = proto::decode_command_payload(h.raw_type, payload);
    return out;
}

}  // namespace aaas::net
