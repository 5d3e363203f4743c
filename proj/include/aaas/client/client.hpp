#pragma once

#include <chrono>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "aaas/net/net.hpp"
#include "aaas/proto/messages.hpp"
#include "aaas/riskcore/analysis.hpp"

// Client side of the remote-device API. A Session speaks the wire protocol
// 1:1 (every call maps to exactly one command, visible in trace()); the
// run_remote_* helpers orchestrate full multi-device analyses on top.

namespace aaas::client {

struct DeviceEndpoint {
    std::string host;
    std::uint16_t port = 0;
    std::size_t ordinal = 0;  // position in the configured device list

    std::string label() const;  // "host:port (device N)"
};

class MalformedServerList : public Error {
public:
    explicit MalformedServerList(const std::string& what) : Error(what) {}
};

class HandshakeRejected : public Error {
public:
    explicit HandshakeRejected(proto::Status status)
        : Error(std::string("handshake rejected: ") + proto::status_name(status)),
          status(status) {}
    proto::Status status;
};

class ClosedSession : public Error {
public:
    explicit ClosedSession(const std::string& what) : Error(what) {}
};

// A request was answered with a non-ok status.
class RemoteStatusError : public Error {
public:
    RemoteStatusError(proto::MsgType request, proto::Status status)
        : Error(std::string(proto::status_name(status)) + " from remote device"),
          request(request),
          status(status) {}
    proto::MsgType request;
    proto::Status status;
};

// The server answered with something other than the expected response
// (wrong id, wrong type, or a short read). Poisons the session.
class UnexpectedReply : public Error {
public:
    explicit UnexpectedReply(const std::string& what) : Error(what) {}
};

class DeviceFailure : public Error {
public:
    DeviceFailure(const std::string& endpoint, const std::string& why)
        : Error("device " + endpoint + " failed: " + why), endpoint(endpoint) {}
    std::string endpoint;
};

// Parses "host:port[,host:port]..." into endpoints, ordinals in list order.
// Null/empty input gives an empty list; bad syntax is MalformedServerList.
std::vector<DeviceEndpoint> discover_devices(const char* server_list);
std::vector<DeviceEndpoint> discover_devices();  // reads AAAS_SERVERS

struct ClientOptions {
    std::chrono::milliseconds connect_timeout{5000};
    std::chrono::milliseconds request_timeout{300000};
    std::uint64_t max_payload = proto::kDefaultMaxPayload;  // transfer chunking bound
};

// Default options with the AAAS_TIMEOUT_SECS override applied (positive
// integer seconds; anything else is ignored).
ClientOptions default_client_options();

struct DeviceBuffer {
    std::uint64_t handle = 0;
    std::uint64_t size = 0;
};

// One connection to one device. Single-owner: use from one thread at a time.
// Strict request/response with strictly increasing request ids; a timeout or
// transport failure poisons the session and later requests fail fast.
class Session {
public:
    static Session open(const DeviceEndpoint& endpoint, const std::string& kernel_name,
                        ClientOptions opts = default_client_options());

    Session(Session&&) noexcept = default;
    Session& operator=(Session&&) noexcept = default;
    Session(const Session&) = delete;
    Session& operator=(const Session&) = delete;
    ~Session() = default;  // silent TCP teardown; the server releases state

    const proto::HelloAck& device_info() const { return info_; }

    DeviceBuffer alloc(std::uint64_t size);
    // Transfers larger than max_payload are split into sequential commands.
    void write(const DeviceBuffer& buf, std::uint64_t offset, std::span<const std::uint8_t> data);
    std::vector<std::uint8_t> read(const DeviceBuffer& buf, std::uint64_t offset,
                                   std::uint64_t length);
    void free(DeviceBuffer& buf);  // invalidates the handle on success
    void launch(const std::string& kernel_name, std::uint32_t lanes, std::uint32_t chunk_size,
                std::vector<proto::LaunchArg> args);

    // Quit + ack, then drop the connection. Closing twice is ClosedSession;
    // closing a poisoned session tears down silently.
    void close();

    bool usable() const { return !closed_ && !poisoned_; }
    const std::vector<proto::MsgType>& trace() const { return trace_; }

private:
    Session(net::TcpSocket sock, ClientOptions opts)
        : sock_(std::move(sock)), opts_(std::move(opts)) {}

    void ensure_usable() const;
    proto::Response roundtrip(const proto::Command& cmd);
    proto::Response checked(const proto::Command& cmd);  // throws RemoteStatusError on non-ok

    net::TcpSocket sock_;
    ClientOptions opts_;
    proto::HelloAck info_;
    std::uint64_t next_id_ = 1;
    std::vector<proto::MsgType> trace_;
    bool closed_ = false;
    bool poisoned_ = false;
};

// Wall-clock seconds per phase. For multi-device runs each phase reports the
// slowest device (the wall-clock contributor); layers of a portfolio add up.
struct RemoteRunStats {
    double transfer_in_s = 0.0;
    double kernel_s = 0.0;
    double transfer_out_s = 0.0;
};

// Runs one layer on 1..D devices: trials are split into contiguous
// near-equal ranges, each device executes the full session sequence (hello,
// alloc x4, transfers, launch, read back, free x4, quit) on its range, and
// the segments merge by trial index. Bitwise equal to the local analysis.
// Any device failure aborts the whole run as DeviceFailure; partial results
// are discarded.
risk::YearLossTable run_remote_layer(const risk::Layer& layer, const risk::YearEventTable& yet,
                                     const risk::EltStore& elts,
                                     const std::vector<DeviceEndpoint>& devices, unsigned lanes,
                                     std::size_t chunk_size,
                                     const ClientOptions& opts = default_client_options(),
                                     RemoteRunStats* stats = nullptr);

// Full-portfolio counterpart of analyze(): validates the inputs, then runs
// every (program, layer) through run_remote_layer.
risk::AnalysisResult run_remote_analysis(const risk::Portfolio& portfolio,
                                         const risk::YearEventTable& yet,
                                         const risk::EltStore& elts,
                                         const std::vector<DeviceEndpoint>& devices, unsigned lanes,
                                         std::size_t chunk_size,
                                         const ClientOptions& opts = default_client_options(),
                                         RemoteRunStats* stats = nullptr);

}  // namespace aaas::client
