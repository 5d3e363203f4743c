#include "aaas/client/client.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cstdlib>
#include <thread>
#include <utility>

#include "aaas/common/byteio.hpp"
#include "aaas/riskcore/blob.hpp"

namespace aaas::client {

namespace {

using Clock = std::chrono::steady_clock;

double secs_between(Clock::time_point a, Clock::time_point b) {
    return std::chrono::duration<double>(b - a).count();
}

std::string trimmed(const std::string& s) {
    std::size_t b = 0;
    std::size_t e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

}  // namespace

std::string DeviceEndpoint::label() const {
    return host + ":" + std::to_string(port) + " (device " + std::to_string(ordinal) + ")";
}

std::vector<DeviceEndpoint> discover_devices(const char* server_list) {
    std::vector<DeviceEndpoint> out;
    if (server_list == nullptr) return out;
    std::string all = trimmed(server_list);
    if (all.empty()) return out;

    std::size_t start = 0;
    while (start <= all.size()) {
        std::size_t comma = all.find(',', start);
        std::string entry =
            trimmed(comma == std::string::npos ? all.substr(start) : all.substr(start, comma - start));

        std::size_t colon = entry.rfind(':');
        if (colon == std::string::npos || colon == 0 || colon + 1 == entry.size())
            throw MalformedServerList("bad server address '" + entry + "' (want host:port)");
        std::string host = entry.substr(0, colon);
        std::string port_str = entry.substr(colon + 1);
        if (!std::all_of(port_str.begin(), port_str.end(),
                         [](unsigned char c) { return std::isdigit(c); }))
            throw MalformedServerList("bad port in server address '" + entry + "'");
        unsigned long port = std::strtoul(port_str.c_str(), nullptr, 10);
        if (port == 0 || port > 65535)
            throw MalformedServerList("port out of range in server address '" + entry + "'");

        out.push_back({std::move(host), static_cast<std::uint16_t>(port), out.size()});
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return out;
}

std::vector<DeviceEndpoint> discover_devices() {
    return discover_devices(std::getenv("AAAS_SERVERS"));
}

ClientOptions default_client_options() {
    ClientOptions opts;
    if (const char* v = std::getenv("AAAS_TIMEOUT_SECS")) {
        std::string s = trimmed(v);
        if (!s.empty() &&
            std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c); })) {
            unsigned long secs = std::strtoul(s.c_str(), nullptr, 10);
            if (secs > 0) opts.request_timeout = std::chrono::seconds(secs);
        }
    }
    return opts;
}

// ---- Session --------------------------------------------------------------

Session Session::open(const DeviceEndpoint& endpoint, const std::string& kernel_name,
                      ClientOptions opts) {
    net::TcpSocket sock = net::TcpSocket::connect(endpoint.host, endpoint.port,
                                                  opts.connect_timeout);
    Session s(std::move(sock), std::move(opts));
    proto::Response r = s.roundtrip(proto::Hello{kernel_name, 1});
    if (r.status != proto::Status::ok) throw HandshakeRejected(r.status);
    s.info_ = std::get<proto::HelloAck>(r.body);
    return s;
}

void Session::ensure_usable() const {
    if (closed_) throw ClosedSession("session is closed");
    if (poisoned_) throw ClosedSession("session poisoned by an earlier failure");
}

proto::Response Session::roundtrip(const proto::Command& cmd) {
    ensure_usable();
    const std::uint64_t id = next_id_++;
    net::FrameChannel chan(sock_, opts_.max_payload);
    std::optional<proto::DecodedFrame> frame;
    try {
        chan.send(cmd, id);
        trace_.push_back(proto::command_type(cmd));
        frame = chan.recv(opts_.request_timeout);
    } catch (...) {
        poisoned_ = true;
        throw;
    }
    if (!frame) {
        poisoned_ = true;
        throw net::ConnectionClosed("server closed the connection before replying");
    }
    const auto* resp = std::get_if<proto::Response>(&frame->message);
    if (resp == nullptr || frame->request_id != id ||
        resp->request_type != proto::command_type(cmd)) {
        poisoned_ = true;
        throw UnexpectedReply("response does not match the request in flight");
    }
    return *resp;
}

proto::Response Session::checked(const proto::Command& cmd) {
    proto::Response r = roundtrip(cmd);
    if (r.status != proto::Status::ok) throw RemoteStatusError(proto::command_type(cmd), r.status);
    return r;
}

DeviceBuffer Session::alloc(std::uint64_t size) {
    proto::Response r = checked(proto::AllocBuffer{size});
    return DeviceBuffer{std::get<proto::AllocAck>(r.body).handle, size};
}

void Session::write(const DeviceBuffer& buf, std::uint64_t offset,
                    std::span<const std::uint8_t> data) {
    // Payload = handle + offset + bytes; keep each command under max_payload.
    const std::uint64_t max_data = opts_.max_payload > 16 ? opts_.max_payload - 16 : 1;
    std::uint64_t pos = 0;
    do {
        const std::uint64_t n = std::min<std::uint64_t>(data.size() - pos, max_data);
        proto::TransferToDevice cmd;
        cmd.handle = buf.handle;
        cmd.offset = offset + pos;
        cmd.data.assign(data.begin() + pos, data.begin() + pos + n);
        checked(std::move(cmd));
        pos += n;
    } while (pos < data.size());
}

std::vector<std::uint8_t> Session::read(const DeviceBuffer& buf, std::uint64_t offset,
                                        std::uint64_t length) {
    // Response payload = status + bytes.
    const std::uint64_t max_len = opts_.max_payload > 4 ? opts_.max_payload - 4 : 1;
    std::vector<std::uint8_t> out;
    out.reserve(length);
    std::uint64_t pos = 0;
    do {
        const std::uint64_t n = std::min(length - pos, max_len);
        proto::Response r = checked(proto::TransferToHost{buf.handle, offset + pos, n});
        const auto& piece = std::get<proto::HostData>(r.body).data;
        if (piece.size() != n) {
            poisoned_ = true;
            throw UnexpectedReply("short read from device");
        }
        out.insert(out.end(), piece.begin(), piece.end());
        pos += n;
    } while (pos < length);
    return out;
}

void Session::free(DeviceBuffer& buf) {
    checked(proto::FreeBuffer{buf.handle});
    buf.handle = 0;
    buf.size = 0;
}

void Session::launch(const std::string& kernel_name, std::uint32_t lanes,
                     std::uint32_t chunk_size, std::vector<proto::LaunchArg> args) {
    checked(proto::LaunchKernel{kernel_name, lanes, chunk_size, std::move(args)});
}

void Session::close() {
    if (closed_) throw ClosedSession("session already closed");
    if (poisoned_) {  // nothing sensible to say on the wire any more
        closed_ = true;
        sock_.close();
        return;
    }
    proto::Response r = roundtrip(proto::Quit{});
    closed_ = true;
    sock_.close();
    if (r.status != proto::Status::ok) throw RemoteStatusError(proto::MsgType::quit, r.status);
}

// ---- multi-device orchestration -------------------------------------------

namespace {

constexpr const char* kRiskKernel = "aggregate_risk_v1";

struct DeviceOutcome {
    std::vector<double> segment;
    RemoteRunStats phases;
    std::string error;
    bool failed = false;
};

// Full session sequence for one device's trial range [begin, end).
void run_device(const DeviceEndpoint& endpoint, const risk::TableBlobs& blobs,
                std::uint64_t begin, std::uint64_t end, unsigned lanes, std::size_t chunk_size,
                const ClientOptions& opts, DeviceOutcome& out) {
    const std::uint64_t count = end - begin;
    Session s = Session::open(endpoint, kRiskKernel, opts);

    auto t0 = Clock::now();
    DeviceBuffer byet = s.alloc(blobs.yet.size());
    DeviceBuffer belt = s.alloc(blobs.elt.size());
    DeviceBuffer blayer = s.alloc(blobs.layer.size());
    DeviceBuffer bout = s.alloc(8 * count);
    s.write(byet, 0, blobs.yet);
    s.write(belt, 0, blobs.elt);
    s.write(blayer, 0, blobs.layer);
    auto t1 = Clock::now();

    s.launch(kRiskKernel, lanes, static_cast<std::uint32_t>(chunk_size),
             {proto::LaunchArg::buffer(byet.handle), proto::LaunchArg::buffer(belt.handle),
              proto::LaunchArg::buffer(blayer.handle), proto::LaunchArg::buffer(bout.handle),
              proto::LaunchArg::scalar(begin), proto::LaunchArg::scalar(end)});
    auto t2 = Clock::now();

    std::vector<std::uint8_t> bytes = s.read(bout, 0, 8 * count);
    auto t3 = Clock::now();

    s.free(byet);
    s.free(belt);
    s.free(blayer);
    s.free(bout);
    s.close();

    out.segment.resize(count);
    for (std::uint64_t i = 0; i < count; ++i)
        out.segment[i] = load_f64le(bytes.data() + 8 * i);
    out.phases.transfer_in_s = secs_between(t0, t1);
    out.phases.kernel_s = secs_between(t1, t2);
    out.phases.transfer_out_s = secs_between(t2, t3);
}

}  // namespace

risk::YearLossTable run_remote_layer(const risk::Layer& layer, const risk::YearEventTable& yet,
                                     const risk::EltStore& elts,
                                     const std::vector<DeviceEndpoint>& devices, unsigned lanes,
                                     std::size_t chunk_size, const ClientOptions& opts,
                                     RemoteRunStats* stats) {
    if (devices.empty()) throw ValidationError("at least one device endpoint is required");
    if (lanes < 1) throw ValidationError("lanes must be >= 1");
    if (chunk_size < 1) throw ValidationError("chunk_size must be >= 1");

    const risk::TableBlobs blobs = risk::encode_tables(yet, elts, layer);
    const std::size_t n = yet.trials.size();
    const auto ranges = risk::split_near_equal(n, devices.size());

    std::vector<DeviceOutcome> outcomes(devices.size());
    std::vector<std::thread> threads;
    threads.reserve(devices.size());
    for (std::size_t d = 0; d < devices.size(); ++d) {
        threads.emplace_back([&, d] {
            try {
                run_device(devices[d], blobs, ranges[d].first, ranges[d].second, lanes, chunk_size,
                           opts, outcomes[d]);
            } catch (const std::exception& e) {
                outcomes[d].failed = true;
                outcomes[d].error = e.what();
            }
        });
    }
    for (auto& t : threads) t.join();

    for (std::size_t d = 0; d < devices.size(); ++d)
        if (outcomes[d].failed) throw DeviceFailure(devices[d].label(), outcomes[d].error);

    risk::YearLossTable merged(n, 0.0);
    for (std::size_t d = 0; d < devices.size(); ++d)
        std::copy(outcomes[d].segment.begin(), outcomes[d].segment.end(),
                  merged.begin() + ranges[d].first);

    if (stats != nullptr) {
        for (const DeviceOutcome& o : outcomes) {
            stats->transfer_in_s = std::max(stats->transfer_in_s, o.phases.transfer_in_s);
            stats->kernel_s = std::max(stats->kernel_s, o.phases.kernel_s);
            stats->transfer_out_s = std::max(stats->transfer_out_s, o.phases.transfer_out_s);
        }
    }
    return merged;
}

risk::AnalysisResult run_remote_analysis(const risk::Portfolio& portfolio,
                                         const risk::YearEventTable& yet,
                                         const risk::EltStore& elts,
                                         const std::vector<DeviceEndpoint>& devices, unsigned lanes,
                                         std::size_t chunk_size, const ClientOptions& opts,
                                         RemoteRunStats* stats) {
    risk::validate(yet);
    for (const risk::EventLossTable& elt : elts) risk::validate(elt);
    risk::validate_catalog_agreement(yet, elts);
    risk::validate(portfolio, elts.size());

    risk::AnalysisResult result;
    for (std::size_t p = 0; p < portfolio.programs.size(); ++p) {
        const risk::Program& program = portfolio.programs[p];
        for (std::size_t l = 0; l < program.layers.size(); ++l) {
            RemoteRunStats layer_stats;
            risk::LayerResult lr;
            lr.program_index = p;
            lr.layer_index = l;
            lr.ylt = run_remote_layer(program.layers[l], yet, elts, devices, lanes, chunk_size,
                                      opts, stats != nullptr ? &layer_stats : nullptr);
            result.layers.push_back(std::move(lr));
            if (stats != nullptr) {
                stats->transfer_in_s += layer_stats.transfer_in_s;
                stats->kernel_s += layer_stats.kernel_s;
                stats->transfer_out_s += layer_stats.transfer_out_s;
            }
        }
    }
    return result;
}

}  // namespace aaas::client
