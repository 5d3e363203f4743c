#include "aaas/server/server.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <span>
#include <utility>

#include "aaas/riskcore/analysis.hpp"
#include "aaas/riskcore/kernel.hpp"

namespace aaas::server {

namespace {

template <class... Ts>
struct Overload : Ts... {
    using Ts::operator()...;
};

unsigned resolve_lanes(unsigned requested) {
    if (requested != 0) return requested;
    unsigned hw = std::thread::hardware_concurrency();
    return hw != 0 ? hw : 1;
}

}  // namespace

// ---- MemoryPool -----------------------------------------------------------

bool MemoryPool::try_reserve(std::uint64_t bytes) {
    std::lock_guard<std::mutex> lock(mutex_);
    if (bytes > cap_ - in_use_) return false;
    in_use_ += bytes;
    return true;
}

void MemoryPool::release(std::uint64_t bytes) {
    std::lock_guard<std::mutex> lock(mutex_);
    in_use_ -= std::min(bytes, in_use_);
}

std::uint64_t MemoryPool::in_use() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return in_use_;
}

// ---- Server lifecycle -----------------------------------------------------

Server::Server(ServerConfig cfg)
    : cfg_(std::move(cfg)),
      max_lanes_(resolve_lanes(cfg_.max_lanes)),
      pool_(cfg_.memory_cap),
      executor_(max_lanes_) {
    if (cfg_.memory_cap == 0) throw ValidationError("server memory_cap must be > 0");
    kernels_["aggregate_risk_v1"] = [this](SessionContext& ctx, const proto::LaunchKernel& cmd) {
        aggregate_risk_entry(ctx, cmd);
    };
}

Server::~Server() { stop(); }

void Server::register_kernel(const std::string& name, KernelFn fn) {
    if (started_) throw Error("kernel registry is immutable once the server has started");
    if (!kernels_.emplace(name, std::move(fn)).second)
        throw Error("kernel '" + name + "' is already registered");
}

bool Server::has_kernel(const std::string& name) const { return kernels_.count(name) != 0; }

void Server::start() {
    if (started_.exchange(true)) throw Error("server already started");
    try {
        listener_.emplace(net::TcpListener::bind(cfg_.host, cfg_.port));
    } catch (...) {
        started_ = false;
        throw;
    }
    bound_port_ = listener_->port();
    accept_thread_ = std::thread([this] { accept_loop(); });
}

void Server::stop() {
    if (!started_.exchange(false)) return;
    if (listener_) listener_->shutdown();
    if (accept_thread_.joinable()) accept_thread_.join();

    {
        std::unique_lock<std::mutex> lock(workers_mutex_);
        auto all_done = [this] {
            for (const auto& w : workers_)
                if (!w->done) return false;
            return true;
        };
        // Grace period: sessions usually end when their clients quit. After
        // the deadline, unblock the stragglers at the socket.
        if (!worker_exited_.wait_for(lock, std::chrono::milliseconds(cfg_.drain_timeout_ms),
                                     all_done)) {
            for (auto& w : workers_)
                if (!w->done) w->sock.shutdown_both();
        }
        worker_exited_.wait(lock, all_done);
        reap_finished();
    }
    if (listener_) {
        listener_->close();
        listener_.reset();
    }
}

std::size_t Server::active_sessions() const {
    std::lock_guard<std::mutex> lock(workers_mutex_);
    return active_;
}

SessionContext Server::make_context() {
    SessionContext ctx;
    ctx.id = next_session_id_.fetch_add(1);
    return ctx;
}

// ---- connection handling --------------------------------------------------

void Server::accept_loop() {
    for (;;) {
        net::TcpSocket sock = listener_->accept();
        if (!sock.valid()) return;  // listener shut down

        std::lock_guard<std::mutex> lock(workers_mutex_);
        reap_finished();
        auto w = std::make_unique<Worker>();
        w->sock = std::move(sock);
        Worker* raw = w.get();
        if (active_ < cfg_.max_sessions) {
            w->counted = true;
            ++active_;
            w->thread = std::thread([this, raw] { session_loop(raw); });
        } else {
            w->thread = std::thread([this, raw] { reject_loop(raw); });
        }
        workers_.push_back(std::move(w));
    }
}

void Server::reap_finished() {
    for (auto it = workers_.begin(); it != workers_.end();) {
        if ((*it)->done) {
            (*it)->thread.join();
            it = workers_.erase(it);
        } else {
            ++it;
        }
    }
}

void Server::session_loop(Worker* w) {
    SessionContext ctx = make_context();
    net::FrameChannel chan(w->sock, cfg_.max_payload);

    for (;;) {
        std::optional<proto::DecodedFrame> frame;
        try {
            frame = chan.recv();
        } catch (const proto::FrameError&) {
            // Unparseable input: answer with PROTOCOL_ERROR if we at least
            // got a header, then drop the connection.
            proto::MsgType t = proto::MsgType::hello;
            std::uint64_t id = 0;
            if (chan.last_header()) {
                t = chan.last_header()->raw_type;
                id = chan.last_header()->request_id;
            }
            try {
                chan.send(proto::Response{t, proto::Status::protocol_error, {}}, id);
            } catch (...) {
            }
            break;
        } catch (const net::NetError&) {
            break;
        }
        if (!frame) break;  // clean disconnect

        const auto* cmd = std::get_if<proto::Command>(&frame->message);
        proto::Response resp =
            cmd ? handle_command(ctx, *cmd)
                : proto::Response{chan.last_header()->raw_type, proto::Status::protocol_error, {}};
        try {
            chan.send(resp, frame->request_id);
        } catch (const net::NetError&) {
            break;
        }
        if (!cmd || ctx.finished) break;
    }

    // Disconnect without quit still releases everything (isolation teardown).
    release_session(ctx);
    {
        std::lock_guard<std::mutex> lock(workers_mutex_);
        --active_;
        w->done = true;
    }
    worker_exited_.notify_all();
}

void Server::reject_loop(Worker* w) {
    // Session cap reached: answer the first request with PROTOCOL_ERROR so
    // the client fails its handshake cleanly instead of hanging.
    net::FrameChannel chan(w->sock, cfg_.max_payload);
    try {
        auto frame = chan.recv(std::chrono::milliseconds(5000));
        if (frame) {
            proto::MsgType t =
                chan.last_header() ? chan.last_header()->raw_type : proto::MsgType::hello;
            chan.send(proto::Response{t, proto::Status::protocol_error, {}}, frame->request_id);
        }
    } catch (...) {
    }
    {
        std::lock_guard<std::mutex> lock(workers_mutex_);
        w->done = true;
    }
    worker_exited_.notify_all();
}

// ---- command dispatch -----------------------------------------------------

proto::Response Server::handle_command(SessionContext& ctx, const proto::Command& cmd) {
    using namespace proto;
    const MsgType type = command_type(cmd);

    SeqEvent ev = std::visit(
        Overload{
            [](const Hello&) { return SeqEvent::hello(); },
            [](const AllocBuffer&) { return SeqEvent::alloc(0); },
            [](const TransferToDevice& t) { return SeqEvent::transfer_to_device(t.handle); },
            [](const TransferToHost& t) { return SeqEvent::transfer_to_host(t.handle); },
            [](const LaunchKernel& l) {
                std::vector<std::uint64_t> handles;
                for (const LaunchArg& a : l.args)
                    if (a.tag == ArgTag::buffer_handle) handles.push_back(a.value);
                return SeqEvent::launch(std::move(handles));
            },
            [](const FreeBuffer& f) { return SeqEvent::free_buffer(f.handle); },
            [](const Quit&) { return SeqEvent::quit(); },
        },
        cmd);

    if (auto violation = ctx.seq.check(ev)) {
        Status s = violation->kind == ProtocolViolation::Kind::unknown_handle
                       ? Status::bad_handle
                       : Status::protocol_error;
        return Response{type, s, {}};
    }

    return std::visit(
        Overload{
            [&](const Hello& h) -> Response {
                if (!has_kernel(h.kernel_name)) return {type, Status::unknown_kernel, {}};
                ctx.kernel_name = h.kernel_name;
                return {type, Status::ok, HelloAck{cfg_.device_id, pool_.cap(), max_lanes_}};
            },
            [&](const AllocBuffer& a) -> Response {
                if (!pool_.try_reserve(a.size)) return {type, Status::out_of_device_memory, {}};
                std::uint64_t handle = ctx.next_handle++;
                ctx.buffers.emplace(handle, std::vector<std::uint8_t>(a.size, 0));
                ctx.bytes_in_use += a.size;
                ctx.seq.on_alloc_granted(handle);
                return {type, Status::ok, AllocAck{handle}};
            },
            [&](const TransferToDevice& t) -> Response {
                auto& buf = ctx.buffers.at(t.handle);
                if (t.offset > buf.size() || t.data.size() > buf.size() - t.offset)
                    return {type, Status::range_error, {}};
                std::copy(t.data.begin(), t.data.end(), buf.begin() + t.offset);
                return {type, Status::ok, {}};
            },
            [&](const TransferToHost& t) -> Response {
                auto& buf = ctx.buffers.at(t.handle);
                if (t.offset > buf.size() || t.length > buf.size() - t.offset)
                    return {type, Status::range_error, {}};
                HostData body;
                body.data.assign(buf.begin() + t.offset, buf.begin() + t.offset + t.length);
                return {type, Status::ok, std::move(body)};
            },
            [&](const LaunchKernel& l) -> Response { return run_kernel(ctx, l); },
            [&](const FreeBuffer& f) -> Response {
                auto it = ctx.buffers.find(f.handle);
                std::uint64_t size = it->second.size();
                ctx.buffers.erase(it);
                ctx.bytes_in_use -= size;
                pool_.release(size);
                return {type, Status::ok, {}};
            },
            [&](const Quit&) -> Response {
                ctx.finished = true;
                release_session(ctx);
                return {type, Status::ok, {}};
            },
        },
        cmd);
}

void Server::release_session(SessionContext& ctx) {
    std::uint64_t total = 0;
    for (const auto& [handle, buf] : ctx.buffers) total += buf.size();
    ctx.buffers.clear();
    ctx.bytes_in_use = 0;
    if (total != 0) pool_.release(total);
}

// ---- kernel execution -----------------------------------------------------

proto::Response Server::run_kernel(SessionContext& ctx, const proto::LaunchKernel& cmd) {
    using proto::Status;
    const auto type = proto::MsgType::launch_kernel;
    auto it = kernels_.find(cmd.kernel_name);
    if (it == kernels_.end()) return {type, Status::unknown_kernel, {}};
    try {
        it->second(ctx, cmd);
        return {type, Status::ok, {}};
    } catch (const KernelArgError&) {
        return {type, Status::protocol_error, {}};
    } catch (const RangeOutOfBounds&) {
        return {type, Status::range_error, {}};
    } catch (const std::exception&) {
        return {type, Status::kernel_failure, {}};
    }
}

void Server::aggregate_risk_entry(SessionContext& ctx, const proto::LaunchKernel& cmd) {
    using proto::ArgTag;
    if (cmd.lanes == 0) throw KernelArgError("launch lanes must be >= 1");
    if (cmd.chunk_size == 0) throw KernelArgError("launch chunk_size must be >= 1");
    if (cmd.args.size() != 6)
        throw KernelArgError("aggregate_risk_v1 takes 6 args: yet, elts, layer, out, begin, end");
    for (int i = 0; i < 4; ++i)
        if (cmd.args[i].tag != ArgTag::buffer_handle)
            throw KernelArgError("aggregate_risk_v1 args 0..3 must be buffer handles");
    for (int i = 4; i < 6; ++i)
        if (cmd.args[i].tag != ArgTag::scalar_u64)
            throw KernelArgError("aggregate_risk_v1 args 4..5 must be u64 scalars");

    // Handle liveness is already guaranteed by the sequence check.
    const auto& yet = ctx.buffers.at(cmd.args[0].value);
    const auto& elts = ctx.buffers.at(cmd.args[1].value);
    const auto& layer = ctx.buffers.at(cmd.args[2].value);
    auto& out = ctx.buffers.at(cmd.args[3].value);
    const std::uint64_t begin = cmd.args[4].value;
    const std::uint64_t end = cmd.args[5].value;

    risk::KernelTables tables(yet, elts, layer);
    if (begin > end || end > tables.n_trials())
        throw RangeOutOfBounds("trial range [" + std::to_string(begin) + ", " +
                               std::to_string(end) + ") outside " +
                               std::to_string(tables.n_trials()) + " trials");
    const std::uint64_t count = end - begin;
    if (out.size() < 8 * count)
        throw RangeOutOfBounds("output buffer holds " + std::to_string(out.size()) +
                               " bytes, need " + std::to_string(8 * count));

    // Same split and per-block arithmetic as the local path, so the bytes
    // come out identical; only the scheduling goes through the shared
    // executor.
    std::vector<double> ylt(count, 0.0);
    const unsigned lanes = std::min(cmd.lanes, max_lanes_);
    std::vector<std::function<void()>> tasks;
    for (auto [b, e] : risk::split_chunk_aligned(count, lanes, cmd.chunk_size)) {
        if (b == e) continue;
        tasks.push_back([&, b, e] {
            tables.run_range(begin + b, begin + e, cmd.chunk_size,
                             std::span<double>(ylt).subspan(b, e - b));
        });
    }
    executor_.run_job(std::move(tasks));

    for (std::uint64_t i = 0; i < count; ++i) {
        std::uint64_t bits = std::bit_cast<std::uint64_t>(ylt[i]);
        for (int b = 0; b < 8; ++b)
            out[8 * i + b] = static_cast<std::uint8_t>((bits >> (8 * b)) & 0xFF);
    }
}

}  // namespace aaas::server
