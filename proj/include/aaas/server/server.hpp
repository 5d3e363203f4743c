#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <list>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "aaas/net/net.hpp"
#include "aaas/proto/messages.hpp"
#include "aaas/proto/sequence.hpp"
#include "aaas/server/executor.hpp"

// Compute daemon. Each accepted connection gets its own isolated session
// worker and session context (independent handle space, released on
// disconnect); kernels from all sessions share one fairly scheduled lane
// executor and one device memory pool.

namespace aaas::server {

struct ServerConfig {
    std::string host = "127.0.0.1";
    std::uint16_t port = 0;  // 0 = ephemeral, read back via Server::port()
    std::uint64_t memory_cap = 1ull << 30;
    unsigned max_lanes = 0;  // 0 = hardware parallelism
    std::size_t max_sessions = 16;
    std::uint32_t device_id = 0;
    std::uint64_t max_payload = proto::kDefaultMaxPayload;
    unsigned drain_timeout_ms = 5000;  // grace period for stop()
};

// Global simulated device memory, shared by all sessions first come first
// served. Only accounting lives here; the bytes themselves sit in each
// session's buffer table.
class MemoryPool {
public:
    explicit MemoryPool(std::uint64_t cap) : cap_(cap) {}

    bool try_reserve(std::uint64_t bytes);
    void release(std::uint64_t bytes);

    std::uint64_t cap() const { return cap_; }
    std::uint64_t in_use() const;

private:
    std::uint64_t cap_;
    mutable std::mutex mutex_;
    std::uint64_t in_use_ = 0;
};

// Per-connection state. Single-owner: only the session worker (or the test
// driving handle_command directly) touches it.
struct SessionContext {
    std::uint64_t id = 0;
    std::string kernel_name;  // bound at hello
    std::unordered_map<std::uint64_t, std::vector<std::uint8_t>> buffers;
    std::uint64_t bytes_in_use = 0;
    std::uint64_t next_handle = 1;  // handles are monotonic, never reused
    proto::SequenceValidator seq;
    bool finished = false;  // set by quit
};

// Thrown by kernel entries for malformed launch arguments (wrong arity or
// tag, zero lanes/chunk). Surfaces to the client as PROTOCOL_ERROR.
class KernelArgError : public Error {
public:
    explicit KernelArgError(const std::string& what) : Error(what) {}
};

// A kernel entry runs synchronously inside the session worker. It may throw:
// KernelArgError -> PROTOCOL_ERROR, RangeOutOfBounds -> RANGE_ERROR,
// anything else -> KERNEL_FAILURE.
using KernelFn = std::function<void(SessionContext&, const proto::LaunchKernel&)>;

class Server {
public:
    explicit Server(ServerConfig cfg = {});
    ~Server();

    Server(const Server&) = delete;
    Server& operator=(const Server&) = delete;

    // Registry is immutable once the accept loop starts.
    void register_kernel(const std::string& name, KernelFn fn);
    bool has_kernel(const std::string& name) const;

    void start();
    void stop();
    std::uint16_t port() const { return bound_port_; }

    // In-process command path; the socket sessions go through this too.
    SessionContext make_context();
    proto::Response handle_command(SessionContext& ctx, const proto::Command& cmd);

    // Returns a context's buffers to the pool. Idempotent; called on quit and
    // on disconnect, so a dropped connection never leaks device memory.
    void release_session(SessionContext& ctx);

    const ServerConfig& config() const { return cfg_; }
    unsigned max_lanes() const { return max_lanes_; }
    MemoryPool& memory() { return pool_; }
    LaneExecutor& executor() { return executor_; }
    std::size_t active_sessions() const;

private:
    struct Worker {
        net::TcpSocket sock;
        std::thread thread;
        std::atomic<bool> done{false};
        bool counted = false;  // true for real sessions, false for rejections
    };

    void accept_loop();
    void session_loop(Worker* w);
    void reject_loop(Worker* w);
    void reap_finished();  // joins workers that flagged done; needs workers_mutex_

    proto::Response run_kernel(SessionContext& ctx, const proto::LaunchKernel& cmd);
    void aggregate_risk_entry(SessionContext& ctx, const proto::LaunchKernel& cmd);

    ServerConfig cfg_;
    unsigned max_lanes_;
    MemoryPool pool_;
    LaneExecutor executor_;
    std::map<std::string, KernelFn> kernels_;
    std::atomic<bool> started_{false};
    std::atomic<std::uint64_t> next_session_id_{1};
    std::uint16_t bound_port_ = 0;

    std::optional<net::TcpListener> listener_;
    std::thread accept_thread_;

    mutable std::mutex workers_mutex_;
    std::condition_variable worker_exited_;
    std::list<std::unique_ptr<Worker>> workers_;
    std::size_t active_ = 0;  // live counted sessions
};

}  // namespace aaas::server
