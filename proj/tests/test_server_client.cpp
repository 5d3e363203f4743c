#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <atomic>
#include <bit>
#include <chrono>
#include <cstdint>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "aaas/client/client.hpp"
#include "aaas/common/byteio.hpp"
#include "aaas/riskcore/analysis.hpp"
#include "aaas/riskcore/blob.hpp"
#include "aaas/server/executor.hpp"
#include "aaas/server/server.hpp"
#include "cases.hpp"

using namespace aaas;
namespace pr = aaas::proto;
namespace sv = aaas::server;
namespace cl = aaas::client;

namespace {

constexpr const char* kKernel = "aggregate_risk_v1";

sv::ServerConfig quick_config() {
    sv::ServerConfig cfg;
    cfg.drain_timeout_ms = 200;
    return cfg;
}

cases::DeskCase non_empty_case(std::uint64_t seed) {
    for (std::uint64_t s = seed;; s += 1000) {
        cases::DeskCase c = cases::random_case(s);
        if (!c.yet.trials.empty()) return c;
    }
}

risk::YearLossTable local_ylt(const cases::DeskCase& dc, unsigned lanes, std::size_t chunk) {
    return risk::analyze(cases::single_layer_portfolio(dc.layer), dc.yet, dc.elts, lanes, chunk)
        .ylt(0, 0);
}

bool same_bits(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (std::bit_cast<std::uint64_t>(a[i]) != std::bit_cast<std::uint64_t>(b[i]))
            return false;
    return true;
}

// ---- in-process driver helpers (single owner, main thread only) ----

std::uint64_t alloc_ok(sv::Server& srv, sv::SessionContext& ctx, std::uint64_t size) {
    pr::Response r = srv.handle_command(ctx, pr::AllocBuffer{size});
    REQUIRE(r.status == pr::Status::ok);
    return std::get<pr::AllocAck>(r.body).handle;
}

void write_ok(sv::Server& srv, sv::SessionContext& ctx, std::uint64_t handle,
              std::uint64_t offset, std::vector<std::uint8_t> bytes) {
    pr::TransferToDevice cmd;
    cmd.handle = handle;
    cmd.offset = offset;
    cmd.data = std::move(bytes);
    REQUIRE(srv.handle_command(ctx, cmd).status == pr::Status::ok);
}

std::vector<std::uint8_t> read_ok(sv::Server& srv, sv::SessionContext& ctx, std::uint64_t handle,
                                  std::uint64_t offset, std::uint64_t len) {
    pr::Response r = srv.handle_command(ctx, pr::TransferToHost{handle, offset, len});
    REQUIRE(r.status == pr::Status::ok);
    return std::get<pr::HostData>(r.body).data;
}

struct Uploaded {
    std::uint64_t yet = 0, elt = 0, layer = 0, out = 0;
    std::uint64_t n = 0;
};

Uploaded upload_case(sv::Server& srv, sv::SessionContext& ctx, const cases::DeskCase& dc) {
    risk::TableBlobs blobs = risk::encode_tables(dc.yet, dc.elts, dc.layer);
    Uploaded u;
    u.n = dc.yet.trials.size();
    u.yet = alloc_ok(srv, ctx, blobs.yet.size());
    u.elt = alloc_ok(srv, ctx, blobs.elt.size());
    u.layer = alloc_ok(srv, ctx, blobs.layer.size());
    u.out = alloc_ok(srv, ctx, 8 * u.n);
    write_ok(srv, ctx, u.yet, 0, blobs.yet);
    write_ok(srv, ctx, u.elt, 0, blobs.elt);
    write_ok(srv, ctx, u.layer, 0, blobs.layer);
    return u;
}

pr::LaunchKernel launch_cmd(const Uploaded& u, std::uint32_t lanes, std::uint32_t chunk,
                            std::uint64_t begin, std::uint64_t end) {
    pr::LaunchKernel l;
    l.kernel_name = kKernel;
    l.lanes = lanes;
    l.chunk_size = chunk;
    l.args = {pr::LaunchArg::buffer(u.yet),   pr::LaunchArg::buffer(u.elt),
              pr::LaunchArg::buffer(u.layer), pr::LaunchArg::buffer(u.out),
              pr::LaunchArg::scalar(begin),   pr::LaunchArg::scalar(end)};
    return l;
}

std::vector<double> read_ylt(sv::Server& srv, sv::SessionContext& ctx, const Uploaded& u) {
    std::vector<std::uint8_t> bytes = read_ok(srv, ctx, u.out, 0, 8 * u.n);
    std::vector<double> out(u.n);
    for (std::uint64_t i = 0; i < u.n; ++i) out[i] = load_f64le(bytes.data() + 8 * i);
    return out;
}

sv::SessionContext hello_ok(sv::Server& srv) {
    sv::SessionContext ctx = srv.make_context();
    REQUIRE(srv.handle_command(ctx, pr::Hello{kKernel, 1}).status == pr::Status::ok);
    return ctx;
}

// ---- socket driver usable from worker threads (no doctest macros) ----

struct RemoteRun {
    std::vector<double> ylt;
    std::vector<pr::MsgType> trace;
    std::string error;  // empty on success
};

RemoteRun run_case_remotely(const cl::DeviceEndpoint& ep, const cases::DeskCase& dc,
                            unsigned lanes, std::uint32_t chunk,
                            cl::ClientOptions opts = cl::default_client_options()) {
    RemoteRun out;
    try {
        risk::TableBlobs blobs = risk::encode_tables(dc.yet, dc.elts, dc.layer);
        const std::uint64_t n = dc.yet.trials.size();
        cl::Session s = cl::Session::open(ep, kKernel, opts);
        cl::DeviceBuffer byet = s.alloc(blobs.yet.size());
        cl::DeviceBuffer belt = s.alloc(blobs.elt.size());
        cl::DeviceBuffer blayer = s.alloc(blobs.layer.size());
        cl::DeviceBuffer bout = s.alloc(8 * n);
        s.write(byet, 0, blobs.yet);
        s.write(belt, 0, blobs.elt);
        s.write(blayer, 0, blobs.layer);
        s.launch(kKernel, lanes, chunk,
                 {pr::LaunchArg::buffer(byet.handle), pr::LaunchArg::buffer(belt.handle),
                  pr::LaunchArg::buffer(blayer.handle), pr::LaunchArg::buffer(bout.handle),
                  pr::LaunchArg::scalar(std::uint64_t{0}), pr::LaunchArg::scalar(n)});
        std::vector<std::uint8_t> bytes = s.read(bout, 0, 8 * n);
        s.free(byet);
        s.free(belt);
        s.free(blayer);
        s.free(bout);
        out.trace = s.trace();
        s.close();
        out.trace.push_back(pr::MsgType::quit);
        out.ylt.resize(n);
        for (std::uint64_t i = 0; i < n; ++i) out.ylt[i] = load_f64le(bytes.data() + 8 * i);
    } catch (const std::exception& e) {
        out.error = e.what();
    }
    return out;
}

cl::DeviceEndpoint loopback(std::uint16_t port, std::size_t ordinal = 0) {
    return {"127.0.0.1", port, ordinal};
}

}  // namespace

// ===========================================================================
// command dispatch, driven in process
// ===========================================================================

TEST_CASE("hello binds the kernel and reports device info") {
    sv::ServerConfig cfg = quick_config();
    cfg.memory_cap = 1 << 20;
    cfg.max_lanes = 4;
    cfg.device_id = 3;
    sv::Server srv(cfg);

    sv::SessionContext ctx = srv.make_context();
    pr::Response r = srv.handle_command(ctx, pr::Hello{kKernel, 1});
    REQUIRE(r.status == pr::Status::ok);
    auto ack = std::get<pr::HelloAck>(r.body);
    CHECK(ack.device_id == 3);
    CHECK(ack.memory_cap == (1u << 20));
    CHECK(ack.max_lanes == 4);
    CHECK(ctx.kernel_name == kKernel);
}

TEST_CASE("hello with an unregistered kernel is refused") {
    sv::Server srv(quick_config());
    sv::SessionContext ctx = srv.make_context();
    CHECK(srv.handle_command(ctx, pr::Hello{"fft_v9", 1}).status == pr::Status::unknown_kernel);
    // The session is still considered greeted, so a retry counts as a second
    // hello rather than a fresh start.
    CHECK(srv.handle_command(ctx, pr::Hello{kKernel, 1}).status == pr::Status::protocol_error);
}

TEST_CASE("commands before hello are protocol errors") {
    sv::Server srv(quick_config());
    sv::SessionContext ctx = srv.make_context();
    CHECK(srv.handle_command(ctx, pr::AllocBuffer{64}).status == pr::Status::protocol_error);
    CHECK(srv.handle_command(ctx, pr::Quit{}).status == pr::Status::protocol_error);
    CHECK(ctx.buffers.empty());
}

TEST_CASE("handles are monotonic and never reused") {
    sv::Server srv(quick_config());
    sv::SessionContext ctx = hello_ok(srv);

    std::uint64_t h1 = alloc_ok(srv, ctx, 16);
    std::uint64_t h2 = alloc_ok(srv, ctx, 16);
    CHECK(h1 == 1);
    CHECK(h2 == 2);
    REQUIRE(srv.handle_command(ctx, pr::FreeBuffer{h1}).status == pr::Status::ok);
    CHECK(alloc_ok(srv, ctx, 16) == 3);
}

TEST_CASE("allocations beyond the memory cap are refused, frees give it back") {
    sv::ServerConfig cfg = quick_config();
    cfg.memory_cap = 4096;
    sv::Server srv(cfg);
    sv::SessionContext ctx = hello_ok(srv);

    CHECK(srv.handle_command(ctx, pr::AllocBuffer{4097}).status ==
          pr::Status::out_of_device_memory);
    std::uint64_t h = alloc_ok(srv, ctx, 4096);
    CHECK(srv.memory().in_use() == 4096);
    CHECK(srv.handle_command(ctx, pr::AllocBuffer{1}).status == pr::Status::out_of_device_memory);
    REQUIRE(srv.handle_command(ctx, pr::FreeBuffer{h}).status == pr::Status::ok);
    CHECK(srv.memory().in_use() == 0);
    CHECK(alloc_ok(srv, ctx, 4096) > h);
}

TEST_CASE("transfers echo bytes back and reject out-of-range windows") {
    sv::Server srv(quick_config());
    sv::SessionContext ctx = hello_ok(srv);
    std::uint64_t h = alloc_ok(srv, ctx, 256);

    std::vector<std::uint8_t> pattern(100);
    for (std::size_t i = 0; i < pattern.size(); ++i)
        pattern[i] = static_cast<std::uint8_t>(i * 7 + 1);
    write_ok(srv, ctx, h, 16, pattern);

    CHECK(read_ok(srv, ctx, h, 16, 100) == pattern);
    // Fresh regions read back as zeroes.
    CHECK(read_ok(srv, ctx, h, 0, 16) == std::vector<std::uint8_t>(16, 0));

    pr::TransferToDevice over;
    over.handle = h;
    over.offset = 200;
    over.data.assign(57, 0xAB);
    CHECK(srv.handle_command(ctx, over).status == pr::Status::range_error);
    CHECK(srv.handle_command(ctx, pr::TransferToHost{h, 256, 1}).status ==
          pr::Status::range_error);
    CHECK(srv.handle_command(ctx, pr::TransferToHost{h, 257, 0}).status ==
          pr::Status::range_error);
    // Zero-length window at the very end is inside the buffer.
    CHECK(srv.handle_command(ctx, pr::TransferToHost{h, 256, 0}).status == pr::Status::ok);
}

TEST_CASE("a freed handle is dead for every command") {
    sv::Server srv(quick_config());
    sv::SessionContext ctx = hello_ok(srv);
    Uploaded u = upload_case(srv, ctx, non_empty_case(11));

    REQUIRE(srv.handle_command(ctx, pr::FreeBuffer{u.out}).status == pr::Status::ok);
    CHECK(srv.handle_command(ctx, pr::FreeBuffer{u.out}).status == pr::Status::bad_handle);
    CHECK(srv.handle_command(ctx, pr::TransferToHost{u.out, 0, 1}).status ==
          pr::Status::bad_handle);
    pr::TransferToDevice w;
    w.handle = u.out;
    w.data = {1};
    CHECK(srv.handle_command(ctx, w).status == pr::Status::bad_handle);
    CHECK(srv.handle_command(ctx, launch_cmd(u, 1, 1, 0, u.n)).status == pr::Status::bad_handle);
    CHECK(srv.handle_command(ctx, pr::FreeBuffer{999}).status == pr::Status::bad_handle);
}

TEST_CASE("per-session accounting matches the shared pool") {
    sv::Server srv(quick_config());
    sv::SessionContext ctx = hello_ok(srv);

    std::uint64_t a = alloc_ok(srv, ctx, 1000);
    std::uint64_t b = alloc_ok(srv, ctx, 24);
    CHECK(ctx.bytes_in_use == 1024);
    CHECK(srv.memory().in_use() == 1024);
    REQUIRE(srv.handle_command(ctx, pr::FreeBuffer{a}).status == pr::Status::ok);
    CHECK(ctx.bytes_in_use == 24);
    CHECK(srv.memory().in_use() == 24);
    REQUIRE(srv.handle_command(ctx, pr::FreeBuffer{b}).status == pr::Status::ok);
    CHECK(ctx.bytes_in_use == 0);
    CHECK(srv.memory().in_use() == 0);
}

TEST_CASE("launched kernel writes the same bytes as the local analysis") {
    sv::Server srv(quick_config());
    for (std::uint64_t seed : {21u, 22u, 23u}) {
        cases::DeskCase dc = non_empty_case(seed);
        for (unsigned lanes : {1u, 4u}) {
            for (std::uint32_t chunk : {1u, 1024u}) {
                sv::SessionContext ctx = hello_ok(srv);
                Uploaded u = upload_case(srv, ctx, dc);
                REQUIRE(srv.handle_command(ctx, launch_cmd(u, lanes, chunk, 0, u.n)).status ==
                        pr::Status::ok);
                CHECK(same_bits(read_ylt(srv, ctx, u), local_ylt(dc, lanes, chunk)));
                REQUIRE(srv.handle_command(ctx, pr::Quit{}).status == pr::Status::ok);
            }
        }
    }
    CHECK(srv.memory().in_use() == 0);
}

TEST_CASE("launch argument shape is validated") {
    sv::Server srv(quick_config());
    sv::SessionContext ctx = hello_ok(srv);
    Uploaded u = upload_case(srv, ctx, non_empty_case(31));

    CHECK(srv.handle_command(ctx, launch_cmd(u, 0, 1, 0, u.n)).status ==
          pr::Status::protocol_error);
    CHECK(srv.handle_command(ctx, launch_cmd(u, 1, 0, 0, u.n)).status ==
          pr::Status::protocol_error);

    pr::LaunchKernel short_args = launch_cmd(u, 1, 1, 0, u.n);
    short_args.args.pop_back();
    CHECK(srv.handle_command(ctx, short_args).status == pr::Status::protocol_error);

    pr::LaunchKernel bad_tag = launch_cmd(u, 1, 1, 0, u.n);
    bad_tag.args[0] = pr::LaunchArg::scalar(u.yet);  // right value, wrong tag
    CHECK(srv.handle_command(ctx, bad_tag).status == pr::Status::protocol_error);

    pr::LaunchKernel wrong_name = launch_cmd(u, 1, 1, 0, u.n);
    wrong_name.kernel_name = "fft_v9";
    CHECK(srv.handle_command(ctx, wrong_name).status == pr::Status::unknown_kernel);
}

TEST_CASE("launch range checks map to RANGE_ERROR") {
    sv::Server srv(quick_config());
    sv::SessionContext ctx = hello_ok(srv);
    Uploaded u = upload_case(srv, ctx, non_empty_case(41));

    CHECK(srv.handle_command(ctx, launch_cmd(u, 1, 1, 0, u.n + 1)).status ==
          pr::Status::range_error);
    CHECK(srv.handle_command(ctx, launch_cmd(u, 1, 1, u.n, 0)).status == pr::Status::range_error);

    // Output buffer one trial short.
    std::uint64_t small = alloc_ok(srv, ctx, 8 * (u.n - 1));
    pr::LaunchKernel l = launch_cmd(u, 1, 1, 0, u.n);
    l.args[3] = pr::LaunchArg::buffer(small);
    CHECK(srv.handle_command(ctx, l).status == pr::Status::range_error);
}

TEST_CASE("kernel failures are contained to the offending session") {
    sv::Server srv(quick_config());

    sv::SessionContext bad = hello_ok(srv);
    Uploaded u = upload_case(srv, bad, non_empty_case(51));
    write_ok(srv, bad, u.yet, 0, std::vector<std::uint8_t>(16, 0xFF));  // corrupt the header
    CHECK(srv.handle_command(bad, launch_cmd(u, 1, 1, 0, u.n)).status ==
          pr::Status::kernel_failure);

    // The failing session keeps working at the transport level...
    std::uint64_t h = alloc_ok(srv, bad, 64);
    write_ok(srv, bad, h, 0, {1, 2, 3});
    CHECK(read_ok(srv, bad, h, 0, 3) == std::vector<std::uint8_t>({1, 2, 3}));

    // ...and an unrelated session still computes correct results.
    cases::DeskCase dc = non_empty_case(52);
    sv::SessionContext good = hello_ok(srv);
    Uploaded v = upload_case(srv, good, dc);
    REQUIRE(srv.handle_command(good, launch_cmd(v, 2, 7, 0, v.n)).status == pr::Status::ok);
    CHECK(same_bits(read_ylt(srv, good, v), local_ylt(dc, 2, 7)));
}

TEST_CASE("quit finishes the session and releases its memory") {
    sv::Server srv(quick_config());
    sv::SessionContext ctx = hello_ok(srv);
    alloc_ok(srv, ctx, 512);
    alloc_ok(srv, ctx, 512);
    CHECK(srv.memory().in_use() == 1024);

    REQUIRE(srv.handle_command(ctx, pr::Quit{}).status == pr::Status::ok);
    CHECK(ctx.finished);
    CHECK(srv.memory().in_use() == 0);
    CHECK(srv.handle_command(ctx, pr::AllocBuffer{8}).status == pr::Status::protocol_error);
}

TEST_CASE("abrupt disconnect releases session resources") {
    sv::Server srv(quick_config());
    sv::SessionContext ctx = hello_ok(srv);
    alloc_ok(srv, ctx, 2048);
    CHECK(srv.memory().in_use() == 2048);

    srv.release_session(ctx);  // what the session worker does on a dropped link
    CHECK(srv.memory().in_use() == 0);
    srv.release_session(ctx);  // idempotent
    CHECK(srv.memory().in_use() == 0);
}

TEST_CASE("sessions are isolated: same handle numbers, different contents") {
    sv::Server srv(quick_config());
    sv::SessionContext a = hello_ok(srv);
    sv::SessionContext b = hello_ok(srv);
    CHECK(a.id != b.id);

    std::uint64_t ha = alloc_ok(srv, a, 32);
    std::uint64_t hb = alloc_ok(srv, b, 32);
    CHECK(ha == hb);  // same number, disjoint spaces

    write_ok(srv, a, ha, 0, std::vector<std::uint8_t>(32, 0xAA));
    write_ok(srv, b, hb, 0, std::vector<std::uint8_t>(32, 0xBB));
    CHECK(read_ok(srv, a, ha, 0, 32) == std::vector<std::uint8_t>(32, 0xAA));
    CHECK(read_ok(srv, b, hb, 0, 32) == std::vector<std::uint8_t>(32, 0xBB));

    // Freeing in one session leaves the other session's handle alive.
    REQUIRE(srv.handle_command(a, pr::FreeBuffer{ha}).status == pr::Status::ok);
    CHECK(read_ok(srv, b, hb, 0, 32) == std::vector<std::uint8_t>(32, 0xBB));
}

TEST_CASE("kernel registry is immutable after start") {
    sv::Server srv(quick_config());
    CHECK(srv.has_kernel(kKernel));
    srv.register_kernel("noop_v1", [](sv::SessionContext&, const pr::LaunchKernel&) {});
    CHECK(srv.has_kernel("noop_v1"));
    CHECK_THROWS_AS(srv.register_kernel("noop_v1", [](sv::SessionContext&,
                                                      const pr::LaunchKernel&) {}),
                    Error);

    srv.start();
    CHECK_THROWS_AS(srv.register_kernel("late_v1", [](sv::SessionContext&,
                                                      const pr::LaunchKernel&) {}),
                    Error);
    srv.stop();
}

// ===========================================================================
// lane executor
// ===========================================================================

TEST_CASE("executor runs every task and rethrows the first failure") {
    sv::LaneExecutor exec(1);
    std::atomic<int> ran{0};
    std::vector<std::function<void()>> tasks;
    for (int i = 0; i < 8; ++i) {
        tasks.push_back([&ran, i] {
            ran.fetch_add(1);
            if (i == 3) throw std::runtime_error("lane failure");
        });
    }
    CHECK_THROWS_WITH_AS(exec.run_job(std::move(tasks)), "lane failure", std::runtime_error);
    CHECK(ran.load() == 8);
}

TEST_CASE("executor completes jobs wider than the worker pool") {
    sv::LaneExecutor exec(2);
    std::vector<int> slots(64, 0);
    std::vector<std::function<void()>> tasks;
    for (int i = 0; i < 64; ++i) tasks.push_back([&slots, i] { slots[i] = i + 1; });
    exec.run_job(std::move(tasks));
    for (int i = 0; i < 64; ++i) CHECK(slots[i] == i + 1);
}

TEST_CASE("concurrent jobs interleave instead of queueing whole") {
    sv::LaneExecutor exec(1);  // single worker makes the pick order observable
    std::mutex log_mutex;
    std::vector<char> log;
    std::atomic<bool> gate_reached{false};
    std::atomic<bool> second_job_submitted{false};

    auto record = [&](char tag) {
        std::lock_guard<std::mutex> lock(log_mutex);
        log.push_back(tag);
    };

    std::thread first([&] {
        std::vector<std::function<void()>> tasks;
        tasks.push_back([&] {
            gate_reached = true;
            // Hold the worker until job B is queued behind us.
            while (!second_job_submitted) std::this_thread::sleep_for(std::chrono::milliseconds(1));
            std::this_thread::sleep_for(std::chrono::milliseconds(50));
            record('A');
        });
        for (int i = 0; i < 3; ++i) tasks.push_back([&] { record('A'); });
        exec.run_job(std::move(tasks));
    });

    while (!gate_reached) std::this_thread::sleep_for(std::chrono::milliseconds(1));
    std::thread second([&] {
        second_job_submitted = true;
        std::vector<std::function<void()>> tasks;
        for (int i = 0; i < 2; ++i) tasks.push_back([&] { record('B'); });
        exec.run_job(std::move(tasks));
    });

    first.join();
    second.join();

    REQUIRE(log.size() == 6);
    // Round-robin pick order: B work must land before A's queue is drained.
    std::size_t first_b = log.size(), last_a = 0;
    for (std::size_t i = 0; i < log.size(); ++i) {
        if (log[i] == 'B') first_b = std::min(first_b, i);
        if (log[i] == 'A') last_a = std::max(last_a, i);
    }
    CHECK(first_b < last_a);
}

// ===========================================================================
// sockets: sessions against a live server
// ===========================================================================

TEST_CASE("full remote run over TCP matches the local analysis and the canonical trace") {
    sv::Server srv(quick_config());
    srv.start();
    cases::DeskCase dc = non_empty_case(61);

    RemoteRun run = run_case_remotely(loopback(srv.port()), dc, 2, 16);
    REQUIRE(run.error.empty());
    CHECK(same_bits(run.ylt, local_ylt(dc, 2, 16)));

    using T = pr::MsgType;
    std::vector<T> expected = {T::hello,
                               T::alloc_buffer,
                               T::alloc_buffer,
                               T::alloc_buffer,
                               T::alloc_buffer,
                               T::transfer_to_device,
                               T::transfer_to_device,
                               T::transfer_to_device,
                               T::launch_kernel,
                               T::transfer_to_host,
                               T::free_buffer,
                               T::free_buffer,
                               T::free_buffer,
                               T::free_buffer,
                               T::quit};
    CHECK(run.trace == expected);
    srv.stop();
}

TEST_CASE("partition law: 1 to 8 devices produce bitwise-identical tables") {
    sv::ServerConfig cfg = quick_config();
    cfg.max_sessions = 16;
    sv::Server srv(cfg);
    srv.start();

    cases::DeskCase dc = non_empty_case(71);
    risk::YearLossTable expected = local_ylt(dc, 2, 8);

    for (std::size_t devices = 1; devices <= 8; ++devices) {
        std::vector<cl::DeviceEndpoint> eps;
        for (std::size_t d = 0; d < devices; ++d) eps.push_back(loopback(srv.port(), d));
        risk::YearLossTable remote = cl::run_remote_layer(dc.layer, dc.yet, dc.elts, eps, 2, 8);
        CHECK(same_bits(remote, expected));
    }
    srv.stop();
}

TEST_CASE("run_remote_analysis reproduces analyze() on a multi-layer portfolio") {
    sv::Server srv(quick_config());
    srv.start();

    cases::DeskCase dc = non_empty_case(81);
    REQUIRE(dc.elts.size() >= 1);

    risk::Portfolio pf;
    risk::Layer reversed = dc.layer;
    std::reverse(reversed.elt_ids.begin(), reversed.elt_ids.end());
    risk::Layer first_only;
    first_only.elt_ids = {0};
    first_only.terms = dc.layer.terms;
    pf.programs.push_back({{dc.layer, reversed}});
    pf.programs.push_back({{first_only}});

    risk::AnalysisResult local = risk::analyze(pf, dc.yet, dc.elts, 2, 8);
    std::vector<cl::DeviceEndpoint> eps = {loopback(srv.port(), 0), loopback(srv.port(), 1)};
    cl::RemoteRunStats stats;
    risk::AnalysisResult remote =
        cl::run_remote_analysis(pf, dc.yet, dc.elts, eps, 2, 8, cl::default_client_options(),
                                &stats);

    REQUIRE(remote.layers.size() == local.layers.size());
    for (std::size_t i = 0; i < local.layers.size(); ++i) {
        CHECK(remote.layers[i].program_index == local.layers[i].program_index);
        CHECK(remote.layers[i].layer_index == local.layers[i].layer_index);
        CHECK(same_bits(remote.layers[i].ylt, local.layers[i].ylt));
    }
    CHECK(stats.kernel_s >= 0.0);
    srv.stop();
}

TEST_CASE("four threads each drive their own session against one server") {
    sv::Server srv(quick_config());
    srv.start();

    constexpr int kThreads = 4;
    std::vector<RemoteRun> runs(kThreads);
    std::vector<cases::DeskCase> dcs;
    for (int t = 0; t < kThreads; ++t) dcs.push_back(non_empty_case(90 + t));

    std::vector<std::thread> threads;
    for (int t = 0; t < kThreads; ++t) {
        threads.emplace_back([&, t] {
            runs[t] = run_case_remotely(loopback(srv.port()), dcs[t], 2, 4);
        });
    }
    for (auto& t : threads) t.join();

    for (int t = 0; t < kThreads; ++t) {
        INFO("thread ", t, ": ", runs[t].error);
        REQUIRE(runs[t].error.empty());
        CHECK(same_bits(runs[t].ylt, local_ylt(dcs[t], 2, 4)));
    }
    srv.stop();
}

TEST_CASE("two threads each spread one run across two servers") {
    sv::Server s1(quick_config());
    sv::Server s2(quick_config());
    s1.start();
    s2.start();

    std::vector<cl::DeviceEndpoint> eps = {loopback(s1.port(), 0), loopback(s2.port(), 1)};
    std::vector<cases::DeskCase> dcs = {non_empty_case(101), non_empty_case(102)};
    std::vector<risk::YearLossTable> got(2);
    std::vector<std::string> errors(2);

    std::vector<std::thread> threads;
    for (int t = 0; t < 2; ++t) {
        threads.emplace_back([&, t] {
            try {
                got[t] = cl::run_remote_layer(dcs[t].layer, dcs[t].yet, dcs[t].elts, eps, 2, 4);
            } catch (const std::exception& e) {
                errors[t] = e.what();
            }
        });
    }
    for (auto& t : threads) t.join();

    for (int t = 0; t < 2; ++t) {
        INFO("thread ", t, ": ", errors[t]);
        REQUIRE(errors[t].empty());
        CHECK(same_bits(got[t], local_ylt(dcs[t], 2, 4)));
    }
    s1.stop();
    s2.stop();
}

TEST_CASE("connections past the session cap are rejected cleanly") {
    sv::ServerConfig cfg = quick_config();
    cfg.max_sessions = 2;
    sv::Server srv(cfg);
    srv.start();

    cl::Session a = cl::Session::open(loopback(srv.port()), kKernel);
    cl::Session b = cl::Session::open(loopback(srv.port()), kKernel);

    try {
        cl::Session c = cl::Session::open(loopback(srv.port()), kKernel);
        FAIL("third session should have been rejected");
    } catch (const cl::HandshakeRejected& e) {
        CHECK(e.status == pr::Status::protocol_error);
    }

    // The rejected attempt leaves the two live sessions untouched.
    cl::DeviceBuffer buf = a.alloc(64);
    a.write(buf, 0, std::vector<std::uint8_t>{9, 9, 9});
    CHECK(a.read(buf, 0, 3) == std::vector<std::uint8_t>({9, 9, 9}));

    a.close();
    auto deadline = std::chrono::steady_clock::now() + std::chrono::seconds(2);
    while (srv.active_sessions() >= 2 && std::chrono::steady_clock::now() < deadline)
        std::this_thread::sleep_for(std::chrono::milliseconds(5));
    REQUIRE(srv.active_sessions() < 2);

    cl::Session d = cl::Session::open(loopback(srv.port()), kKernel);  // slot is free again
    d.close();
    b.close();
    srv.stop();
}

TEST_CASE("transfers are chunked at the payload cap") {
    sv::Server srv(quick_config());
    srv.start();

    cl::ClientOptions opts = cl::default_client_options();
    opts.max_payload = 64;  // data per write: 48 bytes; per read: 60 bytes

    cl::Session s = cl::Session::open(loopback(srv.port()), kKernel, opts);
    cl::DeviceBuffer buf = s.alloc(1000);
    std::vector<std::uint8_t> data(1000);
    for (std::size_t i = 0; i < data.size(); ++i) data[i] = static_cast<std::uint8_t>(i * 13);

    s.write(buf, 0, data);
    CHECK(s.read(buf, 0, 1000) == data);

    std::size_t writes = 0, reads = 0;
    for (pr::MsgType t : s.trace()) {
        writes += t == pr::MsgType::transfer_to_device;
        reads += t == pr::MsgType::transfer_to_host;
    }
    CHECK(writes == 21);  // ceil(1000 / 48)
    CHECK(reads == 17);   // ceil(1000 / 60)

    s.close();
    srv.stop();
}

TEST_CASE("status errors surface without poisoning the session") {
    sv::ServerConfig cfg = quick_config();
    cfg.memory_cap = 4096;
    sv::Server srv(cfg);
    srv.start();

    cl::Session s = cl::Session::open(loopback(srv.port()), kKernel);
    cl::DeviceBuffer buf = s.alloc(64);

    try {
        s.read(buf, 64, 1);
        FAIL("read past the end should fail");
    } catch (const cl::RemoteStatusError& e) {
        CHECK(e.status == pr::Status::range_error);
    }
    try {
        s.alloc(1 << 20);
        FAIL("alloc beyond the cap should fail");
    } catch (const cl::RemoteStatusError& e) {
        CHECK(e.status == pr::Status::out_of_device_memory);
    }
    try {
        s.launch(kKernel, 0, 1, {});
        FAIL("zero lanes should fail");
    } catch (const cl::RemoteStatusError& e) {
        CHECK(e.status == pr::Status::protocol_error);
    }

    // Still fully usable afterwards.
    s.write(buf, 0, std::vector<std::uint8_t>{5, 6, 7});
    CHECK(s.read(buf, 0, 3) == std::vector<std::uint8_t>({5, 6, 7}));
    s.free(buf);
    s.close();
    srv.stop();
}

TEST_CASE("handshake against an unknown kernel fails over TCP") {
    sv::Server srv(quick_config());
    srv.start();
    try {
        cl::Session s = cl::Session::open(loopback(srv.port()), "not_registered_v1");
        FAIL("handshake should have been rejected");
    } catch (const cl::HandshakeRejected& e) {
        CHECK(e.status == pr::Status::unknown_kernel);
    }
    srv.stop();
}

TEST_CASE("dead endpoints fail fast and are named in multi-device runs") {
    std::uint16_t dead_port;
    {
        net::TcpListener reserved = net::TcpListener::bind("127.0.0.1", 0);
        dead_port = reserved.port();
    }  // closed again: connecting now gets a refusal

    CHECK_THROWS_AS(cl::Session::open(loopback(dead_port), kKernel), net::ConnectFailure);

    sv::Server srv(quick_config());
    srv.start();
    cases::DeskCase dc = non_empty_case(111);
    std::vector<cl::DeviceEndpoint> eps = {loopback(srv.port(), 0), loopback(dead_port, 1)};
    try {
        cl::run_remote_layer(dc.layer, dc.yet, dc.elts, eps, 1, 1);
        FAIL("the dead endpoint should abort the run");
    } catch (const cl::DeviceFailure& e) {
        CHECK(e.endpoint == eps[1].label());
        CHECK(std::string(e.what()).find("device 1") != std::string::npos);
    }
    srv.stop();
}

TEST_CASE("closing twice reports ClosedSession") {
    sv::Server srv(quick_config());
    srv.start();
    cl::Session s = cl::Session::open(loopback(srv.port()), kKernel);
    s.close();
    CHECK_THROWS_AS(s.close(), cl::ClosedSession);
    CHECK_THROWS_AS(s.alloc(8), cl::ClosedSession);
    srv.stop();
}

TEST_CASE("server stop unblocks idle sessions") {
    sv::ServerConfig cfg = quick_config();
    cfg.drain_timeout_ms = 100;
    sv::Server srv(cfg);
    srv.start();

    cl::Session s = cl::Session::open(loopback(srv.port()), kKernel);
    srv.stop();  // forces the connection down after the grace period
    CHECK_THROWS_AS(s.alloc(8), Error);
}

TEST_CASE("concurrent kernels from two sockets both come out right") {
    sv::ServerConfig cfg = quick_config();
    cfg.max_lanes = 2;
    sv::Server srv(cfg);
    srv.start();

    std::vector<cases::DeskCase> dcs;
    for (std::uint64_t s : {121u, 122u}) {
        cases::DeskCase dc = non_empty_case(s);
        // Bulk the trials up so the two launches genuinely overlap.
        for (std::uint64_t k = 0; dc.yet.trials.size() < 4000; ++k) {
            cases::DeskCase extra = cases::random_case(s + 7000 + k);
            extra.yet.catalog_size = dc.yet.catalog_size;
            for (auto& trial : extra.yet.trials) {
                for (auto& occ : trial.occurrences) occ.event_id %= dc.yet.catalog_size;
                dc.yet.trials.push_back(trial);
            }
        }
        dcs.push_back(std::move(dc));
    }

    std::vector<RemoteRun> runs(2);
    std::vector<std::thread> threads;
    for (int t = 0; t < 2; ++t)
        threads.emplace_back(
            [&, t] { runs[t] = run_case_remotely(loopback(srv.port()), dcs[t], 2, 16); });
    for (auto& t : threads) t.join();

    for (int t = 0; t < 2; ++t) {
        INFO("launch ", t, ": ", runs[t].error);
        REQUIRE(runs[t].error.empty());
        CHECK(same_bits(runs[t].ylt, local_ylt(dcs[t], 2, 16)));
    }
    srv.stop();
}

// ===========================================================================
// endpoint discovery
// ===========================================================================

TEST_CASE("server list parsing") {
    auto eps = cl::discover_devices("a:9000, b.example:9001 ,c:65535");
    REQUIRE(eps.size() == 3);
    CHECK(eps[0].host == "a");
    CHECK(eps[0].port == 9000);
    CHECK(eps[0].ordinal == 0);
    CHECK(eps[1].host == "b.example");
    CHECK(eps[1].port == 9001);
    CHECK(eps[1].ordinal == 1);
    CHECK(eps[2].port == 65535);

    CHECK(cl::discover_devices(nullptr).empty());
    CHECK(cl::discover_devices("").empty());
    CHECK(cl::discover_devices("   ").empty());

    CHECK_THROWS_AS(cl::discover_devices("a:notaport"), cl::MalformedServerList);
    CHECK_THROWS_AS(cl::discover_devices("a:"), cl::MalformedServerList);
    CHECK_THROWS_AS(cl::discover_devices(":9000"), cl::MalformedServerList);
    CHECK_THROWS_AS(cl::discover_devices("a:9000,,b:9001"), cl::MalformedServerList);
    CHECK_THROWS_AS(cl::discover_devices("a:0"), cl::MalformedServerList);
    CHECK_THROWS_AS(cl::discover_devices("a:70000"), cl::MalformedServerList);
    CHECK_THROWS_AS(cl::discover_devices("noport"), cl::MalformedServerList);
}
