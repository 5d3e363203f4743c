#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <fstream>
#include <string>
#include <thread>

#include <CLI11.hpp>

#include "aaas/common/log.hpp"
#include "aaas/server/server.hpp"

// Compute-service daemon. Listens for client sessions, executes registered
// kernels against per-session device buffers, and drains gracefully on
// SIGINT/SIGTERM.

namespace {

std::atomic<bool> g_stop{false};

void on_signal(int) { g_stop.store(true); }

bool parse_bind(const std::string& text, std::string& host, std::uint16_t& port) {
    std::size_t colon = text.rfind(':');
    if (colon == std::string::npos || colon == 0 || colon + 1 == text.size()) return false;
    host = text.substr(0, colon);
    std::string digits = text.substr(colon + 1);
    unsigned long value = 0;
    for (char c : digits) {
        if (c < '0' || c > '9') return false;
        value = value * 10 + static_cast<unsigned long>(c - '0');
        if (value > 65535) return false;
    }
    port = static_cast<std::uint16_t>(value);
    return true;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Compute service daemon"};

    std::string bind = "127.0.0.1:9000";
    std::string log_level = "info";
    std::string port_file;
    aaas::server::ServerConfig cfg;

    app.add_option("--bind", bind, "Listen address as HOST:PORT (port 0 picks a free port)")
        ->capture_default_str();
    app.add_option("--mem-cap", cfg.memory_cap, "Device memory pool size in bytes")
        ->capture_default_str();
    app.add_option("--max-lanes", cfg.max_lanes,
                   "Compute lanes per kernel launch (0 = all hardware threads)")
        ->capture_default_str();
    app.add_option("--max-sessions", cfg.max_sessions, "Concurrent session limit")
        ->capture_default_str();
    app.add_option("--device-id", cfg.device_id, "Ordinal reported to clients")
        ->capture_default_str();
    app.add_option("--log-level", log_level, "debug|info|warn|error|off")
        ->capture_default_str();
    app.add_option("--port-file", port_file,
                   "Write the bound port number to this file once listening");

    CLI11_PARSE(app, argc, argv);

    if (!parse_bind(bind, cfg.host, cfg.port)) {
        std::fprintf(stderr, "error: --bind wants HOST:PORT, got '%s'\n", bind.c_str());
        return 1;
    }
    if (!aaas::log::parse_level(log_level, aaas::log::threshold())) {
        std::fprintf(stderr, "error: unknown log level '%s'\n", log_level.c_str());
        return 1;
    }

    struct sigaction sa = {};
    sa.sa_handler = on_signal;
    sigaction(SIGINT, &sa, nullptr);
    sigaction(SIGTERM, &sa, nullptr);
    std::signal(SIGPIPE, SIG_IGN);

    try {
        aaas::server::Server server(cfg);
        server.start();
        aaas::log::info("listening on %s:%u (device %u, %u lanes, cap %llu bytes)",
                        cfg.host.c_str(), static_cast<unsigned>(server.port()),
                        static_cast<unsigned>(cfg.device_id),
                        static_cast<unsigned>(server.max_lanes()),
                        static_cast<unsigned long long>(cfg.memory_cap));

        if (!port_file.empty()) {
            std::ofstream out(port_file, std::ios::trunc);
            out << server.port() << "\n";
            if (!out) {
                std::fprintf(stderr, "error: cannot write port file '%s'\n", port_file.c_str());
                server.stop();
                return 1;
            }
        }

        while (!g_stop.load()) std::this_thread::sleep_for(std::chrono::milliseconds(100));

        aaas::log::info("shutting down: draining sessions");
        server.stop();
        aaas::log::info("stopped");
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
