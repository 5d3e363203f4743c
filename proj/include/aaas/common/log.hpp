#pragma once

#include <cstdio>
#include <mutex>
#include <string>

// Minimal stderr logger for the daemon and CLI tools.

namespace aaas::log {

enum class Level { debug = 0, info = 1, warn = 2, error = 3, off = 4 };

inline Level& threshold() {
    static Level level = Level::warn;
    return level;
}

inline bool parse_level(const std::string& name, Level& out) {
    if (name == "debug") out = Level::debug;
    else if (name == "info") out = Level::info;
    else if (name == "warn") out = Level::warn;
    else if (name == "error") out = Level::error;
    else if (name == "off") out = Level::off;
    else return false;
    return true;
}

namespace detail {
inline std::mutex& mutex() {
    static std::mutex m;
    return m;
}

inline const char* tag(Level level) {
    switch (level) {
        case Level::debug: return "debug";
        case Level::info: return "info";
        case Level::warn: return "warn";
        default: return "error";
    }
}
}  // namespace detail

template <typename... Args>
void write(Level level, const char* fmt, Args... args) {
    if (level < threshold()) return;
    std::lock_guard<std::mutex> lock(detail::mutex());
    std::fprintf(stderr, "[%s] ", detail::tag(level));
    std::fprintf(stderr, fmt, args...);
    std::fputc('\n', stderr);
}

inline void write(Level level, const char* msg) { write(level, "%s", msg); }

template <typename... Args>
void debug(const char* fmt, Args... args) {
    write(Level::debug, fmt, args...);
}
template <typename... Args>
void info(const char* fmt, Args... args) {
    write(Level::info, fmt, args...);
}
template <typename... Args>
void warn(const char* fmt, Args... args) {
    write(Level::warn, fmt, args...);
}
template <typename... Args>
void error(const char* fmt, Args... args) {
    write(Level::error, fmt, args...);
}

}  // namespace aaas::log
