#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include "aaas/proto/messages.hpp"

namespace aaas::proto {

// One step of a session history, as seen by the sequence checker. Commands
// that act on buffers carry the handles they reference; an alloc event
// carries the handle the server granted in response, so a recorded history
// can be replayed through validate_sequence.
struct SeqEvent {
    MsgType step = MsgType::hello;
    std::vector<std::uint64_t> handles;  // referenced by the command
    std::uint64_t granted = 0;           // alloc only: handle assigned by the server

    static SeqEvent hello() { return {MsgType::hello, {}, 0}; }
    static SeqEvent alloc(std::uint64_t granted_handle) {
        return {MsgType::alloc_buffer, {}, granted_handle};
    }
    static SeqEvent transfer_to_device(std::uint64_t handle) {
        return {MsgType::transfer_to_device, {handle}, 0};
    }
    static SeqEvent launch(std::vector<std::uint64_t> buffer_handles) {
        return {MsgType::launch_kernel, std::move(buffer_handles), 0};
    }
    static SeqEvent transfer_to_host(std::uint64_t handle) {
        return {MsgType::transfer_to_host, {handle}, 0};
    }
    static SeqEvent free_buffer(std::uint64_t handle) {
        return {MsgType::free_buffer, {handle}, 0};
    }
    static SeqEvent quit() { return {MsgType::quit, {}, 0}; }
};

struct ProtocolViolation {
    enum class Kind { ordering, unknown_handle };
    Kind kind = Kind::ordering;
    std::size_t index = 0;  // position of the offending step in the history
    std::string detail;     // names the offending step
};

const char* step_name(MsgType t);

// Per-session state machine enforcing the session ordering rules: the first
// command must be hello, hello appears only once, nothing follows quit, and
// buffer commands may only reference handles that were granted and not yet
// freed. Single-owner; not thread safe.
class SequenceValidator {
public:
    // Checks the next command. On success the event is recorded (a free
    // retires its handle). Alloc grants are reported separately via
    // on_alloc_granted once the server assigns the handle.
    std::optional<ProtocolViolation> check(const SeqEvent& ev);

    void on_alloc_granted(std::uint64_t handle);

    bool handle_live(std::uint64_t handle) const { return live_.count(handle) != 0; }
    std::size_t steps_seen() const { return index_; }

private:
    bool saw_hello_ = false;
    bool saw_quit_ = false;
    std::size_t index_ = 0;
    std::unordered_set<std::uint64_t> live_;
};

// Replays a full recorded history; returns the first violation, if any.
std::optional<ProtocolViolation> validate_sequence(const std::vector<SeqEvent>& history);

}  // namespace aaas::proto
