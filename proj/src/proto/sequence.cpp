#include "aaas/proto/sequence.hpp"

namespace aaas::proto {

const char* step_name(MsgType t) {
    switch (t) {
        case MsgType::hello: return "hello";
        case MsgType::alloc_buffer: return "alloc_buffer";
        case MsgType::transfer_to_device: return "transfer_to_device";
        case MsgType::transfer_to_host: return "transfer_to_host";
        case MsgType::launch_kernel: return "launch_kernel";
        case MsgType::free_buffer: return "free_buffer";
        case MsgType::quit: return "quit";
    }
    return "unknown";
}

std::optional<ProtocolViolation> SequenceValidator::check(const SeqEvent& ev) {
    const std::size_t at = index_;
    auto ordering = [&](std::string detail) {
        return ProtocolViolation{ProtocolViolation::Kind::ordering, at, std::move(detail)};
    };

    if (saw_quit_)
        return ordering(std::string(step_name(ev.step)) + " after quit");
    if (!saw_hello_ && ev.step != MsgType::hello)
        return ordering(std::string(step_name(ev.step)) + " before hello");
    if (saw_hello_ && ev.step == MsgType::hello)
        return ordering("second hello in one session");

    for (std::uint64_t h : ev.handles) {
        if (!live_.count(h))
            return ProtocolViolation{ProtocolViolation::Kind::unknown_handle, at,
                                     std::string(step_name(ev.step)) + " on unknown handle " +
                                         std::to_string(h)};
    }

    switch (ev.step) {
        case MsgType::hello: saw_hello_ = true; break;
        case MsgType::quit: saw_quit_ = true; break;
        case MsgType::free_buffer: live_.erase(ev.handles.front()); break;
        default: break;
    }
    ++index_;
    return std::nullopt;
}

void SequenceValidator::on_alloc_granted(std::uint64_t handle) { live_.insert(handle); }

std::optional<ProtocolViolation> validate_sequence(const std::vector<SeqEvent>& history) {
    SequenceValidator v;
    for (const SeqEvent& ev : history) {
        if (auto violation = v.check(ev)) return violation;
        if (ev.step == MsgType::alloc_buffer) v.on_alloc_granted(ev.granted);
    }
    return std::nullopt;
}

}  // namespace aaas::proto
