#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "aaas/common/errors.hpp"

// Binary wire protocol. Frame = 24-byte header + payload, all little-endian:
//   magic "AAAS" (4) | version u16 = 1 | msg_type u16 | request_id u64 |
//   payload_len u64
// Commands use msg_type 1..7; each response reuses its request's type with
// bit 0x80 set. Full byte layouts are documented in docs/protocol.md.

namespace aaas::proto {

constexpr std::uint8_t kMagic[4] = {'A', 'A', 'A', 'S'};
constexpr std::uint16_t kVersion = 1;
constexpr std::size_t kHeaderSize = 24;
constexpr std::uint64_t kDefaultMaxPayload = 1ull << 30;  // 1 GiB

enum class MsgType : std::uint16_t {
    hello = 1,
    alloc_buffer = 2,
    transfer_to_device = 3,
    transfer_to_host = 4,
    launch_kernel = 5,
    free_buffer = 6,
    quit = 7,
};

constexpr std::uint16_t kResponseBit = 0x80;

enum class Status : std::uint32_t {
    ok = 0,
    unknown_kernel = 1,
    out_of_device_memory = 2,
    bad_handle = 3,
    protocol_error = 4,
    kernel_failure = 5,
    range_error = 6,
};

const char* status_name(Status s);

// ---- commands -------------------------------------------------------------

struct Hello {
    std::string kernel_name;
    std::uint32_t client_version = 1;
    bool operator==(const Hello&) const = default;
};

struct AllocBuffer {
    std::uint64_t size = 0;
    bool operator==(const AllocBuffer&) const = default;
};

struct TransferToDevice {
    std::uint64_t handle = 0;
    std::uint64_t offset = 0;
    std::vector<std::uint8_t> data;
    bool operator==(const TransferToDevice&) const = default;
};

struct TransferToHost {
    std::uint64_t handle = 0;
    std::uint64_t offset = 0;
    std::uint64_t length = 0;
    bool operator==(const TransferToHost&) const = default;
};

enum class ArgTag : std::uint8_t { scalar_u64 = 0, scalar_f64 = 1, buffer_handle = 2 };

// One launch argument: a tag plus an 8-byte value (u64, IEEE f64 bits, or a
// buffer handle).
struct LaunchArg {
    ArgTag tag = ArgTag::scalar_u64;
    std::uint64_t value = 0;

    static LaunchArg scalar(std::uint64_t v) { return {ArgTag::scalar_u64, v}; }
    static LaunchArg scalar(double v);
    static LaunchArg buffer(std::uint64_t handle) { return {ArgTag::buffer_handle, handle}; }
    double as_f64() const;

    bool operator==(const LaunchArg&) const = default;
};

struct LaunchKernel {
    std::string kernel_name;
    std::uint32_t lanes = 1;
    std::uint32_t chunk_size = 1;
    std::vector<LaunchArg> args;
    bool operator==(const LaunchKernel&) const = default;
};

struct FreeBuffer {
    std::uint64_t handle = 0;
    bool operator==(const FreeBuffer&) const = default;
};

struct Quit {
    bool operator==(const Quit&) const = default;
};

using Command = std::variant<Hello, AllocBuffer, TransferToDevice, TransferToHost, LaunchKernel,
                             FreeBuffer, Quit>;

MsgType command_type(const Command& cmd);

// ---- responses ------------------------------------------------------------

struct HelloAck {
    std::uint32_t device_id = 0;
    std::uint64_t memory_cap = 0;
    std::uint32_t max_lanes = 0;
    bool operator==(const HelloAck&) const = default;
};

struct AllocAck {
    std::uint64_t handle = 0;
    bool operator==(const AllocAck&) const = default;
};

struct HostData {
    std::vector<std::uint8_t> data;
    bool operator==(const HostData&) const = default;
};

// One response per request, same request_id. A non-ok status carries no body.
struct Response {
    MsgType request_type = MsgType::hello;
    Status status = Status::ok;
    std::variant<std::monostate, HelloAck, AllocAck, HostData> body;

    bool operator==(const Response&) const = default;
};

using Message = std::variant<Command, Response>;

// ---- frame codec ----------------------------------------------------------

enum class FrameErrorCode {
    bad_magic,
    unsupported_version,
    oversized_payload,
    truncated_frame,
    unknown_msg_type,
    malformed_payload,
};

class FrameError : public Error {
public:
    FrameError(FrameErrorCode code, const std::string& what) : Error(what), code(code) {}
    FrameErrorCode code;
};

std::vector<std::uint8_t> encode_frame(const Command& cmd, std::uint64_t request_id);
std::vector<std::uint8_t> encode_frame(const Response& resp, std::uint64_t request_id);

struct DecodedFrame {
    Message message;
    std::uint64_t request_id = 0;
    std::size_t consumed = 0;  // always 24 + payload_len
};

// Decodes one frame from the front of `bytes`; never reads past
// 24 + payload_len. Throws FrameError with a distinguishable code.
DecodedFrame decode_frame(std::span<const std::uint8_t> bytes,
                          std::uint64_t max_payload = kDefaultMaxPayload);

// Header-only parse, for streaming readers that fetch the payload separately.
struct FrameHeader {
    MsgType raw_type;       // low 7 bits
    bool is_response;
    std::uint64_t request_id;
    std::uint64_t payload_len;
};

FrameHeader decode_header(std::span<const std::uint8_t> header24,
                          std::uint64_t max_payload = kDefaultMaxPayload);

// Payload-only decoders used by the streaming path.
Command decode_command_payload(MsgType type, std::span<const std::uint8_t> payload);
Response decode_response_payload(MsgType request_type, std::span<const std::uint8_t> payload);

}  // namespace aaas::proto
