#include "aaas/proto/messages.hpp"

#include <bit>

#include "aaas/common/byteio.hpp"

namespace aaas::proto {

const char* status_name(Status s) {
    switch (s) {
        case Status::ok: return "OK";
        case Status::unknown_kernel: return "UNKNOWN_KERNEL";
        case Status::out_of_device_memory: return "OUT_OF_DEVICE_MEMORY";
        case Status::bad_handle: return "BAD_HANDLE";
        case Status::protocol_error: return "PROTOCOL_ERROR";
        case Status::kernel_failure: return "KERNEL_FAILURE";
        case Status::range_error: return "RANGE_ERROR";
    }
    return "UNKNOWN_STATUS";
}

LaunchArg LaunchArg::scalar(double v) {
    return {ArgTag::scalar_f64, std::bit_cast<std::uint64_t>(v)};
}

double LaunchArg::as_f64() const { return std::bit_cast<double>(value); }

MsgType command_type(const Command& cmd) {
    return std::visit(
        [](const auto& c) -> MsgType {
            using T = std::decay_t<decltype(c)>;
            if constexpr (std::is_same_v<T, Hello>) return MsgType::hello;
            else if constexpr (std::is_same_v<T, AllocBuffer>) return MsgType::alloc_buffer;
            else if constexpr (std::is_same_v<T, TransferToDevice>)
                return MsgType::transfer_to_device;
            else if constexpr (std::is_same_v<T, TransferToHost>) return MsgType::transfer_to_host;
            else if constexpr (std::is_same_v<T, LaunchKernel>) return MsgType::launch_kernel;
            else if constexpr (std::is_same_v<T, FreeBuffer>) return MsgType::free_buffer;
            else return MsgType::quit;
        },
        cmd);
}

namespace {

bool valid_msg_type(std::uint16_t t) { return t >= 1 && t <= 7; }

void encode_command_payload(std::vector<std::uint8_t>& out, const Command& cmd) {
    std::visit(
        [&out](const auto& c) {
            using T = std::decay_t<decltype(c)>;
            if constexpr (std::is_same_v<T, Hello>) {
                put_string(out, c.kernel_name);
                put_u32le(out, c.client_version);
            } else if constexpr (std::is_same_v<T, AllocBuffer>) {
                put_u64le(out, c.size);
            } else if constexpr (std::is_same_v<T, TransferToDevice>) {
                put_u64le(out, c.handle);
                put_u64le(out, c.offset);
                put_bytes(out, c.data);
            } else if constexpr (std::is_same_v<T, TransferToHost>) {
                put_u64le(out, c.handle);
                put_u64le(out, c.offset);
                put_u64le(out, c.length);
            } else if constexpr (std::is_same_v<T, LaunchKernel>) {
                put_string(out, c.kernel_name);
                put_u32le(out, c.lanes);
                put_u32le(out, c.chunk_size);
                put_u32le(out, static_cast<std::uint32_t>(c.args.size()));
                for (const LaunchArg& a : c.args) {
                    put_u8(out, static_cast<std::uint8_t>(a.tag));
                    put_u64le(out, a.value);
                }
            } else if constexpr (std::is_same_v<T, FreeBuffer>) {
                put_u64le(out, c.handle);
            } else {
                static_assert(std::is_same_v<T, Quit>);
            }
        },
        cmd);
}

void encode_response_payload(std::vector<std::uint8_t>& out, const Response& resp) {
    put_u32le(out, static_cast<std::uint32_t>(resp.status));
    if (resp.status != Status::ok) return;
    std::visit(
        [&out](const auto& b) {
            using T = std::decay_t<decltype(b)>;
            if constexpr (std::is_same_v<T, HelloAck>) {
                put_u32le(out, b.device_id);
                put_u64le(out, b.memory_cap);
                put_u32le(out, b.max_lanes);
            } else if constexpr (std::is_same_v<T, AllocAck>) {
                put_u64le(out, b.handle);
            } else if constexpr (std::is_same_v<T, HostData>) {
                put_bytes(out, b.data);
            }
        },
        resp.body);
}

std::vector<std::uint8_t> assemble(std::uint16_t msg_type, std::uint64_t request_id,
                                   const std::vector<std::uint8_t>& payload) {
    std::vector<std::uint8_t> frame;
    frame.reserve(kHeaderSize + payload.size());
    frame.insert(frame.end(), kMagic, kMagic + 4);
    put_u16le(frame, kVersion);
    put_u16le(frame, msg_type);
    put_u64le(frame, request_id);
    put_u64le(frame, static_cast<std::uint64_t>(payload.size()));
    put_bytes(frame, payload);
    return frame;
}

[[noreturn]] void malformed(const char* what) {
    throw FrameError(FrameErrorCode::malformed_payload, std::string("malformed payload: ") + what);
}

}  // namespace

std::vector<std::uint8_t> encode_frame(const Command& cmd, std::uint64_t request_id) {
    std::vector<std::uint8_t> payload;
    encode_command_payload(payload, cmd);
    return assemble(static_cast<std::uint16_t>(command_type(cmd)), request_id, payload);
}

std::vector<std::uint8_t> encode_frame(const Response& resp, std::uint64_t request_id) {
    std::vector<std::uint8_t> payload;
    encode_response_payload(payload, resp);
    std::uint16_t t = static_cast<std::uint16_t>(resp.request_type) | kResponseBit;
    return assemble(t, request_id, payload);
}

FrameHeader decode_header(std::span<const std::uint8_t> header24, std::uint64_t max_payload) {
    if (header24.size() < kHeaderSize)
        throw FrameError(FrameErrorCode::truncated_frame,
                         "need 24 header bytes, have " + std::to_string(header24.size()));
    const std::uint8_t* p = header24.data();
    if (!std::equal(kMagic, kMagic + 4, p))
        throw FrameError(FrameErrorCode::bad_magic, "bad frame magic");
    std::uint16_t version = load_u16le(p + 4);
    if (version != kVersion)
        throw FrameError(FrameErrorCode::unsupported_version,
                         "unsupported protocol version " + std::to_string(version));
    std::uint16_t msg_type = load_u16le(p + 6);
    FrameHeader h{};
    h.is_response = (msg_type & kResponseBit) != 0;
    std::uint16_t base = msg_type & static_cast<std::uint16_t>(~kResponseBit);
    if (!valid_msg_type(base))
        throw FrameError(FrameErrorCode::unknown_msg_type,
                         "unknown msg_type " + std::to_string(msg_type));
    h.raw_type = static_cast<MsgType>(base);
    h.request_id = load_u64le(p + 8);
    h.payload_len = load_u64le(p + 16);
    if (h.payload_len > max_payload)
        throw FrameError(FrameErrorCode::oversized_payload,
                         "payload of " + std::to_string(h.payload_len) + " bytes exceeds cap of " +
                             std::to_string(max_payload));
    return h;
}

Command decode_command_payload(MsgType type, std::span<const std::uint8_t> payload) {
    try {
        ByteReader r(payload);
        Command cmd;
        switch (type) {
            case MsgType::hello: {
                Hello c;
                c.kernel_name = r.string("kernel name");
                c.client_version = r.u32("client version");
                cmd = std::move(c);
                break;
            }
            case MsgType::alloc_buffer:
                cmd = AllocBuffer{r.u64("alloc size")};
                break;
            case MsgType::transfer_to_device: {
                TransferToDevice c;
                c.handle = r.u64("handle");
                c.offset = r.u64("offset");
                auto rest = r.rest();
                c.data.assign(rest.begin(), rest.end());
                cmd = std::move(c);
                break;
            }
            case MsgType::transfer_to_host: {
                TransferToHost c;
                c.handle = r.u64("handle");
                c.offset = r.u64("offset");
                c.length = r.u64("length");
                cmd = c;
                break;
            }
            case MsgType::launch_kernel: {
                LaunchKernel c;
                c.kernel_name = r.string("kernel name");
                c.lanes = r.u32("lanes");
                c.chunk_size = r.u32("chunk size");
                std::uint32_t n_args = r.u32("arg count");
                c.args.reserve(n_args);
                for (std::uint32_t i = 0; i < n_args; ++i) {
                    auto tag = r.u8("arg tag");
                    if (tag > 2) malformed("launch arg tag");
                    c.args.push_back({static_cast<ArgTag>(tag), r.u64("arg value")});
                }
                cmd = std::move(c);
                break;
            }
            case MsgType::free_buffer:
                cmd = FreeBuffer{r.u64("handle")};
                break;
            case MsgType::quit:
                cmd = Quit{};
                break;
        }
        if (r.remaining() != 0) malformed("trailing bytes in command payload");
        return cmd;
    } catch (const MalformedBlob& e) {
        malformed(e.what());
    }
}

Response decode_response_payload(MsgType request_type, std::span<const std::uint8_t> payload) {
    try {
        ByteReader r(payload);
        Response resp;
        resp.request_type = request_type;
        std::uint32_t status = r.u32("status");
        if (status > static_cast<std::uint32_t>(Status::range_error)) malformed("status code");
        resp.status = static_cast<Status>(status);
        if (resp.status == Status::ok) {
            switch (request_type) {
                case MsgType::hello: {
                    HelloAck b;
                    b.device_id = r.u32("device id");
                    b.memory_cap = r.u64("memory cap");
                    b.max_lanes = r.u32("max lanes");
                    resp.body = b;
                    break;
                }
                case MsgType::alloc_buffer:
                    resp.body = AllocAck{r.u64("handle")};
                    break;
                case MsgType::transfer_to_host: {
                    auto rest = r.rest();
                    resp.body = HostData{{rest.begin(), rest.end()}};
                    break;
                }
                default:
                    break;  // empty body
            }
        }
        if (r.remaining() != 0) malformed("trailing bytes in response payload");
        return resp;
    } catch (const MalformedBlob& e) {
        malformed(e.what());
    }
}

DecodedFrame decode_frame(std::span<const std::uint8_t> bytes, std::uint64_t max_payload) {
    FrameHeader h = decode_header(bytes, max_payload);
    if (bytes.size() < kHeaderSize + h.payload_len)
        throw FrameError(FrameErrorCode::truncated_frame,
                         "frame needs " + std::to_string(kHeaderSize + h.payload_len) +
                             " bytes, have " + std::to_string(bytes.size()));
    auto payload = bytes.subspan(kHeaderSize, h.payload_len);

    DecodedFrame out;
    out.request_id = h.request_id;
    out.consumed = kHeaderSize + static_cast<std::size_t>(h.payload_len);
    if (h.is_response)
        out.message = decode_response_payload(h.raw_type, payload);
    else
        out.message = decode_command_payload(h.raw_type, payload);
    return out;
}

}  // namespace aaas::proto
