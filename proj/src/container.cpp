#include "patchproto/container.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <string>
#include <system_error>

#include "patchproto/errors.hpp"

namespace patchproto {
namespace {

void put_u32(std::uint8_t* out, std::uint32_t v) {
    out[0] = static_cast<std::uint8_t>(v);
    out[1] = static_cast<std::uint8_t>(v >> 8);
    out[2] = static_cast<std::uint8_t>(v >> 16);
    out[3] = static_cast<std::uint8_t>(v >> 24);
}

std::uint32_t get_u32(const std::uint8_t* in) {
    return std::uint32_t{in[0]} | (std::uint32_t{in[1]} << 8) | (std::uint32_t{in[2]} << 16) |
           (std::uint32_t{in[3]} << 24);
}

std::string describe(const std::filesystem::path& path) {
    return "'" + path.string() + "'";
}

ContainerHeader parse_and_check(std::span<const std::uint8_t, kContainerHeaderSize> bytes,
                                const Magic& expected, const std::filesystem::path& path) {
    ContainerHeader header = decode_header(bytes);
    if (header.magic != expected) {
        throw FormatError("magic: expected '" + std::string(magic_view(expected)) + "' in " +
                          describe(path));
    }
    if (header.version != kContainerVersion) {
        throw FormatError("format_version: unsupported value " + std::to_string(header.version) +
                          " in " + describe(path));
    }
    // PPMB stores its source count in the reserved word.
    if (expected != kBankMagic && header.reserved != 0) {
        throw FormatError("reserved: must be 0 in " + describe(path));
    }
    return header;
}

}  // namespace

std::string_view magic_view(const Magic& magic) {
    return {magic.data(), magic.size()};
}

std::array<std::uint8_t, kContainerHeaderSize> encode_header(const ContainerHeader& header) {
    std::array<std::uint8_t, kContainerHeaderSize> out{};
    std::memcpy(out.data(), header.magic.data(), 4);
    put_u32(out.data() + 4, header.version);
    put_u32(out.data() + 8, header.height);
    put_u32(out.data() + 12, header.width);
    put_u32(out.data() + 16, header.channels);
    put_u32(out.data() + 20, header.reserved);
    std::memcpy(out.data() + 24, header.extension.data(), header.extension.size());
    return out;
}

ContainerHeader decode_header(std::span<const std::uint8_t, kContainerHeaderSize> bytes) {
    ContainerHeader h;
    std::memcpy(h.magic.data(), bytes.data(), 4);
    h.version = get_u32(bytes.data() + 4);
    h.height = get_u32(bytes.data() + 8);
    h.width = get_u32(bytes.data() + 12);
    h.channels = get_u32(bytes.data() + 16);
    h.reserved = get_u32(bytes.data() + 20);
    std::memcpy(h.extension.data(), bytes.data() + 24, h.extension.size());
    return h;
}

void write_container(const std::filesystem::path& path, const ContainerHeader& header,
                     std::span<const float> payload) {
    if (payload.size() != header.element_count()) {
        throw ValidationError("payload length " + std::to_string(payload.size()) +
                              " does not match header dims for " + describe(path));
    }
    const auto head = encode_header(header);

    std::vector<std::uint8_t> body(payload.size() * 4);
    for (std::size_t i = 0; i < payload.size(); ++i) {
        put_u32(body.data() + 4 * i, std::bit_cast<std::uint32_t>(payload[i]));
    }

    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw IoError("cannot open " + describe(tmp) + " for writing");
        }
        out.write(reinterpret_cast<const char*>(head.data()), static_cast<std::streamsize>(head.size()));
        out.write(reinterpret_cast<const char*>(body.data()), static_cast<std::streamsize>(body.size()));
        out.flush();
        if (!out) {
            std::error_code ignored;
            std::filesystem::remove(tmp, ignored);
            throw IoError("write failed for " + describe(path));
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::error_code ignored;
        std::filesystem::remove(tmp, ignored);
        throw IoError("cannot move " + describe(tmp) + " to " + describe(path) + ": " + ec.message());
    }
}

ContainerHeader read_container_header(const std::filesystem::path& path, const Magic& expected) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open " + describe(path));
    }
    std::array<std::uint8_t, kContainerHeaderSize> head{};
    in.read(reinterpret_cast<char*>(head.data()), static_cast<std::streamsize>(head.size()));
    if (in.gcount() != static_cast<std::streamsize>(head.size())) {
        throw FormatError("header: truncated (" + std::to_string(in.gcount()) + " of 32 bytes) in " +
                          describe(path));
    }
    return parse_and_check(head, expected, path);
}

Container read_container(const std::filesystem::path& path, const Magic& expected) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) {
        throw IoError("cannot open " + describe(path));
    }
    const auto file_size = static_cast<std::uint64_t>(in.tellg());
    in.seekg(0);

    std::array<std::uint8_t, kContainerHeaderSize> head{};
    in.read(reinterpret_cast<char*>(head.data()), static_cast<std::streamsize>(head.size()));
    if (in.gcount() != static_cast<std::streamsize>(head.size())) {
        throw FormatError("header: truncated (" + std::to_string(in.gcount()) + " of 32 bytes) in " +
                          describe(path));
    }
    Container result;
    result.header = parse_and_check(head, expected, path);

    const std::uint64_t count = result.header.element_count();
    const std::uint64_t expected_size = kContainerHeaderSize + count * 4;
    if (file_size < expected_size) {
        throw FormatError("payload: declared dims " + std::to_string(result.header.height) + "x" +
                          std::to_string(result.header.width) + "x" +
                          std::to_string(result.header.channels) + " need " +
                          std::to_string(count * 4) + " bytes, file has " +
                          std::to_string(file_size - kContainerHeaderSize) + " in " + describe(path));
    }
    if (file_size > expected_size) {
        throw FormatError("payload: " + std::to_string(file_size - expected_size) +
                          " trailing bytes after declared dims in " + describe(path));
    }

    std::vector<std::uint8_t> body(count * 4);
    in.read(reinterpret_cast<char*>(body.data()), static_cast<std::streamsize>(body.size()));
    if (static_cast<std::uint64_t>(in.gcount()) != body.size()) {
        throw IoError("short read on " + describe(path));
    }
    result.payload.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
        result.payload[i] = std::bit_cast<float>(get_u32(body.data() + 4 * i));
    }
    return result;
}

}  // namespace patchproto
