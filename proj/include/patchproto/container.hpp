#pragma once

// Binary tensor container shared by embedding (PPEB), memory bank (PPMB) and
// score map (PPSM) files.
//
// Layout, all integers little-endian:
//   0  magic[4]
//   4  format_version u32 (= 1)
//   8  height u32
//  12  width u32
//  16  channels u32
//  20  reserved u32 (= 0; PPMB: source_count)
//  24  extension[8]  (zero; PPMB: coreset_fraction f64 LE)
//  32  payload: height*width*channels f32 LE, row-major (h, w, c)

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

namespace patchproto {

inline constexpr std::uint32_t kContainerVersion = 1;
inline constexpr std::size_t kContainerHeaderSize = 32;

using Magic = std::array<char, 4>;

inline constexpr Magic kEmbeddingMagic{'P', 'P', 'E', 'B'};
inline constexpr Magic kBankMagic{'P', 'P', 'M', 'B'};
inline constexpr Magic kScoreMapMagic{'P', 'P', 'S', 'M'};

struct ContainerHeader {
    Magic magic{};
    std::uint32_t version = kContainerVersion;
    std::uint32_t height = 0;
    std::uint32_t width = 0;
    std::uint32_t channels = 0;
    std::uint32_t reserved = 0;
    std::array<std::uint8_t, 8> extension{};

    std::uint64_t element_count() const {
        return std::uint64_t{height} * width * channels;
    }
};

struct Container {
    ContainerHeader header;
    std::vector<float> payload;
};

std::array<std::uint8_t, kContainerHeaderSize> encode_header(const ContainerHeader& header);
ContainerHeader decode_header(std::span<const std::uint8_t, kContainerHeaderSize> bytes);

// Writes through a temporary sibling file and renames, so a failed write never
// leaves a partial file at `path`.
void write_container(const std::filesystem::path& path, const ContainerHeader& header,
                     std::span<const float> payload);

// Validates magic, version, reserved word (except PPMB) and payload length.
Container read_container(const std::filesystem::path& path, const Magic& expected);

ContainerHeader read_container_header(const std::filesystem::path& path, const Magic& expected);

std::string_view magic_view(const Magic& magic);

}  // namespace patchproto
