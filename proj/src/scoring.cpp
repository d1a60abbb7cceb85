#include "patchproto/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "patchproto/container.hpp"
#include "patchproto/errors.hpp"

namespace patchproto {

ScoreMap score_grid(const EmbeddingGrid& grid, const MemoryBank& bank, std::size_t k) {
    if (grid.channels() != bank.channels()) {
        throw ValidationError("grid has " + std::to_string(grid.channels()) +
                              " channels, bank has " + std::to_string(bank.channels()));
    }
    ScoreMap map;
    map.height = grid.height();
    map.width = grid.width();
    map.raw.resize(grid.patch_count());
    for (std::size_t p = 0; p < grid.patch_count(); ++p) {
        map.raw[p] = nn_distance(bank, grid.patch(p), k);
    }
    return map;
}

ScoreMap softmax_normalize(ScoreMap map, double temperature) {
    if (!(temperature > 0.0) || !std::isfinite(temperature)) {
        throw ParameterError("softmax temperature must be a positive finite value, got " +
                             std::to_string(temperature));
    }
    if (map.raw.size() != map.size() || map.raw.empty()) {
        throw ValidationError("score map raw scores do not match its dims");
    }
    const double peak = *std::max_element(map.raw.begin(), map.raw.end());
    map.normalized.resize(map.raw.size());
    double total = 0.0;
    for (std::size_t i = 0; i < map.raw.size(); ++i) {
        map.normalized[i] = std::exp((map.raw[i] - peak) / temperature);
        total += map.normalized[i];
    }
    for (double& v : map.normalized) v /= total;
    return map;
}

void write_score_map(const ScoreMap& map, const std::filesystem::path& path) {
    if (!map.has_normalized() || map.raw.size() != map.size()) {
        throw ValidationError("score map must carry raw and normalized scores to be written");
    }
    ContainerHeader header;
    header.magic = kScoreMapMagic;
    header.height = static_cast<std::uint32_t>(map.height);
    header.width = static_cast<std::uint32_t>(map.width);
    header.channels = 2;
    std::vector<float> payload(map.size() * 2);
    for (std::size_t i = 0; i < map.size(); ++i) {
        payload[2 * i] = static_cast<float>(map.raw[i]);
        payload[2 * i + 1] = static_cast<float>(map.normalized[i]);
    }
    write_container(path, header, payload);
}

ScoreMap read_score_map(const std::filesystem::path& path) {
    Container c = read_container(path, kScoreMapMagic);
    if (c.header.channels != 2) {
        throw FormatError("channels: score map must have 2 channels in '" + path.string() + "'");
    }
    ScoreMap map;
    map.height = c.header.height;
    map.width = c.header.width;
    map.raw.resize(map.size());
    map.normalized.resize(map.size());
    for (std::size_t i = 0; i < map.size(); ++i) {
        map.raw[i] = c.payload[2 * i];
        map.normalized[i] = c.payload[2 * i + 1];
    }
    return map;
}

}  // namespace patchproto
