#include "patchproto/memory_bank.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <string>

#include "patchproto/container.hpp"
#include "patchproto/distance.hpp"
#include "patchproto/errors.hpp"
#include "patchproto/parallel.hpp"

namespace patchproto {
namespace {

// Below this many distance evaluations per greedy step, threads cost more
// than they save.
constexpr std::size_t kParallelWorkThreshold = 1u << 18;

void check_fraction(double fraction) {
    if (!(fraction > 0.0) || fraction > 1.0) {
        throw ParameterError("coreset fraction must be in (0, 1], got " + std::to_string(fraction));
    }
}

}  // namespace

MemoryBank::MemoryBank(std::size_t channels, std::vector<float> data, std::size_t source_count,
                       double coreset_fraction)
    : channels_(channels),
      data_(std::move(data)),
      source_count_(source_count),
      coreset_fraction_(coreset_fraction) {
    if (channels_ == 0) throw ValidationError("memory bank channels must be >= 1");
    if (data_.empty()) throw ValidationError("memory bank is empty");
    if (data_.size() % channels_ != 0) {
        throw ValidationError("memory bank payload is not a multiple of channels");
    }
    check_fraction(coreset_fraction_);
    if (size() > source_count_) {
        throw ValidationError("memory bank holds more vectors than its source count");
    }
    for (float v : data_) {
        if (!std::isfinite(v)) throw ValidationError("memory bank contains a non-finite value");
    }
}

void BankBuilder::add(const EmbeddingGrid& grid) {
    grid.check_finite();
    if (channels_ == 0) {
        channels_ = grid.channels();
    } else if (grid.channels() != channels_) {
        throw ValidationError("bank build: grid has " + std::to_string(grid.channels()) +
                              " channels, expected " + std::to_string(channels_));
    }
    data_.insert(data_.end(), grid.data().begin(), grid.data().end());
}

MemoryBank BankBuilder::finish() && {
    if (channels_ == 0) throw ValidationError("bank build: no normal grids supplied");
    const std::size_t n = data_.size() / channels_;
    return MemoryBank(channels_, std::move(data_), n, 1.0);
}

MemoryBank build_bank(std::span<const EmbeddingGrid> normals) {
    BankBuilder builder;
    for (const auto& g : normals) builder.add(g);
    return std::move(builder).finish();
}

std::size_t coreset_size(std::size_t n, double fraction) {
    check_fraction(fraction);
    const double exact = fraction * static_cast<double>(n);
    const double k = std::ceil(exact - 1e-9 * std::max(1.0, exact));
    return std::clamp<std::size_t>(static_cast<std::size_t>(k), 1, n);
}

std::size_t greedy_start_index(const MemoryBank& bank) {
    std::size_t best = 0;
    double best_norm = -1.0;
    for (std::size_t i = 0; i < bank.size(); ++i) {
        const double norm = dot(bank.vector(i), bank.vector(i));
        if (norm > best_norm) {
            best_norm = norm;
            best = i;
        }
    }
    return best;
}

std::vector<std::size_t> greedy_coreset_indices(const MemoryBank& bank, std::size_t target,
                                                unsigned workers) {
    const std::size_t n = bank.size();
    if (target == 0 || target > n) {
        throw ParameterError("coreset target " + std::to_string(target) + " outside [1, " +
                             std::to_string(n) + "]");
    }
    std::vector<std::size_t> selected;
    selected.reserve(target);
    std::vector<bool> taken(n, false);
    std::vector<double> min_dist(n, std::numeric_limits<double>::infinity());

    const bool threaded = workers > 1 && n * bank.channels() >= kParallelWorkThreshold;
    const std::size_t chunk = 4096;
    const std::size_t chunks = (n + chunk - 1) / chunk;

    std::size_t current = greedy_start_index(bank);
    while (true) {
        selected.push_back(current);
        taken[current] = true;
        if (selected.size() == target) break;

        const auto centre = bank.vector(current);
        auto update = [&](std::size_t c) {
            const std::size_t end = std::min(n, (c + 1) * chunk);
            for (std::size_t i = c * chunk; i < end; ++i) {
                if (taken[i]) continue;
                const double d = squared_l2(bank.vector(i), centre);
                if (d < min_dist[i]) min_dist[i] = d;
            }
        };
        if (threaded) {
            parallel_for(chunks, workers, update);
        } else {
            for (std::size_t c = 0; c < chunks; ++c) update(c);
        }

        std::size_t next = n;
        double farthest = -1.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (!taken[i] && min_dist[i] > farthest) {
                farthest = min_dist[i];
                next = i;
            }
        }
        current = next;
    }
    return selected;
}

MemoryBank coreset_subsample(const MemoryBank& bank, double fraction, std::uint64_t seed,
                             unsigned workers) {
    check_fraction(fraction);
    if (seed != 0) {
        throw ParameterError("coreset seed is reserved and must be 0");
    }
    if (fraction == 1.0) return bank;

    std::vector<std::size_t> keep =
        greedy_coreset_indices(bank, coreset_size(bank.size(), fraction), workers);
    std::sort(keep.begin(), keep.end());

    std::vector<float> data;
    data.reserve(keep.size() * bank.channels());
    for (std::size_t i : keep) {
        const auto v = bank.vector(i);
        data.insert(data.end(), v.begin(), v.end());
    }
    // Fraction is recorded relative to the original ingested set.
    return MemoryBank(bank.channels(), std::move(data), bank.source_count(),
                      fraction * bank.coreset_fraction());
}

double nn_distance(const MemoryBank& bank, std::span<const float> query, std::size_t k) {
    if (query.size() != bank.channels()) {
        throw ValidationError("query has " + std::to_string(query.size()) +
                              " channels, bank has " + std::to_string(bank.channels()));
    }
    if (k == 0 || k > bank.size()) {
        throw ParameterError("k = " + std::to_string(k) + " outside [1, " +
                             std::to_string(bank.size()) + "]");
    }

    // Ascending buffer of the k smallest squared distances seen so far.
    std::vector<double> best;
    best.reserve(k + 1);
    for (std::size_t i = 0; i < bank.size(); ++i) {
        const double d = squared_l2(query, bank.vector(i));
        if (best.size() == k && d >= best.back()) continue;
        best.insert(std::upper_bound(best.begin(), best.end(), d), d);
        if (best.size() > k) best.pop_back();
    }

    double sum = 0.0;
    for (double d : best) sum += std::sqrt(d);
    return sum / static_cast<double>(k);
}

void save_bank(const MemoryBank& bank, const std::filesystem::path& path) {
    if (bank.size() > std::numeric_limits<std::uint32_t>::max() ||
        bank.source_count() > std::numeric_limits<std::uint32_t>::max() ||
        bank.channels() > std::numeric_limits<std::uint32_t>::max()) {
        throw ValidationError("memory bank too large for container format");
    }
    ContainerHeader header;
    header.magic = kBankMagic;
    header.height = static_cast<std::uint32_t>(bank.size());
    header.width = 1;
    header.channels = static_cast<std::uint32_t>(bank.channels());

    // Coreset metadata: the reserved word holds source_count, the extension
    // holds coreset_fraction as f64 LE.
    header.reserved = static_cast<std::uint32_t>(bank.source_count());
    const auto frac = std::bit_cast<std::uint64_t>(bank.coreset_fraction());
    for (int b = 0; b < 8; ++b) {
        header.extension[b] = static_cast<std::uint8_t>(frac >> (8 * b));
    }
    write_container(path, header, bank.data());
}

MemoryBank load_bank(const std::filesystem::path& path) {
    Container c = read_container(path, kBankMagic);
    if (c.header.width != 1 || c.header.height == 0 || c.header.channels == 0) {
        throw FormatError("dims: bank file must be n x 1 x C with n, C >= 1 in '" + path.string() + "'");
    }
    const std::uint32_t src = c.header.reserved;
    std::uint64_t frac_bits = 0;
    for (int b = 0; b < 8; ++b) {
        frac_bits |= std::uint64_t{c.header.extension[b]} << (8 * b);
    }
    const double fraction = std::bit_cast<double>(frac_bits);
    if (src < c.header.height || !(fraction > 0.0) || fraction > 1.0) {
        throw FormatError("extension: inconsistent coreset metadata in '" + path.string() + "'");
    }
    try {
        return MemoryBank(c.header.channels, std::move(c.payload), src, fraction);
    } catch (const ValidationError& e) {
        throw FormatError(std::string("payload: ") + e.what() + " in '" + path.string() + "'");
    }
}

}  // namespace patchproto
