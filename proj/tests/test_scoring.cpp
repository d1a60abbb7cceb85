#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "patchproto/errors.hpp"
#include "patchproto/scoring.hpp"
#include "temp_dir.hpp"

using namespace patchproto;

namespace {

ScoreMap raw_map(std::size_t h, std::size_t w, std::vector<double> raw) {
    ScoreMap m;
    m.height = h;
    m.width = w;
    m.raw = std::move(raw);
    return m;
}

}  // namespace

TEST_CASE("patches present in the bank score zero") {
    std::mt19937 rng(1);
    std::normal_distribution<float> g;
    std::vector<float> data(3 * 3 * 5);
    for (auto& v : data) v = g(rng);
    const EmbeddingGrid grid(3, 3, 5, data);
    std::vector<EmbeddingGrid> normals{grid};
    const ScoreMap map = score_grid(grid, build_bank(normals));
    for (double r : map.raw) CHECK(r == 0.0);
    CHECK_FALSE(map.has_normalized());
}

TEST_CASE("1x2 grid against bank {p}") {
    const std::vector<float> p{1, 2}, q{4, 6};
    const EmbeddingGrid grid(1, 2, 2, {p[0], p[1], q[0], q[1]});
    std::vector<EmbeddingGrid> normals{EmbeddingGrid(1, 1, 2, p)};
    const ScoreMap map = score_grid(grid, build_bank(normals));
    CHECK(map.raw[0] == 0.0);
    CHECK(map.raw[1] == doctest::Approx(5.0).epsilon(1e-15));
    CHECK_THROWS_AS(score_grid(EmbeddingGrid(1, 1, 3, {0, 0, 0}), build_bank(normals)), ValidationError);
}

TEST_CASE("score_grid equals per-patch brute force scan") {
    std::mt19937 rng(42);
    std::normal_distribution<float> g;
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<float> bank_data(20 * 6), grid_data(3 * 3 * 6);
        for (auto& v : bank_data) v = g(rng);
        for (auto& v : grid_data) v = g(rng);
        const MemoryBank bank(6, bank_data, 20, 1.0);
        const EmbeddingGrid grid(3, 3, 6, grid_data);
        for (std::size_t k : {1u, 3u}) {
            const ScoreMap map = score_grid(grid, bank, k);
            for (std::size_t p = 0; p < 9; ++p) {
                REQUIRE(map.raw[p] == oracle::linear_scan_nn(bank, grid.patch(p), k));
            }
        }
    }
}

TEST_CASE("softmax closed-form values") {
    auto uniform = softmax_normalize(raw_map(2, 2, {0.3, 0.3, 0.3, 0.3}));
    for (double v : uniform.normalized) CHECK(v == doctest::Approx(0.25).epsilon(1e-15));

    auto single = softmax_normalize(raw_map(1, 1, {17.0}));
    CHECK(single.normalized[0] == 1.0);

    auto two = softmax_normalize(raw_map(1, 2, {0.0, std::log(3.0)}), 1.0);
    CHECK(two.normalized[0] == doctest::Approx(0.25).epsilon(1e-14));
    CHECK(two.normalized[1] == doctest::Approx(0.75).epsilon(1e-14));

    // Temperature 2 on [0, ln 9] is the same distribution.
    auto tempered = softmax_normalize(raw_map(1, 2, {0.0, std::log(9.0)}), 2.0);
    CHECK(tempered.normalized[1] == doctest::Approx(0.75).epsilon(1e-14));

    CHECK_THROWS_AS(softmax_normalize(raw_map(1, 1, {1.0}), 0.0), ParameterError);
    CHECK_THROWS_AS(softmax_normalize(raw_map(1, 1, {1.0}), -1.0), ParameterError);
}

TEST_CASE("property: softmax sums to one, is shift invariant and order preserving") {
    std::mt19937 rng(11);
    std::uniform_real_distribution<double> u(0.0, 10.0), shift(-50.0, 50.0);
    std::uniform_int_distribution<std::size_t> len(1, 900);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = len(rng);
        std::vector<double> raw(n);
        for (auto& v : raw) v = u(rng);
        const double t = trial % 2 ? 1.0 : 0.3;
        const auto a = softmax_normalize(raw_map(1, n, raw), t);
        double sum = 0;
        for (double v : a.normalized) {
            sum += v;
            REQUIRE(v > 0.0);
        }
        REQUIRE(std::abs(sum - 1.0) < 1e-6);

        const double c = shift(rng);
        std::vector<double> shifted = raw;
        for (auto& v : shifted) v += c;
        const auto b = softmax_normalize(raw_map(1, n, shifted), t);
        for (std::size_t i = 0; i < n; ++i) REQUIRE(std::abs(a.normalized[i] - b.normalized[i]) < 1e-9);

        const auto ref = oracle::softmax(raw, t);
        for (std::size_t i = 0; i < n; ++i) REQUIRE(a.normalized[i] == doctest::Approx(ref[i]).epsilon(1e-12));

        for (std::size_t i = 0; i + 1 < n; ++i) {
            if (raw[i] < raw[i + 1]) REQUIRE(a.normalized[i] <= a.normalized[i + 1]);
            if (raw[i] > raw[i + 1]) REQUIRE(a.normalized[i] >= a.normalized[i + 1]);
        }
    }
}

TEST_CASE("score map dump round-trips as f32") {
    testing_support::TempDir dir;
    const auto map = softmax_normalize(raw_map(2, 3, {0.5, 1.5, 0.25, 2.0, 0.0, 1.0}));
    write_score_map(map, dir / "s.ppsm");
    const auto back = read_score_map(dir / "s.ppsm");
    CHECK(back.height == 2);
    CHECK(back.width == 3);
    for (std::size_t i = 0; i < 6; ++i) {
        CHECK(back.raw[i] == double(float(map.raw[i])));
        CHECK(back.normalized[i] == double(float(map.normalized[i])));
    }
    CHECK_THROWS_AS(write_score_map(raw_map(1, 1, {1.0}), dir / "x.ppsm"), ValidationError);
}
