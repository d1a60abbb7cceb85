#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "oracles.hpp"
#include "patchproto/classifier.hpp"
#include "patchproto/errors.hpp"

using namespace patchproto;

namespace {

ScoredSelection selection(std::vector<std::vector<float>> vectors, std::vector<double> weights = {}) {
    ScoredSelection s;
    s.source_dims = {1, vectors.size(), vectors.front().size()};
    for (std::size_t i = 0; i < vectors.size(); ++i) {
        s.entries.push_back({{0, std::uint32_t(i)}, vectors[i], weights.empty() ? 1.0 : weights[i]});
    }
    return s;
}

std::vector<float> rand_vec(std::mt19937& rng, std::size_t d) {
    std::normal_distribution<float> g;
    std::vector<float> v(d);
    for (auto& x : v) x = g(rng);
    return v;
}

std::vector<double> widen(const std::vector<float>& v) { return {v.begin(), v.end()}; }

double via_oracle(const ScoredSelection& q, const ClassPrototype& proto) {
    oracle::WeightedSet ws;
    for (const auto& e : q.entries) {
        ws.vectors.push_back(widen(e.embedding));
        ws.weights.push_back(e.weight);
    }
    std::vector<std::vector<std::vector<double>>> sets;
    for (const auto& s : proto.support_sets) {
        sets.emplace_back();
        for (const auto& e : s.entries) sets.back().push_back(widen(e.embedding));
    }
    return oracle::class_distance_oracle(ws, sets);
}

ScoredSelection random_selection(std::mt19937& rng, std::size_t d, std::size_t max_entries) {
    std::uniform_int_distribution<std::size_t> count(1, max_entries);
    std::uniform_real_distribution<double> w(0.01, 1.0);
    const std::size_t n = count(rng);
    std::vector<std::vector<float>> vs;
    std::vector<double> ws;
    for (std::size_t i = 0; i < n; ++i) {
        vs.push_back(rand_vec(rng, d));
        ws.push_back(w(rng));
    }
    return selection(vs, ws);
}

}  // namespace

TEST_CASE("build_prototypes groups by class and keeps sets apart") {
    std::vector<LabeledSelection> support{
        {selection({{1, 0}}), 2}, {selection({{0, 1}}), 0}, {selection({{1, 1}}), 1}};
    auto protos = build_prototypes(support);
    REQUIRE(protos.size() == 3);
    CHECK(protos[0].class_id == 0);
    CHECK(protos[2].class_id == 2);
    for (const auto& p : protos) CHECK(p.support_sets.size() == 1);

    std::vector<LabeledSelection> five_shot;
    for (int c = 0; c < 2; ++c)
        for (int k = 0; k < 5; ++k) five_shot.push_back({selection({{float(c), float(k)}}), c});
    protos = build_prototypes(five_shot);
    REQUIRE(protos.size() == 2);
    CHECK(protos[1].support_sets.size() == 5);
    CHECK(protos[1].support_sets[3].entries[0].embedding == std::vector<float>{1, 3});

    std::mt19937 rng(1);
    std::vector<LabeledSelection> ragged;
    for (std::size_t n : {3u, 17u, 32u}) {
        std::vector<std::vector<float>> vs;
        for (std::size_t i = 0; i < n; ++i) vs.push_back(rand_vec(rng, 4));
        ragged.push_back({selection(vs), 0});
    }
    protos = build_prototypes(ragged);
    REQUIRE(protos.size() == 1);
    CHECK(protos[0].support_sets[0].size() == 3);
    CHECK(protos[0].support_sets[1].size() == 17);
    CHECK(protos[0].support_sets[2].size() == 32);

    const std::vector<int> declared{0, 1};
    CHECK_THROWS_AS(build_prototypes(ragged, declared), ValidationError);
}

TEST_CASE("class_distance hand cases") {
    // Identical directions: distance 0.
    const auto q = selection({{1, 0, 0}, {0, 2, 0}}, {0.7, 0.3});
    ClassPrototype same{0, {selection({{3, 0, 0}, {0, 1, 0}}), selection({{0, 5, 0}, {2, 0, 0}})}};
    CHECK(class_distance(q, same) == doctest::Approx(0.0).epsilon(1e-15));

    // Orthogonal single embeddings: distance 1.
    ClassPrototype ortho{1, {selection({{0, 0, 1}})}};
    CHECK(class_distance(selection({{1, 0, 0}}, {1.0}), ortho) == doctest::Approx(1.0));

    // Zero vector counts as cos = 0.
    CHECK(class_distance(selection({{0, 0, 0}}, {0.5}), ortho) == doctest::Approx(0.5));

    CHECK_THROWS_AS(class_distance(selection({{1, 0}}), ortho), ValidationError);
}

TEST_CASE("class_distance matches the triple-loop oracle on a handcrafted instance") {
    const auto q = selection({{1, 2, 0}, {0, 1, -1}}, {0.6, 0.4});
    ClassPrototype proto{0, {selection({{1, 0, 0}, {0, 0, 1}}), selection({{1, 1, 1}, {-1, 2, 0}, {0, 3, -2}})}};
    const double expected = via_oracle(q, proto);
    CHECK(class_distance(q, proto) == doctest::Approx(expected).epsilon(1e-12));

    NearestProvenance prov;
    class_distance(q, proto, {}, &prov);
    REQUIRE(prov.size() == 2);
    REQUIRE(prov[0].size() == 2);
    CHECK(prov[0][0] == 0);  // (1,2,0) is closest to (1,0,0) in set 0
    CHECK(prov[0][1] == 0);  // and to (1,1,1) in set 1
    CHECK(prov[1][1] == 2);  // (0,1,-1) closest to (0,3,-2)
}

TEST_CASE("property: oracle equivalence, bounds, scaling and permutation invariance") {
    std::mt19937 rng(31);
    std::uniform_int_distribution<std::size_t> dim(1, 8), sets(1, 3);
    std::uniform_real_distribution<double> scale(0.01, 100.0);
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t d = dim(rng);
        const auto q = random_selection(rng, d, 5);
        ClassPrototype proto{0, {}};
        const std::size_t ns = sets(rng);
        for (std::size_t n = 0; n < ns; ++n) proto.support_sets.push_back(random_selection(rng, d, 5));

        const double dist = class_distance(q, proto);
        const double expected = via_oracle(q, proto);
        REQUIRE(std::abs(dist - expected) <= 1e-9 * std::max(1.0, std::abs(expected)));
        REQUIRE(dist >= 0.0);
        REQUIRE(dist <= 2.0 * q.total_weight() + 1e-12);

        const double s = scale(rng);
        auto qs = q;
        auto ps = proto;
        for (auto& e : qs.entries)
            for (auto& x : e.embedding) x = float(x * s);
        for (auto& set : ps.support_sets)
            for (auto& e : set.entries)
                for (auto& x : e.embedding) x = float(x * s);
        REQUIRE(class_distance(qs, ps) == doctest::Approx(dist).epsilon(1e-6));

        auto qp = q;
        auto pp = proto;
        std::shuffle(qp.entries.begin(), qp.entries.end(), rng);
        std::shuffle(pp.support_sets.begin(), pp.support_sets.end(), rng);
        for (auto& set : pp.support_sets) std::shuffle(set.entries.begin(), set.entries.end(), rng);
        REQUIRE(class_distance(qp, pp) == doctest::Approx(dist).epsilon(1e-12));
    }
}

TEST_CASE("renormalized weights rescale every class distance equally") {
    std::mt19937 rng(4);
    const auto q = random_selection(rng, 6, 5);
    std::vector<ClassPrototype> protos;
    for (int c = 0; c < 4; ++c) protos.push_back({c, {random_selection(rng, 6, 5), random_selection(rng, 6, 5)}});
    const auto plain = classify(q, protos);
    const auto renorm = classify(q, protos, {.renormalize_weights = true});
    CHECK(plain.predicted_class == renorm.predicted_class);
    for (const auto& [id, d] : plain.distances) {
        CHECK(renorm.distances.at(id) == doctest::Approx(d / q.total_weight()).epsilon(1e-12));
    }
}

TEST_CASE("classify argmin and tie rule") {
    const auto q = selection({{1, 0}}, {1.0});
    std::vector<ClassPrototype> one{{5, {selection({{0, 1}})}}};
    CHECK(classify(q, one).predicted_class == 5);

    std::vector<ClassPrototype> two{{1, {selection({{0, 1}})}}, {2, {selection({{2, 0}})}}};
    const auto r = classify(q, two);
    CHECK(r.predicted_class == 2);
    CHECK(r.distances.at(1) == doctest::Approx(1.0));
    CHECK(r.distances.at(2) == doctest::Approx(0.0));
    CHECK(r.provenance.at(1).size() == 1);

    std::vector<ClassPrototype> tied{{4, {selection({{0, 1}})}}, {3, {selection({{0, -1}, {0, 1}})}}};
    CHECK(classify(q, tied).predicted_class == 3);

    CHECK_THROWS_AS(classify(q, std::vector<ClassPrototype>{}), ValidationError);
}

TEST_CASE("property: argmin is invariant under a shared positive scale") {
    std::mt19937 rng(12);
    for (int trial = 0; trial < 100; ++trial) {
        const auto q = random_selection(rng, 5, 4);
        std::vector<ClassPrototype> protos;
        for (int c = 0; c < 3; ++c) protos.push_back({c, {random_selection(rng, 5, 4)}});
        const auto before = classify(q, protos);
        auto qs = q;
        for (auto& e : qs.entries)
            for (auto& x : e.embedding) x *= 4.0f;
        for (auto& p : protos)
            for (auto& set : p.support_sets)
                for (auto& e : set.entries)
                    for (auto& x : e.embedding) x *= 4.0f;
        const auto after = classify(qs, protos);
        CHECK(after.predicted_class == before.predicted_class);
        for (const auto& [id, d] : before.distances) CHECK(after.distances.at(id) == doctest::Approx(d).epsilon(1e-9));
    }
}

TEST_CASE("baseline prototype network") {
    const EmbeddingGrid a(1, 2, 2, {1, 0, 3, 0});
    const EmbeddingGrid b(1, 2, 2, {0, 1, 0, 5});
    std::vector<LabeledGrid> support{{&a, 0}, {&b, 1}};
    auto r = baseline_proto_classify(support, b);
    CHECK(r.predicted_class == 1);
    CHECK(r.distances.at(1) == 0.0);

    const EmbeddingGrid near_a(1, 2, 2, {2, 0.5f, 2, 0});
    CHECK(baseline_proto_classify(support, near_a).predicted_class == 0);

    const EmbeddingGrid other(2, 1, 2, {0, 0, 0, 0});
    CHECK_THROWS_AS(baseline_proto_classify(support, other), ValidationError);
    CHECK(mean_pool(a) == std::vector<double>{2.0, 0.0});
}

TEST_CASE("baseline matches an independent mean/argmin oracle") {
    std::mt19937 rng(21);
    std::normal_distribution<float> g;
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<EmbeddingGrid> grids;
        std::vector<std::pair<std::vector<std::vector<double>>, int>> oracle_support;
        auto make = [&] {
            std::vector<float> data(2 * 2 * 3);
            for (auto& v : data) v = g(rng);
            return EmbeddingGrid(2, 2, 3, data);
        };
        auto patches = [](const EmbeddingGrid& e) {
            std::vector<std::vector<double>> ps;
            for (std::size_t p = 0; p < e.patch_count(); ++p) ps.emplace_back(e.patch(p).begin(), e.patch(p).end());
            return ps;
        };
        for (int c = 0; c < 3; ++c)
            for (int k = 0; k < 2; ++k) grids.push_back(make());
        std::vector<LabeledGrid> support;
        for (std::size_t i = 0; i < grids.size(); ++i) {
            support.push_back({&grids[i], int(i / 2)});
            oracle_support.push_back({patches(grids[i]), int(i / 2)});
        }
        const auto query = make();
        CHECK(baseline_proto_classify(support, query).predicted_class ==
              oracle::baseline_predict(oracle_support, patches(query)));
    }
}
