// Copyright (C) 2026 pos-diffusion contributors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <random>
#include <set>

#include "oracles.hpp"
#include "pos/binary_io.hpp"
#include "pos/pool.hpp"
#include "pos/toy.hpp"

using namespace pos;

namespace {

const Shape kShape{2, 1, 2, 2};

std::shared_ptr<NgramEmbedder> ngram() { return std::make_shared<NgramEmbedder>(); }

std::vector<std::pair<std::string, LatentTensor>> numbered(std::size_t n) {
    static const std::vector<std::string> words{"red", "blue", "green", "fast", "slow", "cat", "dog", "bird",
                                                "river", "tree", "city", "car", "moon", "boat", "snow"};
    std::mt19937_64 rng(n);
    std::vector<std::pair<std::string, LatentTensor>> out;
    for (std::size_t i = 0; i < n; ++i) {
        std::string text = words[rng() % words.size()] + " " + words[rng() % words.size()] + " " +
                           words[rng() % words.size()] + " " + std::to_string(i);
        out.emplace_back(text, LatentTensor::gaussian(kShape, i));
    }
    return out;
}

std::vector<std::string> oracle_texts(const Pool& pool, const std::string& prompt, std::size_t k) {
    const auto order = oracle::ranked_indices(pool, pool.embedder().embed(prompt).values());
    std::vector<std::string> out;
    for (std::size_t i = 0; i < k; ++i) out.push_back(pool.entry(order[i]).text);
    return out;
}

}  // namespace

TEST_CASE("single entry pool answers every query") {
    const auto pool = Pool::build({{"a cat sleeps", LatentTensor::gaussian(kShape, 1)}}, ngram());
    CHECK(pool.size() == 1);
    for (const std::string q : {"a cat sleeps", "stock market", "zzz"}) CHECK(pool.retrieve_video(q).id == pool.entry(0).id);
}

TEST_CASE("build assigns distinct ids and validates input") {
    const auto pool = Pool::build(numbered(100), ngram());
    CHECK(pool.size() == 100);
    std::set<std::string> ids;
    for (const auto& e : pool.entries()) ids.insert(e.id);
    CHECK(ids.size() == 100);
    for (const auto& e : pool.entries()) CHECK(e.embedding == pool.embedder().embed(e.text));

    CHECK_THROWS_AS(Pool::build(std::vector<std::pair<std::string, LatentTensor>>{}, ngram()), std::invalid_argument);
    CHECK_THROWS_AS(Pool::build({{"a", LatentTensor(kShape)}, {"b", LatentTensor({3, 1, 2, 2})}}, ngram()),
                    std::invalid_argument);
    std::vector<PoolItem> dup{{"x", "a cat", LatentTensor(kShape)}, {"x", "a dog", LatentTensor(kShape)}};
    CHECK_THROWS_AS(Pool::build(dup, ngram()), std::invalid_argument);
}

TEST_CASE("exact text retrieves its own entry") {
    const auto pool = Pool::build(numbered(50), ngram());
    for (const auto& e : pool.entries()) {
        const auto ranked = pool.rank(e.text, 1);
        CHECK(pool.entry(ranked[0].index).text == e.text);
        CHECK(ranked[0].similarity == doctest::Approx(1.0));
    }
}

TEST_CASE("retrieval matches the exhaustive oracle") {
    const auto pool = Pool::build(numbered(100), ngram());
    for (const std::string q : {"red cat", "slow boat on the river", "snow moon", "green tree city 12", "dog"}) {
        const auto order = oracle::ranked_indices(pool, pool.embedder().embed(q).values());
        CHECK(pool.retrieve_video(q).id == pool.entry(order[0]).id);
        CHECK(pool.retrieve_references(q, 5) == oracle_texts(pool, q, 5));
        CHECK(pool.retrieve_references(q, 100) == oracle_texts(pool, q, 100));
    }
}

TEST_CASE("ties go to the smaller id") {
    std::vector<PoolItem> items{{"b", "a cat sleeps", LatentTensor(kShape, 1.0)},
                                {"a", "a cat sleeps", LatentTensor(kShape, 2.0)},
                                {"c", "a cat sleeps", LatentTensor(kShape, 3.0)},
                                {"d", "a dog barks", LatentTensor(kShape, 4.0)}};
    const auto pool = Pool::build(items, ngram());
    CHECK(pool.retrieve_video("a cat sleeps").id == "a");
    const auto ranked = pool.rank("a cat sleeps", 3);
    CHECK(pool.entry(ranked[0].index).id == "a");
    CHECK(pool.entry(ranked[1].index).id == "b");
    CHECK(pool.entry(ranked[2].index).id == "c");
}

TEST_CASE("k bounds") {
    const auto pool = Pool::build(numbered(10), ngram());
    CHECK(pool.retrieve_references("cat", 0).empty());
    CHECK(pool.retrieve_references("cat", 10).size() == 10);
    CHECK_THROWS_AS(pool.retrieve_references("cat", 11), std::invalid_argument);
}

TEST_CASE("retrieve_video agrees with the top reference") {
    const auto pool = Pool::build(numbered(60), ngram());
    for (const std::string q : {"red", "blue car", "bird tree 3", "fast fast fast"}) {
        CHECK(pool.retrieve_video(q).text == pool.retrieve_references(q, 1).at(0));
    }
}

TEST_CASE("results do not depend on entry order") {
    auto pairs = numbered(40);
    std::vector<PoolItem> items;
    for (std::size_t i = 0; i < pairs.size(); ++i) items.push_back({"id" + std::to_string(100 + i), pairs[i].first, pairs[i].second});
    // Add tied duplicates so the tie rule is exercised under permutation too.
    items.push_back({"id050", pairs[3].first, pairs[3].second});
    items.push_back({"id999", pairs[3].first, pairs[3].second});
    auto shuffled = items;
    std::mt19937_64 rng(8);
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    const auto a = Pool::build(items, ngram());
    const auto b = Pool::build(shuffled, ngram());
    for (const std::string q : {pairs[3].first, std::string("red dog"), std::string("moon 7"), std::string("city car")}) {
        CHECK(a.retrieve_video(q).id == b.retrieve_video(q).id);
        const auto ra = a.rank(q, 10), rb = b.rank(q, 10);
        for (std::size_t i = 0; i < 10; ++i) CHECK(a.entry(ra[i].index).id == b.entry(rb[i].index).id);
    }
    CHECK(a.retrieve_video(pairs[3].first).id == "id050");
}

TEST_CASE("pool directory round trip") {
    testing_support::TempDir dir("pool");
    const auto pool = Pool::build(as_pairs(make_toy_dataset(25, 4)), ngram());
    pool.save(dir.path());
    CHECK(std::filesystem::exists(dir.path() / "manifest.json"));
    const auto back = Pool::load(dir.path(), ngram());
    REQUIRE(back.size() == pool.size());
    CHECK(back.latent_shape() == pool.latent_shape());
    for (std::size_t i = 0; i < pool.size(); ++i) {
        CHECK(back.entry(i).id == pool.entry(i).id);
        CHECK(back.entry(i).text == pool.entry(i).text);
        CHECK(back.entry(i).embedding == pool.entry(i).embedding);
        CHECK(back.entry(i).latent == pool.entry(i).latent);
    }
    CHECK_THROWS(Pool::load(dir.path(), std::make_shared<NgramEmbedder>(128)));
    CHECK_THROWS(Pool::load(dir.path() / "missing", ngram()));
}

TEST_CASE("sampling is seeded and clamps") {
    const auto pool = Pool::build(numbered(30), ngram());
    const auto a = pool.sample(10, 5);
    const auto b = pool.sample(10, 5);
    REQUIRE(a.size() == 10);
    for (std::size_t i = 0; i < 10; ++i) CHECK(a.entry(i).id == b.entry(i).id);
    CHECK(pool.sample(100, 1).size() == 30);
}
