// Copyright (C) 2026 pos-diffusion contributors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <regex>
#include <set>

#include "pos/toy.hpp"

using namespace pos;

namespace {

// Latent value of an empty pixel under the default offset and scale.
constexpr double kBackground = -0.12 * 3.5;

}  // namespace

TEST_CASE("captions follow the template grammar") {
    const std::regex grammar("a (small|large) (bright|faint) blob moves (right|left|up|down) (slowly|quickly)");
    const auto one = make_toy_dataset(1, 4);
    REQUIRE(one.size() == 1);
    CHECK(std::regex_match(one[0].caption, grammar));
    CHECK(one[0].caption == one[0].attributes.caption());
    CHECK(one[0].latent.shape() == ToyVideoSpec{}.shape());

    std::set<std::string> seen;
    for (const auto& s : make_toy_dataset(300, 1)) {
        CHECK(std::regex_match(s.caption, grammar));
        seen.insert(s.caption);
    }
    CHECK(seen.size() == 32);

    BlobAttributes a;
    a.large = true;
    a.bright = false;
    a.direction = BlobAttributes::Direction::up;
    a.quick = true;
    CHECK(a.caption() == "a large faint blob moves up quickly");
}

TEST_CASE("datasets are deterministic per seed and split") {
    const auto a = make_toy_dataset(12, 9);
    const auto b = make_toy_dataset(12, 9);
    const auto eval = make_toy_dataset(12, 9, ToySplit::eval);
    const auto other = make_toy_dataset(12, 10);
    std::size_t eval_same = 0, other_same = 0;
    for (std::size_t i = 0; i < 12; ++i) {
        CHECK(a[i].caption == b[i].caption);
        CHECK(a[i].latent == b[i].latent);
        eval_same += a[i].latent == eval[i].latent;
        other_same += a[i].latent == other[i].latent;
    }
    CHECK(eval_same == 0);
    CHECK(other_same == 0);
    const auto longer = make_toy_dataset(20, 9);
    for (std::size_t i = 0; i < 12; ++i) CHECK(longer[i].latent == a[i].latent);
}

TEST_CASE("blobs move in the captioned direction") {
    using D = BlobAttributes::Direction;
    for (D dir : {D::right, D::left, D::up, D::down}) {
        for (std::uint64_t seed = 0; seed < 5; ++seed) {
            BlobAttributes a;
            a.direction = dir;
            a.quick = seed % 2 == 1;
            const auto video = render_blob_video(a, seed);
            for (std::size_t f = 1; f < video.shape().frames; ++f) {
                const auto [x0, y0] = frame_centroid(video, f - 1, kBackground);
                const auto [x1, y1] = frame_centroid(video, f, kBackground);
                CAPTURE(a.caption());
                CAPTURE(f);
                switch (dir) {
                    case D::right: CHECK(x1 > x0); break;
                    case D::left: CHECK(x1 < x0); break;
                    case D::up: CHECK(y1 < y0); break;
                    case D::down: CHECK(y1 > y0); break;
                }
            }
        }
    }
}

TEST_CASE("bright and large blobs carry more mass") {
    auto mass = [](const BlobAttributes& a) {
        const auto v = render_blob_video(a, 3);
        double total = 0.0;
        for (double x : v.data()) total += x - kBackground;
        return total;
    };
    BlobAttributes small_faint;
    small_faint.bright = false;
    BlobAttributes small_bright;
    BlobAttributes large_bright;
    large_bright.large = true;
    CHECK(mass(small_bright) > mass(small_faint));
    CHECK(mass(large_bright) > mass(small_bright));
}

TEST_CASE("pgm preview") {
    const ToyVideoSpec spec{3, 5, 4};
    const auto video = render_blob_video({}, 1, spec);
    const auto pgm = render_pgm(video);
    const std::string header = "P5\n12 5\n255\n";
    REQUIRE(pgm.substr(0, header.size()) == header);
    CHECK(pgm.size() == header.size() + 12 * 5);
    CHECK_THROWS(render_blob_video({}, 1, ToyVideoSpec{0, 4, 4}));
}
