// Copyright (C) 2026 pos-diffusion contributors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "pos/ona.hpp"

using namespace pos;

namespace {

const Shape kShape{2, 1, 3, 3};

}  // namespace

TEST_CASE("mixture coefficients") {
    // 1/sqrt(1.25) and 0.5/sqrt(1.25) to 16 digits.
    const auto c = mixture_coefficients({0.5, false, 0});
    CHECK(c.random == doctest::Approx(0.8944271909999159).epsilon(1e-15));
    CHECK(c.inverted == doctest::Approx(0.4472135954999579).epsilon(1e-15));
    const auto zero = mixture_coefficients({0.0, false, 0});
    CHECK(zero.random == 1.0);
    CHECK(zero.inverted == 0.0);
    const auto inf = mixture_coefficients(MixtureConfig::pure_inverted(0));
    CHECK(inf.random == 0.0);
    CHECK(inf.inverted == 1.0);
    for (double eta : {0.1, 1.0, 2.0, 7.5}) {
        const auto k = mixture_coefficients({eta, false, 0});
        CHECK(k.random * k.random + k.inverted * k.inverted == doctest::Approx(1.0).epsilon(1e-15));
        CHECK(k.inverted / k.random == doctest::Approx(eta).epsilon(1e-14));
    }
    CHECK_THROWS(mixture_coefficients({-0.1, false, 0}));
    CHECK_THROWS(mixture_coefficients({INFINITY, false, 0}));
}

TEST_CASE("mix_noise boundary cases") {
    const auto inv = LatentTensor::gaussian(kShape, 99);
    const MixtureConfig zero{0.0, false, 5};
    CHECK(mix_noise(inv, zero) == mixture_gaussian(kShape, zero));
    CHECK(mix_noise(inv, MixtureConfig::pure_inverted(5)) == inv);
    const MixtureConfig half{0.5, false, 5};
    CHECK(mix_noise(inv, half) == mix_noise(inv, half));
    const auto eps = mixture_gaussian(kShape, half);
    const auto expected = linear_combination(1.0 / std::sqrt(1.25), eps, 0.5 / std::sqrt(1.25), inv);
    CHECK(max_abs_diff(mix_noise(inv, half), expected) < 1e-15);
    CHECK(mixture_gaussian(kShape, {0.5, false, 6}) != eps);
}

TEST_CASE("mixture keeps unit variance") {
    const Shape big{10, 1, 100, 100};
    const auto inv = LatentTensor::gaussian(big, 12345);
    for (double eta : {0.0, 0.1, 0.5, 1.0, 2.0}) {
        const auto mixed = mix_noise(inv, {eta, false, 777});
        std::vector<double> xs(mixed.data().begin(), mixed.data().end());
        CHECK(std::abs(oracle::sample_variance(xs) - 1.0) < 0.02);
    }
}

TEST_CASE("blend moves toward the inverted noise as eta grows") {
    const auto inv = LatentTensor::gaussian(kShape, 3);
    auto cos_to_inv = [&](double eta) {
        const auto m = mix_noise(inv, {eta, false, 11});
        std::vector<double> a(m.data().begin(), m.data().end()), b(inv.data().begin(), inv.data().end());
        return oracle::cosine(a, b);
    };
    double prev = cos_to_inv(0.0);
    for (double eta : {0.1, 0.2, 0.5, 1.0, 2.0, 5.0, 50.0}) {
        const double c = cos_to_inv(eta);
        CHECK(c >= prev);
        prev = c;
    }
}

TEST_CASE("inversion with the zero predictor telescopes") {
    const auto sched = make_schedule(20, StridedLinearBeta{});
    const ZeroPredictor zero(4);
    const auto z0 = LatentTensor::gaussian(kShape, 7);
    const auto g = invert_latent(z0, sched, zero, "src");
    CHECK(g.steps_used == 20);
    CHECK(g.source_id == "src");
    const double r = std::sqrt(sched.alpha_cum(20) / sched.alpha_cum(0));
    CHECK(max_abs_diff(g.eps_inv, r * z0) < 1e-12);

    const auto back = synthesize(Condition::from({1, 0, 0, 0}), g.eps_inv, sched, zero);
    CHECK(max_abs_diff(back, z0) < 1e-12);
    const auto fwd = synthesize(Condition::empty(4), z0, sched, zero);
    CHECK(max_abs_diff(fwd, (1.0 / r) * z0) < 1e-9);
}

namespace {

// Records every (t, condition) pair the sampler asks for.
class RecordingPredictor final : public NoisePredictor {
public:
    std::size_t condition_width() const override { return 2; }
    LatentTensor predict(const LatentTensor& z, std::size_t t, const Condition& c) const override {
        calls.emplace_back(t, c);
        return LatentTensor(z.shape(), 0.01 * static_cast<double>(t));
    }
    mutable std::vector<std::pair<std::size_t, Condition>> calls;
};

}  // namespace

TEST_CASE("inversion uses the empty condition and timesteps 0..T-1") {
    const auto sched = make_schedule(6, StridedLinearBeta{});
    RecordingPredictor rec;
    invert_latent(LatentTensor::gaussian(kShape, 1), sched, rec);
    REQUIRE(rec.calls.size() == 6);
    for (std::size_t i = 0; i < 6; ++i) {
        CHECK(rec.calls[i].first == i);
        CHECK(rec.calls[i].second.is_empty);
        CHECK(rec.calls[i].second == Condition::empty(2));
    }
}

TEST_CASE("synthesis walks T down to 1 and matches an independent loop") {
    const auto sched = make_schedule(6, StridedLinearBeta{});
    RecordingPredictor rec;
    const auto init = LatentTensor::gaussian(kShape, 2);
    const auto cond = Condition::from({0.3, 0.4});
    const auto out = synthesize(cond, init, sched, rec);
    REQUIRE(rec.calls.size() == 6);
    auto ref = init;
    for (std::size_t i = 0; i < 6; ++i) {
        const std::size_t t = 6 - i;
        CHECK(rec.calls[i].first == t);
        CHECK(rec.calls[i].second == cond);
        ref = oracle::ddim_move(ref, LatentTensor(kShape, 0.01 * static_cast<double>(t)), sched.alpha_cum(t),
                                sched.alpha_cum(t - 1));
    }
    CHECK(max_abs_diff(out, ref) < 1e-12);
    CHECK(synthesize(cond, init, sched, rec) == out);
}

TEST_CASE("inversion round trip with a constant predictor") {
    const auto sched = make_schedule(50, StridedLinearBeta{});
    const ConstantPredictor k(3, 0.2);
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto z0 = LatentTensor::gaussian(kShape, seed);
        const auto g = invert_latent(z0, sched, k);
        CHECK(max_abs_diff(synthesize(Condition::empty(3), g.eps_inv, sched, k), z0) < 1e-9);
    }
}

TEST_CASE("codecs") {
    const IdentityCodec id;
    const auto x = LatentTensor::gaussian(kShape, 4);
    CHECK(id.decode(id.encode(x)) == x);
    const LinearProjectionCodec proj(kShape.frame_size(), 1.7, 3);
    const auto enc = proj.encode(x);
    CHECK(enc != x);
    CHECK(l2_norm(enc) == doctest::Approx(1.7 * l2_norm(x)).epsilon(1e-12));
    CHECK(max_abs_diff(proj.decode(enc), x) < 1e-12);
    CHECK_THROWS(proj.encode(LatentTensor({1, 1, 2, 2})));
}
