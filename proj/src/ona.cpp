// Copyright (C) 2026 pos-diffusion contributors
// SPDX-License-Identifier: Apache-2.0

#include "pos/ona.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace pos {

LinearProjectionCodec::LinearProjectionCodec(std::size_t frame_size, double scale, std::uint64_t seed)
    : u_(frame_size), scale_(scale) {
    if (frame_size == 0) throw std::invalid_argument("codec frame size must be >= 1");
    if (!(scale > 0.0) || !std::isfinite(scale)) throw std::invalid_argument("codec scale must be positive");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;
    double sq = 0.0;
    for (auto& v : u_) {
        v = normal(rng);
        sq += v * v;
    }
    for (auto& v : u_) v /= std::sqrt(sq);
}

LatentTensor LinearProjectionCodec::apply(const LatentTensor& x, double scale) const {
    if (x.shape().frame_size() != u_.size()) throw std::invalid_argument("codec frame size mismatch");
    LatentTensor out = x;
    for (std::size_t f = 0; f < x.shape().frames; ++f) {
        auto frame = out.frame(f);
        double dot = 0.0;
        for (std::size_t i = 0; i < u_.size(); ++i) dot += u_[i] * frame[i];
        for (std::size_t i = 0; i < u_.size(); ++i) frame[i] = scale * (frame[i] - 2.0 * dot * u_[i]);
    }
    return out;
}

LatentTensor LinearProjectionCodec::encode(const LatentTensor& media) const { return apply(media, scale_); }
LatentTensor LinearProjectionCodec::decode(const LatentTensor& latent) const { return apply(latent, 1.0 / scale_); }

void MixtureConfig::validate() const {
    if (!infinite && !(eta >= 0.0 && std::isfinite(eta))) {
        throw std::invalid_argument("eta must be finite and >= 0 (use the infinite setting for pure inverted noise)");
    }
}

MixtureCoefficients mixture_coefficients(const MixtureConfig& cfg) {
    cfg.validate();
    if (cfg.infinite) return {0.0, 1.0};
    const double norm = std::hypot(1.0, cfg.eta);
    return {1.0 / norm, cfg.eta / norm};
}

GuidedNoise invert_latent(const LatentTensor& latent, const DiffusionSchedule& sched, const NoisePredictor& denoiser,
                          std::string source_id) {
    const Condition empty = Condition::empty(denoiser.condition_width());
    LatentTensor z = latent;
    for (std::size_t t = 0; t < sched.steps(); ++t) {
        z = inv_step(z, t, denoiser.predict(z, t, empty), sched);
    }
    return {std::move(z), std::move(source_id), sched.steps()};
}

GuidedNoise guided_noise_for(const std::string& prompt, const Pool& pool, const DiffusionSchedule& sched,
                             const NoisePredictor& denoiser) {
    const PoolEntry& neighbor = pool.retrieve_video(prompt);
    return invert_latent(neighbor.latent, sched, denoiser, neighbor.id);
}

LatentTensor mixture_gaussian(const Shape& shape, const MixtureConfig& cfg) {
    return LatentTensor::gaussian(shape, derive_seed(cfg.seed, 0x6d6978));
}

LatentTensor mix_noise(const LatentTensor& eps_inv, const MixtureConfig& cfg) {
    const auto [a, b] = mixture_coefficients(cfg);
    if (cfg.infinite) return eps_inv;
    LatentTensor eps = mixture_gaussian(eps_inv.shape(), cfg);
    if (b == 0.0) return eps;
    return linear_combination(a, eps, b, eps_inv);
}

LatentTensor synthesize_scheduled(const ConditionSchedule& condition_at, const LatentTensor& init_noise,
                                  const DiffusionSchedule& sched, const NoisePredictor& denoiser) {
    LatentTensor z = init_noise;
    for (std::size_t t = sched.steps(); t >= 1; --t) {
        z = dn_step(z, t, denoiser.predict(z, t, condition_at(t)), sched);
    }
    return z;
}

LatentTensor synthesize(const Condition& condition, const LatentTensor& init_noise, const DiffusionSchedule& sched,
                        const NoisePredictor& denoiser) {
    return synthesize_scheduled([&](std::size_t) -> const Condition& { return condition; }, init_noise, sched,
                                denoiser);
}

}  // namespace pos
