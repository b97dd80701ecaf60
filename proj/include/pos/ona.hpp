// Copyright (C) 2026 pos-diffusion contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include "pos/denoiser.hpp"
#include "pos/pool.hpp"
#include "pos/schedule.hpp"
#include "pos/tensor.hpp"

namespace pos {

/// Encoder/decoder between media arrays and the latent space.
class LatentCodec {
public:
    virtual ~LatentCodec() = default;
    virtual LatentTensor encode(const LatentTensor& media) const = 0;
    virtual LatentTensor decode(const LatentTensor& latent) const = 0;
};

class IdentityCodec final : public LatentCodec {
public:
    LatentTensor encode(const LatentTensor& media) const override { return media; }
    LatentTensor decode(const LatentTensor& latent) const override { return latent; }
};

/// Per-frame scaled Householder reflection s * (I - 2 u u^T), u a seeded unit
/// vector. Invertible, so decode(encode(x)) == x up to rounding.
class LinearProjectionCodec final : public LatentCodec {
public:
    LinearProjectionCodec(std::size_t frame_size, double scale, std::uint64_t seed);
    LatentTensor encode(const LatentTensor& media) const override;
    LatentTensor decode(const LatentTensor& latent) const override;

private:
    LatentTensor apply(const LatentTensor& x, double scale) const;
    std::vector<double> u_;
    double scale_;
};

/// Gaussian-mixture weight eta. `infinite` selects pure inverted noise.
struct MixtureConfig {
    double eta = 0.5;
    bool infinite = false;
    std::uint64_t seed = 0;

    void validate() const;
    static MixtureConfig pure_inverted(std::uint64_t seed) { return {0.0, true, seed}; }
};

struct MixtureCoefficients {
    double random;    // weight on fresh Gaussian noise
    double inverted;  // weight on the inverted noise
};

/// (1/sqrt(1+eta^2), eta/sqrt(1+eta^2)); (0, 1) for the infinite setting.
MixtureCoefficients mixture_coefficients(const MixtureConfig& cfg);

struct GuidedNoise {
    LatentTensor eps_inv;
    std::string source_id;
    std::size_t steps_used = 0;
};

/// Runs inv_step for t = 0..T-1 under the empty condition.
GuidedNoise invert_latent(const LatentTensor& latent, const DiffusionSchedule& sched, const NoisePredictor& denoiser,
                          std::string source_id = {});

/// Retrieves the nearest pool entry for the prompt and inverts its latent.
GuidedNoise guided_noise_for(const std::string& prompt, const Pool& pool, const DiffusionSchedule& sched,
                             const NoisePredictor& denoiser);

/// Fresh eps ~ N(0, I) for the mixture, drawn from cfg.seed.
LatentTensor mixture_gaussian(const Shape& shape, const MixtureConfig& cfg);

/// eps_mix = a * eps + b * eps_inv with eps drawn from cfg.seed.
LatentTensor mix_noise(const LatentTensor& eps_inv, const MixtureConfig& cfg);
inline LatentTensor mix_noise(const GuidedNoise& guided, const MixtureConfig& cfg) {
    return mix_noise(guided.eps_inv, cfg);
}

using ConditionSchedule = std::function<const Condition&(std::size_t t)>;

/// Runs dn_step from t=T down to t=1 starting at init_noise, asking
/// `condition_at` for the condition of each step. Returns z_0.
LatentTensor synthesize_scheduled(const ConditionSchedule& condition_at, const LatentTensor& init_noise,
                                  const DiffusionSchedule& sched, const NoisePredictor& denoiser);

/// synthesize_scheduled with one fixed condition.
LatentTensor synthesize(const Condition& condition, const LatentTensor& init_noise, const DiffusionSchedule& sched,
                        const NoisePredictor& denoiser);

}  // namespace pos
