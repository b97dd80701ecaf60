// Copyright (C) 2026 pos-diffusion contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "pos/denoiser.hpp"
#include "pos/embedder.hpp"
#include "pos/pool.hpp"
#include "pos/schedule.hpp"

namespace pos {

/// (text condition, inverted noise) training pairs.
struct NoisePairDataset {
    std::vector<std::pair<Condition, LatentTensor>> records;
    /// Source ids of the inverted pool entries, parallel to `records`.
    std::vector<std::string> source_ids;
    std::string provenance;
};

/// Inverts up to `limit` pool latents (all of them, in pool order, when
/// limit >= N; otherwise a uniform sample drawn from `seed`) and pairs each
/// with the `conditioner` embedding of its text.
NoisePairDataset build_noise_dataset(const Pool& pool, const DiffusionSchedule& sched, const NoisePredictor& denoiser,
                                     const Embedder& conditioner, std::size_t limit, std::uint64_t seed);

/// Conditional generative model over noise tensors. It is the same network
/// class as the video denoiser, trained with the DDPM objective where the
/// inverted noise plays the role of clean data, and sampled with DDIM over its
/// own short schedule.
///
/// The epsilon prediction is kappa_t * z_t + net(z_t, t, c), with kappa_t
/// chosen so a DDIM step maps z_t to itself. A zero network therefore samples
/// the N(0, I) prior unchanged.
class NoisePredictionNet {
public:
    /// Defaults to 10 DDIM steps strided from the 1000-step linear schedule.
    NoisePredictionNet(const DenoiserSpec& spec, std::size_t frames, std::size_t steps = 10,
                       const BetaSpec& beta = StridedLinearBeta{});

    const MlpDenoiser& network() const { return net_; }
    const DiffusionSchedule& schedule() const { return schedule_; }
    Shape noise_shape() const;
    bool trained() const { return trained_; }

    std::vector<TrainRecord> train(const NoisePairDataset& dataset, const TrainOptions& options);

    /// DDIM sample from N(0, I) seeded by `seed`; works untrained (prior).
    LatentTensor sample(const Condition& condition, std::uint64_t seed) const;

    /// sample() for a trained model; the output stands in for eps_inv.
    LatentTensor predict_noise(const Condition& condition, std::uint64_t seed) const;

    void save(const std::filesystem::path& path) const;
    static NoisePredictionNet load(const std::filesystem::path& path);

    Checkpoint checkpoint() const;
    static NoisePredictionNet from_checkpoint(const Checkpoint& ckpt);

private:
    MlpDenoiser net_;
    std::size_t frames_;
    BetaSpec beta_spec_;
    DiffusionSchedule schedule_;
    bool trained_ = false;
};

/// Identity-map coefficients kappa_t, t = 0..T (kappa_0 = 0).
std::vector<double> identity_prior_coefficients(const DiffusionSchedule& sched);

}  // namespace pos
