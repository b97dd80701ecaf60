// Copyright (C) 2026 pos-diffusion contributors
// SPDX-License-Identifier: Apache-2.0

#include "pos/npnet.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <numeric>
#include <random>
#include <stdexcept>

#include "pos/binary_io.hpp"
#include "pos/ona.hpp"

namespace pos {

NoisePairDataset build_noise_dataset(const Pool& pool, const DiffusionSchedule& sched, const NoisePredictor& denoiser,
                                     const Embedder& conditioner, std::size_t limit, std::uint64_t seed) {
    if (pool.size() == 0) throw std::invalid_argument("build_noise_dataset: empty pool");
    if (limit == 0) throw std::invalid_argument("build_noise_dataset: limit must be >= 1");

    std::vector<std::size_t> picks(pool.size());
    std::iota(picks.begin(), picks.end(), 0);
    if (limit < pool.size()) {
        std::mt19937_64 rng(seed);
        std::shuffle(picks.begin(), picks.end(), rng);
        picks.resize(limit);
        std::sort(picks.begin(), picks.end());
    }

    NoisePairDataset ds;
    ds.provenance = "pool_size=" + std::to_string(pool.size()) + " limit=" + std::to_string(limit) +
                    " seed=" + std::to_string(seed) + " steps=" + std::to_string(sched.steps());
    for (auto i : picks) {
        const auto& e = pool.entry(i);
        auto guided = invert_latent(e.latent, sched, denoiser, e.id);
        ds.records.emplace_back(Condition::from(conditioner.embed(e.text).values()), std::move(guided.eps_inv));
        ds.source_ids.push_back(e.id);
    }
    return ds;
}

std::vector<double> identity_prior_coefficients(const DiffusionSchedule& sched) {
    std::vector<double> kappa(sched.steps() + 1, 0.0);
    auto spread = [&](std::size_t t) {
        const double a = sched.alpha_cum(t);
        return std::sqrt((1.0 - a) / a);
    };
    for (std::size_t t = 1; t <= sched.steps(); ++t) {
        const double num = 1.0 / std::sqrt(sched.alpha_cum(t - 1)) - 1.0 / std::sqrt(sched.alpha_cum(t));
        kappa[t] = num / (spread(t - 1) - spread(t));
    }
    return kappa;
}

NoisePredictionNet::NoisePredictionNet(const DenoiserSpec& spec, std::size_t frames, std::size_t steps,
                                       const BetaSpec& beta)
    : net_(spec), frames_(frames), beta_spec_(beta), schedule_(make_schedule(steps, beta)) {
    if (frames_ == 0) throw std::invalid_argument("NPNet needs at least one frame");
    net_.set_output_coefficients({identity_prior_coefficients(schedule_), {}});
}

Shape NoisePredictionNet::noise_shape() const {
    const auto& s = net_.spec();
    return {frames_, s.channels, s.height, s.width};
}

std::vector<TrainRecord> NoisePredictionNet::train(const NoisePairDataset& dataset, const TrainOptions& options) {
    if (dataset.records.empty()) throw std::invalid_argument("NPNet train: empty dataset");
    TrainingSet set;
    set.reserve(dataset.records.size());
    for (const auto& [cond, noise] : dataset.records) {
        if (noise.shape() != noise_shape()) {
            throw std::invalid_argument("NPNet train: record shape " + noise.shape().str() + " != " + noise_shape().str());
        }
        set.emplace_back(noise, cond);
    }
    auto trace = pos::train(net_, set, schedule_, options);
    trained_ = true;
    return trace;
}

LatentTensor NoisePredictionNet::sample(const Condition& condition, std::uint64_t seed) const {
    const LatentTensor start = LatentTensor::gaussian(noise_shape(), derive_seed(seed, 0x6e706e));
    return synthesize(condition, start, schedule_, net_);
}

LatentTensor NoisePredictionNet::predict_noise(const Condition& condition, std::uint64_t seed) const {
    if (!trained_) throw std::logic_error("predict_noise: NPNet has not been trained");
    return sample(condition, seed);
}

Checkpoint NoisePredictionNet::checkpoint() const {
    nlohmann::json meta = {{"frames", frames_},
                           {"steps", schedule_.steps()},
                           {"beta", format_beta_spec(beta_spec_)},
                           {"trained", trained_}};
    return make_checkpoint(net_, ModelKind::npnet, meta.dump());
}

NoisePredictionNet NoisePredictionNet::from_checkpoint(const Checkpoint& ckpt) {
    if (ckpt.kind != ModelKind::npnet) throw FormatError("checkpoint is not an NPNet checkpoint");
    nlohmann::json meta;
    try {
        meta = nlohmann::json::parse(ckpt.metadata);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("NPNet metadata: ") + e.what());
    }
    NoisePredictionNet net(ckpt.spec, meta.at("frames").get<std::size_t>(), meta.at("steps").get<std::size_t>(),
                           parse_beta_spec(meta.at("beta").get<std::string>()));
    auto loaded = model_from_checkpoint(ckpt);
    net.net_.mutable_parameters() = loaded.parameters();
    net.trained_ = meta.value("trained", false);
    return net;
}

void NoisePredictionNet::save(const std::filesystem::path& path) const {
    write_file_bytes(path, encode_checkpoint(checkpoint()));
}

NoisePredictionNet NoisePredictionNet::load(const std::filesystem::path& path) {
    return from_checkpoint(decode_checkpoint(read_file_bytes(path)));
}

}  // namespace pos
