// Copyright (C) 2026 pos-diffusion contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "pos/schedule.hpp"
#include "pos/tensor.hpp"

namespace pos {

/// The noise prediction function eps_theta(z_t, t, c). Implementations must be
/// safe to call concurrently once constructed.
class NoisePredictor {
public:
    virtual ~NoisePredictor() = default;

    virtual std::size_t condition_width() const = 0;
    virtual LatentTensor predict(const LatentTensor& z_t, std::size_t t, const Condition& c) const = 0;

protected:
    void check_condition(const Condition& c) const;
};

/// eps_theta == 0 everywhere.
class ZeroPredictor final : public NoisePredictor {
public:
    explicit ZeroPredictor(std::size_t condition_width) : width_(condition_width) {}
    std::size_t condition_width() const override { return width_; }
    LatentTensor predict(const LatentTensor& z_t, std::size_t t, const Condition& c) const override;

private:
    std::size_t width_;
};

/// eps_theta == k everywhere.
class ConstantPredictor final : public NoisePredictor {
public:
    ConstantPredictor(std::size_t condition_width, double value) : width_(condition_width), value_(value) {}
    std::size_t condition_width() const override { return width_; }
    LatentTensor predict(const LatentTensor& z_t, std::size_t t, const Condition& c) const override;

private:
    std::size_t width_;
    double value_;
};

struct DenoiserSpec {
    std::uint32_t condition_width = 256;
    std::uint32_t hidden_width = 256;
    std::uint32_t layer_count = 2;
    /// Width of each sinusoidal encoding (timestep and frame index).
    std::uint32_t embed_width = 16;
    std::uint32_t channels = 1;
    std::uint32_t height = 16;
    std::uint32_t width = 16;
    std::uint64_t seed = 0;
    bool zero_init_output = true;

    std::size_t frame_size() const { return std::size_t{channels} * height * width; }
    void validate() const;
    bool operator==(const DenoiserSpec&) const = default;
};

/// Per-timestep output mapping: eps = scale[t] * net + (skip[t] + learned gain) * z_t.
/// Empty vectors mean scale 1 and skip 0.
struct OutputCoefficients {
    std::vector<double> skip;
    std::vector<double> scale;

    bool operator==(const OutputCoefficients&) const = default;
};

/// skip = sqrt(1 - a_t), scale = sqrt(a_t) for t in [0, T]: the network output
/// then regresses v = sqrt(a_t) eps - sqrt(1 - a_t) z0, which has unit scale at
/// every timestep for unit-variance data.
OutputCoefficients v_prediction_coefficients(const DiffusionSchedule& sched);

/// One training example: the network should map (z_t, t, c) to `target`.
struct DenoiserSample {
    LatentTensor z_t;
    std::size_t t = 1;
    Condition condition;
    LatentTensor target;
};

/// Small conditional residual MLP applied frame by frame. Each frame column
/// sees its pixels, a sinusoidal timestep code, a sinusoidal frame-index code
/// and the condition vector:
///
///   h0 = W_in x + W_ctx [temb(t); femb(f); c] + b_in
///   h_{l+1} = h_l + W2_l relu(W1_l h_l + b1_l) + b2_l
///   out = scale_t (W_out h_L + b_out) + (v . temb(t) + v0 + skip_t) x
///
/// The gain (v, v0) is learned and zero-initialized; scale_t and skip_t are
/// fixed OutputCoefficients.
///
/// All parameters live in one flat vector so optimizers and checkpoints treat
/// them uniformly.
class MlpDenoiser final : public NoisePredictor {
public:
    explicit MlpDenoiser(const DenoiserSpec& spec);

    const DenoiserSpec& spec() const { return spec_; }
    std::size_t condition_width() const override { return spec_.condition_width; }

    LatentTensor predict(const LatentTensor& z_t, std::size_t t, const Condition& c) const override;

    /// Mean squared error over all elements of all samples; fills `grad`
    /// (resized to parameter_count()) with dLoss/dparams when non-null.
    double batch_loss(const std::vector<DenoiserSample>& samples, std::vector<double>* grad) const;

    std::size_t parameter_count() const { return params_.size(); }
    const std::vector<double>& parameters() const { return params_; }
    std::vector<double>& mutable_parameters() { return params_; }

    void set_output_coefficients(OutputCoefficients coeffs) { output_ = std::move(coeffs); }
    const OutputCoefficients& output_coefficients() const { return output_; }

private:
    struct Layout;
    double skip_at(std::size_t t) const;
    double scale_at(std::size_t t) const;

    DenoiserSpec spec_;
    std::vector<double> params_;
    OutputCoefficients output_;
};

enum class OptimizerKind { sgd, adam };

struct TrainOptions {
    std::size_t steps = 1000;
    /// Videos per step; every frame of a sampled video is one column.
    std::size_t batch_size = 8;
    double learning_rate = 0.05;
    OptimizerKind optimizer = OptimizerKind::sgd;
    /// Cosine decay of the learning rate to zero over `steps`.
    bool cosine_decay = false;
    /// Probability of replacing the condition with the empty condition.
    double condition_dropout = 0.1;
    std::uint64_t seed = 0;
};

struct TrainRecord {
    std::size_t step = 0;
    double loss = 0.0;
};

/// (clean latent z0, condition) pairs.
using TrainingSet = std::vector<std::pair<LatentTensor, Condition>>;

/// Standard DDPM noise-reconstruction objective: sample t and eps, then
/// minimise ||eps - eps_theta(sqrt(a_t) z0 + sqrt(1 - a_t) eps, t, c)||^2.
std::vector<TrainRecord> train(MlpDenoiser& model, const TrainingSet& dataset, const DiffusionSchedule& sched,
                               const TrainOptions& options);

enum class ModelKind : std::uint32_t { denoiser = 0, npnet = 1 };

struct Checkpoint {
    ModelKind kind = ModelKind::denoiser;
    DenoiserSpec spec;
    /// Free-form metadata (the NPNet stores its sampling schedule here).
    std::string metadata;
    OutputCoefficients output;
    std::vector<float> parameters;
};

/// Header: magic "POSCKPT1", u32 version, u32 kind, seven u32 spec fields,
/// u64 seed, u32 zero-init flag, length-prefixed metadata, the skip and scale
/// output coefficients (each u64 count + f64 values), u64 parameter count;
/// then little-endian f32 parameters.
std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

Checkpoint make_checkpoint(const MlpDenoiser& model, ModelKind kind, std::string metadata = {});
MlpDenoiser model_from_checkpoint(const Checkpoint& ckpt);

void save_denoiser(const std::filesystem::path& path, const MlpDenoiser& model);
MlpDenoiser load_denoiser(const std::filesystem::path& path);

/// Sinusoidal encoding of a scalar position; exposed for tests.
std::vector<double> sinusoidal_encoding(double position, std::size_t width);

}  // namespace pos
