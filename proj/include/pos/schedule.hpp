// Copyright (C) 2026 pos-diffusion contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string>
#include <variant>
#include <vector>

#include "pos/tensor.hpp"

namespace pos {

struct ConstantBeta {
    double beta = 0.01;
};

/// beta interpolated linearly from `start` at t=1 to `end` at t=T.
struct LinearBeta {
    double start = 1e-4;
    double end = 0.02;
};

/// T evenly spaced timesteps of a `base_steps` linear schedule, the usual DDIM
/// sampling setup. The equivalent per-step betas are derived from the strided
/// cumulative products.
struct StridedLinearBeta {
    std::size_t base_steps = 1000;
    double start = 0.00085;
    double end = 0.012;
};

using BetaSpec = std::variant<ConstantBeta, LinearBeta, StridedLinearBeta>;

/// Parses "constant:0.01", "linear:1e-4:0.02" or "strided:1000:1e-4:0.02".
BetaSpec parse_beta_spec(const std::string& text);
std::string format_beta_spec(const BetaSpec& spec);

/// Shortest decimal text that parses back to exactly `v`.
std::string shortest_repr(double v);

/// Immutable noise schedule. Timesteps are 1..T; alpha_cum(0) == 1 is the clean
/// boundary, so the last denoise step lands on the sample itself.
class DiffusionSchedule {
public:
    DiffusionSchedule(std::vector<double> betas);

    std::size_t steps() const { return betas_.size(); }
    const std::vector<double>& betas() const { return betas_; }

    /// Cumulative product of (1 - beta) through step t, t in [0, T].
    double alpha_cum(std::size_t t) const;

    /// alpha_cum for t = 1..T.
    std::vector<double> alphas_cum() const { return {alphas_cum_.begin() + 1, alphas_cum_.end()}; }

private:
    std::vector<double> betas_;
    std::vector<double> alphas_cum_;  // index 0 holds the alpha_0 = 1 boundary
};

DiffusionSchedule make_schedule(std::size_t steps, const BetaSpec& spec);

/// Condition vector c for the noise predictor. The empty condition is the
/// reserved all-zeros embedding.
struct Condition {
    std::vector<double> embedding;
    bool is_empty = false;

    std::size_t width() const { return embedding.size(); }

    static Condition empty(std::size_t width) { return {std::vector<double>(width, 0.0), true}; }
    static Condition from(std::vector<double> embedding) { return {std::move(embedding), false}; }

    bool operator==(const Condition&) const = default;
};

/// DDIM denoising update z_t -> z_{t-1} for t in [1, T], given the noise
/// prediction eps_pred = eps_theta(z_t, t, c).
LatentTensor dn_step(const LatentTensor& z_t, std::size_t t, const LatentTensor& eps_pred,
                     const DiffusionSchedule& sched);

/// DDIM inversion update z_t -> z_{t+1} for t in [0, T-1]. eps_pred is evaluated
/// at timestep t.
LatentTensor inv_step(const LatentTensor& z_t, std::size_t t, const LatentTensor& eps_pred,
                      const DiffusionSchedule& sched);

/// Coefficients (a, b) with step(z, eps) = a*z + b*eps, moving from timestep
/// `from` to timestep `to` along the DDIM ODE.
struct StepCoefficients {
    double z_scale;
    double eps_scale;
};
StepCoefficients ddim_coefficients(const DiffusionSchedule& sched, std::size_t from, std::size_t to);

}  // namespace pos
