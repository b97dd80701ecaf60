// Copyright (C) 2026 pos-diffusion contributors
// SPDX-License-Identifier: Apache-2.0

#include "pos/schedule.hpp"

#include <charconv>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace pos {
namespace {

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, sep)) out.push_back(item);
    return out;
}

double parse_double(const std::string& s) {
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(s, &used);
    } catch (const std::exception&) {
        throw std::invalid_argument("not a number: '" + s + "'");
    }
    if (used != s.size()) throw std::invalid_argument("not a number: '" + s + "'");
    return v;
}

std::vector<double> linear_betas(std::size_t steps, double start, double end) {
    std::vector<double> betas(steps);
    for (std::size_t i = 0; i < steps; ++i) {
        const double frac = steps == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(steps - 1);
        betas[i] = start + (end - start) * frac;
    }
    return betas;
}

}  // namespace

BetaSpec parse_beta_spec(const std::string& text) {
    const auto parts = split(text, ':');
    if (parts.empty()) throw std::invalid_argument("empty beta spec");
    if (parts[0] == "constant" && parts.size() == 2) return ConstantBeta{parse_double(parts[1])};
    if (parts[0] == "linear" && parts.size() == 3) return LinearBeta{parse_double(parts[1]), parse_double(parts[2])};
    if (parts[0] == "strided" && parts.size() == 4) {
        const double base = parse_double(parts[1]);
        if (base < 1 || base != std::floor(base)) throw std::invalid_argument("strided base steps must be a positive integer");
        return StridedLinearBeta{static_cast<std::size_t>(base), parse_double(parts[2]), parse_double(parts[3])};
    }
    throw std::invalid_argument("unrecognized beta spec '" + text + "'");
}

std::string shortest_repr(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

std::string format_beta_spec(const BetaSpec& spec) {
    return std::visit(
        [](const auto& s) -> std::string {
            using S = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<S, ConstantBeta>) {
                return "constant:" + shortest_repr(s.beta);
            } else if constexpr (std::is_same_v<S, LinearBeta>) {
                return "linear:" + shortest_repr(s.start) + ":" + shortest_repr(s.end);
            } else {
                return "strided:" + std::to_string(s.base_steps) + ":" + shortest_repr(s.start) + ":" +
                       shortest_repr(s.end);
            }
        },
        spec);
}

DiffusionSchedule::DiffusionSchedule(std::vector<double> betas) : betas_(std::move(betas)) {
    if (betas_.empty()) throw std::invalid_argument("schedule needs at least one step");
    alphas_cum_.reserve(betas_.size() + 1);
    alphas_cum_.push_back(1.0);
    for (double b : betas_) {
        if (!(b > 0.0 && b < 1.0)) throw std::invalid_argument("beta must lie in (0,1), got " + std::to_string(b));
        alphas_cum_.push_back(alphas_cum_.back() * (1.0 - b));
    }
    if (!(alphas_cum_.back() > 0.0)) throw std::invalid_argument("cumulative alpha underflowed to zero");
}

double DiffusionSchedule::alpha_cum(std::size_t t) const {
    if (t >= alphas_cum_.size()) {
        throw std::out_of_range("timestep " + std::to_string(t) + " outside [0, " + std::to_string(steps()) + "]");
    }
    return alphas_cum_[t];
}

DiffusionSchedule make_schedule(std::size_t steps, const BetaSpec& spec) {
    if (steps == 0) throw std::invalid_argument("schedule step count must be >= 1");
    return std::visit(
        [&](const auto& s) -> DiffusionSchedule {
            using S = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<S, ConstantBeta>) {
                return DiffusionSchedule(std::vector<double>(steps, s.beta));
            } else if constexpr (std::is_same_v<S, LinearBeta>) {
                return DiffusionSchedule(linear_betas(steps, s.start, s.end));
            } else {
                if (steps > s.base_steps) {
                    throw std::invalid_argument("strided schedule cannot have more steps than its base");
                }
                const auto base = DiffusionSchedule(linear_betas(s.base_steps, s.start, s.end));
                std::vector<double> betas(steps);
                double prev = 1.0;
                for (std::size_t k = 1; k <= steps; ++k) {
                    // Evenly spaced base timesteps ending exactly at base_steps.
                    const auto idx = static_cast<std::size_t>(
                        std::llround(static_cast<double>(k) * static_cast<double>(s.base_steps) / static_cast<double>(steps)));
                    const double a = base.alpha_cum(idx);
                    betas[k - 1] = 1.0 - a / prev;
                    prev = a;
                }
                return DiffusionSchedule(std::move(betas));
            }
        },
        spec);
}

StepCoefficients ddim_coefficients(const DiffusionSchedule& sched, std::size_t from, std::size_t to) {
    const double a_from = sched.alpha_cum(from);
    const double a_to = sched.alpha_cum(to);
    const double z_scale = std::sqrt(a_to) / std::sqrt(a_from);
    const double eps_scale =
        std::sqrt(a_to) * (std::sqrt((1.0 - a_to) / a_to) - std::sqrt((1.0 - a_from) / a_from));
    return {z_scale, eps_scale};
}

LatentTensor dn_step(const LatentTensor& z_t, std::size_t t, const LatentTensor& eps_pred,
                     const DiffusionSchedule& sched) {
    if (t < 1 || t > sched.steps()) {
        throw std::out_of_range("dn_step: t=" + std::to_string(t) + " outside [1, " + std::to_string(sched.steps()) + "]");
    }
    require_same_shape(z_t, eps_pred, "dn_step");
    const auto c = ddim_coefficients(sched, t, t - 1);
    return linear_combination(c.z_scale, z_t, c.eps_scale, eps_pred);
}

LatentTensor inv_step(const LatentTensor& z_t, std::size_t t, const LatentTensor& eps_pred,
                      const DiffusionSchedule& sched) {
    if (t >= sched.steps()) {
        throw std::out_of_range("inv_step: t=" + std::to_string(t) + " outside [0, " + std::to_string(sched.steps() - 1) + "]");
    }
    require_same_shape(z_t, eps_pred, "inv_step");
    const auto c = ddim_coefficients(sched, t, t + 1);
    return linear_combination(c.z_scale, z_t, c.eps_scale, eps_pred);
}

}  // namespace pos
