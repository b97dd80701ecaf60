// Copyright (C) 2026 pos-diffusion contributors
// SPDX-License-Identifier: Apache-2.0

#include "pos/toy.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace pos {

std::string BlobAttributes::caption() const {
    static const char* directions[] = {"right", "left", "up", "down"};
    std::string c = "a ";
    c += large ? "large " : "small ";
    c += bright ? "bright " : "faint ";
    c += "blob moves ";
    c += directions[static_cast<int>(direction)];
    c += quick ? " quickly" : " slowly";
    return c;
}

LatentTensor render_blob_video(const BlobAttributes& attrs, std::uint64_t jitter_seed, const ToyVideoSpec& spec) {
    if (spec.frames == 0 || spec.height == 0 || spec.width == 0) throw std::invalid_argument("empty toy video spec");
    std::mt19937_64 rng(jitter_seed);
    std::uniform_real_distribution<double> along(-1.0, 1.0);
    std::uniform_real_distribution<double> across(-3.0, 3.0);

    const double sigma = attrs.large ? 2.2 : 1.2;
    const double amp = attrs.bright ? 2.0 : 1.0;
    const double speed = attrs.quick ? 1.4 : 0.6;
    const double travel = speed * static_cast<double>(spec.frames - 1);
    const double cx = (static_cast<double>(spec.width) - 1.0) / 2.0;
    const double cy = (static_cast<double>(spec.height) - 1.0) / 2.0;

    double dx = 0.0, dy = 0.0;
    using D = BlobAttributes::Direction;
    switch (attrs.direction) {
        case D::right: dx = speed; break;
        case D::left: dx = -speed; break;
        case D::up: dy = -speed; break;
        case D::down: dy = speed; break;
    }
    const bool horizontal = dx != 0.0;
    const double jitter_along = along(rng);
    const double jitter_across = across(rng);
    // Trajectory centred on the frame, shifted by the jitter.
    double x0 = cx - 0.5 * travel * (dx > 0 ? 1 : dx < 0 ? -1 : 0) + (horizontal ? jitter_along : jitter_across);
    double y0 = cy - 0.5 * travel * (dy > 0 ? 1 : dy < 0 ? -1 : 0) + (horizontal ? jitter_across : jitter_along);

    LatentTensor video(spec.shape());
    for (std::size_t f = 0; f < spec.frames; ++f) {
        const double bx = x0 + dx * static_cast<double>(f);
        const double by = y0 + dy * static_cast<double>(f);
        auto frame = video.frame(f);
        for (std::size_t y = 0; y < spec.height; ++y) {
            for (std::size_t x = 0; x < spec.width; ++x) {
                const double ddx = static_cast<double>(x) - bx;
                const double ddy = static_cast<double>(y) - by;
                const double intensity = amp * std::exp(-(ddx * ddx + ddy * ddy) / (2.0 * sigma * sigma));
                frame[y * spec.width + x] = (intensity + spec.latent_offset) * spec.latent_scale;
            }
        }
    }
    return video;
}

std::vector<ToySample> make_toy_dataset(std::size_t count, std::uint64_t seed, ToySplit split, const ToyVideoSpec& spec) {
    std::vector<ToySample> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        const std::uint64_t sample_seed = derive_seed(seed, 2 * static_cast<std::uint64_t>(i) + static_cast<std::uint64_t>(split));
        std::mt19937_64 rng(sample_seed);
        std::uniform_int_distribution<int> coin(0, 1);
        std::uniform_int_distribution<int> dir(0, 3);
        BlobAttributes a;
        a.large = coin(rng) == 1;
        a.bright = coin(rng) == 1;
        a.direction = static_cast<BlobAttributes::Direction>(dir(rng));
        a.quick = coin(rng) == 1;
        out.push_back({a, a.caption(), render_blob_video(a, rng(), spec)});
    }
    return out;
}

std::vector<std::pair<std::string, LatentTensor>> as_pairs(const std::vector<ToySample>& samples) {
    std::vector<std::pair<std::string, LatentTensor>> pairs;
    pairs.reserve(samples.size());
    for (const auto& s : samples) pairs.emplace_back(s.caption, s.latent);
    return pairs;
}

std::pair<double, double> frame_centroid(const LatentTensor& video, std::size_t frame, double floor) {
    const auto& s = video.shape();
    const auto data = video.frame(frame);
    double mass = 0.0, cx = 0.0, cy = 0.0;
    for (std::size_t c = 0; c < s.channels; ++c) {
        for (std::size_t y = 0; y < s.height; ++y) {
            for (std::size_t x = 0; x < s.width; ++x) {
                const double v = std::max(0.0, data[(c * s.height + y) * s.width + x] - floor);
                mass += v;
                cx += v * static_cast<double>(x);
                cy += v * static_cast<double>(y);
            }
        }
    }
    if (mass == 0.0) return {0.0, 0.0};
    return {cx / mass, cy / mass};
}

std::string render_pgm(const LatentTensor& video, double lo, double hi) {
    const auto& s = video.shape();
    const std::size_t width = s.frames * s.width;
    std::string out = "P5\n" + std::to_string(width) + " " + std::to_string(s.height) + "\n255\n";
    for (std::size_t y = 0; y < s.height; ++y) {
        for (std::size_t f = 0; f < s.frames; ++f) {
            const auto frame = video.frame(f);
            for (std::size_t x = 0; x < s.width; ++x) {
                const double v = (frame[y * s.width + x] - lo) / (hi - lo);
                out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(255.0 * std::clamp(v, 0.0, 1.0)))));
            }
        }
    }
    return out;
}

}  // namespace pos
