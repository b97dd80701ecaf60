// Copyright (C) 2026 pos-diffusion contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "pos/tensor.hpp"

namespace pos {

/// Procedural "moving blob" videos with templated captions of the form
/// "a {small|large} {bright|faint} blob moves {right|left|up|down} {slowly|quickly}".
struct BlobAttributes {
    bool large = false;
    bool bright = true;
    enum class Direction { right, left, up, down } direction = Direction::right;
    bool quick = false;

    std::string caption() const;
};

struct ToyVideoSpec {
    std::size_t frames = 8;
    std::size_t height = 16;
    std::size_t width = 16;
    /// Latent value = (intensity + offset) * scale; the defaults bring the
    /// dataset to roughly zero mean and unit variance.
    double latent_offset = -0.12;
    double latent_scale = 3.5;

    Shape shape() const { return {frames, 1, height, width}; }
};

enum class ToySplit : std::uint64_t { train = 0, eval = 1 };

struct ToySample {
    BlobAttributes attributes;
    std::string caption;
    LatentTensor latent;
};

/// `count` samples, deterministic in (seed, split). Train and eval draw from
/// disjoint seed streams.
std::vector<ToySample> make_toy_dataset(std::size_t count, std::uint64_t seed, ToySplit split = ToySplit::train,
                                        const ToyVideoSpec& spec = {});

/// Renders one video for the given attributes; `jitter_seed` sets the start offset.
LatentTensor render_blob_video(const BlobAttributes& attrs, std::uint64_t jitter_seed, const ToyVideoSpec& spec = {});

std::vector<std::pair<std::string, LatentTensor>> as_pairs(const std::vector<ToySample>& samples);

/// Intensity-weighted centroid (x, y) of one frame, weighting by max(v - floor, 0).
std::pair<double, double> frame_centroid(const LatentTensor& video, std::size_t frame, double floor = 0.0);

/// Grayscale PGM (P5) with frames tiled horizontally; values mapped from [lo, hi].
std::string render_pgm(const LatentTensor& video, double lo = -1.0, double hi = 7.0);

}  // namespace pos
