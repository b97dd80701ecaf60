// Copyright (C) 2026 pos-diffusion contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace pos {

/// Frames x channels x height x width.
struct Shape {
    std::size_t frames = 0;
    std::size_t channels = 0;
    std::size_t height = 0;
    std::size_t width = 0;

    std::size_t frame_size() const { return channels * height * width; }
    std::size_t numel() const { return frames * frame_size(); }
    std::array<std::size_t, 4> dims() const { return {frames, channels, height, width}; }
    std::string str() const;

    bool operator==(const Shape&) const = default;
};

/// Rank-4 real array used for latent videos and noise alike. Row-major, so each
/// frame is a contiguous block of frame_size() values.
class LatentTensor {
public:
    LatentTensor() = default;
    explicit LatentTensor(Shape shape, double fill = 0.0);
    LatentTensor(Shape shape, std::vector<double> data);

    const Shape& shape() const { return shape_; }
    std::size_t size() const { return data_.size(); }

    std::span<double> data() { return data_; }
    std::span<const double> data() const { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    std::span<double> frame(std::size_t f);
    std::span<const double> frame(std::size_t f) const;

    bool all_finite() const;

    LatentTensor& operator+=(const LatentTensor& other);
    LatentTensor& operator-=(const LatentTensor& other);
    LatentTensor& operator*=(double s);

    bool operator==(const LatentTensor&) const = default;

    static LatentTensor gaussian(Shape shape, std::uint64_t seed);

private:
    Shape shape_;
    std::vector<double> data_;
};

LatentTensor operator+(LatentTensor a, const LatentTensor& b);
LatentTensor operator-(LatentTensor a, const LatentTensor& b);
LatentTensor operator*(double s, LatentTensor a);

/// a*x + b*y, elementwise.
LatentTensor linear_combination(double a, const LatentTensor& x, double b, const LatentTensor& y);

double l2_norm(const LatentTensor& t);
double max_abs_diff(const LatentTensor& a, const LatentTensor& b);
double mean_squared_diff(const LatentTensor& a, const LatentTensor& b);

/// Rounds every element through float32, the storage precision of every file format.
LatentTensor round_to_f32(LatentTensor t);

void require_same_shape(const LatentTensor& a, const LatentTensor& b, const char* what);

/// Mixes a base seed with a stream tag into an independent 64-bit seed (splitmix64).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace pos
