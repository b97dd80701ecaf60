// Copyright (C) 2026 pos-diffusion contributors
// SPDX-License-Identifier: Apache-2.0

#include "pos/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

namespace pos {

std::string Shape::str() const {
    std::ostringstream os;
    os << "(" << frames << "," << channels << "," << height << "," << width << ")";
    return os.str();
}

LatentTensor::LatentTensor(Shape shape, double fill) : shape_(shape), data_(shape.numel(), fill) {}

LatentTensor::LatentTensor(Shape shape, std::vector<double> data) : shape_(shape), data_(std::move(data)) {
    if (data_.size() != shape_.numel()) {
        throw std::invalid_argument("tensor data size " + std::to_string(data_.size()) +
                                    " does not match shape " + shape_.str());
    }
}

std::span<double> LatentTensor::frame(std::size_t f) {
    const auto n = shape_.frame_size();
    return std::span<double>(data_).subspan(f * n, n);
}

std::span<const double> LatentTensor::frame(std::size_t f) const {
    const auto n = shape_.frame_size();
    return std::span<const double>(data_).subspan(f * n, n);
}

bool LatentTensor::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

LatentTensor& LatentTensor::operator+=(const LatentTensor& other) {
    require_same_shape(*this, other, "operator+=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
    return *this;
}

LatentTensor& LatentTensor::operator-=(const LatentTensor& other) {
    require_same_shape(*this, other, "operator-=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
    return *this;
}

LatentTensor& LatentTensor::operator*=(double s) {
    for (auto& v : data_) v *= s;
    return *this;
}

LatentTensor LatentTensor::gaussian(Shape shape, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    LatentTensor out(shape);
    for (auto& v : out.data_) v = normal(rng);
    return out;
}

LatentTensor operator+(LatentTensor a, const LatentTensor& b) { return a += b; }
LatentTensor operator-(LatentTensor a, const LatentTensor& b) { return a -= b; }
LatentTensor operator*(double s, LatentTensor a) { return a *= s; }

LatentTensor linear_combination(double a, const LatentTensor& x, double b, const LatentTensor& y) {
    require_same_shape(x, y, "linear_combination");
    LatentTensor out(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = a * x[i] + b * y[i];
    return out;
}

double l2_norm(const LatentTensor& t) {
    double s = 0.0;
    for (double v : t.data()) s += v * v;
    return std::sqrt(s);
}

double max_abs_diff(const LatentTensor& a, const LatentTensor& b) {
    require_same_shape(a, b, "max_abs_diff");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

double mean_squared_diff(const LatentTensor& a, const LatentTensor& b) {
    require_same_shape(a, b, "mean_squared_diff");
    if (a.size() == 0) return 0.0;
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s / static_cast<double>(a.size());
}

LatentTensor round_to_f32(LatentTensor t) {
    for (auto& v : t.data()) v = static_cast<double>(static_cast<float>(v));
    return t;
}

void require_same_shape(const LatentTensor& a, const LatentTensor& b, const char* what) {
    if (a.shape() != b.shape()) {
        throw std::invalid_argument(std::string(what) + ": shape mismatch " + a.shape().str() + " vs " +
                                    b.shape().str());
    }
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

}  // namespace pos
