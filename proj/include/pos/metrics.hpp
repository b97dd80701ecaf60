// Copyright (C) 2026 pos-diffusion contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <memory>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "pos/embedder.hpp"
#include "pos/tensor.hpp"

namespace pos {

struct FeatureSet {
    std::vector<std::vector<double>> vectors;
    std::string source_tag;

    std::size_t dims() const { return vectors.empty() ? 0 : vectors.front().size(); }
    void validate() const;
};

/// Mean and covariance of a Gaussian fitted to features.
struct GaussianStats {
    std::vector<double> mean;
    /// Row-major dims x dims.
    std::vector<double> covariance;

    std::size_t dims() const { return mean.size(); }
};

/// Sample mean and unbiased (n - 1) covariance; needs >= 2 vectors.
GaussianStats fit_gaussian(const FeatureSet& features);

/// ||mu_a - mu_b||^2 + Tr(S_a + S_b - 2 (S_a S_b)^{1/2}). The trace of the
/// square root is taken from the eigenvalues of S_a^{1/2} S_b S_a^{1/2}, with
/// negative eigenvalues clamped to zero.
double frechet_distance(const GaussianStats& a, const GaussianStats& b);
double frechet_distance(const FeatureSet& a, const FeatureSet& b);

/// exp(mean_x KL(p(y|x) || p(y))). Rows must be probability vectors.
double inception_score(const std::vector<std::vector<double>>& class_probs);

/// Mean cosine between each frame embedding and the prompt embedding.
double prompt_similarity(const std::vector<EmbeddingVector>& frames, const EmbeddingVector& prompt);

enum class FrameRole {
    real,       // real video, image metrics: 5 frames, every 12th
    generated,  // generated video, image metrics: 5 frames, every 4th
    real_fvd,   // real video, video metrics: 16 frames, every 5th
};

FrameRole parse_frame_role(const std::string& text);

struct FrameSamplePlan {
    std::size_t per_video_count = 0;
    std::size_t stride = 0;
    FrameRole role = FrameRole::generated;
    std::vector<std::size_t> indices;
};

/// Indices i * stride, i < per_video_count, with the last one clamped to the
/// final frame when it would run past the end (16-frame generated videos give
/// {0, 4, 8, 12, 15}). Requires total_frames >= (count - 1) * stride.
FrameSamplePlan plan_frames(std::size_t total_frames, FrameRole role);

/// Maps a latent video to one feature vector per frame.
class FeatureExtractor {
public:
    virtual ~FeatureExtractor() = default;
    virtual std::string tag() const = 0;
    virtual std::vector<double> frame_features(std::span<const double> frame, const Shape& shape) const = 0;
};

/// Average-pooled grid (cell x cell blocks per channel) plus the intensity
/// centroid (x, y) and the frame's mean and standard deviation.
class PooledFrameFeatures final : public FeatureExtractor {
public:
    explicit PooledFrameFeatures(std::size_t cell = 4) : cell_(cell) {}
    std::string tag() const override { return "pooled:" + std::to_string(cell_); }
    std::vector<double> frame_features(std::span<const double> frame, const Shape& shape) const override;

private:
    std::size_t cell_;
};

/// Embeds a quantized text signature of the frame with a text embedder.
class SignatureFeatures final : public FeatureExtractor {
public:
    explicit SignatureFeatures(std::shared_ptr<const Embedder> embedder, std::size_t levels = 8)
        : embedder_(std::move(embedder)), levels_(levels) {}
    std::string tag() const override { return "signature:" + embedder_->tag(); }
    std::vector<double> frame_features(std::span<const double> frame, const Shape& shape) const override;

    std::string signature(std::span<const double> frame, const Shape& shape) const;

private:
    std::shared_ptr<const Embedder> embedder_;
    std::size_t levels_;
};

/// Features of the selected frames (all frames when `indices` is empty) of every video.
FeatureSet extract_features(const std::vector<LatentTensor>& videos, const FeatureExtractor& extractor,
                            const std::vector<std::size_t>& indices = {}, std::string tag = {});

/// One-sided sign test: P(X >= wins) for X ~ Binomial(trials, 1/2).
double sign_test_p_value(std::size_t wins, std::size_t trials);

struct MetricRecord {
    std::string metric;
    double value = 0.0;
    std::string config_hash;
    std::string arm;
    std::string detail;
};

/// One "metric=..\tvalue=..\tconfig=..\tarm=..\tdetail=.." line per record.
void write_metric_records(std::ostream& out, const std::vector<MetricRecord>& records);
void write_metric_table(std::ostream& out, const std::vector<MetricRecord>& records);

struct PlotSeries {
    std::string name;
    std::vector<double> values;
};

/// Line plot of each series against categorical x labels.
std::string render_svg_plot(const std::string& title, const std::vector<std::string>& x_labels,
                            const std::vector<PlotSeries>& series);

}  // namespace pos
