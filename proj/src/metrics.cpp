// Copyright (C) 2026 pos-diffusion contributors
// SPDX-License-Identifier: Apache-2.0

#include "pos/metrics.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace pos {
namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

MatrixXd to_matrix(const GaussianStats& s) {
    const auto d = static_cast<Eigen::Index>(s.dims());
    return Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(s.covariance.data(), d, d);
}

MatrixXd psd_sqrt(const MatrixXd& m) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(0.5 * (m + m.transpose()));
    const VectorXd root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return eig.eigenvectors() * root.asDiagonal() * eig.eigenvectors().transpose();
}

}  // namespace

void FeatureSet::validate() const {
    const auto d = dims();
    for (const auto& v : vectors) {
        if (v.size() != d) throw std::invalid_argument("feature set '" + source_tag + "' has mixed dims");
        for (double x : v) {
            if (!std::isfinite(x)) throw std::invalid_argument("feature set '" + source_tag + "' has non-finite entries");
        }
    }
}

GaussianStats fit_gaussian(const FeatureSet& features) {
    features.validate();
    const std::size_t n = features.vectors.size();
    if (n < 2) throw std::invalid_argument("need at least 2 feature vectors for a covariance");
    const std::size_t d = features.dims();
    GaussianStats s;
    s.mean.assign(d, 0.0);
    for (const auto& v : features.vectors) {
        for (std::size_t i = 0; i < d; ++i) s.mean[i] += v[i];
    }
    for (double& m : s.mean) m /= static_cast<double>(n);
    s.covariance.assign(d * d, 0.0);
    for (const auto& v : features.vectors) {
        for (std::size_t i = 0; i < d; ++i) {
            const double di = v[i] - s.mean[i];
            for (std::size_t j = i; j < d; ++j) s.covariance[i * d + j] += di * (v[j] - s.mean[j]);
        }
    }
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = i; j < d; ++j) {
            s.covariance[i * d + j] /= static_cast<double>(n - 1);
            s.covariance[j * d + i] = s.covariance[i * d + j];
        }
    }
    return s;
}

double frechet_distance(const GaussianStats& a, const GaussianStats& b) {
    if (a.dims() != b.dims()) {
        throw std::invalid_argument("frechet_distance: dims mismatch " + std::to_string(a.dims()) + " vs " +
                                    std::to_string(b.dims()));
    }
    if (a.covariance.size() != a.dims() * a.dims() || b.covariance.size() != b.dims() * b.dims()) {
        throw std::invalid_argument("frechet_distance: covariance size does not match mean");
    }
    double mean_term = 0.0;
    for (std::size_t i = 0; i < a.dims(); ++i) mean_term += (a.mean[i] - b.mean[i]) * (a.mean[i] - b.mean[i]);

    const MatrixXd sa = to_matrix(a);
    const MatrixXd sb = to_matrix(b);
    const MatrixXd root_a = psd_sqrt(sa);
    const MatrixXd inner = root_a * sb * root_a;
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(0.5 * (inner + inner.transpose()), Eigen::EigenvaluesOnly);
    const double tr_sqrt = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
    const double fd = mean_term + sa.trace() + sb.trace() - 2.0 * tr_sqrt;
    return std::max(0.0, fd);
}

double frechet_distance(const FeatureSet& a, const FeatureSet& b) {
    if (a.dims() != b.dims()) throw std::invalid_argument("frechet_distance: feature dims mismatch");
    return frechet_distance(fit_gaussian(a), fit_gaussian(b));
}

double inception_score(const std::vector<std::vector<double>>& class_probs) {
    if (class_probs.empty()) throw std::invalid_argument("inception_score: no rows");
    const std::size_t c = class_probs.front().size();
    std::vector<double> marginal(c, 0.0);
    for (const auto& row : class_probs) {
        if (row.size() != c) throw std::invalid_argument("inception_score: rows have different class counts");
        double sum = 0.0;
        for (double p : row) {
            if (!(p >= 0.0)) throw std::invalid_argument("inception_score: negative probability");
            sum += p;
        }
        if (std::abs(sum - 1.0) > 1e-6) throw std::invalid_argument("inception_score: row does not sum to 1");
        for (std::size_t i = 0; i < c; ++i) marginal[i] += row[i];
    }
    for (double& m : marginal) m /= static_cast<double>(class_probs.size());
    double kl_sum = 0.0;
    for (const auto& row : class_probs) {
        for (std::size_t i = 0; i < c; ++i) {
            if (row[i] > 0.0) kl_sum += row[i] * (std::log(row[i]) - std::log(marginal[i]));
        }
    }
    return std::exp(kl_sum / static_cast<double>(class_probs.size()));
}

double prompt_similarity(const std::vector<EmbeddingVector>& frames, const EmbeddingVector& prompt) {
    if (frames.empty()) throw std::invalid_argument("prompt_similarity: no frames");
    double sum = 0.0;
    for (const auto& f : frames) sum += cosine(f, prompt);
    return sum / static_cast<double>(frames.size());
}

FrameRole parse_frame_role(const std::string& text) {
    if (text == "real") return FrameRole::real;
    if (text == "generated") return FrameRole::generated;
    if (text == "real_fvd") return FrameRole::real_fvd;
    throw std::invalid_argument("unknown frame role '" + text + "' (real|generated|real_fvd)");
}

FrameSamplePlan plan_frames(std::size_t total_frames, FrameRole role) {
    FrameSamplePlan plan;
    plan.role = role;
    switch (role) {
        case FrameRole::real: plan.per_video_count = 5, plan.stride = 12; break;
        case FrameRole::generated: plan.per_video_count = 5, plan.stride = 4; break;
        case FrameRole::real_fvd: plan.per_video_count = 16, plan.stride = 5; break;
    }
    const std::size_t span = (plan.per_video_count - 1) * plan.stride;
    if (total_frames < span || total_frames == 0) {
        throw std::invalid_argument("video has " + std::to_string(total_frames) + " frames; sampling needs at least " +
                                    std::to_string(std::max<std::size_t>(span, 1)));
    }
    for (std::size_t i = 0; i < plan.per_video_count; ++i) {
        plan.indices.push_back(std::min(i * plan.stride, total_frames - 1));
    }
    return plan;
}

std::vector<double> PooledFrameFeatures::frame_features(std::span<const double> frame, const Shape& shape) const {
    const std::size_t gh = (shape.height + cell_ - 1) / cell_;
    const std::size_t gw = (shape.width + cell_ - 1) / cell_;
    std::vector<double> out(shape.channels * gh * gw, 0.0);
    std::vector<double> counts(out.size(), 0.0);
    double mass = 0.0, cx = 0.0, cy = 0.0, sum = 0.0, sq = 0.0;
    for (std::size_t c = 0; c < shape.channels; ++c) {
        for (std::size_t y = 0; y < shape.height; ++y) {
            for (std::size_t x = 0; x < shape.width; ++x) {
                const double v = frame[(c * shape.height + y) * shape.width + x];
                const std::size_t cell = (c * gh + y / cell_) * gw + x / cell_;
                out[cell] += v;
                counts[cell] += 1.0;
                const double w = std::max(v, 0.0);
                mass += w;
                cx += w * static_cast<double>(x);
                cy += w * static_cast<double>(y);
                sum += v;
                sq += v * v;
            }
        }
    }
    for (std::size_t i = 0; i < out.size(); ++i) out[i] /= counts[i];
    const double n = static_cast<double>(frame.size());
    const double mean = sum / n;
    out.push_back(mass > 0.0 ? cx / mass / static_cast<double>(shape.width) : 0.5);
    out.push_back(mass > 0.0 ? cy / mass / static_cast<double>(shape.height) : 0.5);
    out.push_back(mean);
    out.push_back(std::sqrt(std::max(0.0, sq / n - mean * mean)));
    return out;
}

std::string SignatureFeatures::signature(std::span<const double> frame, const Shape& shape) const {
    // Coarse 4x4 grid of mean intensities, each quantized to a letter.
    const std::size_t cell_h = std::max<std::size_t>(1, shape.height / 4);
    const std::size_t cell_w = std::max<std::size_t>(1, shape.width / 4);
    std::string sig;
    for (std::size_t c = 0; c < shape.channels; ++c) {
        for (std::size_t gy = 0; gy * cell_h < shape.height; ++gy) {
            for (std::size_t gx = 0; gx * cell_w < shape.width; ++gx) {
                double s = 0.0;
                std::size_t n = 0;
                for (std::size_t y = gy * cell_h; y < std::min(shape.height, (gy + 1) * cell_h); ++y) {
                    for (std::size_t x = gx * cell_w; x < std::min(shape.width, (gx + 1) * cell_w); ++x) {
                        s += frame[(c * shape.height + y) * shape.width + x];
                        ++n;
                    }
                }
                const double v = std::clamp(s / static_cast<double>(n), -1.0, 1.0);
                const auto level = static_cast<std::size_t>(std::lround((v + 1.0) / 2.0 * static_cast<double>(levels_ - 1)));
                sig.push_back(static_cast<char>('a' + level));
            }
            sig.push_back(' ');
        }
    }
    return sig;
}

std::vector<double> SignatureFeatures::frame_features(std::span<const double> frame, const Shape& shape) const {
    return embedder_->embed(signature(frame, shape)).values();
}

FeatureSet extract_features(const std::vector<LatentTensor>& videos, const FeatureExtractor& extractor,
                            const std::vector<std::size_t>& indices, std::string tag) {
    FeatureSet set;
    set.source_tag = tag.empty() ? extractor.tag() : std::move(tag);
    for (const auto& video : videos) {
        const auto& shape = video.shape();
        if (indices.empty()) {
            for (std::size_t f = 0; f < shape.frames; ++f) set.vectors.push_back(extractor.frame_features(video.frame(f), shape));
        } else {
            for (auto f : indices) {
                if (f >= shape.frames) throw std::out_of_range("frame index " + std::to_string(f) + " out of range");
                set.vectors.push_back(extractor.frame_features(video.frame(f), shape));
            }
        }
    }
    return set;
}

double sign_test_p_value(std::size_t wins, std::size_t trials) {
    if (wins > trials) throw std::invalid_argument("sign test: wins > trials");
    // Sum of C(n, k) / 2^n in log space.
    double p = 0.0;
    for (std::size_t k = wins; k <= trials; ++k) {
        const double log_term = std::lgamma(static_cast<double>(trials) + 1) - std::lgamma(static_cast<double>(k) + 1) -
                                std::lgamma(static_cast<double>(trials - k) + 1) -
                                static_cast<double>(trials) * std::log(2.0);
        p += std::exp(log_term);
    }
    return std::min(1.0, p);
}

void write_metric_records(std::ostream& out, const std::vector<MetricRecord>& records) {
    for (const auto& r : records) {
        std::ostringstream v;
        v << std::setprecision(17) << r.value;
        out << "metric=" << r.metric << "\tvalue=" << v.str() << "\tconfig=" << r.config_hash << "\tarm=" << r.arm;
        if (!r.detail.empty()) out << "\tdetail=" << r.detail;
        out << "\n";
    }
}

void write_metric_table(std::ostream& out, const std::vector<MetricRecord>& records) {
    std::size_t w_metric = 6, w_arm = 3;
    for (const auto& r : records) {
        w_metric = std::max(w_metric, r.metric.size());
        w_arm = std::max(w_arm, r.arm.size());
    }
    out << std::left << std::setw(static_cast<int>(w_arm)) << "arm" << "  " << std::setw(static_cast<int>(w_metric))
        << "metric" << "  " << std::right << std::setw(14) << "value" << "  detail\n";
    for (const auto& r : records) {
        out << std::left << std::setw(static_cast<int>(w_arm)) << r.arm << "  " << std::setw(static_cast<int>(w_metric))
            << r.metric << "  " << std::right << std::setw(14) << std::setprecision(6) << r.value << "  " << r.detail
            << "\n";
    }
}

std::string render_svg_plot(const std::string& title, const std::vector<std::string>& x_labels,
                            const std::vector<PlotSeries>& series) {
    constexpr double W = 640, H = 400, left = 60, right = 20, top = 40, bottom = 50;
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& s : series) {
        for (double v : s.values) {
            if (std::isfinite(v)) lo = std::min(lo, v), hi = std::max(hi, v);
        }
    }
    if (!std::isfinite(lo)) lo = 0.0, hi = 1.0;
    if (hi == lo) hi = lo + 1.0;
    const std::size_t n = std::max<std::size_t>(x_labels.size(), 1);
    auto px = [&](std::size_t i) { return left + (n == 1 ? 0.5 : static_cast<double>(i) / static_cast<double>(n - 1)) * (W - left - right); };
    auto py = [&](double v) { return top + (hi - v) / (hi - lo) * (H - top - bottom); };
    static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};

    std::ostringstream svg;
    svg << std::fixed << std::setprecision(2);
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
    svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    svg << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\">" << title << "</text>\n";
    svg << "<line x1=\"" << left << "\" y1=\"" << H - bottom << "\" x2=\"" << W - right << "\" y2=\"" << H - bottom
        << "\" stroke=\"black\"/>\n";
    svg << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << H - bottom << "\" stroke=\"black\"/>\n";
    for (std::size_t i = 0; i < x_labels.size(); ++i) {
        svg << "<text x=\"" << px(i) << "\" y=\"" << H - bottom + 18 << "\" text-anchor=\"middle\" font-size=\"11\" "
            << "font-family=\"sans-serif\">" << x_labels[i] << "</text>\n";
    }
    svg << "<text x=\"" << left - 6 << "\" y=\"" << py(hi) + 4 << "\" text-anchor=\"end\" font-size=\"11\">"
        << std::setprecision(4) << hi << "</text>\n";
    svg << "<text x=\"" << left - 6 << "\" y=\"" << py(lo) + 4 << "\" text-anchor=\"end\" font-size=\"11\">" << lo
        << "</text>\n";
    svg << std::setprecision(2);
    for (std::size_t s = 0; s < series.size(); ++s) {
        const char* color = colors[s % 5];
        svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
        for (std::size_t i = 0; i < series[s].values.size() && i < n; ++i) {
            if (std::isfinite(series[s].values[i])) svg << px(i) << "," << py(series[s].values[i]) << " ";
        }
        svg << "\"/>\n";
        svg << "<text x=\"" << W - right - 4 << "\" y=\"" << top + 14 * static_cast<double>(s + 1)
            << "\" text-anchor=\"end\" font-size=\"11\" fill=\"" << color << "\">" << series[s].name << "</text>\n";
    }
    svg << "</svg>\n";
    return svg.str();
}

}  // namespace pos
