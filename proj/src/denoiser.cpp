// Copyright (C) 2026 pos-diffusion contributors
// SPDX-License-Identifier: Apache-2.0

#include "pos/denoiser.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <cstring>
#include <numbers>
#include <random>
#include <stdexcept>

#include "pos/binary_io.hpp"

namespace pos {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using MatMap = Eigen::Map<MatrixXd>;
using ConstMatMap = Eigen::Map<const MatrixXd>;
using VecMap = Eigen::Map<VectorXd>;
using ConstVecMap = Eigen::Map<const VectorXd>;

void NoisePredictor::check_condition(const Condition& c) const {
    if (c.width() != condition_width()) {
        throw std::invalid_argument("condition width " + std::to_string(c.width()) + " does not match predictor width " +
                                    std::to_string(condition_width()));
    }
}

LatentTensor ZeroPredictor::predict(const LatentTensor& z_t, std::size_t, const Condition& c) const {
    check_condition(c);
    return LatentTensor(z_t.shape(), 0.0);
}

LatentTensor ConstantPredictor::predict(const LatentTensor& z_t, std::size_t, const Condition& c) const {
    check_condition(c);
    return LatentTensor(z_t.shape(), value_);
}

void DenoiserSpec::validate() const {
    if (condition_width < 1 || hidden_width < 1 || layer_count < 1 || embed_width < 2 || channels < 1 || height < 1 ||
        width < 1) {
        throw std::invalid_argument("denoiser spec widths must be >= 1 (embed_width >= 2)");
    }
}

std::vector<double> sinusoidal_encoding(double position, std::size_t width) {
    std::vector<double> out(width);
    const std::size_t half = width / 2;
    for (std::size_t i = 0; i < half; ++i) {
        const double freq = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(half));
        out[i] = std::sin(position * freq);
        out[half + i] = std::cos(position * freq);
    }
    return out;
}

// Offsets of each parameter block inside the flat vector.
struct MlpDenoiser::Layout {
    std::size_t in, hidden, ctx;
    std::size_t w_in, w_ctx, b_in;
    std::vector<std::size_t> w1, b1, w2, b2;
    std::size_t w_out, b_out;
    std::size_t skip;  // embed_width weights on temb(t), then a bias
    std::size_t total;

    explicit Layout(const DenoiserSpec& s)
        : in(s.frame_size()), hidden(s.hidden_width), ctx(2 * std::size_t{s.embed_width} + s.condition_width) {
        std::size_t off = 0;
        auto take = [&](std::size_t n) {
            const auto at = off;
            off += n;
            return at;
        };
        w_in = take(hidden * in);
        w_ctx = take(hidden * ctx);
        b_in = take(hidden);
        for (std::uint32_t l = 0; l < s.layer_count; ++l) {
            w1.push_back(take(hidden * hidden));
            b1.push_back(take(hidden));
            w2.push_back(take(hidden * hidden));
            b2.push_back(take(hidden));
        }
        w_out = take(in * hidden);
        b_out = take(in);
        skip = take(s.embed_width + 1);
        total = off;
    }
};

namespace {

void fill_context(MatrixXd& ctx, Eigen::Index col, std::size_t t, std::size_t frame, const Condition& c,
                  std::size_t embed_width) {
    const auto te = sinusoidal_encoding(static_cast<double>(t), embed_width);
    const auto fe = sinusoidal_encoding(static_cast<double>(frame), embed_width);
    Eigen::Index r = 0;
    for (double v : te) ctx(r++, col) = v;
    for (double v : fe) ctx(r++, col) = v;
    for (double v : c.embedding) ctx(r++, col) = v;
}

double skip_gain(const double* w, std::size_t t, std::size_t embed_width) {
    const auto te = sinusoidal_encoding(static_cast<double>(t), embed_width);
    double g = w[embed_width];
    for (std::size_t i = 0; i < embed_width; ++i) g += w[i] * te[i];
    return g;
}

}  // namespace

MlpDenoiser::MlpDenoiser(const DenoiserSpec& spec) : spec_(spec) {
    spec_.validate();
    const Layout L(spec_);
    params_.assign(L.total, 0.0);

    std::mt19937_64 rng(spec_.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    auto fill = [&](std::size_t offset, std::size_t n, double stddev) {
        for (std::size_t i = 0; i < n; ++i) params_[offset + i] = stddev * normal(rng);
    };
    const double H = static_cast<double>(L.hidden);
    fill(L.w_in, L.hidden * L.in, 1.0 / std::sqrt(static_cast<double>(L.in)));
    fill(L.w_ctx, L.hidden * L.ctx, 1.0 / std::sqrt(static_cast<double>(L.ctx)));
    for (std::uint32_t l = 0; l < spec_.layer_count; ++l) {
        fill(L.w1[l], L.hidden * L.hidden, std::sqrt(2.0 / H));
        fill(L.w2[l], L.hidden * L.hidden, 0.5 / std::sqrt(H));
    }
    if (!spec_.zero_init_output) fill(L.w_out, L.in * L.hidden, 1.0 / std::sqrt(H));
}

OutputCoefficients v_prediction_coefficients(const DiffusionSchedule& sched) {
    OutputCoefficients c;
    for (std::size_t t = 0; t <= sched.steps(); ++t) {
        const double a = sched.alpha_cum(t);
        c.skip.push_back(std::sqrt(1.0 - a));
        c.scale.push_back(std::sqrt(a));
    }
    return c;
}

namespace {

double coefficient_at(const std::vector<double>& v, std::size_t t, double fallback) {
    if (v.empty()) return fallback;
    if (t >= v.size()) throw std::out_of_range("timestep " + std::to_string(t) + " beyond output coefficients");
    return v[t];
}

}  // namespace

double MlpDenoiser::skip_at(std::size_t t) const { return coefficient_at(output_.skip, t, 0.0); }
double MlpDenoiser::scale_at(std::size_t t) const { return coefficient_at(output_.scale, t, 1.0); }

LatentTensor MlpDenoiser::predict(const LatentTensor& z_t, std::size_t t, const Condition& c) const {
    check_condition(c);
    const Shape& shape = z_t.shape();
    if (shape.channels != spec_.channels || shape.height != spec_.height || shape.width != spec_.width) {
        throw std::invalid_argument("latent shape " + shape.str() + " does not match denoiser frame shape");
    }
    const Layout L(spec_);
    const auto n = static_cast<Eigen::Index>(shape.frames);
    ConstMatMap x(z_t.data().data(), static_cast<Eigen::Index>(L.in), n);
    MatrixXd ctx(L.ctx, n);
    for (Eigen::Index f = 0; f < n; ++f) fill_context(ctx, f, t, static_cast<std::size_t>(f), c, spec_.embed_width);

    const auto H = static_cast<Eigen::Index>(L.hidden);
    const auto D = static_cast<Eigen::Index>(L.in);
    const auto K = static_cast<Eigen::Index>(L.ctx);
    const double* p = params_.data();
    MatrixXd h = ConstMatMap(p + L.w_in, H, D) * x + ConstMatMap(p + L.w_ctx, H, K) * ctx;
    h.colwise() += ConstVecMap(p + L.b_in, H);
    for (std::uint32_t l = 0; l < spec_.layer_count; ++l) {
        MatrixXd a = ConstMatMap(p + L.w1[l], H, H) * h;
        a.colwise() += ConstVecMap(p + L.b1[l], H);
        h.noalias() += ConstMatMap(p + L.w2[l], H, H) * a.cwiseMax(0.0);
        h.colwise() += ConstVecMap(p + L.b2[l], H);
    }
    LatentTensor out(shape);
    MatMap o(out.data().data(), D, n);
    o.noalias() = ConstMatMap(p + L.w_out, D, H) * h;
    o.colwise() += ConstVecMap(p + L.b_out, D);
    if (const double scale = scale_at(t); scale != 1.0) o *= scale;
    const double gain = skip_gain(p + L.skip, t, spec_.embed_width) + skip_at(t);
    if (gain != 0.0) o += gain * x;
    return out;
}

double MlpDenoiser::batch_loss(const std::vector<DenoiserSample>& samples, std::vector<double>* grad) const {
    if (samples.empty()) throw std::invalid_argument("batch_loss: empty batch");
    const Layout L(spec_);
    const auto H = static_cast<Eigen::Index>(L.hidden);
    const auto D = static_cast<Eigen::Index>(L.in);
    const auto K = static_cast<Eigen::Index>(L.ctx);

    Eigen::Index n = 0;
    for (const auto& s : samples) {
        check_condition(s.condition);
        require_same_shape(s.z_t, s.target, "batch_loss");
        if (s.z_t.shape().frame_size() != L.in) throw std::invalid_argument("batch_loss: frame size mismatch");
        n += static_cast<Eigen::Index>(s.z_t.shape().frames);
    }

    MatrixXd x(D, n), target(D, n), ctx(K, n);
    VectorXd prior(n);  // total skip gain per column
    VectorXd scale(n);
    Eigen::Index col = 0;
    for (const auto& s : samples) {
        const auto frames = static_cast<Eigen::Index>(s.z_t.shape().frames);
        x.middleCols(col, frames) = ConstMatMap(s.z_t.data().data(), D, frames);
        target.middleCols(col, frames) = ConstMatMap(s.target.data().data(), D, frames);
        const double k = skip_at(s.t) + skip_gain(params_.data() + L.skip, s.t, spec_.embed_width);
        const double sc = scale_at(s.t);
        for (Eigen::Index f = 0; f < frames; ++f) {
            fill_context(ctx, col + f, s.t, static_cast<std::size_t>(f), s.condition, spec_.embed_width);
            prior(col + f) = k;
            scale(col + f) = sc;
        }
        col += frames;
    }

    const double* p = params_.data();
    std::vector<MatrixXd> hs;  // h_0 .. h_L
    std::vector<MatrixXd> as;  // pre-activations per block
    hs.reserve(spec_.layer_count + 1);
    as.reserve(spec_.layer_count);
    {
        MatrixXd h0 = ConstMatMap(p + L.w_in, H, D) * x + ConstMatMap(p + L.w_ctx, H, K) * ctx;
        h0.colwise() += ConstVecMap(p + L.b_in, H);
        hs.push_back(std::move(h0));
    }
    for (std::uint32_t l = 0; l < spec_.layer_count; ++l) {
        MatrixXd a = ConstMatMap(p + L.w1[l], H, H) * hs.back();
        a.colwise() += ConstVecMap(p + L.b1[l], H);
        MatrixXd h = hs.back() + ConstMatMap(p + L.w2[l], H, H) * a.cwiseMax(0.0);
        h.colwise() += ConstVecMap(p + L.b2[l], H);
        as.push_back(std::move(a));
        hs.push_back(std::move(h));
    }
    MatrixXd out = ConstMatMap(p + L.w_out, D, H) * hs.back();
    out.colwise() += ConstVecMap(p + L.b_out, D);
    out = out * scale.asDiagonal();
    out += x * prior.asDiagonal();

    const MatrixXd diff = out - target;
    const double count = static_cast<double>(D * n);
    const double loss = diff.squaredNorm() / count;
    if (grad == nullptr) return loss;

    grad->assign(params_.size(), 0.0);
    double* g = grad->data();
    const MatrixXd g_out = (2.0 / count) * diff;
    const MatrixXd g_net = g_out * scale.asDiagonal();
    MatMap(g + L.w_out, D, H).noalias() = g_net * hs.back().transpose();
    VecMap(g + L.b_out, D) = g_net.rowwise().sum();
    {
        // d(gain)/d(skip) is [temb(t); 1]; the time code sits in the first ctx rows.
        const auto E = static_cast<Eigen::Index>(spec_.embed_width);
        const VectorXd per_column = g_out.cwiseProduct(x).colwise().sum().transpose();
        VecMap(g + L.skip, E) = ctx.topRows(E) * per_column;
        g[L.skip + spec_.embed_width] = per_column.sum();
    }
    MatrixXd dh = ConstMatMap(p + L.w_out, D, H).transpose() * g_net;
    for (std::uint32_t li = spec_.layer_count; li-- > 0;) {
        const MatrixXd r = as[li].cwiseMax(0.0);
        MatMap(g + L.w2[li], H, H).noalias() = dh * r.transpose();
        VecMap(g + L.b2[li], H) = dh.rowwise().sum();
        const MatrixXd dr = ConstMatMap(p + L.w2[li], H, H).transpose() * dh;
        const MatrixXd da = dr.cwiseProduct((as[li].array() > 0.0).cast<double>().matrix());
        MatMap(g + L.w1[li], H, H).noalias() = da * hs[li].transpose();
        VecMap(g + L.b1[li], H) = da.rowwise().sum();
        dh.noalias() += ConstMatMap(p + L.w1[li], H, H).transpose() * da;
    }
    MatMap(g + L.w_in, H, D).noalias() = dh * x.transpose();
    MatMap(g + L.w_ctx, H, K).noalias() = dh * ctx.transpose();
    VecMap(g + L.b_in, H) = dh.rowwise().sum();
    return loss;
}

std::vector<TrainRecord> train(MlpDenoiser& model, const TrainingSet& dataset, const DiffusionSchedule& sched,
                               const TrainOptions& options) {
    if (dataset.empty()) throw std::invalid_argument("train: empty dataset");
    if (options.steps == 0) throw std::invalid_argument("train: steps must be >= 1");
    if (options.batch_size == 0) throw std::invalid_argument("train: batch_size must be >= 1");
    if (!(options.condition_dropout >= 0.0 && options.condition_dropout <= 1.0)) {
        throw std::invalid_argument("train: condition_dropout must lie in [0,1]");
    }

    std::mt19937_64 rng(options.seed);
    std::uniform_int_distribution<std::size_t> pick(0, dataset.size() - 1);
    std::uniform_int_distribution<std::size_t> pick_t(1, sched.steps());
    std::bernoulli_distribution drop(options.condition_dropout);
    const Condition empty = Condition::empty(model.condition_width());

    auto& params = model.mutable_parameters();
    std::vector<double> grad, m1, m2;
    if (options.optimizer == OptimizerKind::adam) {
        m1.assign(params.size(), 0.0);
        m2.assign(params.size(), 0.0);
    }
    constexpr double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;

    std::vector<TrainRecord> records;
    records.reserve(options.steps);
    std::vector<DenoiserSample> batch(options.batch_size);
    for (std::size_t step = 0; step < options.steps; ++step) {
        for (auto& sample : batch) {
            const auto& [z0, cond] = dataset[pick(rng)];
            sample.t = pick_t(rng);
            const double a = sched.alpha_cum(sample.t);
            sample.target = LatentTensor::gaussian(z0.shape(), rng());
            sample.z_t = linear_combination(std::sqrt(a), z0, std::sqrt(1.0 - a), sample.target);
            sample.condition = drop(rng) ? empty : cond;
        }
        const double loss = model.batch_loss(batch, &grad);
        if (!std::isfinite(loss)) throw std::runtime_error("train: loss diverged at step " + std::to_string(step));
        double lr = options.learning_rate;
        if (options.cosine_decay) {
            const double progress = static_cast<double>(step) / static_cast<double>(options.steps);
            lr *= 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
        }

        if (options.optimizer == OptimizerKind::sgd) {
            for (std::size_t i = 0; i < params.size(); ++i) params[i] -= lr * grad[i];
        } else {
            const double k = static_cast<double>(step + 1);
            const double c1 = 1.0 - std::pow(beta1, k);
            const double c2 = 1.0 - std::pow(beta2, k);
            for (std::size_t i = 0; i < params.size(); ++i) {
                m1[i] = beta1 * m1[i] + (1.0 - beta1) * grad[i];
                m2[i] = beta2 * m2[i] + (1.0 - beta2) * grad[i] * grad[i];
                params[i] -= lr * (m1[i] / c1) / (std::sqrt(m2[i] / c2) + adam_eps);
            }
        }
        records.push_back({step, loss});
    }
    return records;
}

namespace {

constexpr char kCheckpointMagic[8] = {'P', 'O', 'S', 'C', 'K', 'P', 'T', '1'};
constexpr std::uint32_t kCheckpointVersion = 1;

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
    ByteWriter w;
    w.raw(kCheckpointMagic, 8);
    w.u32(kCheckpointVersion);
    w.u32(static_cast<std::uint32_t>(ckpt.kind));
    const auto& s = ckpt.spec;
    for (std::uint32_t v : {s.condition_width, s.hidden_width, s.layer_count, s.embed_width, s.channels, s.height, s.width}) {
        w.u32(v);
    }
    w.u64(s.seed);
    w.u32(s.zero_init_output ? 1 : 0);
    w.string(ckpt.metadata);
    for (const auto* v : {&ckpt.output.skip, &ckpt.output.scale}) {
        w.u64(v->size());
        for (double x : *v) w.f64(x);
    }
    w.u64(ckpt.parameters.size());
    for (float v : ckpt.parameters) w.f32(v);
    return w.take();
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
    ByteReader r(bytes);
    auto magic = r.bytes(8);
    if (std::memcmp(magic.data(), kCheckpointMagic, 8) != 0) throw FormatError("bad checkpoint magic");
    if (const auto version = r.u32(); version != kCheckpointVersion) {
        throw FormatError("unsupported checkpoint version " + std::to_string(version));
    }
    Checkpoint ckpt;
    const auto kind = r.u32();
    if (kind > 1) throw FormatError("unknown model kind " + std::to_string(kind));
    ckpt.kind = static_cast<ModelKind>(kind);
    auto& s = ckpt.spec;
    s.condition_width = r.u32();
    s.hidden_width = r.u32();
    s.layer_count = r.u32();
    s.embed_width = r.u32();
    s.channels = r.u32();
    s.height = r.u32();
    s.width = r.u32();
    s.seed = r.u64();
    s.zero_init_output = r.u32() != 0;
    ckpt.metadata = r.string();
    for (auto* v : {&ckpt.output.skip, &ckpt.output.scale}) {
        const auto n = r.u64();
        if (n > r.remaining() / 8) throw FormatError("checkpoint output coefficients truncated");
        v->resize(n);
        for (auto& x : *v) x = r.f64();
    }
    const auto count = r.u64();
    if (count * 4 != r.remaining()) throw FormatError("checkpoint parameter payload has wrong size");
    ckpt.parameters.resize(count);
    for (auto& v : ckpt.parameters) v = r.f32();
    return ckpt;
}

Checkpoint make_checkpoint(const MlpDenoiser& model, ModelKind kind, std::string metadata) {
    Checkpoint ckpt{kind, model.spec(), std::move(metadata), model.output_coefficients(), {}};
    ckpt.parameters.reserve(model.parameter_count());
    for (double v : model.parameters()) ckpt.parameters.push_back(static_cast<float>(v));
    return ckpt;
}

MlpDenoiser model_from_checkpoint(const Checkpoint& ckpt) {
    MlpDenoiser model(ckpt.spec);
    if (ckpt.parameters.size() != model.parameter_count()) {
        throw FormatError("checkpoint has " + std::to_string(ckpt.parameters.size()) + " parameters, spec implies " +
                          std::to_string(model.parameter_count()));
    }
    auto& params = model.mutable_parameters();
    for (std::size_t i = 0; i < params.size(); ++i) params[i] = ckpt.parameters[i];
    model.set_output_coefficients(ckpt.output);
    return model;
}

void save_denoiser(const std::filesystem::path& path, const MlpDenoiser& model) {
    write_file_bytes(path, encode_checkpoint(make_checkpoint(model, ModelKind::denoiser)));
}

MlpDenoiser load_denoiser(const std::filesystem::path& path) {
    const auto ckpt = decode_checkpoint(read_file_bytes(path));
    if (ckpt.kind != ModelKind::denoiser) throw FormatError(path.string() + " is not a denoiser checkpoint");
    return model_from_checkpoint(ckpt);
}

}  // namespace pos
