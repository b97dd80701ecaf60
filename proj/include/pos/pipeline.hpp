// Copyright (C) 2026 pos-diffusion contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "pos/config.hpp"
#include "pos/denoiser.hpp"
#include "pos/embedder.hpp"
#include "pos/metrics.hpp"
#include "pos/npnet.hpp"
#include "pos/ona.hpp"
#include "pos/pool.hpp"
#include "pos/spr.hpp"

namespace pos {

/// Caption/latent pairs on disk: dataset.json plus one tensor file per item.
struct Dataset {
    std::vector<std::string> captions;
    std::vector<LatentTensor> latents;

    std::size_t size() const { return captions.size(); }
    std::vector<std::pair<std::string, LatentTensor>> pairs() const;
};

void save_dataset(const std::filesystem::path& dir, const Dataset& data, const std::string& note = {});
Dataset load_dataset(const std::filesystem::path& dir);

/// Training settings for the toy-scale denoiser and NPNet.
struct TrainingRecipe {
    std::uint32_t hidden_width = 192;
    std::uint32_t layer_count = 2;
    std::uint64_t init_seed = 3;
    TrainOptions options{2500, 8, 1e-3, OptimizerKind::adam, true, 0.1, 5};
};

TrainingRecipe default_npnet_recipe();

/// Trains a v-parameterized denoiser on the pool's (latent, text condition) pairs.
MlpDenoiser train_denoiser_on_pool(const Pool& pool, const Embedder& conditioner, const DiffusionSchedule& sched,
                                   const TrainingRecipe& recipe, std::vector<TrainRecord>* trace = nullptr);

/// Inverts up to `limit` pool entries with `denoiser` and fits an NPNet to them.
NoisePredictionNet train_npnet_on_pool(const Pool& pool, const Embedder& conditioner, const DiffusionSchedule& sched,
                                       const NoisePredictor& denoiser, const TrainingRecipe& recipe, std::size_t limit,
                                       std::uint64_t data_seed, std::vector<TrainRecord>* trace = nullptr);

/// Everything generate() reads. Shared read-only across workers.
struct Artifacts {
    /// Text encoder producing the denoiser condition.
    std::shared_ptr<const Embedder> conditioner;
    std::shared_ptr<const Pool> pool;
    std::shared_ptr<const NoisePredictor> denoiser;
    std::shared_ptr<const NoisePredictionNet> npnet;
    std::shared_ptr<const RewriteEngine> rewriter;
};

/// ConfigError when the arm needs a piece that is absent or mismatched.
void check_artifacts(const GenerationConfig& cfg, const Artifacts& art);

std::unique_ptr<RewriteEngine> make_rewrite_engine(const GenerationConfig& cfg);

/// Loads what the arm needs from the configured paths. Absent paths are
/// ConfigError; paths that do not exist are MissingArtifact.
Artifacts load_artifacts(const GenerationConfig& cfg);

/// Inverted noise per pool entry id, computed once and reused across seeds
/// and arms. Thread-safe.
class GuidedNoiseCache {
public:
    GuidedNoise get(const PoolEntry& entry, const DiffusionSchedule& sched, const NoisePredictor& denoiser);
    std::size_t size() const;

private:
    mutable std::mutex mutex_;
    std::map<std::string, GuidedNoise> entries_;
};

struct GenerationResult {
    std::size_t index = 0;
    std::string prompt;
    std::uint64_t seed = 0;
    Arm arm = Arm::baseline;
    std::string config_hash;
    LatentTensor latent;
    /// Pool entry whose inversion seeded the noise (ona, pos).
    std::string source_id;
    std::optional<RewriteExchange> exchange;
};

/// Seed of prompt `index`; identical across arms so runs pair up.
std::uint64_t prompt_seed(const GenerationConfig& cfg, std::size_t index);

/// Routes one prompt through the configured arm:
///   baseline  fresh noise, original text
///   ona       retrieve, invert, mix; original text
///   spr       fresh noise; rewrite and hybrid-semantics denoising
///   pos       ona noise with spr text
///   pos_star  NPNet noise, mixed; spr text
/// Fresh noise is the mixture's own Gaussian draw, so eta = 0 reduces every
/// noise path to it.
GenerationResult generate(const std::string& prompt, std::size_t index, const GenerationConfig& cfg,
                          const Artifacts& art, GuidedNoiseCache* cache = nullptr);

/// Calls fn(i) for i < count on up to `workers` threads. Rethrows the
/// exception of the lowest failing index.
void parallel_for(std::size_t count, std::size_t workers, const std::function<void(std::size_t)>& fn);

std::vector<GenerationResult> generate_all(const std::vector<std::string>& prompts, const GenerationConfig& cfg,
                                           const Artifacts& art, GuidedNoiseCache* cache = nullptr);

struct ArmRun {
    Arm arm = Arm::baseline;
    std::string label;
    std::string config_hash;
    std::vector<GenerationResult> results;
    double seconds = 0.0;
};

struct RunReport {
    std::string config_hash;
    std::string canonical_config;
    std::vector<std::string> prompts;
    std::vector<std::uint64_t> prompt_seeds;
    std::vector<ArmRun> runs;
    std::vector<MetricRecord> metrics;
};

/// Ground truth for metric computation. `videos` form the reference set for
/// the Frechet distance; when paired_by_prompt, videos[i] also belongs to
/// prompts[i] and a per-prompt MSE is reported.
struct EvaluationTarget {
    std::vector<LatentTensor> videos;
    bool paired_by_prompt = false;
    std::shared_ptr<const FeatureExtractor> extractor;
};

/// Generates every prompt under each arm with paired seeds and scores each
/// arm against `target` when given.
RunReport run_experiment(const std::vector<std::string>& prompts, const std::vector<Arm>& arms,
                         const GenerationConfig& cfg, const Artifacts& art, const EvaluationTarget* target = nullptr,
                         GuidedNoiseCache* cache = nullptr);

struct EtaSetting {
    double eta = 0.0;
    bool infinite = false;

    std::string label() const;
};

EtaSetting parse_eta(const std::string& text);

/// run_experiment over the given eta values with cfg.arm fixed; each run is
/// labelled "eta=<value>".
RunReport eta_sweep(const std::vector<std::string>& prompts, const std::vector<EtaSetting>& etas,
                    const GenerationConfig& cfg, const Artifacts& art, const EvaluationTarget* target = nullptr,
                    GuidedNoiseCache* cache = nullptr);

/// FD of `videos` against `target.videos` over all frames.
double feature_distance(const std::vector<LatentTensor>& videos, const EvaluationTarget& target);

/// Writes report.json, metrics.tsv and latents/<label>/<index>.ptns under
/// `dir`; with `pgm`, also a tiled grayscale preview per latent.
void write_run_report(const std::filesystem::path& dir, const RunReport& report, bool pgm = false);

}  // namespace pos
