// Copyright (C) 2026 pos-diffusion contributors
// SPDX-License-Identifier: Apache-2.0

#include "pos/pipeline.hpp"

#include <atomic>
#include <chrono>
#include <cstdio>
#include <exception>
#include <fstream>
#include <thread>

#include "json.hpp"
#include "pos/binary_io.hpp"
#include "pos/toy.hpp"

namespace pos {

namespace fs = std::filesystem;

namespace {

constexpr const char* kDatasetFormat = "pos-dataset";
constexpr int kDatasetVersion = 1;

std::string zero_pad(std::size_t i, int width) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%0*zu", width, i);
    return buf;
}

std::string path_safe(const std::string& label) {
    std::string out = label;
    for (char& ch : out) {
        const bool ok = (ch >= 'a' && ch <= 'z') || (ch >= 'A' && ch <= 'Z') || (ch >= '0' && ch <= '9') || ch == '_' ||
                        ch == '-' || ch == '.';
        if (!ok) ch = '_';
    }
    return out;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

void require_exists(const std::string& what, const std::string& path) {
    if (path.empty()) throw ConfigError(what + " path is not set");
    if (!fs::exists(path)) throw MissingArtifact(what + " not found: " + path);
}

Shape resolve_shape(const GenerationConfig& cfg, const Artifacts& art) {
    if (art.pool) {
        Shape s = art.pool->latent_shape();
        if (s.frames != cfg.frames) {
            throw ConfigError("pool latents have " + std::to_string(s.frames) + " frames, config says " +
                              std::to_string(cfg.frames));
        }
        return s;
    }
    if (const auto* mlp = dynamic_cast<const MlpDenoiser*>(art.denoiser.get())) {
        const auto& s = mlp->spec();
        return {cfg.frames, s.channels, s.height, s.width};
    }
    if (art.npnet) return art.npnet->noise_shape();
    throw ConfigError("cannot determine the latent shape without a pool, an MLP denoiser or an NPNet");
}

}  // namespace

std::vector<std::pair<std::string, LatentTensor>> Dataset::pairs() const {
    std::vector<std::pair<std::string, LatentTensor>> out;
    out.reserve(size());
    for (std::size_t i = 0; i < size(); ++i) out.emplace_back(captions[i], latents[i]);
    return out;
}

void save_dataset(const fs::path& dir, const Dataset& data, const std::string& note) {
    if (data.captions.size() != data.latents.size()) throw std::invalid_argument("dataset captions and latents differ in count");
    fs::create_directories(dir / "tensors");
    nlohmann::json manifest = {{"format", kDatasetFormat}, {"version", kDatasetVersion}, {"note", note}};
    auto& items = manifest["items"] = nlohmann::json::array();
    for (std::size_t i = 0; i < data.size(); ++i) {
        const std::string file = "tensors/" + zero_pad(i, 6) + ".ptns";
        save_tensor(dir / file, data.latents[i]);
        items.push_back({{"caption", data.captions[i]}, {"file", file}});
    }
    std::ofstream(dir / "dataset.json") << manifest.dump(2) << "\n";
}

Dataset load_dataset(const fs::path& dir) {
    std::ifstream in(dir / "dataset.json");
    if (!in) throw MissingArtifact("no dataset manifest at " + (dir / "dataset.json").string());
    nlohmann::json manifest;
    try {
        in >> manifest;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("dataset manifest: ") + e.what());
    }
    if (manifest.value("format", "") != kDatasetFormat || manifest.value("version", 0) != kDatasetVersion) {
        throw FormatError("unsupported dataset manifest format");
    }
    Dataset data;
    for (const auto& item : manifest.at("items")) {
        data.captions.push_back(item.at("caption").get<std::string>());
        data.latents.push_back(load_tensor(dir / item.at("file").get<std::string>()));
    }
    return data;
}

TrainingRecipe default_npnet_recipe() {
    TrainingRecipe r;
    r.init_seed = 11;
    r.options.steps = 2000;
    r.options.seed = 13;
    return r;
}

namespace {

DenoiserSpec spec_for(const Pool& pool, const Embedder& conditioner, const TrainingRecipe& recipe) {
    const Shape& s = pool.latent_shape();
    DenoiserSpec spec;
    spec.condition_width = static_cast<std::uint32_t>(conditioner.dims());
    spec.hidden_width = recipe.hidden_width;
    spec.layer_count = recipe.layer_count;
    spec.channels = static_cast<std::uint32_t>(s.channels);
    spec.height = static_cast<std::uint32_t>(s.height);
    spec.width = static_cast<std::uint32_t>(s.width);
    spec.seed = recipe.init_seed;
    return spec;
}

}  // namespace

MlpDenoiser train_denoiser_on_pool(const Pool& pool, const Embedder& conditioner, const DiffusionSchedule& sched,
                                   const TrainingRecipe& recipe, std::vector<TrainRecord>* trace) {
    if (pool.size() == 0) throw ConfigError("cannot train on an empty pool");
    MlpDenoiser model(spec_for(pool, conditioner, recipe));
    model.set_output_coefficients(v_prediction_coefficients(sched));
    TrainingSet set;
    set.reserve(pool.size());
    for (const auto& e : pool.entries()) set.emplace_back(e.latent, Condition::from(conditioner.embed(e.text).values()));
    auto records = train(model, set, sched, recipe.options);
    if (trace) *trace = std::move(records);
    return model;
}

NoisePredictionNet train_npnet_on_pool(const Pool& pool, const Embedder& conditioner, const DiffusionSchedule& sched,
                                       const NoisePredictor& denoiser, const TrainingRecipe& recipe, std::size_t limit,
                                       std::uint64_t data_seed, std::vector<TrainRecord>* trace) {
    if (pool.size() == 0) throw ConfigError("cannot train on an empty pool");
    const auto data = build_noise_dataset(pool, sched, denoiser, conditioner, limit, data_seed);
    NoisePredictionNet net(spec_for(pool, conditioner, recipe), pool.latent_shape().frames);
    auto records = net.train(data, recipe.options);
    if (trace) *trace = std::move(records);
    return net;
}

void check_artifacts(const GenerationConfig& cfg, const Artifacts& art) {
    if (!art.conditioner) throw ConfigError("no conditioning text encoder");
    if (!art.denoiser) throw ConfigError("no denoiser");
    if (art.conditioner->dims() != art.denoiser->condition_width()) {
        throw ConfigError("text encoder width " + std::to_string(art.conditioner->dims()) + " != denoiser condition width " +
                          std::to_string(art.denoiser->condition_width()));
    }
    const std::string arm = arm_name(cfg.arm);
    if ((cfg.arm == Arm::ona || cfg.arm == Arm::pos) && !art.pool) throw ConfigError("arm " + arm + " needs a pool");
    if (cfg.arm == Arm::pos_star) {
        if (!art.npnet) throw ConfigError("arm pos_star needs an NPNet checkpoint");
        if (!art.npnet->trained()) throw ConfigError("arm pos_star needs a trained NPNet");
        if (art.npnet->network().condition_width() != art.conditioner->dims()) {
            throw ConfigError("NPNet condition width does not match the text encoder");
        }
    }
    if (arm_uses_rewrite(cfg.arm)) {
        if (!art.rewriter) throw ConfigError("arm " + arm + " needs llm_endpoint or llm_mock");
        if (cfg.refs_k > 0 && !art.pool) throw ConfigError("refs_k > 0 needs a pool for reference retrieval");
    }
    const Shape shape = resolve_shape(cfg, art);
    if (cfg.arm == Arm::pos_star && art.npnet->noise_shape() != shape) {
        throw ConfigError("NPNet noise shape " + art.npnet->noise_shape().str() + " != latent shape " + shape.str());
    }
}

std::unique_ptr<RewriteEngine> make_rewrite_engine(const GenerationConfig& cfg) {
    if (!cfg.llm_mock.empty()) {
        const MockMode mode = parse_mock_mode(cfg.llm_mock);
        if (mode == MockMode::fixture) {
            if (!fs::exists(cfg.llm_fixture)) throw MissingArtifact("LLM fixture not found: " + cfg.llm_fixture);
            return std::make_unique<MockEngine>(MockEngine::from_fixture(cfg.llm_fixture));
        }
        return std::make_unique<MockEngine>(mode);
    }
    if (cfg.llm_endpoint.empty()) return nullptr;
    HttpEngineConfig http;
    http.endpoint = cfg.llm_endpoint;
    http.token_env = cfg.llm_token_env;
    http.retry.max_attempts = cfg.llm_retries;
    http.retry.request_timeout = std::chrono::milliseconds(cfg.llm_timeout_ms);
    try {
        return std::make_unique<HttpEngine>(std::move(http));
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
}

Artifacts load_artifacts(const GenerationConfig& cfg) {
    cfg.validate();
    Artifacts art;
    auto embedder = std::make_shared<NgramEmbedder>();
    art.conditioner = embedder;

    require_exists("denoiser checkpoint", cfg.denoiser_path);
    auto denoiser = std::make_shared<MlpDenoiser>(load_denoiser(cfg.denoiser_path));
    const auto& coeffs = denoiser->output_coefficients();
    if (!coeffs.skip.empty() && coeffs != v_prediction_coefficients(make_schedule(cfg.steps, cfg.beta))) {
        throw ConfigError("denoiser " + cfg.denoiser_path + " was trained for a different schedule than steps=" +
                          std::to_string(cfg.steps) + " beta=" + format_beta_spec(cfg.beta));
    }
    art.denoiser = denoiser;

    const bool rewrites = arm_uses_rewrite(cfg.arm);
    const bool needs_pool = cfg.arm == Arm::ona || cfg.arm == Arm::pos || (rewrites && cfg.refs_k > 0);
    if (needs_pool || !cfg.pool_path.empty()) {
        require_exists("pool", cfg.pool_path);
        try {
            art.pool = std::make_shared<Pool>(Pool::load(cfg.pool_path, embedder));
        } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what());
        }
    }
    if (cfg.arm == Arm::pos_star || !cfg.npnet_path.empty()) {
        require_exists("NPNet checkpoint", cfg.npnet_path);
        art.npnet = std::make_shared<NoisePredictionNet>(NoisePredictionNet::load(cfg.npnet_path));
    }
    if (rewrites) art.rewriter = make_rewrite_engine(cfg);
    check_artifacts(cfg, art);
    return art;
}

GuidedNoise GuidedNoiseCache::get(const PoolEntry& entry, const DiffusionSchedule& sched, const NoisePredictor& denoiser) {
    // Keyed by entry and schedule; one cache serves one denoiser.
    std::string key = entry.id + "|" + std::to_string(sched.steps());
    for (double a : sched.alphas_cum()) key += "|" + std::to_string(a);
    {
        std::lock_guard lock(mutex_);
        if (auto it = entries_.find(key); it != entries_.end()) return it->second;
    }
    GuidedNoise g = invert_latent(entry.latent, sched, denoiser, entry.id);
    std::lock_guard lock(mutex_);
    return entries_.emplace(key, std::move(g)).first->second;
}

std::size_t GuidedNoiseCache::size() const {
    std::lock_guard lock(mutex_);
    return entries_.size();
}

std::uint64_t prompt_seed(const GenerationConfig& cfg, std::size_t index) { return derive_seed(cfg.seed, index); }

GenerationResult generate(const std::string& prompt, std::size_t index, const GenerationConfig& cfg,
                          const Artifacts& art, GuidedNoiseCache* cache) {
    cfg.validate();
    check_artifacts(cfg, art);
    if (normalize_text(prompt).empty()) throw ConfigError("prompt has no words: '" + prompt + "'");

    const DiffusionSchedule sched = make_schedule(cfg.steps, cfg.beta);
    const Shape shape = resolve_shape(cfg, art);
    GenerationResult out;
    out.index = index;
    out.prompt = prompt;
    out.seed = prompt_seed(cfg, index);
    out.arm = cfg.arm;
    out.config_hash = cfg.hash();

    const Condition cond = Condition::from(art.conditioner->embed(prompt).values());
    const MixtureConfig mix = cfg.mixture(out.seed);

    LatentTensor init;
    switch (cfg.arm) {
        case Arm::baseline:
        case Arm::spr:
            init = mixture_gaussian(shape, mix);
            break;
        case Arm::ona:
        case Arm::pos: {
            const PoolEntry& entry = art.pool->retrieve_video(prompt);
            GuidedNoise g = cache ? cache->get(entry, sched, *art.denoiser)
                                  : invert_latent(entry.latent, sched, *art.denoiser, entry.id);
            out.source_id = g.source_id;
            init = mix_noise(g, mix);
            break;
        }
        case Arm::pos_star:
            init = mix_noise(art.npnet->predict_noise(cond, out.seed), mix);
            break;
    }

    if (!arm_uses_rewrite(cfg.arm)) {
        out.latent = synthesize(cond, init, sched, *art.denoiser);
        return out;
    }
    std::vector<std::string> refs;
    if (cfg.refs_k > 0) refs = art.pool->retrieve_references(prompt, cfg.refs_k);
    out.exchange = rewrite_with_references(prompt, std::move(refs), *art.rewriter, {cfg.llm_fallback});
    const Condition rewritten = Condition::from(art.conditioner->embed(out.exchange->rewritten).values());
    out.latent = synthesize_dhs(cond, rewritten, init, sched, *art.denoiser, DhsConfig(cfg.gamma, cfg.steps));
    return out;
}

void parallel_for(std::size_t count, std::size_t workers, const std::function<void(std::size_t)>& fn) {
    if (count == 0) return;
    std::vector<std::exception_ptr> errors(count);
    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (std::size_t i = next++; i < count; i = next++) {
            try {
                fn(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const std::size_t n = std::min(std::max<std::size_t>(workers, 1), count);
    if (n == 1) {
        work();
    } else {
        std::vector<std::jthread> threads;
        threads.reserve(n);
        for (std::size_t t = 0; t < n; ++t) threads.emplace_back(work);
    }
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

std::vector<GenerationResult> generate_all(const std::vector<std::string>& prompts, const GenerationConfig& cfg,
                                           const Artifacts& art, GuidedNoiseCache* cache) {
    std::vector<GenerationResult> results(prompts.size());
    parallel_for(prompts.size(), cfg.workers,
                 [&](std::size_t i) { results[i] = generate(prompts[i], i, cfg, art, cache); });
    return results;
}

double feature_distance(const std::vector<LatentTensor>& videos, const EvaluationTarget& target) {
    const PooledFrameFeatures fallback;
    const FeatureExtractor& fx = target.extractor ? *target.extractor : fallback;
    return frechet_distance(extract_features(videos, fx), extract_features(target.videos, fx));
}

namespace {

ArmRun run_arm(const std::vector<std::string>& prompts, const GenerationConfig& cfg, std::string label,
               const Artifacts& art, GuidedNoiseCache* cache) {
    const auto start = std::chrono::steady_clock::now();
    ArmRun run;
    run.arm = cfg.arm;
    run.label = std::move(label);
    run.config_hash = cfg.hash();
    run.results = generate_all(prompts, cfg, art, cache);
    run.seconds = seconds_since(start);
    return run;
}

void score_run(const ArmRun& run, const EvaluationTarget* target, std::vector<MetricRecord>& out) {
    out.push_back({"seconds", run.seconds, run.config_hash, run.label, "prompts=" + std::to_string(run.results.size())});
    if (!target) return;
    std::vector<LatentTensor> videos;
    videos.reserve(run.results.size());
    for (const auto& r : run.results) videos.push_back(r.latent);
    out.push_back({"fd", feature_distance(videos, *target), run.config_hash, run.label,
                   "generated=" + std::to_string(videos.size()) + " reference=" + std::to_string(target->videos.size())});
    if (target->paired_by_prompt && target->videos.size() == videos.size()) {
        double mse = 0.0;
        for (std::size_t i = 0; i < videos.size(); ++i) mse += mean_squared_diff(videos[i], target->videos[i]);
        out.push_back({"mse", mse / static_cast<double>(videos.size()), run.config_hash, run.label, "paired"});
    }
}

RunReport start_report(const std::vector<std::string>& prompts, const GenerationConfig& cfg) {
    if (prompts.empty()) throw ConfigError("no prompts");
    RunReport report;
    report.config_hash = cfg.hash();
    report.canonical_config = cfg.canonical();
    report.prompts = prompts;
    for (std::size_t i = 0; i < prompts.size(); ++i) report.prompt_seeds.push_back(prompt_seed(cfg, i));
    return report;
}

}  // namespace

RunReport run_experiment(const std::vector<std::string>& prompts, const std::vector<Arm>& arms,
                         const GenerationConfig& cfg, const Artifacts& art, const EvaluationTarget* target,
                         GuidedNoiseCache* cache) {
    if (arms.empty()) throw ConfigError("no arms");
    RunReport report = start_report(prompts, cfg);
    for (Arm arm : arms) {
        GenerationConfig c = cfg;
        c.arm = arm;
        report.runs.push_back(run_arm(prompts, c, arm_name(arm), art, cache));
        score_run(report.runs.back(), target, report.metrics);
    }
    return report;
}

std::string EtaSetting::label() const {
    if (infinite) return "eta=inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "eta=%g", eta);
    return buf;
}

EtaSetting parse_eta(const std::string& text) {
    if (text == "inf" || text == "infinity") return {0.0, true};
    GenerationConfig c = GenerationConfig::from_map({{"eta", text}});
    return {c.eta, false};
}

RunReport eta_sweep(const std::vector<std::string>& prompts, const std::vector<EtaSetting>& etas,
                    const GenerationConfig& cfg, const Artifacts& art, const EvaluationTarget* target,
                    GuidedNoiseCache* cache) {
    if (etas.empty()) throw ConfigError("no eta values");
    RunReport report = start_report(prompts, cfg);
    for (const auto& e : etas) {
        GenerationConfig c = cfg;
        c.eta = e.eta;
        c.eta_infinite = e.infinite;
        report.runs.push_back(run_arm(prompts, c, e.label(), art, cache));
        score_run(report.runs.back(), target, report.metrics);
    }
    return report;
}

void write_run_report(const fs::path& dir, const RunReport& report, bool pgm) {
    fs::create_directories(dir);
    nlohmann::json j;
    j["config_hash"] = report.config_hash;
    j["config"] = report.canonical_config;
    auto& prompts = j["prompts"] = nlohmann::json::array();
    for (std::size_t i = 0; i < report.prompts.size(); ++i) {
        prompts.push_back({{"index", i}, {"prompt", report.prompts[i]}, {"seed", report.prompt_seeds[i]}});
    }
    auto& runs = j["runs"] = nlohmann::json::array();
    for (const auto& run : report.runs) {
        const fs::path sub = fs::path("latents") / path_safe(run.label);
        fs::create_directories(dir / sub);
        nlohmann::json r = {{"label", run.label}, {"arm", arm_name(run.arm)}, {"config_hash", run.config_hash},
                            {"seconds", run.seconds}};
        auto& results = r["results"] = nlohmann::json::array();
        for (const auto& res : run.results) {
            const fs::path file = sub / (zero_pad(res.index, 4) + ".ptns");
            save_tensor(dir / file, res.latent);
            if (pgm) {
                std::ofstream(dir / sub / (zero_pad(res.index, 4) + ".pgm"), std::ios::binary) << render_pgm(res.latent);
            }
            nlohmann::json e = {{"index", res.index}, {"seed", res.seed}, {"file", file.generic_string()}};
            if (!res.source_id.empty()) e["source_id"] = res.source_id;
            if (res.exchange) {
                const auto& x = *res.exchange;
                e["rewrite"] = {{"original", x.original}, {"references", x.references}, {"instruction", x.instruction},
                                {"rewritten", x.rewritten}, {"engine", x.engine_tag}, {"note", x.note}};
            }
            results.push_back(std::move(e));
        }
        runs.push_back(std::move(r));
    }
    auto& metrics = j["metrics"] = nlohmann::json::array();
    for (const auto& m : report.metrics) {
        metrics.push_back({{"metric", m.metric}, {"value", m.value}, {"config_hash", m.config_hash}, {"arm", m.arm},
                           {"detail", m.detail}});
    }
    std::ofstream(dir / "report.json") << j.dump(2) << "\n";
    std::ofstream tsv(dir / "metrics.tsv");
    write_metric_records(tsv, report.metrics);
}

}  // namespace pos
