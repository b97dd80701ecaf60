// Copyright (C) 2026 pos-diffusion contributors
// SPDX-License-Identifier: Apache-2.0

// Command-line front end: toy data, pool, training, generation and evaluation.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "json.hpp"
#include "pos/binary_io.hpp"
#include "pos/pipeline.hpp"
#include "pos/toy.hpp"

namespace fs = std::filesystem;
using namespace pos;

namespace {

enum ExitCode { kOk = 0, kFailure = 1, kConfig = 2, kMissing = 3, kTransport = 4 };

/// Flags that map onto GenerationConfig keys.
struct ConfigFlags {
    std::string config_file;
    std::map<std::string, std::string> values;
    bool no_fallback = false;

    void add(CLI::App* app, bool with_llm) {
        app->add_option("--config", config_file, "key = value config file");
        add_key(app, "--steps", "steps", "DDIM steps T");
        add_key(app, "--beta", "beta", "beta schedule, e.g. strided:1000:0.00085:0.012");
        add_key(app, "--seed", "seed", "base seed");
        add_key(app, "--pool", "pool", "pool directory");
        add_key(app, "--frames", "frames", "frames per video");
        add_key(app, "--workers", "workers", "prompt-level worker threads");
        if (!with_llm) return;
        add_key(app, "--eta", "eta", "noise mixture weight, or inf");
        add_key(app, "--gamma", "gamma", "share of denoising steps on the rewritten prompt");
        add_key(app, "--refs-k", "refs_k", "reference sentences for rewriting");
        add_key(app, "--arm", "arm", "baseline | ona | spr | pos | pos_star");
        add_key(app, "--denoiser", "denoiser", "denoiser checkpoint");
        add_key(app, "--npnet", "npnet", "NPNet checkpoint");
        add_key(app, "--llm-endpoint", "llm_endpoint", "http rewrite endpoint");
        add_key(app, "--llm-mock", "llm_mock", "identity | prefix | fixture");
        add_key(app, "--llm-fixture", "llm_fixture", "JSON prompt -> rewrite table for the fixture mock");
        add_key(app, "--llm-token-env", "llm_token_env", "environment variable with the bearer token");
        add_key(app, "--llm-retries", "llm_retries", "attempts per rewrite");
        add_key(app, "--llm-timeout-ms", "llm_timeout_ms", "per-request timeout");
        app->add_flag("--no-fallback", no_fallback, "fail instead of keeping the original prompt");
    }

    void add_key(CLI::App* app, const std::string& flag, const std::string& key, const std::string& help) {
        app->add_option_function<std::string>(flag, [this, key](const std::string& v) { values[key] = v; }, help);
    }

    GenerationConfig resolve() const {
        ConfigMap file;
        if (!config_file.empty()) file = read_config_file(config_file);
        ConfigMap flags = values;
        if (no_fallback) flags["llm_fallback"] = "false";
        return layered_config(file, flags);
    }
};

std::vector<std::string> read_lines(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw MissingArtifact("prompt file not found: " + path.string());
    std::vector<std::string> lines;
    for (std::string line; std::getline(in, line);) {
        if (!normalize_whitespace(line).empty()) lines.push_back(normalize_whitespace(line));
    }
    return lines;
}

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    std::stringstream ss(text);
    for (std::string item; std::getline(ss, item, ',');) {
        item = normalize_whitespace(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

void write_trace(const fs::path& path, const std::vector<TrainRecord>& trace) {
    std::ofstream out(path);
    out << "step\tloss\n";
    for (const auto& r : trace) out << r.step << '\t' << r.loss << '\n';
}

TrainingRecipe recipe_from(const TrainingRecipe& base, std::optional<std::size_t> iters, std::optional<std::uint32_t> hidden,
                           std::optional<double> lr) {
    TrainingRecipe r = base;
    if (iters) r.options.steps = *iters;
    if (hidden) r.hidden_width = *hidden;
    if (lr) r.options.learning_rate = *lr;
    return r;
}

double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Prompt optimization suite for toy text-to-video diffusion"};
    app.require_subcommand(1);

    // dataset gen
    auto* dataset = app.add_subcommand("dataset", "toy datasets")->require_subcommand(1);
    auto* dataset_gen = dataset->add_subcommand("gen", "render a moving-blob dataset");
    std::size_t ds_count = 1000;
    std::uint64_t ds_seed = 1;
    std::string ds_split = "train";
    std::string ds_out;
    dataset_gen->add_option("--count", ds_count, "number of videos")->capture_default_str();
    dataset_gen->add_option("--seed", ds_seed, "dataset seed")->capture_default_str();
    dataset_gen->add_option("--split", ds_split, "train | eval")->capture_default_str();
    dataset_gen->add_option("--out", ds_out, "output directory")->required();

    // pool build
    auto* pool_cmd = app.add_subcommand("pool", "candidate pools")->require_subcommand(1);
    auto* pool_build = pool_cmd->add_subcommand("build", "embed a dataset into a retrieval pool");
    std::string pb_dataset, pb_out;
    pool_build->add_option("--dataset", pb_dataset, "dataset directory")->required();
    pool_build->add_option("--out", pb_out, "pool directory")->required();

    // train denoiser / npnet
    auto* train_cmd = app.add_subcommand("train", "model training")->require_subcommand(1);
    auto* train_den = train_cmd->add_subcommand("denoiser", "train the video denoiser on a pool");
    auto* train_np = train_cmd->add_subcommand("npnet", "train the noise prediction network");
    ConfigFlags den_flags, np_flags;
    std::string train_out, np_denoiser;
    std::optional<std::size_t> iters;
    std::optional<std::uint32_t> hidden;
    std::optional<double> lr;
    std::size_t np_limit = 1000;
    for (auto* sub : {train_den, train_np}) {
        (sub == train_den ? den_flags : np_flags).add(sub, false);
        sub->add_option("--out", train_out, "checkpoint path")->required();
        sub->add_option("--iters", iters, "optimizer steps");
        sub->add_option("--hidden", hidden, "hidden width");
        sub->add_option("--lr", lr, "learning rate");
    }
    train_np->add_option("--denoiser", np_denoiser, "denoiser checkpoint used for inversion")->required();
    train_np->add_option("--limit", np_limit, "pool entries to invert")->capture_default_str();

    // generate
    auto* gen = app.add_subcommand("generate", "generate latents for prompts");
    ConfigFlags gen_flags;
    gen_flags.add(gen, true);
    std::vector<std::string> gen_prompts;
    std::string gen_prompt_file, gen_out;
    bool gen_pgm = false;
    gen->add_option("--prompt", gen_prompts, "prompt (repeatable)");
    gen->add_option("--prompts", gen_prompt_file, "file with one prompt per line");
    gen->add_option("--out", gen_out, "output directory")->required();
    gen->add_flag("--pgm", gen_pgm, "also write grayscale previews");

    // experiment
    auto* exp = app.add_subcommand("experiment", "paired-seed comparison of arms against a reference set");
    ConfigFlags exp_flags;
    exp_flags.add(exp, true);
    std::string exp_eval, exp_out, exp_arms = "baseline,ona,spr,pos", exp_sweep;
    std::size_t exp_count = 16, exp_seeds = 1;
    bool exp_pgm = false;
    exp->add_option("--eval", exp_eval, "evaluation dataset (prompts and ground truth)")->required();
    exp->add_option("--count", exp_count, "prompts taken from the evaluation set")->capture_default_str();
    exp->add_option("--arms", exp_arms, "comma-separated arms")->capture_default_str();
    exp->add_option("--seeds", exp_seeds, "paired seeds (seed, seed+1, ...)")->capture_default_str();
    exp->add_option("--sweep-eta", exp_sweep, "comma-separated eta values for --arm (replaces --arms)");
    exp->add_option("--out", exp_out, "output directory")->required();
    exp->add_flag("--pgm", exp_pgm, "also write grayscale previews");

    // eval
    auto* eval = app.add_subcommand("eval", "score a generated run against a reference dataset");
    std::string ev_run, ev_reference;
    eval->add_option("--generated", ev_run, "directory written by generate or experiment")->required();
    eval->add_option("--reference", ev_reference, "reference dataset directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kConfig;
    }

    try {
        if (dataset_gen->parsed()) {
            const ToySplit split = ds_split == "train" ? ToySplit::train
                                   : ds_split == "eval" ? ToySplit::eval
                                                        : throw ConfigError("--split must be train or eval");
            if (ds_count < 1) throw ConfigError("--count must be >= 1");
            Dataset data;
            for (auto& s : make_toy_dataset(ds_count, ds_seed, split)) {
                data.captions.push_back(s.caption);
                data.latents.push_back(std::move(s.latent));
            }
            save_dataset(ds_out, data, "toy seed=" + std::to_string(ds_seed) + " split=" + ds_split);
            std::cout << "wrote " << data.size() << " videos to " << ds_out << "\n";
        } else if (pool_build->parsed()) {
            const Dataset data = load_dataset(pb_dataset);
            const Pool pool = Pool::build(data.pairs(), std::make_shared<NgramEmbedder>());
            pool.save(pb_out);
            std::cout << "pool of " << pool.size() << " entries at " << pb_out << "\n";
        } else if (train_den->parsed()) {
            const GenerationConfig cfg = den_flags.resolve();
            if (cfg.pool_path.empty()) throw ConfigError("--pool is required");
            if (!fs::exists(cfg.pool_path)) throw MissingArtifact("pool not found: " + cfg.pool_path);
            auto embedder = std::make_shared<NgramEmbedder>();
            const Pool pool = Pool::load(cfg.pool_path, embedder);
            const auto sched = make_schedule(cfg.steps, cfg.beta);
            std::vector<TrainRecord> trace;
            const auto model = train_denoiser_on_pool(pool, *embedder, sched, recipe_from({}, iters, hidden, lr), &trace);
            save_denoiser(train_out, model);
            write_trace(train_out + ".loss.tsv", trace);
            std::cout << "denoiser saved to " << train_out << " (final loss " << trace.back().loss << ")\n";
        } else if (train_np->parsed()) {
            const GenerationConfig cfg = np_flags.resolve();
            if (cfg.pool_path.empty()) throw ConfigError("--pool is required");
            if (!fs::exists(cfg.pool_path)) throw MissingArtifact("pool not found: " + cfg.pool_path);
            if (!fs::exists(np_denoiser)) throw MissingArtifact("denoiser checkpoint not found: " + np_denoiser);
            auto embedder = std::make_shared<NgramEmbedder>();
            const Pool pool = Pool::load(cfg.pool_path, embedder);
            const auto sched = make_schedule(cfg.steps, cfg.beta);
            const auto denoiser = load_denoiser(np_denoiser);
            std::vector<TrainRecord> trace;
            const auto net = train_npnet_on_pool(pool, *embedder, sched, denoiser,
                                                 recipe_from(default_npnet_recipe(), iters, hidden, lr), np_limit,
                                                 cfg.seed, &trace);
            net.save(train_out);
            write_trace(train_out + ".loss.tsv", trace);
            std::cout << "NPNet saved to " << train_out << " (final loss " << trace.back().loss << ")\n";
        } else if (gen->parsed()) {
            GenerationConfig cfg = gen_flags.resolve();
            std::vector<std::string> prompts = gen_prompts;
            if (!gen_prompt_file.empty()) {
                for (auto& p : read_lines(gen_prompt_file)) prompts.push_back(std::move(p));
            }
            if (prompts.empty()) throw ConfigError("give --prompt or --prompts");
            const Artifacts art = load_artifacts(cfg);
            GuidedNoiseCache cache;
            const RunReport report = run_experiment(prompts, {cfg.arm}, cfg, art, nullptr, &cache);
            write_run_report(gen_out, report, gen_pgm);
            for (const auto& r : report.runs.front().results) {
                std::cout << r.index << "\tseed=" << r.seed;
                if (r.exchange) std::cout << "\trewrite=" << r.exchange->rewritten << " [" << r.exchange->engine_tag << "]";
                std::cout << "\t" << r.prompt << "\n";
            }
            std::cout << "config " << report.config_hash << ", outputs in " << gen_out << "\n";
        } else if (exp->parsed()) {
            GenerationConfig cfg = exp_flags.resolve();
            const Dataset eval_set = load_dataset(exp_eval);
            const std::size_t n = std::min(exp_count, eval_set.size());
            if (n == 0) throw ConfigError("evaluation set is empty");
            if (exp_seeds < 1) throw ConfigError("--seeds must be >= 1");
            std::vector<std::string> prompts(eval_set.captions.begin(), eval_set.captions.begin() + static_cast<long>(n));
            EvaluationTarget target;
            target.videos.assign(eval_set.latents.begin(), eval_set.latents.begin() + static_cast<long>(n));
            target.paired_by_prompt = true;

            std::vector<EtaSetting> etas;
            for (const auto& e : split_list(exp_sweep)) etas.push_back(parse_eta(e));
            std::vector<Arm> arms;
            if (etas.empty()) {
                for (const auto& a : split_list(exp_arms)) arms.push_back(parse_arm(a));
            } else {
                arms.push_back(cfg.arm);
            }

            // Load for the most demanding arm so every requested arm has its artifacts.
            GenerationConfig load_cfg = cfg;
            for (Arm a : arms) {
                if (a == Arm::pos_star) load_cfg.arm = Arm::pos_star;
            }
            if (load_cfg.arm != Arm::pos_star) {
                for (Arm a : arms) {
                    if (a == Arm::pos) load_cfg.arm = Arm::pos;
                }
            }
            const Artifacts art = load_artifacts(load_cfg);
            GuidedNoiseCache cache;

            std::vector<MetricRecord> summary;
            std::map<std::string, std::vector<double>> fd_by_label;
            for (std::size_t s = 0; s < exp_seeds; ++s) {
                GenerationConfig c = cfg;
                c.seed = cfg.seed + s;
                RunReport report = etas.empty() ? run_experiment(prompts, arms, c, art, &target, &cache)
                                                : eta_sweep(prompts, etas, c, art, &target, &cache);
                for (const auto& m : report.metrics) {
                    if (m.metric == "fd") fd_by_label[m.arm].push_back(m.value);
                }
                const fs::path dir = exp_seeds == 1 ? fs::path(exp_out) : fs::path(exp_out) / ("seed_" + std::to_string(c.seed));
                write_run_report(dir, report, exp_pgm);
                summary.insert(summary.end(), report.metrics.begin(), report.metrics.end());
            }

            std::vector<MetricRecord> aggregate;
            const std::string reference_label = etas.empty() ? "baseline" : etas.front().label();
            const auto ref_it = fd_by_label.find(reference_label);
            for (const auto& [label, fds] : fd_by_label) {
                aggregate.push_back({"fd_mean", mean_of(fds), cfg.hash(), label, "seeds=" + std::to_string(fds.size())});
                if (ref_it == fd_by_label.end() || label == reference_label) continue;
                std::size_t wins = 0;
                for (std::size_t i = 0; i < fds.size(); ++i) wins += fds[i] < ref_it->second[i] ? 1 : 0;
                aggregate.push_back({"wins_vs_" + reference_label, static_cast<double>(wins), cfg.hash(), label,
                                     "of " + std::to_string(fds.size())});
                aggregate.push_back({"sign_test_p", sign_test_p_value(wins, fds.size()), cfg.hash(), label,
                                     "one-sided vs " + reference_label});
            }
            fs::create_directories(exp_out);
            {
                std::ofstream out(fs::path(exp_out) / "summary.tsv");
                write_metric_records(out, aggregate);
            }
            if (!etas.empty()) {
                std::vector<std::string> labels;
                PlotSeries series{"fd_mean", {}};
                for (const auto& e : etas) {
                    labels.push_back(e.label());
                    series.values.push_back(mean_of(fd_by_label[e.label()]));
                }
                std::ofstream(fs::path(exp_out) / "eta_sweep.svg") << render_svg_plot("FD against eta", labels, {series});
            }
            write_metric_table(std::cout, aggregate);
        } else if (eval->parsed()) {
            std::ifstream in(fs::path(ev_run) / "report.json");
            if (!in) throw MissingArtifact("no report.json in " + ev_run);
            nlohmann::json report;
            in >> report;
            const Dataset reference = load_dataset(ev_reference);
            EvaluationTarget target{reference.latents, false, nullptr};
            std::vector<MetricRecord> records;
            for (const auto& run : report.at("runs")) {
                std::vector<LatentTensor> videos;
                for (const auto& r : run.at("results")) {
                    videos.push_back(load_tensor(fs::path(ev_run) / r.at("file").get<std::string>()));
                }
                records.push_back({"fd", feature_distance(videos, target), run.at("config_hash").get<std::string>(),
                                   run.at("label").get<std::string>(), "reference=" + ev_reference});
            }
            write_metric_table(std::cout, records);
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfig;
    } catch (const MissingArtifact& e) {
        std::cerr << "missing artifact: " << e.what() << "\n";
        return kMissing;
    } catch (const FormatError& e) {
        std::cerr << "unreadable artifact: " << e.what() << "\n";
        return kMissing;
    } catch (const TransportError& e) {
        std::cerr << "rewrite transport failure: " << e.what() << "\n";
        return kTransport;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kFailure;
    }
    return kOk;
}
