// Copyright (C) 2026 pos-diffusion contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "pos/denoiser.hpp"
#include "pos/pool.hpp"
#include "pos/schedule.hpp"

namespace pos {

inline constexpr std::size_t kRewriteMaxWords = 20;

/// Instruction sent to the LLM. With references it follows the reference-guided
/// template; with none it degrades to a plain rewrite request. Reference text
/// is substituted literally.
std::string render_instruction(const std::string& original, const std::vector<std::string>& references);

/// Raised when the rewrite endpoint cannot produce an answer.
class TransportError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct RewriteRequest {
    std::string original;
    std::vector<std::string> references;
    std::string instruction;
    std::size_t max_words = kRewriteMaxWords;
};

class RewriteEngine {
public:
    virtual ~RewriteEngine() = default;
    virtual std::string tag() const = 0;
    /// Returns the raw rewritten prompt or throws TransportError.
    virtual std::string rewrite(const RewriteRequest& request) const = 0;
};

enum class MockMode { identity, prefix, fixture };

MockMode parse_mock_mode(const std::string& text);

/// Deterministic offline engine. `prefix` answers "detailed: " + original;
/// `fixture` looks the original prompt up in a JSON object file.
class MockEngine final : public RewriteEngine {
public:
    explicit MockEngine(MockMode mode) : mode_(mode) {}
    static MockEngine from_fixture(const std::filesystem::path& path);
    static MockEngine from_fixture(std::map<std::string, std::string> table);

    std::string tag() const override;
    std::string rewrite(const RewriteRequest& request) const override;

private:
    MockMode mode_;
    std::map<std::string, std::string> fixture_;
};

struct RetryPolicy {
    std::size_t max_attempts = 3;
    std::chrono::milliseconds initial_backoff{200};
    double backoff_multiplier = 2.0;
    std::chrono::milliseconds request_timeout{10000};
};

struct HttpEngineConfig {
    /// http://host[:port]/path
    std::string endpoint;
    /// Environment variable holding the bearer token; empty for no auth.
    std::string token_env;
    RetryPolicy retry;
};

/// POSTs {"instruction": ..., "max_words": 20} and reads {"rewritten": ...}.
/// Network errors, 429 and 5xx are retried with exponential backoff; other
/// statuses fail immediately.
class HttpEngine final : public RewriteEngine {
public:
    explicit HttpEngine(HttpEngineConfig config);

    std::string tag() const override { return "http:" + config_.endpoint; }
    std::string rewrite(const RewriteRequest& request) const override;

private:
    HttpEngineConfig config_;
    std::string host_;
    int port_ = 80;
    std::string path_;
};

struct RewriteExchange {
    std::string original;
    std::vector<std::string> references;
    std::string instruction;
    std::string rewritten;
    /// Engine tag, or "fallback" when the original prompt was kept.
    std::string engine_tag;
    /// Transport error or validation note; empty when clean.
    std::string note;
};

/// Collapses whitespace runs to single spaces and trims.
std::string normalize_whitespace(const std::string& text);
std::size_t word_count(const std::string& text);

struct RewriteOptions {
    /// On failure keep the original prompt instead of throwing TransportError.
    bool fallback = true;
};

/// Retrieves k references, renders the instruction, queries the engine and
/// normalizes the answer. Empty answers and transport failures fall back to
/// the original prompt (unless options.fallback is false).
RewriteExchange rewrite(const std::string& original, const Pool& pool, std::size_t k, const RewriteEngine& engine,
                        const RewriteOptions& options = {});

/// rewrite() with the references already chosen.
RewriteExchange rewrite_with_references(const std::string& original, std::vector<std::string> references,
                                        const RewriteEngine& engine, const RewriteOptions& options = {});

/// Hybrid-semantics schedule: the first m = floor(T * gamma) denoising steps
/// (t = T, T-1, ..., T-m+1) use the rewritten prompt, the rest the original.
class DhsConfig {
public:
    DhsConfig(double gamma, std::size_t steps);

    double gamma() const { return gamma_; }
    std::size_t steps() const { return steps_; }
    std::size_t rewritten_steps() const;

private:
    double gamma_;
    std::size_t steps_;
};

const Condition& dhs_condition(std::size_t t, const DhsConfig& cfg, const Condition& original,
                               const Condition& rewritten);

LatentTensor synthesize_dhs(const Condition& original, const Condition& rewritten, const LatentTensor& init_noise,
                            const DiffusionSchedule& sched, const NoisePredictor& denoiser, const DhsConfig& cfg);

}  // namespace pos
