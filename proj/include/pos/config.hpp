// Copyright (C) 2026 pos-diffusion contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>

#include "pos/ona.hpp"
#include "pos/schedule.hpp"

namespace pos {

/// Invalid or inconsistent configuration (CLI exit code 2).
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A required file or directory is absent (CLI exit code 3).
class MissingArtifact : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class Arm { baseline, ona, spr, pos, pos_star };

Arm parse_arm(const std::string& text);
std::string arm_name(Arm arm);

bool arm_uses_guided_noise(Arm arm);
bool arm_uses_rewrite(Arm arm);

using ConfigMap = std::map<std::string, std::string>;

/// Parses "key = value" lines. Blank lines and lines starting with '#' are
/// skipped; a repeated key is an error.
ConfigMap parse_config_text(const std::string& text);
ConfigMap read_config_file(const std::filesystem::path& path);

struct GenerationConfig {
    std::size_t steps = 50;
    BetaSpec beta = StridedLinearBeta{};
    double eta = 0.5;
    bool eta_infinite = false;
    double gamma = 0.1;
    std::size_t refs_k = 3;
    std::uint64_t seed = 0;
    Arm arm = Arm::pos;
    std::size_t frames = 8;

    std::string pool_path;
    std::string denoiser_path;
    std::string npnet_path;

    std::string llm_endpoint;
    /// identity | prefix | fixture; empty when an endpoint is used.
    std::string llm_mock;
    std::string llm_fixture;
    std::string llm_token_env;
    std::size_t llm_retries = 3;
    std::size_t llm_timeout_ms = 10000;
    bool llm_fallback = true;

    /// Execution-only settings; excluded from the canonical form.
    std::size_t workers = 1;
    std::string out;

    /// Field-level checks plus the arm-specific requirements.
    void validate() const;

    MixtureConfig mixture(std::uint64_t prompt_seed) const { return {eta, eta_infinite, prompt_seed}; }

    ConfigMap to_map() const;
    static GenerationConfig from_map(const ConfigMap& map);

    /// Sorted "key=value" lines of every output-affecting field.
    std::string canonical() const;
    /// 16 hex digits of FNV-1a 64 over canonical().
    std::string hash() const;
};

/// defaults, then `file`, then `flags`; later layers win.
GenerationConfig layered_config(const ConfigMap& file, const ConfigMap& flags);

}  // namespace pos
