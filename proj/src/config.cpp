// Copyright (C) 2026 pos-diffusion contributors
// SPDX-License-Identifier: Apache-2.0

#include "pos/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "pos/embedder.hpp"
#include "pos/spr.hpp"

namespace pos {

Arm parse_arm(const std::string& text) {
    if (text == "baseline") return Arm::baseline;
    if (text == "ona") return Arm::ona;
    if (text == "spr") return Arm::spr;
    if (text == "pos") return Arm::pos;
    if (text == "pos_star") return Arm::pos_star;
    throw ConfigError("unknown arm '" + text + "' (expected baseline, ona, spr, pos or pos_star)");
}

std::string arm_name(Arm arm) {
    switch (arm) {
        case Arm::baseline: return "baseline";
        case Arm::ona: return "ona";
        case Arm::spr: return "spr";
        case Arm::pos: return "pos";
        case Arm::pos_star: return "pos_star";
    }
    return "?";
}

bool arm_uses_guided_noise(Arm arm) { return arm == Arm::ona || arm == Arm::pos || arm == Arm::pos_star; }
bool arm_uses_rewrite(Arm arm) { return arm == Arm::spr || arm == Arm::pos || arm == Arm::pos_star; }

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

double parse_double(const std::string& key, const std::string& value) {
    double v = 0.0;
    const auto* end = value.data() + value.size();
    auto [ptr, ec] = std::from_chars(value.data(), end, v);
    if (ec != std::errc{} || ptr != end || !std::isfinite(v)) throw ConfigError(key + ": not a finite number: '" + value + "'");
    return v;
}

std::uint64_t parse_uint(const std::string& key, const std::string& value) {
    std::uint64_t v = 0;
    const auto* end = value.data() + value.size();
    auto [ptr, ec] = std::from_chars(value.data(), end, v);
    if (ec != std::errc{} || ptr != end) throw ConfigError(key + ": not a non-negative integer: '" + value + "'");
    return v;
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1" || value == "yes") return true;
    if (value == "false" || value == "0" || value == "no") return false;
    throw ConfigError(key + ": expected true or false, got '" + value + "'");
}

}  // namespace

ConfigMap parse_config_text(const std::string& text) {
    ConfigMap map;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto t = trim(line);
        if (t.empty() || t.front() == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
        const auto key = trim(t.substr(0, eq));
        if (key.empty()) throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
        if (!map.emplace(key, trim(t.substr(eq + 1))).second) {
            throw ConfigError("config line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
        }
    }
    return map;
}

ConfigMap read_config_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw MissingArtifact("config file not found: " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

void GenerationConfig::validate() const {
    if (steps < 1) throw ConfigError("steps must be >= 1");
    if (!eta_infinite && !(eta >= 0.0 && std::isfinite(eta))) throw ConfigError("eta must be finite and >= 0, or inf");
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("gamma must lie in [0, 1]");
    if (frames < 1) throw ConfigError("frames must be >= 1");
    if (workers < 1) throw ConfigError("workers must be >= 1");
    if (llm_retries < 1) throw ConfigError("llm_retries must be >= 1");
    if (!llm_endpoint.empty() && !llm_mock.empty()) throw ConfigError("set llm_endpoint or llm_mock, not both");
    if (!llm_mock.empty()) {
        try {
            if (parse_mock_mode(llm_mock) == MockMode::fixture && llm_fixture.empty()) {
                throw ConfigError("llm_mock = fixture needs llm_fixture");
            }
        } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what());
        }
    }
}

ConfigMap GenerationConfig::to_map() const {
    return {
        {"steps", std::to_string(steps)},
        {"beta", format_beta_spec(beta)},
        {"eta", eta_infinite ? std::string("inf") : shortest_repr(eta)},
        {"gamma", shortest_repr(gamma)},
        {"refs_k", std::to_string(refs_k)},
        {"seed", std::to_string(seed)},
        {"arm", arm_name(arm)},
        {"frames", std::to_string(frames)},
        {"pool", pool_path},
        {"denoiser", denoiser_path},
        {"npnet", npnet_path},
        {"llm_endpoint", llm_endpoint},
        {"llm_mock", llm_mock},
        {"llm_fixture", llm_fixture},
        {"llm_token_env", llm_token_env},
        {"llm_retries", std::to_string(llm_retries)},
        {"llm_timeout_ms", std::to_string(llm_timeout_ms)},
        {"llm_fallback", llm_fallback ? "true" : "false"},
        {"workers", std::to_string(workers)},
        {"out", out},
    };
}

GenerationConfig GenerationConfig::from_map(const ConfigMap& map) {
    GenerationConfig c;
    for (const auto& [key, value] : map) {
        if (key == "steps") c.steps = parse_uint(key, value);
        else if (key == "beta") {
            try {
                c.beta = parse_beta_spec(value);
            } catch (const std::logic_error& e) {
                throw ConfigError(std::string("beta: ") + e.what());
            }
        } else if (key == "eta") {
            if (value == "inf" || value == "infinity") {
                c.eta_infinite = true;
                c.eta = 0.0;
            } else {
                c.eta_infinite = false;
                c.eta = parse_double(key, value);
            }
        } else if (key == "gamma") c.gamma = parse_double(key, value);
        else if (key == "refs_k") c.refs_k = parse_uint(key, value);
        else if (key == "seed") c.seed = parse_uint(key, value);
        else if (key == "arm") c.arm = parse_arm(value);
        else if (key == "frames") c.frames = parse_uint(key, value);
        else if (key == "pool") c.pool_path = value;
        else if (key == "denoiser") c.denoiser_path = value;
        else if (key == "npnet") c.npnet_path = value;
        else if (key == "llm_endpoint") c.llm_endpoint = value;
        else if (key == "llm_mock") c.llm_mock = value;
        else if (key == "llm_fixture") c.llm_fixture = value;
        else if (key == "llm_token_env") c.llm_token_env = value;
        else if (key == "llm_retries") c.llm_retries = parse_uint(key, value);
        else if (key == "llm_timeout_ms") c.llm_timeout_ms = parse_uint(key, value);
        else if (key == "llm_fallback") c.llm_fallback = parse_bool(key, value);
        else if (key == "workers") c.workers = parse_uint(key, value);
        else if (key == "out") c.out = value;
        else throw ConfigError("unknown config key '" + key + "'");
    }
    c.validate();
    return c;
}

std::string GenerationConfig::canonical() const {
    std::string out;
    for (const auto& [key, value] : to_map()) {
        if (key == "workers" || key == "out") continue;
        out += key + "=" + value + "\n";
    }
    return out;
}

std::string GenerationConfig::hash() const {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(canonical())));
    return buf;
}

GenerationConfig layered_config(const ConfigMap& file, const ConfigMap& flags) {
    ConfigMap merged = file;
    for (const auto& [k, v] : flags) merged[k] = v;
    return GenerationConfig::from_map(merged);
}

}  // namespace pos
