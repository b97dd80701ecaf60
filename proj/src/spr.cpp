// Copyright (C) 2026 pos-diffusion contributors
// SPDX-License-Identifier: Apache-2.0

#include "pos/spr.hpp"

#include <httplib.h>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <thread>

#include "pos/ona.hpp"

namespace pos {

std::string render_instruction(const std::string& original, const std::vector<std::string>& references) {
    const std::string limit = std::to_string(kRewriteMaxWords);
    if (references.empty()) {
        return "Rewrite the sentence " + original +
               " without changing the meaning of the original sentence to a maximum of " + limit + " words";
    }
    const std::string k = std::to_string(references.size());
    const std::string noun = references.size() == 1 ? " example" : " examples";
    std::string out = "Let me give you " + k + noun + ": ";
    for (std::size_t i = 0; i < references.size(); ++i) {
        if (i > 0) out += ",";
        out += references[i];
    }
    out += ", rewrite the sentence " + original +
           " without changing the meaning of the original sentence to a maximum of " + limit +
           " words, imitating/combining the adjectives, adverbs or sentence patterns from the " + k + noun + " above";
    return out;
}

MockMode parse_mock_mode(const std::string& text) {
    if (text == "identity") return MockMode::identity;
    if (text == "prefix") return MockMode::prefix;
    if (text == "fixture") return MockMode::fixture;
    throw std::invalid_argument("unknown mock mode '" + text + "' (identity|prefix|fixture)");
}

MockEngine MockEngine::from_fixture(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open rewrite fixture " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument("rewrite fixture " + path.string() + ": " + e.what());
    }
    if (!j.is_object()) throw std::invalid_argument("rewrite fixture must be a JSON object of prompt -> rewrite");
    return from_fixture(j.get<std::map<std::string, std::string>>());
}

MockEngine MockEngine::from_fixture(std::map<std::string, std::string> table) {
    MockEngine engine(MockMode::fixture);
    engine.fixture_ = std::move(table);
    return engine;
}

std::string MockEngine::tag() const {
    switch (mode_) {
        case MockMode::identity: return "mock:identity";
        case MockMode::prefix: return "mock:prefix";
        case MockMode::fixture: return "mock:fixture";
    }
    return "mock";
}

std::string MockEngine::rewrite(const RewriteRequest& request) const {
    switch (mode_) {
        case MockMode::identity: return request.original;
        case MockMode::prefix: return "detailed: " + request.original;
        case MockMode::fixture: {
            auto it = fixture_.find(request.original);
            if (it == fixture_.end()) throw TransportError("fixture has no entry for '" + request.original + "'");
            return it->second;
        }
    }
    throw TransportError("unreachable mock mode");
}

HttpEngine::HttpEngine(HttpEngineConfig config) : config_(std::move(config)) {
    const std::string scheme = "http://";
    const auto& url = config_.endpoint;
    if (url.rfind(scheme, 0) != 0) throw std::invalid_argument("LLM endpoint must be an http:// URL, got '" + url + "'");
    const auto rest = url.substr(scheme.size());
    const auto slash = rest.find('/');
    const auto authority = rest.substr(0, slash);
    path_ = slash == std::string::npos ? "/" : rest.substr(slash);
    const auto colon = authority.rfind(':');
    if (colon == std::string::npos) {
        host_ = authority;
    } else {
        host_ = authority.substr(0, colon);
        try {
            port_ = std::stoi(authority.substr(colon + 1));
        } catch (const std::exception&) {
            throw std::invalid_argument("bad port in LLM endpoint '" + url + "'");
        }
    }
    if (host_.empty()) throw std::invalid_argument("LLM endpoint has no host: '" + url + "'");
    if (config_.retry.max_attempts == 0) throw std::invalid_argument("retry policy needs max_attempts >= 1");
}

std::string HttpEngine::rewrite(const RewriteRequest& request) const {
    httplib::Client client(host_, port_);
    const auto timeout = config_.retry.request_timeout;
    client.set_connection_timeout(std::chrono::duration_cast<std::chrono::seconds>(timeout).count(),
                                  static_cast<time_t>((timeout.count() % 1000) * 1000));
    client.set_read_timeout(std::chrono::duration_cast<std::chrono::seconds>(timeout).count(),
                            static_cast<time_t>((timeout.count() % 1000) * 1000));
    client.set_write_timeout(std::chrono::duration_cast<std::chrono::seconds>(timeout).count(),
                             static_cast<time_t>((timeout.count() % 1000) * 1000));

    httplib::Headers headers;
    if (!config_.token_env.empty()) {
        const char* token = std::getenv(config_.token_env.c_str());
        if (token == nullptr || *token == '\0') {
            throw TransportError("auth token variable " + config_.token_env + " is not set");
        }
        headers.emplace("Authorization", std::string("Bearer ") + token);
    }
    const std::string body = nlohmann::json{{"instruction", request.instruction}, {"max_words", request.max_words}}.dump();

    std::string last_error;
    auto backoff = config_.retry.initial_backoff;
    for (std::size_t attempt = 1; attempt <= config_.retry.max_attempts; ++attempt) {
        if (attempt > 1) {
            std::this_thread::sleep_for(backoff);
            backoff = std::chrono::milliseconds(
                static_cast<long long>(static_cast<double>(backoff.count()) * config_.retry.backoff_multiplier));
        }
        auto res = client.Post(path_, headers, body, "application/json");
        if (!res) {
            last_error = "request failed: " + httplib::to_string(res.error());
            continue;
        }
        if (res->status == 429 || res->status >= 500) {
            last_error = "HTTP " + std::to_string(res->status);
            continue;
        }
        if (res->status != 200) throw TransportError("HTTP " + std::to_string(res->status) + " from " + config_.endpoint);
        try {
            const auto j = nlohmann::json::parse(res->body);
            return j.at("rewritten").get<std::string>();
        } catch (const nlohmann::json::exception& e) {
            throw TransportError(std::string("malformed response: ") + e.what());
        }
    }
    throw TransportError("giving up after " + std::to_string(config_.retry.max_attempts) + " attempts: " + last_error);
}

std::string normalize_whitespace(const std::string& text) {
    std::istringstream in(text);
    std::string word, out;
    while (in >> word) {
        if (!out.empty()) out.push_back(' ');
        out += word;
    }
    return out;
}

std::size_t word_count(const std::string& text) {
    std::istringstream in(text);
    std::string word;
    std::size_t n = 0;
    while (in >> word) ++n;
    return n;
}

RewriteExchange rewrite(const std::string& original, const Pool& pool, std::size_t k, const RewriteEngine& engine,
                        const RewriteOptions& options) {
    return rewrite_with_references(original, pool.retrieve_references(original, k), engine, options);
}

RewriteExchange rewrite_with_references(const std::string& original, std::vector<std::string> references,
                                        const RewriteEngine& engine, const RewriteOptions& options) {
    RewriteExchange ex;
    ex.original = original;
    ex.references = std::move(references);
    ex.instruction = render_instruction(original, ex.references);

    std::string answer;
    try {
        answer = normalize_whitespace(engine.rewrite({original, ex.references, ex.instruction, kRewriteMaxWords}));
        if (answer.empty()) ex.note = "engine returned an empty rewrite";
    } catch (const TransportError& e) {
        if (!options.fallback) throw;
        ex.note = e.what();
    }
    if (answer.empty()) {
        if (!options.fallback) throw TransportError(ex.note);
        ex.rewritten = original;
        ex.engine_tag = "fallback";
        return ex;
    }
    ex.rewritten = answer;
    ex.engine_tag = engine.tag();
    if (word_count(answer) > kRewriteMaxWords) {
        ex.note = "rewrite has " + std::to_string(word_count(answer)) + " words, above the " +
                  std::to_string(kRewriteMaxWords) + "-word limit";
    }
    return ex;
}

DhsConfig::DhsConfig(double gamma, std::size_t steps) : gamma_(gamma), steps_(steps) {
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw std::invalid_argument("gamma must lie in [0,1]");
    if (steps == 0) throw std::invalid_argument("DHS needs T >= 1");
}

std::size_t DhsConfig::rewritten_steps() const {
    // The epsilon absorbs representation error so that e.g. 100 * 0.29 counts as 29.
    const double m = std::floor(static_cast<double>(steps_) * gamma_ + 1e-9);
    return std::min(steps_, static_cast<std::size_t>(m));
}

const Condition& dhs_condition(std::size_t t, const DhsConfig& cfg, const Condition& original,
                               const Condition& rewritten) {
    if (t < 1 || t > cfg.steps()) {
        throw std::out_of_range("dhs_condition: t=" + std::to_string(t) + " outside [1, " + std::to_string(cfg.steps()) + "]");
    }
    return t > cfg.steps() - cfg.rewritten_steps() ? rewritten : original;
}

LatentTensor synthesize_dhs(const Condition& original, const Condition& rewritten, const LatentTensor& init_noise,
                            const DiffusionSchedule& sched, const NoisePredictor& denoiser, const DhsConfig& cfg) {
    if (cfg.steps() != sched.steps()) {
        throw std::invalid_argument("DHS step count " + std::to_string(cfg.steps()) + " != schedule steps " +
                                    std::to_string(sched.steps()));
    }
    return synthesize_scheduled(
        [&](std::size_t t) -> const Condition& { return dhs_condition(t, cfg, original, rewritten); }, init_noise,
        sched, denoiser);
}

}  // namespace pos
