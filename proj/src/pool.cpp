// Copyright (C) 2026 pos-diffusion contributors
// SPDX-License-Identifier: Apache-2.0

#include "pos/pool.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <numeric>
#include <random>
#include <set>
#include <stdexcept>

#include "pos/binary_io.hpp"

namespace pos {
namespace {

constexpr const char* kManifestName = "manifest.json";
constexpr const char* kPoolFormat = "pos-pool";
constexpr int kPoolVersion = 1;

std::string entry_id(std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "e%06zu", i);
    return buf;
}

}  // namespace

Pool Pool::build(const std::vector<std::pair<std::string, LatentTensor>>& pairs,
                 std::shared_ptr<const Embedder> embedder) {
    std::vector<PoolItem> items;
    items.reserve(pairs.size());
    for (std::size_t i = 0; i < pairs.size(); ++i) items.push_back({entry_id(i), pairs[i].first, pairs[i].second});
    return build(std::move(items), std::move(embedder));
}

Pool Pool::build(std::vector<PoolItem> items, std::shared_ptr<const Embedder> embedder) {
    if (!embedder) throw std::invalid_argument("pool needs an embedder");
    if (items.empty()) throw std::invalid_argument("pool needs at least one entry");
    Pool pool;
    pool.embedder_ = std::move(embedder);
    pool.shape_ = items.front().latent.shape();
    std::set<std::string> seen;
    pool.entries_.reserve(items.size());
    for (auto& item : items) {
        if (item.latent.shape() != pool.shape_) {
            throw std::invalid_argument("pool entry '" + item.id + "' has shape " + item.latent.shape().str() +
                                        ", expected " + pool.shape_.str());
        }
        if (!item.latent.all_finite()) throw std::invalid_argument("pool entry '" + item.id + "' has non-finite latent");
        if (!seen.insert(item.id).second) throw std::invalid_argument("duplicate pool id '" + item.id + "'");
        auto emb = pool.embedder_->embed(item.text);
        pool.entries_.push_back({std::move(item.id), std::move(item.text), std::move(emb), round_to_f32(std::move(item.latent))});
    }
    return pool;
}

std::vector<RankedEntry> Pool::rank(const std::string& prompt, std::size_t k) const {
    return rank(embedder_->embed(prompt), k);
}

std::vector<RankedEntry> Pool::rank(const EmbeddingVector& query, std::size_t k) const {
    if (k > entries_.size()) {
        throw std::invalid_argument("requested " + std::to_string(k) + " references from a pool of " +
                                    std::to_string(entries_.size()));
    }
    std::vector<RankedEntry> all(entries_.size());
    for (std::size_t i = 0; i < entries_.size(); ++i) all[i] = {i, cosine(query, entries_[i].embedding)};
    auto better = [&](const RankedEntry& a, const RankedEntry& b) {
        if (a.similarity != b.similarity) return a.similarity > b.similarity;
        return entries_[a.index].id < entries_[b.index].id;
    };
    std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k), all.end(), better);
    all.resize(k);
    return all;
}

const PoolEntry& Pool::retrieve_video(const std::string& prompt) const {
    if (entries_.empty()) throw std::logic_error("retrieve_video on an empty pool");
    return entries_[rank(prompt, 1).front().index];
}

std::vector<std::string> Pool::retrieve_references(const std::string& prompt, std::size_t k) const {
    std::vector<std::string> texts;
    if (k == 0) return texts;
    for (const auto& r : rank(prompt, k)) texts.push_back(entries_[r.index].text);
    return texts;
}

Pool Pool::sample(std::size_t count, std::uint64_t seed) const {
    std::vector<std::size_t> idx(entries_.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(std::min(count, idx.size()));
    std::sort(idx.begin(), idx.end());
    Pool out;
    out.embedder_ = embedder_;
    out.shape_ = shape_;
    for (auto i : idx) out.entries_.push_back(entries_[i]);
    return out;
}

void Pool::save(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir / "tensors");
    nlohmann::json manifest;
    manifest["format"] = kPoolFormat;
    manifest["version"] = kPoolVersion;
    manifest["embedder"] = embedder_->tag();
    manifest["shape"] = shape_.dims();
    auto& list = manifest["entries"] = nlohmann::json::array();
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        const auto& e = entries_[i];
        const std::string file = "tensors/" + entry_id(i) + ".ptns";
        save_tensor(dir / file, e.latent);
        list.push_back({{"id", e.id}, {"text", e.text}, {"file", file}, {"shape", e.latent.shape().dims()}});
    }
    std::ofstream out(dir / kManifestName, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write pool manifest in " + dir.string());
    out << manifest.dump(2) << "\n";
}

Pool Pool::load(const std::filesystem::path& dir, std::shared_ptr<const Embedder> embedder) {
    if (!embedder) throw std::invalid_argument("pool needs an embedder");
    std::ifstream in(dir / kManifestName);
    if (!in) throw std::runtime_error("no pool manifest at " + (dir / kManifestName).string());
    nlohmann::json manifest;
    try {
        in >> manifest;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("pool manifest: ") + e.what());
    }
    if (manifest.value("format", "") != kPoolFormat || manifest.value("version", 0) != kPoolVersion) {
        throw FormatError("unsupported pool manifest format");
    }
    const auto tag = manifest.at("embedder").get<std::string>();
    if (tag != embedder->tag()) {
        throw std::invalid_argument("pool was built with embedder '" + tag + "', got '" + embedder->tag() + "'");
    }
    std::vector<PoolItem> items;
    for (const auto& e : manifest.at("entries")) {
        auto latent = load_tensor(dir / e.at("file").get<std::string>());
        if (latent.shape().dims() != e.at("shape").get<std::array<std::size_t, 4>>()) {
            throw FormatError("tensor file shape disagrees with manifest for '" + e.at("id").get<std::string>() + "'");
        }
        items.push_back({e.at("id").get<std::string>(), e.at("text").get<std::string>(), std::move(latent)});
    }
    return build(std::move(items), std::move(embedder));
}

}  // namespace pos
