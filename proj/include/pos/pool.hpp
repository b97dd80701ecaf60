// Copyright (C) 2026 pos-diffusion contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "pos/embedder.hpp"
#include "pos/tensor.hpp"

namespace pos {

struct PoolEntry {
    std::string id;
    std::string text;
    EmbeddingVector embedding;
    /// Pre-encoded latent, stored at float32 precision.
    LatentTensor latent;
};

struct PoolItem {
    std::string id;
    std::string text;
    LatentTensor latent;
};

struct RankedEntry {
    std::size_t index;
    double similarity;
};

/// Candidate pool of (text, latent) pairs with exact cosine search over text
/// embeddings. Immutable after construction.
class Pool {
public:
    /// Assigns ids "e000000", "e000001", ... in input order.
    static Pool build(const std::vector<std::pair<std::string, LatentTensor>>& pairs,
                      std::shared_ptr<const Embedder> embedder);
    static Pool build(std::vector<PoolItem> items, std::shared_ptr<const Embedder> embedder);

    std::size_t size() const { return entries_.size(); }
    const std::vector<PoolEntry>& entries() const { return entries_; }
    const PoolEntry& entry(std::size_t i) const { return entries_.at(i); }
    const Embedder& embedder() const { return *embedder_; }
    std::shared_ptr<const Embedder> embedder_ptr() const { return embedder_; }
    const Shape& latent_shape() const { return shape_; }

    /// Top-k entries by cosine similarity to the prompt, descending; ties go to
    /// the lexicographically smaller id.
    std::vector<RankedEntry> rank(const std::string& prompt, std::size_t k) const;
    std::vector<RankedEntry> rank(const EmbeddingVector& query, std::size_t k) const;

    const PoolEntry& retrieve_video(const std::string& prompt) const;
    std::vector<std::string> retrieve_references(const std::string& prompt, std::size_t k) const;

    /// Uniformly samples `count` entries without replacement (count clamps to N).
    Pool sample(std::size_t count, std::uint64_t seed) const;

    /// Writes manifest.json plus one binary tensor file per entry.
    void save(const std::filesystem::path& dir) const;
    /// Recomputes embeddings with `embedder`, whose tag must match the manifest.
    static Pool load(const std::filesystem::path& dir, std::shared_ptr<const Embedder> embedder);

private:
    Pool() = default;

    std::vector<PoolEntry> entries_;
    std::shared_ptr<const Embedder> embedder_;
    Shape shape_;
};

}  // namespace pos
