// Copyright (C) 2026 pos-diffusion contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace pos {

/// L2-normalized feature vector.
class EmbeddingVector {
public:
    EmbeddingVector() = default;

    /// Normalizes `values`; throws on a zero or non-finite vector.
    static EmbeddingVector normalized(std::vector<double> values);

    std::size_t dims() const { return values_.size(); }
    const std::vector<double>& values() const { return values_; }

    EmbeddingVector operator-() const;
    bool operator==(const EmbeddingVector&) const = default;

private:
    explicit EmbeddingVector(std::vector<double> v) : values_(std::move(v)) {}
    std::vector<double> values_;
};

double cosine(const EmbeddingVector& a, const EmbeddingVector& b);

/// Text feature extractor E_t.
class Embedder {
public:
    virtual ~Embedder() = default;
    virtual std::size_t dims() const = 0;
    /// Identifies the embedder in pool manifests.
    virtual std::string tag() const = 0;
    virtual EmbeddingVector embed(const std::string& text) const = 0;
};

/// Lowercases, maps every non-alphanumeric byte to a space and collapses runs
/// of whitespace. Returns "" for text with no alphanumerics.
std::string normalize_text(const std::string& text);

/// Hashed character n-gram counts (n in [min_n, max_n]) over the normalized
/// text padded with one space on each side.
class NgramEmbedder final : public Embedder {
public:
    explicit NgramEmbedder(std::size_t dims = 256, std::size_t min_n = 3, std::size_t max_n = 5);

    std::size_t dims() const override { return dims_; }
    std::string tag() const override;
    EmbeddingVector embed(const std::string& text) const override;

private:
    std::size_t dims_, min_n_, max_n_;
};

/// Embeddings computed elsewhere (Sentence-BERT, CLIP, ...) and loaded from an
/// import file: one record per line, "text<TAB>v1,v2,...".
class TableEmbedder final : public Embedder {
public:
    TableEmbedder(std::string name, std::size_t dims);

    static TableEmbedder load(const std::filesystem::path& path, std::string name = "table");

    void insert(const std::string& text, std::vector<double> values);

    std::size_t dims() const override { return dims_; }
    std::string tag() const override { return "table:" + name_ + ":" + std::to_string(dims_); }
    /// Looks the text up verbatim; throws std::out_of_range when absent.
    EmbeddingVector embed(const std::string& text) const override;
    std::size_t size() const { return table_.size(); }

private:
    std::string name_;
    std::size_t dims_;
    std::unordered_map<std::string, EmbeddingVector> table_;
};

/// FNV-1a 64-bit; stable across platforms.
std::uint64_t fnv1a64(std::string_view bytes);

}  // namespace pos
