// Copyright (C) 2026 pos-diffusion contributors
// SPDX-License-Identifier: Apache-2.0

#include "pos/embedder.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>

namespace pos {

EmbeddingVector EmbeddingVector::normalized(std::vector<double> values) {
    double sq = 0.0;
    for (double v : values) {
        if (!std::isfinite(v)) throw std::invalid_argument("embedding has a non-finite entry");
        sq += v * v;
    }
    if (sq == 0.0) throw std::invalid_argument("cannot normalize a zero embedding");
    const double inv = 1.0 / std::sqrt(sq);
    for (double& v : values) v *= inv;
    return EmbeddingVector(std::move(values));
}

EmbeddingVector EmbeddingVector::operator-() const {
    std::vector<double> v = values_;
    for (double& x : v) x = -x;
    return EmbeddingVector(std::move(v));
}

double cosine(const EmbeddingVector& a, const EmbeddingVector& b) {
    if (a.dims() != b.dims()) {
        throw std::invalid_argument("cosine: dims mismatch " + std::to_string(a.dims()) + " vs " + std::to_string(b.dims()));
    }
    // Both sides are unit norm, so the dot product is the cosine.
    double dot = 0.0;
    for (std::size_t i = 0; i < a.dims(); ++i) dot += a.values()[i] * b.values()[i];
    return std::clamp(dot, -1.0, 1.0);
}

std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string normalize_text(const std::string& text) {
    std::string out;
    out.reserve(text.size());
    bool pending_space = false;
    for (unsigned char c : text) {
        if (std::isalnum(c) || c >= 0x80) {
            if (pending_space && !out.empty()) out.push_back(' ');
            pending_space = false;
            out.push_back(static_cast<char>(std::tolower(c)));
        } else {
            pending_space = true;
        }
    }
    return out;
}

NgramEmbedder::NgramEmbedder(std::size_t dims, std::size_t min_n, std::size_t max_n)
    : dims_(dims), min_n_(min_n), max_n_(max_n) {
    if (dims_ == 0 || min_n_ == 0 || max_n_ < min_n_) throw std::invalid_argument("invalid n-gram embedder settings");
}

std::string NgramEmbedder::tag() const {
    return "ngram:" + std::to_string(min_n_) + "-" + std::to_string(max_n_) + ":" + std::to_string(dims_);
}

EmbeddingVector NgramEmbedder::embed(const std::string& text) const {
    const std::string norm = normalize_text(text);
    if (norm.empty()) throw std::invalid_argument("cannot embed empty text");
    const std::string padded = " " + norm + " ";
    std::vector<double> counts(dims_, 0.0);
    for (std::size_t n = min_n_; n <= max_n_; ++n) {
        if (padded.size() < n) break;
        for (std::size_t i = 0; i + n <= padded.size(); ++i) {
            counts[fnv1a64(std::string_view(padded).substr(i, n)) % dims_] += 1.0;
        }
    }
    // Short inputs ("a") yield no n-grams at min_n > |padded|; count the whole token instead.
    if (std::all_of(counts.begin(), counts.end(), [](double v) { return v == 0.0; })) {
        counts[fnv1a64(padded) % dims_] = 1.0;
    }
    return EmbeddingVector::normalized(std::move(counts));
}

TableEmbedder::TableEmbedder(std::string name, std::size_t dims) : name_(std::move(name)), dims_(dims) {
    if (dims_ == 0) throw std::invalid_argument("table embedder needs dims >= 1");
}

void TableEmbedder::insert(const std::string& text, std::vector<double> values) {
    if (values.size() != dims_) {
        throw std::invalid_argument("embedding for '" + text + "' has " + std::to_string(values.size()) +
                                    " dims, expected " + std::to_string(dims_));
    }
    table_.insert_or_assign(text, EmbeddingVector::normalized(std::move(values)));
}

EmbeddingVector TableEmbedder::embed(const std::string& text) const {
    auto it = table_.find(text);
    if (it == table_.end()) throw std::out_of_range("no imported embedding for '" + text + "'");
    return it->second;
}

TableEmbedder TableEmbedder::load(const std::filesystem::path& path, std::string name) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open embedding file " + path.string());
    std::string line;
    std::size_t lineno = 0;
    std::optional<TableEmbedder> table;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto tab = line.rfind('\t');
        if (tab == std::string::npos) {
            throw std::invalid_argument(path.string() + ":" + std::to_string(lineno) + ": missing tab separator");
        }
        std::vector<double> values;
        std::stringstream ss(line.substr(tab + 1));
        std::string item;
        while (std::getline(ss, item, ',')) {
            std::size_t used = 0;
            double v = 0.0;
            try {
                v = std::stod(item, &used);
            } catch (const std::exception&) {
                used = 0;
            }
            if (used == 0 || used != item.size()) {
                throw std::invalid_argument(path.string() + ":" + std::to_string(lineno) + ": bad number '" + item + "'");
            }
            values.push_back(v);
        }
        if (!table) table.emplace(name, values.size());
        try {
            table->insert(line.substr(0, tab), std::move(values));
        } catch (const std::invalid_argument& e) {
            throw std::invalid_argument(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    if (!table) throw std::invalid_argument("embedding file " + path.string() + " has no records");
    return std::move(*table);
}

}  // namespace pos
