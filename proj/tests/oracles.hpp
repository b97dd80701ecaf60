// Copyright (C) 2026 pos-diffusion contributors
// SPDX-License-Identifier: Apache-2.0

// Reference implementations written independently of the library, plus small
// fixtures shared by the test binaries.

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <unistd.h>
#include <vector>

#include "pos/pool.hpp"
#include "pos/tensor.hpp"

namespace oracle {

// z_{t-1} through the predicted clean sample:
//   x0 = (z_t - sqrt(1 - a_t) eps) / sqrt(a_t)
//   z_{t-1} = sqrt(a_prev) x0 + sqrt(1 - a_prev) eps
inline double ddim_move(double z, double eps, double a_from, double a_to) {
    const double x0 = (z - std::sqrt(1.0 - a_from) * eps) / std::sqrt(a_from);
    return std::sqrt(a_to) * x0 + std::sqrt(1.0 - a_to) * eps;
}

inline pos::LatentTensor ddim_move(const pos::LatentTensor& z, const pos::LatentTensor& eps, double a_from,
                                   double a_to) {
    pos::LatentTensor out(z.shape());
    for (std::size_t i = 0; i < z.size(); ++i) out[i] = ddim_move(z[i], eps[i], a_from, a_to);
    return out;
}

inline std::vector<double> running_product(const std::vector<double>& betas) {
    std::vector<double> out;
    long double acc = 1.0L;
    for (double b : betas) {
        acc *= 1.0L - static_cast<long double>(b);
        out.push_back(static_cast<double>(acc));
    }
    return out;
}

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double cosine(const std::vector<double>& a, const std::vector<double>& b) {
    return dot(a, b) / std::sqrt(dot(a, a) * dot(b, b));
}

// Full sort of every entry by (similarity desc, id asc); returns entry indices.
// Stored embeddings are unit norm and `query` must be too, so the similarity
// is the plain dot product.
inline std::vector<std::size_t> ranked_indices(const pos::Pool& pool, const std::vector<double>& query) {
    std::vector<std::size_t> idx(pool.size());
    std::vector<double> sim(pool.size());
    for (std::size_t i = 0; i < pool.size(); ++i) {
        idx[i] = i;
        sim[i] = dot(query, pool.entry(i).embedding.values());
    }
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        if (sim[a] != sim[b]) return sim[a] > sim[b];
        return pool.entry(a).id < pool.entry(b).id;
    });
    return idx;
}

inline std::vector<double> random_vector(std::size_t dims, std::mt19937_64& rng) {
    std::normal_distribution<double> n;
    std::vector<double> v(dims);
    for (auto& x : v) x = n(rng);
    return v;
}

inline double sample_variance(const std::vector<double>& xs) {
    double m = 0.0;
    for (double x : xs) m += x;
    m /= static_cast<double>(xs.size());
    double v = 0.0;
    for (double x : xs) v += (x - m) * (x - m);
    return v / static_cast<double>(xs.size() - 1);
}

// Closed-form Frechet distance between N(mu_a, S_a) and N(mu_b, S_b). The
// trace of (S_a S_b)^{1/2} comes from the eigenvalues of the non-symmetric
// product, which are real and non-negative for SPD inputs.
inline double frechet_closed_form(const Eigen::VectorXd& mu_a, const Eigen::MatrixXd& s_a, const Eigen::VectorXd& mu_b,
                                  const Eigen::MatrixXd& s_b) {
    Eigen::EigenSolver<Eigen::MatrixXd> eig(s_a * s_b, false);
    double tr_sqrt = 0.0;
    for (Eigen::Index i = 0; i < eig.eigenvalues().size(); ++i) tr_sqrt += std::sqrt(std::max(0.0, eig.eigenvalues()[i].real()));
    return (mu_a - mu_b).squaredNorm() + s_a.trace() + s_b.trace() - 2.0 * tr_sqrt;
}

// Q diag(lambda) Q^T with Q from the QR factorization of a Gaussian matrix.
inline Eigen::MatrixXd random_spd(std::size_t dims, double lo, double hi, std::mt19937_64& rng) {
    std::normal_distribution<double> n;
    std::uniform_real_distribution<double> u(lo, hi);
    Eigen::MatrixXd g(dims, dims);
    for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = n(rng);
    const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(g).householderQ();
    Eigen::VectorXd lambda(dims);
    for (auto& l : lambda) l = u(rng);
    return q * lambda.asDiagonal() * q.transpose();
}

}  // namespace oracle

namespace testing_support {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("pos-test-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

}  // namespace testing_support
