#pragma once

#include <string>

#include "dcp/synthnet.hpp"
#include "dcp/tensor.hpp"

namespace dcp {

enum class DirectionMode { PCA, RANDOM };

std::string direction_mode_name(DirectionMode m);
DirectionMode direction_mode_from_name(const std::string& s);

/// Orthonormal latent directions with sampling probabilities proportional to
/// the variance each principal component explains.
struct DirectionSet {
    Tensor directions;       // [V, w_dim], rows unit-norm in PCA mode
    Tensor variance_ratios;  // [V], non-increasing, sums to 1 over retained components
    Tensor w_mean;           // [w_dim]
    DirectionMode mode = DirectionMode::PCA;

    int64_t count() const { return directions.dim(0); }
    int64_t w_dim() const { return directions.dim(1); }
};

struct WStats {
    Tensor w_mean;   // [w_dim]
    Tensor samples;  // [K, w_dim]
};

/// Samples K latents z ~ N(0,1), maps them through f, returns mean and samples.
WStats estimate_w_stats(const GeneratorWeights& weights, int64_t k, uint64_t seed);

/// Top-V principal directions of the sample covariance (centered, divisor K-1).
/// Sign convention: first nonzero coordinate of each direction is positive.
DirectionSet pca_directions(const Tensor& samples, int64_t v);

DirectionSet random_direction_set(const Tensor& w_mean, int64_t w_dim);

/// PCA mode: row i with probability variance_ratios[i]. RANDOM mode: a fresh
/// i.i.d. N(0,1) vector (not normalized).
Tensor sample_direction(const DirectionSet& ds, std::mt19937_64& rng);

void save_directions(const DirectionSet& ds, const std::string& path);
DirectionSet load_directions(const std::string& path);

}  // namespace dcp
