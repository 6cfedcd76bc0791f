#pragma once

#include <functional>
#include <map>
#include <string>

#include <json.hpp>

#include "dcp/latentdir.hpp"
#include "dcp/synthnet.hpp"

namespace dcp {

struct ScoringConfig {
    double alpha = 5.0;
    int64_t n_directions = 10;  // N: perturbations per latent
    int64_t n_latents = 100;    // M: latents; M*N total backprops
    uint64_t seed = 0;
    DirectionMode direction_mode = DirectionMode::PCA;

    void validate() const;
    nlohmann::json to_json() const;
};

/// Per-channel importance scores for each prunable feature map, keyed by the
/// conv layer that produces it ("block.{r}.conv").
struct LayerScores {
    int64_t channels = 0;
    std::vector<double> s_mu;
    std::vector<double> s_sigma;
};

struct ScoreReport {
    ScoringConfig config;
    std::map<std::string, LayerScores> layers;

    nlohmann::json to_json() const;
    static ScoreReport from_json(const nlohmann::json& j);
};

/// Summed absolute pixel difference between g(w) and g(w + alpha*d).
Tensor image_diff_loss(const GeneratorWeights& weights, const LatentVector& w, const Tensor& d,
                       double alpha);

/// Elementwise |dL_diff/dW| for every synthesis conv weight, keyed
/// "block.{r}.conv". Gradients flow through both forward passes.
std::map<std::string, Tensor> perturb_gradients(GeneratorWeights& weights, const LatentVector& w,
                                                const Tensor& d, double alpha);

/// Called once per (latent, direction, layer) with the raw |gradient| tensor;
/// lets tests recompute the score aggregation independently.
using GradientObserver =
    std::function<void(int64_t latent, int64_t direction, const std::string& layer,
                       const Tensor& g_abs)>;

/// Latent i draws from its own rng substream seeded by (seed, i) and partial
/// sums merge in ascending i, so any worker count gives bit-identical scores.
ScoreReport accumulate_scores(const GeneratorWeights& weights, const DirectionSet& directions,
                              const ScoringConfig& cfg, int64_t workers = 1,
                              const GradientObserver& observer = nullptr);

void save_scores(const ScoreReport& report, const std::string& path);
ScoreReport load_scores(const std::string& path);

}  // namespace dcp
