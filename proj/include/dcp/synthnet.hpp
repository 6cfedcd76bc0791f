#pragma once

#include <map>
#include <optional>
#include <string>

#include <json.hpp>

#include "dcp/tensor.hpp"

namespace dcp {

struct ModelError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Architecture of the mapping network f: Z->W and synthesis network g: W->I.
struct GeneratorConfig {
    int64_t z_dim = 64;
    int64_t w_dim = 64;
    int64_t mapping_layers = 2;
    std::vector<int64_t> resolutions = {4, 8, 16, 32};
    std::vector<int64_t> channels = {64, 64, 32, 16};
    bool noise_enabled = false;
    double truncation_psi = 1.0;
    bool demodulate = true;  // test hook; the normal generator always demodulates

    void validate() const;
    int64_t final_resolution() const { return resolutions.back(); }
    /// Input channel count of block i's conv (constant channels for block 0).
    int64_t block_in_channels(size_t i) const { return i == 0 ? channels[0] : channels[i - 1]; }

    nlohmann::json to_json() const;
    static GeneratorConfig from_json(const nlohmann::json& j);
};

/// All parameters of a generator, keyed by canonical tensor names:
/// mapping.{i}.weight|bias, const, block.{r}.conv.weight|bias,
/// block.{r}.affine.weight|bias, block.{r}.torgb.weight|bias,
/// block.{r}.torgb_affine.weight|bias.
struct GeneratorWeights {
    GeneratorConfig config;
    std::map<std::string, Tensor> tensors;

    Tensor& at(const std::string& name);
    const Tensor& at(const std::string& name) const;
    /// Parameters trained during distillation (everything except the mapping).
    std::vector<Tensor> synthesis_params();
    std::vector<Tensor> all_params();
    void set_requires_grad(bool on);
};

enum class LatentSpace { Z, W };

struct LatentVector {
    Tensor values;  // [z_dim] or [w_dim]
    LatentSpace space = LatentSpace::Z;
};

struct SynthesisResult {
    Tensor image;          // [3, R, R]
    Tensor final_feature;  // pre-RGB feature map of the last block
};

GeneratorWeights init_generator(const GeneratorConfig& config, uint64_t seed);

LatentVector map_latent(const GeneratorWeights& weights, const LatentVector& z);

LatentVector truncate(const LatentVector& w, const Tensor& w_mean, double psi);

SynthesisResult synthesize(const GeneratorWeights& weights, const LatentVector& w,
                           std::mt19937_64* noise_rng = nullptr);

int64_t count_params(const GeneratorConfig& config);
int64_t count_flops(const GeneratorConfig& config);

void save_checkpoint(const GeneratorWeights& weights, const std::string& path);
GeneratorWeights load_checkpoint(const std::string& path);

}  // namespace dcp
