#include "dcp/synthnet.hpp"

#include <cmath>

#include "dcp/checkpoint.hpp"

namespace dcp {

void GeneratorConfig::validate() const {
    if (z_dim < 1 || w_dim < 1 || mapping_layers < 1)
        throw ModelError("z_dim, w_dim and mapping_layers must be positive");
    if (resolutions.empty() || resolutions.size() != channels.size())
        throw ModelError("resolutions and channels must be non-empty and equally sized");
    if (resolutions.front() != 4) throw ModelError("base resolution must be 4");
    for (size_t i = 1; i < resolutions.size(); ++i)
        if (resolutions[i] != 2 * resolutions[i - 1])
            throw ModelError("each resolution must double the previous");
    for (int64_t c : channels)
        if (c < 1) throw ModelError("all channel counts must be >= 1");
    if (!(truncation_psi > 0.0 && truncation_psi <= 1.0))
        throw ModelError("truncation_psi must be in (0,1]");
}

nlohmann::json GeneratorConfig::to_json() const {
    return {{"z_dim", z_dim},
            {"w_dim", w_dim},
            {"mapping_layers", mapping_layers},
            {"resolutions", resolutions},
            {"channels", channels},
            {"noise_enabled", noise_enabled},
            {"truncation_psi", truncation_psi},
            {"demodulate", demodulate}};
}

GeneratorConfig GeneratorConfig::from_json(const nlohmann::json& j) {
    GeneratorConfig c;
    c.z_dim = j.at("z_dim").get<int64_t>();
    c.w_dim = j.at("w_dim").get<int64_t>();
    c.mapping_layers = j.at("mapping_layers").get<int64_t>();
    c.resolutions = j.at("resolutions").get<std::vector<int64_t>>();
    c.channels = j.at("channels").get<std::vector<int64_t>>();
    c.noise_enabled = j.at("noise_enabled").get<bool>();
    c.truncation_psi = j.at("truncation_psi").get<double>();
    if (j.contains("demodulate")) c.demodulate = j.at("demodulate").get<bool>();
    c.validate();
    return c;
}

Tensor& GeneratorWeights::at(const std::string& name) {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw ModelError("missing tensor '" + name + "'");
    return it->second;
}

const Tensor& GeneratorWeights::at(const std::string& name) const {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw ModelError("missing tensor '" + name + "'");
    return it->second;
}

std::vector<Tensor> GeneratorWeights::synthesis_params() {
    std::vector<Tensor> out;
    for (auto& [name, t] : tensors)
        if (name.rfind("mapping.", 0) != 0) out.push_back(t);
    return out;
}

std::vector<Tensor> GeneratorWeights::all_params() {
    std::vector<Tensor> out;
    for (auto& [name, t] : tensors) out.push_back(t);
    return out;
}

void GeneratorWeights::set_requires_grad(bool on) {
    for (auto& [name, t] : tensors) t.node_->requires_grad = on;
}

// ---------------------------------------------------------------------------

GeneratorWeights init_generator(const GeneratorConfig& config, uint64_t seed) {
    config.validate();
    GeneratorWeights gw;
    gw.config = config;
    std::mt19937_64 rng(seed);
    auto w_init = [&rng](Shape shape, int64_t fan_in) {
        return Tensor::randn(std::move(shape), rng, 1.0 / std::sqrt(static_cast<double>(fan_in)));
    };

    for (int64_t i = 0; i < config.mapping_layers; ++i) {
        int64_t in = i == 0 ? config.z_dim : config.w_dim;
        std::string p = "mapping." + std::to_string(i) + ".";
        gw.tensors.emplace(p + "weight", w_init({config.w_dim, in}, in));
        gw.tensors.emplace(p + "bias", Tensor::zeros({config.w_dim}));
    }
    gw.tensors.emplace("const", Tensor::randn({config.channels[0], 4, 4}, rng));
    for (size_t i = 0; i < config.resolutions.size(); ++i) {
        int64_t r = config.resolutions[i];
        int64_t cin = config.block_in_channels(i);
        int64_t cout = config.channels[i];
        std::string p = "block." + std::to_string(r) + ".";
        gw.tensors.emplace(p + "conv.weight", w_init({cout, cin, 3, 3}, cin * 9));
        gw.tensors.emplace(p + "conv.bias", Tensor::zeros({cout}));
        gw.tensors.emplace(p + "affine.weight", w_init({cin, config.w_dim}, config.w_dim));
        // bias 1 so initial modulation is near-neutral
        gw.tensors.emplace(p + "affine.bias", Tensor::full({cin}, 1.0));
        gw.tensors.emplace(p + "torgb.weight", w_init({3, cout, 1, 1}, cout));
        gw.tensors.emplace(p + "torgb.bias", Tensor::zeros({3}));
        gw.tensors.emplace(p + "torgb_affine.weight", w_init({cout, config.w_dim}, config.w_dim));
        gw.tensors.emplace(p + "torgb_affine.bias", Tensor::full({cout}, 1.0));
    }
    return gw;
}

static Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
    Tensor col = reshape(x, {x.dim(0), 1});
    return add(reshape(matmul(weight, col), {weight.dim(0)}), bias);
}

LatentVector map_latent(const GeneratorWeights& weights, const LatentVector& z) {
    const GeneratorConfig& cfg = weights.config;
    if (z.space != LatentSpace::Z)
        throw ModelError("map_latent expects a Z-space latent");
    if (z.values.ndim() != 1 || z.values.dim(0) != cfg.z_dim)
        throw ModelError("latent has dimension " + shape_str(z.values.shape()) +
                         ", expected [" + std::to_string(cfg.z_dim) + "]");
    Tensor x = z.values;
    for (int64_t i = 0; i < cfg.mapping_layers; ++i) {
        std::string p = "mapping." + std::to_string(i) + ".";
        x = linear(x, weights.at(p + "weight"), weights.at(p + "bias"));
        if (i + 1 < cfg.mapping_layers) x = leaky_relu(x, 0.2);
    }
    return {x, LatentSpace::W};
}

LatentVector truncate(const LatentVector& w, const Tensor& w_mean, double psi) {
    if (psi < 0.0 || psi > 1.0) throw ModelError("truncation psi must be in [0,1]");
    if (w.space != LatentSpace::W) throw ModelError("truncate expects a W-space latent");
    Tensor out = add(w_mean, scale(sub(w.values, w_mean), psi));
    return {out, LatentSpace::W};
}

SynthesisResult synthesize(const GeneratorWeights& weights, const LatentVector& w,
                           std::mt19937_64* noise_rng) {
    const GeneratorConfig& cfg = weights.config;
    if (w.space != LatentSpace::W) throw ModelError("synthesize expects a W-space latent");
    if (w.values.ndim() != 1 || w.values.dim(0) != cfg.w_dim)
        throw ModelError("latent has dimension " + shape_str(w.values.shape()) +
                         ", expected [" + std::to_string(cfg.w_dim) + "]");
    Tensor feat = weights.at("const");
    Tensor rgb;
    for (size_t i = 0; i < cfg.resolutions.size(); ++i) {
        std::string p = "block." + std::to_string(cfg.resolutions[i]) + ".";
        if (i > 0) feat = upsample2x(feat);
        Tensor style = linear(w.values, weights.at(p + "affine.weight"),
                              weights.at(p + "affine.bias"));
        Tensor conv = modulated_conv2d(feat, weights.at(p + "conv.weight"), style, cfg.demodulate);
        conv = add(conv, reshape(weights.at(p + "conv.bias"), {cfg.channels[i], 1, 1}));
        if (cfg.noise_enabled && noise_rng)
            conv = add(conv, Tensor::randn(conv.shape(), *noise_rng));
        feat = leaky_relu(conv, 0.2);
        Tensor tstyle = linear(w.values, weights.at(p + "torgb_affine.weight"),
                               weights.at(p + "torgb_affine.bias"));
        Tensor block_rgb = modulated_conv2d(feat, weights.at(p + "torgb.weight"), tstyle, false);
        block_rgb = add(block_rgb, reshape(weights.at(p + "torgb.bias"), {3, 1, 1}));
        rgb = i == 0 ? block_rgb : add(upsample2x(rgb), block_rgb);
    }
    return {rgb, feat};
}

int64_t count_params(const GeneratorConfig& config) {
    config.validate();
    int64_t n = 0;
    for (int64_t i = 0; i < config.mapping_layers; ++i) {
        int64_t in = i == 0 ? config.z_dim : config.w_dim;
        n += config.w_dim * in + config.w_dim;
    }
    n += config.channels[0] * 16;  // learned constant
    for (size_t i = 0; i < config.resolutions.size(); ++i) {
        int64_t cin = config.block_in_channels(i);
        int64_t cout = config.channels[i];
        n += cout * cin * 9 + cout;                    // conv
        n += cin * config.w_dim + cin;                 // affine
        n += 3 * cout + 3;                             // toRGB
        n += cout * config.w_dim + cout;               // toRGB affine
    }
    return n;
}

int64_t count_flops(const GeneratorConfig& config) {
    config.validate();
    int64_t macs = 0;
    for (int64_t i = 0; i < config.mapping_layers; ++i) {
        int64_t in = i == 0 ? config.z_dim : config.w_dim;
        macs += config.w_dim * in;
    }
    for (size_t i = 0; i < config.resolutions.size(); ++i) {
        int64_t r = config.resolutions[i];
        int64_t cin = config.block_in_channels(i);
        int64_t cout = config.channels[i];
        macs += cout * cin * 9 * r * r;     // conv
        macs += cin * config.w_dim;         // affine
        macs += 3 * cout * r * r;           // toRGB
        macs += cout * config.w_dim;        // toRGB affine
    }
    return 2 * macs;
}

void save_checkpoint(const GeneratorWeights& weights, const std::string& path) {
    nlohmann::json header;
    header["kind"] = "generator";
    header["config"] = weights.config.to_json();
    save_container(path, header, weights.tensors);
}

GeneratorWeights load_checkpoint(const std::string& path) {
    Checkpoint ck = load_container(path);
    if (!ck.header.contains("config"))
        throw CheckpointError("checkpoint header missing config in " + path);
    GeneratorWeights gw;
    gw.config = GeneratorConfig::from_json(ck.header.at("config"));
    gw.tensors = std::move(ck.tensors);
    // shape consistency against the config
    GeneratorWeights ref = init_generator(gw.config, 0);
    for (const auto& [name, t] : ref.tensors) {
        const Tensor& loaded = gw.at(name);
        if (loaded.shape() != t.shape())
            throw CheckpointError("tensor '" + name + "' has shape " +
                                  shape_str(loaded.shape()) + ", config requires " +
                                  shape_str(t.shape()));
    }
    return gw;
}

}  // namespace dcp
