#include "dcp/scorer.hpp"

#include <atomic>
#include <fstream>
#include <thread>

namespace dcp {

void ScoringConfig::validate() const {
    if (alpha < 0) throw ModelError("alpha must be non-negative");
    if (n_directions < 1) throw ModelError("n_directions must be >= 1");
    if (n_latents < 1) throw ModelError("n_latents must be >= 1");
}

nlohmann::json ScoringConfig::to_json() const {
    return {{"alpha", alpha},
            {"n_directions", n_directions},
            {"n_latents", n_latents},
            {"seed", seed},
            {"direction_mode", direction_mode_name(direction_mode)}};
}

nlohmann::json ScoreReport::to_json() const {
    nlohmann::json layers_json;
    for (const auto& [name, ls] : layers)
        layers_json[name] = {{"c_in", ls.channels}, {"s_mu", ls.s_mu}, {"s_sigma", ls.s_sigma}};
    return {{"config", config.to_json()}, {"layers", layers_json}};
}

ScoreReport ScoreReport::from_json(const nlohmann::json& j) {
    ScoreReport r;
    const auto& c = j.at("config");
    r.config.alpha = c.at("alpha").get<double>();
    r.config.n_directions = c.at("n_directions").get<int64_t>();
    r.config.n_latents = c.at("n_latents").get<int64_t>();
    r.config.seed = c.at("seed").get<uint64_t>();
    r.config.direction_mode = direction_mode_from_name(c.at("direction_mode").get<std::string>());
    for (const auto& [name, ls] : j.at("layers").items()) {
        LayerScores s;
        s.channels = ls.at("c_in").get<int64_t>();
        s.s_mu = ls.at("s_mu").get<std::vector<double>>();
        s.s_sigma = ls.at("s_sigma").get<std::vector<double>>();
        if (static_cast<int64_t>(s.s_mu.size()) != s.channels ||
            static_cast<int64_t>(s.s_sigma.size()) != s.channels)
            throw ModelError("score arrays for '" + name + "' do not match channel count");
        r.layers.emplace(name, std::move(s));
    }
    return r;
}

Tensor image_diff_loss(const GeneratorWeights& weights, const LatentVector& w, const Tensor& d,
                       double alpha) {
    LatentVector w2{add(w.values, scale(d, alpha)), LatentSpace::W};
    Tensor a = synthesize(weights, w).image;
    Tensor b = synthesize(weights, w2).image;
    return sum_all(abs_(sub(a, b)));
}

static std::vector<std::string> scored_layers(const GeneratorConfig& cfg) {
    std::vector<std::string> out;
    for (int64_t r : cfg.resolutions) out.push_back("block." + std::to_string(r) + ".conv");
    return out;
}

std::map<std::string, Tensor> perturb_gradients(GeneratorWeights& weights, const LatentVector& w,
                                                const Tensor& d, double alpha) {
    std::vector<std::string> layers = scored_layers(weights.config);
    for (const auto& l : layers) weights.at(l + ".weight").node_->requires_grad = true;
    Tensor loss = image_diff_loss(weights, w, d, alpha);
    Gradients grads = backward(loss);
    std::map<std::string, Tensor> out;
    for (const auto& l : layers) {
        Tensor& wt = weights.at(l + ".weight");
        wt.node_->requires_grad = false;
        if (grads.has(wt))
            out.emplace(l, abs_(grads.grad(wt)).detach());
        else
            out.emplace(l, Tensor::zeros(wt.shape()));
    }
    return out;
}

static uint64_t mix_seed(uint64_t seed, uint64_t i) {
    uint64_t x = seed ^ (i + 1) * 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

ScoreReport accumulate_scores(const GeneratorWeights& weights, const DirectionSet& directions,
                              const ScoringConfig& cfg, int64_t workers,
                              const GradientObserver& observer) {
    cfg.validate();
    const GeneratorConfig& gcfg = weights.config;
    std::vector<std::string> layers = scored_layers(gcfg);
    const int64_t m = cfg.n_latents, n_dir = cfg.n_directions;
    if (workers < 1) workers = 1;
    if (workers > m) workers = m;

    // |gradient| tensors per layer, indexed [latent][direction]
    std::vector<std::map<std::string, std::vector<Tensor>>> results(static_cast<size_t>(m));
    std::atomic<int64_t> next{0};
    auto worker_fn = [&] {
        GeneratorWeights local;
        local.config = gcfg;
        for (const auto& [name, t] : weights.tensors) local.tensors.emplace(name, t.detach());
        for (int64_t i = next.fetch_add(1); i < m; i = next.fetch_add(1)) {
            std::mt19937_64 rng(mix_seed(cfg.seed, static_cast<uint64_t>(i)));
            Tensor z = Tensor::randn({gcfg.z_dim}, rng);
            LatentVector w = map_latent(local, {z, LatentSpace::Z});
            w.values = w.values.detach();
            auto& slot = results[static_cast<size_t>(i)];
            for (int64_t j = 0; j < n_dir; ++j) {
                Tensor d = sample_direction(directions, rng);
                auto grads = perturb_gradients(local, w, d, cfg.alpha);
                for (const auto& l : layers) slot[l].push_back(grads.at(l));
            }
        }
    };
    if (workers == 1) {
        worker_fn();
    } else {
        std::vector<std::thread> pool;
        for (int64_t t = 0; t < workers; ++t) pool.emplace_back(worker_fn);
        for (auto& t : pool) t.join();
    }

    std::map<std::string, std::vector<double>> mu_acc, sig_acc;
    std::map<std::string, int64_t> wsize;
    for (const auto& l : layers) {
        int64_t n = weights.at(l + ".weight").numel();
        mu_acc[l].assign(static_cast<size_t>(n), 0.0);
        sig_acc[l].assign(static_cast<size_t>(n), 0.0);
        wsize[l] = n;
    }
    for (int64_t i = 0; i < m; ++i) {
        const auto& slot = results[static_cast<size_t>(i)];
        if (observer)
            for (int64_t j = 0; j < n_dir; ++j)
                for (const auto& l : layers) observer(i, j, l, slot.at(l)[static_cast<size_t>(j)]);
        for (const auto& l : layers) {
            const auto& gs = slot.at(l);
            int64_t n = wsize[l];
            std::vector<double> offset(static_cast<size_t>(n), 0.0);
            for (const Tensor& g : gs) {
                auto gd = g.data();
                for (int64_t p = 0; p < n; ++p) offset[p] += gd[p];
            }
            for (double& v : offset) v /= static_cast<double>(n_dir);
            auto& mu = mu_acc[l];
            auto& sig = sig_acc[l];
            for (const Tensor& g : gs) {
                auto gd = g.data();
                for (int64_t p = 0; p < n; ++p) {
                    mu[p] += gd[p];
                    double dv = gd[p] - offset[p];
                    sig[p] += dv * dv;
                }
            }
        }
    }

    ScoreReport report;
    report.config = cfg;
    double inv = 1.0 / (static_cast<double>(m) * static_cast<double>(n_dir));
    for (size_t i = 0; i < layers.size(); ++i) {
        const Tensor& wt = weights.at(layers[i] + ".weight");
        int64_t c_out = wt.dim(0);
        int64_t slice = wt.numel() / c_out;
        LayerScores ls;
        ls.channels = c_out;
        ls.s_mu.assign(static_cast<size_t>(c_out), 0.0);
        ls.s_sigma.assign(static_cast<size_t>(c_out), 0.0);
        const auto& mu = mu_acc[layers[i]];
        const auto& sig = sig_acc[layers[i]];
        for (int64_t c = 0; c < c_out; ++c)
            for (int64_t p = 0; p < slice; ++p) {
                ls.s_mu[c] += mu[c * slice + p] * inv;
                ls.s_sigma[c] += sig[c * slice + p] * inv;
            }
        report.layers.emplace(layers[i], std::move(ls));
    }
    return report;
}

void save_scores(const ScoreReport& report, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw ModelError("cannot open for writing: " + path);
    f << report.to_json().dump(2) << "\n";
}

ScoreReport load_scores(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ModelError("cannot open: " + path);
    nlohmann::json j;
    f >> j;
    return ScoreReport::from_json(j);
}

}  // namespace dcp
