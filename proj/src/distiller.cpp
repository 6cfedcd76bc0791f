#include "dcp/distiller.hpp"

#include <chrono>
#include <cmath>

namespace dcp {

void DistillConfig::validate() const {
    if (lambda_lpips != 0.0)
        throw ModelError("lambda_lpips must be 0: no perceptual network is available");
    if (lambda_gan < 0 || lambda_rgb < 0 || lambda_ld < 0)
        throw ModelError("loss weights must be non-negative");
    if (learning_rate <= 0) throw ModelError("learning_rate must be positive");
    if (batch_size < 1) throw ModelError("batch_size must be >= 1");
    if (r1_interval < 1) throw ModelError("r1_interval must be >= 1");
}

// ---------------------------------------------------------------------------
// Adam

Adam::Adam(double lr, double beta1, double beta2, double eps)
    : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {}

void Adam::step(std::vector<Tensor>& params, const Gradients& grads) {
    ++t_;
    double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
    double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
    for (Tensor& p : params) {
        if (!grads.has(p)) continue;
        auto g = grads.grad(p).data();
        auto& m = m_[p.node()];
        auto& v = v_[p.node()];
        if (m.empty()) {
            m.assign(g.size(), 0.0);
            v.assign(g.size(), 0.0);
        }
        auto pd = p.mutable_data();
        for (size_t i = 0; i < g.size(); ++i) {
            m[i] = b1_ * m[i] + (1.0 - b1_) * g[i];
            v[i] = b2_ * v[i] + (1.0 - b2_) * g[i] * g[i];
            pd[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
        }
    }
}

// ---------------------------------------------------------------------------
// discriminator

static const int64_t kDiscChannels[3] = {16, 32, 64};

std::vector<Tensor> Discriminator::params() {
    std::vector<Tensor> out;
    for (auto& [name, t] : tensors) out.push_back(t);
    return out;
}

Discriminator init_discriminator(int64_t resolution, uint64_t seed) {
    if (resolution < 8 || (resolution & (resolution - 1)) != 0)
        throw ModelError("discriminator resolution must be a power of two >= 8");
    Discriminator d;
    d.resolution = resolution;
    std::mt19937_64 rng(seed);
    int64_t cin = 3;
    for (int i = 0; i < 3; ++i) {
        int64_t cout = kDiscChannels[i];
        std::string p = "conv" + std::to_string(i) + ".";
        d.tensors.emplace(p + "weight",
                          Tensor::randn({cout, cin, 3, 3}, rng,
                                        1.0 / std::sqrt(static_cast<double>(cin * 9)), true));
        d.tensors.emplace(p + "bias", Tensor::zeros({cout}, true));
        cin = cout;
    }
    int64_t spatial = resolution / 8;
    int64_t head_in = kDiscChannels[2] * spatial * spatial;
    d.tensors.emplace("head.weight",
                      Tensor::randn({1, head_in}, rng,
                                    1.0 / std::sqrt(static_cast<double>(head_in)), true));
    d.tensors.emplace("head.bias", Tensor::zeros({1}, true));
    return d;
}

Tensor Discriminator::forward(const Tensor& image) const {
    if (image.ndim() != 3 || image.dim(0) != 3 || image.dim(1) != resolution ||
        image.dim(2) != resolution)
        throw ModelError("discriminator expects [3," + std::to_string(resolution) + "," +
                         std::to_string(resolution) + "], got " + shape_str(image.shape()));
    Tensor x = image;
    for (int i = 0; i < 3; ++i) {
        std::string p = "conv" + std::to_string(i) + ".";
        x = conv2d(x, tensors.at(p + "weight"), 1, 2);
        x = leaky_relu(add(x, reshape(tensors.at(p + "bias"), {x.dim(0), 1, 1})), 0.2);
    }
    Tensor flat = reshape(x, {x.numel(), 1});
    return reshape(add(matmul(tensors.at("head.weight"), flat), tensors.at("head.bias")), {1});
}

// ---------------------------------------------------------------------------
// dataset

static uint64_t splitmix64(uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

Tensor synth_dataset_sample(uint64_t seed, int64_t index, int64_t resolution) {
    std::mt19937_64 rng(splitmix64(seed ^ splitmix64(static_cast<uint64_t>(index))));
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    double bg[3];
    for (double& c : bg) c = unif(rng) * 1.2 - 0.6;
    int blobs = 1 + static_cast<int>(unif(rng) * 3.0);
    if (blobs > 3) blobs = 3;
    struct Blob {
        double cx, cy, sigma, color[3];
    };
    std::vector<Blob> bs(static_cast<size_t>(blobs));
    for (auto& b : bs) {
        b.cx = unif(rng);
        b.cy = unif(rng);
        b.sigma = 0.08 + 0.17 * unif(rng);
        for (double& c : b.color) c = unif(rng) * 2.0 - 1.0;
    }
    std::vector<double> img(static_cast<size_t>(3 * resolution * resolution));
    for (int64_t y = 0; y < resolution; ++y)
        for (int64_t x = 0; x < resolution; ++x) {
            double px = (static_cast<double>(x) + 0.5) / static_cast<double>(resolution);
            double py = (static_cast<double>(y) + 0.5) / static_cast<double>(resolution);
            double v[3] = {bg[0], bg[1], bg[2]};
            for (const auto& b : bs) {
                double d2 = (px - b.cx) * (px - b.cx) + (py - b.cy) * (py - b.cy);
                double w = std::exp(-d2 / (2.0 * b.sigma * b.sigma));
                for (int c = 0; c < 3; ++c) v[c] += w * b.color[c];
            }
            for (int c = 0; c < 3; ++c)
                img[(c * resolution + y) * resolution + x] = std::clamp(v[c], -1.0, 1.0);
        }
    return Tensor::from({3, resolution, resolution}, std::move(img));
}

// ---------------------------------------------------------------------------
// losses

Tensor loss_rgb(const Tensor& student_img, const Tensor& teacher_img) {
    if (student_img.shape() != teacher_img.shape())
        throw ModelError("loss_rgb shape mismatch: " + shape_str(student_img.shape()) + " vs " +
                         shape_str(teacher_img.shape()));
    return mean_all(abs_(sub(student_img, teacher_img)));
}

static std::vector<Tensor> feature_deltas(const GeneratorWeights& gen,
                                          const std::vector<LatentVector>& w_batch,
                                          const std::vector<Tensor>& d_batch, double alpha) {
    std::vector<Tensor> deltas;
    for (size_t i = 0; i < w_batch.size(); ++i) {
        Tensor base = synthesize(gen, w_batch[i]).final_feature;
        LatentVector wp{add(w_batch[i].values, scale(d_batch[i], alpha)), LatentSpace::W};
        Tensor pert = synthesize(gen, wp).final_feature;
        Tensor delta = reshape(sub(pert, base), {base.numel()});
        double norm2 = 0.0;
        for (double v : delta.data()) norm2 += v * v;
        if (std::sqrt(norm2) < 1e-12)
            throw ModelError("degenerate direction response: feature delta norm below 1e-12 "
                             "for batch element " + std::to_string(i));
        deltas.push_back(delta);
    }
    return deltas;
}

static std::vector<Tensor> cosine_matrix(const std::vector<Tensor>& deltas) {
    size_t b = deltas.size();
    std::vector<Tensor> norms(b);
    for (size_t i = 0; i < b; ++i) norms[i] = sqrt_(sum_all(square(deltas[i])));
    std::vector<Tensor> sim(b * b);
    for (size_t i = 0; i < b; ++i)
        for (size_t j = 0; j < b; ++j)
            sim[i * b + j] = div_(sum_all(mul(deltas[i], deltas[j])), mul(norms[i], norms[j]));
    return sim;
}

Tensor loss_ld(const GeneratorWeights& teacher, const GeneratorWeights& student,
               const std::vector<LatentVector>& w_batch, const std::vector<Tensor>& d_batch,
               double alpha) {
    if (w_batch.size() < 2) throw ModelError("loss_ld needs a batch of at least 2 latents");
    if (w_batch.size() != d_batch.size())
        throw ModelError("loss_ld: one direction per latent required");
    auto t_sim = cosine_matrix(feature_deltas(teacher, w_batch, d_batch, alpha));
    auto s_sim = cosine_matrix(feature_deltas(student, w_batch, d_batch, alpha));
    Tensor acc = Tensor::scalar(0.0);
    for (size_t i = 0; i < t_sim.size(); ++i) acc = add(acc, abs_(sub(t_sim[i], s_sim[i])));
    return scale(acc, 1.0 / static_cast<double>(t_sim.size()));
}

GanLosses gan_losses(const Discriminator& disc, const std::vector<Tensor>& real_batch,
                     const std::vector<Tensor>& fake_batch, double r1_gamma) {
    if (real_batch.empty() || real_batch.size() != fake_batch.size())
        throw ModelError("gan_losses expects equally sized non-empty batches");
    size_t b = real_batch.size();
    Tensor g_acc = Tensor::scalar(0.0);
    Tensor d_acc = Tensor::scalar(0.0);
    Tensor r1_acc = Tensor::scalar(0.0);
    for (size_t i = 0; i < b; ++i) {
        Tensor fl = disc.forward(fake_batch[i]);
        g_acc = add(g_acc, softplus(neg(fl)));
        d_acc = add(d_acc, softplus(fl));

        Tensor real = Tensor::from(real_batch[i].shape(),
                                   {real_batch[i].data().begin(), real_batch[i].data().end()},
                                   true);
        Tensor rl = disc.forward(real);
        d_acc = add(d_acc, softplus(neg(rl)));
        Gradients inner = backward(rl);
        if (inner.has(real)) r1_acc = add(r1_acc, sum_all(square(inner.grad(real))));
    }
    double inv = 1.0 / static_cast<double>(b);
    return {scale(g_acc, inv), scale(d_acc, inv), scale(r1_acc, inv * r1_gamma / 2.0)};
}

// d_loss + penalty only, skipping the R1 backward on non-lazy steps
static GanLosses gan_losses_lazy(const Discriminator& disc, const std::vector<Tensor>& real_batch,
                                 const std::vector<Tensor>& fake_batch, double r1_gamma,
                                 bool with_r1) {
    if (with_r1) return gan_losses(disc, real_batch, fake_batch, r1_gamma);
    size_t b = real_batch.size();
    Tensor g_acc = Tensor::scalar(0.0);
    Tensor d_acc = Tensor::scalar(0.0);
    for (size_t i = 0; i < b; ++i) {
        Tensor fl = disc.forward(fake_batch[i]);
        g_acc = add(g_acc, softplus(neg(fl)));
        d_acc = add(d_acc, softplus(fl));
        d_acc = add(d_acc, softplus(neg(disc.forward(real_batch[i]))));
    }
    double inv = 1.0 / static_cast<double>(b);
    return {scale(g_acc, inv), scale(d_acc, inv), Tensor::scalar(0.0)};
}

// ---------------------------------------------------------------------------
// training loops

static void check_finite_loss(double v, const char* what, int64_t step) {
    if (!std::isfinite(v))
        throw ModelError(std::string("training diverged: ") + what + " is non-finite at step " +
                         std::to_string(step));
}

GeneratorWeights train_teacher(const GeneratorConfig& gen_config, Discriminator& disc,
                               int64_t steps, const DistillConfig& cfg, TrainLogSink* log) {
    cfg.validate();
    if (steps < 1) throw ModelError("train_teacher needs steps >= 1");
    GeneratorWeights gen = init_generator(gen_config, cfg.seed);
    int64_t res = gen_config.final_resolution();
    if (disc.resolution != res) throw ModelError("discriminator resolution mismatch");

    std::vector<Tensor> gp = gen.all_params();
    std::vector<Tensor> dp = disc.params();
    Adam opt_g(cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2);
    Adam opt_d(cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2);

    std::mt19937_64 rng_z(splitmix64(cfg.seed ^ 0x5A17ULL));
    int64_t data_index = 0;
    uint64_t data_seed = splitmix64(cfg.seed ^ 0xDA7AULL);

    auto now = [] { return std::chrono::steady_clock::now(); };
    auto t0 = now();
    for (int64_t step = 0; step < steps; ++step) {
        std::vector<Tensor> real, fake;
        std::vector<LatentVector> ws;
        for (int64_t b = 0; b < cfg.batch_size; ++b) {
            real.push_back(synth_dataset_sample(data_seed, data_index++, res));
            Tensor z = Tensor::randn({gen_config.z_dim}, rng_z);
            ws.push_back(map_latent(gen, {z, LatentSpace::Z}));
            fake.push_back(synthesize(gen, ws.back()).image.detach());
        }
        bool lazy = step % cfg.r1_interval == 0;
        GanLosses dl = gan_losses_lazy(disc, real, fake, cfg.r1_gamma, lazy);
        Tensor d_total = lazy ? add(dl.d_loss, scale(dl.r1_penalty,
                                                     static_cast<double>(cfg.r1_interval)))
                              : dl.d_loss;
        check_finite_loss(d_total.item(), "d_loss", step);
        opt_d.step(dp, backward(d_total));

        gen.set_requires_grad(true);
        Tensor g_acc = Tensor::scalar(0.0);
        for (int64_t b = 0; b < cfg.batch_size; ++b) {
            Tensor z = Tensor::randn({gen_config.z_dim}, rng_z);
            LatentVector w = map_latent(gen, {z, LatentSpace::Z});
            g_acc = add(g_acc, softplus(neg(disc.forward(synthesize(gen, w).image))));
        }
        Tensor g_loss = scale(g_acc, 1.0 / static_cast<double>(cfg.batch_size));
        check_finite_loss(g_loss.item(), "g_loss", step);
        opt_g.step(gp, backward(g_loss));
        gen.set_requires_grad(false);

        if (log && (step % 100 == 0 || step == steps - 1)) {
            double ms = std::chrono::duration<double, std::milli>(now() - t0).count();
            log->record(step, {{"g_loss", g_loss.item()},
                               {"d_loss", dl.d_loss.item()},
                               {"r1", dl.r1_penalty.item()},
                               {"wall_ms", ms}});
        }
    }
    return gen;
}

void distill_student(GeneratorWeights& teacher, GeneratorWeights& student, Discriminator& disc,
                     const DirectionSet& directions, const DistillConfig& cfg,
                     TrainLogSink* log) {
    cfg.validate();
    if (teacher.config.w_dim != student.config.w_dim)
        throw ModelError("teacher and student must share w_dim");
    int64_t res = student.config.final_resolution();
    if (teacher.config.final_resolution() != res)
        throw ModelError("teacher and student resolution mismatch");
    if (disc.resolution != res) throw ModelError("discriminator resolution mismatch");

    teacher.set_requires_grad(false);
    student.set_requires_grad(false);
    std::vector<Tensor> sp = student.synthesis_params();
    std::vector<Tensor> dp = disc.params();
    Adam opt_s(cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2);
    Adam opt_d(cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2);

    std::mt19937_64 rng_z(splitmix64(cfg.seed ^ 0x51D3ULL));
    std::mt19937_64 rng_d(splitmix64(cfg.seed ^ 0xD123ULL));
    int64_t data_index = 0;
    uint64_t data_seed = splitmix64(cfg.seed ^ 0xDA7AULL);

    bool train_student = cfg.lambda_gan > 0 || cfg.lambda_rgb > 0 || cfg.lambda_ld > 0;
    auto now = [] { return std::chrono::steady_clock::now(); };
    auto t0 = now();
    for (int64_t step = 0; step < cfg.iterations; ++step) {
        std::vector<LatentVector> ws;
        std::vector<Tensor> ds, real;
        for (int64_t b = 0; b < cfg.batch_size; ++b) {
            Tensor z = Tensor::randn({teacher.config.z_dim}, rng_z);
            LatentVector w = map_latent(teacher, {z, LatentSpace::Z});
            ws.push_back({w.values.detach(), LatentSpace::W});
            ds.push_back(sample_direction(directions, rng_d));
            real.push_back(synth_dataset_sample(data_seed, data_index++, res));
        }

        // discriminator update on detached student samples
        std::vector<Tensor> fake;
        for (int64_t b = 0; b < cfg.batch_size; ++b)
            fake.push_back(synthesize(student, ws[b]).image.detach());
        bool lazy = step % cfg.r1_interval == 0;
        GanLosses dl = gan_losses_lazy(disc, real, fake, cfg.r1_gamma, lazy);
        Tensor d_total = lazy ? add(dl.d_loss, scale(dl.r1_penalty,
                                                     static_cast<double>(cfg.r1_interval)))
                              : dl.d_loss;
        check_finite_loss(d_total.item(), "d_loss", step);
        opt_d.step(dp, backward(d_total));

        double log_g = 0.0, log_rgb = 0.0, log_ld = 0.0;
        if (train_student) {
            for (Tensor& p : sp) p.node_->requires_grad = true;
            Tensor total = Tensor::scalar(0.0);
            std::vector<Tensor> s_imgs;
            for (int64_t b = 0; b < cfg.batch_size; ++b)
                s_imgs.push_back(synthesize(student, ws[b]).image);
            if (cfg.lambda_gan > 0) {
                Tensor g_acc = Tensor::scalar(0.0);
                for (const Tensor& img : s_imgs) g_acc = add(g_acc, softplus(neg(disc.forward(img))));
                Tensor g_loss = scale(g_acc, 1.0 / static_cast<double>(cfg.batch_size));
                log_g = g_loss.item();
                total = add(total, scale(g_loss, cfg.lambda_gan));
            }
            if (cfg.lambda_rgb > 0) {
                Tensor rgb_acc = Tensor::scalar(0.0);
                for (int64_t b = 0; b < cfg.batch_size; ++b) {
                    Tensor t_img = synthesize(teacher, ws[b]).image;
                    rgb_acc = add(rgb_acc, loss_rgb(s_imgs[b], t_img));
                }
                Tensor rgb = scale(rgb_acc, 1.0 / static_cast<double>(cfg.batch_size));
                log_rgb = rgb.item();
                total = add(total, scale(rgb, cfg.lambda_rgb));
            }
            if (cfg.lambda_ld > 0) {
                Tensor ld = loss_ld(teacher, student, ws, ds, cfg.alpha);
                log_ld = ld.item();
                total = add(total, scale(ld, cfg.lambda_ld));
            }
            check_finite_loss(total.item(), "student loss", step);
            opt_s.step(sp, backward(total));
            for (Tensor& p : sp) p.node_->requires_grad = false;
        }

        if (log && (step % 100 == 0 || step == cfg.iterations - 1)) {
            double ms = std::chrono::duration<double, std::milli>(now() - t0).count();
            log->record(step, {{"g_loss", log_g},
                               {"d_loss", dl.d_loss.item()},
                               {"rgb", log_rgb},
                               {"ld", log_ld},
                               {"r1", dl.r1_penalty.item()},
                               {"wall_ms", ms}});
        }
    }
}

}  // namespace dcp
