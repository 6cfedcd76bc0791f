#pragma once

#include <map>
#include <optional>
#include <string>

#include "dcp/latentdir.hpp"
#include "dcp/synthnet.hpp"

namespace dcp {

struct DistillConfig {
    double lambda_gan = 1.0;
    double lambda_rgb = 3.0;
    double lambda_lpips = 0.0;  // no perceptual network in this artifact; must stay 0
    double lambda_ld = 30.0;
    double learning_rate = 2e-3;
    double adam_beta1 = 0.0;
    double adam_beta2 = 0.99;
    double r1_gamma = 10.0;
    int64_t r1_interval = 16;
    int64_t batch_size = 8;
    int64_t iterations = 5000;
    double alpha = 5.0;  // perturbation strength for the relation loss
    uint64_t seed = 0;

    void validate() const;
};

/// Adam with in-place parameter updates; state keyed by parameter node.
class Adam {
public:
    Adam(double lr, double beta1, double beta2, double eps = 1e-8);
    /// Applies one update to every param that has a gradient in `grads`.
    void step(std::vector<Tensor>& params, const Gradients& grads);
    int64_t iterations() const { return t_; }

private:
    double lr_, b1_, b2_, eps_;
    int64_t t_ = 0;
    std::map<const TensorNode*, std::vector<double>> m_, v_;
};

/// Small conv classifier: 3 stride-2 convs + linear head, leaky ReLU 0.2.
/// Produces a single scalar logit per image.
struct Discriminator {
    int64_t resolution = 32;
    std::map<std::string, Tensor> tensors;

    std::vector<Tensor> params();
    Tensor forward(const Tensor& image) const;
};

Discriminator init_discriminator(int64_t resolution, uint64_t seed);

/// Procedural "colored blobs" image in [-1,1], deterministic in (seed, index).
Tensor synth_dataset_sample(uint64_t seed, int64_t index, int64_t resolution = 32);

/// Mean absolute pixel difference.
Tensor loss_rgb(const Tensor& student_img, const Tensor& teacher_img);

/// Relation distillation: mean absolute difference between the teacher's and
/// student's BxB cosine-similarity matrices of perturbation-induced feature
/// changes in the final block.
Tensor loss_ld(const GeneratorWeights& teacher, const GeneratorWeights& student,
               const std::vector<LatentVector>& w_batch, const std::vector<Tensor>& d_batch,
               double alpha);

struct GanLosses {
    Tensor g_loss;
    Tensor d_loss;
    Tensor r1_penalty;
};

/// Non-saturating losses and R1 gradient penalty (differentiable w.r.t. the
/// discriminator, so the penalty can be trained on).
GanLosses gan_losses(const Discriminator& disc, const std::vector<Tensor>& real_batch,
                     const std::vector<Tensor>& fake_batch, double r1_gamma);

struct TrainLogSink {
    virtual ~TrainLogSink() = default;
    virtual void record(int64_t step, const std::map<std::string, double>& values) = 0;
};

/// Adversarially trains a fresh generator on the blob dataset.
GeneratorWeights train_teacher(const GeneratorConfig& gen_config, Discriminator& disc,
                               int64_t steps, const DistillConfig& cfg,
                               TrainLogSink* log = nullptr);

/// Trains the pruned student against the teacher with GAN + rgb + relation
/// losses; the student's synthesis network is updated, the mapping (shared
/// with the teacher) stays fixed.
void distill_student(GeneratorWeights& teacher, GeneratorWeights& student, Discriminator& disc,
                     const DirectionSet& directions, const DistillConfig& cfg,
                     TrainLogSink* log = nullptr);

}  // namespace dcp
