#pragma once

#include <json.hpp>

#include "dcp/synthnet.hpp"

namespace dcp {

struct DiversityStats {
    double min_nn_distance = 0.0;  // smallest nearest-neighbor distance over the set
    double avg_distance = 0.0;     // mean pairwise distance
    int64_t n_samples = 0;

    nlohmann::json to_json() const;
};

/// Mean absolute pixel difference between teacher and student over n shared
/// latents z ~ N(0,1), averaged over images. psi < 1 applies truncation
/// toward the mapping's mean w (both generators share the mapping, so they
/// see the same truncated latents).
double teacher_student_l1(const GeneratorWeights& teacher, const GeneratorWeights& student,
                          int64_t n, uint64_t seed, double psi = 1.0);

/// Pairwise L2 distances between n generated images, each distance normalized
/// by sqrt(pixel count) so values are per-pixel RMS differences.
DiversityStats pairwise_diversity(const GeneratorWeights& gen, int64_t n, uint64_t seed,
                                  double psi = 1.0);

}  // namespace dcp
