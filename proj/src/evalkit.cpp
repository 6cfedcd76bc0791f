#include "dcp/evalkit.hpp"

#include <cmath>
#include <limits>

#include "dcp/latentdir.hpp"

namespace dcp {

static Tensor mean_w(const GeneratorWeights& gen, uint64_t seed) {
    int64_t k = std::max<int64_t>(256, gen.config.w_dim + 1);
    return estimate_w_stats(gen, k, seed ^ 0x755D1ULL).w_mean;
}

nlohmann::json DiversityStats::to_json() const {
    return {{"min_nn_distance", min_nn_distance},
            {"avg_distance", avg_distance},
            {"n_samples", n_samples}};
}

double teacher_student_l1(const GeneratorWeights& teacher, const GeneratorWeights& student,
                          int64_t n, uint64_t seed, double psi) {
    if (n < 1) throw ModelError("teacher_student_l1 needs n >= 1");
    if (teacher.config.z_dim != student.config.z_dim)
        throw ModelError("teacher and student z_dim mismatch");
    if (teacher.config.final_resolution() != student.config.final_resolution())
        throw ModelError("teacher and student resolution mismatch");
    Tensor wm_t, wm_s;
    if (psi < 1.0) {
        wm_t = mean_w(teacher, seed);
        wm_s = mean_w(student, seed);
    }
    std::mt19937_64 rng(seed);
    double total = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        Tensor z = Tensor::randn({teacher.config.z_dim}, rng);
        LatentVector wt = map_latent(teacher, {z, LatentSpace::Z});
        LatentVector ws = map_latent(student, {z, LatentSpace::Z});
        if (psi < 1.0) {
            wt = truncate(wt, wm_t, psi);
            ws = truncate(ws, wm_s, psi);
        }
        Tensor a = synthesize(teacher, wt).image;
        Tensor b = synthesize(student, ws).image;
        auto ad = a.data();
        auto bd = b.data();
        double s = 0.0;
        for (size_t p = 0; p < ad.size(); ++p) s += std::abs(ad[p] - bd[p]);
        total += s / static_cast<double>(ad.size());
    }
    return total / static_cast<double>(n);
}

DiversityStats pairwise_diversity(const GeneratorWeights& gen, int64_t n, uint64_t seed,
                                  double psi) {
    if (n < 2) throw ModelError("pairwise_diversity needs n >= 2");
    Tensor wm;
    if (psi < 1.0) wm = mean_w(gen, seed);
    std::mt19937_64 rng(seed);
    std::vector<std::vector<double>> images;
    for (int64_t i = 0; i < n; ++i) {
        Tensor z = Tensor::randn({gen.config.z_dim}, rng);
        LatentVector w = map_latent(gen, {z, LatentSpace::Z});
        if (psi < 1.0) w = truncate(w, wm, psi);
        Tensor img = synthesize(gen, w).image;
        images.emplace_back(img.data().begin(), img.data().end());
    }
    double pixels = static_cast<double>(images[0].size());
    std::vector<double> nn(static_cast<size_t>(n), std::numeric_limits<double>::infinity());
    double sum = 0.0;
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = i + 1; j < n; ++j) {
            double d2 = 0.0;
            for (size_t p = 0; p < images[0].size(); ++p) {
                double dv = images[static_cast<size_t>(i)][p] - images[static_cast<size_t>(j)][p];
                d2 += dv * dv;
            }
            double d = std::sqrt(d2 / pixels);
            sum += d;
            nn[static_cast<size_t>(i)] = std::min(nn[static_cast<size_t>(i)], d);
            nn[static_cast<size_t>(j)] = std::min(nn[static_cast<size_t>(j)], d);
        }
    DiversityStats st;
    st.n_samples = n;
    st.avg_distance = sum / (static_cast<double>(n) * static_cast<double>(n - 1) / 2.0);
    st.min_nn_distance = *std::min_element(nn.begin(), nn.end());
    return st;
}

}  // namespace dcp
