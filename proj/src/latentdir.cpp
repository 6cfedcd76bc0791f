#include "dcp/latentdir.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dcp/checkpoint.hpp"

namespace dcp {

std::string direction_mode_name(DirectionMode m) {
    return m == DirectionMode::PCA ? "pca" : "random";
}

DirectionMode direction_mode_from_name(const std::string& s) {
    if (s == "pca") return DirectionMode::PCA;
    if (s == "random") return DirectionMode::RANDOM;
    throw ModelError("unknown direction mode '" + s + "' (expected pca|random)");
}

WStats estimate_w_stats(const GeneratorWeights& weights, int64_t k, uint64_t seed) {
    int64_t wd = weights.config.w_dim;
    if (k < wd + 1)
        throw ModelError("estimate_w_stats needs K >= w_dim+1 (" + std::to_string(wd + 1) +
                         "), got K=" + std::to_string(k));
    std::mt19937_64 rng(seed);
    std::vector<double> samples(static_cast<size_t>(k * wd));
    std::vector<double> mean(static_cast<size_t>(wd), 0.0);
    for (int64_t i = 0; i < k; ++i) {
        Tensor z = Tensor::randn({weights.config.z_dim}, rng);
        LatentVector w = map_latent(weights, {z, LatentSpace::Z});
        auto wd_span = w.values.data();
        for (int64_t j = 0; j < wd; ++j) {
            samples[i * wd + j] = wd_span[j];
            mean[j] += wd_span[j];
        }
    }
    for (double& m : mean) m /= static_cast<double>(k);
    return {Tensor::from({wd}, std::move(mean)), Tensor::from({k, wd}, std::move(samples))};
}

// Cyclic Jacobi eigendecomposition of a symmetric matrix. Returns eigenvalues
// descending with matching eigenvectors as rows of `vecs`.
static void jacobi_eigh(std::vector<double> a, int64_t n, std::vector<double>& vals,
                        std::vector<double>& vecs) {
    vecs.assign(static_cast<size_t>(n * n), 0.0);
    for (int64_t i = 0; i < n; ++i) vecs[i * n + i] = 1.0;
    double fro = 0.0;
    for (double v : a) fro += v * v;
    fro = std::sqrt(fro);
    for (int sweep = 0; sweep < 200; ++sweep) {
        double off = 0.0;
        for (int64_t p = 0; p < n; ++p)
            for (int64_t q = p + 1; q < n; ++q) off += a[p * n + q] * a[p * n + q];
        if (std::sqrt(2 * off) <= 1e-15 * std::max(fro, 1e-300)) break;
        for (int64_t p = 0; p < n; ++p)
            for (int64_t q = p + 1; q < n; ++q) {
                double apq = a[p * n + q];
                if (std::abs(apq) <= 1e-300) continue;
                double app = a[p * n + p], aqq = a[q * n + q];
                double theta = (aqq - app) / (2 * apq);
                double t = (theta >= 0 ? 1.0 : -1.0) /
                           (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                double c = 1.0 / std::sqrt(t * t + 1.0);
                double s = t * c;
                for (int64_t i = 0; i < n; ++i) {
                    double aip = a[i * n + p], aiq = a[i * n + q];
                    a[i * n + p] = c * aip - s * aiq;
                    a[i * n + q] = s * aip + c * aiq;
                }
                for (int64_t i = 0; i < n; ++i) {
                    double api = a[p * n + i], aqi = a[q * n + i];
                    a[p * n + i] = c * api - s * aqi;
                    a[q * n + i] = s * api + c * aqi;
                }
                for (int64_t i = 0; i < n; ++i) {
                    double vip = vecs[p * n + i], viq = vecs[q * n + i];
                    vecs[p * n + i] = c * vip - s * viq;
                    vecs[q * n + i] = s * vip + c * viq;
                }
            }
    }
    vals.resize(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) vals[i] = a[i * n + i];
    std::vector<int64_t> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&vals](int64_t x, int64_t y) { return vals[x] > vals[y]; });
    std::vector<double> sv(static_cast<size_t>(n)), svec(static_cast<size_t>(n * n));
    for (int64_t i = 0; i < n; ++i) {
        sv[i] = vals[order[i]];
        for (int64_t j = 0; j < n; ++j) svec[i * n + j] = vecs[order[i] * n + j];
    }
    vals = std::move(sv);
    vecs = std::move(svec);
}

DirectionSet pca_directions(const Tensor& samples, int64_t v) {
    if (samples.ndim() != 2) throw ModelError("pca_directions expects [K, w_dim] samples");
    int64_t k = samples.dim(0), wd = samples.dim(1);
    if (v > wd) throw ModelError("V must not exceed w_dim");
    if (k <= v) throw ModelError("need K > V samples");
    auto sd = samples.data();
    std::vector<double> mean(static_cast<size_t>(wd), 0.0);
    for (int64_t i = 0; i < k; ++i)
        for (int64_t j = 0; j < wd; ++j) mean[j] += sd[i * wd + j];
    for (double& m : mean) m /= static_cast<double>(k);
    std::vector<double> cov(static_cast<size_t>(wd * wd), 0.0);
    for (int64_t i = 0; i < k; ++i)
        for (int64_t p = 0; p < wd; ++p) {
            double dp = sd[i * wd + p] - mean[p];
            for (int64_t q = p; q < wd; ++q)
                cov[p * wd + q] += dp * (sd[i * wd + q] - mean[q]);
        }
    for (int64_t p = 0; p < wd; ++p)
        for (int64_t q = p; q < wd; ++q) {
            cov[p * wd + q] /= static_cast<double>(k - 1);
            cov[q * wd + p] = cov[p * wd + q];
        }

    std::vector<double> vals, vecs;
    jacobi_eigh(cov, wd, vals, vecs);

    double tol = std::max(std::abs(vals[0]), 1.0) * 1e-12;
    int64_t positive = 0;
    while (positive < wd && vals[positive] > tol) ++positive;
    if (positive < v)
        throw ModelError("covariance is rank deficient: only " + std::to_string(positive) +
                         " positive eigenvalues, attainable V <= " + std::to_string(positive));

    std::vector<double> dirs(static_cast<size_t>(v * wd));
    std::vector<double> ratios(static_cast<size_t>(v));
    double sum = 0.0;
    for (int64_t i = 0; i < v; ++i) sum += vals[i];
    for (int64_t i = 0; i < v; ++i) {
        ratios[i] = vals[i] / sum;
        double norm = 0.0;
        for (int64_t j = 0; j < wd; ++j) norm += vecs[i * wd + j] * vecs[i * wd + j];
        norm = std::sqrt(norm);
        double sign = 1.0;
        for (int64_t j = 0; j < wd; ++j)
            if (std::abs(vecs[i * wd + j]) > 1e-12) {
                sign = vecs[i * wd + j] > 0 ? 1.0 : -1.0;
                break;
            }
        for (int64_t j = 0; j < wd; ++j) dirs[i * wd + j] = sign * vecs[i * wd + j] / norm;
    }

    DirectionSet ds;
    ds.directions = Tensor::from({v, wd}, std::move(dirs));
    ds.variance_ratios = Tensor::from({v}, std::move(ratios));
    ds.w_mean = Tensor::from({wd}, std::move(mean));
    ds.mode = DirectionMode::PCA;
    return ds;
}

DirectionSet random_direction_set(const Tensor& w_mean, int64_t w_dim) {
    DirectionSet ds;
    ds.directions = Tensor::zeros({0, w_dim});
    ds.variance_ratios = Tensor::zeros({0});
    ds.w_mean = w_mean;
    ds.mode = DirectionMode::RANDOM;
    return ds;
}

Tensor sample_direction(const DirectionSet& ds, std::mt19937_64& rng) {
    int64_t wd = ds.w_dim();
    if (ds.mode == DirectionMode::RANDOM) return Tensor::randn({wd}, rng);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    double u = unif(rng);
    auto ratios = ds.variance_ratios.data();
    double acc = 0.0;
    int64_t pick = ds.count() - 1;
    for (int64_t i = 0; i < ds.count(); ++i) {
        acc += ratios[i];
        if (u < acc) {
            pick = i;
            break;
        }
    }
    auto dd = ds.directions.data();
    std::vector<double> row(dd.begin() + pick * wd, dd.begin() + (pick + 1) * wd);
    return Tensor::from({wd}, std::move(row));
}

void save_directions(const DirectionSet& ds, const std::string& path) {
    nlohmann::json header;
    header["kind"] = "directions";
    header["mode"] = direction_mode_name(ds.mode);
    std::map<std::string, Tensor> tensors = {{"directions", ds.directions},
                                             {"variance_ratios", ds.variance_ratios},
                                             {"w_mean", ds.w_mean}};
    save_container(path, header, tensors);
}

DirectionSet load_directions(const std::string& path) {
    Checkpoint ck = load_container(path);
    DirectionSet ds;
    ds.mode = direction_mode_from_name(ck.header.at("mode").get<std::string>());
    ds.directions = ck.tensors.at("directions");
    ds.variance_ratios = ck.tensors.at("variance_ratios");
    ds.w_mean = ck.tensors.at("w_mean");
    return ds;
}

}  // namespace dcp
