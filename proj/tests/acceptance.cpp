// End-to-end acceptance gate. Each numbered check prints exactly one
// PASS/FAIL line on stdout; diagnostics go to stderr. Exit 0 iff all pass.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "dcp/checkpoint.hpp"
#include "dcp/distiller.hpp"
#include "dcp/evalkit.hpp"
#include "dcp/latentdir.hpp"
#include "dcp/scorer.hpp"
#include "dcp/surgeon.hpp"
#include "dcp/synthnet.hpp"

using namespace dcp;

namespace {

int g_failures = 0;

void report(int idx, const std::string& name, bool ok, const std::string& detail) {
    std::cout << (ok ? "PASS" : "FAIL") << " " << idx << " " << name;
    if (!detail.empty()) std::cout << " -- " << detail;
    std::cout << std::endl;
    if (!ok) ++g_failures;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(6);
    os << v;
    return os.str();
}

// ---------------------------------------------------------------- 1: gradients

// random point whose coordinates stay `margin` away from zero, so finite
// differences never straddle the abs/lrelu kink
Tensor away_from_zero(const Shape& shape, std::mt19937_64& rng, double margin) {
    Tensor t = Tensor::randn(shape, rng);
    std::vector<double> d(t.data().begin(), t.data().end());
    for (double& v : d) v += v >= 0 ? margin : -margin;
    return Tensor::from(shape, std::move(d));
}

Tensor positive(const Shape& shape, std::mt19937_64& rng, double floor_) {
    Tensor t = Tensor::randn(shape, rng);
    std::vector<double> d(t.data().begin(), t.data().end());
    for (double& v : d) v = std::abs(v) + floor_;
    return Tensor::from(shape, std::move(d));
}

bool criterion_gradients(std::string& detail) {
    auto t0 = std::chrono::steady_clock::now();
    std::mt19937_64 rng(1);
    int cases = 0;
    double worst = 0.0;

    auto run_case = [&](const std::function<Tensor(const Tensor&)>& f, const Tensor& point,
                        double step) {
        worst = std::max(worst, grad_check(f, point, step));
        ++cases;
    };
    // reduce the op output to a scalar with fixed random weights so every
    // input coordinate has a generic, well-conditioned gradient
    auto check_op = [&](const std::function<Tensor(const Tensor&)>& op, const Tensor& point,
                        double step = 1e-5) {
        Tensor c = Tensor::randn(op(point).shape(), rng);
        run_case([op, c](const Tensor& x) { return sum_all(mul(op(x), c)); }, point, step);
    };

    for (int s = 0; s < 4; ++s) {
        Tensor a = Tensor::randn({3, 4}, rng);
        Tensor b = Tensor::randn({3, 4}, rng);
        Tensor brow = Tensor::randn({4}, rng);
        Tensor bpos = positive({3, 4}, rng, 0.5);

        check_op([&](const Tensor& x) { return add(x, b); }, a);
        check_op([&](const Tensor& x) { return sub(x, b); }, a);
        check_op([&](const Tensor& x) { return mul(x, b); }, a);
        check_op([&](const Tensor& x) { return div_(x, bpos); }, a);
        check_op([&](const Tensor& x) { return div_(b, x); }, positive({3, 4}, rng, 1.0));
        check_op([&](const Tensor& x) { return neg(x); }, a);
        check_op([&](const Tensor& x) { return scale(x, 1.7); }, a);
        check_op([&](const Tensor& x) { return add_scalar(x, -0.3); }, a);
        check_op([&](const Tensor& x) { return abs_(x); }, away_from_zero({3, 4}, rng, 0.5));
        check_op([&](const Tensor& x) { return square(x); }, a);
        check_op([&](const Tensor& x) { return sqrt_(x); }, positive({3, 4}, rng, 0.5));
        check_op([&](const Tensor& x) { return rsqrt_(x); }, positive({3, 4}, rng, 0.5));
        check_op([&](const Tensor& x) { return leaky_relu(x, 0.2); },
                 away_from_zero({3, 4}, rng, 0.5));
        check_op([&](const Tensor& x) { return softplus(x); }, a);
        run_case([](const Tensor& x) { return sum_all(x); }, a, 1e-5);
        run_case([](const Tensor& x) { return mean_all(x); }, a, 1e-5);
        check_op([&](const Tensor& x) { return sum_axes(x, {0}); }, a);
        check_op([&](const Tensor& x) { return sum_axes(x, {1}); }, a);
        check_op([&](const Tensor& x) { return reshape(x, {4, 3}); }, a);
        check_op([&](const Tensor& x) { return transpose2d(x); }, a);
        check_op([&](const Tensor& x) { return mul(x, brow); }, a);   // broadcast rhs
        check_op([&](const Tensor& x) { return add(a, x); }, brow);   // reduce_to grad

        Tensor m = Tensor::randn({4, 2}, rng);
        check_op([&](const Tensor& x) { return matmul(x, m); }, a);
        check_op([&](const Tensor& x) { return matmul(a, x); }, m);

        Tensor img = Tensor::randn({2, 4, 4}, rng);
        Tensor w3 = Tensor::randn({2, 2, 3, 3}, rng);
        check_op([&](const Tensor& x) { return unfold(x, 3, 1, 1); }, img);
        check_op([&](const Tensor& x) { return fold(x, {2, 4, 4}, 3, 1, 1); },
                 Tensor::randn({18, 16}, rng));
        check_op([&](const Tensor& x) { return conv2d(x, w3, 1); }, img);
        check_op([&](const Tensor& x) { return conv2d(img, x, 1); }, w3);

        Tensor style = positive({2}, rng, 0.5);
        check_op([&](const Tensor& x) { return modulated_conv2d(x, w3, style, true); }, img);
        check_op([&](const Tensor& x) { return modulated_conv2d(img, x, style, true); }, w3);
        check_op([&](const Tensor& x) { return modulated_conv2d(img, w3, x, true); }, style);
        check_op([&](const Tensor& x) { return upsample2x(x); }, img);
        check_op([&](const Tensor& x) { return sumpool2x(x); }, img);
    }

    // full perturbation-loss gradients on a mini generator, one parameter
    // tensor at a time
    GeneratorConfig gc;
    gc.z_dim = 4;
    gc.w_dim = 4;
    gc.resolutions = {4, 8};
    gc.channels = {4, 3};
    const char* names[10] = {
        "block.4.conv.weight",   "block.8.conv.weight", "block.4.torgb.weight",
        "block.8.torgb.weight",  "block.4.affine.weight", "block.8.affine.weight",
        "const",                 "block.4.torgb_affine.weight",
        "block.8.torgb_affine.weight", "block.8.affine.bias"};
    int gen_cases = 0;
    for (int i = 0; i < 10; ++i) {
        GeneratorWeights g = init_generator(gc, 50 + static_cast<uint64_t>(i));
        std::mt19937_64 r2(80 + static_cast<uint64_t>(i));
        LatentVector w{map_latent(g, {Tensor::randn({4}, r2), LatentSpace::Z}).values.detach(),
                       LatentSpace::W};
        Tensor d = Tensor::randn({4}, r2);
        const std::string name = names[i];
        Tensor point = g.at(name).detach();
        auto f = [&g, &w, &d, name](const Tensor& x) {
            GeneratorWeights h;
            h.config = g.config;
            for (const auto& [n, t] : g.tensors) h.tensors.emplace(n, n == name ? x : t.detach());
            return image_diff_loss(h, w, d, 2.0);
        };
        worst = std::max(worst, grad_check(f, point, 1e-5));
        ++gen_cases;
    }

    double secs = seconds_since(t0);
    detail = std::to_string(cases) + " op cases + " + std::to_string(gen_cases) +
             " generator cases, max rel err " + fmt(worst) + ", " + fmt(secs) + "s";
    return cases >= 100 && gen_cases == 10 && worst < 1e-4 && secs < 120.0;
}

// ------------------------------------------------- 2: scorer analytic invariants

bool all_zero(const std::vector<double>& v) {
    for (double x : v)
        if (x != 0.0) return false;
    return true;
}

void permute_axis(Tensor& t, size_t axis, const std::vector<int64_t>& perm) {
    const Shape& s = t.shape();
    int64_t outer = 1, inner = 1;
    for (size_t i = 0; i < axis; ++i) outer *= s[i];
    for (size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
    std::vector<double> out(t.data().begin(), t.data().end());
    for (int64_t o = 0; o < outer; ++o)
        for (size_t c = 0; c < perm.size(); ++c)
            std::memcpy(out.data() +
                            (o * static_cast<int64_t>(perm.size()) + static_cast<int64_t>(c)) *
                                inner,
                        t.data().data() + (o * s[axis] + perm[c]) * inner,
                        static_cast<size_t>(inner) * sizeof(double));
    std::memcpy(t.mutable_data().data(), out.data(), out.size() * sizeof(double));
}

bool close_rel(double a, double b, double tol) {
    return std::abs(a - b) <= tol * std::max(1.0, std::abs(b));
}

bool criterion_scorer_invariants(std::string& detail) {
    GeneratorConfig gc;
    gc.z_dim = 5;
    gc.w_dim = 5;
    gc.resolutions = {4, 8};
    gc.channels = {4, 3};
    DirectionSet ds = random_direction_set(Tensor::zeros({5}), 5);

    bool zero_alpha_ok = true;
    {
        GeneratorWeights g = init_generator(gc, 21);
        ScoringConfig sc;
        sc.alpha = 0.0;
        sc.n_latents = 3;
        sc.n_directions = 2;
        sc.direction_mode = DirectionMode::RANDOM;
        ScoreReport r = accumulate_scores(g, ds, sc);
        for (const auto& [name, ls] : r.layers)
            zero_alpha_ok = zero_alpha_ok && all_zero(ls.s_mu) && all_zero(ls.s_sigma);
    }

    bool single_dir_ok = true;
    {
        GeneratorWeights g = init_generator(gc, 22);
        ScoringConfig sc;
        sc.n_latents = 3;
        sc.n_directions = 1;
        sc.direction_mode = DirectionMode::RANDOM;
        ScoreReport r = accumulate_scores(g, ds, sc);
        for (const auto& [name, ls] : r.layers)
            single_dir_ok = single_dir_ok && all_zero(ls.s_sigma) && !all_zero(ls.s_mu);
    }

    bool perm_ok = true;
    {
        GeneratorWeights g = init_generator(gc, 23);
        ScoringConfig sc;
        sc.n_latents = 2;
        sc.n_directions = 2;
        sc.seed = 5;
        sc.direction_mode = DirectionMode::RANDOM;
        ScoreReport base = accumulate_scores(g, ds, sc);

        std::vector<int64_t> perm = {2, 0, 3, 1};
        permute_axis(g.at("block.4.conv.weight"), 0, perm);
        permute_axis(g.at("block.4.conv.bias"), 0, perm);
        permute_axis(g.at("block.4.torgb.weight"), 1, perm);
        permute_axis(g.at("block.4.torgb_affine.weight"), 0, perm);
        permute_axis(g.at("block.4.torgb_affine.bias"), 0, perm);
        permute_axis(g.at("block.8.conv.weight"), 1, perm);
        permute_axis(g.at("block.8.affine.weight"), 0, perm);
        permute_axis(g.at("block.8.affine.bias"), 0, perm);
        ScoreReport permuted = accumulate_scores(g, ds, sc);

        const auto& b4 = base.layers.at("block.4.conv");
        const auto& p4 = permuted.layers.at("block.4.conv");
        for (size_t c = 0; c < perm.size(); ++c) {
            size_t src = static_cast<size_t>(perm[c]);
            perm_ok = perm_ok && close_rel(p4.s_mu[c], b4.s_mu[src], 1e-12) &&
                      close_rel(p4.s_sigma[c], b4.s_sigma[src], 1e-12);
        }
        const auto& b8 = base.layers.at("block.8.conv");
        const auto& p8 = permuted.layers.at("block.8.conv");
        for (size_t c = 0; c < b8.s_mu.size(); ++c)
            perm_ok = perm_ok && close_rel(p8.s_mu[c], b8.s_mu[c], 1e-12) &&
                      close_rel(p8.s_sigma[c], b8.s_sigma[c], 1e-12);
    }

    detail = std::string("alpha0=") + (zero_alpha_ok ? "ok" : "BAD") +
             " single_direction=" + (single_dir_ok ? "ok" : "BAD") +
             " permutation=" + (perm_ok ? "ok" : "BAD");
    return zero_alpha_ok && single_dir_ok && perm_ok;
}

// --------------------------------------------------- 3: brute-force score oracle

bool criterion_score_oracle(std::string& detail) {
    GeneratorConfig gc;
    gc.z_dim = 6;
    gc.w_dim = 6;
    gc.resolutions = {4, 8};
    gc.channels = {8, 6};
    GeneratorWeights g = init_generator(gc, 31);
    ScoringConfig sc;
    sc.alpha = 5.0;
    sc.n_latents = 5;
    sc.n_directions = 3;
    sc.seed = 7;
    sc.direction_mode = DirectionMode::RANDOM;
    DirectionSet ds = random_direction_set(Tensor::zeros({6}), 6);

    std::map<std::string, std::vector<std::vector<double>>> raw;
    auto observer = [&raw](int64_t, int64_t, const std::string& layer, const Tensor& gabs) {
        raw[layer].emplace_back(gabs.data().begin(), gabs.data().end());
    };
    ScoreReport r = accumulate_scores(g, ds, sc, 1, observer);

    double worst = 0.0;
    for (const auto& [layer, ls] : r.layers) {
        const auto& gs = raw.at(layer);
        if (gs.size() != static_cast<size_t>(sc.n_latents * sc.n_directions)) {
            detail = "observer saw " + std::to_string(gs.size()) + " gradients";
            return false;
        }
        size_t n = gs[0].size();
        size_t slice = n / static_cast<size_t>(ls.channels);
        // independent recomputation: grand mean, then per-latent offsets and
        // squared deviations, summed per output-channel slice
        std::vector<double> mu(n, 0.0), var(n, 0.0);
        for (const auto& gv : gs)
            for (size_t p = 0; p < n; ++p) mu[p] += gv[p];
        for (double& v : mu) v /= static_cast<double>(gs.size());
        for (int64_t i = 0; i < sc.n_latents; ++i) {
            std::vector<double> offset(n, 0.0);
            for (int64_t j = 0; j < sc.n_directions; ++j)
                for (size_t p = 0; p < n; ++p)
                    offset[p] += gs[static_cast<size_t>(i * sc.n_directions + j)][p];
            for (double& v : offset) v /= static_cast<double>(sc.n_directions);
            for (int64_t j = 0; j < sc.n_directions; ++j)
                for (size_t p = 0; p < n; ++p) {
                    double dv = gs[static_cast<size_t>(i * sc.n_directions + j)][p] - offset[p];
                    var[p] += dv * dv / static_cast<double>(gs.size());
                }
        }
        for (int64_t c = 0; c < ls.channels; ++c) {
            double smu = 0.0, ssig = 0.0;
            for (size_t p = 0; p < slice; ++p) {
                smu += mu[static_cast<size_t>(c) * slice + p];
                ssig += var[static_cast<size_t>(c) * slice + p];
            }
            worst = std::max(worst, std::abs(ls.s_mu[static_cast<size_t>(c)] - smu));
            worst = std::max(worst, std::abs(ls.s_sigma[static_cast<size_t>(c)] - ssig));
        }
    }
    detail = "M=5 N=3, max |score - oracle| = " + fmt(worst);
    return worst < 1e-10;
}

// --------------------------------------------------------------- 4: PCA oracle

bool criterion_pca_oracle(std::string& detail) {
    const int64_t dim = 8;
    const std::vector<double> lambda = {0.30, 0.20, 0.15, 0.12, 0.10, 0.06, 0.04, 0.03};
    // rotation as a sequence of Givens rotations; applying the same sequence
    // to the basis vectors yields the exact eigenvectors of the rotated
    // covariance
    struct Givens {
        int64_t i, j;
        double theta;
    };
    const std::vector<Givens> rots = {{0, 1, 0.3}, {2, 3, 0.8}, {1, 4, 1.1},
                                      {5, 7, 0.5}, {0, 6, 0.9}, {3, 5, 1.7}};
    auto rotate = [&rots](std::vector<double>& v) {
        for (const Givens& g : rots) {
            double c = std::cos(g.theta), s = std::sin(g.theta);
            double xi = v[static_cast<size_t>(g.i)], xj = v[static_cast<size_t>(g.j)];
            v[static_cast<size_t>(g.i)] = c * xi - s * xj;
            v[static_cast<size_t>(g.j)] = s * xi + c * xj;
        }
    };

    // 16 samples: +/- s_p along each rotated axis gives a zero-mean set whose
    // covariance (divisor K-1) is exactly sum_p lambda_p q_p q_p^T
    const int64_t k = 2 * dim;
    std::vector<double> flat;
    std::vector<std::vector<double>> oracle_dirs;
    for (int64_t p = 0; p < dim; ++p) {
        std::vector<double> q(static_cast<size_t>(dim), 0.0);
        q[static_cast<size_t>(p)] = 1.0;
        rotate(q);
        double sp = std::sqrt(lambda[static_cast<size_t>(p)] * static_cast<double>(k - 1) / 2.0);
        for (double sign : {1.0, -1.0})
            for (int64_t c = 0; c < dim; ++c)
                flat.push_back(sign * sp * q[static_cast<size_t>(c)]);
        // sign convention: first coordinate of magnitude > 1e-12 is positive
        for (int64_t c = 0; c < dim; ++c) {
            if (std::abs(q[static_cast<size_t>(c)]) <= 1e-12) continue;
            if (q[static_cast<size_t>(c)] < 0)
                for (double& x : q) x = -x;
            break;
        }
        oracle_dirs.push_back(q);
    }
    Tensor samples = Tensor::from({k, dim}, std::move(flat));
    DirectionSet ds = pca_directions(samples, dim);

    double eig_err = 0.0, dir_err = 0.0, gram_err = 0.0;
    for (int64_t p = 0; p < dim; ++p) {
        eig_err = std::max(eig_err,
                           std::abs(ds.variance_ratios.at(p) - lambda[static_cast<size_t>(p)]));
        for (int64_t c = 0; c < dim; ++c)
            dir_err = std::max(dir_err, std::abs(ds.directions.at(p * dim + c) -
                                                 oracle_dirs[static_cast<size_t>(p)]
                                                            [static_cast<size_t>(c)]));
    }
    for (int64_t p = 0; p < dim; ++p)
        for (int64_t q = 0; q < dim; ++q) {
            double dot = 0.0;
            for (int64_t c = 0; c < dim; ++c)
                dot += ds.directions.at(p * dim + c) * ds.directions.at(q * dim + c);
            gram_err = std::max(gram_err, std::abs(dot - (p == q ? 1.0 : 0.0)));
        }

    // variance-proportional sampling frequencies
    std::mt19937_64 rng(41);
    std::vector<int64_t> counts(static_cast<size_t>(dim), 0);
    const int64_t draws = 10000;
    for (int64_t t = 0; t < draws; ++t) {
        Tensor d = sample_direction(ds, rng);
        int64_t best = 0;
        double best_dot = -1.0;
        for (int64_t p = 0; p < dim; ++p) {
            double dot = 0.0;
            for (int64_t c = 0; c < dim; ++c) dot += d.at(c) * ds.directions.at(p * dim + c);
            if (std::abs(dot) > best_dot) {
                best_dot = std::abs(dot);
                best = p;
            }
        }
        ++counts[static_cast<size_t>(best)];
    }
    double freq_err = 0.0;
    for (int64_t p = 0; p < dim; ++p)
        freq_err = std::max(freq_err,
                            std::abs(static_cast<double>(counts[static_cast<size_t>(p)]) /
                                         static_cast<double>(draws) -
                                     lambda[static_cast<size_t>(p)]));

    detail = "eig err " + fmt(eig_err) + ", dir err " + fmt(dir_err) + ", gram err " +
             fmt(gram_err) + ", freq err " + fmt(freq_err);
    return eig_err < 1e-8 && dir_err < 1e-8 && gram_err < 1e-8 && freq_err <= 0.02;
}

// ------------------------------------------------------ 5: dead-channel exactness

void zero_axis_slices(Tensor& t, size_t axis, const std::vector<int64_t>& idx) {
    const Shape& s = t.shape();
    int64_t outer = 1, inner = 1;
    for (size_t i = 0; i < axis; ++i) outer *= s[i];
    for (size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
    auto d = t.mutable_data();
    for (int64_t o = 0; o < outer; ++o)
        for (int64_t c : idx)
            for (int64_t p = 0; p < inner; ++p) d[(o * s[axis] + c) * inner + p] = 0.0;
}

bool criterion_dead_channels(std::string& detail) {
    GeneratorConfig gc;
    gc.z_dim = 8;
    gc.w_dim = 8;
    gc.resolutions = {4, 8};
    gc.channels = {8, 8};
    GeneratorWeights teacher = init_generator(gc, 51);

    // make half of each feature map dead: nothing downstream consumes it
    const std::vector<int64_t> dead = {1, 3, 5, 7};
    zero_axis_slices(teacher.at("block.8.conv.weight"), 1, dead);   // conv consumer of block.4
    zero_axis_slices(teacher.at("block.4.torgb.weight"), 1, dead);  // rgb consumer of block.4
    zero_axis_slices(teacher.at("block.8.torgb.weight"), 1, dead);  // rgb consumer of block.8
    // the constant's channels share block.4's kept set, so the channels that
    // will be sliced out of the constant must not feed the first conv either
    zero_axis_slices(teacher.at("block.4.conv.weight"), 1, dead);

    ScoringConfig sc;
    sc.alpha = 5.0;
    sc.n_latents = 10;
    sc.n_directions = 3;
    sc.seed = 13;
    sc.direction_mode = DirectionMode::RANDOM;
    DirectionSet ds = random_direction_set(Tensor::zeros({8}), 8);
    ScoreReport scores = accumulate_scores(teacher, ds, sc);

    bool dead_lowest = true;
    for (const auto& [layer, ls] : scores.layers) {
        double max_dead = 0.0, min_alive = 1e300;
        for (int64_t c = 0; c < ls.channels; ++c) {
            bool is_dead = std::find(dead.begin(), dead.end(), c) != dead.end();
            if (is_dead)
                max_dead = std::max(max_dead, ls.s_sigma[static_cast<size_t>(c)]);
            else
                min_alive = std::min(min_alive, ls.s_sigma[static_cast<size_t>(c)]);
        }
        dead_lowest = dead_lowest && max_dead < min_alive && max_dead == 0.0;
    }

    PruningPlan plan = build_plan(scores, 0.5, SelectionMode::S_SIGMA, 0);
    GeneratorWeights student = apply_plan(teacher, plan);

    double max_diff = 0.0;
    std::mt19937_64 rng(52);
    for (int i = 0; i < 100; ++i) {
        Tensor z = Tensor::randn({8}, rng);
        Tensor ti = synthesize(teacher, map_latent(teacher, {z, LatentSpace::Z})).image;
        Tensor si = synthesize(student, map_latent(student, {z, LatentSpace::Z})).image;
        for (int64_t p = 0; p < ti.numel(); ++p)
            max_diff = std::max(max_diff, std::abs(ti.at(p) - si.at(p)));
    }
    detail = std::string("dead channels score lowest: ") + (dead_lowest ? "yes" : "NO") +
             ", max output diff " + fmt(max_diff);
    return dead_lowest && max_diff < 1e-9;
}

// ------------------------------------------- 6: end-to-end directional experiment

bool criterion_directional(std::string& detail) {
    auto t0 = std::chrono::steady_clock::now();
    GeneratorConfig gc;
    gc.z_dim = 16;
    gc.w_dim = 16;
    gc.resolutions = {4, 8};
    gc.channels = {16, 8};

    const SelectionMode modes[3] = {SelectionMode::S_SIGMA, SelectionMode::S_MU,
                                    SelectionMode::RANDOM};
    int wins = 0;
    std::ostringstream summary;
    for (uint64_t seed = 1; seed <= 3; ++seed) {
        uint64_t base = 1000 * seed;

        DistillConfig tc;
        tc.batch_size = 4;
        tc.seed = base;
        Discriminator tdisc = init_discriminator(gc.final_resolution(), base ^ 0xD15CULL);
        GeneratorWeights teacher = train_teacher(gc, tdisc, 10000, tc);
        std::cerr << "[e2e] seed " << seed << ": teacher trained ("
                  << fmt(seconds_since(t0)) << "s elapsed)\n";

        WStats ws = estimate_w_stats(teacher, 10000, base + 1);
        DirectionSet ds = pca_directions(ws.samples, 16);
        ScoringConfig sc;
        sc.seed = base + 2;
        ScoreReport scores = accumulate_scores(teacher, ds, sc);
        std::cerr << "[e2e] seed " << seed << ": scores done (" << fmt(seconds_since(t0))
                  << "s elapsed)\n";

        double l1[3], avg[3];
        for (int m = 0; m < 3; ++m) {
            PruningPlan plan = build_plan(scores, 0.7, modes[m], base + 3);
            GeneratorWeights student = apply_plan(teacher, plan);
            DistillConfig dc;
            dc.batch_size = 4;
            dc.seed = base + 4;
            dc.iterations = 5000;
            Discriminator sdisc =
                init_discriminator(gc.final_resolution(), (base + 4) ^ 0xD15CULL);
            distill_student(teacher, student, sdisc, ds, dc);
            l1[m] = teacher_student_l1(teacher, student, 100, base + 5);
            avg[m] = pairwise_diversity(student, 100, base + 5).avg_distance;
            std::cerr << "[e2e] seed " << seed << " mode " << selection_mode_name(modes[m])
                      << ": l1 " << fmt(l1[m]) << ", avg_distance " << fmt(avg[m]) << " ("
                      << fmt(seconds_since(t0)) << "s elapsed)\n";
        }
        bool win_l1 = l1[0] <= l1[2];
        bool win_div = avg[0] >= avg[2];
        if (win_l1 && win_div) ++wins;
        summary << " seed" << seed << (win_l1 && win_div ? "+" : "-");
    }
    detail = std::to_string(wins) + "/3 seeds favor the diversity score over random:" +
             summary.str() + ", " + fmt(seconds_since(t0)) + "s";
    return wins >= 2;
}

// ------------------------------------------------------ 7: compression accounting

bool criterion_accounting(std::string& detail) {
    GeneratorConfig gc;  // defaults: z=w=64, 2 mapping layers, 4..32, {64,64,32,16}
    GeneratorWeights teacher = init_generator(gc, 61);

    ScoreReport scores;
    std::mt19937_64 rng(62);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (size_t i = 0; i < gc.resolutions.size(); ++i) {
        LayerScores ls;
        ls.channels = gc.channels[i];
        for (int64_t c = 0; c < ls.channels; ++c) {
            ls.s_mu.push_back(u(rng));
            ls.s_sigma.push_back(u(rng));
        }
        scores.layers.emplace("block." + std::to_string(gc.resolutions[i]) + ".conv",
                              std::move(ls));
    }
    PruningPlan plan = build_plan(scores, 0.7, SelectionMode::S_SIGMA, 0);
    GeneratorWeights student = apply_plan(teacher, plan);

    // analytic sliced shapes: keep ceil(0.3*C) channels per feature map
    std::vector<int64_t> kept;
    for (int64_t c : gc.channels)
        kept.push_back(static_cast<int64_t>(std::ceil(0.3 * static_cast<double>(c))));
    int64_t analytic = 0;
    analytic += 2 * (64 * 64 + 64);  // mapping stays full
    analytic += kept[0] * 16;        // learned constant
    for (size_t i = 0; i < kept.size(); ++i) {
        int64_t cin = i == 0 ? kept[0] : kept[i - 1];
        int64_t cout = kept[i];
        analytic += cout * cin * 9 + cout;  // conv
        analytic += cin * 64 + cin;         // affine
        analytic += 3 * cout + 3;           // toRGB
        analytic += cout * 64 + cout;       // toRGB affine
    }

    int64_t actual = 0;
    for (const auto& [name, t] : student.tensors) actual += t.numel();
    bool params_ok = actual == analytic && count_params(student.config) == analytic &&
                     analytic == 26447;  // hand-computed for {20,20,10,5} kept channels
    bool flops_ok = count_flops(student.config) < count_flops(gc);
    detail = "analytic " + std::to_string(analytic) + ", actual " + std::to_string(actual) +
             ", flops " + std::to_string(count_flops(student.config)) + " < " +
             std::to_string(count_flops(gc));
    return params_ok && flops_ok;
}

// ------------------------------------------------- 8: determinism & serialization

int run_cli(const std::string& args) {
    std::string cmd = std::string(DCP_CLI_PATH) + " " + args + " 2>/dev/null";
    int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string slurp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f.good()) return "<unreadable:" + path + ">";
    std::ostringstream os;
    os << f.rdbuf();
    return os.str();
}

bool criterion_determinism(std::string& detail) {
    char tmpl[] = "/tmp/dcp_acceptance_XXXXXX";
    char* dtmp = mkdtemp(tmpl);
    if (!dtmp) {
        detail = "mkdtemp failed";
        return false;
    }
    const std::string d(dtmp);
    const std::string arch = "--z-dim 5 --w-dim 5 --resolutions 4 8 --channels 6 4";

    auto stage = [&](const std::string& args, const std::string& out) {
        for (const char* tag : {"a", "b"})
            if (run_cli(args + " --out " + d + "/" + out + "." + tag) != 0) return false;
        return slurp(d + "/" + out + ".a") == slurp(d + "/" + out + ".b");
    };

    bool ok = true;
    ok &= stage("train-teacher " + arch + " --steps 30 --batch-size 2 --seed 1",
                "teacher.dcpg");
    std::string teacher = d + "/teacher.dcpg.a";
    ok &= stage("directions --teacher " + teacher + " --n-latents 200 --seed 2", "dirs.dcpg");
    std::string dirs = d + "/dirs.dcpg.a";
    ok &= stage("score --teacher " + teacher + " --directions " + dirs +
                    " --n-latents 4 --n-directions 3 --seed 3",
                "scores.json");
    std::string scores = d + "/scores.json.a";
    ok &= stage("prune --teacher " + teacher + " --scores " + scores +
                    " --ratio 0.5 --mode s_sigma",
                "student.dcpg");
    std::string student = d + "/student.dcpg.a";
    ok &= stage("distill --teacher " + teacher + " --student " + student + " --directions " +
                    dirs + " --steps 5 --batch-size 2 --seed 4",
                "trained.dcpg");
    ok &= stage("eval --teacher " + teacher + " --student " + d +
                    "/trained.dcpg.a --n-latents 6 --seed 5",
                "eval.json");

    // checkpoint round-trip is bit-exact
    GeneratorConfig gc;
    gc.z_dim = 5;
    gc.w_dim = 5;
    gc.resolutions = {4, 8};
    gc.channels = {6, 4};
    GeneratorWeights g = init_generator(gc, 9);
    save_checkpoint(g, d + "/rt1.dcpg");
    GeneratorWeights loaded = load_checkpoint(d + "/rt1.dcpg");
    save_checkpoint(loaded, d + "/rt2.dcpg");
    bool roundtrip = slurp(d + "/rt1.dcpg") == slurp(d + "/rt2.dcpg");
    for (const auto& [name, t] : g.tensors) {
        const Tensor& l = loaded.at(name);
        roundtrip = roundtrip && l.shape() == t.shape() &&
                    std::memcmp(l.data().data(), t.data().data(),
                                t.data().size() * sizeof(double)) == 0;
    }

    detail = std::string("stage reruns byte-identical: ") + (ok ? "yes" : "NO") +
             ", checkpoint round-trip bit-exact: " + (roundtrip ? "yes" : "NO");
    return ok && roundtrip;
}

}  // namespace

int main() {
    struct Criterion {
        int idx;
        const char* name;
        bool (*fn)(std::string&);
    };
    const Criterion list[] = {
        {1, "gradient checks vs central differences", criterion_gradients},
        {2, "scorer analytic invariants", criterion_scorer_invariants},
        {3, "brute-force score oracle", criterion_score_oracle},
        {4, "pca oracle and sampling frequencies", criterion_pca_oracle},
        {5, "dead-channel pruning exactness", criterion_dead_channels},
        {6, "end-to-end directional experiment", criterion_directional},
        {7, "compression accounting", criterion_accounting},
        {8, "determinism and serialization", criterion_determinism},
    };
    for (const Criterion& c : list) {
        std::string detail;
        bool ok = false;
        try {
            ok = c.fn(detail);
        } catch (const std::exception& e) {
            detail = std::string("exception: ") + e.what();
        }
        report(c.idx, c.name, ok, detail);
    }
    std::cout << (g_failures == 0 ? "all criteria passed" : "criteria failed") << std::endl;
    return g_failures == 0 ? 0 : 1;
}
