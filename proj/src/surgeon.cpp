#include "dcp/surgeon.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

namespace dcp {

std::string selection_mode_name(SelectionMode m) {
    switch (m) {
        case SelectionMode::S_SIGMA: return "s_sigma";
        case SelectionMode::S_MU: return "s_mu";
        case SelectionMode::RANDOM: return "random";
    }
    throw ModelError("bad selection mode");
}

SelectionMode selection_mode_from_name(const std::string& s) {
    if (s == "s_sigma") return SelectionMode::S_SIGMA;
    if (s == "s_mu") return SelectionMode::S_MU;
    if (s == "random") return SelectionMode::RANDOM;
    throw ModelError("unknown selection mode '" + s + "' (expected s_sigma|s_mu|random)");
}

nlohmann::json PruningPlan::to_json() const {
    nlohmann::json kept_json;
    for (const auto& [name, idx] : kept) kept_json[name] = idx;
    return {{"p_r", p_r}, {"mode", selection_mode_name(mode)}, {"seed", seed},
            {"kept", kept_json}};
}

PruningPlan PruningPlan::from_json(const nlohmann::json& j) {
    PruningPlan p;
    p.p_r = j.at("p_r").get<double>();
    p.mode = selection_mode_from_name(j.at("mode").get<std::string>());
    p.seed = j.at("seed").get<uint64_t>();
    for (const auto& [name, idx] : j.at("kept").items())
        p.kept.emplace(name, idx.get<std::vector<int64_t>>());
    return p;
}

static uint64_t fnv1a(const std::string& s) {
    uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

PruningPlan build_plan(const ScoreReport& report, double p_r, SelectionMode mode, uint64_t seed) {
    if (!(p_r > 0.0 && p_r < 1.0)) throw ModelError("pruning ratio must satisfy 0 < p_r < 1");
    PruningPlan plan;
    plan.p_r = p_r;
    plan.mode = mode;
    plan.seed = seed;
    for (const auto& [layer, scores] : report.layers) {
        // "block.{r}.conv" scores the feature map "block.{r}"
        std::string fmap = layer.substr(0, layer.rfind(".conv"));
        int64_t c = scores.channels;
        int64_t keep = static_cast<int64_t>(std::ceil((1.0 - p_r) * static_cast<double>(c)));
        std::vector<int64_t> idx(static_cast<size_t>(c));
        std::iota(idx.begin(), idx.end(), 0);
        if (mode == SelectionMode::RANDOM) {
            std::mt19937_64 rng(seed ^ fnv1a(fmap));
            std::shuffle(idx.begin(), idx.end(), rng);
        } else {
            const std::vector<double>& s =
                mode == SelectionMode::S_SIGMA ? scores.s_sigma : scores.s_mu;
            std::stable_sort(idx.begin(), idx.end(),
                             [&s](int64_t a, int64_t b) { return s[a] > s[b]; });
        }
        idx.resize(static_cast<size_t>(keep));
        std::sort(idx.begin(), idx.end());
        plan.kept.emplace(fmap, std::move(idx));
    }
    return plan;
}

static Tensor slice_axis(const Tensor& t, size_t axis, const std::vector<int64_t>& kept,
                         const std::string& name) {
    const Shape& s = t.shape();
    for (int64_t i : kept)
        if (i < 0 || i >= s.at(axis))
            throw ModelError("plan index " + std::to_string(i) + " out of range for tensor '" +
                             name + "' axis " + std::to_string(axis) + " of extent " +
                             std::to_string(s.at(axis)));
    Shape out = s;
    out[axis] = static_cast<int64_t>(kept.size());
    int64_t outer = 1, inner = 1;
    for (size_t i = 0; i < axis; ++i) outer *= s[i];
    for (size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
    std::vector<double> r(static_cast<size_t>(numel(out)));
    auto td = t.data();
    int64_t oi = 0;
    for (int64_t o = 0; o < outer; ++o)
        for (int64_t ki : kept) {
            const double* src = td.data() + (o * s[axis] + ki) * inner;
            std::copy(src, src + inner, r.data() + oi);
            oi += inner;
        }
    return Tensor::from(out, std::move(r));
}

static const std::vector<int64_t>& kept_for(const PruningPlan& plan, const std::string& fmap) {
    auto it = plan.kept.find(fmap);
    if (it == plan.kept.end()) throw ModelError("plan is missing feature map '" + fmap + "'");
    if (it->second.empty()) throw ModelError("plan keeps no channels for '" + fmap + "'");
    return it->second;
}

GeneratorWeights apply_plan(const GeneratorWeights& teacher, const PruningPlan& plan) {
    const GeneratorConfig& tcfg = teacher.config;
    GeneratorConfig scfg = tcfg;
    for (size_t i = 0; i < tcfg.resolutions.size(); ++i)
        scfg.channels[i] = static_cast<int64_t>(
            kept_for(plan, "block." + std::to_string(tcfg.resolutions[i])).size());
    scfg.validate();

    GeneratorWeights student;
    student.config = scfg;
    for (int64_t i = 0; i < tcfg.mapping_layers; ++i) {
        std::string p = "mapping." + std::to_string(i) + ".";
        student.tensors.emplace(p + "weight", teacher.at(p + "weight").detach());
        student.tensors.emplace(p + "bias", teacher.at(p + "bias").detach());
    }
    const auto& first_kept = kept_for(plan, "block." + std::to_string(tcfg.resolutions[0]));
    student.tensors.emplace("const", slice_axis(teacher.at("const"), 0, first_kept, "const"));
    for (size_t i = 0; i < tcfg.resolutions.size(); ++i) {
        std::string r = std::to_string(tcfg.resolutions[i]);
        std::string p = "block." + r + ".";
        const auto& kout = kept_for(plan, "block." + r);
        const auto& kin = i == 0 ? first_kept
                                 : kept_for(plan, "block." + std::to_string(tcfg.resolutions[i - 1]));
        Tensor cw = slice_axis(teacher.at(p + "conv.weight"), 0, kout, p + "conv.weight");
        student.tensors.emplace(p + "conv.weight",
                                slice_axis(cw, 1, kin, p + "conv.weight"));
        student.tensors.emplace(p + "conv.bias",
                                slice_axis(teacher.at(p + "conv.bias"), 0, kout, p + "conv.bias"));
        student.tensors.emplace(
            p + "affine.weight",
            slice_axis(teacher.at(p + "affine.weight"), 0, kin, p + "affine.weight"));
        student.tensors.emplace(
            p + "affine.bias",
            slice_axis(teacher.at(p + "affine.bias"), 0, kin, p + "affine.bias"));
        student.tensors.emplace(
            p + "torgb.weight",
            slice_axis(teacher.at(p + "torgb.weight"), 1, kout, p + "torgb.weight"));
        student.tensors.emplace(p + "torgb.bias", teacher.at(p + "torgb.bias").detach());
        student.tensors.emplace(
            p + "torgb_affine.weight",
            slice_axis(teacher.at(p + "torgb_affine.weight"), 0, kout, p + "torgb_affine.weight"));
        student.tensors.emplace(
            p + "torgb_affine.bias",
            slice_axis(teacher.at(p + "torgb_affine.bias"), 0, kout, p + "torgb_affine.bias"));
    }
    return student;
}

std::vector<std::string> verify_plan(const PruningPlan& plan, const GeneratorConfig& config) {
    std::vector<std::string> violations;
    for (size_t i = 0; i < config.resolutions.size(); ++i) {
        std::string fmap = "block." + std::to_string(config.resolutions[i]);
        auto it = plan.kept.find(fmap);
        if (it == plan.kept.end()) {
            violations.push_back("missing kept list for feature map '" + fmap + "'");
            continue;
        }
        const auto& kept = it->second;
        if (kept.empty()) violations.push_back("empty kept list for '" + fmap + "'");
        for (size_t j = 0; j < kept.size(); ++j) {
            if (kept[j] < 0 || kept[j] >= config.channels[i])
                violations.push_back("'" + fmap + "' keeps index " + std::to_string(kept[j]) +
                                     " outside [0," + std::to_string(config.channels[i]) + ")");
            if (j > 0 && kept[j] <= kept[j - 1])
                violations.push_back("'" + fmap + "' kept list is not strictly increasing at " +
                                     std::to_string(kept[j]));
        }
    }
    for (const auto& [name, idx] : plan.kept) {
        bool known = false;
        for (int64_t r : config.resolutions)
            if (name == "block." + std::to_string(r)) known = true;
        if (!known) violations.push_back("plan names unknown feature map '" + name + "'");
    }
    return violations;
}

void save_plan(const PruningPlan& plan, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw ModelError("cannot open for writing: " + path);
    f << plan.to_json().dump(2) << "\n";
}

PruningPlan load_plan(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ModelError("cannot open: " + path);
    nlohmann::json j;
    f >> j;
    return PruningPlan::from_json(j);
}

}  // namespace dcp
