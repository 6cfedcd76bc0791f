#pragma once

#include <map>
#include <string>

#include <json.hpp>

#include "dcp/scorer.hpp"
#include "dcp/synthnet.hpp"

namespace dcp {

enum class SelectionMode { S_SIGMA, S_MU, RANDOM };

std::string selection_mode_name(SelectionMode m);
SelectionMode selection_mode_from_name(const std::string& s);

/// Kept channel indices per synthesis feature map (block output), keyed
/// "block.{r}". The learned constant shares the first feature map's kept set.
struct PruningPlan {
    double p_r = 0.7;
    SelectionMode mode = SelectionMode::S_SIGMA;
    uint64_t seed = 0;
    std::map<std::string, std::vector<int64_t>> kept;

    nlohmann::json to_json() const;
    static PruningPlan from_json(const nlohmann::json& j);
};

/// Keeps the top ceil((1-p_r)*C) channels per feature map by the selected
/// score; ties keep the lower index. RANDOM keeps a seeded uniform subset of
/// the same size.
PruningPlan build_plan(const ScoreReport& report, double p_r, SelectionMode mode, uint64_t seed);

/// Slices the teacher into a shape-consistent student. The mapping network
/// and all kept-channel parameters are preserved bit-exactly.
GeneratorWeights apply_plan(const GeneratorWeights& teacher, const PruningPlan& plan);

std::vector<std::string> verify_plan(const PruningPlan& plan, const GeneratorConfig& config);

void save_plan(const PruningPlan& plan, const std::string& path);
PruningPlan load_plan(const std::string& path);

}  // namespace dcp
