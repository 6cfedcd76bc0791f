#include <cstdlib>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "dcp/checkpoint.hpp"
#include "dcp/distiller.hpp"
#include "dcp/evalkit.hpp"
#include "dcp/latentdir.hpp"
#include "dcp/scorer.hpp"
#include "dcp/surgeon.hpp"
#include "dcp/synthnet.hpp"

namespace {

enum class LogLevel { Error = 0, Info = 1, Debug = 2 };

LogLevel log_level() {
    const char* v = std::getenv("DCP_LOG");
    if (!v) return LogLevel::Info;
    std::string s(v);
    if (s == "error") return LogLevel::Error;
    if (s == "info") return LogLevel::Info;
    if (s == "debug") return LogLevel::Debug;
    return LogLevel::Info;
}

void log_info(const std::string& msg) {
    if (log_level() >= LogLevel::Info) std::cerr << msg << "\n";
}

// progress lines go to stderr; artifacts stay byte-identical across reruns
struct StderrLog : dcp::TrainLogSink {
    void record(int64_t step, const std::map<std::string, double>& values) override {
        if (log_level() < LogLevel::Info) return;
        nlohmann::json j(values);
        j["step"] = step;
        std::cerr << j.dump() << "\n";
    }
};

struct GenOptions {
    int64_t z_dim = 64, w_dim = 64, mapping_layers = 2;
    std::vector<int64_t> resolutions = {4, 8, 16, 32};
    std::vector<int64_t> channels = {64, 64, 32, 16};

    void attach(CLI::App* cmd) {
        cmd->add_option("--z-dim", z_dim, "latent z dimension");
        cmd->add_option("--w-dim", w_dim, "latent w dimension");
        cmd->add_option("--mapping-layers", mapping_layers, "mapping network depth");
        cmd->add_option("--resolutions", resolutions, "block resolutions, e.g. 4 8 16 32");
        cmd->add_option("--channels", channels, "channels per block");
    }
    dcp::GeneratorConfig config() const {
        dcp::GeneratorConfig c;
        c.z_dim = z_dim;
        c.w_dim = w_dim;
        c.mapping_layers = mapping_layers;
        c.resolutions = resolutions;
        c.channels = channels;
        c.validate();
        return c;
    }
};

struct TrainOptions {
    dcp::DistillConfig cfg;

    void attach(CLI::App* cmd) {
        cmd->add_option("--batch-size", cfg.batch_size, "images per step");
        cmd->add_option("--lr", cfg.learning_rate, "Adam learning rate");
        cmd->add_option("--lambda-gan", cfg.lambda_gan, "adversarial loss weight");
        cmd->add_option("--lambda-rgb", cfg.lambda_rgb, "pixel loss weight");
        cmd->add_option("--lambda-ld", cfg.lambda_ld, "relation loss weight");
        cmd->add_option("--r1-gamma", cfg.r1_gamma, "R1 penalty strength");
        cmd->add_option("--r1-interval", cfg.r1_interval, "steps between R1 applications");
    }
};

void write_json(const nlohmann::json& j, const std::string& out) {
    if (out.empty()) {
        std::cout << j.dump(2) << "\n";
        return;
    }
    std::ofstream f(out);
    if (!f) throw dcp::ModelError("cannot open for writing: " + out);
    f << j.dump(2) << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"diversity-aware channel pruning and distillation pipeline"};
    app.require_subcommand(1);
    // config processing only runs on the root app, so --config lives here and
    // subcommands let the flag fall through; keys go in a [subcommand] section
    app.set_config("--config", "", "read option defaults from a TOML file");

    // train-teacher
    auto* tt = app.add_subcommand("train-teacher", "adversarially train a generator");
    tt->fallthrough();
    GenOptions tt_gen;
    tt_gen.attach(tt);
    TrainOptions tt_train;
    tt_train.attach(tt);
    uint64_t tt_seed = 0;
    int64_t tt_steps = 10000;
    std::string tt_out;
    tt->add_option("--seed", tt_seed, "rng seed");
    tt->add_option("--steps", tt_steps, "training steps");
    tt->add_option("--out", tt_out, "output checkpoint path")->required();

    // directions
    auto* dr = app.add_subcommand("directions", "extract latent directions (pca or random)");
    dr->fallthrough();
    std::string dr_teacher, dr_out, dr_mode = "pca";
    uint64_t dr_seed = 0;
    int64_t dr_n_latents = 10000, dr_n_directions = 0;
    dr->add_option("--teacher", dr_teacher, "teacher checkpoint")->required();
    dr->add_option("--out", dr_out, "output direction-set path")->required();
    dr->add_option("--mode", dr_mode, "pca|random")
        ->check(CLI::IsMember({"pca", "random"}));
    dr->add_option("--seed", dr_seed, "rng seed");
    dr->add_option("--n-latents", dr_n_latents, "latents sampled for w statistics");
    dr->add_option("--n-directions", dr_n_directions,
                   "principal components kept (0 = min(32, w_dim))");

    // score
    auto* sc = app.add_subcommand("score", "accumulate per-channel importance scores");
    sc->fallthrough();
    std::string sc_teacher, sc_directions, sc_out;
    dcp::ScoringConfig sc_cfg;
    int64_t sc_workers = 1;
    sc->add_option("--teacher", sc_teacher, "teacher checkpoint")->required();
    sc->add_option("--directions", sc_directions, "direction-set path")->required();
    sc->add_option("--out", sc_out, "output scores JSON")->required();
    sc->add_option("--alpha", sc_cfg.alpha, "perturbation strength");
    sc->add_option("--n-directions", sc_cfg.n_directions, "directions per latent (N)");
    sc->add_option("--n-latents", sc_cfg.n_latents, "latents (M)");
    sc->add_option("--seed", sc_cfg.seed, "rng seed");
    sc->add_option("--workers", sc_workers, "scoring worker threads");

    // prune
    auto* pr = app.add_subcommand("prune", "slice the teacher into a student");
    pr->fallthrough();
    std::string pr_teacher, pr_scores, pr_out, pr_plan, pr_mode = "s_sigma";
    double pr_ratio = 0.7;
    uint64_t pr_seed = 0;
    pr->add_option("--teacher", pr_teacher, "teacher checkpoint")->required();
    pr->add_option("--scores", pr_scores, "scores JSON")->required();
    pr->add_option("--out", pr_out, "output student checkpoint")->required();
    pr->add_option("--plan", pr_plan, "also write the pruning plan JSON here");
    pr->add_option("--ratio", pr_ratio, "fraction of channels to remove");
    pr->add_option("--mode", pr_mode, "channel selection")
        ->check(CLI::IsMember({"s_sigma", "s_mu", "random"}));
    pr->add_option("--seed", pr_seed, "seed for random selection");

    // distill
    auto* di = app.add_subcommand("distill", "train the student against the teacher");
    di->fallthrough();
    std::string di_teacher, di_student, di_directions, di_out;
    TrainOptions di_train;
    di_train.attach(di);
    di->add_option("--teacher", di_teacher, "teacher checkpoint")->required();
    di->add_option("--student", di_student, "pruned student checkpoint")->required();
    di->add_option("--directions", di_directions, "direction-set path")->required();
    di->add_option("--out", di_out, "output trained student checkpoint")->required();
    di->add_option("--steps", di_train.cfg.iterations, "distillation steps");
    di->add_option("--seed", di_train.cfg.seed, "rng seed");
    di->add_option("--alpha", di_train.cfg.alpha, "relation-loss perturbation strength");

    // eval
    auto* ev = app.add_subcommand("eval", "compare generators: size, fidelity, diversity");
    ev->fallthrough();
    std::string ev_teacher, ev_student, ev_out;
    int64_t ev_n = 100;
    uint64_t ev_seed = 0;
    double ev_psi = 1.0;
    ev->add_option("--teacher", ev_teacher, "teacher checkpoint")->required();
    ev->add_option("--student", ev_student, "student checkpoint");
    ev->add_option("--out", ev_out, "output JSON (default: stdout)");
    ev->add_option("--n-latents", ev_n, "samples per metric");
    ev->add_option("--seed", ev_seed, "rng seed");
    ev->add_option("--psi", ev_psi, "truncation strength in (0,1]");

    // inspect
    auto* in = app.add_subcommand("inspect", "dump a checkpoint header");
    std::string in_path;
    in->add_option("path", in_path, "checkpoint file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (tt->parsed()) {
            dcp::GeneratorConfig gcfg = tt_gen.config();
            tt_train.cfg.seed = tt_seed;
            tt_train.cfg.validate();
            dcp::Discriminator disc =
                dcp::init_discriminator(gcfg.final_resolution(), tt_seed ^ 0xD15CULL);
            StderrLog log;
            dcp::GeneratorWeights gen =
                dcp::train_teacher(gcfg, disc, tt_steps, tt_train.cfg, &log);
            dcp::save_checkpoint(gen, tt_out);
            log_info("wrote " + tt_out);
        } else if (dr->parsed()) {
            dcp::GeneratorWeights gen = dcp::load_checkpoint(dr_teacher);
            dcp::WStats stats = dcp::estimate_w_stats(gen, dr_n_latents, dr_seed);
            dcp::DirectionSet ds;
            if (dr_mode == "pca") {
                int64_t v = dr_n_directions > 0 ? dr_n_directions
                                                : std::min<int64_t>(32, gen.config.w_dim);
                ds = dcp::pca_directions(stats.samples, v);
            } else {
                ds = dcp::random_direction_set(stats.w_mean, gen.config.w_dim);
            }
            dcp::save_directions(ds, dr_out);
            log_info("wrote " + dr_out);
        } else if (sc->parsed()) {
            dcp::GeneratorWeights gen = dcp::load_checkpoint(sc_teacher);
            dcp::DirectionSet ds = dcp::load_directions(sc_directions);
            sc_cfg.direction_mode = ds.mode;
            dcp::ScoreReport report = dcp::accumulate_scores(gen, ds, sc_cfg, sc_workers);
            dcp::save_scores(report, sc_out);
            log_info("wrote " + sc_out);
        } else if (pr->parsed()) {
            dcp::GeneratorWeights teacher = dcp::load_checkpoint(pr_teacher);
            dcp::ScoreReport scores = dcp::load_scores(pr_scores);
            dcp::PruningPlan plan = dcp::build_plan(
                scores, pr_ratio, dcp::selection_mode_from_name(pr_mode), pr_seed);
            auto violations = dcp::verify_plan(plan, teacher.config);
            if (!violations.empty())
                throw dcp::ModelError("invalid plan: " + violations.front());
            dcp::GeneratorWeights student = dcp::apply_plan(teacher, plan);
            if (!pr_plan.empty()) dcp::save_plan(plan, pr_plan);
            dcp::save_checkpoint(student, pr_out);
            log_info("wrote " + pr_out);
        } else if (di->parsed()) {
            dcp::GeneratorWeights teacher = dcp::load_checkpoint(di_teacher);
            dcp::GeneratorWeights student = dcp::load_checkpoint(di_student);
            dcp::DirectionSet ds = dcp::load_directions(di_directions);
            di_train.cfg.validate();
            dcp::Discriminator disc = dcp::init_discriminator(
                student.config.final_resolution(), di_train.cfg.seed ^ 0xD15CULL);
            StderrLog log;
            dcp::distill_student(teacher, student, disc, ds, di_train.cfg, &log);
            dcp::save_checkpoint(student, di_out);
            log_info("wrote " + di_out);
        } else if (ev->parsed()) {
            if (!(ev_psi > 0.0 && ev_psi <= 1.0))
                throw dcp::ModelError("psi must lie in (0,1]");
            dcp::GeneratorWeights teacher = dcp::load_checkpoint(ev_teacher);
            nlohmann::json j;
            j["teacher"] = {{"params", dcp::count_params(teacher.config)},
                            {"flops", dcp::count_flops(teacher.config)},
                            {"diversity",
                             dcp::pairwise_diversity(teacher, ev_n, ev_seed, ev_psi).to_json()}};
            if (!ev_student.empty()) {
                dcp::GeneratorWeights student = dcp::load_checkpoint(ev_student);
                j["student"] = {
                    {"params", dcp::count_params(student.config)},
                    {"flops", dcp::count_flops(student.config)},
                    {"diversity",
                     dcp::pairwise_diversity(student, ev_n, ev_seed, ev_psi).to_json()}};
                j["teacher_student_l1"] =
                    dcp::teacher_student_l1(teacher, student, ev_n, ev_seed, ev_psi);
            }
            write_json(j, ev_out);
        } else if (in->parsed()) {
            dcp::Checkpoint ck = dcp::load_container(in_path);
            nlohmann::json j = ck.header;
            nlohmann::json tens;
            for (const auto& [name, t] : ck.tensors)
                tens[name] = t.shape();
            j["tensors"] = tens;
            std::cout << j.dump(2) << "\n";
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
