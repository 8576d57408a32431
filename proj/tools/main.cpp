#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dsc/config.hpp"
#include "dsc/experiment.hpp"
#include "dsc/synthetic.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitConfig = 2;
constexpr int kExitDiverged = 3;

dsc::ExperimentConfig load_config(const std::string& path, std::int64_t seed_override) {
    dsc::ExperimentConfig cfg = dsc::ExperimentConfig::load(path);
    if (seed_override >= 0) {
        cfg.seed = static_cast<std::uint64_t>(seed_override);
        cfg.train.seed = cfg.seed;
        if (cfg.synthetic) cfg.synthetic->seed = cfg.seed;
    }
    return cfg;
}

void sync_resume_checkpoint(const std::string& resume_from, const std::string& out_dir) {
    namespace fs = std::filesystem;
    const fs::path target = fs::path(out_dir) / "checkpoint";
    if (fs::exists(resume_from) && fs::canonical(resume_from) != fs::weakly_canonical(target)) {
        fs::create_directories(target);
        for (const auto& entry : fs::directory_iterator(resume_from))
            fs::copy_file(entry.path(), target / entry.path().filename(),
                          fs::copy_options::overwrite_existing);
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Configurable CNN downscaling of gridded fields"};
    app.require_subcommand(1);

    std::string config_path, out_dir, resume_from;
    std::int64_t seed_override = -1;

    // gen-synthetic
    auto* gen = app.add_subcommand("gen-synthetic", "Write a synthetic desk-scale dataset");
    dsc::SyntheticParams syn;
    std::string gen_out = "synthetic";
    gen->add_option("--out", gen_out, "Output directory");
    gen->add_option("--hr-y", syn.hr_y, "HR grid rows");
    gen->add_option("--hr-x", syn.hr_x, "HR grid columns");
    gen->add_option("--t", syn.t_steps, "Time steps");
    gen->add_option("--scale", syn.scale, "Coarsening factor");
    gen->add_option("--seed", syn.seed, "Random seed");
    gen->add_option("--n-predictors", syn.n_predictors, "Predictor variables");
    gen->add_option("--noise", syn.noise, "Cell noise level");
    gen->add_option("--topo-coupling", syn.topo_coupling, "Topography coupling strength");
    gen->add_option("--mos-perturb", syn.mos_perturb, "LR perturbation (coarse-model surrogate)");
    gen->add_option("--location-bias", syn.location_bias, "Fixed per-cell bias amplitude");

    // train: the full pipeline (prepare -> train -> evaluate -> plots)
    auto* train = app.add_subcommand("train", "Train and evaluate a model from a config file");
    train->add_option("--config", config_path, "Experiment config")->required();
    train->add_option("--out", out_dir, "Output directory")->required();
    train->add_option("--seed", seed_override, "Seed override");
    train->add_option("--resume", resume_from, "Checkpoint directory to resume from");

    auto* evaluate = app.add_subcommand("evaluate", "Evaluate an existing checkpoint");
    evaluate->add_option("--config", config_path, "Experiment config")->required();
    evaluate->add_option("--out", out_dir, "Run directory with checkpoint/")->required();
    evaluate->add_option("--seed", seed_override, "Seed override");

    auto* predict_cmd = app.add_subcommand("predict", "Write holdout predictions");
    predict_cmd->add_option("--config", config_path, "Experiment config")->required();
    predict_cmd->add_option("--out", out_dir, "Run directory with checkpoint/")->required();
    predict_cmd->add_option("--seed", seed_override, "Seed override");

    auto* report = app.add_subcommand("report", "Combined summary table and maps for run dirs");
    std::vector<std::string> run_dirs;
    std::string report_out = "report";
    report->add_option("runs", run_dirs, "Run directories")->required();
    report->add_option("--out", report_out, "Report output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (*gen) {
            const auto files = dsc::gen_synthetic(syn, gen_out);
            std::cout << "wrote " << files.predictand_hr << "\n"
                      << "wrote " << files.predictand_lr << "\n"
                      << "wrote " << files.predictors << "\n"
                      << "wrote " << files.statics << "\n";
            return kExitOk;
        }

        if (*train) {
            dsc::ExperimentConfig cfg = load_config(config_path, seed_override);
            const bool resume = !resume_from.empty();
            if (resume) sync_resume_checkpoint(resume_from, out_dir);
            const dsc::ExperimentResult result = dsc::run_experiment(cfg, out_dir, resume);
            std::cout << "final train loss " << result.train_report.train_loss.back() << "\n";
            std::cout << "holdout RMSE " << result.eval_report.rmse.mean << " (bicubic "
                      << result.baseline_rmse_mean << ")\n";
            std::cout << "outputs in " << result.out_dir << "\n";
            return kExitOk;
        }

        if (*evaluate || *predict_cmd) {
            dsc::ExperimentConfig cfg = load_config(config_path, seed_override);
            dsc::PreparedData data = dsc::prepare_data(cfg, out_dir);
            dsc::Model model = dsc::load_checkpoint(out_dir + "/checkpoint");
            if (*evaluate) {
                const dsc::EvalReport rep = dsc::evaluate_model(model, cfg, data, out_dir);
                std::cout << dsc::summarize({{cfg.label, &rep}});
            } else {
                dsc::evaluate_model(model, cfg, data, out_dir);
                std::cout << "wrote " << out_dir << "/predictions.grd\n";
            }
            return kExitOk;
        }

        if (*report) {
            std::vector<std::pair<std::string, dsc::EvalReport>> loaded;
            for (const auto& dir : run_dirs) {
                std::string label = std::filesystem::path(dir).filename().string();
                std::ifstream lf(dir + "/label.txt");
                if (lf) std::getline(lf, label);
                loaded.emplace_back(label, dsc::EvalReport::load(dir + "/eval"));
            }
            std::vector<std::pair<std::string, const dsc::EvalReport*>> rows;
            std::vector<dsc::PlotRequest> plots;
            for (const auto& [label, rep] : loaded) {
                rows.emplace_back(label, &rep);
                dsc::PlotRequest req;
                req.label = label;
                req.report = &rep;
                plots.push_back(req);
            }
            const std::string table = dsc::summarize(rows);
            std::filesystem::create_directories(report_out);
            std::ofstream out(report_out + "/summary.txt");
            out << table;
            dsc::emit_plots(plots, report_out + "/plots");
            std::cout << table;
            return kExitOk;
        }
    } catch (const dsc::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const dsc::DivergedError& e) {
        std::cerr << "training " << e.what() << "\n";
        return kExitDiverged;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitError;
    }
    return kExitOk;
}
