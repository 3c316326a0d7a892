// slm: experiment harness for the second-order linear model solvers.

#include "slm/diagnostics.hpp"
#include "slm/experiment.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

namespace {

using json = nlohmann::ordered_json;

struct Common {
    std::string config_path;
    std::string preset_name;
    std::string out_dir;
    std::optional<std::uint64_t> seed;
    int threads = 1;
};

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("--config", c.config_path, "experiment config (JSON)")->check(CLI::ExistingFile);
    cmd->add_option("--preset", c.preset_name, "named configuration");
    cmd->add_option("--out", c.out_dir, "output directory");
    cmd->add_option("--seed", c.seed, "root seed");
    cmd->add_option("--threads", c.threads, "worker threads for trials")->check(CLI::PositiveNumber);
}

bool is_figure_preset(const std::string& name) { return name == "figure1-desk" || name == "figure1-paper"; }

slm::ExperimentConfig load_config(const Common& c) {
    if (!c.config_path.empty() && !c.preset_name.empty())
        throw slm::ConfigError("give either --config or --preset, not both", "config");
    slm::ExperimentConfig cfg;
    if (!c.config_path.empty())
        cfg = slm::ExperimentConfig::from_file(c.config_path);
    else if (!c.preset_name.empty())
        cfg = slm::preset(c.preset_name);
    if (c.seed) cfg.seed = *c.seed;
    if (!c.out_dir.empty()) cfg.output_dir = c.out_dir;
    return cfg;
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

void print_table(const slm::VerifierTable& t) {
    std::cout << t.statistic << "  (fitted exponent " << fmt(t.fitted_exponent) << ")\n";
    for (const auto& r : t.rows)
        std::cout << "  n=" << r.n << "  mean_dev=" << fmt(r.mean_dev) << "  stderr=" << fmt(r.stderr_dev) << "\n";
    for (const auto& note : t.notes) std::cerr << "note: " << note << "\n";
}

std::vector<slm::Index> parse_n_list(const std::vector<long long>& raw) {
    std::vector<slm::Index> out;
    for (long long v : raw) out.push_back(static_cast<slm::Index>(v));
    return out;
}

int cmd_run(const Common& c, std::optional<slm::Index> trials, bool no_timing) {
    slm::RunOptions opts;
    opts.threads = c.threads;
    opts.log = &std::cerr;
    if (is_figure_preset(c.preset_name)) {
        if (!c.config_path.empty()) throw slm::ConfigError("figure presets take no config file", "config");
        slm::FigureOptions f;
        f.scale = c.preset_name == "figure1-paper" ? slm::FigureScale::paper : slm::FigureScale::desk;
        f.trials = trials;
        f.seed = c.seed.value_or(1);
        f.output_dir = c.out_dir.empty() ? "out" : c.out_dir;
        f.record_wall_time = !no_timing;
        for (const auto& p : slm::reproduce_figure1(f, opts)) {
            std::cout << "panel " << p.panel << ": " << p.csv_path << "\n";
            for (const auto& n : p.notes) std::cout << "  " << n << "\n";
        }
        return 0;
    }
    slm::ExperimentConfig cfg = load_config(c);
    if (trials) cfg.trials = *trials;
    if (no_timing) cfg.record_wall_time = false;
    const auto result = slm::run_experiment(cfg, opts);
    const json summary = json::parse(result.summary_json);
    for (const char* solver : {"mes", "gd"}) {
        if (!summary.contains(solver)) continue;
        const auto& f = summary[solver]["final"];
        std::cout << solver << ": final eps " << f["eps_mean"] << " +- " << f["eps_std"] << ", test nmse "
                  << f["test_nmse_mean"] << ", mean steps " << f["steps_mean"] << "\n";
    }
    if (summary.contains("gd")) std::cout << "gd best step " << summary["gd"]["best_step"] << "\n";
    std::cout << "wrote " << (std::filesystem::path(cfg.output_dir) / "summary.json").string() << "\n";
    return 0;
}

struct VerifyArgs {
    slm::Index dim = 10;
    slm::Index rank = 2;
    std::vector<long long> n_list{1000, 4000, 16000};
    slm::Index trials = 50;
};

void add_verify(CLI::App* cmd, VerifyArgs& v) {
    cmd->add_option("--dim", v.dim, "dimension (at most 32)");
    cmd->add_option("--rank", v.rank, "rank of the fixed matrix");
    cmd->add_option("--n-list", v.n_list, "batch sizes")->delimiter(',');
    cmd->add_option("--trials", v.trials, "trials per batch size");
}

slm::VerifierOptions verifier_options(const Common& c, const VerifyArgs& v) {
    slm::VerifierOptions o;
    o.n_list = parse_n_list(v.n_list);
    o.trials = v.trials;
    o.seed = c.seed.value_or(1);
    o.threads = c.threads;
    return o;
}

slm::GroundTruth verifier_truth(const slm::ExperimentConfig& cfg, const Common& c, const VerifyArgs& v) {
    if (v.rank < 1 || v.rank > v.dim) throw slm::ConfigError("must lie in [1, dim]", "rank");
    slm::Rng rng = slm::make_rng(c.seed.value_or(1), {slm::tag(slm::Stream::ground_truth)});
    return slm::make_ground_truth(v.dim, v.rank, cfg.diag_free, rng);
}

std::string out_dir_or_default(const Common& c) { return c.out_dir.empty() ? "out" : c.out_dir; }

int cmd_verify_cirip(const Common& c, const VerifyArgs& v) {
    const auto cfg = load_config(c);
    const auto gt = verifier_truth(cfg, c, v);
    const auto table = slm::verify_shifted_cirip(cfg.distribution, gt.dense_matrix(), verifier_options(c, v));
    print_table(table);
    const auto dir = std::filesystem::path(out_dir_or_default(c));
    std::filesystem::create_directories(dir);
    slm::write_verifier_csv(table, (dir / "cirip.csv").string());
    return 0;
}

int cmd_verify_p(const Common& c, const VerifyArgs& v) {
    const auto cfg = load_config(c);
    const auto gt = verifier_truth(cfg, c, v);
    const auto tables =
        slm::verify_p_concentration(cfg.distribution, gt.w_star, gt.dense_matrix(), verifier_options(c, v));
    const auto dir = std::filesystem::path(out_dir_or_default(c));
    std::filesystem::create_directories(dir);
    for (const auto& t : tables) {
        print_table(t);
        slm::write_verifier_csv(t, (dir / (t.statistic + ".csv")).string());
    }
    return 0;
}

json table_rows(const slm::Matrix& m, slm::Index rows) {
    json arr = json::array();
    for (slm::Index j = 0; j < std::min(rows, m.rows()); ++j) arr.push_back({m(j, 0), m(j, 1)});
    return arr;
}

int cmd_moments(const Common& c, std::optional<slm::Index> samples) {
    const auto cfg = load_config(c);
    const slm::Index d = cfg.dimension;
    json out;
    const auto cm = slm::analytic_moments(cfg.distribution);
    out["analytic"] = {{"kappa", cm.kappa}, {"phi", cm.phi}, {"tau", cm.tau}};
    try {
        const auto p = slm::analytic_profile(cfg.distribution, 1, true, cfg.mes.tau_tol);
        out["analytic"]["g"] = {p.g(0, 0), p.g(0, 1)};
        out["analytic"]["h"] = {p.h(0, 0), p.h(0, 1)};
    } catch (const slm::MomentSystemSingular& e) {
        out["analytic"]["singular"] = e.what();
    }

    const slm::Index n = samples.value_or(cfg.resolved_batch_size());
    slm::Rng rng = slm::make_rng(cfg.seed, {slm::tag(slm::Stream::train), 0, 0});
    const slm::Matrix x = slm::sample_batch(cfg.distribution, d, n, rng);
    auto est = slm::estimated_profile(x, false, cfg.mes.tau_tol);
    json e = {{"n", n},
              {"kappa_min", est.kappa.minCoeff()},
              {"kappa_max", est.kappa.maxCoeff()},
              {"phi_min", est.phi.minCoeff()},
              {"phi_max", est.phi.maxCoeff()},
              {"tau_hat", est.tau_hat},
              {"standardized_gap", slm::standardized_pearson_gap(x)}};
    try {
        const auto tables = slm::solve_moment_systems(est.kappa, est.phi, cfg.mes.tau_tol);
        e["g_first_rows"] = table_rows(tables.g, 5);
        e["h_first_rows"] = table_rows(tables.h, 5);
    } catch (const slm::MomentSystemSingular& err) {
        e["singular"] = err.what();
    }
    out["estimated"] = e;
    std::cout << out.dump(2) << "\n";
    return 0;
}

int cmd_bounds(const Common& c, double delta, double constant) {
    auto cfg = load_config(c);
    if (delta > 0.0) cfg.bounds.delta = delta;
    if (constant > 0.0) cfg.bounds.constant = constant;
    slm::Rng rng = slm::make_rng(cfg.seed, {slm::tag(slm::Stream::ground_truth), 0});
    const auto gt = slm::make_ground_truth(cfg.dimension, cfg.rank, cfg.diag_free, rng);
    const auto cm = slm::analytic_moments(cfg.distribution);
    const auto b = slm::theory_bounds(gt, slm::Vector::Constant(cfg.dimension, cm.kappa),
                                      slm::Vector::Constant(cfg.dimension, cm.phi), cfg.rank, cfg.bounds.delta,
                                      cfg.bounds.constant, cfg.mes.mode);
    const json out = {{"p", b.p},
                      {"tau", b.tau},
                      {"delta", b.delta},
                      {"delta_max", b.delta_max},
                      {"sigma_1", b.sigma_1},
                      {"sigma_k", b.sigma_k},
                      {"w_norm_sq", b.w_norm_sq},
                      {"tau_term_used", b.tau_term_used},
                      {"n_recommended", b.n_recommended},
                      {"batch_size_configured", cfg.resolved_batch_size()}};
    std::cout << out.dump(2) << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Second-order linear model learning: MES solver, GD baseline, verifiers"};
    app.require_subcommand(1);

    Common common;
    std::optional<slm::Index> trials;
    bool no_timing = false;
    auto* run = app.add_subcommand("run", "run an experiment from a config file or preset");
    add_common(run, common);
    run->add_option("--trials", trials, "override the number of trials");
    run->add_flag("--no-timing", no_timing, "write wall_ms as 0 for byte-reproducible traces");

    VerifyArgs cirip_args, p_args;
    auto* cirip = app.add_subcommand("verify-cirip", "Monte-Carlo check of the shifted restricted isometry");
    add_common(cirip, common);
    add_verify(cirip, cirip_args);
    auto* vp = app.add_subcommand("verify-p", "Monte-Carlo check of the P statistics' concentration");
    add_common(vp, common);
    add_verify(vp, p_args);

    std::optional<slm::Index> samples;
    auto* moments = app.add_subcommand("moments", "print analytic and estimated moment tables");
    add_common(moments, common);
    moments->add_option("--samples", samples, "instances used for the estimate (default: one batch)");

    double delta = 0.0, constant = 0.0;
    auto* bounds = app.add_subcommand("bounds", "theoretical step-size and sample-size quantities");
    add_common(bounds, common);
    bounds->add_option("--delta", delta, "contraction target (default: delta_max)");
    bounds->add_option("--constant", constant, "constant standing in for the unspecified C");

    auto* presets = app.add_subcommand("presets", "list preset names");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) return cmd_run(common, trials, no_timing);
        if (cirip->parsed()) return cmd_verify_cirip(common, cirip_args);
        if (vp->parsed()) return cmd_verify_p(common, p_args);
        if (moments->parsed()) return cmd_moments(common, samples);
        if (bounds->parsed()) return cmd_bounds(common, delta, constant);
        if (presets->parsed()) {
            for (const auto& n : slm::preset_names()) std::cout << n << "\n";
            return 0;
        }
    } catch (const slm::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const slm::MomentSystemSingular& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
