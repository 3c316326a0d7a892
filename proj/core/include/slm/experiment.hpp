#pragma once

#include "slm/diagnostics.hpp"
#include "slm/distributions.hpp"
#include "slm/gd_baseline.hpp"
#include "slm/mes_solver.hpp"

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace slm {

enum class SolverChoice { mes, gd, both };

std::string_view to_string(SolverChoice s);
SolverChoice parse_solver_choice(std::string_view name);

struct MesSettings {
    std::optional<Index> batch_size;  // default 4 k d
    Index max_steps = 50;
    SolverMode mode = SolverMode::mip;
    UpdateRule update_rule = UpdateRule::power;
    bool trace_correction = true;
    MomentSource moment_source = MomentSource::estimated;
    double tau_tol = kDefaultTauTol;
    double termination_tol = 1e-8;
    int init_sweeps = 30;
};

struct GdSettings {
    double step_w = 0.5;
    double step_u = 0.5;
    double step_v = 0.5;
    /// When true each grid value is run on every trial and the value with
    /// the smallest mean final error is reported.
    bool tune = true;
    std::vector<double> step_grid{1.0, 0.5, 0.1, 0.01};
    GdInit init = GdInit::spectral;
    bool halve_on_divergence = true;
    int max_halvings = 8;
    double divergence_factor = 1e6;
    double termination_tol = 1e-8;
};

struct BoundsSettings {
    double delta = 0.0;  // <= 0 means delta_max
    double constant = 1.0;
};

/// Everything one experiment needs. Every field has a default; JSON input
/// may override any subset (unknown keys are rejected).
struct ExperimentConfig {
    std::string name = "experiment";
    Index dimension = 200;
    Index rank = 5;
    SolverChoice solver = SolverChoice::mes;
    DistributionSpec distribution;
    bool diag_free = false;
    double noise_level = 0.0;
    /// Training instances per trial. Default (max_steps + 2) batches.
    std::optional<Index> total_samples;
    Index test_samples = 10000;
    Index trials = 10;
    std::uint64_t seed = 1;
    MesSettings mes;
    GdSettings gd;
    BoundsSettings bounds;
    /// When false wall_ms is written as 0, making traces byte-reproducible.
    bool record_wall_time = true;
    std::string output_dir = "out";

    /// Batch size after defaults: explicit value, else total / (T + 2) when
    /// a budget is given, else 4 k d.
    Index resolved_batch_size() const;
    Index resolved_total_samples() const;
    SolverConfig solver_config() const;
    GdConfig gd_config() const;

    /// Throws ConfigError naming the offending field path.
    void validate() const;

    static ExperimentConfig from_json(const std::string& text);
    static ExperimentConfig from_file(const std::string& path);
    std::string to_json() const;
};

/// Named configurations: gaussian-desk, truncated-desk, truncated-noisy-desk,
/// bernoulli-desk, bernoulli-sparse-desk. figure1-desk and figure1-paper are
/// handled by reproduce_figure1.
ExperimentConfig preset(std::string_view name);
std::vector<std::string> preset_names();

struct TrialOutcome {
    std::vector<TraceRecord> mes;
    std::vector<TraceRecord> gd;
    Index mes_samples = 0;
    Index gd_samples = 0;
    double test_label_power = 0.0;  // mean y^2 on the test set
    double tau_hat = 0.0;
};

struct GridSummary {
    double step = 0.0;
    double mean_final_error = 0.0;
    Index diverged_trials = 0;
};

struct ExperimentResult {
    ExperimentConfig config;
    std::vector<TrialOutcome> trials;
    std::vector<GridSummary> gd_grid;
    double gd_best_step = 0.0;
    std::string summary_json;
};

struct RunOptions {
    int threads = 1;
    /// Write trace.csv / summary.json into config.output_dir.
    bool write_files = true;
    std::ostream* log = nullptr;
};

ExperimentResult run_experiment(const ExperimentConfig& config, const RunOptions& options = {});

/// Per-step mean and standard deviation over trials; runs that stopped early
/// carry their last value forward.
struct StepAggregate {
    Index step = 0;
    double eps_mean = 0.0, eps_std = 0.0;
    double beta_mean = 0.0, gamma_mean = 0.0;
    double nmse_mean = 0.0, nmse_std = 0.0;
};
std::vector<StepAggregate> aggregate_traces(const std::vector<std::vector<TraceRecord>>& traces);

void write_trace_csv(const std::string& path, const std::vector<std::vector<TraceRecord>>& traces);

enum class FigureScale { desk, paper };

struct FigureOptions {
    FigureScale scale = FigureScale::desk;
    std::optional<Index> trials;
    /// Overrides of the scale's dimension and rank (smoke runs).
    std::optional<Index> dimension;
    std::optional<Index> rank;
    std::uint64_t seed = 1;
    std::string output_dir = "out";
    bool record_wall_time = true;
};

struct PanelResult {
    std::string panel;
    std::string csv_path;
    std::vector<std::string> notes;
};

/// The eight convergence panels: (a)/(b) truncated Gaussian a = 0 with noise
/// 0/1, (c)/(d) Bernoulli q = 0.01/0.1 on the non_mip path, (e)-(h) the
/// truncation sweep for MES and GD at noise 0 and 1. One CSV per panel.
std::vector<PanelResult> reproduce_figure1(const FigureOptions& figure, const RunOptions& options = {});

/// Writes `content` to `path` through a temporary file and a rename.
void write_file_atomic(const std::string& path, const std::string& content);

}  // namespace slm
