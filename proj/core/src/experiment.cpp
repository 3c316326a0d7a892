#include "slm/experiment.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

namespace slm {

using json = nlohmann::ordered_json;

std::string_view to_string(SolverChoice s) {
    switch (s) {
        case SolverChoice::mes: return "mes";
        case SolverChoice::gd: return "gd";
        case SolverChoice::both: return "both";
    }
    return "mes";
}

SolverChoice parse_solver_choice(std::string_view name) {
    if (name == "mes") return SolverChoice::mes;
    if (name == "gd") return SolverChoice::gd;
    if (name == "both") return SolverChoice::both;
    throw ConfigError("must be one of mes, gd, both", "solver");
}

// ---------------------------------------------------------------- config

Index ExperimentConfig::resolved_batch_size() const {
    if (mes.batch_size) return *mes.batch_size;
    if (total_samples) return std::max<Index>(1, *total_samples / (mes.max_steps + 2));
    return 4 * rank * dimension;
}

Index ExperimentConfig::resolved_total_samples() const {
    if (total_samples) return *total_samples;
    return (mes.max_steps + 2) * resolved_batch_size();
}

SolverConfig ExperimentConfig::solver_config() const {
    SolverConfig c;
    c.rank = rank;
    c.batch_size = resolved_batch_size();
    c.max_steps = mes.max_steps;
    c.mode = mes.mode;
    c.update_rule = mes.update_rule;
    c.trace_correction = mes.trace_correction;
    c.moment_source = mes.moment_source;
    c.tau_tol = mes.tau_tol;
    c.termination_tol = mes.termination_tol;
    c.init_sweeps = mes.init_sweeps;
    c.seed = seed;
    return c;
}

GdConfig ExperimentConfig::gd_config() const {
    GdConfig c;
    c.step_w = gd.step_w;
    c.step_u = gd.step_u;
    c.step_v = gd.step_v;
    c.rank = rank;
    c.batch_size = resolved_batch_size();
    // GD needs no moment batch, so it gets one extra iteration on the same budget
    c.max_steps = mes.max_steps + 1;
    c.init = gd.init;
    c.init_sweeps = mes.init_sweeps;
    c.diag_free = diag_free;
    c.halve_on_divergence = gd.halve_on_divergence;
    c.max_halvings = gd.max_halvings;
    c.divergence_factor = gd.divergence_factor;
    c.termination_tol = gd.termination_tol;
    c.seed = seed;
    return c;
}

void ExperimentConfig::validate() const {
    if (dimension < 1) throw ConfigError("must be positive", "dimension");
    if (rank < 1 || rank > dimension) throw ConfigError("must lie in [1, dimension]", "rank");
    if (trials < 1) throw ConfigError("must be at least 1", "trials");
    if (test_samples < 0) throw ConfigError("must be nonnegative", "test_samples");
    if (!(noise_level >= 0.0) || !std::isfinite(noise_level)) throw ConfigError("must be nonnegative", "noise_level");
    try {
        distribution.validate();
    } catch (const ConfigError& e) {
        throw ConfigError(e.detail(), "distribution." + e.field());
    }
    if (mes.max_steps < 1) throw ConfigError("must be at least 1", "mes.max_steps");
    if (mes.batch_size && *mes.batch_size < 1) throw ConfigError("must be positive", "mes.batch_size");
    if (total_samples && *total_samples < 1) throw ConfigError("must be positive", "total_samples");
    if (!(mes.tau_tol > 0.0)) throw ConfigError("must be positive", "mes.tau_tol");
    if (!(mes.termination_tol >= 0.0)) throw ConfigError("must be nonnegative", "mes.termination_tol");
    if (mes.init_sweeps < 1) throw ConfigError("must be positive", "mes.init_sweeps");
    const Index n = resolved_batch_size();
    const Index need = (mes.max_steps + 2) * n;
    if (resolved_total_samples() < need)
        throw ConfigError("budget " + std::to_string(resolved_total_samples()) + " is below (max_steps + 2) * batch_size = " +
                              std::to_string(need),
                          "total_samples");
    for (const auto& [name, v] : {std::pair{"gd.step_w", gd.step_w}, {"gd.step_u", gd.step_u}, {"gd.step_v", gd.step_v}})
        if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError("must be a nonnegative number", name);
    if (gd.tune && gd.step_grid.empty()) throw ConfigError("must not be empty when tuning", "gd.step_grid");
    for (double v : gd.step_grid)
        if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError("entries must be nonnegative numbers", "gd.step_grid");
    if (gd.max_halvings < 0) throw ConfigError("must be nonnegative", "gd.max_halvings");
    if (!(gd.divergence_factor > 1.0)) throw ConfigError("must exceed 1", "gd.divergence_factor");
    if (!(gd.termination_tol >= 0.0)) throw ConfigError("must be nonnegative", "gd.termination_tol");
    if (!(bounds.constant > 0.0)) throw ConfigError("must be positive", "bounds.constant");
    if (!std::isfinite(bounds.delta)) throw ConfigError("must be finite", "bounds.delta");
}

namespace {

// Reads one JSON object, tracking which keys were consumed so that unknown
// keys (usually typos) are reported with their full path.
class ObjectReader {
public:
    ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError("expected an object", path_.empty() ? "<root>" : path_);
    }

    std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    const json* find(const std::string& key) {
        seen_.insert(key);
        const auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }

    void get(const std::string& key, double& out) {
        if (const json* v = find(key)) {
            if (!v->is_number()) throw ConfigError("expected a number", field(key));
            out = v->get<double>();
        }
    }

    void get(const std::string& key, bool& out) {
        if (const json* v = find(key)) {
            if (!v->is_boolean()) throw ConfigError("expected true or false", field(key));
            out = v->get<bool>();
        }
    }

    void get(const std::string& key, std::string& out) {
        if (const json* v = find(key)) {
            if (!v->is_string()) throw ConfigError("expected a string", field(key));
            out = v->get<std::string>();
        }
    }

    void get(const std::string& key, Index& out) {
        if (const json* v = find(key)) out = to_index(*v, key);
    }

    void get(const std::string& key, int& out) {
        if (const json* v = find(key)) out = static_cast<int>(to_index(*v, key));
    }

    void get(const std::string& key, std::optional<Index>& out) {
        if (const json* v = find(key)) {
            if (v->is_null())
                out.reset();
            else
                out = to_index(*v, key);
        }
    }

    void get(const std::string& key, std::uint64_t& out) {
        if (const json* v = find(key)) {
            if (v->is_number_unsigned())
                out = v->get<std::uint64_t>();
            else if (v->is_number_integer() && v->get<long long>() >= 0)
                out = static_cast<std::uint64_t>(v->get<long long>());
            else
                throw ConfigError("expected a nonnegative integer", field(key));
        }
    }

    void get(const std::string& key, std::vector<double>& out) {
        if (const json* v = find(key)) {
            if (!v->is_array()) throw ConfigError("expected an array of numbers", field(key));
            out.clear();
            for (const auto& e : *v) {
                if (!e.is_number()) throw ConfigError("expected an array of numbers", field(key));
                out.push_back(e.get<double>());
            }
        }
    }

    template <typename Enum, typename Parse>
    void get_enum(const std::string& key, Enum& out, Parse parse) {
        std::string s;
        get(key, s);
        if (s.empty()) return;
        try {
            out = parse(s);
        } catch (const ConfigError& e) {
            throw ConfigError(e.detail(), field(key));
        }
    }

    void finish() const {
        for (const auto& item : j_.items())
            if (!seen_.count(item.key())) throw ConfigError("unknown key", field(item.key()));
    }

private:
    Index to_index(const json& v, const std::string& key) const {
        if (v.is_number_integer()) return static_cast<Index>(v.get<long long>());
        if (v.is_number_float()) {
            const double d = v.get<double>();
            if (std::floor(d) == d && std::abs(d) < 9e15) return static_cast<Index>(d);
        }
        throw ConfigError("expected an integer", field(key));
    }

    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

json optional_index(const std::optional<Index>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

ExperimentConfig ExperimentConfig::from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("invalid JSON: ") + e.what(), "<root>");
    }
    ExperimentConfig c;
    ObjectReader r(j, "");
    r.get("name", c.name);
    r.get("dimension", c.dimension);
    r.get("rank", c.rank);
    r.get_enum("solver", c.solver, parse_solver_choice);
    if (const json* dist = r.find("distribution")) {
        ObjectReader dr(*dist, "distribution");
        dr.get_enum("family", c.distribution.family, parse_family);
        dr.get("a", c.distribution.truncation);
        dr.get("q", c.distribution.success_prob);
        dr.get("standardize", c.distribution.standardize);
        dr.finish();
    }
    r.get("diag_free", c.diag_free);
    r.get("noise_level", c.noise_level);
    r.get("total_samples", c.total_samples);
    r.get("test_samples", c.test_samples);
    r.get("trials", c.trials);
    r.get("seed", c.seed);
    if (const json* mes = r.find("mes")) {
        ObjectReader mr(*mes, "mes");
        mr.get("batch_size", c.mes.batch_size);
        mr.get("max_steps", c.mes.max_steps);
        mr.get_enum("mode", c.mes.mode, parse_solver_mode);
        mr.get_enum("update_rule", c.mes.update_rule, parse_update_rule);
        mr.get("trace_correction", c.mes.trace_correction);
        mr.get_enum("moment_source", c.mes.moment_source, parse_moment_source);
        mr.get("tau_tol", c.mes.tau_tol);
        mr.get("termination_tol", c.mes.termination_tol);
        mr.get("init_sweeps", c.mes.init_sweeps);
        mr.finish();
    }
    if (const json* gd = r.find("gd")) {
        ObjectReader gr(*gd, "gd");
        double step = std::numeric_limits<double>::quiet_NaN();
        gr.get("step", step);
        if (!std::isnan(step)) c.gd.step_w = c.gd.step_u = c.gd.step_v = step;
        gr.get("step_w", c.gd.step_w);
        gr.get("step_u", c.gd.step_u);
        gr.get("step_v", c.gd.step_v);
        gr.get("tune", c.gd.tune);
        gr.get("step_grid", c.gd.step_grid);
        gr.get_enum("init", c.gd.init, parse_gd_init);
        gr.get("halve_on_divergence", c.gd.halve_on_divergence);
        gr.get("max_halvings", c.gd.max_halvings);
        gr.get("divergence_factor", c.gd.divergence_factor);
        gr.get("termination_tol", c.gd.termination_tol);
        gr.finish();
    }
    if (const json* b = r.find("bounds")) {
        ObjectReader br(*b, "bounds");
        br.get("delta", c.bounds.delta);
        br.get("constant", c.bounds.constant);
        br.finish();
    }
    r.get("record_wall_time", c.record_wall_time);
    r.get("output_dir", c.output_dir);
    r.finish();
    c.validate();
    return c;
}

ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file '" + path + "'", "<root>");
    std::ostringstream ss;
    ss << in.rdbuf();
    return from_json(ss.str());
}

namespace {

json config_json(const ExperimentConfig& c) {
    json j;
    j["name"] = c.name;
    j["dimension"] = c.dimension;
    j["rank"] = c.rank;
    j["solver"] = std::string(to_string(c.solver));
    j["distribution"] = {{"family", std::string(to_string(c.distribution.family))},
                         {"a", c.distribution.truncation},
                         {"q", c.distribution.success_prob},
                         {"standardize", c.distribution.standardize}};
    j["diag_free"] = c.diag_free;
    j["noise_level"] = c.noise_level;
    j["total_samples"] = optional_index(c.total_samples);
    j["test_samples"] = c.test_samples;
    j["trials"] = c.trials;
    j["seed"] = c.seed;
    j["mes"] = {{"batch_size", optional_index(c.mes.batch_size)},
                {"max_steps", c.mes.max_steps},
                {"mode", std::string(to_string(c.mes.mode))},
                {"update_rule", std::string(to_string(c.mes.update_rule))},
                {"trace_correction", c.mes.trace_correction},
                {"moment_source", std::string(to_string(c.mes.moment_source))},
                {"tau_tol", c.mes.tau_tol},
                {"termination_tol", c.mes.termination_tol},
                {"init_sweeps", c.mes.init_sweeps}};
    j["gd"] = {{"step_w", c.gd.step_w},
               {"step_u", c.gd.step_u},
               {"step_v", c.gd.step_v},
               {"tune", c.gd.tune},
               {"step_grid", c.gd.step_grid},
               {"init", std::string(to_string(c.gd.init))},
               {"halve_on_divergence", c.gd.halve_on_divergence},
               {"max_halvings", c.gd.max_halvings},
               {"divergence_factor", c.gd.divergence_factor},
               {"termination_tol", c.gd.termination_tol}};
    j["bounds"] = {{"delta", c.bounds.delta}, {"constant", c.bounds.constant}};
    j["record_wall_time"] = c.record_wall_time;
    j["output_dir"] = c.output_dir;
    return j;
}

}  // namespace

std::string ExperimentConfig::to_json() const { return config_json(*this).dump(2); }

// ---------------------------------------------------------------- presets

std::vector<std::string> preset_names() {
    return {"gaussian-desk",  "truncated-desk", "truncated-noisy-desk", "bernoulli-desk",
            "bernoulli-sparse-desk", "figure1-desk", "figure1-paper"};
}

ExperimentConfig preset(std::string_view name) {
    ExperimentConfig c;
    c.dimension = 200;
    c.rank = 5;
    c.name = std::string(name);
    if (name == "gaussian-desk") {
        c.distribution = DistributionSpec::gaussian();
    } else if (name == "truncated-desk" || name == "truncated-noisy-desk") {
        c.distribution = DistributionSpec::truncated(0.0);
        c.solver = SolverChoice::both;
        if (name == "truncated-noisy-desk") c.noise_level = 1.0;
    } else if (name == "bernoulli-desk" || name == "bernoulli-sparse-desk") {
        const bool sparse = name == "bernoulli-sparse-desk";
        c.distribution = DistributionSpec::bernoulli(sparse ? 0.01 : 0.1);
        c.diag_free = true;
        c.mes.mode = SolverMode::non_mip;
        c.solver = SolverChoice::both;
        // at q = 0.01 a coordinate is active in 1% of instances; 4kd per batch is too few
        if (sparse) c.mes.batch_size = 16 * c.rank * c.dimension;
    } else {
        throw ConfigError("unknown preset '" + std::string(name) + "'", "preset");
    }
    return c;
}

// ---------------------------------------------------------------- running

std::vector<StepAggregate> aggregate_traces(const std::vector<std::vector<TraceRecord>>& traces) {
    std::vector<StepAggregate> out;
    if (traces.empty()) return out;
    Index last = 0;
    for (const auto& t : traces)
        if (!t.empty()) last = std::max(last, t.back().step);
    // index by step, carrying a stopped run's final record forward
    for (Index s = 0; s <= last; ++s) {
        StepAggregate a;
        a.step = s;
        double se = 0, se2 = 0, sb = 0, sg = 0, sn = 0, sn2 = 0;
        double count = 0;
        for (const auto& t : traces) {
            if (t.empty()) continue;
            const TraceRecord* rec = &t.front();
            for (const auto& r : t) {
                if (r.step > s) break;
                rec = &r;
            }
            se += rec->eps;
            se2 += rec->eps * rec->eps;
            sb += rec->beta;
            sg += rec->gamma;
            sn += rec->test_nmse;
            sn2 += rec->test_nmse * rec->test_nmse;
            count += 1;
        }
        if (count == 0) continue;
        a.eps_mean = se / count;
        a.beta_mean = sb / count;
        a.gamma_mean = sg / count;
        a.nmse_mean = sn / count;
        const auto sd = [&](double sum, double sum2) {
            if (count < 2 || !std::isfinite(sum2)) return count < 2 ? 0.0 : std::numeric_limits<double>::quiet_NaN();
            return std::sqrt(std::max(0.0, (sum2 - sum * sum / count) / (count - 1.0)));
        };
        a.eps_std = sd(se, se2);
        a.nmse_std = sd(sn, sn2);
        out.push_back(a);
    }
    return out;
}

namespace {

std::string format_number(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

std::string trace_csv(const std::vector<std::vector<TraceRecord>>& traces) {
    std::string out = "trial,step,beta,gamma,eps,test_nmse,train_residual,wall_ms,flags\n";
    for (std::size_t t = 0; t < traces.size(); ++t) {
        for (const auto& r : traces[t]) {
            out += std::to_string(t);
            out += ',';
            out += std::to_string(r.step);
            for (double v : {r.beta, r.gamma, r.eps, r.test_nmse, r.train_residual, r.wall_ms}) {
                out += ',';
                out += format_number(v);
            }
            out += ',';
            out += r.flags;
            out += '\n';
        }
    }
    return out;
}

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json steps_json(const std::vector<StepAggregate>& agg) {
    json arr = json::array();
    for (const auto& a : agg)
        arr.push_back({{"step", a.step},
                       {"eps_mean", number_or_null(a.eps_mean)},
                       {"eps_std", number_or_null(a.eps_std)},
                       {"beta_mean", number_or_null(a.beta_mean)},
                       {"gamma_mean", number_or_null(a.gamma_mean)},
                       {"test_nmse_mean", number_or_null(a.nmse_mean)},
                       {"test_nmse_std", number_or_null(a.nmse_std)}});
    return arr;
}

json solver_json(const std::vector<std::vector<TraceRecord>>& traces, const std::vector<Index>& consumed) {
    const auto agg = aggregate_traces(traces);
    json j;
    j["per_step"] = steps_json(agg);
    json final_block = json::object();
    if (!agg.empty()) {
        const auto& f = agg.back();
        double steps = 0;
        for (const auto& t : traces) steps += t.empty() ? 0.0 : static_cast<double>(t.back().step);
        final_block = {{"eps_mean", number_or_null(f.eps_mean)},
                       {"eps_std", number_or_null(f.eps_std)},
                       {"beta_mean", number_or_null(f.beta_mean)},
                       {"gamma_mean", number_or_null(f.gamma_mean)},
                       {"test_nmse_mean", number_or_null(f.nmse_mean)},
                       {"test_nmse_std", number_or_null(f.nmse_std)},
                       {"steps_mean", steps / static_cast<double>(traces.size())}};
    }
    j["final"] = final_block;
    std::map<std::string, Index> flags;
    for (const auto& t : traces)
        for (const auto& r : t) {
            std::string_view rest = r.flags;
            while (!rest.empty()) {
                const auto cut = rest.find(';');
                const auto tok = rest.substr(0, cut);
                if (!tok.empty() && tok != "init") ++flags[std::string(tok)];
                if (cut == std::string_view::npos) break;
                rest.remove_prefix(cut + 1);
            }
        }
    j["flags"] = flags;
    j["samples_consumed"] = consumed;
    return j;
}

double nmse(const Vector& pred, const Vector& truth) {
    const double denom = truth.squaredNorm();
    return denom > 0.0 ? (pred - truth).squaredNorm() / denom : (pred - truth).squaredNorm();
}

}  // namespace

void write_file_atomic(const std::string& path, const std::string& content) {
    const std::filesystem::path target(path);
    if (target.has_parent_path()) std::filesystem::create_directories(target.parent_path());
    const std::filesystem::path tmp = target.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot open " + tmp.string() + " for writing");
        out << content;
        out.flush();
        if (!out) throw Error("failed writing " + tmp.string());
    }
    std::filesystem::rename(tmp, target);
}

void write_trace_csv(const std::string& path, const std::vector<std::vector<TraceRecord>>& traces) {
    write_file_atomic(path, trace_csv(traces));
}

ExperimentResult run_experiment(const ExperimentConfig& config, const RunOptions& options) {
    config.validate();
    const Index d = config.dimension;
    const Index budget = config.resolved_total_samples();
    const bool run_mes_solver = config.solver != SolverChoice::gd;
    const bool run_gd_solver = config.solver != SolverChoice::mes;
    const std::vector<double> grid =
        config.gd.tune ? config.gd.step_grid : std::vector<double>{config.gd.step_v};
    const std::size_t trials = static_cast<std::size_t>(config.trials);

    ExperimentResult result;
    result.config = config;
    result.trials.resize(trials);
    // gd_runs[g][t]: trace of grid value g on trial t
    std::vector<std::vector<GdRun>> gd_runs(grid.size(), std::vector<GdRun>(trials));

    std::optional<MomentProfile> analytic;
    if (config.mes.moment_source == MomentSource::analytic && run_mes_solver)
        analytic = analytic_profile(config.distribution, d, config.mes.mode == SolverMode::mip, config.mes.tau_tol);

    if (options.log)
        *options.log << "[" << config.name << "] d=" << d << " k=" << config.rank
                     << " batch=" << config.resolved_batch_size() << " budget=" << budget << " trials=" << config.trials
                     << "\n";

    parallel_for(config.trials, options.threads, [&](Index t) {
        const auto trial = static_cast<std::uint64_t>(t);
        Rng gt_rng = make_rng(config.seed, {tag(Stream::ground_truth), trial});
        const GroundTruth gt = make_ground_truth(d, config.rank, config.diag_free, gt_rng, config.noise_level);

        MiniBatch test;
        if (config.test_samples > 0) {
            Rng test_rng = make_rng(config.seed, {tag(Stream::test), trial});
            test.x = sample_batch(config.distribution, d, config.test_samples, test_rng);
            test.y = label_batch(gt, test.x, test_rng);
        }
        TrialOutcome& out = result.trials[static_cast<std::size_t>(t)];
        out.test_label_power = test.y.size() ? test.y.squaredNorm() / static_cast<double>(test.y.size()) : 0.0;

        const StepObserver observer = [&](const ModelState& s, TraceRecord& rec) {
            if (test.y.size()) rec.test_nmse = nmse(s.predict(test.x), test.y);
            if (!config.record_wall_time) rec.wall_ms = 0.0;
        };
        const std::uint64_t run_seed = derive_seed(config.seed, {trial});

        if (run_mes_solver) {
            SyntheticSource source(config.distribution, gt, config.seed, trial, budget);
            SolverConfig sc = config.solver_config();
            sc.seed = run_seed;
            MesRun run = run_mes(source, sc, &gt, analytic, observer);
            out.mes = std::move(run.trace);
            out.mes_samples = run.samples_consumed;
            out.tau_hat = run.profile.tau_hat;
        }
        if (run_gd_solver) {
            for (std::size_t g = 0; g < grid.size(); ++g) {
                SyntheticSource source(config.distribution, gt, config.seed, trial, budget);
                GdConfig gc = config.gd_config();
                gc.seed = run_seed;
                if (config.gd.tune) {
                    gc.set_step(grid[g]);
                    gc.halve_on_divergence = false;
                }
                gd_runs[g][static_cast<std::size_t>(t)] = run_gd(source, gc, &gt, observer);
            }
        }
    });

    std::size_t best = 0;
    if (run_gd_solver) {
        double best_err = std::numeric_limits<double>::infinity();
        for (std::size_t g = 0; g < grid.size(); ++g) {
            GridSummary s;
            s.step = grid[g];
            double sum = 0;
            for (const auto& run : gd_runs[g]) {
                const double e = run.trace.back().eps;
                if (run.diverged) ++s.diverged_trials;
                sum += (run.diverged || !std::isfinite(e)) ? std::numeric_limits<double>::infinity() : e;
            }
            s.mean_final_error = sum / static_cast<double>(trials);
            if (g == 0 || s.mean_final_error < best_err) {
                best = g;
                best_err = s.mean_final_error;
            }
            result.gd_grid.push_back(s);
        }
        result.gd_best_step = grid[best];
        for (std::size_t t = 0; t < trials; ++t) {
            result.trials[t].gd = std::move(gd_runs[best][t].trace);
            result.trials[t].gd_samples = gd_runs[best][t].samples_consumed;
        }
    }

    // summary
    json s;
    s["name"] = config.name;
    s["config"] = config_json(config);
    double label_power = 0;
    for (const auto& t : result.trials) label_power += t.test_label_power;
    label_power /= static_cast<double>(trials);
    s["samples"] = {{"budget_per_trial", budget},
                    {"batch_size", config.resolved_batch_size()},
                    {"test_per_trial", config.test_samples}};
    s["noise_floor_nmse"] = label_power > 0.0 ? json(config.noise_level * config.noise_level / label_power) : json(nullptr);

    std::vector<std::vector<TraceRecord>> mes_traces, gd_traces;
    std::vector<Index> mes_consumed, gd_consumed;
    double tau_sum = 0;
    for (const auto& t : result.trials) {
        mes_traces.push_back(t.mes);
        gd_traces.push_back(t.gd);
        mes_consumed.push_back(t.mes_samples);
        gd_consumed.push_back(t.gd_samples);
        tau_sum += t.tau_hat;
    }
    if (run_mes_solver) {
        s["mes"] = solver_json(mes_traces, mes_consumed);
        s["mes"]["tau_hat_mean"] = tau_sum / static_cast<double>(trials);
    }
    if (run_gd_solver) {
        s["gd"] = solver_json(gd_traces, gd_consumed);
        s["gd"]["best_step"] = result.gd_best_step;
        json g = json::array();
        for (const auto& p : result.gd_grid)
            g.push_back({{"step", p.step},
                         {"mean_final_eps", number_or_null(p.mean_final_error)},
                         {"diverged_trials", p.diverged_trials}});
        s["gd"]["grid"] = g;
    }

    try {
        Rng gt_rng = make_rng(config.seed, {tag(Stream::ground_truth), 0});
        const GroundTruth gt0 = make_ground_truth(d, config.rank, config.diag_free, gt_rng, config.noise_level);
        const CoordinateMoments cm = analytic_moments(config.distribution);
        const TheoryBounds b = theory_bounds(gt0, Vector::Constant(d, cm.kappa), Vector::Constant(d, cm.phi),
                                             config.rank, config.bounds.delta, config.bounds.constant, config.mes.mode);
        s["theory_bounds"] = {{"trial", 0},
                              {"p", b.p},
                              {"tau", b.tau},
                              {"delta", b.delta},
                              {"delta_max", b.delta_max},
                              {"sigma_1", b.sigma_1},
                              {"sigma_k", b.sigma_k},
                              {"w_norm_sq", b.w_norm_sq},
                              {"tau_term_used", b.tau_term_used},
                              {"n_recommended", b.n_recommended}};
    } catch (const Error& e) {
        s["theory_bounds"] = {{"error", e.what()}};
    }
    result.summary_json = s.dump(2) + "\n";

    if (options.write_files) {
        const std::filesystem::path dir(config.output_dir);
        std::filesystem::create_directories(dir);
        if (config.solver == SolverChoice::gd) {
            write_trace_csv((dir / "trace.csv").string(), gd_traces);
        } else {
            write_trace_csv((dir / "trace.csv").string(), mes_traces);
            if (run_gd_solver) write_trace_csv((dir / "trace_gd.csv").string(), gd_traces);
        }
        write_file_atomic((dir / "summary.json").string(), result.summary_json);
    }
    return result;
}

// ---------------------------------------------------------------- figure 1

namespace {

struct Series {
    std::string name;
    std::vector<StepAggregate> steps;
};

std::string panel_csv(const std::vector<Series>& series) {
    std::string out = "series,step,eps_mean,eps_std,test_nmse_mean,test_nmse_std\n";
    for (const auto& s : series)
        for (const auto& a : s.steps) {
            out += s.name + ',' + std::to_string(a.step);
            for (double v : {a.eps_mean, a.eps_std, a.nmse_mean, a.nmse_std}) out += ',' + format_number(v);
            out += '\n';
        }
    return out;
}

std::vector<std::vector<TraceRecord>> mes_of(const ExperimentResult& r) {
    std::vector<std::vector<TraceRecord>> v;
    for (const auto& t : r.trials) v.push_back(t.mes);
    return v;
}

std::vector<std::vector<TraceRecord>> gd_of(const ExperimentResult& r) {
    std::vector<std::vector<TraceRecord>> v;
    for (const auto& t : r.trials) v.push_back(t.gd);
    return v;
}

std::string level_name(double a) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "a=%g", a);
    return buf;
}

}  // namespace

std::vector<PanelResult> reproduce_figure1(const FigureOptions& figure, const RunOptions& options) {
    const bool paper = figure.scale == FigureScale::paper;
    const std::filesystem::path root(figure.output_dir);

    ExperimentConfig base;
    base.dimension = figure.dimension.value_or(paper ? 1000 : 200);
    base.rank = figure.rank.value_or(paper ? 10 : 5);
    base.validate();
    base.trials = figure.trials.value_or(10);
    base.seed = figure.seed;
    base.record_wall_time = figure.record_wall_time;
    base.solver = SolverChoice::both;

    const std::vector<double> levels{0.0, 1e-3, 0.01, 0.1};
    // sweep[level][noise]
    std::vector<std::vector<ExperimentResult>> sweep(levels.size());
    for (std::size_t i = 0; i < levels.size(); ++i) {
        for (double noise : {0.0, 1.0}) {
            ExperimentConfig c = base;
            c.distribution = DistributionSpec::truncated(levels[i]);
            c.noise_level = noise;
            c.name = "truncated_" + level_name(levels[i]) + "_xi=" + format_number(noise);
            c.output_dir = (root / c.name).string();
            sweep[i].push_back(run_experiment(c, options));
        }
    }

    std::vector<PanelResult> panels;
    const auto emit = [&](const std::string& id, const std::vector<Series>& series, std::vector<std::string> notes) {
        PanelResult p;
        p.panel = id;
        p.csv_path = (root / ("figure1_panel_" + id + ".csv")).string();
        p.notes = std::move(notes);
        if (options.write_files) write_file_atomic(p.csv_path, panel_csv(series));
        panels.push_back(std::move(p));
    };

    for (int noise = 0; noise < 2; ++noise) {
        const auto& r = sweep[0][static_cast<std::size_t>(noise)];
        emit(noise == 0 ? "a" : "b",
             {{"mes", aggregate_traces(mes_of(r))}, {"gd", aggregate_traces(gd_of(r))}},
             {"gd best step " + format_number(r.gd_best_step)});
    }

    for (double q : {0.01, 0.1}) {
        ExperimentConfig c = base;
        c.distribution = DistributionSpec::bernoulli(q);
        c.diag_free = true;
        c.mes.mode = SolverMode::non_mip;
        if (q < 0.05) c.mes.batch_size = 16 * c.rank * c.dimension;
        c.name = "bernoulli_q=" + format_number(q);
        c.output_dir = (root / c.name).string();

        std::vector<std::string> notes;
        // the mip path must refuse this distribution before any iteration
        try {
            Rng rng = make_rng(c.seed, {tag(Stream::train), 0, 0});
            const Matrix x = sample_batch(c.distribution, c.dimension, c.resolved_batch_size(), rng);
            estimated_profile(x, true, c.mes.tau_tol);
            notes.push_back("mip path did not refuse");
        } catch (const MomentSystemSingular& e) {
            notes.push_back(std::string("mip path refused: ") + e.what());
        }
        const ExperimentResult r = run_experiment(c, options);
        notes.push_back("gd best step " + format_number(r.gd_best_step));
        emit(q < 0.05 ? "c" : "d", {{"mes", aggregate_traces(mes_of(r))}, {"gd", aggregate_traces(gd_of(r))}},
             std::move(notes));
    }

    const char* ids[2][2] = {{"e", "f"}, {"g", "h"}};
    for (int noise = 0; noise < 2; ++noise) {
        std::vector<Series> mes_series, gd_series;
        for (std::size_t i = 0; i < levels.size(); ++i) {
            const auto& r = sweep[i][static_cast<std::size_t>(noise)];
            mes_series.push_back({"mes_" + level_name(levels[i]), aggregate_traces(mes_of(r))});
            gd_series.push_back({"gd_" + level_name(levels[i]), aggregate_traces(gd_of(r))});
        }
        emit(ids[noise][0], mes_series, {});
        emit(ids[noise][1], gd_series, {});
    }
    std::sort(panels.begin(), panels.end(), [](const auto& a, const auto& b) { return a.panel < b.panel; });
    return panels;
}

}  // namespace slm
