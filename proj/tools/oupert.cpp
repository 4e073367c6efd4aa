// oupert command line: structure reports, single solves, experiments and CSV rendering.
// Exit codes: 0 all checks pass, 1 a check failed, 2 configuration error.

#include "oupert/harness/experiments.hpp"

#include "CLI11.hpp"

#include <cstdio>
#include <iomanip>
#include <iostream>
#include <optional>

using namespace oupert;
namespace hd = oupert::harness::detail;
using namespace oupert::harness;

namespace {

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> threads;
    std::string out;
};

ExperimentConfig load(const Common& c) {
    if (c.config.empty()) throw ConfigError("config: --config PATH is required");
    ExperimentConfig cfg = load_config(c.config);
    if (c.seed) cfg.mc.seed = *c.seed;
    if (c.threads) {
        if (*c.threads == 0) throw ConfigError("--threads: must be at least 1");
        cfg.mc.threads = *c.threads;
    }
    return cfg;
}

void print_rows(const std::vector<ReportRow>& rows) {
    for (const auto& r : rows) {
        std::cout << std::left << std::setw(16) << r.experiment << ' ' << std::setprecision(10) << std::setw(18)
                  << r.value << " [" << r.ci_low << ", " << r.ci_high << "]  " << r.params.dump() << '\n';
    }
}

void write_out(const std::vector<ReportRow>& rows, const std::string& flag, const ExperimentConfig& cfg) {
    const std::string path = !flag.empty() ? flag : cfg.outputs.path;
    if (path.empty()) return;
    emit_report(rows, path);
    std::cout << "wrote " << rows.size() << " rows to " << path << '\n';
}

int finish(const ExperimentResult& res) {
    if (res.passed()) {
        std::cout << "all checks passed\n";
        return 0;
    }
    for (const auto& f : res.failures) std::cout << "FAILED: " << f << '\n';
    return 1;
}

int analyze(const Common& c) {
    const ExperimentConfig cfg = load(c);
    const KalmanStructure ks = check_kalman(cfg.op);
    std::cout << "dimension N        " << cfg.op.dim() << "\nalpha              " << cfg.op.alpha
              << "\nKalman [K]         " << (ks.satisfied ? "satisfied" : "NOT satisfied") << "\nk                  "
              << ks.k << "\nblock dims         ";
    for (int d : ks.dims) std::cout << d << ' ';
    std::cout << "\nd0, d1             " << ks.d0 << ", " << ks.d1 << "\nkappa2             " << ks.kappa2 << '\n';
    if (ks.satisfied) {
        std::cout << "exponents          ";
        for (double e : ks.exponents) std::cout << e << ' ';
        std::cout << "\nnormal form        " << (ks.normal_form ? "yes" : "no") << "\ndilation invariant "
                  << (ks.dilation_invariant ? "yes" : "no") << '\n';
    }
    if (cfg.op.alpha < 2.0) {
        const auto nd = check_nondegeneracy(*cfg.op.spectral, cfg.op.alpha);
        std::cout << "[ND] kappa_alpha   " << nd.kappa_alpha << (nd.pass ? " (pass)" : " (FAIL)") << '\n';
        if (!nd.pass) return 1;
    }
    std::cout << "schedule sup norm  " << cfg.schedule.sup_norm() << "\nsup|f| bound       " << cfg.source.sup_abs()
              << '\n';
    return ks.satisfied ? 0 : 1;
}

int solve(const Common& c) {
    const ExperimentConfig cfg = load(c);
    hd::check_keys(cfg.params, "params", {"epsilon"});
    const double eps = cfg.params.contains("epsilon") ? hd::as_number(cfg.params["epsilon"], "params.epsilon") : 0.05;
    if (cfg.probes.empty()) throw ConfigError("config: probes: solve needs at least one probe");
    const KalmanStructure ks = check_kalman(cfg.op);
    const double bound = cfg.op.horizon_T * cfg.source.sup_abs();
    ExperimentResult res;
    for (std::size_t i = 0; i < cfg.probes.size(); ++i) {
        const Estimate e = hd::solve_probe(cfg, ks, cfg.probes[i], eps, i);
        const SolverRecord rec{"solve probe " + std::to_string(i), e.value, e.std_error, bound};
        if (!rec.within_bound()) res.failures.push_back("max-principle bound violated: " + rec.label);
        Json pj = hd::probe_json(i, cfg.probes[i]);
        pj["std_error"] = e.std_error;
        pj["epsilon"] = eps;
        pj["bound"] = bound;
        res.rows.push_back({"solve", pj, e.value, e.value - 3.0 * e.std_error, e.value + 3.0 * e.std_error, cfg.mc.seed});
    }
    print_rows(res.rows);
    write_out(res.rows, c.out, cfg);
    return finish(res);
}

int verify(const Common& c, const std::string& name) {
    ExperimentConfig cfg = load(c);
    if (!name.empty()) cfg.experiment = name;
    const ExperimentResult res = run_experiment(cfg);
    print_rows(res.rows);
    write_out(res.rows, c.out, cfg);
    return finish(res);
}

int report(const std::string& csv, const std::string& out) {
    const auto rows = load_csv(csv);
    print_rows(rows);
    if (!out.empty()) emit_report(rows, out);
    bool ok = true;
    for (const auto& r : rows)
        if (r.params.contains("pass") && r.params["pass"] == false) ok = false;
    return ok ? 0 : 1;
}

void add_common(CLI::App* app, Common& c, bool config = true) {
    if (config) app->add_option("--config", c.config, "experiment configuration (JSON)");
    app->add_option("--seed", c.seed, "override mc.seed");
    app->add_option("--threads", c.threads, "worker threads (results do not depend on this)");
    app->add_option("--out", c.out, "CSV output path");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"oupert: perturbed degenerate Ornstein-Uhlenbeck solvers and estimate checks"};
    app.require_subcommand(1);
    Common c;
    std::string exp_name, csv;

    auto* a = app.add_subcommand("analyze", "Kalman structure report for the configured operator");
    add_common(a, c);
    auto* s = app.add_subcommand("solve", "Monte Carlo solution at the configured probes");
    add_common(s, c);
    auto* v = app.add_subcommand("verify", "run a registered experiment");
    v->add_option("experiment", exp_name, "experiment name (defaults to the config's)");
    add_common(v, c);
    auto* w = app.add_subcommand("sweep", "epsilon sweep (the epsilon-sweep experiment)");
    add_common(w, c);
    auto* r = app.add_subcommand("report", "re-render a CSV report");
    r->add_option("csv", csv, "CSV file written by verify/solve/sweep")->required();
    add_common(r, c, false);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (a->parsed()) return analyze(c);
        if (s->parsed()) return solve(c);
        if (v->parsed()) return verify(c, exp_name);
        if (w->parsed()) return verify(c, "epsilon-sweep");
        if (r->parsed()) return report(csv, c.out);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const ValidationError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 2;
}
