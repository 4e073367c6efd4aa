#pragma once

// Experiment configuration: strict JSON ingestion. Unknown keys, missing
// required fields and invalid values raise ConfigError naming the field.

#include "oupert/core.hpp"
#include "oupert/levy.hpp"
#include "oupert/norms.hpp"
#include "oupert/perturb.hpp"
#include "oupert/schedule.hpp"
#include "oupert/semigroup.hpp"
#include "oupert/source.hpp"
#include "oupert/structure.hpp"

#include "json.hpp"

#include <cstdint>
#include <fstream>
#include <initializer_list>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace oupert::harness {

using Json = nlohmann::json;

/// The alternating S-family used by the ratio experiments.
struct AlternatingFamily {
    Mat sa;
    Mat sb;
    int switches = 0;
};

struct OutputSpec {
    std::string path;
    std::string format = "csv";
};

struct ExperimentConfig {
    std::string experiment;
    OperatorSpec op;
    PerturbationSchedule schedule;
    std::optional<AlternatingFamily> family;  // set when the schedule block is of kind "alternating"
    std::optional<TimeTransform> transform;
    SourceFunction source;
    NormConfig norms;
    std::optional<Lattice> grid;
    FracQuad quad;
    McParams mc;
    std::vector<Probe> probes;
    OutputSpec outputs;
    Json params = Json::object();  // experiment-specific, validated by the experiment
};

namespace detail {

[[noreturn]] inline void fail(const std::string& path, const std::string& what) {
    throw ConfigError("config: " + path + ": " + what);
}

inline std::string join(const std::string& path, const std::string& key) {
    return path.empty() ? key : path + "." + key;
}

inline std::string join(const std::string& path, std::size_t idx) {
    return path + "[" + std::to_string(idx) + "]";
}

inline void check_object(const Json& j, const std::string& path) {
    if (!j.is_object()) fail(path.empty() ? "<root>" : path, "expected an object");
}

/// Rejects keys outside `allowed`.
inline void check_keys(const Json& j, const std::string& path, std::initializer_list<const char*> allowed) {
    check_object(j, path);
    const std::set<std::string> ok(allowed.begin(), allowed.end());
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!ok.count(it.key())) {
            std::string list;
            for (const auto& k : ok) list += (list.empty() ? "" : ", ") + k;
            fail(join(path, it.key()), "unknown key (allowed: " + list + ")");
        }
}

inline const Json& need(const Json& j, const std::string& path, const char* key) {
    if (!j.contains(key)) fail(join(path, key), "required field is missing");
    return j.at(key);
}

inline double as_number(const Json& j, const std::string& path) {
    if (!j.is_number()) fail(path, "expected a number");
    return j.get<double>();
}

inline std::int64_t as_integer(const Json& j, const std::string& path) {
    if (!j.is_number_integer()) fail(path, "expected an integer");
    return j.get<std::int64_t>();
}

inline std::uint64_t as_u64(const Json& j, const std::string& path) {
    if (j.is_number_unsigned()) return j.get<std::uint64_t>();
    if (j.is_number_integer() && j.get<std::int64_t>() >= 0) return static_cast<std::uint64_t>(j.get<std::int64_t>());
    fail(path, "expected a non-negative integer");
}

inline std::string as_string(const Json& j, const std::string& path) {
    if (!j.is_string()) fail(path, "expected a string");
    return j.get<std::string>();
}

inline Vec as_vec(const Json& j, const std::string& path) {
    if (!j.is_array() || j.empty()) fail(path, "expected a non-empty array of numbers");
    Vec v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = as_number(j[i], join(path, i));
    return v;
}

/// Row-major nested arrays.
inline Mat as_mat(const Json& j, const std::string& path) {
    if (!j.is_array() || j.empty()) fail(path, "expected a non-empty array of rows");
    const std::size_t rows = j.size();
    if (!j[0].is_array() || j[0].empty()) fail(join(path, 0), "expected a non-empty row");
    const std::size_t cols = j[0].size();
    Mat m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (std::size_t r = 0; r < rows; ++r) {
        if (!j[r].is_array() || j[r].size() != cols) fail(join(path, r), "rows must have equal length");
        for (std::size_t c = 0; c < cols; ++c)
            m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = as_number(j[r][c], join(join(path, r), c));
    }
    return m;
}

inline std::vector<double> as_numbers(const Json& j, const std::string& path) {
    if (!j.is_array() || j.empty()) fail(path, "expected a non-empty array of numbers");
    std::vector<double> out;
    for (std::size_t i = 0; i < j.size(); ++i) out.push_back(as_number(j[i], join(path, i)));
    return out;
}

/// Runs `f` and rewrites library validation errors as config errors at `path`.
template <class F>
auto guarded(const std::string& path, F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (const ValidationError& e) {
        fail(path, e.what());
    }
}

inline SpectralMeasure parse_spectral(const Json& j, const std::string& path) {
    check_keys(j, path, {"kind", "atoms", "weights"});
    const std::string kind = as_string(need(j, path, "kind"), join(path, "kind"));
    if (kind == "isotropic_1d") {
        if (j.contains("atoms")) fail(join(path, "atoms"), "not allowed for kind isotropic_1d");
        double w = 0.5;
        if (j.contains("weights")) {
            const auto ws = as_numbers(j.at("weights"), join(path, "weights"));
            if (ws.size() != 1) fail(join(path, "weights"), "isotropic_1d takes a single weight");
            w = ws[0];
        }
        auto m = SpectralMeasure::isotropic_1d(w);
        guarded(path, [&] { m.validate(); });
        return m;
    }
    if (kind != "discrete") fail(join(path, "kind"), "expected \"isotropic_1d\" or \"discrete\"");
    const Json& atoms = need(j, path, "atoms");
    if (!atoms.is_array() || atoms.empty()) fail(join(path, "atoms"), "expected a non-empty array of vectors");
    std::vector<Vec> av;
    for (std::size_t i = 0; i < atoms.size(); ++i) av.push_back(as_vec(atoms[i], join(join(path, "atoms"), i)));
    auto m = SpectralMeasure::discrete(std::move(av), as_numbers(need(j, path, "weights"), join(path, "weights")));
    const double renorm = guarded(path, [&] { return m.normalize_atoms(); });
    if (renorm > 1e-6)
        std::cerr << "warning: " << join(path, "atoms") << ": atoms renormalized (max deviation " << renorm << ")\n";
    guarded(path, [&] { m.validate(); });
    return m;
}

inline OperatorSpec parse_operator(const Json& j, const std::string& path) {
    check_keys(j, path, {"A", "B", "alpha", "horizon_T", "spectral"});
    OperatorSpec op;
    op.A = as_mat(need(j, path, "A"), join(path, "A"));
    op.B = as_mat(need(j, path, "B"), join(path, "B"));
    op.alpha = j.contains("alpha") ? as_number(j.at("alpha"), join(path, "alpha")) : 2.0;
    op.horizon_T = as_number(need(j, path, "horizon_T"), join(path, "horizon_T"));
    if (!(op.alpha > 0.0 && op.alpha <= 2.0)) fail(join(path, "alpha"), "must lie in (0, 2]");
    if (!(op.horizon_T > 0.0)) fail(join(path, "horizon_T"), "must be positive");
    if (j.contains("spectral")) op.spectral = parse_spectral(j.at("spectral"), join(path, "spectral"));
    if (op.alpha != 2.0 && !op.spectral) fail(join(path, "spectral"), "required when alpha != 2");
    guarded(path, [&] { return check_kalman(op); });
    return op;
}

inline void parse_schedule(const Json& j, const std::string& path, ExperimentConfig& cfg) {
    check_object(j, path);
    const std::string kind = as_string(need(j, path, "kind"), join(path, "kind"));
    const int n = cfg.op.dim();
    const double horizon = cfg.op.horizon_T;
    auto square = [&](const Mat& m, const std::string& p) {
        if (m.rows() != n || m.cols() != n) fail(p, "must be " + std::to_string(n) + "x" + std::to_string(n));
        return m;
    };
    if (kind == "zero") {
        check_keys(j, path, {"kind"});
        cfg.schedule = PerturbationSchedule::zero(n, horizon);
    } else if (kind == "constant") {
        check_keys(j, path, {"kind", "value"});
        const Mat s = square(as_mat(need(j, path, "value"), join(path, "value")), join(path, "value"));
        cfg.schedule = guarded(path, [&] { return PerturbationSchedule::constant(s, horizon); });
    } else if (kind == "piecewise") {
        check_keys(j, path, {"kind", "breakpoints", "values"});
        const auto b = as_numbers(need(j, path, "breakpoints"), join(path, "breakpoints"));
        const Json& vals = need(j, path, "values");
        if (!vals.is_array()) fail(join(path, "values"), "expected an array of matrices");
        std::vector<Mat> v;
        for (std::size_t i = 0; i < vals.size(); ++i) {
            const std::string p = join(join(path, "values"), i);
            v.push_back(square(as_mat(vals[i], p), p));
        }
        if (std::abs(b.back() - horizon) > 1e-12 * std::max(1.0, horizon))
            fail(join(path, "breakpoints"), "last breakpoint must equal operator.horizon_T");
        cfg.schedule = guarded(path, [&] { return PerturbationSchedule(b, v); });
    } else if (kind == "alternating") {
        check_keys(j, path, {"kind", "sa", "sb", "switches"});
        AlternatingFamily fam;
        fam.sa = square(as_mat(need(j, path, "sa"), join(path, "sa")), join(path, "sa"));
        fam.sb = square(as_mat(need(j, path, "sb"), join(path, "sb")), join(path, "sb"));
        const auto sw = as_integer(need(j, path, "switches"), join(path, "switches"));
        if (sw < 0) fail(join(path, "switches"), "must be non-negative");
        fam.switches = static_cast<int>(sw);
        cfg.schedule =
            guarded(path, [&] { return PerturbationSchedule::alternating(fam.sa, fam.sb, fam.switches, horizon); });
        cfg.family = fam;
    } else {
        fail(join(path, "kind"), "expected one of zero, constant, piecewise, alternating");
    }
}

inline TimeTransform parse_transform(const Json& j, const std::string& path, int n, double horizon) {
    check_keys(j, path, {"breakpoints", "drift", "potential"});
    const auto b = as_numbers(need(j, path, "breakpoints"), join(path, "breakpoints"));
    const Json& dj = need(j, path, "drift");
    if (!dj.is_array()) fail(join(path, "drift"), "expected an array of vectors");
    std::vector<Vec> drift;
    for (std::size_t i = 0; i < dj.size(); ++i) {
        drift.push_back(as_vec(dj[i], join(join(path, "drift"), i)));
        if (drift.back().size() != n) fail(join(join(path, "drift"), i), "dimension mismatch with operator");
    }
    const auto pot = as_numbers(need(j, path, "potential"), join(path, "potential"));
    if (std::abs(b.back() - horizon) > 1e-12 * std::max(1.0, horizon))
        fail(join(path, "breakpoints"), "last breakpoint must equal operator.horizon_T");
    return guarded(path, [&] { return TimeTransform(b, drift, pot); });
}

inline SourceTerm parse_term(const Json& j, const std::string& path, int n) {
    check_object(j, path);
    const std::string fam = as_string(need(j, path, "family"), join(path, "family"));
    auto center = [&] {
        Vec c = as_vec(need(j, path, "center"), join(path, "center"));
        if (c.size() != n) fail(join(path, "center"), "dimension mismatch with operator");
        return c;
    };
    const double amp = as_number(need(j, path, "amplitude"), join(path, "amplitude"));
    SourceTerm t;
    if (fam == "gaussian_bump") {
        check_keys(j, path, {"family", "amplitude", "center", "width"});
        t = SourceTerm::gaussian(amp, center(), as_number(need(j, path, "width"), join(path, "width")));
    } else if (fam == "cos_window") {
        check_keys(j, path, {"family", "amplitude", "center", "radius", "wavevector", "phase"});
        Vec k = as_vec(need(j, path, "wavevector"), join(path, "wavevector"));
        if (k.size() != n) fail(join(path, "wavevector"), "dimension mismatch with operator");
        const double phase = j.contains("phase") ? as_number(j.at("phase"), join(path, "phase")) : 0.0;
        t = SourceTerm::cos_window(amp, center(), as_number(need(j, path, "radius"), join(path, "radius")), k, phase);
    } else if (fam == "polynomial_window") {
        check_keys(j, path, {"family", "amplitude", "center", "radius", "monomials"});
        const Json& mj = need(j, path, "monomials");
        if (!mj.is_array() || mj.empty()) fail(join(path, "monomials"), "expected a non-empty array");
        std::vector<Monomial> mono;
        for (std::size_t i = 0; i < mj.size(); ++i) {
            const std::string p = join(join(path, "monomials"), i);
            check_keys(mj[i], p, {"coeff", "powers"});
            Monomial m;
            m.coeff = as_number(need(mj[i], p, "coeff"), join(p, "coeff"));
            const Json& pw = need(mj[i], p, "powers");
            if (!pw.is_array() || static_cast<int>(pw.size()) != n) fail(join(p, "powers"), "need one power per coordinate");
            for (std::size_t c = 0; c < pw.size(); ++c) {
                const auto e = as_integer(pw[c], join(join(p, "powers"), c));
                if (e < 0) fail(join(join(p, "powers"), c), "powers must be non-negative");
                m.powers.push_back(static_cast<int>(e));
            }
            mono.push_back(std::move(m));
        }
        t = SourceTerm::polynomial_window(amp, center(), as_number(need(j, path, "radius"), join(path, "radius")),
                                          std::move(mono));
    } else {
        fail(join(path, "family"), "unknown family \"" + fam + "\" (registered: gaussian_bump, cos_window, polynomial_window)");
    }
    guarded(path, [&] { t.validate(); });
    return t;
}

inline SourceFunction parse_source(const Json& j, const std::string& path, int n) {
    check_keys(j, path, {"pieces"});
    const Json& pj = need(j, path, "pieces");
    if (!pj.is_array() || pj.empty()) fail(join(path, "pieces"), "expected a non-empty array");
    std::vector<SourcePiece> pieces;
    for (std::size_t i = 0; i < pj.size(); ++i) {
        const std::string p = join(join(path, "pieces"), i);
        check_keys(pj[i], p, {"t0", "t1", "terms"});
        SourcePiece piece;
        piece.t0 = as_number(need(pj[i], p, "t0"), join(p, "t0"));
        piece.t1 = as_number(need(pj[i], p, "t1"), join(p, "t1"));
        const Json& tj = need(pj[i], p, "terms");
        if (!tj.is_array() || tj.empty()) fail(join(p, "terms"), "expected a non-empty array");
        for (std::size_t k = 0; k < tj.size(); ++k) piece.terms.push_back(parse_term(tj[k], join(join(p, "terms"), k), n));
        pieces.push_back(std::move(piece));
    }
    return guarded(path, [&] { return SourceFunction(std::move(pieces)); });
}

inline Lattice parse_lattice(const Json& j, const std::string& path, int n) {
    check_keys(j, path, {"lo", "hi", "nodes"});
    Lattice l;
    l.lo = as_vec(need(j, path, "lo"), join(path, "lo"));
    l.hi = as_vec(need(j, path, "hi"), join(path, "hi"));
    const Json& nj = need(j, path, "nodes");
    if (!nj.is_array()) fail(join(path, "nodes"), "expected an array of integers");
    for (std::size_t i = 0; i < nj.size(); ++i)
        l.nodes.push_back(static_cast<int>(as_integer(nj[i], join(join(path, "nodes"), i))));
    guarded(path, [&] { l.validate(n); });
    return l;
}

inline FracQuad parse_quad(const Json& j, const std::string& path) {
    check_keys(j, path, {"r_min", "r_max", "nodes", "max_panel_width", "log_panels_per_decade", "directions"});
    FracQuad q;
    if (j.contains("r_min")) q.r_min = as_number(j.at("r_min"), join(path, "r_min"));
    if (j.contains("r_max")) q.r_max = as_number(j.at("r_max"), join(path, "r_max"));
    if (j.contains("nodes")) q.nodes = static_cast<int>(as_integer(j.at("nodes"), join(path, "nodes")));
    if (j.contains("max_panel_width"))
        q.max_panel_width = as_number(j.at("max_panel_width"), join(path, "max_panel_width"));
    if (j.contains("log_panels_per_decade"))
        q.log_panels_per_decade =
            static_cast<int>(as_integer(j.at("log_panels_per_decade"), join(path, "log_panels_per_decade")));
    if (j.contains("directions"))
        q.directions = static_cast<int>(as_integer(j.at("directions"), join(path, "directions")));
    if (!(q.r_min > 0.0 && q.r_min < 1.0 && q.r_max > 1.0)) fail(path, "need 0 < r_min < 1 < r_max");
    if (q.nodes < 1 || q.max_panel_width <= 0.0 || q.log_panels_per_decade < 1 || q.directions < 1)
        fail(path, "nodes, max_panel_width, log_panels_per_decade and directions must be positive");
    return q;
}

inline void parse_norms(const Json& j, const std::string& path, ExperimentConfig& cfg) {
    check_keys(j, path, {"beta", "gamma", "p", "grid", "quad"});
    NormConfig nc;
    nc.alpha = cfg.op.alpha;
    if (j.contains("beta")) nc.beta = as_number(j.at("beta"), join(path, "beta"));
    nc.gamma = nc.alpha + nc.beta;
    if (j.contains("gamma")) {
        nc.gamma = as_number(j.at("gamma"), join(path, "gamma"));
        if (std::abs(nc.gamma - (nc.alpha + nc.beta)) > 1e-12) fail(join(path, "gamma"), "must equal alpha + beta");
    }
    if (j.contains("p")) nc.p = as_number(j.at("p"), join(path, "p"));
    guarded(path, [&] { nc.validate(); });
    cfg.norms = nc;
    if (j.contains("grid")) cfg.grid = parse_lattice(j.at("grid"), join(path, "grid"), cfg.op.dim());
    if (j.contains("quad")) cfg.quad = parse_quad(j.at("quad"), join(path, "quad"));
}

inline McParams parse_mc(const Json& j, const std::string& path) {
    check_keys(j, path, {"samples", "nsteps", "n_time", "seed", "threads"});
    McParams mc;
    mc.seed = as_u64(need(j, path, "seed"), join(path, "seed"));  // no entropy default
    if (j.contains("samples")) mc.samples = as_integer(j.at("samples"), join(path, "samples"));
    if (j.contains("nsteps")) mc.nsteps = static_cast<int>(as_integer(j.at("nsteps"), join(path, "nsteps")));
    if (j.contains("n_time")) mc.n_time = static_cast<int>(as_integer(j.at("n_time"), join(path, "n_time")));
    if (j.contains("threads")) mc.threads = static_cast<unsigned>(as_u64(j.at("threads"), join(path, "threads")));
    guarded(path, [&] { mc.validate(); });
    return mc;
}

inline std::vector<Probe> parse_probes(const Json& j, const std::string& path, int n, double horizon) {
    if (!j.is_array()) fail(path, "expected an array of {t, x}");
    std::vector<Probe> out;
    for (std::size_t i = 0; i < j.size(); ++i) {
        const std::string p = join(path, i);
        check_keys(j[i], p, {"t", "x"});
        Probe pr;
        pr.t = as_number(need(j[i], p, "t"), join(p, "t"));
        pr.x = as_vec(need(j[i], p, "x"), join(p, "x"));
        if (pr.x.size() != n) fail(join(p, "x"), "dimension mismatch with operator");
        if (!(pr.t >= 0.0 && pr.t <= horizon)) fail(join(p, "t"), "must lie in [0, horizon_T]");
        out.push_back(std::move(pr));
    }
    return out;
}

} // namespace detail

inline ExperimentConfig parse_config(const Json& j) {
    using namespace detail;
    check_keys(j, "", {"experiment", "operator", "schedule", "transform", "source", "norms", "mc", "probes",
                       "outputs", "params"});
    ExperimentConfig cfg;
    cfg.experiment = as_string(need(j, "", "experiment"), "experiment");
    cfg.op = parse_operator(need(j, "", "operator"), "operator");
    const int n = cfg.op.dim();
    if (j.contains("schedule"))
        parse_schedule(j.at("schedule"), "schedule", cfg);
    else
        cfg.schedule = PerturbationSchedule::zero(n, cfg.op.horizon_T);
    if (j.contains("transform")) cfg.transform = parse_transform(j.at("transform"), "transform", n, cfg.op.horizon_T);
    cfg.source = parse_source(need(j, "", "source"), "source", n);
    cfg.norms.alpha = cfg.op.alpha;
    cfg.norms.gamma = cfg.op.alpha + cfg.norms.beta;
    if (j.contains("norms")) parse_norms(j.at("norms"), "norms", cfg);
    cfg.mc = parse_mc(need(j, "", "mc"), "mc");
    if (j.contains("probes")) cfg.probes = parse_probes(j.at("probes"), "probes", n, cfg.op.horizon_T);
    if (j.contains("outputs")) {
        const Json& o = j.at("outputs");
        check_keys(o, "outputs", {"path", "format"});
        if (o.contains("path")) cfg.outputs.path = as_string(o.at("path"), "outputs.path");
        if (o.contains("format")) cfg.outputs.format = as_string(o.at("format"), "outputs.format");
        if (cfg.outputs.format != "csv") fail("outputs.format", "only \"csv\" is supported");
    }
    if (j.contains("params")) {
        check_object(j.at("params"), "params");
        cfg.params = j.at("params");
    }
    return cfg;
}

inline ExperimentConfig parse_config_text(const std::string& text) {
    Json j;
    try {
        j = Json::parse(text);
    } catch (const Json::parse_error& e) {
        throw ConfigError(std::string("config: malformed JSON: ") + e.what());
    }
    return parse_config(j);
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

} // namespace oupert::harness
