#include "ngfreg/registration.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <iomanip>
#include <limits>
#include <map>
#include <memory>
#include <sstream>

#include "ngfreg/curvature.hpp"
#include "ngfreg/optimize.hpp"

namespace ngfreg {

std::string to_string(Solver s) {
    switch (s) {
        case Solver::semi_implicit: return "semi-implicit";
        case Solver::gauss_newton: return "gauss-newton";
        case Solver::lbfgs: return "l-bfgs";
        case Solver::trust_region: return "trust-region";
    }
    return "?";
}

Solver parse_solver(const std::string& name) {
    std::string s;
    for (char c : name) {
        if (c == '-' || c == '_') continue;
        s += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
    if (s == "semiimplicit") return Solver::semi_implicit;
    if (s == "gaussnewton" || s == "gn") return Solver::gauss_newton;
    if (s == "lbfgs") return Solver::lbfgs;
    if (s == "trustregion") return Solver::trust_region;
    throw ParameterError("unknown solver '" + name + "'");
}

void RegistrationConfig::validate() const {
    auto positive = [](double v) { return std::isfinite(v) && v > 0.0; };
    if (!positive(alpha)) throw ParameterError("alpha must be positive");
    if (!positive(eta)) throw ParameterError("eta must be positive");
    if (!positive(dt)) throw ParameterError("dt must be positive");
    if (max_levels < 1) throw ParameterError("max_levels must be at least 1");
    if (max_iters_per_level < 1) throw ParameterError("max_iters_per_level must be at least 1");
    if (!(rel_tolerance > 0.0 && rel_tolerance < 1.0)) throw ParameterError("rel_tolerance must lie in (0, 1)");
    if (min_level_dimension < 2) throw ParameterError("min_level_dimension must be at least 2");
}

RegistrationConfig RegistrationConfig::hs_to_lidar() {
    RegistrationConfig c;
    c.alpha = 5000.0;
    c.eta = 0.1;
    return c;
}

RegistrationConfig RegistrationConfig::photo_to_hs() {
    RegistrationConfig c;
    c.alpha = 1.5e5;
    c.eta = 0.03;
    return c;
}

std::string RegistrationTrace::to_log() const {
    std::ostringstream os;
    os.imbue(std::locale::classic());
    os << "# level iteration objective distance regularizer step_norm\n";
    os << std::setprecision(17);
    for (const auto& r : records) {
        os << r.level << ' ' << r.iteration << ' ' << r.objective << ' ' << r.distance << ' ' << r.regularizer << ' ' << r.step_norm
           << '\n';
    }
    return os.str();
}

int RegistrationTrace::total_iterations() const {
    int n = 0;
    for (const auto& l : levels) n += l.iterations;
    return n;
}

void require_normalized(const ScalarImage& image, const char* name) {
    constexpr double tol = 1e-9;
    for (std::size_t i = 0; i < image.size(); ++i) {
        if (image.masked(i)) continue;
        if (image[i] < -tol || image[i] > 1.0 + tol) {
            throw RangeError(std::string(name) + " image is not normalized to [0,1]; normalize intensities first");
        }
    }
}

namespace {

struct Warped {
    ScalarImage image;
    std::vector<double> d_dx;  // dT/dp at the sampling point
    std::vector<double> d_dy;
};

// T(x - u(x)) by cubic convolution over the edge-replicated extension, with
// the derivative of the sample with respect to the sampling point. Samples
// touching nodata are masked. With `unit_range` the overshoot of the cubic
// is clipped to [0, 1] (derivative zero there).
Warped warp_with_jacobian(const ScalarImage& T, std::span<const double> ux, std::span<const double> uy, bool unit_range) {
    const GridGeometry& g = T.geometry();
    const std::size_t n = g.size();
    std::vector<double> v(n, 0.0), dx(n, 0.0), dy(n, 0.0);
    std::vector<std::uint8_t> mask;
    if (T.has_mask()) mask.assign(n, 0);
#pragma omp parallel for schedule(static)
    for (int y = 0; y < g.height; ++y) {
        for (int x = 0; x < g.width; ++x) {
            const std::size_t i = g.index(x, y);
            const double px = x - ux[i];
            const double py = y - uy[i];
            if (T.has_mask() && smooth_support_masked(T, px, py)) {
                mask[i] = 1;
                continue;
            }
            const SampleWithGradient s = sample_smooth(T, px, py);
            if (unit_range && (s.value < 0.0 || s.value > 1.0)) {
                v[i] = std::clamp(s.value, 0.0, 1.0);
                continue;
            }
            v[i] = s.value;
            dx[i] = s.d_dx;
            dy[i] = s.d_dy;
        }
    }
    if (!mask.empty() && std::find(mask.begin(), mask.end(), std::uint8_t{1}) == mask.end()) mask.clear();
    return {ScalarImage(g, std::move(v), std::move(mask)), std::move(dx), std::move(dy)};
}

void check_inputs(const ScalarImage& T, const ScalarImage& R) {
    if (!T.geometry().same_shape(R.geometry())) {
        throw DimensionError("template and reference differ in shape: " + std::to_string(T.width()) + "x" + std::to_string(T.height()) +
                             " vs " + std::to_string(R.width()) + "x" + std::to_string(R.height()));
    }
    require_normalized(T, "template");
    require_normalized(R, "reference");
}

// The objective on one grid, evaluated on packed fields [ux..., uy...].
class Problem {
public:
    Problem(const ScalarImage& T, const ScalarImage& R, const RegistrationConfig& cfg, double alpha)
        : T_(T), R_(R), cfg_(cfg), alpha_(alpha), g_(R.geometry()), n_(g_.size()) {}

    const GridGeometry& geometry() const { return g_; }
    double alpha() const { return alpha_; }

    struct Eval {
        double objective = 0.0;
        double distance = 0.0;
        double regularizer = 0.0;
    };

    // Writes the full gradient; `force` (optional) receives the distance part.
    Eval evaluate(std::span<const double> u, std::span<double> grad, std::span<double> force = {}) const {
        const Warped w = warp_with_jacobian(T_, u.subspan(0, n_), u.subspan(n_, n_), cfg_.measure == Measure::mi);
        const SimilarityResult d = ngfreg::evaluate(cfg_.measure, w.image, R_, cfg_.measure_options());
        Eval e;
        e.distance = d.value;
        const DisplacementField uf = DisplacementField::from_packed(g_, u);
        e.regularizer = alpha_ * curvature_energy(uf);
        e.objective = e.distance + e.regularizer;
        if (!grad.empty()) {
            const DisplacementField b = bilaplacian(uf);
            for (std::size_t i = 0; i < n_; ++i) {
                const double fx = -d.d_value_d_Twarped[i] * w.d_dx[i];
                const double fy = -d.d_value_d_Twarped[i] * w.d_dy[i];
                if (!force.empty()) {
                    force[i] = fx;
                    force[n_ + i] = fy;
                }
                grad[i] = fx + alpha_ * b.ux()[i];
                grad[n_ + i] = fy + alpha_ * b.uy()[i];
            }
        }
        return e;
    }

    double value(std::span<const double> u) const { return evaluate(u, {}).objective; }

    // A trial point whose warped template degenerates for the measure
    // evaluates to +inf so that line searches reject it.
    Eval trial(std::span<const double> u, std::span<double> grad, std::span<double> force = {}) const {
        try {
            return evaluate(u, grad, force);
        } catch (const DegenerateError&) {
            constexpr double inf = std::numeric_limits<double>::infinity();
            std::fill(grad.begin(), grad.end(), 0.0);
            std::fill(force.begin(), force.end(), 0.0);
            return {inf, inf, 0.0};
        }
    }

    // Gauss-Newton model of the distance at u: v -> Jw^T H Jw v.
    std::function<void(std::span<const double>, std::span<double>)> data_hessian(std::span<const double> u) const {
        auto w = std::make_shared<Warped>(warp_with_jacobian(T_, u.subspan(0, n_), u.subspan(n_, n_), cfg_.measure == Measure::mi));
        auto model = std::make_shared<MeasureModel>(linearize(cfg_.measure, w->image, R_, cfg_.measure_options()));
        const std::size_t n = n_;
        return [w, model, n](std::span<const double> v, std::span<double> out) {
            std::vector<double> jv(n), hjv(n);
            for (std::size_t i = 0; i < n; ++i) jv[i] = -(w->d_dx[i] * v[i] + w->d_dy[i] * v[n + i]);
            model->hessian_apply(jv, hjv);
            for (std::size_t i = 0; i < n; ++i) {
                out[i] = -w->d_dx[i] * hjv[i];
                out[n + i] = -w->d_dy[i] * hjv[i];
            }
        };
    }

    // Rayleigh quotient of the distance model along v, floored.
    double data_curvature(std::span<const double> u, std::span<const double> v) const {
        const double vv = dot(v, v);
        if (!(vv > 0.0)) return 1.0;
        std::vector<double> hv(v.size());
        data_hessian(u)(v, hv);
        const double q = dot(v, hv) / vv;
        return q > 1e-12 ? q : 1e-12;
    }

private:
    const ScalarImage& T_;
    const ScalarImage& R_;
    const RegistrationConfig& cfg_;
    double alpha_;
    GridGeometry g_;
    std::size_t n_;
};

bool rounding_level(double trial, double current) { return trial <= current + 1e-9 * (std::abs(current) + 1.0); }

struct LevelRun {
    std::vector<double> u;
    int iterations = 0;
    bool converged = false;
    double final_objective = 0.0;
};

[[noreturn]] void diverged(const std::string& solver, int level, RegistrationTrace& trace) {
    throw DivergenceError(solver + " diverged on level " + std::to_string(level) + ": every trial step increased the objective",
                          std::move(trace), level);
}

LevelRun run_semi_implicit(const Problem& p, std::vector<double> u, const RegistrationConfig& cfg, int level, RegistrationTrace& trace) {
    const std::size_t m = u.size();
    std::vector<double> grad(m), force(m), rhs(m), trial(m), trial_grad(m), trial_force(m);
    Problem::Eval cur = p.evaluate(u, grad, force);
    std::map<int, std::unique_ptr<SemiImplicitOperator>> ops;
    auto op = [&](int k) -> const SemiImplicitOperator& {
        auto& slot = ops[k];
        if (!slot) slot = std::make_unique<SemiImplicitOperator>(p.geometry(), p.alpha(), std::ldexp(cfg.dt, k));
        return *slot;
    };
    constexpr int kMaxGrow = 12;
    constexpr int kMaxShrink = -40;
    int k = 0;
    LevelRun run;
    for (int it = 0; it < cfg.max_iters_per_level; ++it) {
        bool accepted = false;
        Problem::Eval next;
        double last = cur.objective;
        for (;;) {
            const double dt = std::ldexp(cfg.dt, k);
            for (std::size_t i = 0; i < m; ++i) rhs[i] = u[i] - dt * force[i];
            op(k).solve_packed(rhs, trial);
            next = p.trial(trial, trial_grad, trial_force);
            last = next.objective;
            if (std::isfinite(next.objective) && next.objective <= cur.objective) {
                accepted = true;
                break;
            }
            if (k <= kMaxShrink) break;
            --k;
        }
        if (!accepted) {
            if (rounding_level(last, cur.objective)) {
                run.converged = true;
                break;
            }
            diverged("semi-implicit", level, trace);
        }
        double step = 0.0;
        for (std::size_t i = 0; i < m; ++i) step = std::max(step, std::abs(trial[i] - u[i]));
        const double previous = cur.objective;
        u.swap(trial);
        grad.swap(trial_grad);
        force.swap(trial_force);
        cur = next;
        run.iterations = it + 1;
        trace.records.push_back({level, it + 1, cur.objective, cur.distance, cur.regularizer, step});
        if (previous - cur.objective <= cfg.rel_tolerance * std::abs(previous)) {
            run.converged = true;
            break;
        }
        if (k < kMaxGrow) ++k;
    }
    run.u = std::move(u);
    run.final_objective = cur.objective;
    return run;
}

LevelRun run_lbfgs(const Problem& p, std::vector<double> u, const RegistrationConfig& cfg, int level, RegistrationTrace& trace,
                   bool trust_region) {
    const std::size_t m = u.size();
    const std::size_t n = m / 2;
    Problem::Eval last{};
    auto f = [&](std::span<const double> x, std::span<double> g) {
        last = p.trial(x, g);
        return last.objective;
    };
    // Initial inverse Hessian (m I + alpha B)^{-1}, m from the data model.
    std::vector<double> g0(m);
    p.evaluate(u, g0);
    const double curvature = p.data_curvature(u, g0);
    auto pre = std::make_shared<SemiImplicitOperator>(p.geometry(), p.alpha(), 1.0 / curvature);
    LinearOp h0 = [pre, curvature, n](std::span<const double> in, std::span<double> out) {
        pre->solve_packed(in, out);
        for (std::size_t i = 0; i < 2 * n; ++i) out[i] /= curvature;
    };
    LbfgsOptions opt;
    opt.max_iterations = cfg.max_iters_per_level;
    opt.rel_tolerance = cfg.rel_tolerance;
    if (trust_region) opt.max_step = 1.0;

    // The last evaluation of a successful line search is the accepted point.
    auto on_step = [&](const OptimizerStep& s, std::span<const double>) {
        trace.records.push_back({level, s.iteration, last.objective, last.distance, last.regularizer, s.step_norm});
    };
    OptimizerResult res = minimize_lbfgs(std::move(u), f, h0, opt, on_step);
    LevelRun run;
    run.iterations = res.iterations;
    run.final_objective = res.value;
    if (res.status == OptimizerStatus::stalled) {
        if (!rounding_level(res.last_trial_value, res.value)) diverged(trust_region ? "trust-region" : "l-bfgs", level, trace);
        run.converged = true;
    } else {
        run.converged = res.status == OptimizerStatus::converged;
    }
    run.u = std::move(res.x);
    return run;
}

LevelRun run_gauss_newton(const Problem& p, std::vector<double> u, const RegistrationConfig& cfg, int level, RegistrationTrace& trace) {
    const std::size_t m = u.size();
    std::vector<double> grad(m), dir(m), trial(m), neg(m);
    Problem::Eval cur = p.evaluate(u, grad);
    LevelRun run;
    for (int it = 0; it < cfg.max_iters_per_level; ++it) {
        if (norm_inf(grad) == 0.0) {
            run.converged = true;
            break;
        }
        const auto hd = p.data_hessian(u);
        std::vector<double> hg(m);
        hd(grad, hg);
        double curvature = dot(grad, hg) / dot(grad, grad);
        if (!(curvature > 1e-12)) curvature = 1e-12;
        const SemiImplicitOperator pre(p.geometry(), p.alpha(), 1.0 / curvature);
        const double damping = 1e-3 * curvature;
        const double alpha = p.alpha();
        const GridGeometry& g = p.geometry();
        LinearOp apply = [&](std::span<const double> v, std::span<double> out) {
            hd(v, out);
            const DisplacementField b = bilaplacian(DisplacementField::from_packed(g, v));
            const std::size_t n = m / 2;
            for (std::size_t i = 0; i < n; ++i) {
                out[i] += alpha * b.ux()[i] + damping * v[i];
                out[n + i] += alpha * b.uy()[i] + damping * v[n + i];
            }
        };
        LinearOp precondition = [&](std::span<const double> in, std::span<double> out) {
            pre.solve_packed(in, out);
            for (double& x : out) x /= curvature;
        };
        for (std::size_t i = 0; i < m; ++i) neg[i] = -grad[i];
        conjugate_gradient(apply, precondition, neg, dir, 50, 1e-2);
        double slope = dot(grad, dir);
        if (!(slope < 0.0)) {
            precondition(neg, dir);
            slope = dot(grad, dir);
        }
        double t = 1.0;
        bool accepted = false;
        double last = cur.objective;
        Problem::Eval next;
        std::vector<double> trial_grad(m);
        for (int b = 0; b <= 30; ++b) {
            for (std::size_t i = 0; i < m; ++i) trial[i] = u[i] + t * dir[i];
            next = p.trial(trial, trial_grad);
            last = next.objective;
            if (std::isfinite(next.objective) && next.objective <= cur.objective + 1e-4 * t * slope) {
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if (!accepted) {
            if (rounding_level(last, cur.objective)) {
                run.converged = true;
                break;
            }
            diverged("gauss-newton", level, trace);
        }
        const double step = t * norm_inf(dir);
        const double previous = cur.objective;
        u.swap(trial);
        grad.swap(trial_grad);
        cur = next;
        run.iterations = it + 1;
        trace.records.push_back({level, it + 1, cur.objective, cur.distance, cur.regularizer, step});
        if (previous - cur.objective <= cfg.rel_tolerance * std::abs(previous)) {
            run.converged = true;
            break;
        }
    }
    run.u = std::move(u);
    run.final_objective = cur.objective;
    return run;
}

RegistrationResult run_level(const ScalarImage& T, const ScalarImage& R, const DisplacementField& u0, const RegistrationConfig& cfg,
                             int level, double alpha, RegistrationTrace trace) {
    if (!u0.geometry().same_shape(R.geometry())) throw DimensionError("initial displacement grid does not match the images");
    const Problem p(T, R, cfg, alpha);
    std::vector<double> u = u0.packed();
    LevelSummary summary;
    summary.level = level;
    summary.width = R.width();
    summary.height = R.height();
    summary.initial_objective = p.value(u);
    LevelRun run;
    switch (cfg.solver) {
        case Solver::semi_implicit: run = run_semi_implicit(p, std::move(u), cfg, level, trace); break;
        case Solver::lbfgs: run = run_lbfgs(p, std::move(u), cfg, level, trace, false); break;
        case Solver::trust_region: run = run_lbfgs(p, std::move(u), cfg, level, trace, true); break;
        case Solver::gauss_newton: run = run_gauss_newton(p, std::move(u), cfg, level, trace); break;
    }
    summary.final_objective = run.final_objective;
    summary.iterations = run.iterations;
    summary.converged = run.converged;
    trace.levels.push_back(summary);
    return {DisplacementField::from_packed(R.geometry(), run.u), std::move(trace)};
}

}  // namespace

ObjectiveValue objective(const DisplacementField& u, const ScalarImage& T, const ScalarImage& R, const RegistrationConfig& cfg) {
    cfg.validate();
    check_inputs(T, R);
    if (!u.geometry().same_shape(R.geometry())) throw DimensionError("displacement grid does not match the images");
    const Problem p(T, R, cfg, cfg.alpha);
    const std::vector<double> packed = u.packed();
    std::vector<double> grad(packed.size());
    const Problem::Eval e = p.evaluate(packed, grad);
    return {e.objective, e.distance, e.regularizer, DisplacementField::from_packed(R.geometry(), grad)};
}

StepResult semi_implicit_step(const DisplacementField& u, const ScalarImage& T, const ScalarImage& R, const RegistrationConfig& cfg) {
    cfg.validate();
    check_inputs(T, R);
    if (!u.geometry().same_shape(R.geometry())) throw DimensionError("displacement grid does not match the images");
    const Problem p(T, R, cfg, cfg.alpha);
    const std::vector<double> packed = u.packed();
    std::vector<double> grad(packed.size()), force(packed.size()), rhs(packed.size()), out(packed.size());
    p.evaluate(packed, grad, force);
    for (std::size_t i = 0; i < packed.size(); ++i) rhs[i] = packed[i] - cfg.dt * force[i];
    SemiImplicitOperator(R.geometry(), cfg.alpha, cfg.dt).solve_packed(rhs, out);
    return {DisplacementField::from_packed(R.geometry(), out), norm_inf(force)};
}

RegistrationResult register_level(const ScalarImage& T, const ScalarImage& R, const DisplacementField& u0, const RegistrationConfig& cfg,
                                  int level) {
    cfg.validate();
    check_inputs(T, R);
    return run_level(T, R, u0, cfg, level, cfg.alpha, {});
}

RegistrationResult register_multilevel(const ScalarImage& T, const ScalarImage& R, const RegistrationConfig& cfg) {
    cfg.validate();
    check_inputs(T, R);
    const Pyramid pt = build_pyramid(T, cfg.max_levels, cfg.min_level_dimension);
    const Pyramid pr = build_pyramid(R, cfg.max_levels, cfg.min_level_dimension);
    const int levels = static_cast<int>(pr.levels.size());
    RegistrationTrace trace;
    DisplacementField u = DisplacementField::zeros(pr.levels.back().geometry());
    for (int k = levels - 1; k >= 0; --k) {
        const auto& Rk = pr.levels[static_cast<std::size_t>(k)];
        const auto& Tk = pt.levels[static_cast<std::size_t>(k)];
        if (k < levels - 1) u = prolong(u, Rk.geometry());
        // The discrete regularizer gains a factor 4 per coarsening relative
        // to the distance sum; rescale alpha to keep the balance.
        const double alpha = std::ldexp(cfg.alpha, -2 * k);
        RegistrationResult r = run_level(Tk, Rk, u, cfg, k, alpha, std::move(trace));
        u = std::move(r.u);
        trace = std::move(r.trace);
    }
    return {std::move(u), std::move(trace)};
}

}  // namespace ngfreg
