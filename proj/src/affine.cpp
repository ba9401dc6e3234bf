#include "ngfreg/affine.hpp"

#include <cmath>
#include <iomanip>
#include <limits>
#include <numbers>
#include <sstream>

#include "ngfreg/errors.hpp"
#include "ngfreg/optimize.hpp"

namespace ngfreg {

void AffineParams::validate() const {
    for (double v : {a11, a12, a21, a22, t_x, t_y}) {
        if (!std::isfinite(v)) throw InvalidInputError("affine parameters must be finite");
    }
    if (!(determinant() > 1e-6)) throw InvalidInputError("affine matrix must have determinant > 1e-6");
}

std::string AffineParams::to_record() const {
    std::ostringstream os;
    os.imbue(std::locale::classic());
    os << std::setprecision(17) << a11 << ' ' << a12 << ' ' << a21 << ' ' << a22 << ' ' << t_x << ' ' << t_y << '\n';
    return os.str();
}

AffineParams AffineParams::from_record(const std::string& line) {
    std::istringstream is(line);
    is.imbue(std::locale::classic());
    AffineParams p;
    if (!(is >> p.a11 >> p.a12 >> p.a21 >> p.a22 >> p.t_x >> p.t_y)) throw InvalidInputError("affine record needs six numbers");
    std::string rest;
    if (is >> rest) throw InvalidInputError("affine record has trailing data");
    p.validate();
    return p;
}

Point affine_apply(const AffineParams& p, Point x) { return {p.a11 * x.x + p.a12 * x.y + p.t_x, p.a21 * x.x + p.a22 * x.y + p.t_y}; }

DisplacementField affine_to_displacement(const AffineParams& p, const GridGeometry& g) {
    g.validate();
    std::vector<double> ux(g.size()), uy(g.size());
    for (int y = 0; y < g.height; ++y) {
        for (int x = 0; x < g.width; ++x) {
            const Point q = affine_apply(p, {double(x), double(y)});
            ux[g.index(x, y)] = x - q.x;
            uy[g.index(x, y)] = y - q.y;
        }
    }
    return {g, std::move(ux), std::move(uy)};
}

AffineParams similarity_about_centre(const GridGeometry& g, double degrees, double scale, double t_x, double t_y) {
    const double th = degrees * std::numbers::pi / 180.0;
    const double c = scale * std::cos(th);
    const double s = scale * std::sin(th);
    const double cx = 0.5 * (g.width - 1);
    const double cy = 0.5 * (g.height - 1);
    AffineParams p{c, -s, s, c, 0.0, 0.0};
    p.t_x = cx - (c * cx - s * cy) + t_x;
    p.t_y = cy - (s * cx + c * cy) + t_y;
    return p;
}

namespace {

// Parameters theta = (B - I, d) in the frame x^ = (x - c) / s of the finest
// grid: phi(x) = c + s (B x^ + d).
struct Frame {
    double cx, cy, s;
};

AffineParams to_params(const std::array<double, 6>& th, const Frame& f) {
    AffineParams p;
    p.a11 = 1.0 + th[0];
    p.a12 = th[1];
    p.a21 = th[2];
    p.a22 = 1.0 + th[3];
    p.t_x = f.cx + f.s * th[4] - (p.a11 * f.cx + p.a12 * f.cy);
    p.t_y = f.cy + f.s * th[5] - (p.a21 * f.cx + p.a22 * f.cy);
    return p;
}

// The distance on one pyramid level as a function of theta.
class AffineProblem {
public:
    AffineProblem(const ScalarImage& T, const ScalarImage& R, Measure m, const MeasureOptions& o, const Frame& f, int level)
        : T_(T), R_(R), measure_(m), opts_(o), frame_(f), scale_(std::ldexp(1.0, level)) {}

    struct Linear {
        ScalarImage Tw;
        std::array<std::vector<double>, 6> jac;  // d Tw / d theta_j
    };

    Linear warp(const std::array<double, 6>& th) const {
        const GridGeometry& g = R_.geometry();
        const AffineParams p = to_params(th, frame_);
        const std::size_t n = g.size();
        std::vector<double> v(n, 0.0);
        std::vector<std::uint8_t> mask(n, 0);
        Linear out;
        for (auto& j : out.jac) j.assign(n, 0.0);
        bool any = false;
        for (int y = 0; y < g.height; ++y) {
            for (int x = 0; x < g.width; ++x) {
                const std::size_t i = g.index(x, y);
                const Point x0{scale_ * (x + 0.5) - 0.5, scale_ * (y + 0.5) - 0.5};
                const Point q = affine_apply(p, x0);
                const double px = (q.x + 0.5) / scale_ - 0.5;
                const double py = (q.y + 0.5) / scale_ - 0.5;
                SampleWithGradient s = sample_smooth(T_, px, py);
                if (measure_ == Measure::mi && (s.value < 0.0 || s.value > 1.0)) {
                    s.value = std::clamp(s.value, 0.0, 1.0);
                    s.d_dx = s.d_dy = 0.0;
                }
                v[i] = s.value;
                const double gx = s.d_dx / scale_;
                const double gy = s.d_dy / scale_;
                const double hx = (x0.x - frame_.cx) / frame_.s;
                const double hy = (x0.y - frame_.cy) / frame_.s;
                // d phi / d theta: s * (hx e1, hy e1, hx e2, hy e2, e1, e2).
                out.jac[0][i] = gx * frame_.s * hx;
                out.jac[1][i] = gx * frame_.s * hy;
                out.jac[2][i] = gy * frame_.s * hx;
                out.jac[3][i] = gy * frame_.s * hy;
                out.jac[4][i] = gx * frame_.s;
                out.jac[5][i] = gy * frame_.s;
                if (T_.has_mask() && masked_source(px, py)) {
                    mask[i] = 1;
                    any = true;
                    v[i] = 0.0;
                    for (auto& j : out.jac) j[i] = 0.0;
                }
            }
        }
        if (!any) mask.clear();
        out.Tw = ScalarImage(g, std::move(v), std::move(mask));
        return out;
    }

    double value(const std::array<double, 6>& th, std::array<double, 6>* grad) const {
        if (!(to_params(th, frame_).determinant() > 1e-6)) return std::numeric_limits<double>::infinity();
        const Linear l = warp(th);
        const SimilarityResult d = evaluate(measure_, l.Tw, R_, opts_);
        if (grad) {
            for (int j = 0; j < 6; ++j) (*grad)[j] = dot(d.d_value_d_Twarped, l.jac[j]);
        }
        return d.value;
    }

    // Gauss-Newton matrix J^T H J and gradient.
    void normal_equations(const std::array<double, 6>& th, std::array<std::array<double, 6>, 6>& H, std::array<double, 6>& g,
                          double& value) const {
        const Linear l = warp(th);
        const MeasureModel m = linearize(measure_, l.Tw, R_, opts_);
        value = m.value;
        std::vector<double> hj(R_.size());
        for (int a = 0; a < 6; ++a) {
            g[a] = dot(m.gradient, l.jac[a]);
            m.hessian_apply(l.jac[a], hj);
            for (int b = 0; b < 6; ++b) H[b][a] = dot(l.jac[b], hj);
        }
    }

private:
    bool masked_source(double px, double py) const { return smooth_support_masked(T_, px, py); }

    const ScalarImage& T_;
    const ScalarImage& R_;
    Measure measure_;
    MeasureOptions opts_;
    Frame frame_;
    double scale_;
};

// Solves the symmetric system (H + mu diag) x = b by Gaussian elimination
// with partial pivoting; returns false when singular.
bool solve6(std::array<std::array<double, 6>, 6> H, std::array<double, 6> b, std::array<double, 6>& x) {
    for (int c = 0; c < 6; ++c) {
        int piv = c;
        for (int r = c + 1; r < 6; ++r)
            if (std::abs(H[r][c]) > std::abs(H[piv][c])) piv = r;
        if (!(std::abs(H[piv][c]) > 0.0)) return false;
        std::swap(H[piv], H[c]);
        std::swap(b[piv], b[c]);
        for (int r = c + 1; r < 6; ++r) {
            const double k = H[r][c] / H[c][c];
            for (int j = c; j < 6; ++j) H[r][j] -= k * H[c][j];
            b[r] -= k * b[c];
        }
    }
    for (int r = 5; r >= 0; --r) {
        double s = b[r];
        for (int j = r + 1; j < 6; ++j) s -= H[r][j] * x[j];
        x[r] = s / H[r][r];
    }
    return true;
}

std::array<std::array<double, 6>, 6> damped(std::array<std::array<double, 6>, 6> H) {
    double tr = 0.0;
    for (int i = 0; i < 6; ++i) tr += H[i][i];
    const double floor = 1e-12 * (tr > 0.0 ? tr / 6.0 : 1.0);
    for (int i = 0; i < 6; ++i) H[i][i] += 1e-6 * H[i][i] + floor;
    return H;
}

struct LevelOutcome {
    std::array<double, 6> theta;
    int iterations = 0;
    bool converged = false;
    double initial = 0.0;
    double final_value = 0.0;
};

[[noreturn]] void affine_diverged(int level, RegistrationTrace& trace) {
    throw DivergenceError("affine registration diverged on level " + std::to_string(level), std::move(trace), level);
}

bool rounding_level(double trial, double current) { return trial <= current + 1e-9 * (std::abs(current) + 1.0); }

LevelOutcome gauss_newton_level(const AffineProblem& p, std::array<double, 6> th, const RegistrationConfig& cfg, int level,
                                RegistrationTrace& trace) {
    LevelOutcome out;
    std::array<std::array<double, 6>, 6> H{};
    std::array<double, 6> g{}, dir{};
    double f = 0.0;
    p.normal_equations(th, H, g, f);
    out.initial = f;
    for (int it = 0; it < cfg.max_iters_per_level; ++it) {
        std::array<double, 6> neg{};
        for (int j = 0; j < 6; ++j) neg[j] = -g[j];
        if (!solve6(damped(H), neg, dir)) dir = neg;
        double slope = 0.0;
        for (int j = 0; j < 6; ++j) slope += g[j] * dir[j];
        if (!(slope < 0.0)) {
            dir = neg;
            slope = 0.0;
            for (int j = 0; j < 6; ++j) slope += g[j] * dir[j];
            if (!(slope < 0.0)) {
                out.converged = true;
                break;
            }
        }
        double t = 1.0, trial_value = f;
        std::array<double, 6> trial{};
        bool accepted = false;
        for (int b = 0; b <= 40; ++b) {
            for (int j = 0; j < 6; ++j) trial[j] = th[j] + t * dir[j];
            trial_value = p.value(trial, nullptr);
            if (std::isfinite(trial_value) && trial_value <= f + 1e-4 * t * slope) {
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if (!accepted) {
            if (!std::isfinite(trial_value) || rounding_level(trial_value, f)) {
                out.converged = true;
                break;
            }
            affine_diverged(level, trace);
        }
        double step = 0.0;
        for (int j = 0; j < 6; ++j) step = std::max(step, std::abs(trial[j] - th[j]));
        const double previous = f;
        th = trial;
        p.normal_equations(th, H, g, f);
        out.iterations = it + 1;
        trace.records.push_back({level, it + 1, f, f, 0.0, step});
        if (previous - f <= cfg.rel_tolerance * std::abs(previous)) {
            out.converged = true;
            break;
        }
    }
    out.theta = th;
    out.final_value = f;
    return out;
}

LevelOutcome lbfgs_level(const AffineProblem& p, std::array<double, 6> th, const RegistrationConfig& cfg, int level,
                         RegistrationTrace& trace) {
    LevelOutcome out;
    std::array<std::array<double, 6>, 6> H{};
    std::array<double, 6> g{};
    double f0 = 0.0;
    p.normal_equations(th, H, g, f0);
    out.initial = f0;
    const auto Hd = damped(H);
    LinearOp h0 = [Hd](std::span<const double> in, std::span<double> o) {
        std::array<double, 6> b{}, x{};
        std::copy(in.begin(), in.end(), b.begin());
        if (!solve6(Hd, b, x)) x = b;
        std::copy(x.begin(), x.end(), o.begin());
    };
    ObjectiveFn f = [&](std::span<const double> x, std::span<double> grad) {
        std::array<double, 6> t{}, gr{};
        std::copy(x.begin(), x.end(), t.begin());
        const double v = p.value(t, &gr);
        std::copy(gr.begin(), gr.end(), grad.begin());
        return v;
    };
    LbfgsOptions opt;
    opt.memory = 6;
    opt.max_iterations = cfg.max_iters_per_level;
    opt.rel_tolerance = cfg.rel_tolerance;
    opt.max_backtracks = 40;
    if (cfg.solver == Solver::trust_region) opt.max_step = 0.05;
    auto on_step = [&](const OptimizerStep& s, std::span<const double>) {
        trace.records.push_back({level, s.iteration, s.value, s.value, 0.0, s.step_norm});
    };
    OptimizerResult res = minimize_lbfgs(std::vector<double>(th.begin(), th.end()), f, h0, opt, on_step);
    if (res.status == OptimizerStatus::stalled && std::isfinite(res.last_trial_value) && !rounding_level(res.last_trial_value, res.value)) {
        affine_diverged(level, trace);
    }
    std::copy(res.x.begin(), res.x.end(), out.theta.begin());
    out.iterations = res.iterations;
    out.converged = res.status != OptimizerStatus::max_iterations;
    out.final_value = res.value;
    return out;
}

}  // namespace

AffineResult register_affine(const ScalarImage& T, const ScalarImage& R, Measure measure, const RegistrationConfig& cfg) {
    cfg.validate();
    if (!T.geometry().same_shape(R.geometry())) throw DimensionError("template and reference differ in shape");
    require_normalized(T, "template");
    require_normalized(R, "reference");
    const Pyramid pt = build_pyramid(T, cfg.max_levels, cfg.min_level_dimension);
    const Pyramid pr = build_pyramid(R, cfg.max_levels, cfg.min_level_dimension);
    const Frame frame{0.5 * (R.width() - 1), 0.5 * (R.height() - 1), 0.5 * std::max(R.width(), R.height())};
    std::array<double, 6> th{};
    RegistrationTrace trace;
    const MeasureOptions opts = cfg.measure_options();
    for (int k = static_cast<int>(pr.levels.size()) - 1; k >= 0; --k) {
        const auto& Rk = pr.levels[static_cast<std::size_t>(k)];
        const auto& Tk = pt.levels[static_cast<std::size_t>(k)];
        const AffineProblem p(Tk, Rk, measure, opts, frame, k);
        const LevelOutcome o =
            cfg.solver == Solver::gauss_newton ? gauss_newton_level(p, th, cfg, k, trace) : lbfgs_level(p, th, cfg, k, trace);
        th = o.theta;
        trace.levels.push_back({k, Rk.width(), Rk.height(), o.initial, o.final_value, o.iterations, o.converged});
    }
    AffineParams params = to_params(th, frame);
    params.validate();
    return {params, std::move(trace)};
}

}  // namespace ngfreg
