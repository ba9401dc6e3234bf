#include "ngfreg/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

#include "ngfreg/errors.hpp"

namespace ngfreg {

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double norm_inf(std::span<const double> a) {
    double m = 0.0;
    for (double v : a) m = std::max(m, std::abs(v));
    return m;
}

namespace {

struct Pair {
    std::vector<double> s;
    std::vector<double> y;
    double rho;
};

void apply_h0(const LinearOp& h0, std::span<const double> in, std::span<double> out) {
    if (h0) {
        h0(in, out);
    } else {
        std::copy(in.begin(), in.end(), out.begin());
    }
}

}  // namespace

OptimizerResult minimize_lbfgs(std::vector<double> x, const ObjectiveFn& f, const LinearOp& h0, const LbfgsOptions& opt,
                               const std::function<void(const OptimizerStep&, std::span<const double>)>& on_step) {
    if (opt.memory < 1 || opt.max_iterations < 0 || !(opt.rel_tolerance >= 0.0) || !(opt.max_step > 0.0)) {
        throw ParameterError("l-BFGS: invalid options");
    }
    const std::size_t n = x.size();
    std::vector<double> g(n), g_new(n), x_new(n), p(n), q(n), r(n);
    double fx = f(x, g);
    if (!std::isfinite(fx)) throw DegenerateError("l-BFGS: objective is not finite at the starting point");

    std::deque<Pair> mem;
    double gamma = 1.0;
    double radius = opt.max_step;
    OptimizerResult res;
    res.status = OptimizerStatus::max_iterations;

    for (int it = 0; it < opt.max_iterations; ++it) {
        // Two-loop recursion.
        q = g;
        std::vector<double> alpha(mem.size());
        for (std::size_t k = mem.size(); k-- > 0;) {
            alpha[k] = mem[k].rho * dot(mem[k].s, q);
            for (std::size_t i = 0; i < n; ++i) q[i] -= alpha[k] * mem[k].y[i];
        }
        apply_h0(h0, q, r);
        for (double& v : r) v *= gamma;
        for (std::size_t k = 0; k < mem.size(); ++k) {
            const double beta = mem[k].rho * dot(mem[k].y, r);
            for (std::size_t i = 0; i < n; ++i) r[i] += (alpha[k] - beta) * mem[k].s[i];
        }
        for (std::size_t i = 0; i < n; ++i) p[i] = -r[i];
        double slope = dot(g, p);
        if (!(slope < 0.0)) {
            mem.clear();
            gamma = 1.0;
            apply_h0(h0, g, r);
            for (std::size_t i = 0; i < n; ++i) p[i] = -r[i];
            slope = dot(g, p);
            if (!(slope < 0.0)) {
                res.status = OptimizerStatus::converged;
                break;
            }
        }
        const double pn = norm_inf(p);
        if (pn == 0.0) {
            res.status = OptimizerStatus::converged;
            break;
        }
        const bool capped = std::isfinite(radius) && pn > radius;
        double t = capped ? radius / pn : 1.0;

        bool accepted = false;
        double f_new = 0.0;
        int backtracks = 0;
        for (; backtracks <= opt.max_backtracks; ++backtracks) {
            for (std::size_t i = 0; i < n; ++i) x_new[i] = x[i] + t * p[i];
            f_new = f(x_new, g_new);
            if (std::isfinite(f_new) && f_new <= fx + opt.armijo * t * slope) {
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if (!accepted) {
            res.status = OptimizerStatus::stalled;
            res.last_trial_value = f_new;
            break;
        }
        if (std::isfinite(opt.max_step)) {
            if (backtracks == 0 && capped) {
                radius *= 2.0;
            } else if (backtracks > 0) {
                radius = std::max(0.5 * radius, 1e-12);
            }
        }

        Pair pr{std::vector<double>(n), std::vector<double>(n), 0.0};
        for (std::size_t i = 0; i < n; ++i) {
            pr.s[i] = x_new[i] - x[i];
            pr.y[i] = g_new[i] - g[i];
        }
        const double sy = dot(pr.s, pr.y);
        const double step = norm_inf(pr.s);
        if (sy > 1e-12 * std::sqrt(dot(pr.s, pr.s) * dot(pr.y, pr.y))) {
            std::vector<double> hy(n);
            apply_h0(h0, pr.y, hy);
            const double yhy = dot(pr.y, hy);
            if (yhy > 0.0) gamma = sy / yhy;
            pr.rho = 1.0 / sy;
            mem.push_back(std::move(pr));
            if (static_cast<int>(mem.size()) > opt.memory) mem.pop_front();
        }

        const double f_old = fx;
        x.swap(x_new);
        g.swap(g_new);
        fx = f_new;
        res.iterations = it + 1;
        if (on_step) on_step(OptimizerStep{it + 1, fx, step}, x);
        if (std::abs(f_old - fx) <= opt.rel_tolerance * std::max(std::abs(f_old), 1e-300)) {
            res.status = OptimizerStatus::converged;
            break;
        }
    }
    res.x = std::move(x);
    res.value = fx;
    return res;
}

int conjugate_gradient(const LinearOp& apply_a, const LinearOp& precondition, std::span<const double> b, std::span<double> x,
                       int max_iterations, double rel_tolerance) {
    const std::size_t n = b.size();
    std::fill(x.begin(), x.end(), 0.0);
    std::vector<double> r(b.begin(), b.end()), z(n), p(n), ap(n);
    const double bnorm = std::sqrt(dot(b, b));
    if (bnorm == 0.0) return 0;
    apply_h0(precondition, r, z);
    p = z;
    double rz = dot(r, z);
    int it = 0;
    for (; it < max_iterations; ++it) {
        apply_a(p, ap);
        const double pap = dot(p, ap);
        if (!(pap > 0.0)) {
            if (it == 0) std::copy(b.begin(), b.end(), x.begin());
            break;
        }
        const double a = rz / pap;
        for (std::size_t i = 0; i < n; ++i) {
            x[i] += a * p[i];
            r[i] -= a * ap[i];
        }
        if (std::sqrt(dot(r, r)) <= rel_tolerance * bnorm) {
            ++it;
            break;
        }
        apply_h0(precondition, r, z);
        const double rz_new = dot(r, z);
        const double beta = rz_new / rz;
        rz = rz_new;
        for (std::size_t i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
    }
    return it;
}

}  // namespace ngfreg
