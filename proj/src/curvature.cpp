#include "ngfreg/curvature.hpp"

#include <fftw3.h>

#include <cmath>
#include <map>
#include <mutex>
#include <numbers>

#include "ngfreg/errors.hpp"
#include "ngfreg/optimize.hpp"

namespace ngfreg {

void pixel_laplacian(const GridGeometry& g, std::span<const double> in, std::span<double> out) {
    const int w = g.width;
    const int h = g.height;
#pragma omp parallel for schedule(static)
    for (int y = 0; y < h; ++y) {
        const double* row = &in[g.index(0, y)];
        const double* up = &in[g.index(0, y > 0 ? y - 1 : 0)];
        const double* dn = &in[g.index(0, y < h - 1 ? y + 1 : h - 1)];
        double* o = &out[g.index(0, y)];
        for (int x = 0; x < w; ++x) {
            const double c = row[x];
            const double l = row[x > 0 ? x - 1 : 0];
            const double r = row[x < w - 1 ? x + 1 : w - 1];
            o[x] = l + r + up[x] + dn[x] - 4.0 * c;
        }
    }
}

namespace {

std::array<std::vector<double>, 3> affine_basis(const GridGeometry& g) {
    const std::size_t n = g.size();
    std::array<std::vector<double>, 3> b;
    for (auto& v : b) v.assign(n, 0.0);
    const double cx = 0.5 * (g.width - 1);
    const double cy = 0.5 * (g.height - 1);
    double nx = 0.0, ny = 0.0;
    for (int y = 0; y < g.height; ++y) {
        for (int x = 0; x < g.width; ++x) {
            const std::size_t i = g.index(x, y);
            b[0][i] = 1.0;
            b[1][i] = x - cx;
            b[2][i] = y - cy;
            nx += (x - cx) * (x - cx);
            ny += (y - cy) * (y - cy);
        }
    }
    const double n0 = 1.0 / std::sqrt(static_cast<double>(n));
    for (std::size_t i = 0; i < n; ++i) {
        b[0][i] *= n0;
        b[1][i] /= std::sqrt(nx);
        b[2][i] /= std::sqrt(ny);
    }
    return b;
}

void bilaplacian_component(const GridGeometry& g, std::span<const double> in, std::span<double> out) {
    std::vector<double> q(in.begin(), in.end());
    std::vector<double> lap(q.size());
    remove_affine_part(g, q);
    pixel_laplacian(g, q, lap);
    pixel_laplacian(g, lap, out);
    remove_affine_part(g, out);
}

}  // namespace

void remove_affine_part(const GridGeometry& g, std::span<double> c) {
    // The three basis functions are orthogonal on a full rectangle, so the
    // projection is three independent inner products.
    const double cx = 0.5 * (g.width - 1);
    const double cy = 0.5 * (g.height - 1);
    double s0 = 0.0, s1 = 0.0, s2 = 0.0, nx = 0.0, ny = 0.0;
    for (int y = 0; y < g.height; ++y) {
        for (int x = 0; x < g.width; ++x) {
            const double v = c[g.index(x, y)];
            s0 += v;
            s1 += v * (x - cx);
            s2 += v * (y - cy);
            nx += (x - cx) * (x - cx);
            ny += (y - cy) * (y - cy);
        }
    }
    const double a0 = s0 / static_cast<double>(g.size());
    const double a1 = s1 / nx;
    const double a2 = s2 / ny;
    for (int y = 0; y < g.height; ++y) {
        for (int x = 0; x < g.width; ++x) c[g.index(x, y)] -= a0 + a1 * (x - cx) + a2 * (y - cy);
    }
}

double curvature_energy(const DisplacementField& u) {
    const GridGeometry& g = u.geometry();
    std::vector<double> q(g.size()), lap(g.size());
    double e = 0.0;
    for (auto comp : {u.ux(), u.uy()}) {
        q.assign(comp.begin(), comp.end());
        remove_affine_part(g, q);
        pixel_laplacian(g, q, lap);
        for (double v : lap) e += v * v;
    }
    return 0.5 * e;
}

DisplacementField bilaplacian(const DisplacementField& u) {
    const GridGeometry& g = u.geometry();
    std::vector<double> bx(g.size()), by(g.size());
    bilaplacian_component(g, u.ux(), bx);
    bilaplacian_component(g, u.uy(), by);
    return {g, std::move(bx), std::move(by)};
}

struct SemiImplicitOperator::Plans {
    fftw_plan forward = nullptr;
    fftw_plan inverse = nullptr;
};

namespace {

std::mutex& fftw_mutex() {
    static std::mutex m;
    return m;
}

// Plans are shared per grid shape and live for the whole process.
std::shared_ptr<const SemiImplicitOperator::Plans> dct_plans(int w, int h) {
    std::lock_guard lock(fftw_mutex());
    static std::map<std::pair<int, int>, std::shared_ptr<SemiImplicitOperator::Plans>> cache;
    auto& slot = cache[{w, h}];
    if (!slot) {
        slot = std::make_shared<SemiImplicitOperator::Plans>();
        std::vector<double> a(static_cast<std::size_t>(w) * h), b(a.size());
        const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
        slot->forward = fftw_plan_r2r_2d(h, w, a.data(), b.data(), FFTW_REDFT10, FFTW_REDFT10, flags);
        slot->inverse = fftw_plan_r2r_2d(h, w, a.data(), b.data(), FFTW_REDFT01, FFTW_REDFT01, flags);
        if (slot->forward == nullptr || slot->inverse == nullptr) throw Error("FFTW could not plan the cosine transform");
    }
    return slot;
}

}  // namespace

SemiImplicitOperator::SemiImplicitOperator(const GridGeometry& geometry, double alpha, double dt)
    : geometry_(geometry), alpha_(alpha), dt_(dt) {
    geometry_.validate();
    if (!(alpha > 0.0) || !std::isfinite(alpha)) throw ParameterError("alpha must be positive");
    if (!(dt > 0.0) || !std::isfinite(dt)) throw ParameterError("time step must be positive");
    const int w = geometry_.width;
    const int h = geometry_.height;
    const double c = dt * alpha;
    symbol_.resize(geometry_.size());
    for (int ky = 0; ky < h; ++ky) {
        const double sy = std::sin(std::numbers::pi * ky / (2.0 * h));
        for (int kx = 0; kx < w; ++kx) {
            const double sx = std::sin(std::numbers::pi * kx / (2.0 * w));
            const double lambda = 4.0 * (sx * sx + sy * sy);
            symbol_[geometry_.index(kx, ky)] = 1.0 + c * lambda * lambda;
        }
    }
    plans_ = dct_plans(w, h);

    basis_ = affine_basis(geometry_);
    for (int k = 0; k < 3; ++k) {
        solved_basis_[k].resize(geometry_.size());
        solve_neumann(basis_[k], solved_basis_[k]);
    }
    std::array<std::array<double, 3>, 3> m{};
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) m[i][j] = dot(basis_[i], solved_basis_[j]);
    }
    const double det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
                       m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    if (!(std::abs(det) > 0.0)) throw Error("semi-implicit operator: singular capacitance matrix");
    auto& inv = capacitance_inv_;
    inv[0][0] = (m[1][1] * m[2][2] - m[1][2] * m[2][1]) / det;
    inv[0][1] = (m[0][2] * m[2][1] - m[0][1] * m[2][2]) / det;
    inv[0][2] = (m[0][1] * m[1][2] - m[0][2] * m[1][1]) / det;
    inv[1][0] = (m[1][2] * m[2][0] - m[1][0] * m[2][2]) / det;
    inv[1][1] = (m[0][0] * m[2][2] - m[0][2] * m[2][0]) / det;
    inv[1][2] = (m[0][2] * m[1][0] - m[0][0] * m[1][2]) / det;
    inv[2][0] = (m[1][0] * m[2][1] - m[1][1] * m[2][0]) / det;
    inv[2][1] = (m[0][1] * m[2][0] - m[0][0] * m[2][1]) / det;
    inv[2][2] = (m[0][0] * m[1][1] - m[0][1] * m[1][0]) / det;
}

void SemiImplicitOperator::solve_neumann(std::span<const double> rhs, std::span<double> out) const {
    std::vector<double> spec(rhs.size());
    fftw_execute_r2r(plans_->forward, const_cast<double*>(rhs.data()), spec.data());
    const double norm = 1.0 / (4.0 * geometry_.width * geometry_.height);
    for (std::size_t i = 0; i < spec.size(); ++i) spec[i] *= norm / symbol_[i];
    fftw_execute_r2r(plans_->inverse, spec.data(), out.data());
}

void SemiImplicitOperator::solve_component(std::span<const double> rhs, std::span<double> out) const {
    const std::size_t n = rhs.size();
    // rhs = affine part a + complement q; the affine part is in the kernel.
    std::array<double, 3> coef{};
    for (int k = 0; k < 3; ++k) coef[k] = dot(basis_[k], rhs);
    std::vector<double> q(rhs.begin(), rhs.end());
    for (int k = 0; k < 3; ++k) {
        for (std::size_t i = 0; i < n; ++i) q[i] -= coef[k] * basis_[k][i];
    }
    std::vector<double> s(n);
    solve_neumann(q, s);
    std::array<double, 3> vs{};
    for (int k = 0; k < 3; ++k) vs[k] = dot(basis_[k], s);
    std::array<double, 3> z{};
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) z[i] += capacitance_inv_[i][j] * vs[j];
    }
    for (std::size_t i = 0; i < n; ++i) {
        double v = s[i];
        for (int k = 0; k < 3; ++k) v += coef[k] * basis_[k][i] - z[k] * solved_basis_[k][i];
        out[i] = v;
    }
}

void SemiImplicitOperator::solve_packed(std::span<const double> rhs, std::span<double> out) const {
    const std::size_t n = geometry_.size();
    if (rhs.size() != 2 * n || out.size() != 2 * n) throw DimensionError("semi-implicit solve: packed length mismatch");
    solve_component(rhs.subspan(0, n), out.subspan(0, n));
    solve_component(rhs.subspan(n, n), out.subspan(n, n));
}

DisplacementField SemiImplicitOperator::solve(const DisplacementField& rhs) const {
    if (!rhs.geometry().same_shape(geometry_)) throw DimensionError("semi-implicit solve: right-hand side grid mismatch");
    const std::size_t n = geometry_.size();
    std::vector<double> ux(n), uy(n);
    solve_component(rhs.ux(), ux);
    solve_component(rhs.uy(), uy);
    return {rhs.geometry(), std::move(ux), std::move(uy)};
}

DisplacementField SemiImplicitOperator::apply(const DisplacementField& u) const {
    if (!u.geometry().same_shape(geometry_)) throw DimensionError("semi-implicit apply: grid mismatch");
    const DisplacementField b = bilaplacian(u);
    const double c = dt_ * alpha_;
    std::vector<double> ux(u.size()), uy(u.size());
    for (std::size_t i = 0; i < u.size(); ++i) {
        ux[i] = u.ux()[i] + c * b.ux()[i];
        uy[i] = u.uy()[i] + c * b.uy()[i];
    }
    return {u.geometry(), std::move(ux), std::move(uy)};
}

}  // namespace ngfreg
