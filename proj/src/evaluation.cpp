#include "ngfreg/evaluation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>

#include "json.hpp"
#include "ngfreg/errors.hpp"

namespace ngfreg {

Difference difference_map(const ScalarImage& a, const ScalarImage& b) {
    if (!a.geometry().same_shape(b.geometry())) throw DimensionError("difference_map: images differ in shape");
    std::vector<double> d(a.size(), 0.0);
    std::vector<std::uint8_t> mask;
    if (a.has_mask() || b.has_mask()) mask.assign(a.size(), 0);
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a.masked(i) || b.masked(i)) {
            mask[i] = 1;
            continue;
        }
        d[i] = std::abs(a[i] - b[i]);
        sum += d[i];
        ++n;
    }
    if (n == 0) throw DegenerateError("difference_map: no jointly unmasked pixels");
    return {ScalarImage(a.geometry(), std::move(d), std::move(mask)), sum / static_cast<double>(n)};
}

ScalarImage difference_complement(const ScalarImage& diff) {
    double hi = 0.0;
    for (std::size_t i = 0; i < diff.size(); ++i)
        if (!diff.masked(i)) hi = std::max(hi, diff[i]);
    std::vector<double> v(diff.size(), 0.0);
    for (std::size_t i = 0; i < diff.size(); ++i)
        if (!diff.masked(i)) v[i] = hi - diff[i];
    return diff.with_values(std::move(v));
}

ScalarImage checkerboard(const ScalarImage& a, const ScalarImage& b, int tile) {
    if (!a.geometry().same_shape(b.geometry())) throw DimensionError("checkerboard: images differ in shape");
    if (tile < 1) throw ParameterError("checkerboard tile must be at least 1 pixel");
    const GridGeometry& g = a.geometry();
    std::vector<double> v(g.size());
    std::vector<std::uint8_t> mask;
    if (a.has_mask() || b.has_mask()) mask.assign(g.size(), 0);
    for (int y = 0; y < g.height; ++y) {
        for (int x = 0; x < g.width; ++x) {
            const std::size_t i = g.index(x, y);
            const ScalarImage& src = ((x / tile + y / tile) % 2 == 0) ? a : b;
            v[i] = src[i];
            if (!mask.empty()) mask[i] = src.masked(i);
        }
    }
    return {a.geometry(), std::move(v), std::move(mask)};
}

std::string to_string(DeformationKind k) {
    switch (k) {
        case DeformationKind::affine: return "affine";
        case DeformationKind::gaussian_bump: return "gaussian-bump";
        case DeformationKind::composite: return "composite";
    }
    return "?";
}

DeformationKind parse_deformation(const std::string& name) {
    if (name == "affine") return DeformationKind::affine;
    if (name == "gaussian-bump" || name == "bump") return DeformationKind::gaussian_bump;
    if (name == "composite") return DeformationKind::composite;
    throw ParameterError("unknown deformation kind '" + name + "'");
}

SyntheticDeformation make_deformation(DeformationKind kind, const DeformationParams& params, const GridGeometry& g) {
    g.validate();
    const bool use_affine = kind != DeformationKind::gaussian_bump;
    const bool use_bump = kind != DeformationKind::affine;
    const BumpParams& b = params.bump;
    double dx = 0.0, dy = 0.0;
    if (use_affine) params.affine.validate();
    if (use_bump) {
        if (!(b.sigma > 0.0) || !std::isfinite(b.sigma)) throw ParameterError("bump sigma must be positive");
        if (!std::isfinite(b.amplitude)) throw ParameterError("bump amplitude must be finite");
        if (!std::isfinite(b.centre_x) || !std::isfinite(b.centre_y)) throw ParameterError("bump centre must be finite");
        const double len = std::hypot(b.direction_x, b.direction_y);
        if (!(len > 0.0) || !std::isfinite(len)) throw ParameterError("bump direction must be a non-zero vector");
        dx = b.direction_x / len;
        dy = b.direction_y / len;
    }
    std::vector<double> ux(g.size(), 0.0), uy(g.size(), 0.0);
    for (int y = 0; y < g.height; ++y) {
        for (int x = 0; x < g.width; ++x) {
            const std::size_t i = g.index(x, y);
            if (use_affine) {
                const Point q = affine_apply(params.affine, {double(x), double(y)});
                ux[i] += x - q.x;
                uy[i] += y - q.y;
            }
            if (use_bump) {
                const double r2 = (x - b.centre_x) * (x - b.centre_x) + (y - b.centre_y) * (y - b.centre_y);
                const double m = b.amplitude * std::exp(-r2 / (2.0 * b.sigma * b.sigma));
                ux[i] += m * dx;
                uy[i] += m * dy;
            }
        }
    }
    return {kind, params, DisplacementField(g, std::move(ux), std::move(uy))};
}

EndpointError endpoint_error(const DisplacementField& u_est, const DisplacementField& u_true, std::span<const std::uint8_t> exclude) {
    if (!u_est.geometry().same_shape(u_true.geometry())) throw DimensionError("endpoint_error: fields differ in shape");
    if (!exclude.empty() && exclude.size() != u_est.size()) throw DimensionError("endpoint_error: exclusion mask length mismatch");
    EndpointError e;
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < u_est.size(); ++i) {
        if (!exclude.empty() && exclude[i]) continue;
        const double d = std::hypot(u_est.ux()[i] - u_true.ux()[i], u_est.uy()[i] - u_true.uy()[i]);
        sum += d;
        e.max = std::max(e.max, d);
        ++n;
    }
    if (n == 0) throw DegenerateError("endpoint_error: every pixel is excluded");
    e.mean = sum / static_cast<double>(n);
    return e;
}

Texture::Texture(std::uint64_t seed, double extent) {
    if (!(extent > 0.0) || !std::isfinite(extent)) throw ParameterError("texture extent must be positive");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    constexpr double two_pi = 6.283185307179586;
    constexpr int kWaves = 16;
    double power = 0.0;
    for (int k = 0; k < kWaves; ++k) {
        const double f = 0.03 * std::pow(8.0, u01(rng));  // 0.03 .. 0.24 rad/px
        const double th = two_pi * u01(rng);
        const double a = 0.5 + u01(rng);
        waves_.push_back({a, f * std::cos(th), f * std::sin(th), two_pi * u01(rng)});
        power += 0.5 * a * a;
    }
    for (auto& w : waves_) w.amplitude *= 0.3 / std::sqrt(power);
    const double area = extent * extent;
    const int rects = std::max(24, static_cast<int>(area / 60.0));
    const int discs = std::max(16, static_cast<int>(area / 120.0));
    auto weight = [&] { return (u01(rng) < 0.5 ? -1.0 : 1.0) * (0.6 + 0.8 * u01(rng)); };
    for (int k = 0; k < rects; ++k) {
        Rect r{};
        r.cx = extent * (1.2 * u01(rng) - 0.1);
        r.cy = extent * (1.2 * u01(rng) - 0.1);
        r.half_w = 1.5 + 6.0 * u01(rng);
        r.half_h = 1.5 + 6.0 * u01(rng);
        const double th = two_pi * u01(rng);
        r.c = std::cos(th);
        r.s = std::sin(th);
        r.edge = 0.4 + 0.4 * u01(rng);
        r.weight = weight();
        rects_.push_back(r);
    }
    for (int k = 0; k < discs; ++k) {
        Disc d{};
        d.cx = extent * (1.2 * u01(rng) - 0.1);
        d.cy = extent * (1.2 * u01(rng) - 0.1);
        d.radius = 1.0 + 3.5 * u01(rng);
        d.edge = 0.4 + 0.4 * u01(rng);
        d.weight = weight();
        discs_.push_back(d);
    }
}

double Texture::operator()(double x, double y) const {
    double z = 0.0;
    for (const auto& w : waves_) z += w.amplitude * std::cos(w.kx * x + w.ky * y + w.phase);
    for (const auto& r : rects_) {
        const double dx = x - r.cx, dy = y - r.cy;
        const double lx = r.c * dx + r.s * dy;
        const double ly = -r.s * dx + r.c * dy;
        const double d = std::max(std::abs(lx) - r.half_w, std::abs(ly) - r.half_h);
        if (d < 20.0 * r.edge) z += r.weight / (1.0 + std::exp(d / r.edge));
    }
    for (const auto& c : discs_) {
        const double d = std::hypot(x - c.cx, y - c.cy) - c.radius;
        if (d < 20.0 * c.edge) z += c.weight / (1.0 + std::exp(d / c.edge));
    }
    return 0.5 + 0.45 * std::tanh(z);
}

ScalarImage Texture::render(const GridGeometry& g) const {
    std::vector<double> v(g.size());
    for (int y = 0; y < g.height; ++y)
        for (int x = 0; x < g.width; ++x) v[g.index(x, y)] = (*this)(x, y);
    return {g, std::move(v)};
}

SyntheticPair synthesize_pair(const Texture& texture, const GridGeometry& g, const DisplacementField& u_true) {
    if (!u_true.geometry().same_shape(g)) throw DimensionError("synthesize_pair: displacement grid mismatch");
    SyntheticPair p;
    p.R = texture.render(g);
    p.u_true = u_true;
    // u is known only on pixel centres; extend it bilinearly with edge clamping.
    const ScalarImage ux(g, std::vector<double>(u_true.ux().begin(), u_true.ux().end()));
    const ScalarImage uy(g, std::vector<double>(u_true.uy().begin(), u_true.uy().end()));
    auto u_at = [&](double x, double y, double& ox, double& oy) {
        const double cx = std::clamp(x, 0.0, g.width - 1.0);
        const double cy = std::clamp(y, 0.0, g.height - 1.0);
        ox = sample(ux, cx, cy, Interpolation::bilinear).value;
        oy = sample(uy, cx, cy, Interpolation::bilinear).value;
    };
    std::vector<double> t(g.size());
    for (int y = 0; y < g.height; ++y) {
        for (int x = 0; x < g.width; ++x) {
            double px = x, py = y;
            for (int it = 0; it < 100; ++it) {
                double ox, oy;
                u_at(px, py, ox, oy);
                const double nx = x + ox, ny = y + oy;
                const double change = std::hypot(nx - px, ny - py);
                px = nx;
                py = ny;
                if (change < 1e-13) break;
            }
            t[g.index(x, y)] = texture(px, py);
        }
    }
    p.T = ScalarImage(g, std::move(t));
    p.outside.assign(g.size(), 0);
    for (int y = 0; y < g.height; ++y) {
        for (int x = 0; x < g.width; ++x) {
            const std::size_t i = g.index(x, y);
            const double px = x - u_true.ux()[i], py = y - u_true.uy()[i];
            if (px < -0.5 || px > g.width - 0.5 || py < -0.5 || py > g.height - 0.5) p.outside[i] = 1;
        }
    }
    return p;
}

std::string to_string(Method m) { return m == Method::nonparametric ? "np" : "affine"; }

Method parse_method(const std::string& name) {
    if (name == "np" || name == "nonparametric") return Method::nonparametric;
    if (name == "affine") return Method::affine;
    throw ParameterError("unknown method '" + name + "'");
}

namespace {

ScalarImage add_noise(const ScalarImage& img, double sigma, std::mt19937_64& rng) {
    std::normal_distribution<double> n(0.0, sigma);
    std::vector<double> v(img.values().begin(), img.values().end());
    for (double& x : v) x = std::clamp(x + n(rng), 0.0, 1.0);
    return img.with_values(std::move(v));
}

}  // namespace

ExperimentOutcome run_experiment(const Scenario& sc) {
    ExperimentOutcome out;
    MetricReport& rep = out.report;
    rep.scenario = sc.name;
    rep.method = to_string(sc.method);
    rep.measure = to_string(sc.config.measure);
    const GridGeometry g = pixel_grid(sc.width, sc.height);
    const SyntheticDeformation def = make_deformation(sc.kind, sc.params, g);
    const Texture texture(sc.seed, std::max(sc.width, sc.height));
    out.pair = synthesize_pair(texture, g, def.field);
    if (sc.noise > 0.0) {
        std::mt19937_64 rng(sc.seed ^ 0x9e3779b97f4a7c15ULL);
        out.pair.T = add_noise(out.pair.T, sc.noise, rng);
        out.pair.R = add_noise(out.pair.R, sc.noise, rng);
    }
    const ScalarImage& T = out.pair.T;
    const ScalarImage& R = out.pair.R;
    rep.mean_abs_diff_unregistered = difference_map(T, R).mean_abs_diff;
    out.affine = AffineParams::identity();
    const auto start = std::chrono::steady_clock::now();
    try {
        if (sc.method == Method::nonparametric) {
            RegistrationResult r = register_multilevel(T, R, sc.config);
            out.u = std::move(r.u);
            out.trace = std::move(r.trace);
        } else {
            AffineResult r = register_affine(T, R, sc.config.measure, sc.config);
            out.affine = r.params;
            out.u = affine_to_displacement(r.params, g);
            out.trace = std::move(r.trace);
        }
    } catch (const Error& e) {
        rep.ok = false;
        rep.error = e.what();
        out.u = DisplacementField::zeros(g);
    }
    rep.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    rep.iterations = out.trace.total_iterations();
    out.registered = warp(T, out.u, Interpolation::cubic);
    const Difference d = difference_map(out.registered, R);
    out.difference = d.map;
    rep.mean_abs_diff = d.mean_abs_diff;
    const EndpointError e = endpoint_error(out.u, out.pair.u_true, out.pair.outside);
    rep.endpoint_error_mean = e.mean;
    rep.endpoint_error_max = e.max;
    out.checkerboard = checkerboard(out.registered, R, sc.checkerboard_tile);
    return out;
}

std::string MetricReport::to_json() const {
    nlohmann::ordered_json j;
    j["scenario"] = scenario;
    j["method"] = method;
    j["measure"] = measure;
    j["ok"] = ok;
    if (!ok) j["error"] = error;
    j["mean_abs_diff_unregistered"] = mean_abs_diff_unregistered;
    j["mean_abs_diff"] = mean_abs_diff;
    j["endpoint_error_mean"] = endpoint_error_mean;
    j["endpoint_error_max"] = endpoint_error_max;
    j["iterations"] = iterations;
    j["wall_time"] = wall_time;
    return j.dump(2);
}

}  // namespace ngfreg
