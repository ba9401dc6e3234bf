#include "ngfreg/similarity.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <memory>
#include <numeric>

#include "ngfreg/errors.hpp"

namespace ngfreg {

std::string to_string(Measure m) {
    switch (m) {
        case Measure::ngf: return "ngf";
        case Measure::ssd: return "ssd";
        case Measure::ncc: return "ncc";
        case Measure::mi: return "mi";
    }
    return "?";
}

Measure parse_measure(const std::string& name) {
    std::string s = name;
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (s == "ngf") return Measure::ngf;
    if (s == "ssd") return Measure::ssd;
    if (s == "ncc") return Measure::ncc;
    if (s == "mi") return Measure::mi;
    throw ParameterError("unknown distance measure '" + name + "'");
}

namespace {

void check_pair(const ScalarImage& a, const ScalarImage& b) {
    if (!a.geometry().same_shape(b.geometry())) {
        throw DimensionError("distance operands differ in shape: " + std::to_string(a.width()) + "x" + std::to_string(a.height()) +
                             " vs " + std::to_string(b.width()) + "x" + std::to_string(b.height()));
    }
}

std::vector<std::uint8_t> joint_valid(const ScalarImage& a, const ScalarImage& b) {
    std::vector<std::uint8_t> valid(a.size(), 1);
    if (!a.has_mask() && !b.has_mask()) return valid;
    for (std::size_t i = 0; i < valid.size(); ++i) valid[i] = !(a.masked(i) || b.masked(i));
    return valid;
}

// Sums fn(y) over rows, accumulating row partials in row order so the result
// does not depend on the thread count.
template <class Fn>
double row_sum(int rows, Fn&& fn) {
    std::vector<double> partial(static_cast<std::size_t>(rows), 0.0);
#pragma omp parallel for schedule(static)
    for (int y = 0; y < rows; ++y) partial[static_cast<std::size_t>(y)] = fn(y);
    double total = 0.0;
    for (double p : partial) total += p;
    return total;
}

// Stencil pixels of the gradient at (x, y) along one axis.
inline void stencil_1d(int c, int n, int& lo, int& hi, double& scale) {
    if (c == 0) {
        lo = 0;
        hi = 1;
        scale = 1.0;
    } else if (c == n - 1) {
        lo = n - 2;
        hi = n - 1;
        scale = 1.0;
    } else {
        lo = c - 1;
        hi = c + 1;
        scale = 0.5;
    }
}

std::vector<double> raw_gradient(const ScalarImage& I, bool x_axis) {
    const GridGeometry& g = I.geometry();
    std::vector<double> out(g.size());
    for (int y = 0; y < g.height; ++y) {
        for (int x = 0; x < g.width; ++x) {
            int lo, hi;
            double s;
            if (x_axis) {
                stencil_1d(x, g.width, lo, hi, s);
                out[g.index(x, y)] = s * (I(hi, y) - I(lo, y)) / g.spacing_x;
            } else {
                stencil_1d(y, g.height, lo, hi, s);
                out[g.index(x, y)] = s * (I(x, hi) - I(x, lo)) / g.spacing_y;
            }
        }
    }
    return out;
}

std::vector<std::uint8_t> ngf_valid(const GridGeometry& g, const std::vector<std::uint8_t>& valid) {
    std::vector<std::uint8_t> out(valid);
    for (int y = 0; y < g.height; ++y) {
        for (int x = 0; x < g.width; ++x) {
            const std::size_t i = g.index(x, y);
            if (!out[i]) continue;
            int xl, xh, yl, yh;
            double s;
            stencil_1d(x, g.width, xl, xh, s);
            stencil_1d(y, g.height, yl, yh, s);
            if (!valid[g.index(xl, y)] || !valid[g.index(xh, y)] || !valid[g.index(x, yl)] || !valid[g.index(x, yh)]) out[i] = 0;
        }
    }
    return out;
}

void check_eta(double eta) {
    if (!(eta > 0.0) || !std::isfinite(eta)) throw ParameterError("edge parameter eta must be positive");
}

}  // namespace

std::vector<double> gradient_transpose(const GridGeometry& g, std::span<const double> qx, std::span<const double> qy) {
    std::vector<double> out(g.size(), 0.0);
    for (int y = 0; y < g.height; ++y) {
        for (int x = 0; x < g.width; ++x) {
            const std::size_t i = g.index(x, y);
            int lo, hi;
            double s;
            stencil_1d(x, g.width, lo, hi, s);
            const double cx = s * qx[i] / g.spacing_x;
            out[g.index(hi, y)] += cx;
            out[g.index(lo, y)] -= cx;
            stencil_1d(y, g.height, lo, hi, s);
            const double cy = s * qy[i] / g.spacing_y;
            out[g.index(x, hi)] += cy;
            out[g.index(x, lo)] -= cy;
        }
    }
    return out;
}

SimilarityResult ssd(const ScalarImage& Tw, const ScalarImage& R) {
    check_pair(Tw, R);
    const auto valid = joint_valid(Tw, R);
    const GridGeometry& g = Tw.geometry();
    SimilarityResult out;
    out.d_value_d_Twarped.assign(g.size(), 0.0);
    auto& d = out.d_value_d_Twarped;
    out.value = row_sum(g.height, [&](int y) {
        double s = 0.0;
        for (int x = 0; x < g.width; ++x) {
            const std::size_t i = g.index(x, y);
            if (!valid[i]) continue;
            const double r = Tw[i] - R[i];
            d[i] = r;
            s += r * r;
        }
        return s;
    });
    out.value *= 0.5;
    return out;
}

namespace {

struct NccStats {
    double mean_a = 0.0, mean_b = 0.0;
    double saa = 0.0, sbb = 0.0, sab = 0.0;
    std::size_t n = 0;
};

NccStats ncc_stats(const ScalarImage& a, const ScalarImage& b, const std::vector<std::uint8_t>& valid) {
    NccStats st;
    const GridGeometry& g = a.geometry();
    st.n = static_cast<std::size_t>(std::count(valid.begin(), valid.end(), std::uint8_t{1}));
    if (st.n < 2) throw DegenerateError("ncc: fewer than two unmasked pixels");
    const double sa = row_sum(g.height, [&](int y) {
        double s = 0.0;
        for (int x = 0; x < g.width; ++x) {
            const std::size_t i = g.index(x, y);
            if (valid[i]) s += a[i];
        }
        return s;
    });
    const double sb = row_sum(g.height, [&](int y) {
        double s = 0.0;
        for (int x = 0; x < g.width; ++x) {
            const std::size_t i = g.index(x, y);
            if (valid[i]) s += b[i];
        }
        return s;
    });
    st.mean_a = sa / static_cast<double>(st.n);
    st.mean_b = sb / static_cast<double>(st.n);
    std::vector<double> raa(static_cast<std::size_t>(g.height)), rbb(raa.size()), rab(raa.size());
#pragma omp parallel for schedule(static)
    for (int y = 0; y < g.height; ++y) {
        double paa = 0.0, pbb = 0.0, pab = 0.0;
        for (int x = 0; x < g.width; ++x) {
            const std::size_t i = g.index(x, y);
            if (!valid[i]) continue;
            const double da = a[i] - st.mean_a;
            const double db = b[i] - st.mean_b;
            paa += da * da;
            pbb += db * db;
            pab += da * db;
        }
        raa[static_cast<std::size_t>(y)] = paa;
        rbb[static_cast<std::size_t>(y)] = pbb;
        rab[static_cast<std::size_t>(y)] = pab;
    }
    for (std::size_t y = 0; y < raa.size(); ++y) {
        st.saa += raa[y];
        st.sbb += rbb[y];
        st.sab += rab[y];
    }
    const double floor = 1e-24 * static_cast<double>(st.n);
    if (st.saa <= floor || st.sbb <= floor) throw DegenerateError("ncc: an input is constant on the unmasked set");
    return st;
}

}  // namespace

SimilarityResult ncc(const ScalarImage& Tw, const ScalarImage& R) {
    check_pair(Tw, R);
    const auto valid = joint_valid(Tw, R);
    const NccStats st = ncc_stats(Tw, R, valid);
    const double denom = std::sqrt(st.saa * st.sbb);
    const double rho = st.sab / denom;
    SimilarityResult out;
    out.value = std::clamp(1.0 - rho * rho, 0.0, 1.0);
    out.d_value_d_Twarped.assign(Tw.size(), 0.0);
    for (std::size_t i = 0; i < Tw.size(); ++i) {
        if (!valid[i]) continue;
        const double drho = (R[i] - st.mean_b) / denom - rho * (Tw[i] - st.mean_a) / st.saa;
        out.d_value_d_Twarped[i] = -2.0 * rho * drho;
    }
    return out;
}

namespace {

// Normalized Gaussian Parzen weights of one intensity over a window of bins.
struct ParzenWeights {
    int first = 0;
    int count = 0;
    double w[40];
    double dw[40];  // d w / d xi
};

constexpr double kParzenRadius = 8.0;  // in sigmas

void parzen(double xi, int bins, double sigma, ParzenWeights& pw) {
    const int lo = std::max(0, static_cast<int>(std::ceil(xi - kParzenRadius * sigma)));
    const int hi = std::min(bins - 1, static_cast<int>(std::floor(xi + kParzenRadius * sigma)));
    pw.first = lo;
    pw.count = hi - lo + 1;
    const double inv_s2 = 1.0 / (sigma * sigma);
    double z = 0.0;
    double ez = 0.0;
    double e[40];
    for (int k = 0; k < pw.count; ++k) {
        const double d = xi - (lo + k);
        pw.w[k] = std::exp(-0.5 * d * d * inv_s2);
        e[k] = -d * inv_s2;
        z += pw.w[k];
    }
    for (int k = 0; k < pw.count; ++k) {
        pw.w[k] /= z;
        ez += pw.w[k] * e[k];
    }
    for (int k = 0; k < pw.count; ++k) pw.dw[k] = pw.w[k] * (e[k] - ez);
}

void check_mi_options(const MiOptions& o) {
    if (o.bins < 8) throw ParameterError("mi: need at least 8 bins");
    if (!(o.parzen_sigma > 0.0) || 2.0 * kParzenRadius * o.parzen_sigma + 1.0 > 40.0) {
        throw ParameterError("mi: Parzen sigma must be in (0, 2.4] bins");
    }
}

double checked_unit(double v) {
    constexpr double tol = 1e-9;
    if (v < -tol || v > 1.0 + tol) throw RangeError("mi: intensity outside [0,1]; normalize inputs first");
    return std::clamp(v, 0.0, 1.0);
}

}  // namespace

SimilarityResult mi(const ScalarImage& Tw, const ScalarImage& R, const MiOptions& options) {
    check_pair(Tw, R);
    check_mi_options(options);
    const auto valid = joint_valid(Tw, R);
    const int B = options.bins;
    const double sigma = options.parzen_sigma;
    const std::size_t npx = Tw.size();
    const std::size_t n = static_cast<std::size_t>(std::count(valid.begin(), valid.end(), std::uint8_t{1}));
    if (n == 0) throw DegenerateError("mi: no unmasked pixels");

    std::vector<double> xa(npx, 0.0), xb(npx, 0.0);
    for (std::size_t i = 0; i < npx; ++i) {
        if (!valid[i]) continue;
        xa[i] = checked_unit(Tw[i]) * (B - 1);
        xb[i] = checked_unit(R[i]) * (B - 1);
    }

    const double inv_n = 1.0 / static_cast<double>(n);
    std::vector<double> joint(static_cast<std::size_t>(B) * B, 0.0);
    ParzenWeights pa, pb;
    for (std::size_t i = 0; i < npx; ++i) {
        if (!valid[i]) continue;
        parzen(xa[i], B, sigma, pa);
        parzen(xb[i], B, sigma, pb);
        for (int ka = 0; ka < pa.count; ++ka) {
            double* row = &joint[static_cast<std::size_t>(pa.first + ka) * B + pb.first];
            const double wa = pa.w[ka] * inv_n;
            for (int kb = 0; kb < pb.count; ++kb) row[kb] += wa * pb.w[kb];
        }
    }
    std::vector<double> pa_marg(B, 0.0), pb_marg(B, 0.0);
    for (int a = 0; a < B; ++a) {
        for (int b = 0; b < B; ++b) {
            const double p = joint[static_cast<std::size_t>(a) * B + b];
            pa_marg[a] += p;
            pb_marg[b] += p;
        }
    }
    double mutual = 0.0;
    std::vector<double> log_ratio(joint.size(), 0.0);  // log p(a,b) - log p(a)
    for (int a = 0; a < B; ++a) {
        for (int b = 0; b < B; ++b) {
            const std::size_t k = static_cast<std::size_t>(a) * B + b;
            const double p = joint[k];
            if (p <= 1e-300) continue;
            mutual += p * std::log(p / (pa_marg[a] * pb_marg[b]));
            log_ratio[k] = std::log(p) - std::log(pa_marg[a]);
        }
    }

    SimilarityResult out;
    out.value = -mutual;
    out.d_value_d_Twarped.assign(npx, 0.0);
    const double scale = static_cast<double>(B - 1) * inv_n;
    for (std::size_t i = 0; i < npx; ++i) {
        if (!valid[i]) continue;
        parzen(xa[i], B, sigma, pa);
        parzen(xb[i], B, sigma, pb);
        double s = 0.0;
        for (int ka = 0; ka < pa.count; ++ka) {
            const double* row = &log_ratio[static_cast<std::size_t>(pa.first + ka) * B + pb.first];
            double inner = 0.0;
            for (int kb = 0; kb < pb.count; ++kb) inner += pb.w[kb] * row[kb];
            s += pa.dw[ka] * inner;
        }
        out.d_value_d_Twarped[i] = -scale * s;
    }
    return out;
}

NgfField ngf_field(const ScalarImage& I, double eta) {
    check_eta(eta);
    NgfField f;
    f.geometry = I.geometry();
    f.n_x = raw_gradient(I, true);
    f.n_y = raw_gradient(I, false);
    const double eta2 = eta * eta;
    for (std::size_t i = 0; i < f.n_x.size(); ++i) {
        const double s = std::sqrt(f.n_x[i] * f.n_x[i] + f.n_y[i] * f.n_y[i] + eta2);
        f.n_x[i] /= s;
        f.n_y[i] /= s;
    }
    return f;
}

namespace {

// Per-pixel pieces of the NGF distance shared by value, gradient and the
// Gauss-Newton model. dr holds d r / d grad(Tw) where r = n_T . n_R.
struct NgfTerms {
    std::vector<std::uint8_t> valid;
    std::vector<double> r;
    std::vector<double> drx, dry;
    double value = 0.0;
};

NgfTerms ngf_terms(const ScalarImage& Tw, const ScalarImage& R, double eta) {
    check_pair(Tw, R);
    check_eta(eta);
    const GridGeometry& g = Tw.geometry();
    NgfTerms t;
    t.valid = ngf_valid(g, joint_valid(Tw, R));
    const auto gtx = raw_gradient(Tw, true);
    const auto gty = raw_gradient(Tw, false);
    const NgfField nr = ngf_field(R, eta);
    const double eta2 = eta * eta;
    t.r.assign(g.size(), 0.0);
    t.drx.assign(g.size(), 0.0);
    t.dry.assign(g.size(), 0.0);
    t.value = row_sum(g.height, [&](int y) {
        double s = 0.0;
        for (int x = 0; x < g.width; ++x) {
            const std::size_t i = g.index(x, y);
            if (!t.valid[i]) continue;
            const double st = std::sqrt(gtx[i] * gtx[i] + gty[i] * gty[i] + eta2);
            const double r = (gtx[i] * nr.n_x[i] + gty[i] * nr.n_y[i]) / st;
            t.r[i] = r;
            t.drx[i] = (nr.n_x[i] - r * gtx[i] / st) / st;
            t.dry[i] = (nr.n_y[i] - r * gty[i] / st) / st;
            s += 1.0 - r * r;
        }
        return s;
    });
    return t;
}

}  // namespace

SimilarityResult ngf_distance(const ScalarImage& Tw, const ScalarImage& R, double eta) {
    const NgfTerms t = ngf_terms(Tw, R, eta);
    const GridGeometry& g = Tw.geometry();
    std::vector<double> qx(g.size()), qy(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
        qx[i] = -2.0 * t.r[i] * t.drx[i];
        qy[i] = -2.0 * t.r[i] * t.dry[i];
    }
    return {t.value, gradient_transpose(g, qx, qy)};
}

SimilarityResult evaluate(Measure measure, const ScalarImage& Tw, const ScalarImage& R, const MeasureOptions& options) {
    switch (measure) {
        case Measure::ngf: return ngf_distance(Tw, R, options.eta);
        case Measure::ssd: return ssd(Tw, R);
        case Measure::ncc: return ncc(Tw, R);
        case Measure::mi: return mi(Tw, R, options.mi);
    }
    throw ParameterError("unknown measure");
}

MeasureModel linearize(Measure measure, const ScalarImage& Tw, const ScalarImage& R, const MeasureOptions& options) {
    MeasureModel model;
    const GridGeometry g = Tw.geometry();
    if (measure == Measure::ngf) {
        auto t = std::make_shared<NgfTerms>(ngf_terms(Tw, R, options.eta));
        std::vector<double> qx(g.size()), qy(g.size());
        for (std::size_t i = 0; i < g.size(); ++i) {
            qx[i] = -2.0 * t->r[i] * t->drx[i];
            qy[i] = -2.0 * t->r[i] * t->dry[i];
        }
        model.value = t->value;
        model.gradient = gradient_transpose(g, qx, qy);
        // 2 dr^T dr, the positive part of the Hessian of sum(1 - r^2).
        model.hessian_apply = [t, g](std::span<const double> v, std::span<double> out) {
            const ScalarImage vi(g, std::vector<double>(v.begin(), v.end()));
            const auto gx = raw_gradient(vi, true);
            const auto gy = raw_gradient(vi, false);
            std::vector<double> px(g.size()), py(g.size());
            for (std::size_t i = 0; i < g.size(); ++i) {
                const double q = 2.0 * (t->drx[i] * gx[i] + t->dry[i] * gy[i]);
                px[i] = q * t->drx[i];
                py[i] = q * t->dry[i];
            }
            const auto r = gradient_transpose(g, px, py);
            std::copy(r.begin(), r.end(), out.begin());
        };
        return model;
    }

    SimilarityResult res = evaluate(measure, Tw, R, options);
    model.value = res.value;
    model.gradient = std::move(res.d_value_d_Twarped);
    auto valid = std::make_shared<std::vector<std::uint8_t>>(joint_valid(Tw, R));
    double weight = 1.0;
    if (measure != Measure::ssd) {
        // Near alignment 1 - rho^2 ~ SSD of standardized images / N, whose
        // Hessian is 2 / S_aa; MI reuses the same intensity-scale surrogate.
        const NccStats st = ncc_stats(Tw, R, *valid);
        weight = 2.0 / st.saa;
    }
    model.hessian_apply = [valid, weight](std::span<const double> v, std::span<double> out) {
        for (std::size_t i = 0; i < v.size(); ++i) out[i] = (*valid)[i] ? weight * v[i] : 0.0;
    };
    return model;
}

}  // namespace ngfreg
