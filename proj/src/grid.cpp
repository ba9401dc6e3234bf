#include "ngfreg/grid.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "ngfreg/errors.hpp"

namespace ngfreg {

void GridGeometry::validate() const {
    if (width < 2 || height < 2) {
        throw InvalidInputError("grid must be at least 2x2, got " + std::to_string(width) + "x" + std::to_string(height));
    }
    if (!(std::isfinite(spacing_x) && spacing_x > 0.0 && std::isfinite(spacing_y) && spacing_y > 0.0)) {
        throw InvalidInputError("grid spacing must be finite and positive");
    }
    if (!std::isfinite(origin_easting) || !std::isfinite(origin_northing)) {
        throw InvalidInputError("grid origin must be finite");
    }
}

GridGeometry pixel_grid(int width, int height) {
    GridGeometry g;
    g.width = width;
    g.height = height;
    return g;
}

ScalarImage::ScalarImage(GridGeometry geometry, std::vector<double> values, std::vector<std::uint8_t> mask)
    : geometry_(geometry), values_(std::move(values)), mask_(std::move(mask)) {
    geometry_.validate();
    if (values_.size() != geometry_.size()) {
        throw InvalidInputError("image value array has " + std::to_string(values_.size()) + " entries, expected " +
                                std::to_string(geometry_.size()));
    }
    if (!mask_.empty() && mask_.size() != values_.size()) {
        throw InvalidInputError("nodata mask length does not match the image");
    }
    for (std::size_t i = 0; i < values_.size(); ++i) {
        if (!masked(i) && !std::isfinite(values_[i])) {
            throw InvalidInputError("unmasked image value is not finite at index " + std::to_string(i));
        }
    }
}

ScalarImage ScalarImage::filled(const GridGeometry& geometry, double value) {
    return {geometry, std::vector<double>(geometry.size(), value)};
}

std::size_t ScalarImage::unmasked_count() const {
    if (mask_.empty()) return values_.size();
    return static_cast<std::size_t>(std::count(mask_.begin(), mask_.end(), std::uint8_t{0}));
}

DisplacementField::DisplacementField(GridGeometry geometry, std::vector<double> ux, std::vector<double> uy)
    : geometry_(geometry), ux_(std::move(ux)), uy_(std::move(uy)) {
    geometry_.validate();
    if (ux_.size() != geometry_.size() || uy_.size() != geometry_.size()) {
        throw InvalidInputError("displacement component length does not match the grid");
    }
    for (std::size_t i = 0; i < ux_.size(); ++i) {
        if (!std::isfinite(ux_[i]) || !std::isfinite(uy_[i])) {
            throw InvalidInputError("displacement is not finite at index " + std::to_string(i));
        }
    }
}

DisplacementField DisplacementField::zeros(const GridGeometry& geometry) { return constant(geometry, 0.0, 0.0); }

DisplacementField DisplacementField::constant(const GridGeometry& geometry, double ux, double uy) {
    return {geometry, std::vector<double>(geometry.size(), ux), std::vector<double>(geometry.size(), uy)};
}

DisplacementField DisplacementField::from_packed(const GridGeometry& geometry, std::span<const double> packed) {
    const std::size_t n = geometry.size();
    if (packed.size() != 2 * n) throw DimensionError("packed displacement has the wrong length");
    return {geometry, std::vector<double>(packed.begin(), packed.begin() + static_cast<std::ptrdiff_t>(n)),
            std::vector<double>(packed.begin() + static_cast<std::ptrdiff_t>(n), packed.end())};
}

std::vector<double> DisplacementField::packed() const {
    std::vector<double> out;
    out.reserve(2 * ux_.size());
    out.insert(out.end(), ux_.begin(), ux_.end());
    out.insert(out.end(), uy_.begin(), uy_.end());
    return out;
}

double DisplacementField::max_abs() const {
    double m = 0.0;
    for (std::size_t i = 0; i < ux_.size(); ++i) m = std::max({m, std::abs(ux_[i]), std::abs(uy_[i])});
    return m;
}

namespace {

struct BilinearStencil {
    int x0, y0;
    double fx, fy;
    bool clamped_x, clamped_y;
};

bool in_domain(const GridGeometry& g, double x, double y) {
    return x >= -0.5 && x <= g.width - 0.5 && y >= -0.5 && y <= g.height - 0.5;
}

BilinearStencil bilinear_stencil(const GridGeometry& g, double x, double y) {
    BilinearStencil s{};
    const double cx = std::clamp(x, 0.0, static_cast<double>(g.width - 1));
    const double cy = std::clamp(y, 0.0, static_cast<double>(g.height - 1));
    s.clamped_x = x < 0.0 || x > g.width - 1;
    s.clamped_y = y < 0.0 || y > g.height - 1;
    s.x0 = std::min(static_cast<int>(std::floor(cx)), g.width - 2);
    s.y0 = std::min(static_cast<int>(std::floor(cy)), g.height - 2);
    s.fx = cx - s.x0;
    s.fy = cy - s.y0;
    return s;
}

void check_point(double x, double y) {
    if (!std::isfinite(x) || !std::isfinite(y)) throw InvalidInputError("sampling point is not finite");
}

int nearest_index(double c, int n) { return std::clamp(static_cast<int>(std::floor(c + 0.5)), 0, n - 1); }

}  // namespace

Sample sample(const ScalarImage& image, double x, double y, Interpolation mode, double outside) {
    check_point(x, y);
    const GridGeometry& g = image.geometry();
    if (!in_domain(g, x, y)) return {outside, false};
    if (mode == Interpolation::nearest) {
        return {image(nearest_index(x, g.width), nearest_index(y, g.height)), true};
    }
    if (mode == Interpolation::cubic) return {sample_smooth(image, x, y).value, true};
    const BilinearStencil s = bilinear_stencil(g, x, y);
    const double v00 = image(s.x0, s.y0);
    const double v10 = image(s.x0 + 1, s.y0);
    const double v01 = image(s.x0, s.y0 + 1);
    const double v11 = image(s.x0 + 1, s.y0 + 1);
    const double top = (1.0 - s.fx) * v00 + s.fx * v10;
    const double bottom = (1.0 - s.fx) * v01 + s.fx * v11;
    return {(1.0 - s.fy) * top + s.fy * bottom, true};
}

SampleWithGradient sample_with_gradient(const ScalarImage& image, double x, double y) {
    check_point(x, y);
    const GridGeometry& g = image.geometry();
    if (!in_domain(g, x, y)) return {};
    const BilinearStencil s = bilinear_stencil(g, x, y);
    const double v00 = image(s.x0, s.y0);
    const double v10 = image(s.x0 + 1, s.y0);
    const double v01 = image(s.x0, s.y0 + 1);
    const double v11 = image(s.x0 + 1, s.y0 + 1);
    SampleWithGradient out;
    out.in_domain = true;
    const double top = (1.0 - s.fx) * v00 + s.fx * v10;
    const double bottom = (1.0 - s.fx) * v01 + s.fx * v11;
    out.value = (1.0 - s.fy) * top + s.fy * bottom;
    out.d_dx = s.clamped_x ? 0.0 : (1.0 - s.fy) * (v10 - v00) + s.fy * (v11 - v01);
    out.d_dy = s.clamped_y ? 0.0 : bottom - top;
    return out;
}

namespace {

inline void keys(double s, double& w, double& dw) {
    constexpr double a = -0.5;
    const double t = std::abs(s);
    const double sg = s < 0.0 ? -1.0 : 1.0;
    if (t <= 1.0) {
        w = ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0;
        dw = sg * (3.0 * (a + 2.0) * t - 2.0 * (a + 3.0)) * t;
    } else if (t < 2.0) {
        w = ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a;
        dw = sg * ((3.0 * a * t - 10.0 * a) * t + 8.0 * a);
    } else {
        w = 0.0;
        dw = 0.0;
    }
}

}  // namespace

SampleWithGradient sample_smooth(const ScalarImage& image, double x, double y) {
    check_point(x, y);
    const GridGeometry& g = image.geometry();
    // Far outside, every tap replicates the same edge pixel.
    const double cx = std::clamp(x, -3.0, g.width + 2.0);
    const double cy = std::clamp(y, -3.0, g.height + 2.0);
    const int x0 = static_cast<int>(std::floor(cx));
    const int y0 = static_cast<int>(std::floor(cy));
    double wx[4], dwx[4], wy[4], dwy[4];
    int ix[4], iy[4];
    for (int k = 0; k < 4; ++k) {
        keys(cx - (x0 - 1 + k), wx[k], dwx[k]);
        keys(cy - (y0 - 1 + k), wy[k], dwy[k]);
        ix[k] = std::clamp(x0 - 1 + k, 0, g.width - 1);
        iy[k] = std::clamp(y0 - 1 + k, 0, g.height - 1);
    }
    SampleWithGradient out;
    out.in_domain = true;
    for (int j = 0; j < 4; ++j) {
        double row = 0.0, drow = 0.0;
        for (int k = 0; k < 4; ++k) {
            const double v = image(ix[k], iy[j]);
            row += wx[k] * v;
            drow += dwx[k] * v;
        }
        out.value += wy[j] * row;
        out.d_dx += wy[j] * drow;
        out.d_dy += dwy[j] * row;
    }
    if (cx != x) out.d_dx = 0.0;
    if (cy != y) out.d_dy = 0.0;
    return out;
}

bool smooth_support_masked(const ScalarImage& image, double x, double y) {
    if (!image.has_mask()) return false;
    const GridGeometry& g = image.geometry();
    const double cx = std::clamp(x, -3.0, g.width + 2.0);
    const double cy = std::clamp(y, -3.0, g.height + 2.0);
    const int x0 = static_cast<int>(std::floor(cx));
    const int y0 = static_cast<int>(std::floor(cy));
    const bool on_x = cx == x0;
    const bool on_y = cy == y0;
    for (int j = -1; j <= 2; ++j) {
        if (on_y && j != 0) continue;
        const int iy = std::clamp(y0 + j, 0, g.height - 1);
        for (int k = -1; k <= 2; ++k) {
            if (on_x && k != 0) continue;
            if (image.masked(g.index(std::clamp(x0 + k, 0, g.width - 1), iy))) return true;
        }
    }
    return false;
}

namespace {

// Mask-aware sample: false when the point leaves the domain or a stencil
// pixel with non-zero weight is masked.
bool masked_sample(const ScalarImage& image, double px, double py, Interpolation mode, double& value) {
    const GridGeometry& g = image.geometry();
    if (!in_domain(g, px, py)) return false;
    if (mode == Interpolation::nearest) {
        const std::size_t j = g.index(nearest_index(px, g.width), nearest_index(py, g.height));
        if (image.masked(j)) return false;
        value = image[j];
        return true;
    }
    if (mode == Interpolation::cubic) {
        if (image.has_mask() && smooth_support_masked(image, px, py)) return false;
        value = sample_smooth(image, px, py).value;
        return true;
    }
    const BilinearStencil s = bilinear_stencil(g, px, py);
    const std::size_t j00 = g.index(s.x0, s.y0);
    const std::size_t j10 = j00 + 1;
    const std::size_t j01 = j00 + static_cast<std::size_t>(g.width);
    const std::size_t j11 = j01 + 1;
    if (image.has_mask()) {
        const bool bad = (image.masked(j00) && (1.0 - s.fx) * (1.0 - s.fy) > 0.0) ||
                         (image.masked(j10) && s.fx * (1.0 - s.fy) > 0.0) ||
                         (image.masked(j01) && (1.0 - s.fx) * s.fy > 0.0) || (image.masked(j11) && s.fx * s.fy > 0.0);
        if (bad) return false;
    }
    const double top = (1.0 - s.fx) * image[j00] + s.fx * image[j10];
    const double bottom = (1.0 - s.fx) * image[j01] + s.fx * image[j11];
    value = (1.0 - s.fy) * top + s.fy * bottom;
    return true;
}

}  // namespace

ScalarImage warp(const ScalarImage& image, const DisplacementField& u, Interpolation mode) {
    const GridGeometry& g = image.geometry();
    if (!g.same_shape(u.geometry())) throw DimensionError("warp: displacement grid does not match the image");
    std::vector<double> out(g.size(), 0.0);
    std::vector<std::uint8_t> mask(g.size(), 0);
    const auto ux = u.ux();
    const auto uy = u.uy();

#pragma omp parallel for schedule(static)
    for (int y = 0; y < g.height; ++y) {
        for (int x = 0; x < g.width; ++x) {
            const std::size_t i = g.index(x, y);
            if (!masked_sample(image, x - ux[i], y - uy[i], mode, out[i])) mask[i] = 1;
        }
    }
    if (std::find(mask.begin(), mask.end(), std::uint8_t{1}) == mask.end()) mask.clear();
    return {g, std::move(out), std::move(mask)};
}

std::pair<ScalarImage, ScalarImage> gradient(const ScalarImage& image) {
    const GridGeometry& g = image.geometry();
    const int w = g.width;
    const int h = g.height;
    std::vector<double> gx(g.size());
    std::vector<double> gy(g.size());
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const std::size_t i = g.index(x, y);
            if (x == 0) {
                gx[i] = (image(1, y) - image(0, y)) / g.spacing_x;
            } else if (x == w - 1) {
                gx[i] = (image(w - 1, y) - image(w - 2, y)) / g.spacing_x;
            } else {
                gx[i] = (image(x + 1, y) - image(x - 1, y)) / (2.0 * g.spacing_x);
            }
            if (y == 0) {
                gy[i] = (image(x, 1) - image(x, 0)) / g.spacing_y;
            } else if (y == h - 1) {
                gy[i] = (image(x, h - 1) - image(x, h - 2)) / g.spacing_y;
            } else {
                gy[i] = (image(x, y + 1) - image(x, y - 1)) / (2.0 * g.spacing_y);
            }
        }
    }
    std::vector<std::uint8_t> mask(image.mask().begin(), image.mask().end());
    return {ScalarImage(g, std::move(gx), mask), ScalarImage(g, std::move(gy), mask)};
}

ScalarImage laplacian(const ScalarImage& field) {
    const GridGeometry& g = field.geometry();
    const int w = g.width;
    const int h = g.height;
    const double ihx2 = 1.0 / (g.spacing_x * g.spacing_x);
    const double ihy2 = 1.0 / (g.spacing_y * g.spacing_y);
    std::vector<double> out(g.size());
    for (int y = 0; y < h; ++y) {
        const int ym = std::max(y - 1, 0);
        const int yp = std::min(y + 1, h - 1);
        for (int x = 0; x < w; ++x) {
            const int xm = std::max(x - 1, 0);
            const int xp = std::min(x + 1, w - 1);
            const double c = field(x, y);
            out[g.index(x, y)] = (field(xm, y) - 2.0 * c + field(xp, y)) * ihx2 + (field(x, ym) - 2.0 * c + field(x, yp)) * ihy2;
        }
    }
    return {g, std::move(out), std::vector<std::uint8_t>(field.mask().begin(), field.mask().end())};
}

GridGeometry coarser_geometry(const GridGeometry& fine) {
    GridGeometry c = fine;
    c.width = (fine.width + 1) / 2;
    c.height = (fine.height + 1) / 2;
    c.spacing_x = 2.0 * fine.spacing_x;
    c.spacing_y = 2.0 * fine.spacing_y;
    c.origin_easting = fine.origin_easting + 0.5 * fine.spacing_x;
    c.origin_northing = fine.origin_northing + 0.5 * fine.spacing_y;
    return c;
}

ScalarImage downsample(const ScalarImage& image) {
    const GridGeometry& f = image.geometry();
    const GridGeometry c = coarser_geometry(f);
    std::vector<double> out(c.size(), 0.0);
    std::vector<std::uint8_t> mask;
    if (image.has_mask()) mask.assign(c.size(), 0);
    for (int y = 0; y < c.height; ++y) {
        for (int x = 0; x < c.width; ++x) {
            double sum = 0.0;
            int count = 0;
            for (int dy = 0; dy < 2; ++dy) {
                for (int dx = 0; dx < 2; ++dx) {
                    const int fx = 2 * x + dx;
                    const int fy = 2 * y + dy;
                    if (fx >= f.width || fy >= f.height) continue;
                    const std::size_t j = f.index(fx, fy);
                    if (image.masked(j)) continue;
                    sum += image[j];
                    ++count;
                }
            }
            const std::size_t i = c.index(x, y);
            if (count == 0) {
                mask[i] = 1;
            } else {
                out[i] = sum / count;
            }
        }
    }
    return {c, std::move(out), std::move(mask)};
}

Pyramid build_pyramid(const ScalarImage& image, int max_levels, int min_dimension) {
    if (max_levels < 1) throw ParameterError("pyramid needs at least one level");
    if (min_dimension < 2) throw ParameterError("pyramid minimum dimension must be at least 2");
    Pyramid p;
    p.levels.push_back(image);
    while (static_cast<int>(p.levels.size()) < max_levels) {
        const GridGeometry next = coarser_geometry(p.levels.back().geometry());
        if (std::min(next.width, next.height) < min_dimension) break;
        p.levels.push_back(downsample(p.levels.back()));
    }
    return p;
}

DisplacementField prolong(const DisplacementField& u, const GridGeometry& fine_geometry) {
    fine_geometry.validate();
    const GridGeometry& cg = u.geometry();
    if (!coarser_geometry(fine_geometry).same_shape(cg)) {
        throw DimensionError("prolong: fine geometry is not the pyramid parent of the field");
    }
    const ScalarImage cx(cg, std::vector<double>(u.ux().begin(), u.ux().end()));
    const ScalarImage cy(cg, std::vector<double>(u.uy().begin(), u.uy().end()));
    std::vector<double> ux(fine_geometry.size());
    std::vector<double> uy(fine_geometry.size());
    for (int y = 0; y < fine_geometry.height; ++y) {
        const double py = 0.5 * y - 0.25;
        for (int x = 0; x < fine_geometry.width; ++x) {
            const double px = 0.5 * x - 0.25;
            const std::size_t i = fine_geometry.index(x, y);
            ux[i] = 2.0 * sample(cx, px, py, Interpolation::bilinear).value;
            uy[i] = 2.0 * sample(cy, px, py, Interpolation::bilinear).value;
        }
    }
    return {fine_geometry, std::move(ux), std::move(uy)};
}

ScalarImage normalize_intensity(const ScalarImage& image) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < image.size(); ++i) {
        if (image.masked(i)) continue;
        lo = std::min(lo, image[i]);
        hi = std::max(hi, image[i]);
    }
    if (!(hi > lo)) throw DegenerateError("normalize_intensity: image has fewer than two distinct unmasked values");
    std::vector<double> out(image.size(), 0.0);
    const double scale = 1.0 / (hi - lo);
    for (std::size_t i = 0; i < image.size(); ++i) {
        if (!image.masked(i)) out[i] = std::clamp((image[i] - lo) * scale, 0.0, 1.0);
    }
    return image.with_values(std::move(out));
}

ScalarImage resample_to_geometry(const ScalarImage& image, const GridGeometry& target, Interpolation mode) {
    target.validate();
    const GridGeometry& src = image.geometry();
    std::vector<double> out(target.size(), 0.0);
    std::vector<std::uint8_t> mask(target.size(), 0);
    bool any = false;
    for (int y = 0; y < target.height; ++y) {
        for (int x = 0; x < target.width; ++x) {
            const std::size_t i = target.index(x, y);
            if (!masked_sample(image, src.pixel_x(target.easting(x)), src.pixel_y(target.northing(y)), mode, out[i])) {
                out[i] = 0.0;
                mask[i] = 1;
                any = true;
            }
        }
    }
    if (!any) mask.clear();
    return {target, std::move(out), std::move(mask)};
}

}  // namespace ngfreg
