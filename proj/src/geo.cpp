#include "ngfreg/geo.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "ngfreg/errors.hpp"

namespace ngfreg {

namespace fs = std::filesystem;

namespace {

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream is(line);
    while (std::getline(is, field, ',')) {
        const auto b = field.find_first_not_of(" \t\r");
        const auto e = field.find_last_not_of(" \t\r");
        out.push_back(b == std::string::npos ? std::string{} : field.substr(b, e - b + 1));
    }
    return out;
}

bool parse_number(const std::string& s, double& v) {
    if (s.empty()) return false;
    const char* end = s.data() + s.size();
    const auto r = std::from_chars(s.data(), end, v);
    return r.ec == std::errc{} && r.ptr == end;
}

// Index range [lo, hi) of cells along one axis whose extent overlaps (a, b).
std::pair<int, int> overlapping_cells(double origin, double spacing, int count, double a, double b) {
    const double eps = 1e-9 * spacing;
    int lo = count, hi = 0;
    for (int i = 0; i < count; ++i) {
        const double c0 = origin + (i - 0.5) * spacing;
        const double c1 = c0 + spacing;
        if (c1 > a + eps && c0 < b - eps) {
            lo = std::min(lo, i);
            hi = std::max(hi, i + 1);
        }
    }
    return {lo, hi};
}

ScalarImage crop_cells(const ScalarImage& image, int x0, int x1, int y0, int y1) {
    const GridGeometry& g = image.geometry();
    if (x0 == 0 && y0 == 0 && x1 == g.width && y1 == g.height) return image;
    GridGeometry out = g;
    out.width = x1 - x0;
    out.height = y1 - y0;
    out.origin_easting = g.easting(x0);
    out.origin_northing = g.northing(y0);
    if (out.width < 2 || out.height < 2) throw PlacementError("overlap is narrower than two cells");
    std::vector<double> v(out.size());
    std::vector<std::uint8_t> m(image.has_mask() ? out.size() : 0);
    for (int y = 0; y < out.height; ++y)
        for (int x = 0; x < out.width; ++x) {
            const std::size_t s = g.index(x + x0, y + y0);
            v[out.index(x, y)] = image[s];
            if (!m.empty()) m[out.index(x, y)] = image.masked(s) ? 1 : 0;
        }
    return {out, std::move(v), std::move(m)};
}

}  // namespace

void LidarPointCloud::validate() const {
    for (std::size_t i = 0; i < points.size(); ++i) {
        const LidarPoint& p = points[i];
        const std::string at = " at point " + std::to_string(i);
        if (!std::isfinite(p.easting) || !std::isfinite(p.northing) || !std::isfinite(p.elevation))
            throw InvalidInputError("non-finite coordinate" + at);
        if (!std::isfinite(p.intensity) || p.intensity < 0.0) throw InvalidInputError("intensity must be finite and >= 0" + at);
        if (p.agc && !(*p.agc >= 0.0 && *p.agc <= 255.0)) throw InvalidInputError("AGC must lie in [0, 255]" + at);
    }
}

LidarPointCloud read_lidar_csv(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open point cloud " + path.string());
    LidarPointCloud cloud;
    std::string line;
    std::size_t lineno = 0;
    bool first = true;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos || line[line.find_first_not_of(" \t\r")] == '#') continue;
        const auto f = split_csv(line);
        double v[6] = {0, 0, 0, 0, 1, 0};
        bool numeric = f.size() >= 5 && f.size() <= 6;
        for (std::size_t k = 0; numeric && k < f.size(); ++k) numeric = parse_number(f[k], v[k]);
        if (!numeric) {
            if (first) {
                first = false;
                continue;
            }
            throw IoError(path.string() + ":" + std::to_string(lineno) + ": expected x,y,z,intensity,return[,agc]");
        }
        first = false;
        LidarPoint p{v[0], v[1], v[2], v[3], static_cast<int>(v[4]), std::nullopt};
        if (f.size() == 6) p.agc = v[5];
        cloud.points.push_back(p);
    }
    cloud.validate();
    return cloud;
}

void write_lidar_csv(const fs::path& path, const LidarPointCloud& cloud) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write point cloud " + path.string());
    out.imbue(std::locale::classic());
    out << std::setprecision(17) << "x,y,z,intensity,return,agc\n";
    for (const auto& p : cloud.points) {
        out << p.easting << ',' << p.northing << ',' << p.elevation << ',' << p.intensity << ',' << p.return_number;
        if (p.agc) out << ',' << *p.agc;
        out << '\n';
    }
    if (!out) throw IoError("failed writing point cloud " + path.string());
}

ScalarImage rasterize_lidar(const LidarPointCloud& cloud, double cell) {
    if (!(std::isfinite(cell) && cell > 0.0)) throw ParameterError("cell size must be finite and positive");
    if (cloud.points.empty()) throw EmptyInputError("point cloud is empty");
    cloud.validate();
    double e0 = cloud.points[0].easting, e1 = e0, n0 = cloud.points[0].northing, n1 = n0;
    for (const auto& p : cloud.points) {
        e0 = std::min(e0, p.easting);
        e1 = std::max(e1, p.easting);
        n0 = std::min(n0, p.northing);
        n1 = std::max(n1, p.northing);
    }
    GridGeometry g;
    g.spacing_x = g.spacing_y = cell;
    g.width = std::max(2, static_cast<int>(std::floor((e1 - e0) / cell)) + 1);
    g.height = std::max(2, static_cast<int>(std::floor((n1 - n0) / cell)) + 1);
    g.origin_easting = e0 + 0.5 * cell;
    g.origin_northing = n0 + 0.5 * cell;
    g.validate();

    std::vector<double> sum(g.size(), 0.0);
    std::vector<std::size_t> count(g.size(), 0);
    for (const auto& p : cloud.points) {
        const int x = std::min(g.width - 1, static_cast<int>(std::floor((p.easting - e0) / cell)));
        const int y = std::min(g.height - 1, static_cast<int>(std::floor((p.northing - n0) / cell)));
        const std::size_t i = g.index(x, y);
        sum[i] += p.intensity;
        ++count[i];
    }
    std::vector<std::uint8_t> mask(g.size(), 0);
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (count[i] == 0) mask[i] = 1;
        else sum[i] /= static_cast<double>(count[i]);
    }
    return {g, std::move(sum), std::move(mask)};
}

void HyperspectralCube::validate() const {
    geometry.validate();
    if (bands.empty()) throw EmptyInputError("hyperspectral cube has no bands");
    if (bands.size() != wavelengths.size())
        throw InvalidInputError("cube has " + std::to_string(bands.size()) + " bands but " + std::to_string(wavelengths.size()) + " wavelengths");
    for (std::size_t b = 0; b < bands.size(); ++b) {
        if (!(bands[b].geometry() == geometry)) throw DimensionError("band " + std::to_string(b) + " does not share the cube geometry");
        if (!std::isfinite(wavelengths[b])) throw InvalidInputError("wavelength is not finite");
        if (b > 0 && !(wavelengths[b] > wavelengths[b - 1])) throw InvalidInputError("wavelengths must be strictly increasing");
    }
}

HyperspectralCube HyperspectralCube::from_raster(const Raster& raster) {
    HyperspectralCube c{raster.geometry, raster.wavelengths, raster.bands};
    c.validate();
    return c;
}

Raster HyperspectralCube::to_raster() const { return {geometry, bands, wavelengths}; }

std::size_t nearest_band(const HyperspectralCube& cube, double nm, double tolerance) {
    cube.validate();
    std::size_t best = 0;
    for (std::size_t b = 1; b < cube.wavelengths.size(); ++b)
        if (std::abs(cube.wavelengths[b] - nm) < std::abs(cube.wavelengths[best] - nm)) best = b;
    if (std::abs(cube.wavelengths[best] - nm) > tolerance) {
        std::ostringstream os;
        os << "no band within " << tolerance << " nm of " << nm << " nm (cube spans " << cube.wavelengths.front() << "-"
           << cube.wavelengths.back() << " nm)";
        throw CoverageError(os.str());
    }
    return best;
}

ScalarImage rgb_composite(const HyperspectralCube& cube) {
    return grey_from_rgb({cube.bands[nearest_band(cube, 640.0)], cube.bands[nearest_band(cube, 549.0)],
                          cube.bands[nearest_band(cube, 460.0)]});
}

ScalarImage grey_from_rgb(const std::vector<ScalarImage>& channels) {
    if (channels.size() != 3) throw InvalidInputError("expected 3 channels, got " + std::to_string(channels.size()));
    const GridGeometry& g = channels[0].geometry();
    for (const auto& c : channels)
        if (!(c.geometry() == g)) throw DimensionError("channels do not share a geometry");
    std::vector<double> v(g.size());
    std::vector<std::uint8_t> m;
    const bool any_mask = channels[0].has_mask() || channels[1].has_mask() || channels[2].has_mask();
    if (any_mask) m.assign(g.size(), 0);
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (any_mask && (channels[0].masked(i) || channels[1].masked(i) || channels[2].masked(i))) {
            m[i] = 1;
            continue;
        }
        v[i] = (channels[0][i] + channels[1][i] + channels[2][i]) / 3.0;
    }
    return {g, std::move(v), std::move(m)};
}

void Footprint::validate() const {
    if (!(std::isfinite(min_easting) && std::isfinite(max_easting) && std::isfinite(min_northing) && std::isfinite(max_northing)))
        throw InvalidInputError("footprint bounds must be finite");
    if (!(max_easting > min_easting && max_northing > min_northing)) throw InvalidInputError("footprint is empty");
}

Footprint Footprint::of(const GridGeometry& g) { return {g.min_easting(), g.max_easting(), g.min_northing(), g.max_northing()}; }

void PhotoMetadata::validate() const {
    if (!std::isfinite(centre_easting) || !std::isfinite(centre_northing)) throw InvalidInputError("photo centre must be finite");
    if (!(std::isfinite(pixel_pitch) && pixel_pitch > 0.0)) throw InvalidInputError("pixel pitch must be finite and positive");
    if (width < 0 || height < 0) throw InvalidInputError("photo dimensions must be non-negative");
}

Footprint estimate_footprint(const PhotoMetadata& meta) {
    meta.validate();
    const double w = meta.pixel_pitch * meta.width + 300.0;
    const double h = meta.pixel_pitch * meta.height + 300.0;
    return {meta.centre_easting - 0.5 * w, meta.centre_easting + 0.5 * w, meta.centre_northing - 0.5 * h,
            meta.centre_northing + 0.5 * h};
}

ScalarImage crop_to_footprint(const ScalarImage& image, const Footprint& region) {
    region.validate();
    const GridGeometry& g = image.geometry();
    const auto [x0, x1] = overlapping_cells(g.origin_easting, g.spacing_x, g.width, region.min_easting, region.max_easting);
    const auto [y0, y1] = overlapping_cells(g.origin_northing, g.spacing_y, g.height, region.min_northing, region.max_northing);
    if (x0 >= x1 || y0 >= y1) throw PlacementError("image does not overlap the footprint");
    return crop_cells(image, x0, x1, y0, y1);
}

std::pair<ScalarImage, ScalarImage> crop_to_overlap(const ScalarImage& a, const ScalarImage& b) {
    const Footprint fa = Footprint::of(a.geometry());
    const Footprint fb = Footprint::of(b.geometry());
    const Footprint both{std::max(fa.min_easting, fb.min_easting), std::min(fa.max_easting, fb.max_easting),
                         std::max(fa.min_northing, fb.min_northing), std::min(fa.max_northing, fb.max_northing)};
    if (!(both.max_easting > both.min_easting && both.max_northing > both.min_northing))
        throw PlacementError("image footprints do not intersect");
    return {crop_to_footprint(a, both), crop_to_footprint(b, both)};
}

HyperspectralCube resample_spectral(const HyperspectralCube& cube, const DisplacementField& u) {
    cube.validate();
    if (!cube.geometry.same_shape(u.geometry())) throw DimensionError("displacement grid does not match the cube");
    HyperspectralCube out{cube.geometry, cube.wavelengths, {}};
    out.bands.reserve(cube.bands.size());
    for (const auto& band : cube.bands) out.bands.push_back(warp(band, u, Interpolation::nearest));
    return out;
}

std::string SeamReport::to_text() const {
    std::ostringstream os;
    os.imbue(std::locale::classic());
    os << "# first second easting northing pairs mean_jump\n" << std::setprecision(10);
    for (const auto& s : seams)
        os << s.first << ' ' << s.second << ' ' << s.easting << ' ' << s.northing << ' ' << s.pairs << ' ' << s.mean_jump << '\n';
    return os.str();
}

std::string to_string(SeamPolicy p) { return p == SeamPolicy::last_writer_wins ? "last-writer-wins" : "first-writer-wins"; }

SeamPolicy parse_seam_policy(const std::string& name) {
    if (name == "last-writer-wins") return SeamPolicy::last_writer_wins;
    if (name == "first-writer-wins") return SeamPolicy::first_writer_wins;
    throw ParameterError("unknown seam policy '" + name + "'");
}

Mosaic mosaic(const std::vector<MosaicTile>& tiles, SeamPolicy policy) {
    if (tiles.empty()) throw EmptyInputError("mosaic needs at least one tile");
    const GridGeometry& g0 = tiles[0].image.geometry();
    const double sx = g0.spacing_x, sy = g0.spacing_y;
    std::vector<std::pair<long long, long long>> offset;
    for (const auto& t : tiles) {
        const GridGeometry& g = t.image.geometry();
        if (std::abs(g.spacing_x - sx) > 1e-9 * sx || std::abs(g.spacing_y - sy) > 1e-9 * sy)
            throw PlacementError("tile '" + t.id + "' has a different cell size");
        const double ox = (g.origin_easting - g0.origin_easting) / sx;
        const double oy = (g.origin_northing - g0.origin_northing) / sy;
        if (std::abs(ox - std::round(ox)) > 1e-6 || std::abs(oy - std::round(oy)) > 1e-6)
            throw PlacementError("tile '" + t.id + "' is not on the common grid");
        offset.emplace_back(std::llround(ox), std::llround(oy));
    }
    long long x0 = offset[0].first, y0 = offset[0].second, x1 = x0, y1 = y0;
    for (std::size_t k = 0; k < tiles.size(); ++k) {
        const GridGeometry& g = tiles[k].image.geometry();
        x0 = std::min(x0, offset[k].first);
        y0 = std::min(y0, offset[k].second);
        x1 = std::max(x1, offset[k].first + g.width);
        y1 = std::max(y1, offset[k].second + g.height);
    }
    GridGeometry out = g0;
    out.width = static_cast<int>(x1 - x0);
    out.height = static_cast<int>(y1 - y0);
    out.origin_easting = g0.easting(static_cast<double>(x0));
    out.origin_northing = g0.northing(static_cast<double>(y0));

    std::vector<double> v(out.size(), 0.0);
    std::vector<int> owner(out.size(), -1);
    for (std::size_t k = 0; k < tiles.size(); ++k) {
        const ScalarImage& img = tiles[k].image;
        const GridGeometry& g = img.geometry();
        const int dx = static_cast<int>(offset[k].first - x0), dy = static_cast<int>(offset[k].second - y0);
        for (int y = 0; y < g.height; ++y)
            for (int x = 0; x < g.width; ++x) {
                const std::size_t s = g.index(x, y);
                if (img.masked(s)) continue;
                const std::size_t d = out.index(x + dx, y + dy);
                if (policy == SeamPolicy::first_writer_wins && owner[d] >= 0) continue;
                v[d] = img[s];
                owner[d] = static_cast<int>(k);
            }
    }

    // Value of tile k at mosaic pixel (x, y), if it has data there.
    auto tile_value = [&](std::size_t k, int x, int y, double& v_out) {
        const GridGeometry& g = tiles[k].image.geometry();
        const int tx = x - static_cast<int>(offset[k].first - x0), ty = y - static_cast<int>(offset[k].second - y0);
        if (tx < 0 || ty < 0 || tx >= g.width || ty >= g.height) return false;
        const std::size_t s = g.index(tx, ty);
        if (tiles[k].image.masked(s)) return false;
        v_out = tiles[k].image[s];
        return true;
    };
    struct Acc { double jump = 0.0, px = 0.0, py = 0.0; std::size_t n = 0; };
    std::map<std::pair<int, int>, Acc> acc;
    auto visit = [&](int xa, int ya, int xb, int yb) {
        const std::size_t a = out.index(xa, ya), b = out.index(xb, yb);
        const int oa = owner[a], ob = owner[b];
        if (oa < 0 || ob < 0 || oa == ob) return;
        double jump = 0.0;
        int both = 0;
        for (const auto& [x, y] : {std::pair{xa, ya}, std::pair{xb, yb}}) {
            double va = 0.0, vb = 0.0;
            if (tile_value(oa, x, y, va) && tile_value(ob, x, y, vb)) {
                jump += std::abs(va - vb);
                ++both;
            }
        }
        jump = both > 0 ? jump / both : std::abs(v[a] - v[b]);
        Acc& s = acc[{std::min(oa, ob), std::max(oa, ob)}];
        s.jump += jump;
        s.px += 0.5 * (xa + xb);
        s.py += 0.5 * (ya + yb);
        ++s.n;
    };
    for (int y = 0; y < out.height; ++y)
        for (int x = 0; x < out.width; ++x) {
            if (x + 1 < out.width) visit(x, y, x + 1, y);
            if (y + 1 < out.height) visit(x, y, x, y + 1);
        }

    Mosaic m;
    for (const auto& [key, s] : acc) {
        const double n = static_cast<double>(s.n);
        m.seams.seams.push_back({tiles[key.first].id, tiles[key.second].id, out.easting(s.px / n), out.northing(s.py / n), s.n, s.jump / n});
    }
    std::vector<std::uint8_t> mask(out.size(), 0);
    for (std::size_t i = 0; i < out.size(); ++i) mask[i] = owner[i] < 0 ? 1 : 0;
    m.image = ScalarImage(out, std::move(v), std::move(mask));
    m.owner = std::move(owner);
    return m;
}

}  // namespace ngfreg
