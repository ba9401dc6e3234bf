#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <sstream>
#include <string>

#include "ngfreg/cli.hpp"
#include "ngfreg/evaluation.hpp"
#include "ngfreg/geo.hpp"
#include "ngfreg/raster_io.hpp"

namespace fixture {

namespace fs = std::filesystem;

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("ngfreg_" + name)) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
    fs::path operator/(const std::string& s) const { return path / s; }
};

inline std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

struct CliRun {
    int code = 0;
    std::string out;
    std::string err;
};

inline CliRun cli(const std::vector<std::string>& args) {
    std::ostringstream out, err;
    const int code = ngfreg::run_cli(args, out, err);
    return {code, out.str(), err.str()};
}

// A 48 x 48 m scene: LiDAR returns (about 3 per square metre) whose intensity
// follows a texture, and a 1 m reference raster of the same texture viewed
// through a smooth shift of up to ~1.5 m.
inline void write_scene(const fs::path& dir) {
    const ngfreg::Texture tex(21, 48);
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> u(0.0, 48.0);
    std::poisson_distribution<int> ret(0.4);
    ngfreg::LidarPointCloud cloud;
    for (int i = 0; i < 48 * 48 * 3; ++i) {
        const double e = 500000.0 + u(rng), n = 4100000.0 + u(rng);
        const double v = tex(e - 500000.0, n - 4100000.0);
        cloud.points.push_back({e, n, 30.0 + 5.0 * v, 200.0 * v, 1 + ret(rng), std::fmod(i * 7.0, 256.0)});
    }
    ngfreg::write_lidar_csv(dir / "cloud.csv", cloud);

    ngfreg::GridGeometry g;
    g.width = g.height = 48;
    g.spacing_x = g.spacing_y = 1.0;
    g.origin_easting = 500000.5;
    g.origin_northing = 4100000.5;
    std::vector<double> v(g.size());
    for (int y = 0; y < 48; ++y)
        for (int x = 0; x < 48; ++x) {
            const double px = x + 0.5, py = y + 0.5;
            const double s = 1.5 * std::exp(-((px - 24) * (px - 24) + (py - 24) * (py - 24)) / 300.0);
            v[g.index(x, y)] = 0.2 + 0.6 * tex(px - s, py - 0.5 * s);
        }
    ngfreg::write_raster(dir / "reference.hdr", ngfreg::ScalarImage(g, v));
}

// Two overlapping 72 x 64 tiles of one textured scene, registered against a
// 128 x 64 reference. Tile b carries a Gaussian bump left of its interface
// with tile a; `noise` adds iid Gaussian noise to both tiles.
inline void write_seam_tiles(const fs::path& dir, double noise) {
    const ngfreg::Texture tex(4, 128);
    ngfreg::write_raster(dir / "ref.hdr", tex.render(ngfreg::pixel_grid(128, 64)));
    std::mt19937_64 rng(3);
    std::normal_distribution<double> n(0.0, 1.0);
    for (int k = 0; k < 2; ++k) {
        ngfreg::GridGeometry g = ngfreg::pixel_grid(72, 64);
        g.origin_easting = 56.0 * k;
        std::vector<double> v(g.size());
        for (int y = 0; y < 64; ++y)
            for (int x = 0; x < 72; ++x) {
                const double wx = g.easting(x), wy = y;
                const double b = k == 1 ? 2.5 * std::exp(-((wx - 64) * (wx - 64) + (wy - 32) * (wy - 32)) / 200.0) : 0.0;
                const double z = noise > 0.0 ? noise * n(rng) : 0.0;
                v[g.index(x, y)] = std::clamp(tex(wx - b, wy) + z, 0.0, 1.0);
            }
        ngfreg::write_raster(dir / (k ? "b.hdr" : "a.hdr"), ngfreg::ScalarImage(g, v));
    }
}

// Parses "key value" lines.
inline double report_value(const std::string& text, const std::string& key) {
    std::istringstream is(text);
    std::string k;
    double v = 0.0;
    while (is >> k >> v)
        if (k == key) return v;
    return std::nan("");
}

// Mean jump of the single seam in a seam report.
inline double seam_jump(const std::string& text) {
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        std::string a, b;
        double e, n, pairs, jump;
        if (ls >> a >> b >> e >> n >> pairs >> jump) return jump;
    }
    return std::nan("");
}

}  // namespace fixture
