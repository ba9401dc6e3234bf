#include <cmath>
#include <filesystem>
#include <set>

#include "doctest.h"
#include "ngfreg/errors.hpp"
#include "ngfreg/grid.hpp"
#include "ngfreg/raster_io.hpp"
#include "oracles.hpp"

using namespace ngfreg;

namespace {

ScalarImage ramp(int w, int h, double a, double b, double c = 0.0) {
    std::vector<double> v(static_cast<std::size_t>(w) * h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) v[static_cast<std::size_t>(y) * w + x] = a * x + b * y + c;
    return {pixel_grid(w, h), v};
}

}  // namespace

TEST_CASE("geometry validation") {
    CHECK_THROWS_AS(ScalarImage(pixel_grid(1, 4), std::vector<double>(4)), InvalidInputError);
    GridGeometry g = pixel_grid(4, 4);
    g.spacing_x = 0.0;
    CHECK_THROWS_AS(g.validate(), InvalidInputError);
    CHECK_THROWS_AS(ScalarImage(pixel_grid(3, 3), std::vector<double>(8)), InvalidInputError);
    std::vector<double> v(9, 1.0);
    v[4] = std::nan("");
    CHECK_THROWS_AS(ScalarImage(pixel_grid(3, 3), v), InvalidInputError);
    std::vector<std::uint8_t> m(9, 0);
    m[4] = 1;
    CHECK_NOTHROW(ScalarImage(pixel_grid(3, 3), v, m));
}

TEST_CASE("world coordinates round trip") {
    GridGeometry g{10, 7, 2.0, 0.5, 1000.0, 500.0};
    for (int x = 0; x < g.width; ++x) CHECK(g.pixel_x(g.easting(x)) == doctest::Approx(x));
    CHECK(g.min_easting() == doctest::Approx(999.0));
    CHECK(g.max_northing() == doctest::Approx(500.0 + 6.5 * 0.5));
}

TEST_CASE("sample") {
    const auto c = ScalarImage::filled(pixel_grid(5, 5), 7.0);
    CHECK(sample(c, 2.3, 1.7, Interpolation::bilinear).value == doctest::Approx(7.0));
    CHECK(sample(ramp(4, 4, 1, 0), 1.5, 2.0, Interpolation::bilinear).value == doctest::Approx(1.5));
    CHECK_THROWS_AS(sample(c, std::nan(""), 1.0, Interpolation::bilinear), InvalidInputError);
    const Sample out = sample(c, -0.6, 1.0, Interpolation::bilinear, -1.0);
    CHECK_FALSE(out.in_domain);
    CHECK(out.value == -1.0);

    const auto img = oracle::random_image(8, 8, 11);
    const auto pts = oracle::uniform(200, 12, 0.0, 7.0);
    for (std::size_t k = 0; k < 100; ++k) {
        const double x = pts[2 * k], y = pts[2 * k + 1];
        CHECK(std::abs(sample(img, x, y, Interpolation::bilinear).value - oracle::bilinear(img, x, y)) < 1e-12);
        const double nx = std::round(x), ny = std::round(y);
        CHECK(sample(img, x, y, Interpolation::nearest).value == img(int(nx), int(ny)));
    }
}

TEST_CASE("sample_with_gradient matches finite differences") {
    const auto img = oracle::smooth_image(12, 10, 3);
    const auto pts = oracle::uniform(40, 4, 0.3, 8.7);
    for (std::size_t k = 0; k < 20; ++k) {
        const double x = pts[2 * k], y = pts[2 * k + 1];
        const auto s = sample_with_gradient(img, x, y);
        const double h = 1e-6;
        const double fx = (oracle::bilinear(img, x + h, y) - oracle::bilinear(img, x - h, y)) / (2 * h);
        const double fy = (oracle::bilinear(img, x, y + h) - oracle::bilinear(img, x, y - h)) / (2 * h);
        CHECK(s.d_dx == doctest::Approx(fx).epsilon(1e-6));
        CHECK(s.d_dy == doctest::Approx(fy).epsilon(1e-6));
    }
}

TEST_CASE("sample_smooth") {
    const auto img = oracle::random_image(11, 9, 31);
    for (int y = 0; y < 9; ++y)
        for (int x = 0; x < 11; ++x) CHECK(sample_smooth(img, x, y).value == doctest::Approx(img(x, y)).epsilon(1e-14));
    const auto pts = oracle::uniform(120, 32, -4.0, 14.0);
    const double h = 1e-6;
    for (std::size_t k = 0; k < 60; ++k) {
        const double x = pts[2 * k], y = pts[2 * k + 1] * 0.8;
        const auto s = sample_smooth(img, x, y);
        CHECK(s.in_domain);
        CHECK(s.value == doctest::Approx(oracle::cubic(img, x, y)).epsilon(1e-12));
        const double fx = (oracle::cubic(img, x + h, y) - oracle::cubic(img, x - h, y)) / (2 * h);
        const double fy = (oracle::cubic(img, x, y + h) - oracle::cubic(img, x, y - h)) / (2 * h);
        CHECK(s.d_dx == doctest::Approx(fx).epsilon(1e-6).scale(1.0));
        CHECK(s.d_dy == doctest::Approx(fy).epsilon(1e-6).scale(1.0));
    }
    // The derivative is continuous across lattice nodes and the border.
    for (double x : {3.0, 0.0, -2.0, 10.0}) {
        const auto l = sample_smooth(img, x - 1e-9, 4.3), r = sample_smooth(img, x + 1e-9, 4.3);
        CHECK(std::abs(l.d_dx - r.d_dx) < 1e-7);
    }
    CHECK(sample_smooth(img, -50.0, 100.0).value == img(0, 8));
    CHECK(sample_smooth(img, -50.0, 100.0).d_dx == 0.0);
}

TEST_CASE("smooth_support_masked") {
    std::vector<std::uint8_t> mask(64, 0);
    mask[3 * 8 + 5] = 1;
    const ScalarImage img(pixel_grid(8, 8), std::vector<double>(64, 0.5), mask);
    CHECK(smooth_support_masked(img, 5.0, 3.0));
    CHECK_FALSE(smooth_support_masked(img, 4.0, 3.0));
    CHECK(smooth_support_masked(img, 3.5, 3.0));
    CHECK(smooth_support_masked(img, 6.9, 1.2));
    CHECK_FALSE(smooth_support_masked(img, 1.5, 1.5));
    CHECK_FALSE(smooth_support_masked(oracle::random_image(8, 8, 1), 5.0, 3.0));
}

TEST_CASE("warp") {
    const auto img = oracle::random_image(9, 7, 5);
    for (auto mode : {Interpolation::bilinear, Interpolation::nearest}) {
        const auto out = warp(img, DisplacementField::zeros(img.geometry()), mode);
        CHECK_FALSE(out.has_mask());
        for (std::size_t i = 0; i < img.size(); ++i) CHECK(out[i] == img[i]);
    }
    const auto r = ramp(8, 8, 1, 0);
    const auto shifted = warp(r, DisplacementField::constant(r.geometry(), 1.0, 0.0), Interpolation::bilinear);
    for (int y = 0; y < 8; ++y)
        for (int x = 1; x < 8; ++x) CHECK(shifted(x, y) == doctest::Approx(r(x, y) - 1.0));
    CHECK(shifted.masked(shifted.geometry().index(0, 3)));

    const auto u = oracle::smooth_field(img.geometry(), 6, 1.5);
    const auto w = warp(img, u, Interpolation::bilinear);
    for (int y = 0; y < 7; ++y) {
        for (int x = 0; x < 9; ++x) {
            const std::size_t i = img.geometry().index(x, y);
            const Sample s = sample(img, x - u.ux()[i], y - u.uy()[i], Interpolation::bilinear);
            CHECK(w.masked(i) == !s.in_domain);
            if (s.in_domain) CHECK(w[i] == s.value);
        }
    }
    CHECK_THROWS_AS(warp(img, DisplacementField::zeros(pixel_grid(4, 4)), Interpolation::bilinear), DimensionError);
}

TEST_CASE("cubic warp") {
    const auto img = oracle::random_image(12, 10, 17);
    const auto id = warp(img, DisplacementField::zeros(img.geometry()), Interpolation::cubic);
    CHECK_FALSE(id.has_mask());
    for (std::size_t i = 0; i < img.size(); ++i) CHECK(id[i] == doctest::Approx(img[i]).epsilon(1e-14));

    const auto u = oracle::smooth_field(img.geometry(), 4, 1.8);
    const auto w = warp(img, u, Interpolation::cubic);
    for (int y = 0; y < 10; ++y)
        for (int x = 0; x < 12; ++x) {
            const std::size_t i = img.geometry().index(x, y);
            const double px = x - u.ux()[i], py = y - u.uy()[i];
            const bool inside = px >= -0.5 && px <= 11.5 && py >= -0.5 && py <= 9.5;
            CHECK(w.masked(i) == !inside);
            if (inside) CHECK(w[i] == doctest::Approx(oracle::cubic(img, px, py)).epsilon(1e-12));
        }

    std::vector<std::uint8_t> m(64, 0);
    m[3 * 8 + 5] = 1;
    const ScalarImage holed(pixel_grid(8, 8), oracle::uniform(64, 2), m);
    const auto hw = warp(holed, DisplacementField::constant(holed.geometry(), 0.5, 0.0), Interpolation::cubic);
    for (int x = 0; x < 8; ++x) CHECK(hw.masked(holed.geometry().index(x, 3)) == smooth_support_masked(holed, x - 0.5, 3.0));
    CHECK(hw.masked(holed.geometry().index(7, 3)));
    CHECK_FALSE(hw.masked(holed.geometry().index(1, 3)));
}

TEST_CASE("nearest warp invents no values") {
    const auto img = oracle::random_image(16, 16, 8);
    const auto u = oracle::smooth_field(img.geometry(), 9, 2.7);
    const auto w = warp(img, u, Interpolation::nearest);
    std::set<double> in(img.values().begin(), img.values().end());
    for (std::size_t i = 0; i < w.size(); ++i)
        if (!w.masked(i)) CHECK(in.count(w[i]) == 1);
}

TEST_CASE("warp masks samples touching nodata") {
    std::vector<std::uint8_t> m(16, 0);
    m[5] = 1;  // (1,1)
    const ScalarImage img(pixel_grid(4, 4), oracle::uniform(16, 1), m);
    const auto w = warp(img, DisplacementField::constant(img.geometry(), 0.5, 0.0), Interpolation::bilinear);
    CHECK(w.masked(5));
    CHECK(w.masked(6));
    CHECK_FALSE(w.masked(9));
}

TEST_CASE("gradient") {
    const auto c = ScalarImage::filled(pixel_grid(6, 6), 3.0);
    auto [cx, cy] = gradient(c);
    for (std::size_t i = 0; i < c.size(); ++i) CHECK((cx[i] == 0.0 && cy[i] == 0.0));
    auto [gx, gy] = gradient(ramp(6, 5, 3, 2));
    for (std::size_t i = 0; i < gx.size(); ++i) {
        CHECK(gx[i] == doctest::Approx(3.0));
        CHECK(gy[i] == doctest::Approx(2.0));
    }
    GridGeometry g = pixel_grid(8, 8);
    g.spacing_x = 2.0;
    g.spacing_y = 0.5;
    const ScalarImage img(g, oracle::uniform(64, 3));
    auto [ax, ay] = gradient(img);
    std::vector<double> ox, oy;
    oracle::gradient(img, ox, oy);
    CHECK(oracle::max_abs_diff(ax.values(), ox) < 1e-12);
    CHECK(oracle::max_abs_diff(ay.values(), oy) < 1e-12);
}

TEST_CASE("laplacian") {
    const auto lin = laplacian(ramp(7, 6, 0.3, -1.2, 4.0));
    for (int y = 1; y < 5; ++y)
        for (int x = 1; x < 6; ++x) CHECK(std::abs(lin(x, y)) < 1e-12);
    std::vector<double> v(49);
    for (int y = 0; y < 7; ++y)
        for (int x = 0; x < 7; ++x) v[y * 7 + x] = double(x) * x;
    const auto sq = laplacian(ScalarImage(pixel_grid(7, 7), v));
    for (int y = 1; y < 6; ++y)
        for (int x = 1; x < 6; ++x) CHECK(sq(x, y) == doctest::Approx(2.0));
    GridGeometry g = pixel_grid(9, 6);
    g.spacing_x = 1.5;
    g.spacing_y = 0.7;
    const ScalarImage r(g, oracle::uniform(54, 2));
    CHECK(oracle::max_abs_diff(laplacian(r).values(), oracle::laplacian(std::vector<double>(r.values().begin(), r.values().end()), 9, 6, 1.5, 0.7)) < 1e-12);
}

TEST_CASE("pyramid") {
    CHECK(build_pyramid(oracle::random_image(32, 32, 1), 5).levels.size() == 1);
    const auto p = build_pyramid(ScalarImage::filled(pixel_grid(128, 128), 0.25), 6);
    CHECK(p.levels.size() == 3);
    for (const auto& l : p.levels)
        for (double v : l.values()) CHECK(v == 0.25);

    const auto img = oracle::random_image(64, 48, 4);
    const auto p2 = build_pyramid(img, 2, 16);
    REQUIRE(p2.levels.size() == 2);
    const auto& c = p2.levels[1];
    CHECK(c.width() == 32);
    CHECK(c.height() == 24);
    double mean_f = 0, mean_c = 0;
    for (int y = 0; y < 24; ++y) {
        for (int x = 0; x < 32; ++x) {
            const double m = 0.25 * (img(2 * x, 2 * y) + img(2 * x + 1, 2 * y) + img(2 * x, 2 * y + 1) + img(2 * x + 1, 2 * y + 1));
            CHECK(std::abs(c(x, y) - m) < 1e-12);
            mean_c += c(x, y);
        }
    }
    for (double v : img.values()) mean_f += v;
    CHECK(std::abs(mean_f / img.size() - mean_c / c.size()) < 1e-12);
    CHECK(build_pyramid(img, 2).levels.size() == 1);

    const auto odd = build_pyramid(oracle::random_image(129, 67, 5), 3, 32);
    REQUIRE(odd.levels.size() == 2);
    CHECK(odd.levels[1].width() == 65);
    CHECK(odd.levels[1].height() == 34);
    CHECK(odd.levels[1].geometry().origin_easting == doctest::Approx(0.5));
    CHECK(odd.levels[1].geometry().spacing_x == 2.0);
    CHECK_THROWS_AS(build_pyramid(img, 0), ParameterError);
}

TEST_CASE("prolong") {
    const GridGeometry fine = pixel_grid(32, 32);
    const GridGeometry coarse = coarser_geometry(fine);
    const auto z = prolong(DisplacementField::zeros(coarse), fine);
    CHECK(z.max_abs() == 0.0);
    const auto c = prolong(DisplacementField::constant(coarse, 1.0, 0.5), fine);
    for (std::size_t i = 0; i < c.size(); ++i) {
        CHECK(c.ux()[i] == doctest::Approx(2.0));
        CHECK(c.uy()[i] == doctest::Approx(1.0));
    }
    // Upsample-then-scale oracle with hat functions.
    const auto ux = oracle::random_image(16, 16, 7);
    const auto uy = oracle::random_image(16, 16, 8);
    const DisplacementField u(coarse, {ux.values().begin(), ux.values().end()}, {uy.values().begin(), uy.values().end()});
    const auto p = prolong(u, fine);
    for (int y = 0; y < 32; ++y) {
        for (int x = 0; x < 32; ++x) {
            const std::size_t i = fine.index(x, y);
            CHECK(std::abs(p.ux()[i] - 2 * oracle::bilinear(ux, x / 2.0 - 0.25, y / 2.0 - 0.25)) < 1e-12);
            CHECK(std::abs(p.uy()[i] - 2 * oracle::bilinear(uy, x / 2.0 - 0.25, y / 2.0 - 0.25)) < 1e-12);
        }
    }
    CHECK_THROWS_AS(prolong(u, pixel_grid(40, 32)), DimensionError);
}

TEST_CASE("prolong then restrict reproduces linear coarse fields") {
    const GridGeometry fine = pixel_grid(40, 24);
    const GridGeometry coarse = coarser_geometry(fine);
    std::vector<double> ux(coarse.size()), uy(coarse.size());
    for (int y = 0; y < coarse.height; ++y)
        for (int x = 0; x < coarse.width; ++x) {
            ux[coarse.index(x, y)] = 0.3 * x - 0.1 * y + 2.0;
            uy[coarse.index(x, y)] = -0.2 * x + 0.05 * y;
        }
    const DisplacementField u(coarse, ux, uy);
    const auto p = prolong(u, fine);
    // Interior coarse cells: 2x2 block mean of the prolonged field, halved.
    for (int y = 1; y < coarse.height - 1; ++y) {
        for (int x = 1; x < coarse.width - 1; ++x) {
            double s = 0.0;
            for (int dy = 0; dy < 2; ++dy)
                for (int dx = 0; dx < 2; ++dx) s += p.ux()[fine.index(2 * x + dx, 2 * y + dy)];
            CHECK(std::abs(s / 8.0 - ux[coarse.index(x, y)]) < 1e-12);
        }
    }
}

TEST_CASE("normalize_intensity") {
    std::vector<double> v(256);
    for (int i = 0; i < 256; ++i) v[i] = i;
    const auto n = normalize_intensity(ScalarImage(pixel_grid(16, 16), v));
    CHECK(n[0] == 0.0);
    CHECK(n[255] == 1.0);
    CHECK(n[51] == doctest::Approx(0.2));
    CHECK(normalize_intensity(n).values()[77] == n[77]);
    const auto r = oracle::random_image(10, 10, 3, -4.0, 9.0);
    const auto rn = normalize_intensity(r);
    CHECK(*std::min_element(rn.values().begin(), rn.values().end()) == 0.0);
    CHECK(*std::max_element(rn.values().begin(), rn.values().end()) == 1.0);
    for (std::size_t i = 1; i < r.size(); ++i) CHECK((r[i] < r[i - 1]) == (rn[i] < rn[i - 1]));
    CHECK_THROWS_AS(normalize_intensity(ScalarImage::filled(pixel_grid(4, 4), 2.0)), DegenerateError);
}

TEST_CASE("resample_to_geometry") {
    GridGeometry src{20, 20, 1.0, 1.0, 100.0, 200.0};
    const ScalarImage img(src, oracle::uniform(400, 9));
    GridGeometry dst{5, 5, 1.0, 1.0, 104.0, 207.0};
    const auto out = resample_to_geometry(img, dst, Interpolation::nearest);
    CHECK_FALSE(out.has_mask());
    CHECK(out(0, 0) == img(4, 7));
    CHECK(out(4, 2) == img(8, 9));
    GridGeometry far{3, 3, 1.0, 1.0, 0.0, 0.0};
    const auto none = resample_to_geometry(img, far, Interpolation::bilinear);
    CHECK(none.unmasked_count() == 0);
}

TEST_CASE("raster container round trip") {
    const auto dir = std::filesystem::temp_directory_path() / "ngfreg_test_raster";
    std::filesystem::create_directories(dir);
    GridGeometry g{6, 4, 1.5, 2.5, 400000.25, 5600000.75};
    std::vector<std::uint8_t> m(24, 0);
    m[3] = 1;
    std::vector<double> v = oracle::uniform(24, 4);
    for (double& x : v) x = static_cast<float>(x);
    const ScalarImage img(g, v, m);
    const auto path = (dir / "a").string();
    write_raster(path, img);
    const auto back = read_raster_band(path, 0);
    CHECK(back.geometry() == g);
    CHECK(back.masked(3));
    for (std::size_t i = 0; i < v.size(); ++i)
        if (i != 3) CHECK(back[i] == v[i]);

    Raster cube{g, {img.without_mask(), img.without_mask()}, {450.0, 550.0}};
    write_raster((dir / "cube").string(), cube);
    const auto c2 = read_raster((dir / "cube").string());
    CHECK(c2.bands.size() == 2);
    CHECK(c2.wavelengths == std::vector<double>{450.0, 550.0});
    CHECK_THROWS_AS(read_raster((dir / "missing").string()), IoError);
    CHECK_THROWS_AS(read_raster_band((dir / "cube").string(), 2), IoError);
}

TEST_CASE("pgm round trip") {
    const auto dir = std::filesystem::temp_directory_path() / "ngfreg_test_raster";
    std::filesystem::create_directories(dir);
    std::vector<double> v(12);
    for (int i = 0; i < 12; ++i) v[i] = i / 11.0;
    const ScalarImage img(pixel_grid(4, 3), v);
    for (int bits : {8, 16}) {
        const auto path = (dir / ("p" + std::to_string(bits) + ".pgm")).string();
        PgmOptions o;
        o.bits = bits;
        write_pgm(path, img, o);
        const auto back = read_pgm(path);
        CHECK(back.width() == 4);
        CHECK(back.height() == 3);
        const double maxv = bits == 8 ? 255.0 : 65535.0;
        for (std::size_t i = 0; i < 12; ++i) CHECK(std::abs(back[i] / maxv - v[i]) <= 0.5 / maxv + 1e-12);
    }
}
