#include <cmath>
#include <numeric>

#include "doctest.h"
#include "ngfreg/curvature.hpp"
#include "ngfreg/errors.hpp"
#include "ngfreg/evaluation.hpp"
#include "ngfreg/registration.hpp"
#include "oracles.hpp"

using namespace ngfreg;

namespace {

ScalarImage shifted(const ScalarImage& img, double dx, double dy) {
    const GridGeometry& g = img.geometry();
    std::vector<double> v(g.size());
    for (int y = 0; y < g.height; ++y)
        for (int x = 0; x < g.width; ++x) v[g.index(x, y)] = oracle::cubic(img, x - dx, y - dy);
    return {g, std::move(v)};
}

ScalarImage texture_image(int size, std::uint64_t seed) { return Texture(seed, size).render(pixel_grid(size, size)); }

double mean(std::span<const double> v) { return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size()); }

void check_monotone(const RegistrationTrace& trace) {
    for (const auto& level : trace.levels) CHECK(level.final_objective <= level.initial_objective);
    double prev = 0.0;
    int prev_level = -1;
    for (const auto& r : trace.records) {
        if (r.level == prev_level) CHECK(r.objective <= prev);
        prev = r.objective;
        prev_level = r.level;
    }
}

}  // namespace

TEST_CASE("solver names") {
    for (Solver s : {Solver::semi_implicit, Solver::gauss_newton, Solver::lbfgs, Solver::trust_region}) CHECK(parse_solver(to_string(s)) == s);
    CHECK(parse_solver("L_BFGS") == Solver::lbfgs);
    CHECK_THROWS_AS(parse_solver("newton"), ParameterError);
}

TEST_CASE("config validation") {
    RegistrationConfig c;
    CHECK_NOTHROW(c.validate());
    CHECK(RegistrationConfig::hs_to_lidar().alpha == 5000.0);
    CHECK(RegistrationConfig::hs_to_lidar().eta == 0.1);
    CHECK(RegistrationConfig::photo_to_hs().alpha == 1.5e5);
    CHECK(RegistrationConfig::photo_to_hs().eta == 0.03);
    auto bad = [](auto edit) {
        RegistrationConfig c;
        edit(c);
        CHECK_THROWS_AS(c.validate(), ParameterError);
    };
    bad([](RegistrationConfig& c) { c.alpha = 0.0; });
    bad([](RegistrationConfig& c) { c.eta = -1.0; });
    bad([](RegistrationConfig& c) { c.dt = 0.0; });
    bad([](RegistrationConfig& c) { c.rel_tolerance = 1.0; });
    bad([](RegistrationConfig& c) { c.rel_tolerance = 0.0; });
    bad([](RegistrationConfig& c) { c.max_levels = 0; });
    bad([](RegistrationConfig& c) { c.alpha = std::nan(""); });
}

TEST_CASE("objective basics") {
    const auto T = oracle::smooth_image(16, 16, 1);
    RegistrationConfig c;
    c.measure = Measure::ssd;
    const auto zero = DisplacementField::zeros(T.geometry());
    const auto same = objective(zero, T, T, c);
    CHECK(same.objective == 0.0);
    CHECK(same.gradient.max_abs() < 1e-14);

    const auto R = oracle::smooth_image(16, 16, 2);
    for (Measure m : {Measure::ssd, Measure::ncc, Measure::mi, Measure::ngf}) {
        c.measure = m;
        const auto o = objective(zero, T, R, c);
        CHECK(o.regularizer == 0.0);
        CHECK(o.objective == doctest::Approx(evaluate(m, T, R, c.measure_options()).value).epsilon(1e-12));
    }

    CHECK_THROWS_AS(objective(zero, T, oracle::smooth_image(16, 15, 2), c), DimensionError);
    CHECK_THROWS_AS(objective(zero, oracle::random_image(16, 16, 3, 0.0, 2.0), R, c), RangeError);
    CHECK_THROWS_AS(objective(DisplacementField::zeros(pixel_grid(8, 8)), T, R, c), DimensionError);
}

TEST_CASE("objective value matches an independent composition") {
    const auto T = oracle::random_image(16, 16, 11);
    const auto R = oracle::random_image(16, 16, 12);
    const auto u = oracle::smooth_field(T.geometry(), 13, 2.3);
    RegistrationConfig c;
    c.alpha = 0.7;
    c.eta = 0.05;
    c.measure = Measure::ngf;
    const GridGeometry& g = T.geometry();
    std::vector<double> tw(g.size());
    for (int y = 0; y < g.height; ++y)
        for (int x = 0; x < g.width; ++x) {
            const std::size_t i = g.index(x, y);
            tw[i] = oracle::cubic(T, x - u.ux()[i], y - u.uy()[i]);
        }
    const ScalarImage Tw(g, tw);
    double s = 0.0;
    for (auto comp : {u.ux(), u.uy()})
        for (double v : oracle::laplacian(oracle::remove_affine({comp.begin(), comp.end()}, 16, 16), 16, 16)) s += 0.5 * v * v;
    const auto o = objective(u, T, R, c);
    CHECK(o.distance == doctest::Approx(oracle::ngf_value(Tw, R, c.eta)).epsilon(1e-10));
    CHECK(o.regularizer == doctest::Approx(c.alpha * s).epsilon(1e-10));
    CHECK(o.objective == doctest::Approx(o.distance + o.regularizer).epsilon(1e-14));
}

TEST_CASE("objective gradient matches finite differences for every measure") {
    const auto T = oracle::random_image(16, 16, 21, 0.05, 0.95);
    const auto R = oracle::random_image(16, 16, 22, 0.05, 0.95);
    const auto u = oracle::smooth_field(T.geometry(), 23, 1.7);
    for (Measure m : {Measure::ssd, Measure::ncc, Measure::mi, Measure::ngf}) {
        CAPTURE(to_string(m));
        RegistrationConfig c;
        c.measure = m;
        c.alpha = 0.3;
        const auto o = objective(u, T, R, c);
        const auto f = [&](const std::vector<double>& x) { return objective(DisplacementField::from_packed(T.geometry(), x), T, R, c).objective; };
        const auto fd = oracle::fd_gradient(f, u.packed(), 1e-6);
        CHECK(oracle::rel_error(o.gradient.packed(), fd) < 1e-4);
    }
}

TEST_CASE("semi-implicit step") {
    const auto R = oracle::smooth_image(32, 32, 31);
    RegistrationConfig c;
    c.measure = Measure::ssd;
    c.alpha = 10.0;
    const auto zero = DisplacementField::zeros(R.geometry());

    const auto fixed = semi_implicit_step(zero, R, R, c);
    CHECK(fixed.u.max_abs() < 1e-14);
    CHECK(fixed.force_norm < 1e-14);

    const auto T = shifted(R, 1.0, 0.0);
    const double before = objective(zero, T, R, c).objective;
    const auto step = semi_implicit_step(zero, T, R, c);
    CHECK(step.force_norm > 0.0);
    CHECK(objective(step.u, T, R, c).objective < before);
}

TEST_CASE("iterating the semi-implicit step reaches a stationary point") {
    const auto R = oracle::smooth_image(32, 32, 41);
    const auto T = shifted(R, 0.6, -0.4);
    RegistrationConfig c;
    c.measure = Measure::ssd;
    c.alpha = 10.0;
    c.dt = 20.0;
    auto u = DisplacementField::zeros(R.geometry());
    double change = 1.0;
    int it = 0;
    for (; it < 5000 && change >= 1e-6; ++it) {
        auto next = semi_implicit_step(u, T, R, c).u;
        change = std::max(oracle::max_abs_diff(next.ux(), u.ux()), oracle::max_abs_diff(next.uy(), u.uy()));
        u = std::move(next);
    }
    CHECK(change < 1e-6);
    CHECK(objective(u, T, R, c).gradient.max_abs() < 1e-3);
}

TEST_CASE("register_level on identical images") {
    const auto R = texture_image(48, 3);
    for (Solver s : {Solver::semi_implicit, Solver::lbfgs, Solver::gauss_newton, Solver::trust_region}) {
        CAPTURE(to_string(s));
        RegistrationConfig c;
        c.measure = Measure::ssd;
        c.solver = s;
        const auto r = register_level(R, R, DisplacementField::zeros(R.geometry()), c);
        CHECK(r.u.max_abs() < 1e-12);
        REQUIRE(r.trace.levels.size() == 1);
        CHECK(r.trace.levels[0].iterations <= 2);
        CHECK(r.trace.levels[0].converged);
    }
}

TEST_CASE("translation recovery and solver comparison") {
    const auto R = texture_image(128, 5);
    const auto T = shifted(R, 2.0, 0.0);
    RegistrationConfig c;
    c.measure = Measure::ssd;
    c.solver = Solver::semi_implicit;
    const auto semi = register_multilevel(T, R, c);
    CHECK(std::abs(mean(semi.u.ux()) + 2.0) < 0.1);
    CHECK(std::abs(mean(semi.u.uy())) < 0.1);
    check_monotone(semi.trace);

    c.solver = Solver::lbfgs;
    const auto lbfgs = register_multilevel(T, R, c);
    CHECK(std::abs(mean(lbfgs.u.ux()) + 2.0) < 0.1);
    CHECK(lbfgs.trace.total_iterations() < semi.trace.total_iterations());
    check_monotone(lbfgs.trace);

    for (Solver s : {Solver::gauss_newton, Solver::trust_region}) {
        CAPTURE(to_string(s));
        c.solver = s;
        const auto r = register_multilevel(T, R, c);
        CHECK(std::abs(mean(r.u.ux()) + 2.0) < 0.1);
        check_monotone(r.trace);
    }
}

TEST_CASE("multilevel on identical images stays at zero") {
    const auto R = texture_image(128, 7);
    for (Measure m : {Measure::ngf, Measure::ssd, Measure::ncc, Measure::mi}) {
        CAPTURE(to_string(m));
        RegistrationConfig c;
        c.measure = m;
        const auto r = register_multilevel(R, R, c);
        CHECK(r.u.max_abs() < 0.05);
        CHECK(r.trace.levels.size() == 3);
        check_monotone(r.trace);
    }
}

TEST_CASE("multilevel never ends above its prolonged initializer") {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        Scenario s;
        s.seed = seed;
        s.kind = DeformationKind::composite;
        s.params.affine = similarity_about_centre(pixel_grid(128, 128), 1.0, 1.01, 1.0, -0.5);
        s.params.bump = {60.0, 70.0, 2.0, 12.0, 0.6, 0.8};
        const auto o = run_experiment(s);
        REQUIRE(o.report.ok);
        check_monotone(o.trace);
        CHECK(o.report.mean_abs_diff <= o.report.mean_abs_diff_unregistered);
    }
}

TEST_CASE("trace log") {
    const auto R = texture_image(64, 9);
    const auto T = shifted(R, 1.0, 0.5);
    const auto r = register_multilevel(T, R, RegistrationConfig{});
    const std::string log = r.trace.to_log();
    CHECK(std::count(log.begin(), log.end(), '\n') == static_cast<long>(r.trace.records.size()) + 1);
    CHECK(log.rfind("# level iteration", 0) == 0);
    int total = 0;
    for (const auto& l : r.trace.levels) total += l.iterations;
    CHECK(r.trace.total_iterations() == total);
    CHECK(static_cast<int>(r.trace.records.size()) == total);
}

TEST_CASE("register rejects unnormalized input") {
    const auto R = texture_image(32, 1);
    const auto bad = oracle::random_image(32, 32, 2, 0.0, 255.0);
    CHECK_THROWS_AS(register_multilevel(bad, R, RegistrationConfig{}), RangeError);
}
