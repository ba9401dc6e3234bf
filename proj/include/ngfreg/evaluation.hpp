#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ngfreg/affine.hpp"
#include "ngfreg/grid.hpp"
#include "ngfreg/registration.hpp"

namespace ngfreg {

struct Difference {
    ScalarImage map;  // |a - b|, joint mask
    double mean_abs_diff = 0.0;
};

Difference difference_map(const ScalarImage& a, const ScalarImage& b);

// Display convention: white where the images agree, max - |a - b|.
ScalarImage difference_complement(const ScalarImage& diff);

// a where (floor(x / tile) + floor(y / tile)) is even, b elsewhere.
ScalarImage checkerboard(const ScalarImage& a, const ScalarImage& b, int tile);

enum class DeformationKind { affine, gaussian_bump, composite };

std::string to_string(DeformationKind k);
DeformationKind parse_deformation(const std::string& name);

struct BumpParams {
    double centre_x = 0.0;
    double centre_y = 0.0;
    double amplitude = 0.0;  // pixels
    double sigma = 10.0;     // pixels
    double direction_x = 1.0;
    double direction_y = 0.0;
};

struct DeformationParams {
    AffineParams affine;
    BumpParams bump;
};

struct SyntheticDeformation {
    DeformationKind kind = DeformationKind::affine;
    DeformationParams params;
    DisplacementField field;
};

// Affine: u = x - (A x + t). Bump: u = amplitude exp(-|x - c|^2 / 2 sigma^2)
// along the unit direction. Composite: the sum of both.
SyntheticDeformation make_deformation(DeformationKind kind, const DeformationParams& params, const GridGeometry& g);

struct EndpointError {
    double mean = 0.0;
    double max = 0.0;
};

// Pointwise |u_est - u_true|; pixels with a non-zero `exclude` entry are skipped.
EndpointError endpoint_error(const DisplacementField& u_est, const DisplacementField& u_true, std::span<const std::uint8_t> exclude = {});

// Analytic scene-like test pattern in (0, 1), defined on the whole plane:
// weak plane-wave background under rotated rectangles and discs with edges
// about a pixel wide.
class Texture {
public:
    explicit Texture(std::uint64_t seed, double extent = 256.0);
    double operator()(double x, double y) const;
    ScalarImage render(const GridGeometry& g) const;

private:
    struct Wave { double amplitude, kx, ky, phase; };
    struct Disc { double cx, cy, radius, edge, weight; };
    struct Rect { double cx, cy, half_w, half_h, c, s, edge, weight; };
    std::vector<Wave> waves_;
    std::vector<Disc> discs_;
    std::vector<Rect> rects_;
};

struct SyntheticPair {
    ScalarImage T;
    ScalarImage R;
    DisplacementField u_true;
    // 1 where x - u_true(x) leaves the image (excluded from endpoint error).
    std::vector<std::uint8_t> outside;
};

// R = texture(x); T chosen so that T(x - u_true(x)) = R(x) exactly, by
// solving x = y + u_true(x) for each template pixel y.
SyntheticPair synthesize_pair(const Texture& texture, const GridGeometry& g, const DisplacementField& u_true);

enum class Method { nonparametric, affine };

std::string to_string(Method m);
Method parse_method(const std::string& name);

struct Scenario {
    std::string name = "scenario";
    int width = 128;
    int height = 128;
    std::uint64_t seed = 1;
    DeformationKind kind = DeformationKind::affine;
    DeformationParams params;
    Method method = Method::nonparametric;
    RegistrationConfig config;  // config.measure selects the distance
    double noise = 0.0;          // std-dev of iid Gaussian noise added to T and R
    int checkerboard_tile = 16;
};

struct MetricReport {
    std::string scenario;
    std::string method;
    std::string measure;
    bool ok = true;
    std::string error;
    double mean_abs_diff_unregistered = 0.0;
    double mean_abs_diff = 0.0;
    double endpoint_error_mean = 0.0;
    double endpoint_error_max = 0.0;
    int iterations = 0;
    double wall_time = 0.0;  // seconds; the only field that varies between identical runs

    std::string to_json() const;
};

struct ExperimentOutcome {
    MetricReport report;
    SyntheticPair pair;
    DisplacementField u;
    ScalarImage registered;
    ScalarImage difference;
    ScalarImage checkerboard;
    RegistrationTrace trace;
    AffineParams affine;  // identity for the non-parametric method
};

// Registration failures are reported through report.ok / report.error.
ExperimentOutcome run_experiment(const Scenario& scenario);

}  // namespace ngfreg
