#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "ngfreg/grid.hpp"

namespace ngfreg {

// Distance value and its derivative with respect to each warped-template
// pixel. Masked pixels contribute nothing to either.
struct SimilarityResult {
    double value = 0.0;
    std::vector<double> d_value_d_Twarped;
};

struct NgfField {
    GridGeometry geometry;
    std::vector<double> n_x;
    std::vector<double> n_y;
};

struct MiOptions {
    int bins = 64;
    double parzen_sigma = 1.0;  // in bins
};

enum class Measure { ngf, ssd, ncc, mi };

std::string to_string(Measure m);
// Accepts "ngf", "ssd", "ncc", "mi" in any case; throws ParameterError.
Measure parse_measure(const std::string& name);

struct MeasureOptions {
    double eta = 0.1;
    MiOptions mi;
};

// value = 1/2 sum (Tw - R)^2.
SimilarityResult ssd(const ScalarImage& Tw, const ScalarImage& R);

// value = 1 - rho^2 with rho the zero-mean normalized cross-correlation.
SimilarityResult ncc(const ScalarImage& Tw, const ScalarImage& R);

// value = -MI of the Gaussian-Parzen joint histogram. Intensities must lie
// in [0, 1]; bin centres sit at k / (bins - 1).
SimilarityResult mi(const ScalarImage& Tw, const ScalarImage& R, const MiOptions& options = {});

// n = grad I / sqrt(|grad I|^2 + eta^2).
NgfField ngf_field(const ScalarImage& I, double eta);

// value = sum over valid pixels of 1 - (n_T . n_R)^2. A pixel is valid when
// it and every pixel of its gradient stencil are unmasked in both images.
SimilarityResult ngf_distance(const ScalarImage& Tw, const ScalarImage& R, double eta);

SimilarityResult evaluate(Measure measure, const ScalarImage& Tw, const ScalarImage& R, const MeasureOptions& options);

// Local model of a distance at a fixed warped template: value, gradient and
// a positive semi-definite Gauss-Newton surrogate of the Hessian with
// respect to the warped intensities.
struct MeasureModel {
    double value = 0.0;
    std::vector<double> gradient;
    std::function<void(std::span<const double> v, std::span<double> out)> hessian_apply;
};

MeasureModel linearize(Measure measure, const ScalarImage& Tw, const ScalarImage& R, const MeasureOptions& options);

// Transpose of the gradient() stencil: out = Gx^T qx + Gy^T qy.
std::vector<double> gradient_transpose(const GridGeometry& g, std::span<const double> qx, std::span<const double> qy);

}  // namespace ngfreg
