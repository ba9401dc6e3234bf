#pragma once

#include <array>
#include <string>

#include "ngfreg/grid.hpp"
#include "ngfreg/registration.hpp"
#include "ngfreg/similarity.hpp"

namespace ngfreg {

// x -> A x + t in pixel coordinates of the grid it is applied to.
struct AffineParams {
    double a11 = 1.0, a12 = 0.0, a21 = 0.0, a22 = 1.0;
    double t_x = 0.0, t_y = 0.0;

    static AffineParams identity() { return {}; }
    double determinant() const { return a11 * a22 - a12 * a21; }
    // Throws InvalidInputError unless finite with det(A) > 1e-6.
    void validate() const;

    // Six numbers "a11 a12 a21 a22 t_x t_y" on one line.
    std::string to_record() const;
    static AffineParams from_record(const std::string& line);
};

struct Point {
    double x = 0.0;
    double y = 0.0;
};

Point affine_apply(const AffineParams& p, Point x);

// u(x) = x - (A x + t), so warp(T, u) samples T at A x + t.
DisplacementField affine_to_displacement(const AffineParams& p, const GridGeometry& g);

// Rotation by `degrees` and isotropic `scale` about the grid centre followed
// by a translation.
AffineParams similarity_about_centre(const GridGeometry& g, double degrees, double scale, double t_x, double t_y);

struct AffineResult {
    AffineParams params;
    RegistrationTrace trace;
};

// Multilevel minimization of the distance over the six parameters, from the
// identity on the coarsest level. Uses Gauss-Newton when cfg.solver is
// gauss-newton and preconditioned l-BFGS otherwise; cfg.alpha is unused.
AffineResult register_affine(const ScalarImage& T, const ScalarImage& R, Measure measure, const RegistrationConfig& cfg);

}  // namespace ngfreg
