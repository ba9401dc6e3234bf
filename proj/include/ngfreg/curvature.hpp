#pragma once

#include <array>
#include <memory>
#include <span>
#include <vector>

#include "ngfreg/grid.hpp"

namespace ngfreg {

// Curvature regularization on the pixel lattice (unit spacing, mirrored
// boundaries). Each displacement component is first stripped of its
// least-squares affine part, so the regularizer vanishes exactly on affine
// fields:
//
//   S(u) = 1/2 sum_c |L Q u_c|^2,    B = Q L L Q
//
// where L is the 5-point Neumann Laplacian and Q the orthogonal projector
// onto the complement of span{1, x, y}.

double curvature_energy(const DisplacementField& u);

// Gradient of curvature_energy: B applied componentwise.
DisplacementField bilaplacian(const DisplacementField& u);

// Projects one component onto the complement of span{1, x, y}.
void remove_affine_part(const GridGeometry& g, std::span<double> component);

// Neumann Laplacian with unit spacing.
void pixel_laplacian(const GridGeometry& g, std::span<const double> in, std::span<double> out);

// Solves (I + dt * alpha * B) u = rhs. The Neumann bilaplacian is diagonal
// in the 2-D cosine basis; the affine projection adds a rank-3 correction
// handled with a precomputed 3x3 capacitance matrix.
class SemiImplicitOperator {
public:
    SemiImplicitOperator(const GridGeometry& geometry, double alpha, double dt);

    const GridGeometry& geometry() const { return geometry_; }
    double alpha() const { return alpha_; }
    double dt() const { return dt_; }
    // 1 + dt * alpha * lambda^2 per cosine mode, row-major (ky, kx).
    std::span<const double> spectral_symbol() const { return symbol_; }

    DisplacementField solve(const DisplacementField& rhs) const;
    // Componentwise solve on [ux..., uy...].
    void solve_packed(std::span<const double> rhs, std::span<double> out) const;
    // (I + dt * alpha * B) u.
    DisplacementField apply(const DisplacementField& u) const;

    struct Plans;

private:
    void solve_component(std::span<const double> rhs, std::span<double> out) const;
    void solve_neumann(std::span<const double> rhs, std::span<double> out) const;

    GridGeometry geometry_;
    double alpha_;
    double dt_;
    std::vector<double> symbol_;
    std::array<std::vector<double>, 3> basis_;          // orthonormal 1, x, y
    std::array<std::vector<double>, 3> solved_basis_;   // Neumann solve of each basis vector
    std::array<std::array<double, 3>, 3> capacitance_inv_{};
    std::shared_ptr<const Plans> plans_;
};

}  // namespace ngfreg
