#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

namespace ngfreg {

// Planar raster geometry. Pixel (0,0) is centred on (origin_easting,
// origin_northing); x grows with easting and y with northing.
struct GridGeometry {
    int width = 0;
    int height = 0;
    double spacing_x = 1.0;
    double spacing_y = 1.0;
    double origin_easting = 0.0;
    double origin_northing = 0.0;

    // Throws InvalidInputError unless width, height >= 2 and spacings are
    // finite and positive.
    void validate() const;

    std::size_t size() const { return static_cast<std::size_t>(width) * static_cast<std::size_t>(height); }
    std::size_t index(int x, int y) const { return static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x); }

    double easting(double px) const { return origin_easting + px * spacing_x; }
    double northing(double py) const { return origin_northing + py * spacing_y; }
    double pixel_x(double e) const { return (e - origin_easting) / spacing_x; }
    double pixel_y(double n) const { return (n - origin_northing) / spacing_y; }

    // Outer cell edges in world coordinates.
    double min_easting() const { return origin_easting - 0.5 * spacing_x; }
    double max_easting() const { return origin_easting + (width - 0.5) * spacing_x; }
    double min_northing() const { return origin_northing - 0.5 * spacing_y; }
    double max_northing() const { return origin_northing + (height - 0.5) * spacing_y; }

    bool same_shape(const GridGeometry& other) const { return width == other.width && height == other.height; }
    bool operator==(const GridGeometry&) const = default;
};

// Unit-spacing geometry at the origin.
GridGeometry pixel_grid(int width, int height);

// Immutable 2-D intensity raster with an optional nodata mask (1 = masked).
class ScalarImage {
public:
    ScalarImage() = default;
    // Validates geometry, array lengths and finiteness of unmasked values.
    ScalarImage(GridGeometry geometry, std::vector<double> values, std::vector<std::uint8_t> mask = {});

    static ScalarImage filled(const GridGeometry& geometry, double value);

    const GridGeometry& geometry() const { return geometry_; }
    int width() const { return geometry_.width; }
    int height() const { return geometry_.height; }
    std::size_t size() const { return values_.size(); }

    double operator()(int x, int y) const { return values_[geometry_.index(x, y)]; }
    double operator[](std::size_t i) const { return values_[i]; }
    std::span<const double> values() const { return values_; }

    bool has_mask() const { return !mask_.empty(); }
    bool masked(std::size_t i) const { return !mask_.empty() && mask_[i] != 0; }
    std::span<const std::uint8_t> mask() const { return mask_; }
    std::size_t unmasked_count() const;

    ScalarImage with_values(std::vector<double> values) const { return {geometry_, std::move(values), mask_}; }
    ScalarImage with_mask(std::vector<std::uint8_t> mask) const { return {geometry_, values_, std::move(mask)}; }
    ScalarImage without_mask() const { return {geometry_, values_, {}}; }

private:
    GridGeometry geometry_;
    std::vector<double> values_;
    std::vector<std::uint8_t> mask_;
};

// Per-pixel displacement u in pixel units; the transformation is x - u(x).
class DisplacementField {
public:
    DisplacementField() = default;
    DisplacementField(GridGeometry geometry, std::vector<double> ux, std::vector<double> uy);

    static DisplacementField zeros(const GridGeometry& geometry);
    static DisplacementField constant(const GridGeometry& geometry, double ux, double uy);
    // Inverse of packed(): [ux..., uy...].
    static DisplacementField from_packed(const GridGeometry& geometry, std::span<const double> packed);

    const GridGeometry& geometry() const { return geometry_; }
    std::size_t size() const { return ux_.size(); }
    std::span<const double> ux() const { return ux_; }
    std::span<const double> uy() const { return uy_; }
    std::vector<double> packed() const;

    double max_abs() const;

private:
    GridGeometry geometry_;
    std::vector<double> ux_;
    std::vector<double> uy_;
};

struct Pyramid {
    std::vector<ScalarImage> levels;  // 0 = finest
};

enum class Interpolation { bilinear, nearest, cubic };

struct Sample {
    double value = 0.0;
    bool in_domain = false;
};

// Points inside the cell-edge rectangle [-0.5, w-0.5] x [-0.5, h-0.5] are in
// the domain; bilinear weights use edge-replicated neighbours there. Points
// outside return `outside` with in_domain = false.
Sample sample(const ScalarImage& image, double x, double y, Interpolation mode, double outside = 0.0);

// Bilinear sample plus its exact partial derivatives with respect to the
// sampling point (zero along an axis where the stencil is clamped).
struct SampleWithGradient {
    double value = 0.0;
    double d_dx = 0.0;
    double d_dy = 0.0;
    bool in_domain = false;
};
SampleWithGradient sample_with_gradient(const ScalarImage& image, double x, double y);

// Cubic convolution (Keys, a = -1/2) over the edge-replicated extension of
// the image. Interpolating, continuously differentiable on the whole plane
// and constant beyond two pixels outside the border; in_domain is always
// true. Nodata is ignored.
SampleWithGradient sample_smooth(const ScalarImage& image, double x, double y);
// True when a tap with non-zero weight in sample_smooth at (x, y) is nodata.
bool smooth_support_masked(const ScalarImage& image, double x, double y);

// output(x) = image(x - u(x)). Out-of-domain samples and samples touching a
// masked source pixel are set to 0 and masked. Cubic uses sample_smooth and
// masks where its 4 x 4 support touches nodata.
ScalarImage warp(const ScalarImage& image, const DisplacementField& u, Interpolation mode);

// Central differences inside, one-sided on the border, divided by spacing.
std::pair<ScalarImage, ScalarImage> gradient(const ScalarImage& image);

// 5-point Laplacian with mirrored (Neumann) ghost cells.
ScalarImage laplacian(const ScalarImage& field);

// Coarsens by 2x2 box averaging while the next level keeps
// min(width, height) >= min_dimension.
Pyramid build_pyramid(const ScalarImage& image, int max_levels, int min_dimension = 32);

// Geometry of the pyramid level one step coarser than `fine`.
GridGeometry coarser_geometry(const GridGeometry& fine);
ScalarImage downsample(const ScalarImage& image);

// Bilinear upsampling onto the parent grid, doubling the displacement values.
DisplacementField prolong(const DisplacementField& u, const GridGeometry& fine_geometry);

// Affine rescale of unmasked values to [0, 1].
ScalarImage normalize_intensity(const ScalarImage& image);

// Resamples onto another grid through world coordinates.
ScalarImage resample_to_geometry(const ScalarImage& image, const GridGeometry& target, Interpolation mode);

}  // namespace ngfreg
