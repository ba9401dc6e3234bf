#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ngfreg/grid.hpp"
#include "ngfreg/raster_io.hpp"

namespace ngfreg {

struct LidarPoint {
    double easting = 0.0;
    double northing = 0.0;
    double elevation = 0.0;
    double intensity = 0.0;
    int return_number = 1;
    std::optional<double> agc;  // [0, 255]; carried but not used
};

struct LidarPointCloud {
    std::vector<LidarPoint> points;

    // Throws InvalidInputError on non-finite coordinates, negative
    // intensity or AGC outside [0, 255].
    void validate() const;
};

// CSV with columns x,y,z,intensity,return[,agc]. A non-numeric first line is
// taken as a header; blank lines and lines starting with '#' are skipped.
LidarPointCloud read_lidar_csv(const std::filesystem::path& path);
void write_lidar_csv(const std::filesystem::path& path, const LidarPointCloud& cloud);

// Mean intensity of all returns per cell over the cloud's bounding box.
// Cell (0,0) has its lower-left corner at (min easting, min northing); the
// grid has at least 2x2 cells. Empty cells are masked.
ScalarImage rasterize_lidar(const LidarPointCloud& cloud, double cell);

struct HyperspectralCube {
    GridGeometry geometry;
    std::vector<double> wavelengths;  // nm, strictly increasing
    std::vector<ScalarImage> bands;

    // Throws on band/wavelength count mismatch, geometry mismatch or
    // non-increasing wavelengths.
    void validate() const;
    static HyperspectralCube from_raster(const Raster& raster);
    Raster to_raster() const;
};

// Index of the band nearest `nm` (lower wavelength on ties); CoverageError
// when none lies within `tolerance` nm.
std::size_t nearest_band(const HyperspectralCube& cube, double nm, double tolerance = 10.0);

// Pointwise mean of the bands nearest 640, 549 and 460 nm.
ScalarImage rgb_composite(const HyperspectralCube& cube);

// Unweighted mean of three channels.
ScalarImage grey_from_rgb(const std::vector<ScalarImage>& channels);

struct Footprint {
    double min_easting = 0.0;
    double max_easting = 0.0;
    double min_northing = 0.0;
    double max_northing = 0.0;

    double width() const { return max_easting - min_easting; }
    double height() const { return max_northing - min_northing; }
    void validate() const;
    static Footprint of(const GridGeometry& g);
};

struct PhotoMetadata {
    double centre_easting = 0.0;
    double centre_northing = 0.0;
    double pixel_pitch = 0.3;  // m / pixel
    int width = 0;
    int height = 0;

    void validate() const;
};

// pitch * pixels + 300 m on each axis, centred on the photo centre.
Footprint estimate_footprint(const PhotoMetadata& meta);

// Keeps the cells of `image` that overlap `region`.
ScalarImage crop_to_footprint(const ScalarImage& image, const Footprint& region);

// Crops both images to the cells overlapping the intersection of their
// extents; each keeps its own resolution. Idempotent.
std::pair<ScalarImage, ScalarImage> crop_to_overlap(const ScalarImage& a, const ScalarImage& b);

// Warps every band with the same field using nearest-neighbour sampling.
HyperspectralCube resample_spectral(const HyperspectralCube& cube, const DisplacementField& u);

enum class SeamPolicy { last_writer_wins, first_writer_wins };

std::string to_string(SeamPolicy p);
SeamPolicy parse_seam_policy(const std::string& name);

struct MosaicTile {
    std::string id;
    ScalarImage image;  // georeferenced by its geometry
};

struct SeamRecord {
    std::string first;
    std::string second;
    // Centroid of the interface band in world coordinates.
    double easting = 0.0;
    double northing = 0.0;
    std::size_t pairs = 0;  // adjacent pixel pairs across the interface
    double mean_jump = 0.0;
};

struct SeamReport {
    std::vector<SeamRecord> seams;
    // One line per interface: first second easting northing pairs mean_jump.
    std::string to_text() const;
};

struct Mosaic {
    ScalarImage image;
    std::vector<int> owner;  // tile index per pixel, -1 where empty
    SeamReport seams;
};

// Composition onto the union of the tile extents; with last_writer_wins a
// later tile overwrites earlier ones wherever it has data. Tiles must
// share the spacing and sit on a common lattice (PlacementError otherwise).
// An interface is every 4-neighbour pixel pair (p, q) owned by two different
// tiles. Where both tiles have data at p or q the pair's jump is their mean
// difference there; for merely abutting tiles it is |mosaic(p) - mosaic(q)|.
// A seam's jump is the mean over its pairs.
Mosaic mosaic(const std::vector<MosaicTile>& tiles, SeamPolicy policy = SeamPolicy::last_writer_wins);

}  // namespace ngfreg
