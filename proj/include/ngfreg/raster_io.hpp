#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include "ngfreg/grid.hpp"

namespace ngfreg {

// Multi-band raster held in the raw container: a little-endian float32
// band-sequential data file plus a `key = value` text header.
struct Raster {
    GridGeometry geometry;
    std::vector<ScalarImage> bands;
    std::vector<double> wavelengths;  // empty or one per band, in nm
};

// `path` names the header (".hdr" is appended when missing); the data file
// sits beside it with a ".raw" extension. Masked pixels are stored as NaN
// and the header records `nodata = nan`.
void write_raster(const std::filesystem::path& path, const Raster& raster);
void write_raster(const std::filesystem::path& path, const ScalarImage& image);
Raster read_raster(const std::filesystem::path& path);
ScalarImage read_raster_band(const std::filesystem::path& path, std::size_t band = 0);

std::filesystem::path header_path(const std::filesystem::path& path);
std::filesystem::path data_path(const std::filesystem::path& path);

// Binary PGM (P5). Values in [lo, hi] map linearly to [0, maxval]; the range
// defaults to the unmasked min/max. `complement` flips black and white.
struct PgmOptions {
    int bits = 8;
    std::optional<double> lo;
    std::optional<double> hi;
    bool complement = false;
};
void write_pgm(const std::filesystem::path& path, const ScalarImage& image, const PgmOptions& options = {});
// Raw grey levels on a unit pixel grid.
ScalarImage read_pgm(const std::filesystem::path& path);

}  // namespace ngfreg
