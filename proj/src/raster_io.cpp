#include "ngfreg/raster_io.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>
#include <string>

#include "ngfreg/errors.hpp"

namespace ngfreg {

namespace fs = std::filesystem;

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::string format_double(double v) {
    std::ostringstream os;
    os.imbue(std::locale::classic());
    os << std::setprecision(17) << v;
    return os.str();
}

double parse_double(const std::map<std::string, std::string>& kv, const std::string& key, const fs::path& where) {
    const auto it = kv.find(key);
    if (it == kv.end()) throw IoError(where.string() + ": header is missing '" + key + "'");
    try {
        std::size_t used = 0;
        const double v = std::stod(it->second, &used);
        if (used != it->second.size()) throw std::invalid_argument(key);
        return v;
    } catch (const std::exception&) {
        throw IoError(where.string() + ": header value for '" + key + "' is not a number");
    }
}

int parse_int(const std::map<std::string, std::string>& kv, const std::string& key, const fs::path& where) {
    const double v = parse_double(kv, key, where);
    if (v != std::floor(v) || v < 0 || v > std::numeric_limits<int>::max()) {
        throw IoError(where.string() + ": header value for '" + key + "' is not a count");
    }
    return static_cast<int>(v);
}

std::uint32_t to_little_endian(std::uint32_t v) {
    if constexpr (std::endian::native == std::endian::big) {
        return ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
    }
    return v;
}

}  // namespace

fs::path header_path(const fs::path& path) {
    if (path.extension() == ".hdr") return path;
    if (path.extension() == ".raw") {
        fs::path p = path;
        return p.replace_extension(".hdr");
    }
    return fs::path(path.string() + ".hdr");
}

fs::path data_path(const fs::path& path) {
    fs::path p = header_path(path);
    return p.replace_extension(".raw");
}

void write_raster(const fs::path& path, const Raster& raster) {
    raster.geometry.validate();
    if (raster.bands.empty()) throw InvalidInputError("raster has no bands");
    if (!raster.wavelengths.empty() && raster.wavelengths.size() != raster.bands.size()) {
        throw InvalidInputError("wavelength list length does not match band count");
    }
    bool any_mask = false;
    for (const auto& b : raster.bands) {
        if (!b.geometry().same_shape(raster.geometry)) throw DimensionError("raster band shape mismatch");
        any_mask = any_mask || b.has_mask();
    }
    const fs::path hdr = header_path(path);
    const fs::path raw = data_path(path);

    std::ostringstream os;
    os << "format = f32le-bsq\n";
    os << "data_file = " << raw.filename().string() << "\n";
    os << "width = " << raster.geometry.width << "\n";
    os << "height = " << raster.geometry.height << "\n";
    os << "bands = " << raster.bands.size() << "\n";
    os << "spacing_x = " << format_double(raster.geometry.spacing_x) << "\n";
    os << "spacing_y = " << format_double(raster.geometry.spacing_y) << "\n";
    os << "origin_easting = " << format_double(raster.geometry.origin_easting) << "\n";
    os << "origin_northing = " << format_double(raster.geometry.origin_northing) << "\n";
    if (any_mask) os << "nodata = nan\n";
    if (!raster.wavelengths.empty()) {
        os << "wavelengths = ";
        for (std::size_t i = 0; i < raster.wavelengths.size(); ++i) {
            if (i) os << ",";
            os << format_double(raster.wavelengths[i]);
        }
        os << "\n";
    }

    std::ofstream h(hdr, std::ios::binary);
    if (!h) throw IoError("cannot open " + hdr.string() + " for writing");
    h << os.str();
    if (!h) throw IoError("failed writing " + hdr.string());

    std::ofstream d(raw, std::ios::binary);
    if (!d) throw IoError("cannot open " + raw.string() + " for writing");
    std::vector<std::uint32_t> buf(raster.geometry.size());
    for (const auto& band : raster.bands) {
        for (std::size_t i = 0; i < band.size(); ++i) {
            const float f = band.masked(i) ? std::numeric_limits<float>::quiet_NaN() : static_cast<float>(band[i]);
            buf[i] = to_little_endian(std::bit_cast<std::uint32_t>(f));
        }
        d.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(std::uint32_t)));
    }
    if (!d) throw IoError("failed writing " + raw.string());
}

void write_raster(const fs::path& path, const ScalarImage& image) {
    Raster r;
    r.geometry = image.geometry();
    r.bands.push_back(image);
    write_raster(path, r);
}

Raster read_raster(const fs::path& path) {
    const fs::path hdr = header_path(path);
    std::ifstream h(hdr);
    if (!h) throw IoError("cannot open raster header " + hdr.string());
    std::map<std::string, std::string> kv;
    std::string line;
    while (std::getline(h, line)) {
        line = trim(line);
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw IoError(hdr.string() + ": malformed header line '" + line + "'");
        kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }

    Raster r;
    r.geometry.width = parse_int(kv, "width", hdr);
    r.geometry.height = parse_int(kv, "height", hdr);
    r.geometry.spacing_x = parse_double(kv, "spacing_x", hdr);
    r.geometry.spacing_y = parse_double(kv, "spacing_y", hdr);
    r.geometry.origin_easting = parse_double(kv, "origin_easting", hdr);
    r.geometry.origin_northing = parse_double(kv, "origin_northing", hdr);
    const int bands = kv.count("bands") ? parse_int(kv, "bands", hdr) : 1;
    try {
        r.geometry.validate();
    } catch (const InvalidInputError& e) {
        throw IoError(hdr.string() + ": " + e.what());
    }
    if (bands < 1) throw IoError(hdr.string() + ": band count must be positive");

    std::optional<float> sentinel;
    if (auto it = kv.find("nodata"); it != kv.end() && it->second != "nan" && it->second != "NaN") {
        sentinel = static_cast<float>(parse_double(kv, "nodata", hdr));
    }
    if (auto it = kv.find("wavelengths"); it != kv.end()) {
        std::stringstream ss(it->second);
        std::string item;
        while (std::getline(ss, item, ',')) {
            try {
                r.wavelengths.push_back(std::stod(trim(item)));
            } catch (const std::exception&) {
                throw IoError(hdr.string() + ": bad wavelength '" + item + "'");
            }
        }
        if (r.wavelengths.size() != static_cast<std::size_t>(bands)) {
            throw IoError(hdr.string() + ": wavelength count does not match band count");
        }
    }

    fs::path raw = data_path(path);
    if (auto it = kv.find("data_file"); it != kv.end()) raw = hdr.parent_path() / it->second;
    std::ifstream d(raw, std::ios::binary);
    if (!d) throw IoError("cannot open raster data " + raw.string());
    const std::size_t n = r.geometry.size();
    std::vector<std::uint32_t> buf(n);
    for (int b = 0; b < bands; ++b) {
        d.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n * sizeof(std::uint32_t)));
        if (static_cast<std::size_t>(d.gcount()) != n * sizeof(std::uint32_t)) {
            throw IoError(raw.string() + ": data file is shorter than the header declares");
        }
        std::vector<double> values(n);
        std::vector<std::uint8_t> mask(n, 0);
        bool any = false;
        for (std::size_t i = 0; i < n; ++i) {
            const float f = std::bit_cast<float>(to_little_endian(buf[i]));
            if (!std::isfinite(f) || (sentinel && f == *sentinel)) {
                mask[i] = 1;
                any = true;
                values[i] = 0.0;
            } else {
                values[i] = f;
            }
        }
        if (!any) mask.clear();
        r.bands.emplace_back(r.geometry, std::move(values), std::move(mask));
    }
    return r;
}

ScalarImage read_raster_band(const fs::path& path, std::size_t band) {
    Raster r = read_raster(path);
    if (band >= r.bands.size()) throw IoError(path.string() + ": band index out of range");
    return r.bands[band];
}

void write_pgm(const fs::path& path, const ScalarImage& image, const PgmOptions& options) {
    if (options.bits != 8 && options.bits != 16) throw ParameterError("PGM depth must be 8 or 16 bits");
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < image.size(); ++i) {
        if (image.masked(i)) continue;
        lo = std::min(lo, image[i]);
        hi = std::max(hi, image[i]);
    }
    if (options.lo) lo = *options.lo;
    if (options.hi) hi = *options.hi;
    if (!std::isfinite(lo)) lo = 0.0;
    if (!std::isfinite(hi)) hi = lo;
    const int maxval = options.bits == 8 ? 255 : 65535;
    const double scale = hi > lo ? maxval / (hi - lo) : 0.0;

    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path.string() + " for writing");
    f << "P5\n" << image.width() << " " << image.height() << "\n" << maxval << "\n";
    std::vector<unsigned char> row;
    // PGM rows run top to bottom; y grows with northing, so the last row goes first.
    for (int y = image.height() - 1; y >= 0; --y) {
        row.clear();
        for (int x = 0; x < image.width(); ++x) {
            const std::size_t i = image.geometry().index(x, y);
            double level = image.masked(i) ? 0.0 : std::clamp((image[i] - lo) * scale, 0.0, static_cast<double>(maxval));
            if (options.complement) level = maxval - level;
            const auto q = static_cast<unsigned>(std::lround(level));
            if (options.bits == 16) row.push_back(static_cast<unsigned char>(q >> 8));
            row.push_back(static_cast<unsigned char>(q & 0xffu));
        }
        f.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
    }
    if (!f) throw IoError("failed writing " + path.string());
}

ScalarImage read_pgm(const fs::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path.string());
    auto next_token = [&]() {
        std::string tok;
        while (f) {
            const int c = f.get();
            if (c == '#') {
                std::string skip;
                std::getline(f, skip);
                continue;
            }
            if (std::isspace(c)) {
                if (!tok.empty()) return tok;
                continue;
            }
            if (c == EOF) break;
            tok.push_back(static_cast<char>(c));
        }
        return tok;
    };
    if (next_token() != "P5") throw IoError(path.string() + ": not a binary PGM (P5)");
    int w = 0, h = 0, maxval = 0;
    try {
        w = std::stoi(next_token());
        h = std::stoi(next_token());
        maxval = std::stoi(next_token());
    } catch (const std::exception&) {
        throw IoError(path.string() + ": malformed PGM header");
    }
    if (w < 2 || h < 2 || maxval < 1 || maxval > 65535) throw IoError(path.string() + ": unsupported PGM dimensions");
    const int bytes = maxval > 255 ? 2 : 1;
    std::vector<unsigned char> data(static_cast<std::size_t>(w) * h * bytes);
    f.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size()));
    if (static_cast<std::size_t>(f.gcount()) != data.size()) throw IoError(path.string() + ": truncated PGM data");
    const GridGeometry g = pixel_grid(w, h);
    std::vector<double> values(g.size());
    for (int row = 0; row < h; ++row) {
        const int y = h - 1 - row;
        for (int x = 0; x < w; ++x) {
            const std::size_t k = (static_cast<std::size_t>(row) * w + x) * bytes;
            values[g.index(x, y)] = bytes == 2 ? (data[k] << 8) | data[k + 1] : data[k];
        }
    }
    return {g, std::move(values)};
}

}  // namespace ngfreg
