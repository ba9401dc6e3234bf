#include "ngfreg/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "ngfreg/affine.hpp"
#include "ngfreg/errors.hpp"
#include "ngfreg/evaluation.hpp"
#include "ngfreg/geo.hpp"
#include "ngfreg/parallel.hpp"
#include "ngfreg/raster_io.hpp"
#include "ngfreg/registration.hpp"

namespace ngfreg {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

constexpr const char* manifest_name = "manifest.json";

struct RegisterOptions {
    std::string preset;
    std::string method = "np";
    std::string measure = "ngf";
    std::string solver;
    std::optional<double> alpha;
    std::optional<double> eta;
    std::optional<int> levels;
    std::optional<int> max_iters;
    std::optional<double> tolerance;
};

void add_register_options(CLI::App* cmd, RegisterOptions& o, const std::vector<std::string>& methods) {
    cmd->add_option("--preset", o.preset, "Parameter regime")->check(CLI::IsMember({"hs-to-lidar", "photo-to-hs"}));
    cmd->add_option("--method", o.method, "np (curvature-regularized) or affine; mosaic also accepts none")->check(CLI::IsMember(methods));
    cmd->add_option("--measure", o.measure, "ngf, ssd, ncc or mi")->check(CLI::IsMember({"ngf", "ssd", "ncc", "mi"}));
    cmd->add_option("--solver", o.solver, "semi-implicit, gauss-newton, l-bfgs or trust-region");
    cmd->add_option("--alpha", o.alpha, "Regularization weight");
    cmd->add_option("--eta", o.eta, "NGF edge parameter");
    cmd->add_option("--levels", o.levels, "Maximum pyramid levels");
    cmd->add_option("--max-iters", o.max_iters, "Iteration cap per level");
    cmd->add_option("--tolerance", o.tolerance, "Relative stopping tolerance");
}

RegistrationConfig make_config(const RegisterOptions& o) {
    RegistrationConfig c;
    if (o.preset == "hs-to-lidar") c = RegistrationConfig::hs_to_lidar();
    if (o.preset == "photo-to-hs") c = RegistrationConfig::photo_to_hs();
    c.measure = parse_measure(o.measure);
    if (!o.solver.empty()) c.solver = parse_solver(o.solver);
    if (o.alpha) c.alpha = *o.alpha;
    if (o.eta) c.eta = *o.eta;
    if (o.levels) c.max_levels = *o.levels;
    if (o.max_iters) c.max_iters_per_level = *o.max_iters;
    if (o.tolerance) c.rel_tolerance = *o.tolerance;
    c.validate();
    return c;
}

json config_json(const RegistrationConfig& c) {
    return json{{"alpha", c.alpha},
                {"eta", c.eta},
                {"dt", c.dt},
                {"solver", to_string(c.solver)},
                {"measure", to_string(c.measure)},
                {"max_levels", c.max_levels},
                {"max_iters_per_level", c.max_iters_per_level},
                {"rel_tolerance", c.rel_tolerance},
                {"min_level_dimension", c.min_level_dimension},
                {"mi_bins", c.mi.bins},
                {"mi_parzen_sigma", c.mi.parzen_sigma}};
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write " + path.string());
    f << text;
    if (!f) throw IoError("failed writing " + path.string());
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory " + dir.string());
}

std::string header_name(const fs::path& p) { return header_path(p).string(); }

struct Manifest {
    json doc;
    Manifest(const std::string& command, const std::vector<std::string>& args) {
        doc["command"] = command;
        doc["argv"] = args;
        doc["inputs"] = json::object();
        doc["outputs"] = json::object();
        doc["seed"] = nullptr;
    }
    void write(const fs::path& dir) const { write_text(dir / manifest_name, doc.dump(2) + "\n"); }
};

std::string format(double v) {
    std::ostringstream os;
    os.imbue(std::locale::classic());
    os << std::setprecision(17) << v;
    return os.str();
}

Raster displacement_raster(const DisplacementField& u) {
    const auto ux = u.ux();
    const auto uy = u.uy();
    return Raster{u.geometry(),
                  {ScalarImage(u.geometry(), {ux.begin(), ux.end()}), ScalarImage(u.geometry(), {uy.begin(), uy.end()})},
                  {}};
}

DisplacementField read_displacement(const fs::path& path) {
    const Raster r = read_raster(path);
    if (r.bands.size() != 2) throw InvalidInputError(path.string() + ": a displacement raster needs 2 bands");
    const auto ux = r.bands[0].values();
    const auto uy = r.bands[1].values();
    return {r.geometry, {ux.begin(), ux.end()}, {uy.begin(), uy.end()}};
}

// Brings the template onto the reference grid: both are cropped to their
// common footprint and the template is resampled onto the cropped reference.
std::pair<ScalarImage, ScalarImage> align_grids(const ScalarImage& ref, const ScalarImage& tpl) {
    if (ref.geometry() == tpl.geometry()) return {ref, tpl};
    auto [r, t] = crop_to_overlap(ref, tpl);
    return {r, resample_to_geometry(t, r.geometry(), Interpolation::bilinear)};
}

struct Registered {
    DisplacementField u;
    RegistrationTrace trace;
    std::optional<AffineParams> affine;
};

Registered register_pair(const ScalarImage& T, const ScalarImage& R, const std::string& method, const RegistrationConfig& cfg) {
    if (method == "affine") {
        auto r = register_affine(T, R, cfg.measure, cfg);
        return {affine_to_displacement(r.params, R.geometry()), std::move(r.trace), r.params};
    }
    auto r = register_multilevel(T, R, cfg);
    return {std::move(r.u), std::move(r.trace), std::nullopt};
}

int cmd_rasterize(const std::string& cloud, double cell, const fs::path& out_dir, const std::vector<std::string>& args, std::ostream& out) {
    const auto pc = read_lidar_csv(cloud);
    const auto img = rasterize_lidar(pc, cell);
    ensure_dir(out_dir);
    write_raster(out_dir / "raster.hdr", img);
    Manifest m("rasterize", args);
    m.doc["inputs"]["cloud"] = cloud;
    m.doc["parameters"] = {{"cell", cell}};
    m.doc["outputs"]["raster"] = header_name(out_dir / "raster.hdr");
    m.doc["summary"] = {{"points", pc.points.size()},
                        {"width", img.geometry().width},
                        {"height", img.geometry().height},
                        {"empty_cells", img.size() - img.unmasked_count()}};
    m.write(out_dir);
    out << "rasterized " << pc.points.size() << " points onto " << img.geometry().width << "x" << img.geometry().height << " cells\n";
    return exit_ok;
}

int cmd_composite(const std::string& cube_path, const fs::path& out_dir, const std::vector<std::string>& args, std::ostream& out) {
    const auto cube = HyperspectralCube::from_raster(read_raster(cube_path));
    const auto rgb = rgb_composite(cube);
    ensure_dir(out_dir);
    write_raster(out_dir / "composite.hdr", rgb);
    Manifest m("composite", args);
    m.doc["inputs"]["cube"] = cube_path;
    m.doc["outputs"]["composite"] = header_name(out_dir / "composite.hdr");
    m.doc["summary"] = {{"bands", json::array({cube.wavelengths[nearest_band(cube, 640.0)], cube.wavelengths[nearest_band(cube, 549.0)],
                                               cube.wavelengths[nearest_band(cube, 460.0)]})}};
    m.write(out_dir);
    out << "composite written to " << (out_dir / "composite.hdr").string() << "\n";
    return exit_ok;
}

int cmd_register(const std::string& ref_path, const std::string& tpl_path, const RegisterOptions& o, const fs::path& out_dir,
                 const std::vector<std::string>& args, std::ostream& out) {
    const RegistrationConfig cfg = make_config(o);
    const auto ref = read_raster_band(ref_path);
    const auto tpl = read_raster_band(tpl_path);
    auto [R, T] = align_grids(ref, tpl);
    R = normalize_intensity(R);
    T = normalize_intensity(T);
    const Registered reg = register_pair(T, R, o.method, cfg);
    const auto registered = warp(T, reg.u, Interpolation::cubic);

    ensure_dir(out_dir);
    write_raster(out_dir / "displacement.hdr", displacement_raster(reg.u));
    write_raster(out_dir / "registered.hdr", registered);
    write_raster(out_dir / "reference.hdr", R);
    write_raster(out_dir / "template.hdr", T);
    write_text(out_dir / "trace.log", reg.trace.to_log());
    Manifest m("register", args);
    m.doc["inputs"] = {{"reference", ref_path}, {"template", tpl_path}};
    m.doc["method"] = o.method;
    m.doc["config"] = config_json(cfg);
    m.doc["outputs"] = {{"displacement", header_name(out_dir / "displacement.hdr")},
                        {"registered", header_name(out_dir / "registered.hdr")},
                        {"reference", header_name(out_dir / "reference.hdr")},
                        {"template", header_name(out_dir / "template.hdr")},
                        {"trace", (out_dir / "trace.log").string()}};
    if (reg.affine) {
        write_text(out_dir / "affine.txt", reg.affine->to_record());
        m.doc["outputs"]["affine"] = (out_dir / "affine.txt").string();
    }
    m.doc["summary"] = {{"iterations", reg.trace.total_iterations()},
                        {"levels", reg.trace.levels.size()},
                        {"max_displacement", reg.u.max_abs()},
                        {"mean_abs_diff_unregistered", difference_map(T, R).mean_abs_diff},
                        {"mean_abs_diff", difference_map(registered, R).mean_abs_diff}};
    m.write(out_dir);
    out << "registered in " << reg.trace.total_iterations() << " iterations; mean |T - R| " << format(m.doc["summary"]["mean_abs_diff_unregistered"].get<double>())
        << " -> " << format(m.doc["summary"]["mean_abs_diff"].get<double>()) << "\n";
    return exit_ok;
}

int cmd_report(const std::string& mode, const std::string& a_path, const std::string& b_path, int tile, bool normalize, const fs::path& out_dir,
               const std::vector<std::string>& args, std::ostream& out) {
    ensure_dir(out_dir);
    Manifest m("report", args);
    m.doc["inputs"] = {{"a", a_path}, {"b", b_path}};
    m.doc["mode"] = mode;
    std::ostringstream text;
    text.imbue(std::locale::classic());
    text << std::setprecision(17);
    if (mode == "epe") {
        const auto est = read_displacement(a_path);
        const auto truth = read_displacement(b_path);
        if (!est.geometry().same_shape(truth.geometry())) throw DimensionError("displacement grids differ");
        const auto e = endpoint_error(est, truth);
        text << "endpoint_error_mean " << e.mean << "\nendpoint_error_max " << e.max << "\n";
    } else {
        auto a = read_raster_band(a_path);
        auto b = read_raster_band(b_path);
        if (!a.geometry().same_shape(b.geometry())) throw DimensionError("report inputs have different grids");
        if (normalize) {
            a = normalize_intensity(a);
            b = normalize_intensity(b);
        }
        const auto d = difference_map(a, b);
        if (mode == "diff") {
            write_raster(out_dir / "difference.hdr", d.map);
            write_raster(out_dir / "complement.hdr", difference_complement(d.map));
            m.doc["outputs"]["difference"] = header_name(out_dir / "difference.hdr");
            m.doc["outputs"]["complement"] = header_name(out_dir / "complement.hdr");
        } else {
            write_raster(out_dir / "checkerboard.hdr", checkerboard(a, b, tile));
            m.doc["outputs"]["checkerboard"] = header_name(out_dir / "checkerboard.hdr");
            m.doc["tile"] = tile;
        }
        text << "mean_abs_diff " << d.mean_abs_diff << "\n";
    }
    write_text(out_dir / "report.txt", text.str());
    m.doc["outputs"]["report"] = (out_dir / "report.txt").string();
    m.write(out_dir);
    out << text.str();
    return exit_ok;
}

int cmd_mosaic(const std::vector<std::string>& tile_paths, const std::string& ref_path, const std::vector<std::string>& overrides,
               const RegisterOptions& o, const std::string& policy, const fs::path& out_dir, const std::vector<std::string>& args,
               std::ostream& out) {
    if (tile_paths.empty()) throw EmptyInputError("no tiles given");
    const bool do_register = o.method != "none";
    if (do_register && ref_path.empty()) throw ParameterError("--ref is required unless --method none");
    RegisterOptions base = o;
    if (!do_register) base.method = "np";
    const RegistrationConfig cfg = make_config(base);

    std::vector<std::string> ids;
    for (std::size_t k = 0; k < tile_paths.size(); ++k) {
        std::string id = fs::path(tile_paths[k]).stem().string();
        if (std::find(ids.begin(), ids.end(), id) != ids.end()) id += "#" + std::to_string(k);
        ids.push_back(id);
    }
    std::map<std::string, double> alpha_for;
    for (const auto& s : overrides) {
        const auto eq = s.find('=');
        if (eq == std::string::npos) throw ParameterError("alpha override must look like ID=VALUE, got '" + s + "'");
        const std::string id = s.substr(0, eq);
        std::size_t idx = 0;
        const bool numeric = !id.empty() && std::all_of(id.begin(), id.end(), ::isdigit);
        if (numeric) idx = std::stoul(id);
        const auto it = std::find(ids.begin(), ids.end(), id);
        if (it != ids.end()) idx = static_cast<std::size_t>(it - ids.begin());
        else if (!numeric || idx >= ids.size()) throw ParameterError("alpha override names unknown tile '" + id + "'");
        double value = 0.0;
        try {
            value = std::stod(s.substr(eq + 1));
        } catch (...) {
            throw ParameterError("alpha override value is not a number in '" + s + "'");
        }
        alpha_for[ids[idx]] = value;
    }

    ensure_dir(out_dir);
    Manifest m("mosaic", args);
    m.doc["inputs"]["tiles"] = tile_paths;
    if (!ref_path.empty()) m.doc["inputs"]["reference"] = ref_path;
    m.doc["method"] = o.method;
    m.doc["policy"] = policy;
    if (do_register) m.doc["config"] = config_json(cfg);
    json per_tile = json::array();

    std::optional<ScalarImage> ref;
    if (!ref_path.empty()) ref = read_raster_band(ref_path);
    std::vector<MosaicTile> tiles;
    for (std::size_t k = 0; k < tile_paths.size(); ++k) {
        ScalarImage tile = read_raster_band(tile_paths[k]);
        json info{{"id", ids[k]}, {"path", tile_paths[k]}};
        if (ref) {
            auto [R, T] = align_grids(*ref, tile);
            tile = T;
            if (do_register) {
                RegistrationConfig c = cfg;
                const auto ov = alpha_for.find(ids[k]);
                if (ov != alpha_for.end()) c.alpha = ov->second;
                c.validate();
                const Registered reg = register_pair(normalize_intensity(T), normalize_intensity(R), o.method, c);
                tile = warp(T, reg.u, Interpolation::cubic);
                const fs::path trace = out_dir / ("trace_" + ids[k] + ".log");
                write_text(trace, reg.trace.to_log());
                info["alpha"] = c.alpha;
                info["alpha_overridden"] = ov != alpha_for.end();
                info["iterations"] = reg.trace.total_iterations();
                info["trace"] = trace.string();
            }
        }
        per_tile.push_back(info);
        tiles.push_back({ids[k], std::move(tile)});
    }
    const Mosaic result = mosaic(tiles, parse_seam_policy(policy));
    write_raster(out_dir / "mosaic.hdr", result.image);
    write_text(out_dir / "seams.txt", result.seams.to_text());
    m.doc["tiles"] = per_tile;
    m.doc["outputs"]["mosaic"] = header_name(out_dir / "mosaic.hdr");
    m.doc["outputs"]["seams"] = (out_dir / "seams.txt").string();
    json seams = json::array();
    for (const auto& s : result.seams.seams)
        seams.push_back({{"first", s.first}, {"second", s.second}, {"easting", s.easting}, {"northing", s.northing}, {"pairs", s.pairs}, {"mean_jump", s.mean_jump}});
    m.doc["summary"] = {{"seams", seams}};
    m.write(out_dir);
    out << result.seams.to_text();
    return exit_ok;
}

int cmd_synth(const std::string& kind, int size, std::uint64_t seed, double rotate, double scale, double shift_x, double shift_y, double amplitude,
              double sigma, double noise, const fs::path& out_dir, const std::vector<std::string>& args, std::ostream& out) {
    Scenario s;
    s.width = s.height = size;
    s.seed = seed;
    s.kind = parse_deformation(kind);
    const GridGeometry g = pixel_grid(size, size);
    s.params.affine = similarity_about_centre(g, rotate, scale, shift_x, shift_y);
    s.params.bump = {0.5 * (size - 1), 0.5 * (size - 1), amplitude, sigma, 1.0, 0.0};
    const auto def = make_deformation(s.kind, s.params, g);
    auto pair = synthesize_pair(Texture(seed, size), g, def.field);
    if (noise > 0.0) {
        std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
        std::normal_distribution<double> n(0.0, noise);
        auto add = [&](const ScalarImage& img) {
            std::vector<double> v(img.values().begin(), img.values().end());
            for (double& x : v) x = std::clamp(x + n(rng), 0.0, 1.0);
            return img.with_values(std::move(v));
        };
        pair.T = add(pair.T);
        pair.R = add(pair.R);
    }
    ensure_dir(out_dir);
    write_raster(out_dir / "reference.hdr", pair.R);
    write_raster(out_dir / "template.hdr", pair.T);
    write_raster(out_dir / "truth.hdr", displacement_raster(def.field));
    Manifest m("synth", args);
    m.doc["seed"] = seed;
    m.doc["parameters"] = {{"kind", kind}, {"size", size}, {"rotate", rotate}, {"scale", scale}, {"shift_x", shift_x}, {"shift_y", shift_y},
                           {"amplitude", amplitude}, {"sigma", sigma}, {"noise", noise}};
    m.doc["outputs"] = {{"reference", header_name(out_dir / "reference.hdr")},
                        {"template", header_name(out_dir / "template.hdr")},
                        {"truth", header_name(out_dir / "truth.hdr")}};
    m.write(out_dir);
    out << "synthetic " << kind << " pair written to " << out_dir.string() << "\n";
    return exit_ok;
}

int cmd_footprint(const PhotoMetadata& meta, std::ostream& out) {
    const Footprint f = estimate_footprint(meta);
    out << std::setprecision(17) << "min_easting " << f.min_easting << "\nmax_easting " << f.max_easting << "\nmin_northing " << f.min_northing
        << "\nmax_northing " << f.max_northing << "\nwidth " << f.width() << "\nheight " << f.height() << "\n";
    return exit_ok;
}

int run_parsed(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int cmd_replay(const std::string& manifest, std::ostream& out, std::ostream& err) {
    std::ifstream f(manifest);
    if (!f) throw IoError("cannot open manifest " + manifest);
    json doc;
    try {
        doc = json::parse(f);
    } catch (const json::exception& e) {
        throw IoError(manifest + ": " + e.what());
    }
    if (!doc.contains("argv") || !doc["argv"].is_array()) throw IoError(manifest + ": no argv recorded");
    return run_parsed(doc["argv"].get<std::vector<std::string>>(), out, err);
}

int run_parsed(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Multimodal image registration with normalized gradient fields", "ngfreg"};
    app.require_subcommand(1);
    int threads = 0;
    app.add_option("--threads", threads, "Kernel threads (default: NGFREG_THREADS or all cores)")->check(CLI::PositiveNumber);

    std::string cloud, out_dir;
    double cell = 1.0;
    auto* rast = app.add_subcommand("rasterize", "LiDAR CSV point cloud to mean-intensity raster");
    rast->add_option("--cloud", cloud, "CSV with x,y,z,intensity,return[,agc]")->required();
    rast->add_option("--cell", cell, "Cell size in metres")->check(CLI::PositiveNumber);
    rast->add_option("--out", out_dir, "Output directory")->required();

    std::string cube;
    auto* comp = app.add_subcommand("composite", "Mean of the bands nearest 640, 549 and 460 nm");
    comp->add_option("--cube", cube, "Hyperspectral raster with wavelengths")->required();
    comp->add_option("--out", out_dir, "Output directory")->required();

    std::string ref, tpl;
    RegisterOptions ro;
    auto* reg = app.add_subcommand("register", "Register a template onto a reference");
    reg->add_option("--ref", ref, "Reference raster")->required();
    reg->add_option("--tpl", tpl, "Template raster")->required();
    add_register_options(reg, ro, {"np", "affine"});
    reg->add_option("--out", out_dir, "Output directory")->required();

    std::string mode = "diff", a, b;
    int tile = 16;
    bool normalize = false;
    auto* rep = app.add_subcommand("report", "Difference map, checkerboard or endpoint error");
    rep->add_option("--mode", mode, "diff, checkerboard or epe")->check(CLI::IsMember({"diff", "checkerboard", "epe"}));
    rep->add_option("--a", a, "First raster (estimate for epe)")->required();
    rep->add_option("--b", b, "Second raster (truth for epe)")->required();
    rep->add_option("--tile", tile, "Checkerboard tile size in pixels")->check(CLI::PositiveNumber);
    rep->add_flag("--normalize", normalize, "Rescale both images to [0, 1] first");
    rep->add_option("--out", out_dir, "Output directory")->required();

    std::vector<std::string> tiles, overrides;
    std::string policy = "last-writer-wins";
    RegisterOptions mo;
    mo.preset = "photo-to-hs";
    auto* mos = app.add_subcommand("mosaic", "Register tiles against a reference and compose them");
    mos->add_option("--tile", tiles, "Tile raster (repeatable, later tiles win)")->required();
    mos->add_option("--ref", ref, "Reference raster the tiles are registered to");
    mos->add_option("--alpha-override", overrides, "Per-tile weight as ID=VALUE; ID is the file stem or index");
    mos->add_option("--policy", policy, "Seam policy")->check(CLI::IsMember({"last-writer-wins", "first-writer-wins"}));
    add_register_options(mos, mo, {"np", "affine", "none"});
    mos->add_option("--out", out_dir, "Output directory")->required();

    std::string kind = "composite";
    int size = 128;
    std::uint64_t seed = 1;
    double rotate = 3.0, scale = 1.02, sx = 3.0, sy = 3.0, amplitude = 4.0, sigma = 10.0, noise = 0.0;
    auto* syn = app.add_subcommand("synth", "Synthetic textured pair with a known deformation");
    syn->add_option("--kind", kind, "affine, bump or composite")->check(CLI::IsMember({"affine", "bump", "composite"}));
    syn->add_option("--size", size, "Image side in pixels")->check(CLI::Range(8, 8192));
    syn->add_option("--seed", seed, "Texture seed");
    syn->add_option("--rotate", rotate, "Rotation in degrees");
    syn->add_option("--scale", scale, "Isotropic scale");
    syn->add_option("--shift-x", sx, "Translation in pixels");
    syn->add_option("--shift-y", sy, "Translation in pixels");
    syn->add_option("--amplitude", amplitude, "Bump amplitude in pixels");
    syn->add_option("--sigma", sigma, "Bump width in pixels");
    syn->add_option("--noise", noise, "Gaussian noise std-dev");
    syn->add_option("--out", out_dir, "Output directory")->required();

    PhotoMetadata meta;
    auto* foot = app.add_subcommand("footprint", "Ground footprint of an aerial photo");
    foot->add_option("--width", meta.width, "Pixels")->required();
    foot->add_option("--height", meta.height, "Pixels")->required();
    foot->add_option("--pitch", meta.pixel_pitch, "Metres per pixel");
    foot->add_option("--easting", meta.centre_easting, "Photo centre");
    foot->add_option("--northing", meta.centre_northing, "Photo centre");

    std::string manifest;
    auto* rep_run = app.add_subcommand("replay", "Re-run the command recorded in a manifest");
    rep_run->add_option("--manifest", manifest, "manifest.json")->required();

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return exit_ok;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return exit_ok;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n" << app.help();
        return exit_usage;
    }

    if (threads == 0) threads = thread_count_from_env();
    if (threads == 0) threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    set_thread_count(threads);

    if (*rast) return cmd_rasterize(cloud, cell, out_dir, args, out);
    if (*comp) return cmd_composite(cube, out_dir, args, out);
    if (*reg) return cmd_register(ref, tpl, ro, out_dir, args, out);
    if (*rep) return cmd_report(mode, a, b, tile, normalize, out_dir, args, out);
    if (*mos) return cmd_mosaic(tiles, ref, overrides, mo, policy, out_dir, args, out);
    if (*syn) return cmd_synth(kind, size, seed, rotate, scale, sx, sy, amplitude, sigma, noise, out_dir, args, out);
    if (*foot) return cmd_footprint(meta, out);
    return cmd_replay(manifest, out, err);
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    try {
        return run_parsed(args, out, err);
    } catch (const ParameterError& e) {
        err << "error: " << e.what() << "\n";
        return exit_usage;
    } catch (const IoError& e) {
        err << "I/O error: " << e.what() << "\n";
        return exit_io;
    } catch (const InvalidInputError& e) {
        err << "invalid input: " << e.what() << "\n";
        return exit_io;
    } catch (const EmptyInputError& e) {
        err << "empty input: " << e.what() << "\n";
        return exit_io;
    } catch (const CoverageError& e) {
        err << "coverage error: " << e.what() << "\n";
        return exit_io;
    } catch (const Error& e) {
        err << "numerical failure: " << e.what() << "\n";
        return exit_numerical;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return exit_numerical;
    }
}

}  // namespace ngfreg
