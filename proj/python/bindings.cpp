#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cmath>
#include <sstream>

#include "ngfreg/affine.hpp"
#include "ngfreg/cli.hpp"
#include "ngfreg/errors.hpp"
#include "ngfreg/evaluation.hpp"
#include "ngfreg/geo.hpp"
#include "ngfreg/registration.hpp"

namespace py = pybind11;
using namespace ngfreg;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

// NaN entries become nodata.
ScalarImage to_image(const Array& a) {
    if (a.ndim() != 2) throw InvalidInputError("expected a 2-D array");
    const GridGeometry g = pixel_grid(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)));
    std::vector<double> v(a.data(), a.data() + a.size());
    std::vector<std::uint8_t> mask;
    for (std::size_t i = 0; i < v.size(); ++i)
        if (std::isnan(v[i])) {
            if (mask.empty()) mask.assign(v.size(), 0);
            mask[i] = 1;
            v[i] = 0.0;
        }
    return {g, std::move(v), std::move(mask)};
}

Array to_array(const ScalarImage& img) {
    const GridGeometry& g = img.geometry();
    Array out({g.height, g.width});
    double* p = out.mutable_data();
    for (std::size_t i = 0; i < img.size(); ++i) p[i] = img.masked(i) ? std::nan("") : img[i];
    return out;
}

Array to_array(std::span<const double> v, const GridGeometry& g) {
    Array out({g.height, g.width});
    std::copy(v.begin(), v.end(), out.mutable_data());
    return out;
}

RegistrationConfig make_config(const std::string& measure, double alpha, double eta, const std::string& solver, int levels, int max_iters,
                               double tolerance) {
    RegistrationConfig c;
    c.measure = parse_measure(measure);
    c.alpha = alpha;
    c.eta = eta;
    c.solver = parse_solver(solver);
    c.max_levels = levels;
    c.max_iters_per_level = max_iters;
    c.rel_tolerance = tolerance;
    c.validate();
    return c;
}

py::dict trace_dict(const RegistrationTrace& t) {
    py::list levels;
    for (const auto& l : t.levels) {
        py::dict d;
        d["level"] = l.level;
        d["width"] = l.width;
        d["height"] = l.height;
        d["initial_objective"] = l.initial_objective;
        d["final_objective"] = l.final_objective;
        d["iterations"] = l.iterations;
        d["converged"] = l.converged;
        levels.append(d);
    }
    py::list objective;
    for (const auto& r : t.records) objective.append(r.objective);
    py::dict d;
    d["levels"] = levels;
    d["objective"] = objective;
    d["iterations"] = t.total_iterations();
    return d;
}

py::dict register_images(const Array& T_in, const Array& R_in, const std::string& method, const std::string& measure, double alpha, double eta,
                         const std::string& solver, int levels, int max_iters, double tolerance) {
    const ScalarImage T = to_image(T_in), R = to_image(R_in);
    const RegistrationConfig c = make_config(measure, alpha, eta, solver, levels, max_iters, tolerance);
    DisplacementField u;
    RegistrationTrace trace;
    py::dict out;
    {
        py::gil_scoped_release release;
        if (method == "affine") {
            auto r = register_affine(T, R, c.measure, c);
            u = affine_to_displacement(r.params, R.geometry());
            trace = std::move(r.trace);
            py::gil_scoped_acquire acquire;
            out["affine"] = py::make_tuple(r.params.a11, r.params.a12, r.params.a21, r.params.a22, r.params.t_x, r.params.t_y);
        } else if (method == "np") {
            auto r = register_multilevel(T, R, c);
            u = std::move(r.u);
            trace = std::move(r.trace);
        } else {
            throw ParameterError("method must be 'np' or 'affine'");
        }
    }
    out["ux"] = to_array(u.ux(), u.geometry());
    out["uy"] = to_array(u.uy(), u.geometry());
    out["registered"] = to_array(warp(T, u, Interpolation::cubic));
    out["trace"] = trace_dict(trace);
    return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Multimodal image registration with normalized gradient fields and curvature regularization.";

    static py::exception<Error> base(m, "NgfregError", PyExc_RuntimeError);
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const ParameterError& e) {
            PyErr_SetString(PyExc_ValueError, e.what());
        } catch (const InvalidInputError& e) {
            PyErr_SetString(PyExc_ValueError, e.what());
        } catch (const DimensionError& e) {
            PyErr_SetString(PyExc_ValueError, e.what());
        } catch (const IoError& e) {
            PyErr_SetString(PyExc_OSError, e.what());
        } catch (const Error& e) {
            base(e.what());
        }
    });

    m.def("register_images", &register_images, py::arg("template"), py::arg("reference"), py::arg("method") = "np", py::arg("measure") = "ngf",
          py::arg("alpha") = 5000.0, py::arg("eta") = 0.1, py::arg("solver") = "l-bfgs", py::arg("levels") = 4, py::arg("max_iters") = 200,
          py::arg("tolerance") = 1e-6,
          "Registers template onto reference (both 2-D, values in [0, 1], NaN = nodata). Returns ux, uy, registered and trace; "
          "the template is sampled at x - u(x).");

    m.def(
        "distance",
        [](const std::string& measure, const Array& Tw, const Array& R, double eta) {
            return evaluate(parse_measure(measure), to_image(Tw), to_image(R), MeasureOptions{eta, MiOptions{}}).value;
        },
        py::arg("measure"), py::arg("warped"), py::arg("reference"), py::arg("eta") = 0.1);

    m.def(
        "warp",
        [](const Array& img, const Array& ux, const Array& uy, const std::string& mode) {
            const ScalarImage I = to_image(img);
            const ScalarImage x = to_image(ux), y = to_image(uy);
            if (!x.geometry().same_shape(I.geometry()) || !y.geometry().same_shape(I.geometry())) throw DimensionError("field shape mismatch");
            const DisplacementField u(I.geometry(), {x.values().begin(), x.values().end()}, {y.values().begin(), y.values().end()});
            Interpolation m = Interpolation::bilinear;
            if (mode == "nearest") m = Interpolation::nearest;
            else if (mode == "cubic") m = Interpolation::cubic;
            else if (mode != "bilinear") throw ParameterError("mode must be 'bilinear', 'nearest' or 'cubic'");
            return to_array(warp(I, u, m));
        },
        py::arg("image"), py::arg("ux"), py::arg("uy"), py::arg("mode") = "bilinear");

    m.def(
        "rasterize_lidar",
        [](const Array& points, double cell) {
            if (points.ndim() != 2 || points.shape(1) < 3) throw InvalidInputError("points must be N x 3 (easting, northing, intensity)");
            LidarPointCloud c;
            const double* p = points.data();
            const auto cols = points.shape(1);
            for (py::ssize_t i = 0; i < points.shape(0); ++i)
                c.points.push_back({p[i * cols], p[i * cols + 1], 0.0, p[i * cols + 2], 1, std::nullopt});
            const ScalarImage img = rasterize_lidar(c, cell);
            const GridGeometry& g = img.geometry();
            return py::make_tuple(to_array(img), py::make_tuple(g.origin_easting, g.origin_northing));
        },
        py::arg("points"), py::arg("cell") = 1.0, "Mean intensity per cell (rows = northing). Returns (grid, (easting, northing) of cell (0,0) centre).");

    m.def(
        "rgb_composite",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& cube, const std::vector<double>& wavelengths) {
            if (cube.ndim() != 3) throw InvalidInputError("cube must be bands x rows x cols");
            HyperspectralCube c;
            c.geometry = pixel_grid(static_cast<int>(cube.shape(2)), static_cast<int>(cube.shape(1)));
            c.wavelengths = wavelengths;
            const std::size_t n = c.geometry.size();
            for (py::ssize_t b = 0; b < cube.shape(0); ++b)
                c.bands.emplace_back(c.geometry, std::vector<double>(cube.data() + b * n, cube.data() + (b + 1) * n));
            return to_array(rgb_composite(c));
        },
        py::arg("cube"), py::arg("wavelengths"));

    m.def(
        "estimate_footprint",
        [](int width, int height, double pitch, double centre_easting, double centre_northing) {
            const Footprint f = estimate_footprint({centre_easting, centre_northing, pitch, width, height});
            return py::make_tuple(f.min_easting, f.max_easting, f.min_northing, f.max_northing);
        },
        py::arg("width"), py::arg("height"), py::arg("pitch") = 0.3, py::arg("centre_easting") = 0.0, py::arg("centre_northing") = 0.0,
        "Returns (min_easting, max_easting, min_northing, max_northing).");

    m.def(
        "synthesize",
        [](const std::string& kind, int size, std::uint64_t seed, double amplitude, double sigma) {
            const GridGeometry g = pixel_grid(size, size);
            DeformationParams p;
            p.affine = similarity_about_centre(g, 3.0, 1.02, 3.0, 3.0);
            p.bump = {0.5 * (size - 1), 0.5 * (size - 1), amplitude, sigma, 1.0, 0.0};
            const auto d = make_deformation(parse_deformation(kind), p, g);
            const auto pair = synthesize_pair(Texture(seed, size), g, d.field);
            py::dict out;
            out["template"] = to_array(pair.T);
            out["reference"] = to_array(pair.R);
            out["ux"] = to_array(d.field.ux(), g);
            out["uy"] = to_array(d.field.uy(), g);
            return out;
        },
        py::arg("kind") = "bump", py::arg("size") = 128, py::arg("seed") = 1, py::arg("amplitude") = 4.0, py::arg("sigma") = 10.0);

    m.def(
        "run_cli",
        [](const std::vector<std::string>& args) {
            std::ostringstream out, err;
            int code = 0;
            {
                py::gil_scoped_release release;
                code = run_cli(args, out, err);
            }
            return py::make_tuple(code, out.str(), err.str());
        },
        py::arg("args"), "Runs one command line; returns (exit_code, stdout, stderr).");
}
