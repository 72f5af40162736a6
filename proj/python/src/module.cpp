#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "mtpp/cli.hpp"
#include "mtpp/envelope.hpp"
#include "mtpp/error.hpp"
#include "mtpp/fit.hpp"
#include "mtpp/io.hpp"
#include "mtpp/npest.hpp"
#include "mtpp/parallel.hpp"
#include "mtpp/sim.hpp"

namespace py = pybind11;
using namespace mtpp;

namespace {

std::vector<Point> to_points(const py::array_t<double, py::array::c_style | py::array::forcecast>& xy) {
    if (xy.ndim() != 2 || xy.shape(1) != 2) throw Error(ErrorCode::InvalidArgument, "points must be an (n, 2) array");
    auto a = xy.unchecked<2>();
    std::vector<Point> out(static_cast<std::size_t>(a.shape(0)));
    for (py::ssize_t k = 0; k < a.shape(0); ++k) out[static_cast<std::size_t>(k)] = {a(k, 0), a(k, 1)};
    return out;
}

py::array_t<double> from_points(const std::vector<Point>& pts) {
    py::array_t<double> out({static_cast<py::ssize_t>(pts.size()), py::ssize_t{2}});
    auto a = out.mutable_unchecked<2>();
    for (std::size_t k = 0; k < pts.size(); ++k) {
        a(static_cast<py::ssize_t>(k), 0) = pts[k].x;
        a(static_cast<py::ssize_t>(k), 1) = pts[k].y;
    }
    return out;
}

Ring to_ring(const py::array_t<double, py::array::c_style | py::array::forcecast>& xy) { return to_points(xy); }

py::dict surface_dict(const IntensitySurface& s) {
    py::array_t<double> values({static_cast<py::ssize_t>(s.grid.ny()), static_cast<py::ssize_t>(s.grid.nx())});
    auto v = values.mutable_unchecked<2>();
    for (int iy = 0; iy < s.grid.ny(); ++iy)
        for (int ix = 0; ix < s.grid.nx(); ++ix) {
            const std::size_t c = static_cast<std::size_t>(iy) * s.grid.nx() + ix;
            v(iy, ix) = s.mask[c] ? s.values[c] : std::numeric_limits<double>::quiet_NaN();
        }
    const auto& b = s.grid.box();
    py::dict d;
    d["values"] = values;
    d["extent"] = py::make_tuple(b.xmin, b.xmax, b.ymin, b.ymax);
    d["integral"] = s.integral();
    return d;
}

IntensityOptions intensity_options(const std::string& estimator, double bandwidth, bool leave_one_out, double trim) {
    IntensityOptions o;
    if (estimator == "homogeneous") o.estimator = IntensityEstimator::Homogeneous;
    else if (estimator == "kernel") o.estimator = IntensityEstimator::Kernel;
    else if (estimator == "adaptive") o.estimator = IntensityEstimator::Adaptive;
    else throw Error(ErrorCode::InvalidArgument, "unknown estimator '" + estimator + "'");
    o.bandwidth = bandwidth;
    o.leave_one_out = leave_one_out;
    o.adaptive.trim = trim;
    return o;
}

EdgeCorrection edge(const std::string& s) {
    if (s == "translation") return EdgeCorrection::Translation;
    if (s == "border") return EdgeCorrection::Border;
    throw Error(ErrorCode::InvalidArgument, "unknown edge correction '" + s + "'");
}

py::dict envelope_dict(const EnvelopeResult& e) {
    py::dict d;
    d["r"] = e.r;
    d["observed"] = e.observed;
    d["lower"] = e.lower;
    d["upper"] = e.upper;
    d["significant"] = e.significant;
    d["p_lower"] = e.p_lower;
    d["p_upper"] = e.p_upper;
    d["level"] = e.level;
    return d;
}

}  // namespace

PYBIND11_MODULE(_mtpp, m) {
    m.doc() = "Multitype spatial point patterns: intensity, K functions, envelopes and sparse group lasso fits";
    m.attr("__version__") = cli::kVersion;

    PYBIND11_CONSTINIT static py::gil_safe_call_once_and_store<py::object> error;
    PYBIND11_CONSTINIT static py::gil_safe_call_once_and_store<py::object> numerical;
    error.call_once_and_store_result([&]() { return py::object(py::exception<Error>(m, "Error", PyExc_RuntimeError)); });
    numerical.call_once_and_store_result([&]() {
        return py::object(py::exception<Error>(m, "NumericalError", error.get_stored().ptr()));
    });
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            py::set_error(is_numerical(e.code()) ? numerical.get_stored() : error.get_stored(), e.what());
        }
    });

    m.def("set_max_threads", &set_max_threads, py::arg("n"));
    m.def("max_threads", &max_threads);

    py::class_<Shape>(m, "Window")
        .def_static("rectangle", &Shape::rectangle, py::arg("xmin"), py::arg("ymin"), py::arg("xmax"), py::arg("ymax"))
        .def_static(
            "polygon",
            [](const py::array_t<double, py::array::c_style | py::array::forcecast>& outer, const py::list& holes) {
                Polygon poly{to_ring(outer), {}};
                for (const auto& h : holes)
                    poly.holes.push_back(to_ring(h.cast<py::array_t<double, py::array::c_style | py::array::forcecast>>()));
                return Shape({poly});
            },
            py::arg("outer"), py::arg("holes") = py::list())
        .def_static("from_geojson", [](const std::string& path) { return io::read_window_geojson(path); })
        .def_property_readonly("area", &Shape::area)
        .def_property_readonly("bbox",
                               [](const Shape& s) {
                                   const auto& b = s.bbox();
                                   return py::make_tuple(b.xmin, b.ymin, b.xmax, b.ymax);
                               })
        .def("contains", [](const Shape& s, double x, double y) { return s.contains({x, y}); });

    py::class_<MarkedPointPattern>(m, "Pattern")
        .def(py::init([](const py::array_t<double, py::array::c_style | py::array::forcecast>& xy,
                         std::vector<int> marks, int mark_count, const Shape& window) {
                 if (mark_count <= 0)
                     for (int mk : marks) mark_count = std::max(mark_count, mk);
                 return MarkedPointPattern(to_points(xy), std::move(marks), std::max(mark_count, 1), window);
             }),
             py::arg("points"), py::arg("marks"), py::arg("mark_count") = 0, py::arg("window"))
        .def_static(
            "from_csv",
            [](const std::string& path, const Shape& window) {
                auto rec = io::read_points_csv(path);
                return MarkedPointPattern(std::move(rec.points), std::move(rec.marks), std::max(rec.max_mark, 1),
                                          window);
            },
            py::arg("path"), py::arg("window"))
        .def_property_readonly("points", [](const MarkedPointPattern& p) { return from_points(p.points()); })
        .def_property_readonly("marks", &MarkedPointPattern::marks)
        .def_property_readonly("mark_count", &MarkedPointPattern::mark_count)
        .def_property_readonly("window", &MarkedPointPattern::window)
        .def("count", &MarkedPointPattern::count, py::arg("mark"))
        .def("__len__", &MarkedPointPattern::size);

    py::class_<RegionSet>(m, "RegionSet")
        .def_static("from_geojson", [](const std::string& path) { return RegionSet(io::read_regions_geojson(path)); })
        .def_property_readonly("window", &RegionSet::window)
        .def_property_readonly("ids",
                               [](const RegionSet& rs) {
                                   std::vector<int> ids;
                                   for (const auto& r : rs.regions()) ids.push_back(r.id);
                                   return ids;
                               })
        .def_property_readonly("populations",
                               [](const RegionSet& rs) {
                                   std::vector<double> v;
                                   for (const auto& r : rs.regions()) v.push_back(r.population);
                                   return v;
                               })
        .def("__len__", &RegionSet::size);

    py::class_<DesignSpec>(m, "DesignSpec")
        .def_static("parse", [](const std::string& text) { return DesignSpec::parse(text); })
        .def_static("from_file", [](const std::string& path) { return DesignSpec::from_file(path); })
        .def("to_text", &DesignSpec::to_text)
        .def_property_readonly("mark_count", &DesignSpec::mark_count)
        .def_property_readonly("coefficient_names",
                               [](const DesignSpec& s) {
                                   std::vector<std::string> names;
                                   for (std::size_t l = 0; l < s.size(); ++l) names.push_back(s.coefficient_name(l));
                                   return names;
                               })
        .def("__len__", &DesignSpec::size);

    m.def("scott_bandwidth", [](const py::array_t<double, py::array::c_style | py::array::forcecast>& xy) {
        return scott_bandwidth(to_points(xy));
    });
    m.def(
        "intensity_surface",
        [](const MarkedPointPattern& p, int mark, const std::string& estimator, double bandwidth, int nx, int ny,
           double trim) {
            const auto pts = p.points_of(mark);
            if (estimator == "homogeneous") {
                auto s = make_surface(p.window(), {nx, ny});
                for (std::size_t c = 0; c < s.values.size(); ++c)
                    if (s.mask[c]) s.values[c] = static_cast<double>(pts.size()) / p.window().area();
                return surface_dict(s);
            }
            const double h = bandwidth > 0.0 ? bandwidth : scott_bandwidth(pts);
            if (estimator == "kernel") return surface_dict(kernel_intensity(p, mark, h, {nx, ny}));
            AdaptiveOptions a;
            a.trim = trim;
            return surface_dict(adaptive_intensity(p, mark, h, a, {nx, ny}));
        },
        py::arg("pattern"), py::arg("mark"), py::arg("estimator") = "adaptive", py::arg("bandwidth") = 0.0,
        py::arg("nx") = 256, py::arg("ny") = 256, py::arg("trim") = 5.0);
    m.def(
        "intensity_at_points",
        [](const MarkedPointPattern& p, int mark, const std::string& estimator, double bandwidth, bool loo,
           double trim) { return intensity_at_points(p, mark, intensity_options(estimator, bandwidth, loo, trim)); },
        py::arg("pattern"), py::arg("mark"), py::arg("estimator") = "adaptive", py::arg("bandwidth") = 0.0,
        py::arg("leave_one_out") = true, py::arg("trim") = 5.0);

    m.def("default_r_max", &default_r_max, py::arg("window"));
    m.def("r_grid", &make_r_grid, py::arg("r_max"), py::arg("steps") = 512);
    m.def(
        "inhom_k",
        [](const MarkedPointPattern& p, int mark_a, int mark_b, const std::vector<double>& rho_a,
           const std::vector<double>& rho_b, const std::vector<double>& r, const std::string& correction) {
            const auto k = (mark_b == 0 || mark_b == mark_a)
                               ? inhom_K(p, mark_a, rho_a, r, edge(correction))
                               : inhom_cross_K(p, mark_a, mark_b, rho_a, rho_b, r, edge(correction));
            return k.value;
        },
        py::arg("pattern"), py::arg("mark_a"), py::arg("mark_b"), py::arg("rho_a"), py::arg("rho_b"), py::arg("r"),
        py::arg("correction") = "translation");
    m.def(
        "center_l",
        [](const std::vector<double>& r, const std::vector<double>& k) {
            return center_L(SummaryCurve{r, k, CurveKind::K}).value;
        },
        py::arg("r"), py::arg("k"));

    m.def("min_simulations", &min_simulations, py::arg("level"));
    m.def(
        "global_envelope",
        [](const std::vector<double>& r, const std::vector<double>& observed,
           const std::vector<std::vector<double>>& simulated, double level) {
            return envelope_dict(global_envelope(CurveEnsemble{r, observed, simulated}, level));
        },
        py::arg("r"), py::arg("observed"), py::arg("simulated"), py::arg("level") = 0.95);
    m.def(
        "envelope_test",
        [](const MarkedPointPattern& p, int mark_a, int mark_b, std::size_t sims, double level,
           const std::string& estimator, double bandwidth, bool reestimate, const std::vector<double>& r,
           std::uint64_t seed) {
            EnvelopeTestOptions o;
            o.simulations = sims;
            o.level = level;
            o.intensity = intensity_options(estimator, bandwidth, true, 5.0);
            o.reestimate = reestimate;
            o.r = r;
            o.seed = seed;
            py::gil_scoped_release release;
            auto t = envelope_test(p, mark_a, mark_b == 0 ? mark_a : mark_b, o);
            py::gil_scoped_acquire acquire;
            return envelope_dict(t.result);
        },
        py::arg("pattern"), py::arg("mark_a"), py::arg("mark_b") = 0, py::arg("simulations") = 999,
        py::arg("level") = 0.95, py::arg("estimator") = "adaptive", py::arg("bandwidth") = 0.0,
        py::arg("reestimate") = true, py::arg("r") = std::vector<double>{}, py::arg("seed") = 1);

    m.def(
        "fit",
        [](const MarkedPointPattern& p, const RegionSet& regions, const DesignSpec& spec, double alpha,
           double training_fraction, std::uint64_t seed, double level, const std::string& covariance,
           const std::vector<double>& range) {
            TwoStepOptions o;
            o.path.alpha = alpha;
            o.split.training_fraction = training_fraction;
            o.split.seed = seed;
            o.level = level;
            if (covariance == "poisson") o.covariance.mode = CovarianceMode::Poisson;
            else if (covariance == "second_order") o.covariance.mode = CovarianceMode::SecondOrder;
            else throw Error(ErrorCode::InvalidArgument, "unknown covariance '" + covariance + "'");
            o.covariance.range = range;
            o.covariance.seed = seed;
            FitResult f;
            {
                py::gil_scoped_release release;
                f = two_step_fit(p, regions, spec, o);
            }
            std::vector<std::string> names;
            for (std::size_t l = 0; l < spec.size(); ++l) names.push_back(spec.coefficient_name(l));
            std::vector<double> lambdas, bic;
            std::vector<std::size_t> df;
            for (const auto& rec : f.path) {
                lambdas.push_back(rec.lambda);
                bic.push_back(rec.bic);
                df.push_back(rec.df);
            }
            py::dict d;
            d["names"] = names;
            d["beta"] = f.beta;
            d["selected"] = f.selected;
            d["se"] = f.se;
            d["ci_lower"] = f.ci_lower;
            d["ci_upper"] = f.ci_upper;
            d["sigma"] = f.sigma;
            d["beta_penalized"] = f.beta_penalized;
            d["lambda_star"] = f.lambda_star;
            d["lambda_max"] = f.lambda_max;
            d["path_lambda"] = lambdas;
            d["path_bic"] = bic;
            d["path_df"] = df;
            d["range"] = f.range;
            d["training_points"] = f.training_points;
            d["validation_points"] = f.validation_points;
            return d;
        },
        py::arg("pattern"), py::arg("regions"), py::arg("spec"), py::arg("alpha") = 0.05,
        py::arg("training_fraction") = 1.0 / 3.0, py::arg("seed") = 1, py::arg("level") = 0.90,
        py::arg("covariance") = "second_order", py::arg("range") = std::vector<double>{});

    py::class_<SyntheticScenario>(m, "Scenario")
        .def_static("default", &default_scenario, py::arg("scale") = 1.0)
        .def_readonly("regions", &SyntheticScenario::regions)
        .def_readonly("spec", &SyntheticScenario::spec)
        .def_readonly("scale", &SyntheticScenario::scale)
        .def_property_readonly("beta", &SyntheticScenario::beta_vector)
        .def_property_readonly("scaled_regions", &SyntheticScenario::scaled_regions)
        .def("expected_counts", &SyntheticScenario::expected_counts)
        .def("simulate", &simulate_scenario, py::arg("seed"), py::arg("stream") = 0);

    m.def(
        "main", [](const std::vector<std::string>& args) {
            std::vector<std::string> full{"mtpp"};
            full.insert(full.end(), args.begin(), args.end());
            py::gil_scoped_release release;
            return cli::run(full);
        },
        py::arg("args"));
}
