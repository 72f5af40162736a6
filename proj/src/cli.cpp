#include "mtpp/cli.hpp"

#include <cmath>
#include <filesystem>
#include <iostream>
#include <set>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "mtpp/envelope.hpp"
#include "mtpp/error.hpp"
#include "mtpp/fit.hpp"
#include "mtpp/io.hpp"
#include "mtpp/npest.hpp"
#include "mtpp/parallel.hpp"
#include "mtpp/sim.hpp"
#include "mtpp/validate.hpp"

namespace mtpp::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

const std::set<std::string> kPathOptions = {"points", "regions", "window", "design", "coefficients"};
const std::set<std::string> kUnrecorded = {"help", "config", "threads", "out"};

// ---------------------------------------------------------------------------
// option sets

struct WindowArgs {
    std::string points;
    std::string window;
    std::string regions;
};

struct IntensityArgs {
    std::string estimator = "adaptive";
    double bandwidth = 0.0;
    bool no_loo = false;
    int bw_nx = 16;
    int bw_ny = 16;
    double trim = 5.0;
};

struct Args {
    std::string out = ".";
    unsigned threads = 0;
    WindowArgs input;
    IntensityArgs intensity;
    int mark = 0;
    int mark_a = 1;
    int mark_b = 0;
    int nx = 256;
    int ny = 256;
    double r_max = 0.0;
    std::size_t steps = 512;
    std::string correction = "translation";
    std::size_t sims = 999;
    double level = 0.95;
    bool reuse_intensity = false;
    int null_nx = 128;
    int null_ny = 128;
    std::uint64_t seed = 1;
    std::string design;
    double alpha = 0.05;
    std::size_t n_lambda = 100;
    double min_ratio = 1e-4;
    double train_fraction = 1.0 / 3.0;
    double ci_level = 0.90;
    std::string covariance = "second_order";
    std::vector<double> range;
    std::size_t envelope_sims = 199;
    double bic_n = 0.0;
    bool zero_replacement = false;
    double scale = 1.0;
    std::uint64_t replicate = 0;
    std::string coefficients;
    std::string experiment = "consistency";
    std::vector<double> scales{1.0, 4.0, 16.0};
    std::size_t reps = 50;
    std::string manifest;
};

void add_window_options(CLI::App* sub, WindowArgs& a, bool need_points = true) {
    auto* pts = sub->add_option("--points", a.points, "point CSV with columns x,y,mark");
    if (need_points) pts->required();
    sub->add_option("--window", a.window, "window GeoJSON");
    sub->add_option("--regions", a.regions, "region GeoJSON (its union is the window)");
}

void add_intensity_options(CLI::App* sub, IntensityArgs& a) {
    sub->add_option("--estimator", a.estimator, "homogeneous, kernel or adaptive")
        ->check(CLI::IsMember({"homogeneous", "kernel", "adaptive"}));
    sub->add_option("--bandwidth", a.bandwidth, "fixed or pilot bandwidth; 0 uses the rule of thumb");
    sub->add_flag("--no-loo", a.no_loo, "keep each point's own kernel when evaluating at data points");
    sub->add_option("--bw-nx", a.bw_nx, "bandwidth raster columns");
    sub->add_option("--bw-ny", a.bw_ny, "bandwidth raster rows");
    sub->add_option("--trim", a.trim, "cap adaptive bandwidths at trim x pilot");
}

IntensityOptions intensity_options(const IntensityArgs& a) {
    IntensityOptions o;
    o.estimator = a.estimator == "homogeneous" ? IntensityEstimator::Homogeneous
                  : a.estimator == "kernel"    ? IntensityEstimator::Kernel
                                               : IntensityEstimator::Adaptive;
    o.bandwidth = a.bandwidth;
    o.leave_one_out = !a.no_loo;
    o.adaptive.bandwidth_grid = {a.bw_nx, a.bw_ny};
    o.adaptive.trim = a.trim;
    return o;
}

// ---------------------------------------------------------------------------
// helpers

Window load_window(const WindowArgs& a) {
    if (!a.regions.empty()) return RegionSet(io::read_regions_geojson(a.regions)).window();
    if (!a.window.empty()) return io::read_window_geojson(a.window);
    throw Error(ErrorCode::InvalidArgument, "give --window or --regions");
}

MarkedPointPattern load_pattern(const std::string& path, const Window& window, int mark_count = 0) {
    auto rec = io::read_points_csv(path);
    const int M = mark_count > 0 ? mark_count : std::max(rec.max_mark, 1);
    if (rec.max_mark > M) {
        throw Error(ErrorCode::InvalidArgument, path + ": mark " + std::to_string(rec.max_mark) + " exceeds the " +
                                                    std::to_string(M) + " marks of the design");
    }
    try {
        return MarkedPointPattern(std::move(rec.points), std::move(rec.marks), M, window);
    } catch (const Error& e) {
        throw Error(e.code(), path + ": " + e.what());
    }
}

void write_surface_csv(const fs::path& path, const IntensitySurface& s) {
    io::CsvWriter w(path, {"x", "y", "value"});
    for (int iy = 0; iy < s.grid.ny(); ++iy)
        for (int ix = 0; ix < s.grid.nx(); ++ix) {
            const std::size_t c = static_cast<std::size_t>(iy) * s.grid.nx() + ix;
            if (!s.mask[c]) continue;
            const Point p = s.grid.center(ix, iy);
            w.cell(p.x).cell(p.y).cell(s.values[c]);
            w.end_row();
        }
}

void write_ascii_grid(const fs::path& path, const IntensitySurface& s) {
    std::string text;
    text += "ncols " + std::to_string(s.grid.nx()) + "\n";
    text += "nrows " + std::to_string(s.grid.ny()) + "\n";
    text += "xllcorner " + io::format_double(s.grid.box().xmin) + "\n";
    text += "yllcorner " + io::format_double(s.grid.box().ymin) + "\n";
    text += "dx " + io::format_double(s.grid.dx()) + "\n";
    text += "dy " + io::format_double(s.grid.dy()) + "\n";
    text += "NODATA_value -9999\n";
    for (int iy = s.grid.ny() - 1; iy >= 0; --iy) {
        for (int ix = 0; ix < s.grid.nx(); ++ix) {
            const std::size_t c = static_cast<std::size_t>(iy) * s.grid.nx() + ix;
            if (ix) text += ' ';
            text += s.mask[c] ? io::format_double(s.values[c]) : std::string("-9999");
        }
        text += '\n';
    }
    io::write_text_file(path, text);
}

std::vector<double> r_grid(const Args& a, const Window& w) {
    return make_r_grid(a.r_max > 0.0 ? a.r_max : default_r_max(w), a.steps);
}

EdgeCorrection correction(const std::string& s) {
    return s == "border" ? EdgeCorrection::Border : EdgeCorrection::Translation;
}

json finite_or_null(double v) {
    if (std::isfinite(v)) return v;
    return nullptr;
}

// ---------------------------------------------------------------------------
// subcommands

void run_intensity(const Args& a, const fs::path& out) {
    const Window window = load_window(a.input);
    const auto pattern = load_pattern(a.input.points, window);
    const auto opt = intensity_options(a.intensity);
    const GridSize grid{a.nx, a.ny};
    for (int m = 1; m <= pattern.mark_count(); ++m) {
        if (a.mark != 0 && m != a.mark) continue;
        const auto pts = pattern.points_of(m);
        IntensitySurface s;
        double h = opt.bandwidth;
        if (opt.estimator == IntensityEstimator::Homogeneous) {
            s = make_surface(window, grid);
            const double lambda = static_cast<double>(pts.size()) / window.area();
            for (std::size_t c = 0; c < s.values.size(); ++c)
                if (s.mask[c]) s.values[c] = lambda;
        } else {
            if (h <= 0.0) h = scott_bandwidth(pts);
            s = opt.estimator == IntensityEstimator::Kernel ? kernel_intensity(pattern, m, h, grid)
                                                             : adaptive_intensity(pattern, m, h, opt.adaptive, grid);
        }
        const std::string stem = "intensity_" + std::to_string(m);
        write_surface_csv(out / (stem + ".csv"), s);
        write_ascii_grid(out / (stem + ".asc"), s);
        std::cout << "intensity: mark " << m << ", " << pts.size() << " points, bandwidth " << io::format_double(h)
                  << ", integral " << io::format_double(s.integral()) << " -> " << stem << ".csv\n";
    }
}

void run_kfun(const Args& a, const fs::path& out) {
    const Window window = load_window(a.input);
    const auto pattern = load_pattern(a.input.points, window);
    const int mb = a.mark_b == 0 ? a.mark_a : a.mark_b;
    const auto opt = intensity_options(a.intensity);
    const auto r = r_grid(a, window);
    const auto rho_a = intensity_at_points(pattern, a.mark_a, opt);
    SummaryCurve k;
    if (mb == a.mark_a) {
        k = inhom_K(pattern, a.mark_a, rho_a, r, correction(a.correction));
    } else {
        const auto rho_b = intensity_at_points(pattern, mb, opt);
        k = inhom_cross_K(pattern, a.mark_a, mb, rho_a, rho_b, r, correction(a.correction));
    }
    const auto l = center_L(k);
    io::CsvWriter w(out / "kfun.csv", {"r", "K", "centered_L"});
    for (std::size_t t = 0; t < r.size(); ++t) {
        w.cell(r[t]).cell(k.value[t]).cell(l.value[t]);
        w.end_row();
    }
    std::cout << "kfun: marks " << a.mark_a << "," << mb << ", " << r.size() << " distances up to "
              << io::format_double(r.back()) << " -> kfun.csv\n";
}

void run_envelope(const Args& a, const fs::path& out) {
    const Window window = load_window(a.input);
    const auto pattern = load_pattern(a.input.points, window);
    const int mb = a.mark_b == 0 ? a.mark_a : a.mark_b;
    EnvelopeTestOptions o;
    o.simulations = a.sims;
    o.level = a.level;
    o.intensity = intensity_options(a.intensity);
    o.reestimate = !a.reuse_intensity;
    o.correction = correction(a.correction);
    o.r = r_grid(a, window);
    o.null_grid = {a.null_nx, a.null_ny};
    o.seed = a.seed;
    const auto test = envelope_test(pattern, a.mark_a, mb, o);
    const auto& res = test.result;
    io::CsvWriter w(out / "envelope.csv", {"r", "observed", "lower", "upper", "significant"});
    std::size_t flagged = 0;
    for (std::size_t t = 0; t < res.r.size(); ++t) {
        w.cell(res.r[t]).cell(res.observed[t]).cell(res.lower[t]).cell(res.upper[t]);
        w.cell(static_cast<long long>(res.significant[t]));
        w.end_row();
        flagged += res.significant[t];
    }
    json j = {{"mark_a", a.mark_a},   {"mark_b", mb},           {"simulations", a.sims},
              {"level", a.level},     {"p_lower", res.p_lower}, {"p_upper", res.p_upper},
              {"significant_distances", flagged}, {"reestimated_intensity", o.reestimate}};
    io::write_text_file(out / "envelope.json", j.dump(2) + "\n");
    std::cout << "envelope: " << a.sims << " simulations, p in [" << io::format_double(res.p_lower) << ", "
              << io::format_double(res.p_upper) << "], " << flagged << " significant distances -> envelope.csv\n";
}

void run_fit(const Args& a, const fs::path& out) {
    const auto spec = DesignSpec::from_file(a.design);
    const RegionSet regions(io::read_regions_geojson(a.input.regions));
    const auto pattern = load_pattern(a.input.points, regions.window(), spec.mark_count());
    TwoStepOptions o;
    o.split.training_fraction = a.train_fraction;
    o.split.seed = a.seed;
    o.path.alpha = a.alpha;
    o.path.n_lambda = a.n_lambda;
    o.path.min_ratio = a.min_ratio;
    if (a.bic_n > 0.0) o.path.sample_size = a.bic_n;
    o.level = a.ci_level;
    o.covariance.mode = a.covariance == "poisson" ? CovarianceMode::Poisson : CovarianceMode::SecondOrder;
    o.covariance.range = a.range;
    o.covariance.envelope_sims = a.envelope_sims;
    o.covariance.seed = a.seed;
    o.design.zero_replacement = a.zero_replacement;
    const auto fit = two_step_fit(pattern, regions, spec, o);
    std::cout << "fit: split " << fit.training_points << " training / " << fit.validation_points
              << " validation points\n";
    std::cout << "fit: lambda* " << io::format_double(fit.lambda_star) << " of " << io::format_double(fit.lambda_max)
              << ", " << fit.df << " of " << spec.size() << " coefficients selected\n";

    io::CsvWriter cw(out / "coefficients.csv",
                     {"name", "mark", "group", "estimate", "se", "ci_lo", "ci_hi", "selected"});
    json coefs = json::array();
    for (std::size_t l = 0; l < spec.size(); ++l) {
        const auto L = static_cast<Eigen::Index>(l);
        const auto g = spec.group_of(l);
        const std::string group = g ? spec.groups()[*g].name : std::string();
        cw.cell(spec.coefficient_name(l)).cell(static_cast<long long>(spec.mark_of(l))).cell(group);
        cw.cell(fit.beta[L]).cell(fit.se[L]).cell(fit.ci_lower[L]).cell(fit.ci_upper[L]);
        cw.cell(static_cast<long long>(fit.selected[l]));
        cw.end_row();
        coefs.push_back({{"name", spec.coefficient_name(l)},
                         {"mark", spec.mark_of(l)},
                         {"group", group},
                         {"estimate", fit.beta[L]},
                         {"se", finite_or_null(fit.se[L])},
                         {"ci_lo", finite_or_null(fit.ci_lower[L])},
                         {"ci_hi", finite_or_null(fit.ci_upper[L])},
                         {"selected", static_cast<bool>(fit.selected[l])},
                         {"beta_no", fit.beta_no[L]},
                         {"penalized_estimate", fit.beta_penalized[L]}});
    }
    io::CsvWriter pw(out / "path.csv", {"lambda", "df", "bic", "loglik", "kkt"});
    json path = json::array();
    for (const auto& rec : fit.path) {
        pw.cell(rec.lambda).cell(static_cast<long long>(rec.df)).cell(rec.bic).cell(rec.loglik).cell(rec.kkt);
        pw.end_row();
        path.push_back({{"lambda", rec.lambda}, {"df", rec.df}, {"bic", rec.bic}, {"loglik", rec.loglik}, {"kkt", rec.kkt}});
    }
    const auto rho = predict_intensity(fit.beta, regions, spec, o.design);
    for (int m = 1; m <= spec.mark_count(); ++m) {
        write_surface_csv(out / ("fitted_intensity_" + std::to_string(m) + ".csv"),
                          region_surface(regions, rho[static_cast<std::size_t>(m - 1)], {a.nx, a.ny}));
    }
    json sigma = json::array();
    for (Eigen::Index r = 0; r < fit.sigma.rows(); ++r) {
        json jr = json::array();
        for (Eigen::Index c = 0; c < fit.sigma.cols(); ++c) jr.push_back(fit.sigma(r, c));
        sigma.push_back(jr);
    }
    json j = {{"coefficients", coefs},
              {"path", path},
              {"best", fit.best},
              {"lambda_star", fit.lambda_star},
              {"lambda_max", fit.lambda_max},
              {"df", fit.df},
              {"objective", fit.objective},
              {"kkt", fit.kkt},
              {"level", fit.level},
              {"covariance_mode", a.covariance},
              {"covariance_range", fit.range},
              {"clipped_eigenvalues", fit.clipped},
              {"sigma", sigma},
              {"training_points", fit.training_points},
              {"validation_points", fit.validation_points}};
    io::write_text_file(out / "fit.json", j.dump(2) + "\n");
    std::cout << "fit: covariance " << a.covariance << " -> coefficients.csv, path.csv, fit.json\n";
}

void run_simulate(const Args& a, const fs::path& out) {
    SyntheticScenario sc;
    const bool custom = !a.input.regions.empty() || !a.design.empty() || !a.coefficients.empty();
    if (custom) {
        if (a.input.regions.empty() || a.design.empty() || a.coefficients.empty()) {
            throw Error(ErrorCode::InvalidArgument, "--regions, --design and --coefficients go together");
        }
        RegionSet regions(io::read_regions_geojson(a.input.regions));
        auto spec = DesignSpec::from_file(a.design);
        const auto table = io::read_csv_table(a.coefficients);
        std::size_t col = 0;
        try {
            col = table.column("estimate");
        } catch (const Error&) {
            col = table.column("beta");
        }
        if (table.rows.size() != spec.size()) {
            throw Error(ErrorCode::InvalidArgument, a.coefficients + ": " + std::to_string(table.rows.size()) +
                                                        " coefficients for a design with " +
                                                        std::to_string(spec.size()));
        }
        std::vector<Eigen::VectorXd> beta;
        for (int i = 1; i <= spec.mark_count(); ++i) {
            Eigen::VectorXd b(static_cast<Eigen::Index>(spec.mark_width(i)));
            for (Eigen::Index k = 0; k < b.size(); ++k) {
                const std::size_t row = spec.mark_offset(i) + static_cast<std::size_t>(k);
                b[k] = io::parse_number(table.rows[row][col],
                                        a.coefficients + ":" + std::to_string(row + 2) + " field " + table.header[col]);
            }
            beta.push_back(b);
        }
        sc = SyntheticScenario(std::move(regions), std::move(spec), std::move(beta), a.scale);
    } else {
        sc = default_scenario(a.scale);
    }
    const auto pattern = simulate_scenario(sc, a.seed, a.replicate);
    io::write_points_csv(out / "points.csv", pattern.points(), pattern.marks());
    io::write_regions_geojson(out / "regions.geojson", sc.scaled_regions().regions());
    io::write_text_file(out / "design.txt", sc.spec.to_text());
    io::CsvWriter tw(out / "truth.csv", {"name", "mark", "beta"});
    const auto beta = sc.beta_vector();
    for (std::size_t l = 0; l < sc.spec.size(); ++l) {
        tw.cell(sc.spec.coefficient_name(l)).cell(static_cast<long long>(sc.spec.mark_of(l)));
        tw.cell(beta[static_cast<Eigen::Index>(l)]);
        tw.end_row();
    }
    const auto expected = sc.expected_counts();
    std::cout << "simulate: " << pattern.size() << " points (expected " << io::format_double(expected.sum())
              << ") -> points.csv, regions.geojson, design.txt, truth.csv\n";
}

void run_validate(const Args& a, const fs::path& out) {
    const auto sc = default_scenario(1.0);
    ExperimentReport rep;
    if (a.experiment == "coverage") {
        rep = coverage_experiment(sc.with_scale(a.scale), a.reps, a.ci_level, a.seed);
        std::cout << "validate: coverage " << io::format_double(rep.coverage) << " over " << a.reps
                  << " replicates\n";
    } else {
        ExperimentOptions o;
        o.scales = a.scales;
        o.reps = a.reps;
        o.seed = a.seed;
        rep = a.experiment == "selection" ? selection_experiment(sc, o) : consistency_experiment(sc, o);
        for (const auto& lv : rep.levels) {
            std::cout << "validate: scale " << io::format_double(lv.scale) << ", mu " << io::format_double(lv.mu)
                      << ", mean error " << io::format_double(lv.mean_error) << ", zero frequency "
                      << io::format_double(lv.mean_zero_frequency) << ", " << lv.completed << "/" << lv.reps
                      << " fits\n";
        }
        std::cout << "validate: slope " << io::format_double(rep.slope) << "\n";
    }
    io::write_text_file(out / "report.json", report_json(rep));
    write_report_csv(rep, out / "report.csv");
}

// ---------------------------------------------------------------------------
// manifest and config

// Config keys outside any section belong to the chosen subcommand, except
// the run-level ones.
class SubcommandConfig : public CLI::ConfigTOML {
public:
    explicit SubcommandConfig(const CLI::App* app) : app_(app) {}

    std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
        auto items = CLI::ConfigTOML::from_config(input);
        const auto subs = app_->get_subcommands();
        if (subs.empty()) return items;
        for (auto& item : items) {
            if (item.parents.empty() && !kUnrecorded.count(item.name)) item.parents = {subs.front()->get_name()};
        }
        return items;
    }

private:
    const CLI::App* app_;
};

std::string long_name(const CLI::Option* o) { return o->get_lnames().empty() ? std::string() : o->get_lnames()[0]; }

json manifest_for(const CLI::App* sub, const fs::path& out) {
    json given = json::object();
    json defaults = json::object();
    for (const CLI::Option* o : sub->get_options()) {
        const std::string name = long_name(o);
        if (name.empty() || kUnrecorded.count(name)) continue;
        if (o->get_type_size_max() == 0) {
            if (o->count() > 0) given[name] = true;
            continue;
        }
        if (o->count() > 0) {
            auto vals = o->results();
            if (kPathOptions.count(name))
                for (auto& v : vals) v = fs::absolute(v).lexically_normal().string();
            given[name] = vals;
        } else if (!o->get_default_str().empty()) {
            defaults[name] = o->get_default_str();
        }
    }
    return {{"tool", "mtpp"},
            {"version", kVersion},
            {"subcommand", sub->get_name()},
            {"options", given},
            {"defaults", defaults},
            {"out", fs::absolute(out).lexically_normal().string()}};
}

std::vector<std::string> replay_args(const fs::path& manifest, const std::string& out_override, unsigned threads) {
    json m;
    try {
        m = json::parse(io::read_text_file(manifest));
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ParseError, manifest.string() + ": " + e.what());
    }
    if (m.value("tool", "") != "mtpp" || !m.contains("subcommand") || !m.contains("options")) {
        throw Error(ErrorCode::ParseError, manifest.string() + ": not an mtpp manifest");
    }
    std::vector<std::string> args{"mtpp", m.at("subcommand").get<std::string>()};
    for (const auto& [name, value] : m.at("options").items()) {
        if (value.is_boolean()) {
            if (value.get<bool>()) args.push_back("--" + name);
            continue;
        }
        args.push_back("--" + name);
        for (const auto& v : value) args.push_back(v.get<std::string>());
    }
    args.push_back("--out");
    args.push_back(out_override.empty() ? m.at("out").get<std::string>() : out_override);
    if (threads > 0) {
        args.push_back("--threads");
        args.push_back(std::to_string(threads));
    }
    return args;
}

int execute(const std::vector<std::string>& args, int depth) {
    Args a;
    CLI::App app{"Multitype spatial point pattern analysis: intensity, K functions, global envelopes and "
                 "sparse group lasso intensity regression."};
    app.name("mtpp");
    app.set_version_flag("--version", kVersion);
    app.option_defaults()->always_capture_default();
    app.require_subcommand(1);
    app.fallthrough();
    app.add_option("--threads", a.threads, "worker threads (0 = all cores)");
    app.add_option("--out", a.out, "output directory");

    auto* intensity = app.add_subcommand("intensity", "kernel intensity rasters per mark");
    add_window_options(intensity, a.input);
    add_intensity_options(intensity, a.intensity);
    intensity->add_option("--mark", a.mark, "mark to estimate (0 = all)");
    intensity->add_option("--nx", a.nx, "raster columns");
    intensity->add_option("--ny", a.ny, "raster rows");

    auto add_curve_options = [&](CLI::App* sub) {
        add_window_options(sub, a.input);
        add_intensity_options(sub, a.intensity);
        sub->add_option("--mark-a", a.mark_a, "first mark");
        sub->add_option("--mark-b", a.mark_b, "second mark (0 = same as first)");
        sub->add_option("--r-max", a.r_max, "largest distance (0 = quarter of the shorter side)");
        sub->add_option("--steps", a.steps, "number of distance steps");
        sub->add_option("--correction", a.correction, "edge correction")
            ->check(CLI::IsMember({"translation", "border"}));
    };
    auto* kfun = app.add_subcommand("kfun", "inhomogeneous K or cross-K and centered L");
    add_curve_options(kfun);

    auto* envelope = app.add_subcommand("envelope", "global ERL envelope of the centered L function");
    add_curve_options(envelope);
    envelope->add_option("--sims", a.sims, "number of null simulations");
    envelope->add_option("--level", a.level, "envelope level");
    envelope->add_flag("--reuse-intensity", a.reuse_intensity, "evaluate the observed intensity on replicates");
    envelope->add_option("--null-nx", a.null_nx, "null intensity raster columns");
    envelope->add_option("--null-ny", a.null_ny, "null intensity raster rows");
    envelope->add_option("--seed", a.seed, "random seed");

    auto* fit = app.add_subcommand("fit", "two-step sparse group lasso fit with confidence intervals");
    fit->add_option("--points", a.input.points, "point CSV")->required();
    fit->add_option("--regions", a.input.regions, "region GeoJSON")->required();
    fit->add_option("--design", a.design, "design spec file")->required();
    fit->add_option("--alpha", a.alpha, "lasso share of the penalty");
    fit->add_option("--n-lambda", a.n_lambda, "length of the lambda grid");
    fit->add_option("--min-ratio", a.min_ratio, "smallest lambda as a fraction of lambda_max");
    fit->add_option("--seed", a.seed, "random seed for the split");
    fit->add_option("--train-fraction", a.train_fraction, "training share of the split");
    fit->add_option("--level", a.ci_level, "confidence level");
    fit->add_option("--covariance", a.covariance, "covariance estimator")
        ->check(CLI::IsMember({"poisson", "second_order"}));
    fit->add_option("--range", a.range, "second-order truncation radius (one, or one per mark)")->delimiter(',');
    fit->add_option("--envelope-sims", a.envelope_sims, "simulations used to choose the radius");
    fit->add_option("--bic-n", a.bic_n, "BIC sample size (0 = number of points)");
    fit->add_flag("--zero-replacement", a.zero_replacement, "replace zero shares before log-ratios");
    fit->add_option("--nx", a.nx, "fitted intensity raster columns");
    fit->add_option("--ny", a.ny, "fitted intensity raster rows");

    auto* simulate = app.add_subcommand("simulate", "simulate a multitype Poisson pattern");
    simulate->add_option("--scale", a.scale, "multiplier of the baseline");
    simulate->add_option("--seed", a.seed, "random seed");
    simulate->add_option("--replicate", a.replicate, "generator stream");
    simulate->add_option("--regions", a.input.regions, "region GeoJSON (default: built-in scenario)");
    simulate->add_option("--design", a.design, "design spec file");
    simulate->add_option("--coefficients", a.coefficients, "CSV with an estimate or beta column");

    auto* validate = app.add_subcommand("validate", "Monte Carlo checks on the built-in scenario");
    validate->add_option("--experiment", a.experiment, "experiment")
        ->check(CLI::IsMember({"consistency", "selection", "coverage"}));
    validate->add_option("--scales", a.scales, "baseline multipliers")->delimiter(',');
    validate->add_option("--reps", a.reps, "replicates per scale");
    validate->add_option("--seed", a.seed, "random seed");
    validate->add_option("--level", a.ci_level, "confidence level (coverage)");
    validate->add_option("--scale", a.scale, "baseline multiplier (coverage)");

    app.set_config("--config", "", "TOML/INI file with option values; command-line flags win");
    app.config_formatter(std::make_shared<SubcommandConfig>(&app));
    app.allow_config_extras(CLI::config_extras_mode::error);
    for (CLI::App* sub : {intensity, kfun, envelope, fit, simulate, validate})
        sub->allow_config_extras(CLI::config_extras_mode::error);

    auto* replay = app.add_subcommand("replay", "re-run the command recorded in a manifest.json");
    replay->add_option("manifest", a.manifest, "manifest file")->required();

    std::vector<const char*> argv;
    for (const auto& s : args) argv.push_back(s.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }
    set_max_threads(a.threads);

    if (replay->parsed()) {
        if (depth > 0) throw Error(ErrorCode::InvalidArgument, "a manifest cannot replay another manifest");
        const bool out_given = app.get_option("--out")->count() > 0;
        return execute(replay_args(a.manifest, out_given ? a.out : std::string(), a.threads), depth + 1);
    }

    const fs::path out = a.out;
    std::error_code ec;
    fs::create_directories(out, ec);
    if (ec) throw Error(ErrorCode::FileError, "cannot create output directory '" + out.string() + "'");

    CLI::App* chosen = app.get_subcommands().front();
    const std::string name = chosen->get_name();
    if (name == "intensity") run_intensity(a, out);
    else if (name == "kfun") run_kfun(a, out);
    else if (name == "envelope") run_envelope(a, out);
    else if (name == "fit") run_fit(a, out);
    else if (name == "simulate") run_simulate(a, out);
    else if (name == "validate") run_validate(a, out);
    io::write_text_file(out / "manifest.json", manifest_for(chosen, out).dump(2) + "\n");
    return 0;
}

}  // namespace

int run(const std::vector<std::string>& args) {
    try {
        return execute(args, 0);
    } catch (const Error& e) {
        std::cerr << "mtpp: " << e.what() << "\n";
        return is_numerical(e.code()) ? 2 : 1;
    } catch (const std::exception& e) {
        std::cerr << "mtpp: " << e.what() << "\n";
        return 1;
    }
}

int run(int argc, const char* const* argv) {
    std::vector<std::string> args(argv, argv + argc);
    if (args.empty()) args.push_back("mtpp");
    return run(args);
}

}  // namespace mtpp::cli
