#include "tpms/io.hpp"

#include "CLI11.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>

using namespace tpms;
namespace fs = std::filesystem;

namespace {

// key=value lines, '#' starts a comment. Values are parsed lazily by whoever asks.
class ConfigFile {
public:
    ConfigFile() = default;

    explicit ConfigFile(const fs::path& path)
    {
        std::ifstream in(path);
        if (!in) {
            throw DomainError("cannot read config file " + path.string());
        }
        std::string line;
        int number = 0;
        while (std::getline(in, line)) {
            ++number;
            line = line.substr(0, line.find('#'));
            const auto trimmed = trim(line);
            if (trimmed.empty()) {
                continue;
            }
            const auto eq = trimmed.find('=');
            if (eq == std::string::npos) {
                throw DomainError(path.string() + ":" + std::to_string(number) + ": expected key=value");
            }
            values_[trim(trimmed.substr(0, eq))] = trim(trimmed.substr(eq + 1));
        }
    }

    template <class T>
    T get(const std::optional<T>& flag, const std::string& key, T fallback) const
    {
        if (flag) {
            return *flag;
        }
        const auto it = values_.find(key);
        if (it == values_.end()) {
            return fallback;
        }
        T value{};
        if (!CLI::detail::lexical_cast(it->second, value)) {
            throw DomainError("config key " + key + ": cannot parse '" + it->second + "'");
        }
        return value;
    }

    std::optional<double> get_optional(const std::optional<double>& flag, const std::string& key) const
    {
        if (flag || values_.count(key) == 0) {
            return flag;
        }
        return get<double>(std::nullopt, key, 0.0);
    }

private:
    static std::string trim(const std::string& s)
    {
        const auto b = s.find_first_not_of(" \t\r");
        const auto e = s.find_last_not_of(" \t\r");
        return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    }

    std::map<std::string, std::string> values_;
};

struct Range {
    double lo;
    double hi;
};

Range parse_range(const std::string& text)
{
    const auto sep = text.find("..");
    double lo = 0.0, hi = 0.0;
    if (sep == std::string::npos || !CLI::detail::lexical_cast(text.substr(0, sep), lo) ||
        !CLI::detail::lexical_cast(text.substr(sep + 2), hi)) {
        throw DomainError("range must look like lo..hi, got '" + text + "'");
    }
    return {lo, hi};
}

double parse_number(const std::string& text, const std::string& what)
{
    double v = 0.0;
    if (!CLI::detail::lexical_cast(text, v)) {
        throw DomainError(what + " must be a number, got '" + text + "'");
    }
    return v;
}

FamilyId require_family(const std::string& name)
{
    const auto f = parse_family(name);
    if (!f) {
        throw DomainError("unknown family '" + name + "' (expected H, rPD, tP, tD, tCLP or gyroid)");
    }
    return *f;
}

struct Common {
    std::optional<int> workers;
    std::optional<std::string> config_path;
    ConfigFile config;

    unsigned worker_count() const { return resolve_workers(config.get(workers, "workers", 0)); }
};

void log(const std::string& message)
{
    std::cerr << "tpms: " << message << "\n";
}

double seconds_since(std::chrono::steady_clock::time_point t0)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

GyroidAngle locate_gyroid(unsigned workers)
{
    const auto g = gyroid_angle(0.1, 1.4, kGyroidResidualTolerance, workers);
    log("gyroid angle theta = " + fmt12(g.theta) + " (residual " + fmt12(g.residual) + ")");
    return g;
}

/// Family name plus optional parameter, with `gyroid` standing for the tP curve
/// at its P/D/gyroid parameter and the coherent associate angle.
SurfaceSpec resolve_spec(const std::string& family, const std::optional<std::string>& a,
                         std::optional<double> theta, unsigned workers)
{
    if (family == "gyroid") {
        if (a && parse_number(*a, "a") != kGyroidCurveParameter) {
            throw DomainError("gyroid lives on the tP curve at a = 14");
        }
        return SurfaceSpec::associate(kGyroidCurveParameter, theta ? *theta : locate_gyroid(workers).theta);
    }
    if (!a) {
        throw DomainError("family " + family + " needs a parameter value");
    }
    auto spec = SurfaceSpec::make(require_family(family), parse_number(*a, "a"));
    if (theta) {
        spec.theta = *theta;
    }
    validate(spec);
    return spec;
}

int default_scan_level(FamilyId f)
{
    return (f == FamilyId::tP || f == FamilyId::tD) ? 5 : 4;
}

/// Square around the sample point farthest from all finite branch points.
ChartRectangle default_region(const SurfaceSpec& spec)
{
    const HyperellipticCurve curve(spec);
    cplx best = 0.0;
    double clearance = -1.0;
    for (double r : {0.0, 0.25, 0.5, 0.75, 1.0}) {
        for (int k = 0; k < (r == 0.0 ? 1 : 24); ++k) {
            const cplx z = std::polar(r, std::numbers::pi * k / 12.0);
            const double d = curve.distance_to_branch(Chart::Z, z);
            if (d > clearance + 1e-12) {
                best = z;
                clearance = d;
            }
        }
    }
    const double half = 0.6 * clearance / std::sqrt(2.0);
    return {best - cplx(half, half), best + cplx(half, half)};
}

ChartRectangle parse_region(const std::string& text)
{
    std::vector<double> v;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        v.push_back(parse_number(item, "region"));
    }
    if (v.size() != 4) {
        throw DomainError("region must be x0,y0,x1,y1");
    }
    return {cplx(v[0], v[1]), cplx(v[2], v[3])};
}

// ---------------------------------------------------------------------------
// Commands.

struct ScanLatticeArgs {
    std::string family;
    std::string range;
    std::optional<int> steps;
    std::optional<std::string> out;
};

int cmd_scan_lattice(const ScanLatticeArgs& args, const Common& common)
{
    const FamilyId family = require_family(args.family);
    const auto range = parse_range(args.range);
    const int steps = common.config.get(args.steps, "steps", 200);
    if (steps < 8) {
        throw DomainError("steps must be at least 8");
    }
    const fs::path out = common.config.get(args.out, "out", std::string("."));
    const unsigned workers = common.worker_count();

    const auto curve = sample_ratio_curve(family, range.lo, range.hi, static_cast<std::size_t>(steps), workers);
    const auto extrema = scan_ratio_extrema(family, range.lo, range.hi, static_cast<std::size_t>(steps), workers);

    LinePlot plot;
    plot.title = std::string(family_name(family)) + " lattice ratio";
    plot.x_label = "a";
    plot.y_label = "ratio";
    for (const auto& s : curve.samples) {
        plot.points.emplace_back(s.a, s.ratio);
    }
    Json list = Json::array();
    for (const auto& e : extrema) {
        plot.markers.push_back({e.a_star, e.ratio_value, "a=" + fmt12(e.a_star)});
        list.push_back(to_json(e));
    }
    write_atomic(out / "ratio.csv", ratio_csv(curve));
    write_atomic(out / "ratio.svg", svg_plot(plot));
    std::cout << dump(Json{{"family", family_name(family)}, {"extrema", list}});
    return 0;
}

struct SpectrumArgs {
    std::string family;
    std::optional<std::string> a;
    std::optional<double> theta;
    std::optional<int> level;
    std::optional<int> eigenvalues;
    std::optional<std::string> out;
};

int cmd_spectrum(const SpectrumArgs& args, const Common& common)
{
    const int level = common.config.get(args.level, "level", 4);
    const auto spec = resolve_spec(args.family, args.a, common.config.get_optional(args.theta, "theta"),
                                   common.worker_count());
    SpectrumOptions options;
    options.eigenvalue_count = static_cast<std::size_t>(
        common.config.get(args.eigenvalues, "eigenvalues", static_cast<int>(kReportedEigenvalues)));
    const fs::path out = common.config.get(args.out, "out", std::string("."));

    const auto report = morse_index_nullity(spec, level, options);
    const auto text = dump(to_json(report));
    write_atomic(out / "spectrum.json", text);
    std::cout << text;
    return 0;
}

struct FindInstantsArgs {
    std::string family;
    std::string range;
    std::optional<int> steps;
    std::optional<int> level;
    std::optional<std::string> out;
};

int cmd_find_instants(const FindInstantsArgs& args, const Common& common)
{
    const FamilyId family = require_family(args.family);
    const auto range = parse_range(args.range);
    check_range(family, range.lo, range.hi);
    const int steps = common.config.get(args.steps, "steps", 16);
    const int level = common.config.get(args.level, "level", default_scan_level(family));
    const fs::path out = common.config.get(args.out, "out", std::string("."));
    const unsigned workers = common.worker_count();

    std::vector<DegeneracyInstant> instants;
    if (has_closed_form_lattice(family)) {
        instants = scan_ratio_extrema(family, range.lo, range.hi, 200, workers);
    }
    IndexScanOptions scan_options;
    scan_options.workers = workers;
    const auto spectral =
        scan_index_jumps(family, range.lo, range.hi, static_cast<std::size_t>(steps), level, scan_options);
    instants.insert(instants.end(), spectral.begin(), spectral.end());
    std::stable_sort(instants.begin(), instants.end(),
                     [](const auto& x, const auto& y) { return x.a_star < y.a_star; });

    LinePlot plot;
    plot.title = std::string(family_name(family)) + " Morse index";
    plot.x_label = "a";
    plot.y_label = "index";
    plot.step = true;
    int index = spectral.empty() ? static_cast<int>(detail::probe_index(family, range.lo, level).index)
                                 : spectral.front().index_before;
    plot.points.emplace_back(range.lo, index);
    for (const auto& s : spectral) {
        plot.points.emplace_back(s.a_star, s.index_after);
        plot.markers.push_back({s.a_star, static_cast<double>(s.index_after),
                                std::string(to_string(s.parity)) + " " + fmt12(s.a_star)});
        index = s.index_after;
    }
    plot.points.emplace_back(range.hi, index);

    Json list = Json::array();
    for (const auto& i : instants) {
        list.push_back(to_json(i));
    }
    const Json doc{{"family", family_name(family)},
                   {"range", Json::array({round12(range.lo), round12(range.hi)})},
                   {"level", level},
                   {"instants", list}};
    write_atomic(out / "instants.json", dump(doc));
    write_atomic(out / "instants.svg", svg_plot(plot));
    std::cout << dump(doc);
    return 0;
}

struct MeshArgs {
    std::string family;
    std::optional<std::string> a;
    std::optional<double> theta;
    std::optional<std::string> region;
    std::optional<int> level;
    std::optional<int> sheet;
    std::optional<std::string> out;
};

int cmd_mesh(const MeshArgs& args, const Common& common)
{
    const unsigned workers = common.worker_count();
    const auto spec = resolve_spec(args.family, args.a, common.config.get_optional(args.theta, "theta"),
                                   workers);
    const int level = common.config.get(args.level, "level", 5);
    const int sheet = common.config.get(args.sheet, "sheet", 1);
    const auto region_text = common.config.get(args.region, "region", std::string());
    const auto region = region_text.empty() ? default_region(spec) : parse_region(region_text);
    const fs::path out = common.config.get(args.out, "out", std::string("."));

    const auto mesh = surface_patch(spec, region, level, sheet);
    const double residual = mean_curvature_residual(mesh);
    write_atomic(out / "mesh.obj", obj_string(mesh));
    write_atomic(out / "periods.json", dump(to_json(compute_periods(spec, workers))));
    Json summary = to_json(spec);
    summary["level"] = level;
    Json corners = Json::array();
    for (double c : {region.lower_left.real(), region.lower_left.imag(), region.upper_right.real(),
                     region.upper_right.imag()}) {
        corners.push_back(round12(c));
    }
    summary["region"] = corners;
    summary["vertices"] = mesh.vertices.size();
    summary["faces"] = mesh.faces.size();
    summary["mean_curvature_residual"] = round12(residual);
    std::cout << dump(summary);
    return 0;
}

struct GyroidArgs {
    std::optional<std::string> bracket;
    std::optional<std::string> out;
};

int cmd_gyroid_angle(const GyroidArgs& args, const Common& common)
{
    const auto bracket = parse_range(common.config.get(args.bracket, "bracket", std::string("0.1..1.4")));
    const fs::path out = common.config.get(args.out, "out", std::string("."));
    const auto g = gyroid_angle(bracket.lo, bracket.hi, kGyroidResidualTolerance, common.worker_count());
    const Json doc{{"theta", round12(g.theta)}, {"residual", round12(g.residual)}};
    write_atomic(out / "gyroid.json", dump(doc));
    std::cout << dump(doc);
    return 0;
}

struct ReportArgs {
    std::optional<int> level;
    bool skip_scans = false;
    std::optional<std::string> out;
};

/// Everything the acceptance suite checks, gathered into one document.
int cmd_report(const ReportArgs& args, const Common& common)
{
    const int level = common.config.get(args.level, "level", 4);
    const fs::path out = common.config.get(args.out, "out", std::string("."));
    const unsigned workers = common.worker_count();
    Json doc;

    Json minima = Json::object();
    const std::vector<std::tuple<FamilyId, double, double>> ratio_ranges{
        {FamilyId::rPD, 0.2, 3.0}, {FamilyId::H, 0.05, 0.95}, {FamilyId::tP, 2.5, 100.0}};
    for (const auto& [family, lo, hi] : ratio_ranges) {
        const auto t0 = std::chrono::steady_clock::now();
        Json list = Json::array();
        for (const auto& e : scan_ratio_extrema(family, lo, hi, 200, workers)) {
            list.push_back(to_json(e));
        }
        minima[std::string(family_name(family))] = list;
        log(std::string(family_name(family)) + " ratio scan " + fmt12(seconds_since(t0)) + " s");
    }
    doc["ratio_extrema"] = minima;

    Json table = Json::array();
    const std::vector<SurfaceSpec> catalog{
        SurfaceSpec::make(FamilyId::tCLP, 0.0), SurfaceSpec::make(FamilyId::tP, 14.0),
        SurfaceSpec::make(FamilyId::tD, 14.0),  SurfaceSpec::make(FamilyId::H, 0.1),
        SurfaceSpec::make(FamilyId::H, 0.5),    SurfaceSpec::make(FamilyId::H, 0.9),
        SurfaceSpec::make(FamilyId::rPD, 0.1),  SurfaceSpec::make(FamilyId::rPD, 0.5),
    };
    SpectrumOptions counts;
    counts.eigenvalue_count = 0;
    for (const auto& spec : catalog) {
        Json row = to_json(spec);
        for (int l : {level, level + 1}) {
            const auto r = morse_index_nullity(spec, l, counts);
            row["level_" + std::to_string(l)] = Json{{"index", r.morse_index}, {"nullity", r.nullity}};
        }
        table.push_back(row);
    }
    doc["index_table"] = table;
    log("index table done");

    if (!args.skip_scans) {
        Json scans = Json::object();
        const std::vector<std::tuple<FamilyId, double, double>> scan_ranges{{FamilyId::H, 0.2, 0.95},
                                                                            {FamilyId::rPD, 0.2, 3.0},
                                                                            {FamilyId::tP, 2.5, 60.0},
                                                                            {FamilyId::tD, 2.5, 60.0}};
        IndexScanOptions scan_options;
        scan_options.workers = workers;
        for (const auto& [family, lo, hi] : scan_ranges) {
            const auto t0 = std::chrono::steady_clock::now();
            Json list = Json::array();
            for (const auto& i : scan_index_jumps(family, lo, hi, 16, std::max(level, default_scan_level(family)),
                                                  scan_options)) {
                list.push_back(to_json(i));
            }
            scans[std::string(family_name(family))] = list;
            log(std::string(family_name(family)) + " spectral scan " + fmt12(seconds_since(t0)) + " s");
        }
        doc["spectral_instants"] = scans;
    }

    Json lattices = Json::array();
    for (const auto& spec : {SurfaceSpec::make(FamilyId::rPD, 1.0), SurfaceSpec::make(FamilyId::H, 0.5),
                             SurfaceSpec::make(FamilyId::tP, 14.0)}) {
        const auto periods = period_lattice(spec, workers);
        const auto cmp = compare_lattices(periods.basis.generators, lattice_basis_closed_form(spec).generators);
        Json row = to_json(spec);
        row["periods"] = to_json(periods.basis);
        row["equivalent"] = cmp.equivalent;
        row["relative_gram_error"] = round12(cmp.relative_gram_error);
        lattices.push_back(row);
    }
    doc["period_lattices"] = lattices;

    const auto g = gyroid_angle(0.1, 1.4, kGyroidResidualTolerance, workers);
    doc["gyroid"] = Json{{"theta", round12(g.theta)}, {"residual", round12(g.residual)}};

    write_atomic(out / "report.json", dump(doc));
    std::cout << dump(doc);
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Bifurcation analysis of triply periodic minimal surface families"};
    app.require_subcommand(1);
    Common common;
    app.add_option("--workers", common.workers, "Worker threads (default: TPMS_WORKERS or core count)")
        ->check(CLI::PositiveNumber);
    app.add_option("--config", common.config_path, "key=value file supplying defaults for any flag");

    ScanLatticeArgs scan_args;
    auto* scan = app.add_subcommand("scan-lattice", "Lattice ratio curve with its extrema (ratio.csv, ratio.svg)");
    scan->add_option("family", scan_args.family, "rPD, H or tP")->required();
    scan->add_option("range", scan_args.range, "Parameter interval lo..hi")->required();
    scan->add_option("steps", scan_args.steps, "Number of intervals (at least 8)");
    scan->add_option("--out", scan_args.out, "Output directory");

    SpectrumArgs spec_args;
    auto* spectrum = app.add_subcommand("spectrum", "Morse index, nullity and lowest eigenvalues (spectrum.json)");
    spectrum->add_option("family", spec_args.family, "Family name or gyroid")->required();
    spectrum->add_option("a", spec_args.a, "Family parameter");
    spectrum->add_option("--theta", spec_args.theta, "Associate angle");
    spectrum->add_option("--level", spec_args.level, "Mesh level (at least 4)");
    spectrum->add_option("--eigenvalues", spec_args.eigenvalues, "How many eigenvalues to report");
    spectrum->add_option("--out", spec_args.out, "Output directory");

    FindInstantsArgs find_args;
    auto* find = app.add_subcommand("find-instants", "Degeneracy instants from ratio extrema and index jumps");
    find->add_option("family", find_args.family, "Family name")->required();
    find->add_option("range", find_args.range, "Parameter interval lo..hi")->required();
    find->add_option("steps", find_args.steps, "Coarse grid intervals for the index scan");
    find->add_option("--level", find_args.level, "Mesh level");
    find->add_option("--out", find_args.out, "Output directory");

    MeshArgs mesh_args;
    auto* mesh = app.add_subcommand("mesh", "Surface patch as OBJ (mesh.obj, periods.json)");
    mesh->add_option("family", mesh_args.family, "Family name or gyroid")->required();
    mesh->add_option("a", mesh_args.a, "Family parameter");
    mesh->add_option("--theta", mesh_args.theta, "Associate angle");
    mesh->add_option("--region", mesh_args.region, "Chart rectangle x0,y0,x1,y1");
    mesh->add_option("--level", mesh_args.level, "Grid level (2^level cells along the long side)");
    mesh->add_option("--sheet", mesh_args.sheet, "Sheet of the double cover, 1 or -1");
    mesh->add_option("--out", mesh_args.out, "Output directory");

    GyroidArgs gyroid_args;
    auto* gyroid = app.add_subcommand("gyroid-angle", "Associate angle of the gyroid (gyroid.json)");
    gyroid->add_option("--bracket", gyroid_args.bracket, "Search interval lo..hi inside (0.05, pi/2 - 0.05)");
    gyroid->add_option("--out", gyroid_args.out, "Output directory");

    ReportArgs report_args;
    auto* report = app.add_subcommand("report", "All acceptance numbers in one document (report.json)");
    report->add_option("--level", report_args.level, "Base mesh level for the index table");
    report->add_flag("--skip-scans", report_args.skip_scans, "Leave out the spectral scans");
    report->add_option("--out", report_args.out, "Output directory");

    for (auto* sub : app.get_subcommands({})) {
        sub->fallthrough();
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (common.config_path) {
            common.config = ConfigFile(*common.config_path);
        }
        if (scan->parsed()) return cmd_scan_lattice(scan_args, common);
        if (spectrum->parsed()) return cmd_spectrum(spec_args, common);
        if (find->parsed()) return cmd_find_instants(find_args, common);
        if (mesh->parsed()) return cmd_mesh(mesh_args, common);
        if (gyroid->parsed()) return cmd_gyroid_angle(gyroid_args, common);
        if (report->parsed()) return cmd_report(report_args, common);
    } catch (const DomainError& e) {
        std::cerr << "tpms: " << e.what() << "\n";
        return 2;
    } catch (const NumericalError& e) {
        std::cerr << Json{{"error", error_kind(e)}, {"message", e.what()}}.dump() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "tpms: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
