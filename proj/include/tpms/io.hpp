#pragma once

// Serialization of reports, curves and meshes. Every number that leaves the
// library goes through fmt12, so repeated runs produce byte-identical files.

#include "tpms/geometry.hpp"
#include "tpms/spectrum.hpp"

#include "json.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <typeinfo>
#include <unistd.h>

namespace tpms {

using Json = nlohmann::ordered_json;

inline std::string fmt12(double x)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.12g", x);
    return buf;
}

/// Rounds to 12 significant digits; the JSON writer then prints the shortest
/// representation, which is the 12-digit one.
inline double round12(double x)
{
    return std::isfinite(x) ? std::stod(fmt12(x)) : x;
}

/// Writes to a sibling temporary file and renames it over the target.
inline void write_atomic(const std::filesystem::path& path, const std::string& content)
{
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    auto tmp = path;
    tmp += ".tmp" + std::to_string(::getpid());
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw Error("cannot open " + tmp.string() + " for writing");
        }
        out << content;
        out.flush();
        if (!out) {
            throw Error("write failed on " + tmp.string());
        }
    }
    std::filesystem::rename(tmp, path);
}

inline std::string dump(const Json& j)
{
    return j.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// JSON documents.

inline Json to_json(const SurfaceSpec& spec)
{
    return Json{{"family", family_name(spec.family)}, {"a", round12(spec.a)}, {"theta", round12(spec.theta)}};
}

inline Json to_json(const SpectrumReport& r)
{
    Json j = to_json(r.spec);
    j["level"] = r.level;
    j["index"] = r.morse_index;
    j["nullity"] = r.nullity;
    j["zero_tolerance"] = round12(r.zero_tolerance);
    Json ev = Json::array();
    for (double e : r.lowest_eigenvalues) {
        ev.push_back(round12(e));
    }
    j["lowest_eigenvalues"] = ev;
    return j;
}

inline Json to_json(const Vec3& v)
{
    return Json::array({round12(v.x()), round12(v.y()), round12(v.z())});
}

inline Json to_json(cplx z)
{
    return Json::array({round12(z.real()), round12(z.imag())});
}

inline Json to_json(const PeriodSet& set)
{
    Json j = to_json(set.spec);
    Json cycles = Json::array();
    for (std::size_t k = 0; k < set.cycles.size(); ++k) {
        const auto& c = set.cycles[k];
        Json period = Json::array();
        for (int i = 0; i < 3; ++i) {
            period.push_back(to_json(set.complex_periods[k][i]));
        }
        cycles.push_back(Json{{"from_branch", c.from_index},
                              {"to_branch", c.to_index},
                              {"from", to_json(c.from)},
                              {"to", to_json(c.to)},
                              {"complex_period", period},
                              {"vector", to_json(set.vectors[k])}});
    }
    j["cycles"] = cycles;
    return j;
}

inline Json to_json(const DegeneracyInstant& i)
{
    Json j{{"a_star", round12(i.a_star)},
           {"method", to_string(i.method)},
           {"jump", i.index_jump},
           {"parity", to_string(i.parity)},
           {"classification", to_string(i.classification)},
           {"bifurcation", i.bifurcation()},
           {"bracket_width", round12(i.bracket_width)}};
    if (i.method == DetectionMethod::SpectralScan) {
        j["index_before"] = i.index_before;
        j["index_after"] = i.index_after;
        j["nullity"] = i.nullity_at_instant;
    } else {
        j["ratio"] = round12(i.ratio_value);
    }
    return j;
}

inline Json to_json(const LatticeBasis& b)
{
    Json cols = Json::array();
    for (int k = 0; k < 3; ++k) {
        cols.push_back(to_json(Vec3(b.generators.col(k))));
    }
    return Json{{"source", b.source == LatticeSource::ClosedForm ? "ClosedForm" : "Periods"}, {"generators", cols}};
}

/// Most derived library error name, used in the diagnostic JSON of failed commands.
inline std::string error_kind(const std::exception& e)
{
#define TPMS_KIND(T)                                                                                                   \
    if (dynamic_cast<const T*>(&e)) return #T
    TPMS_KIND(NonConvergence);
    TPMS_KIND(InvalidBracket);
    TPMS_KIND(FactorizationBreakdown);
    TPMS_KIND(RootFindingFailure);
    TPMS_KIND(PathTooCloseToBranchPoint);
    TPMS_KIND(WAtZero);
    TPMS_KIND(UnsupportedFamily);
    TPMS_KIND(CalibrationFailure);
    TPMS_KIND(CutConstructionFailure);
    TPMS_KIND(RankDeficiency);
    TPMS_KIND(NonDiscrete);
    TPMS_KIND(NoCoherentAngle);
    TPMS_KIND(SingularBasis);
    TPMS_KIND(DomainError);
    TPMS_KIND(NumericalError);
#undef TPMS_KIND
    return "Error";
}

// ---------------------------------------------------------------------------
// Text formats.

inline std::string ratio_csv(const RatioCurve& curve)
{
    std::string out = "a,ratio\n";
    for (const auto& s : curve.samples) {
        out += fmt12(s.a) + "," + fmt12(s.ratio) + "\n";
    }
    return out;
}

inline std::string obj_string(const SurfaceMesh& mesh)
{
    std::string out;
    for (const auto& v : mesh.vertices) {
        out += "v " + fmt12(v.x()) + " " + fmt12(v.y()) + " " + fmt12(v.z()) + "\n";
    }
    for (const auto& f : mesh.faces) {
        out += "f " + std::to_string(f[0] + 1) + " " + std::to_string(f[1] + 1) + " " + std::to_string(f[2] + 1) + "\n";
    }
    return out;
}

/// Reads `v` and triangular `f` records; anything else is ignored. Face indices
/// must be positive and in range.
inline SurfaceMesh parse_obj(const std::string& text)
{
    SurfaceMesh mesh;
    std::istringstream in(text);
    std::string line;
    std::vector<std::array<long, 3>> raw;
    while (std::getline(in, line)) {
        std::istringstream ls(line);
        std::string tag;
        ls >> tag;
        if (tag == "v") {
            Vec3 v;
            if (!(ls >> v.x() >> v.y() >> v.z())) {
                throw DomainError("malformed OBJ vertex: " + line);
            }
            mesh.vertices.push_back(v);
        } else if (tag == "f") {
            std::array<long, 3> f{};
            if (!(ls >> f[0] >> f[1] >> f[2])) {
                throw DomainError("malformed OBJ face: " + line);
            }
            raw.push_back(f);
        }
    }
    const long n = static_cast<long>(mesh.vertices.size());
    for (const auto& f : raw) {
        for (long i : f) {
            if (i < 1 || i > n) {
                throw DomainError("OBJ face index out of range");
            }
        }
        mesh.faces.push_back({static_cast<int>(f[0] - 1), static_cast<int>(f[1] - 1), static_cast<int>(f[2] - 1)});
    }
    return mesh;
}

// ---------------------------------------------------------------------------
// Plots.

struct PlotMarker {
    double x;
    double y;
    std::string label;
};

struct LinePlot {
    std::string title;
    std::string x_label;
    std::string y_label;
    std::vector<std::pair<double, double>> points;
    std::vector<PlotMarker> markers;
    bool step = false;  // draw as a right-continuous step function
};

namespace detail {

inline std::string fixed2(double x)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", x);
    return buf;
}

inline std::string short_number(double x)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", x);
    return buf;
}

inline std::string escape_xml(const std::string& s)
{
    std::string out;
    for (char c : s) {
        switch (c) {
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '&': out += "&amp;"; break;
        default: out += c;
        }
    }
    return out;
}

} // namespace detail

inline std::string svg_plot(const LinePlot& plot)
{
    constexpr double width = 640, height = 420, left = 70, right = 20, top = 40, bottom = 50;
    if (plot.points.empty()) {
        throw DomainError("svg_plot: nothing to draw");
    }
    double x0 = plot.points.front().first, x1 = x0, y0 = plot.points.front().second, y1 = y0;
    for (const auto& [x, y] : plot.points) {
        x0 = std::min(x0, x);
        x1 = std::max(x1, x);
        y0 = std::min(y0, y);
        y1 = std::max(y1, y);
    }
    if (x1 == x0) {
        x1 = x0 + 1.0;
    }
    if (y1 == y0) {
        y0 -= 0.5;
        y1 += 0.5;
    }
    const double pad = 0.05 * (y1 - y0);
    y0 -= pad;
    y1 += pad;
    auto px = [&](double x) { return left + (x - x0) / (x1 - x0) * (width - left - right); };
    auto py = [&](double y) { return height - bottom - (y - y0) / (y1 - y0) * (height - top - bottom); };
    using detail::fixed2;

    std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"420\" font-family=\"sans-serif\" "
                    "font-size=\"12\">\n<rect width=\"640\" height=\"420\" fill=\"white\"/>\n";
    s += "<text x=\"320\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" + detail::escape_xml(plot.title) +
         "</text>\n";
    s += "<line x1=\"" + fixed2(left) + "\" y1=\"" + fixed2(height - bottom) + "\" x2=\"" + fixed2(width - right) +
         "\" y2=\"" + fixed2(height - bottom) + "\" stroke=\"black\"/>\n";
    s += "<line x1=\"" + fixed2(left) + "\" y1=\"" + fixed2(top) + "\" x2=\"" + fixed2(left) + "\" y2=\"" +
         fixed2(height - bottom) + "\" stroke=\"black\"/>\n";
    for (int k = 0; k <= 4; ++k) {
        const double xv = x0 + (x1 - x0) * k / 4.0;
        const double yv = y0 + (y1 - y0) * k / 4.0;
        s += "<text x=\"" + fixed2(px(xv)) + "\" y=\"" + fixed2(height - bottom + 16) + "\" text-anchor=\"middle\">" +
             detail::short_number(xv) + "</text>\n";
        s += "<text x=\"" + fixed2(left - 6) + "\" y=\"" + fixed2(py(yv) + 4) + "\" text-anchor=\"end\">" +
             detail::short_number(yv) + "</text>\n";
    }
    s += "<text x=\"" + fixed2(0.5 * (left + width - right)) + "\" y=\"" + fixed2(height - 12) +
         "\" text-anchor=\"middle\">" + detail::escape_xml(plot.x_label) + "</text>\n";
    s += "<text x=\"16\" y=\"" + fixed2(0.5 * (top + height - bottom)) + "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " +
         fixed2(0.5 * (top + height - bottom)) + ")\">" + detail::escape_xml(plot.y_label) + "</text>\n";

    s += "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < plot.points.size(); ++i) {
        const auto& [x, y] = plot.points[i];
        if (plot.step && i > 0) {
            s += fixed2(px(x)) + "," + fixed2(py(plot.points[i - 1].second)) + " ";
        }
        s += fixed2(px(x)) + "," + fixed2(py(y)) + (i + 1 < plot.points.size() ? " " : "");
    }
    s += "\"/>\n";
    for (const auto& m : plot.markers) {
        s += "<circle cx=\"" + fixed2(px(m.x)) + "\" cy=\"" + fixed2(py(m.y)) + "\" r=\"4\" fill=\"crimson\"/>\n";
        s += "<text x=\"" + fixed2(px(m.x) + 6) + "\" y=\"" + fixed2(py(m.y) - 8) + "\" fill=\"crimson\">" +
             detail::escape_xml(m.label) + "</text>\n";
    }
    s += "</svg>\n";
    return s;
}

} // namespace tpms
