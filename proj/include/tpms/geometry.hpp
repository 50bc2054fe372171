#pragma once

// Weierstrass path integrals, period lattices, surface patches and the gyroid
// associate angle.

#include "tpms/errors.hpp"
#include "tpms/families.hpp"
#include "tpms/lattice.hpp"
#include "tpms/numerics.hpp"
#include "tpms/parallel.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numbers>
#include <numeric>
#include <string>
#include <vector>

namespace tpms {

inline constexpr double kPathQuadratureTolerance = 1e-12;

/// Polyline in the z chart together with the sheet of its first point:
/// w starts as `sheet` times the principal root of p(points.front()).
struct CoverPath {
    std::vector<cplx> points;
    int sheet = 1;
    double clearance = 0.0;
};

using Vec6 = Eigen::Matrix<double, 6, 1>;

namespace detail {

/// Re and Im of the three components of Phi/dz, stacked, without the e^{i theta} prefactor.
inline Vec6 split(const Vec3c& v)
{
    Vec6 out;
    for (int i = 0; i < 3; ++i) {
        out[i] = v[i].real();
        out[3 + i] = v[i].imag();
    }
    return out;
}

inline Vec3c join(const Vec6& v)
{
    return Vec3c(cplx(v[0], v[3]), cplx(v[1], v[4]), cplx(v[2], v[5]));
}

/// Phi(z) dz/dt along z(t) = z0 + t (z1 - z0), with the angle factor left out.
inline Vec3c untwisted_integrand(const SurfaceSpec& spec, cplx z, cplx w, cplx dz)
{
    SurfaceSpec flat = spec;
    flat.theta = 0.0;
    return weierstrass_integrand(flat, CoverPoint{z, 1}, w) * dz;
}

} // namespace detail

/// Integral of Phi (angle factor omitted) along one straight segment, starting from
/// the square root `w` at z0; returns the continued root at z1 through `w_out`.
inline Vec3c integrate_segment(const SurfaceSpec& spec, const HyperellipticCurve& curve, cplx z0, cplx z1, cplx w,
                               double min_clearance, cplx& w_out)
{
    const double clearance = curve.segment_clearance(Chart::Z, z0, z1);
    if (clearance <= min_clearance || clearance == 0.0) {
        throw PathTooCloseToBranchPoint("integrate_form: segment passes within the clearance of a branch point");
    }
    const cplx start = curve.sqrt_on_segment(Chart::Z, z0, z1, 0.0, 1.0);
    const double sign = std::abs(start - w) <= std::abs(start + w) ? 1.0 : -1.0;
    const cplx dz = z1 - z0;
    auto f = [&](double t, double, double du) {
        const cplx z = z0 + dz * t;
        return detail::split(
            detail::untwisted_integrand(spec, z, sign * curve.sqrt_on_segment(Chart::Z, z0, z1, t, du), dz));
    };
    w_out = sign * curve.sqrt_on_segment(Chart::Z, z0, z1, 1.0, 0.0);
    return detail::join(integrate_smooth(f, 0.0, 1.0, kPathQuadratureTolerance).value);
}

/// Complex integral of Phi along the path, with the sheet continued segment by segment.
inline Vec3c integrate_form_complex(const SurfaceSpec& spec, const CoverPath& path)
{
    if (path.points.size() < 2) {
        throw DomainError("integrate_form: path needs at least two points");
    }
    if (path.sheet != 1 && path.sheet != -1) {
        throw DomainError("integrate_form: sheet must be +1 or -1");
    }
    const HyperellipticCurve curve(spec);
    cplx w = static_cast<double>(path.sheet) * std::sqrt(curve.polynomial(Chart::Z)(path.points.front()));
    if (w == cplx(0.0)) {
        throw PathTooCloseToBranchPoint("integrate_form: path starts at a branch point");
    }
    Vec3c total = Vec3c::Zero();
    for (std::size_t k = 0; k + 1 < path.points.size(); ++k) {
        if (path.points[k] == path.points[k + 1]) {
            continue;
        }
        cplx next;
        total += integrate_segment(spec, curve, path.points[k], path.points[k + 1], w, path.clearance, next);
        w = next;
    }
    return std::polar(1.0, spec.theta) * total;
}

/// Re of the integral of Phi along the path.
inline Vec3 integrate_form(const SurfaceSpec& spec, const CoverPath& path)
{
    return integrate_form_complex(spec, path).real();
}

// ---------------------------------------------------------------------------
// Periods.

/// Cycle that runs from one branch point to another on one sheet and back on the
/// other; its period is twice the segment integral.
struct CycleDescriptor {
    std::size_t from_index = 0;
    std::size_t to_index = 0;
    cplx from;
    cplx to;
};

struct PeriodSet {
    SurfaceSpec spec;
    std::vector<CycleDescriptor> cycles;
    std::vector<Vec3c> complex_periods;  // without the e^{i theta} factor
    std::vector<Vec3> vectors;           // Re(e^{i theta} period)
};

namespace detail {

/// Branch points ordered by angle about a point far from all of them, starting
/// after the widest angular gap. Consecutive points are joined by straight
/// segments lying in disjoint wedges, so the segments never cross.
inline std::vector<std::size_t> branch_chain(const std::vector<cplx>& pts)
{
    double scale = 0.0;
    for (cplx b : pts) {
        scale = std::max(scale, std::abs(b));
    }
    scale = std::max(scale, 1.0);
    // Centre candidates on a fixed grid; keep the one farthest from all points and
    // from any line through two points, so no two angles coincide.
    cplx centre = 0.0;
    double best = -1.0;
    const int n = 24;
    for (int i = 0; i <= n; ++i) {
        for (int j = 0; j <= n; ++j) {
            const cplx c(scale * (-0.5 + static_cast<double>(i) / n), scale * (-0.5 + static_cast<double>(j) / n));
            double clear = std::numeric_limits<double>::infinity();
            for (cplx b : pts) {
                clear = std::min(clear, std::abs(c - b));
            }
            for (std::size_t p = 0; p < pts.size(); ++p) {
                for (std::size_t q = p + 1; q < pts.size(); ++q) {
                    const cplx d = pts[q] - pts[p];
                    clear = std::min(clear, std::abs(std::imag(std::conj(d) * (c - pts[p]))) / std::abs(d));
                }
            }
            if (clear > best) {
                best = clear;
                centre = c;
            }
        }
    }
    std::vector<std::size_t> order(pts.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> angle(pts.size());
    for (std::size_t k = 0; k < pts.size(); ++k) {
        angle[k] = std::arg(pts[k] - centre);
    }
    std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return angle[x] < angle[y]; });
    std::size_t start = 0;
    double widest = -1.0;
    for (std::size_t k = 0; k < order.size(); ++k) {
        const double next = k + 1 < order.size() ? angle[order[k + 1]] : angle[order[0]] + 2.0 * std::numbers::pi;
        if (next - angle[order[k]] > widest) {
            widest = next - angle[order[k]];
            start = (k + 1) % order.size();
        }
    }
    std::rotate(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(start), order.end());
    return order;
}

/// Twice the integral of Phi (angle factor omitted) along the straight segment
/// between two branch points, on the sheet given by sqrt_on_segment.
inline Vec3c branch_segment_period(const SurfaceSpec& spec, const HyperellipticCurve& curve, cplx from, cplx to)
{
    const cplx dz = to - from;
    auto f = [&](double t, double dl, double du) {
        const cplx z = from + dz * t;
        return split(untwisted_integrand(spec, z, curve.sqrt_on_segment(Chart::Z, from, to, dl, du), dz));
    };
    return 2.0 * join(integrate_endpoint_singular(f, 0.0, 1.0, true, true, kPathQuadratureTolerance).value);
}

} // namespace detail

/// Periods of Phi over the cycle system induced by a non-crossing chain of the
/// finite branch points (7 cycles for 8 finite points, 6 when one is at infinity).
inline PeriodSet compute_periods(const SurfaceSpec& spec, unsigned workers = 1)
{
    validate(spec);
    const HyperellipticCurve curve(spec);
    const auto& pts = curve.roots(Chart::Z);
    const auto chain = detail::branch_chain(pts);
    PeriodSet set;
    set.spec = spec;
    for (std::size_t k = 0; k + 1 < chain.size(); ++k) {
        set.cycles.push_back({chain[k], chain[k + 1], pts[chain[k]], pts[chain[k + 1]]});
    }
    set.complex_periods = parallel_map<Vec3c>(set.cycles.size(), workers, [&](std::size_t k) {
        return detail::branch_segment_period(spec, curve, set.cycles[k].from, set.cycles[k].to);
    });
    const cplx twist = std::polar(1.0, spec.theta);
    for (const auto& p : set.complex_periods) {
        set.vectors.push_back((twist * p).real());
    }
    return set;
}

/// Translation vectors of the family member at associate angle theta.
inline std::vector<Vec3> period_vectors_at(const PeriodSet& set, double theta)
{
    const cplx twist = std::polar(1.0, theta);
    std::vector<Vec3> out;
    for (const auto& p : set.complex_periods) {
        out.push_back((twist * p).real());
    }
    return out;
}

struct PeriodLattice {
    PeriodSet periods;
    LatticeBasis basis;
};

inline PeriodLattice period_lattice(const SurfaceSpec& spec, unsigned workers = 1)
{
    PeriodLattice out{compute_periods(spec, workers), {}};
    out.basis = lattice_from_vectors(out.periods.vectors);
    return out;
}

// ---------------------------------------------------------------------------
// Gyroid angle.

inline constexpr int kCoefficientBound = 3;

/// Smallest residual, over bases formed from three of the first six period vectors,
/// of writing every other vector as an integer combination with coefficients
/// bounded by 3. Relative to the longest vector; zero for a lattice.
inline double lattice_coherence_residual(const std::vector<Vec3>& vectors)
{
    const std::size_t n = std::min<std::size_t>(vectors.size(), 6);
    double scale = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        scale = std::max(scale, vectors[k].norm());
    }
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            for (std::size_t k = j + 1; k < n; ++k) {
                Eigen::Matrix3d B;
                B << vectors[i], vectors[j], vectors[k];
                if (std::abs(B.determinant()) <= 1e-8 * scale * scale * scale) {
                    continue;
                }
                const auto lu = B.partialPivLu();
                double worst = 0.0;
                for (std::size_t m = 0; m < n && worst < best; ++m) {
                    if (m == i || m == j || m == k) {
                        continue;
                    }
                    const Vec3 coeff = lu.solve(vectors[m]);
                    const Vec3 rounded = coeff.array().round();
                    if (rounded.cwiseAbs().maxCoeff() > kCoefficientBound) {
                        worst = std::numeric_limits<double>::infinity();
                        break;
                    }
                    worst = std::max(worst, (B * (coeff - rounded)).norm() / scale);
                }
                best = std::min(best, worst);
            }
        }
    }
    return best;
}

/// Coherence residual of the associate surface of the tP curve at a = 14.
class GyroidResidual {
public:
    explicit GyroidResidual(unsigned workers = 1)
        : periods_(compute_periods(SurfaceSpec::associate(kGyroidCurveParameter, 0.0), workers))
    {
    }
    double operator()(double theta) const { return lattice_coherence_residual(period_vectors_at(periods_, theta)); }
    const PeriodSet& periods() const { return periods_; }

private:
    PeriodSet periods_;
};

inline constexpr double kGyroidResidualTolerance = 1e-6;
inline constexpr double kEndpointGuard = 0.05;

struct GyroidAngle {
    double theta = 0.0;
    double residual = 0.0;
};

/// Interior associate angle at which the periods close into a lattice.
inline GyroidAngle gyroid_angle(double lo, double hi, double tol = kGyroidResidualTolerance, unsigned workers = 1)
{
    if (!(lo < hi) || lo < kEndpointGuard || hi > std::numbers::pi / 2 - kEndpointGuard) {
        throw DomainError("gyroid_angle: bracket must lie inside (0.05, pi/2 - 0.05)");
    }
    const GyroidResidual r(workers);
    const int samples = 400;
    std::vector<double> values(samples + 1);
    for (int i = 0; i <= samples; ++i) {
        values[i] = r(lo + (hi - lo) * i / samples);
    }
    const auto it = std::min_element(values.begin(), values.end());
    const int k = static_cast<int>(it - values.begin());
    if (k == 0 || k == samples) {
        throw NoCoherentAngle("gyroid_angle: residual has no interior minimum in the bracket");
    }
    const double step = (hi - lo) / samples;
    const auto m = minimize_bracketed(r, {lo + (k - 1) * step, lo + k * step, lo + (k + 1) * step}, 1e-10);
    if (!(m.value < tol)) {
        throw NoCoherentAngle("gyroid_angle: smallest residual " + std::to_string(m.value) + " exceeds tolerance");
    }
    return {m.location, m.value};
}

// ---------------------------------------------------------------------------
// Surface patches.

struct SurfaceMesh {
    SurfaceSpec spec;
    std::vector<Vec3> vertices;
    std::vector<std::array<int, 3>> faces;
};

/// Axis-aligned rectangle in the z chart.
struct ChartRectangle {
    cplx lower_left;
    cplx upper_right;
};

/// Patch over a rectangle clear of branch points, sampled on a square grid with
/// 2^level cells along the longer side. Vertex positions integrate Phi from the
/// lower-left corner along the bottom row and then up each column; translations
/// are immaterial.
inline SurfaceMesh surface_patch(const SurfaceSpec& spec, const ChartRectangle& region, int level, int sheet = 1)
{
    validate(spec);
    if (level < 1 || level > 10) {
        throw DomainError("surface_patch: level must lie in [1, 10]");
    }
    if (sheet != 1 && sheet != -1) {
        throw DomainError("surface_patch: sheet must be +1 or -1");
    }
    const cplx diag = region.upper_right - region.lower_left;
    if (!(diag.real() > 0.0 && diag.imag() > 0.0)) {
        throw DomainError("surface_patch: empty rectangle");
    }
    const HyperellipticCurve curve(spec);
    for (cplx b : curve.roots(Chart::Z)) {
        if (b.real() >= region.lower_left.real() && b.real() <= region.upper_right.real() &&
            b.imag() >= region.lower_left.imag() && b.imag() <= region.upper_right.imag()) {
            throw PathTooCloseToBranchPoint("surface_patch: rectangle contains a branch point");
        }
    }
    const double h = std::max(diag.real(), diag.imag()) / std::pow(2.0, level);
    const int nx = std::max(1, static_cast<int>(std::lround(diag.real() / h)));
    const int ny = std::max(1, static_cast<int>(std::lround(diag.imag() / h)));
    auto grid = [&](int i, int j) { return region.lower_left + cplx(diag.real() * i / nx, diag.imag() * j / ny); };
    auto id = [&](int i, int j) { return j * (nx + 1) + i; };

    const cplx twist = std::polar(1.0, spec.theta);
    std::vector<Vec3c> x(static_cast<std::size_t>((nx + 1) * (ny + 1)), Vec3c::Zero());
    std::vector<cplx> w(x.size());
    w[id(0, 0)] = static_cast<double>(sheet) * std::sqrt(curve.polynomial(Chart::Z)(grid(0, 0)));
    auto step = [&](int from, int to, cplx z0, cplx z1) {
        x[to] = x[from] + twist * integrate_segment(spec, curve, z0, z1, w[from], 0.0, w[to]);
    };
    for (int i = 1; i <= nx; ++i) {
        step(id(i - 1, 0), id(i, 0), grid(i - 1, 0), grid(i, 0));
    }
    for (int i = 0; i <= nx; ++i) {
        for (int j = 1; j <= ny; ++j) {
            step(id(i, j - 1), id(i, j), grid(i, j - 1), grid(i, j));
        }
    }

    SurfaceMesh mesh;
    mesh.spec = spec;
    for (const auto& v : x) {
        mesh.vertices.push_back(v.real());
    }
    for (int j = 0; j < ny; ++j) {
        for (int i = 0; i < nx; ++i) {
            mesh.faces.push_back({id(i, j), id(i + 1, j), id(i + 1, j + 1)});
            mesh.faces.push_back({id(i, j), id(i + 1, j + 1), id(i, j + 1)});
        }
    }
    return mesh;
}

/// Area-weighted mean of the cotangent mean-curvature vector norm over interior
/// vertices, scaled by the bounding-box diagonal so the value is dimensionless.
inline double mean_curvature_residual(const SurfaceMesh& mesh)
{
    const std::size_t n = mesh.vertices.size();
    std::vector<Vec3> laplace(n, Vec3::Zero());
    std::vector<double> area(n, 0.0);
    std::map<std::pair<int, int>, int> edge_faces;
    for (const auto& f : mesh.faces) {
        const Vec3& a = mesh.vertices[f[0]];
        const Vec3& b = mesh.vertices[f[1]];
        const Vec3& c = mesh.vertices[f[2]];
        const double A = 0.5 * (b - a).cross(c - a).norm();
        for (int k = 0; k < 3; ++k) {
            const int i = f[k];
            const int j = f[(k + 1) % 3];
            const int o = f[(k + 2) % 3];
            const Vec3 u = mesh.vertices[i] - mesh.vertices[o];
            const Vec3 v = mesh.vertices[j] - mesh.vertices[o];
            const double cot = u.dot(v) / u.cross(v).norm();
            laplace[i] += 0.5 * cot * (mesh.vertices[j] - mesh.vertices[i]);
            laplace[j] += 0.5 * cot * (mesh.vertices[i] - mesh.vertices[j]);
            area[f[k]] += A / 3.0;
            ++edge_faces[std::minmax(i, j)];
        }
    }
    std::vector<bool> boundary(n, false);
    for (const auto& [e, count] : edge_faces) {
        if (count == 1) {
            boundary[e.first] = boundary[e.second] = true;
        }
    }
    Eigen::AlignedBox3d box;
    for (const auto& v : mesh.vertices) {
        box.extend(v);
    }
    double weighted = 0.0;
    double total_area = 0.0;
    for (std::size_t v = 0; v < n; ++v) {
        if (boundary[v]) {
            continue;
        }
        weighted += laplace[v].norm();
        total_area += area[v];
    }
    if (total_area == 0.0) {
        throw DomainError("mean_curvature_residual: mesh has no interior vertices");
    }
    return weighted / total_area * box.diagonal().norm();
}

/// Points reduced into the half-open cell spanned by the basis columns.
inline std::vector<Vec3> wrap_into_cell(const std::vector<Vec3>& points, const LatticeBasis& basis)
{
    const auto lu = basis.generators.partialPivLu();
    std::vector<Vec3> out;
    out.reserve(points.size());
    for (const auto& p : points) {
        Vec3 c = lu.solve(p);
        c = c.array() - c.array().floor();
        out.push_back(basis.generators * c);
    }
    return out;
}

} // namespace tpms
