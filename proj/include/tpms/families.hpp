#pragma once

// Weierstrass data of the five genus-3 families: defining polynomials of the
// hyperelliptic curves w^2 = p(z), branch points, sheet-consistent square roots,
// the Weierstrass triple, Gauss map and conformal factor.

#include "tpms/errors.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace tpms {

using cplx = std::complex<double>;
using Vec3 = Eigen::Vector3d;
using Vec3c = Eigen::Vector3cd;

enum class FamilyId { H, rPD, tP, tD, tCLP };

inline constexpr std::array<FamilyId, 5> kAllFamilies = {FamilyId::H, FamilyId::rPD, FamilyId::tP,
                                                         FamilyId::tD, FamilyId::tCLP};

inline std::string_view family_name(FamilyId f)
{
    switch (f) {
    case FamilyId::H: return "H";
    case FamilyId::rPD: return "rPD";
    case FamilyId::tP: return "tP";
    case FamilyId::tD: return "tD";
    case FamilyId::tCLP: return "tCLP";
    }
    return "?";
}

inline std::optional<FamilyId> parse_family(std::string_view name)
{
    for (FamilyId f : kAllFamilies) {
        if (family_name(f) == name) {
            return f;
        }
    }
    return std::nullopt;
}

/// Open interval of admissible family parameters.
struct ParameterDomain {
    double lower;
    double upper;
    bool contains(double a) const { return a > lower && a < upper; }
};

inline ParameterDomain parameter_domain(FamilyId f)
{
    constexpr double inf = std::numeric_limits<double>::infinity();
    switch (f) {
    case FamilyId::H: return {0.0, 1.0};
    case FamilyId::rPD: return {0.0, inf};
    case FamilyId::tP:
    case FamilyId::tD: return {2.0, inf};
    case FamilyId::tCLP: return {-2.0, 2.0};
    }
    return {0.0, 0.0};
}

/// Associate angle under which the family's immersion is written.
inline double default_theta(FamilyId f)
{
    return f == FamilyId::tD ? std::numbers::pi / 2 : 0.0;
}

/// Parameter of the tP curve whose associate family contains the P, D and gyroid surfaces.
inline constexpr double kGyroidCurveParameter = 14.0;

struct SurfaceSpec {
    FamilyId family = FamilyId::tP;
    double a = kGyroidCurveParameter;
    double theta = 0.0;

    static SurfaceSpec make(FamilyId family, double a) { return {family, a, default_theta(family)}; }

    /// Member of the associate family of the tP curve at parameter `a`.
    static SurfaceSpec associate(double a, double theta) { return {FamilyId::tP, a, theta}; }
};

inline void validate(const SurfaceSpec& spec)
{
    const auto dom = parameter_domain(spec.family);
    if (!std::isfinite(spec.a) || !dom.contains(spec.a)) {
        throw DomainError("parameter a = " + std::to_string(spec.a) + " outside the domain of family " +
                          std::string(family_name(spec.family)));
    }
    if (!(spec.theta >= 0.0 && spec.theta <= std::numbers::pi / 2 + 1e-15)) {
        throw DomainError("associate angle must lie in [0, pi/2]");
    }
}

/// Polynomial with complex coefficients in ascending order.
struct Polynomial {
    std::vector<cplx> coefficients;

    int degree() const
    {
        for (int k = static_cast<int>(coefficients.size()) - 1; k >= 0; --k) {
            if (coefficients[k] != cplx(0.0)) {
                return k;
            }
        }
        return -1;
    }

    cplx operator()(cplx z) const
    {
        cplx acc(0.0);
        for (auto it = coefficients.rbegin(); it != coefficients.rend(); ++it) {
            acc = acc * z + *it;
        }
        return acc;
    }

    /// Sum of |c_k| |z|^k, the natural scale for residual checks.
    double magnitude_scale(cplx z) const
    {
        double acc = 0.0;
        const double r = std::abs(z);
        for (auto it = coefficients.rbegin(); it != coefficients.rend(); ++it) {
            acc = acc * r + std::abs(*it);
        }
        return acc;
    }

    friend Polynomial operator*(const Polynomial& p, const Polynomial& q)
    {
        Polynomial r;
        r.coefficients.assign(p.coefficients.size() + q.coefficients.size() - 1, cplx(0.0));
        for (std::size_t i = 0; i < p.coefficients.size(); ++i) {
            for (std::size_t j = 0; j < q.coefficients.size(); ++j) {
                r.coefficients[i + j] += p.coefficients[i] * q.coefficients[j];
            }
        }
        return r;
    }
};

/// p(z) with w^2 = p(z) for the family's curve.
inline Polynomial defining_polynomial(const SurfaceSpec& spec)
{
    validate(spec);
    const double a = spec.a;
    const double a3 = a * a * a;
    Polynomial z{{0.0, 1.0}};
    switch (spec.family) {
    case FamilyId::H: return z * Polynomial{{-a3, 0.0, 0.0, 1.0}} * Polynomial{{-1.0 / a3, 0.0, 0.0, 1.0}};
    case FamilyId::rPD: return z * Polynomial{{-a3, 0.0, 0.0, 1.0}} * Polynomial{{1.0 / a3, 0.0, 0.0, 1.0}};
    case FamilyId::tP:
    case FamilyId::tD:
    case FamilyId::tCLP: return Polynomial{{1.0, 0.0, 0.0, 0.0, a, 0.0, 0.0, 0.0, 1.0}};
    }
    throw UnsupportedFamily("defining_polynomial: unknown family");
}

struct BranchData {
    std::vector<cplx> finite_points;
    bool branched_at_infinity = false;

    std::size_t count() const { return finite_points.size() + (branched_at_infinity ? 1 : 0); }
};

inline double min_pairwise_distance(std::span<const cplx> pts)
{
    double d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < pts.size(); ++i) {
        for (std::size_t j = i + 1; j < pts.size(); ++j) {
            d = std::min(d, std::abs(pts[i] - pts[j]));
        }
    }
    return d;
}

/// Roots of the defining polynomial, obtained by radicals and checked by residual.
inline BranchData branch_points(const SurfaceSpec& spec)
{
    const Polynomial p = defining_polynomial(spec);
    const double a = spec.a;
    BranchData out;
    auto cube_roots = [](double r, double phase) {
        std::vector<cplx> v;
        for (int k = 0; k < 3; ++k) {
            v.push_back(std::polar(r, phase + 2.0 * std::numbers::pi * k / 3.0));
        }
        return v;
    };
    switch (spec.family) {
    case FamilyId::H:
    case FamilyId::rPD: {
        out.branched_at_infinity = true;
        out.finite_points.push_back(0.0);
        for (cplx r : cube_roots(a, 0.0)) {
            out.finite_points.push_back(r);
        }
        const double phase = spec.family == FamilyId::H ? 0.0 : std::numbers::pi / 3.0;
        for (cplx r : cube_roots(1.0 / a, phase)) {
            out.finite_points.push_back(r);
        }
        break;
    }
    case FamilyId::tP:
    case FamilyId::tD:
    case FamilyId::tCLP: {
        // z^4 solves u^2 + a u + 1 = 0.
        const cplx disc = std::sqrt(cplx(a * a - 4.0, 0.0));
        for (cplx u : {(-a + disc) / 2.0, (-a - disc) / 2.0}) {
            const cplx base = std::pow(u, 0.25);
            for (int k = 0; k < 4; ++k) {
                out.finite_points.push_back(base * std::polar(1.0, std::numbers::pi / 2.0 * k));
            }
        }
        break;
    }
    }
    for (cplx r : out.finite_points) {
        const double scale = std::max(1.0, p.magnitude_scale(r));
        if (std::abs(p(r)) > 1e-12 * scale) {
            throw RootFindingFailure("branch point residual above 1e-12");
        }
    }
    if (out.count() != 8) {
        throw RootFindingFailure("genus-3 curve must have 8 branch points");
    }
    if (min_pairwise_distance(out.finite_points) < 1e-9) {
        throw RootFindingFailure("branch points are not distinct");
    }
    return out;
}

/// Coordinate chart on the Riemann sphere: z, or zeta = 1/z near infinity.
enum class Chart { Z, Inverse };

/// The hyperelliptic curve w^2 = p(z) together with its form in the chart
/// zeta = 1/z, where the square root transforms as w_hat = zeta^4 w.
class HyperellipticCurve {
public:
    explicit HyperellipticCurve(const SurfaceSpec& spec)
        : spec_(spec), poly_(defining_polynomial(spec)), branch_(branch_points(spec))
    {
        inverse_poly_.coefficients.assign(9, cplx(0.0));
        for (int k = 0; k <= 8; ++k) {
            if (k < static_cast<int>(poly_.coefficients.size())) {
                inverse_poly_.coefficients[8 - k] = poly_.coefficients[k];
            }
        }
        roots_z_ = branch_.finite_points;
        lead_z_ = poly_.coefficients[poly_.degree()];
        for (cplx b : branch_.finite_points) {
            if (b != cplx(0.0)) {
                roots_inv_.push_back(1.0 / b);
            }
        }
        if (branch_.branched_at_infinity) {
            roots_inv_.push_back(0.0);
        }
        lead_inv_ = inverse_poly_.coefficients[inverse_poly_.degree()];
        separation_ = min_pairwise_distance(roots_z_);
    }

    const SurfaceSpec& spec() const { return spec_; }
    const Polynomial& polynomial() const { return poly_; }
    const BranchData& branch_data() const { return branch_; }
    double branch_separation() const { return separation_; }

    const Polynomial& polynomial(Chart c) const { return c == Chart::Z ? poly_ : inverse_poly_; }
    const std::vector<cplx>& roots(Chart c) const { return c == Chart::Z ? roots_z_ : roots_inv_; }
    cplx leading(Chart c) const { return c == Chart::Z ? lead_z_ : lead_inv_; }

    double distance_to_branch(Chart c, cplx z) const
    {
        double d = std::numeric_limits<double>::infinity();
        for (cplx b : roots(c)) {
            d = std::min(d, std::abs(z - b));
        }
        return d;
    }

    /// Distance from the segment [z0, z1] to the nearest branch point of the chart.
    double segment_clearance(Chart c, cplx z0, cplx z1) const
    {
        double d = std::numeric_limits<double>::infinity();
        const cplx dz = z1 - z0;
        const double len2 = std::norm(dz);
        for (cplx b : roots(c)) {
            double t = len2 > 0.0 ? std::real((b - z0) * std::conj(dz)) / len2 : 0.0;
            t = std::clamp(t, 0.0, 1.0);
            d = std::min(d, std::abs(z0 + t * dz - b));
        }
        return d;
    }

    /// Continues w along the polyline by small steps, choosing at each step the
    /// square root nearest to the previous value.
    cplx continue_along(Chart c, std::span<const cplx> path, cplx w_start, double clearance) const
    {
        const Polynomial& p = polynomial(c);
        cplx w = w_start;
        for (std::size_t k = 0; k + 1 < path.size(); ++k) {
            const cplx z0 = path[k];
            const cplx z1 = path[k + 1];
            const double len = std::abs(z1 - z0);
            if (len == 0.0) {
                continue;
            }
            const double d = segment_clearance(c, z0, z1);
            if (d < clearance) {
                throw PathTooCloseToBranchPoint("continuation path passes within the clearance of a branch point");
            }
            const int steps = std::max(1, static_cast<int>(std::ceil(len / (0.1 * d))));
            for (int s = 1; s <= steps; ++s) {
                const cplx z = z0 + (z1 - z0) * (static_cast<double>(s) / steps);
                const cplx r = std::sqrt(p(z));
                w = (std::abs(r - w) <= std::abs(r + w)) ? r : -r;
            }
        }
        return w;
    }

    /// Square root of p along the straight segment from `from` to `to`, as a product
    /// of per-root factors each continuous along the segment. `s` in [0, 1] is the
    /// segment parameter and `s_complement` = 1 - s, passed separately so that offsets
    /// to a root at either endpoint are formed without cancellation.
    cplx sqrt_on_segment(Chart c, cplx from, cplx to, double s, double s_complement) const
    {
        const cplx d = to - from;
        const cplx mid = 0.5 * (from + to);
        cplx value = std::sqrt(leading(c));
        for (cplx b : roots(c)) {
            cplx offset;
            if (b == from) {
                offset = d * s;
            } else if (b == to) {
                offset = -d * s_complement;
            } else {
                offset = from + d * s - b;
            }
            // Rotate so the segment, seen from b, stays off the negative real axis.
            const cplx ref = (mid - b) / std::abs(mid - b);
            const cplx half_ref = std::sqrt(ref);
            value *= std::sqrt(offset / ref) * half_ref;
        }
        return value;
    }

private:
    SurfaceSpec spec_;
    Polynomial poly_;
    Polynomial inverse_poly_;
    BranchData branch_;
    std::vector<cplx> roots_z_;
    std::vector<cplx> roots_inv_;
    cplx lead_z_;
    cplx lead_inv_;
    double separation_ = 0.0;
};

/// Default clearance for continuation paths: 1e-3 of the minimal branch separation.
inline double default_clearance(const HyperellipticCurve& curve)
{
    return 1e-3 * curve.branch_separation();
}

/// Analytic continuation of w = sqrt(p(z)) along a polyline in the z chart.
inline cplx continue_sqrt(const SurfaceSpec& spec, std::span<const cplx> path, cplx w_start,
                          std::optional<double> clearance = std::nullopt)
{
    if (path.empty()) {
        throw DomainError("continue_sqrt: empty path");
    }
    const HyperellipticCurve curve(spec);
    const cplx p0 = curve.polynomial()(path.front());
    if (std::abs(w_start * w_start - p0) > 1e-8 * std::max(1.0, std::abs(p0))) {
        throw DomainError("continue_sqrt: w_start^2 differs from p(path start)");
    }
    return curve.continue_along(Chart::Z, path, w_start, clearance.value_or(default_clearance(curve)));
}

/// Global factor of the Weierstrass triple: i for the H family, 1 otherwise, times e^{i theta}.
inline cplx weierstrass_prefactor(const SurfaceSpec& spec)
{
    const cplx eps = spec.family == FamilyId::H ? cplx(0.0, 1.0) : cplx(1.0, 0.0);
    return eps * std::polar(1.0, spec.theta);
}

struct CoverPoint {
    cplx z;
    int sheet = 1;
};

/// Phi(z)/dz = eps e^{i theta} (1 - z^2, i (1 + z^2), 2 z) / w.
inline Vec3c weierstrass_integrand(const SurfaceSpec& spec, const CoverPoint& point, cplx w)
{
    if (w == cplx(0.0)) {
        throw WAtZero("Weierstrass integrand evaluated at a branch point");
    }
    const cplx z = point.z;
    const cplx f = weierstrass_prefactor(spec) / w;
    return Vec3c(f * (1.0 - z * z), f * cplx(0.0, 1.0) * (1.0 + z * z), f * 2.0 * z);
}

/// Stereographic Gauss map; z = infinity maps to the north pole.
inline Vec3 gauss_map(cplx z)
{
    if (!std::isfinite(z.real()) || !std::isfinite(z.imag())) {
        return {0.0, 0.0, 1.0};
    }
    const double r2 = std::norm(z);
    return Vec3(2.0 * z.real(), 2.0 * z.imag(), r2 - 1.0) / (1.0 + r2);
}

/// Inverse of gauss_map in the z chart (infinite at the north pole).
inline cplx sphere_to_z(const Vec3& x)
{
    const double denom = 1.0 - x.z();
    if (denom <= 0.0) {
        return {std::numeric_limits<double>::infinity(), 0.0};
    }
    return cplx(x.x(), x.y()) / denom;
}

/// Inverse of gauss_map in the zeta = 1/z chart.
inline cplx sphere_to_zeta(const Vec3& x)
{
    const double denom = 1.0 + x.z();
    if (denom <= 0.0) {
        return {std::numeric_limits<double>::infinity(), 0.0};
    }
    return cplx(x.x(), -x.y()) / denom;
}

/// Metric density rho with ds^2 = rho |dz|^2.
inline double conformal_factor(const SurfaceSpec&, const CoverPoint& point, cplx w)
{
    if (w == cplx(0.0)) {
        throw WAtZero("conformal factor is singular at a branch point");
    }
    const double r2 = std::norm(point.z);
    return (1.0 + r2) * (1.0 + r2) / std::norm(w);
}

/// Zeroth-order coefficient of the Jacobi form in the flat chart measure: |S|^2 rho = 8/(1+|z|^2)^2.
inline double spherical_potential(cplx z)
{
    const double r2 = std::norm(z);
    return 8.0 / ((1.0 + r2) * (1.0 + r2));
}

/// Surface area element relative to the round sphere's: (1+|z|^2)^4 / (4 |p(z)|),
/// evaluated in whichever chart keeps |coordinate| <= 1.
inline double area_density_on_sphere(const HyperellipticCurve& curve, const Vec3& x)
{
    const bool north = x.z() > 0.0;
    const Chart c = north ? Chart::Inverse : Chart::Z;
    const cplx u = north ? sphere_to_zeta(x) : sphere_to_z(x);
    const double r2 = std::norm(u);
    const double q = (1.0 + r2) * (1.0 + r2);
    return q * q / (4.0 * std::abs(curve.polynomial(c)(u)));
}

} // namespace tpms
