#pragma once

// Period lattices of the rPD, H and tP families from their one-dimensional
// generator integrals, the homothety-invariant ratio curves, ratio extrema, and
// the transcritical/genuine classification of degeneracy instants. Also hosts the
// integer-lattice utilities (reduction, extraction from period vectors, and
// unimodular equivalence) shared with the period computation.

#include "tpms/errors.hpp"
#include "tpms/families.hpp"
#include "tpms/numerics.hpp"
#include "tpms/parallel.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace tpms {

inline constexpr double kLatticeQuadratureTolerance = 1e-12;

// ---------------------------------------------------------------------------
// Generator integrals.

/// rPD edge integral A(a).
inline double rpd_A(double a)
{
    if (!(a > 0.0)) {
        throw DomainError("rpd_A: a must be positive");
    }
    const double a3 = a * a * a;
    auto f = [&](double t, double dl, double du) {
        const double t3 = t * t * t;
        return (1.0 + a * a * t * t) / std::sqrt(dl * du * (1.0 + t + t * t) * (a3 * t3 + 1.0 / a3));
    };
    const auto r = integrate_endpoint_singular(f, 0.0, 1.0, true, true, kLatticeQuadratureTolerance);
    return r.value / (std::sqrt(3.0) * a);
}

/// rPD height integral C(a).
inline double rpd_C(double a)
{
    if (!(a > 0.0)) {
        throw DomainError("rpd_C: a must be positive");
    }
    const double a3 = a * a * a;
    auto f = [&](double t, double dl, double du) {
        const double t3 = t * t * t;
        return std::sqrt(dl) / std::sqrt(du * (1.0 + t + t * t) * (a3 + t3 / a3));
    };
    return 4.0 * integrate_endpoint_singular(f, 0.0, 1.0, true, true, kLatticeQuadratureTolerance).value;
}

/// H-family edge integral B(a).
inline double h_B(double a)
{
    if (!(a > 0.0 && a < 1.0)) {
        throw DomainError("h_B: a must lie in (0, 1)");
    }
    const double a3 = a * a * a;
    auto f1 = [&](double t, double dl, double) {
        const double t3 = t * t * t;
        return (1.0 - t * t) / std::sqrt(dl * (t3 + a3) * (t3 + 1.0 / a3));
    };
    auto f2 = [&](double x, double, double du) {
        return x / std::sqrt((a3 + 1.0 / a3 + 6.0 * x - 8.0 * x * x * x) * du * (1.0 + x));
    };
    const double first = integrate_endpoint_singular(f1, 0.0, 1.0, true, false, kLatticeQuadratureTolerance).value;
    const double second = integrate_endpoint_singular(f2, 0.5, 1.0, false, true, kLatticeQuadratureTolerance).value;
    return std::sqrt(3.0) * first + 4.0 * second;
}

/// H-family height integral D(a).
inline double h_D(double a)
{
    if (!(a > 0.0 && a < 1.0)) {
        throw DomainError("h_D: a must lie in (0, 1)");
    }
    const double a3 = a * a * a;
    auto f = [&](double t, double dl, double) {
        const double t3 = t * t * t;
        return std::sqrt(dl) / std::sqrt((t3 + a3) * (t3 + 1.0 / a3));
    };
    return 8.0 * integrate_endpoint_singular(f, 0.0, 1.0, true, false, kLatticeQuadratureTolerance).value;
}

/// tP-family edge integral E(a); the integrands are smooth for a > 2.
inline double tp_E(double a)
{
    if (!(a > 2.0)) {
        throw DomainError("tp_E: a must exceed 2");
    }
    auto f1 = [&](double t) {
        const double t4 = t * t * t * t;
        return (1.0 - t * t) / std::sqrt(t4 * t4 + a * t4 + 1.0);
    };
    auto f2 = [&](double t) { return 1.0 / std::sqrt(16.0 * t * t * t * t - 16.0 * t * t + 2.0 + a); };
    return 2.0 * integrate_smooth(f1, 0.0, 1.0, kLatticeQuadratureTolerance).value +
           4.0 * integrate_smooth(f2, 0.0, 1.0, kLatticeQuadratureTolerance).value;
}

/// tP-family height integral F(a).
inline double tp_F(double a)
{
    if (!(a > 2.0)) {
        throw DomainError("tp_F: a must exceed 2");
    }
    auto f = [&](double t) {
        const double t4 = t * t * t * t;
        return t / std::sqrt(t4 * t4 + a * t4 + 1.0);
    };
    return 8.0 * integrate_smooth(f, 0.0, 1.0, kLatticeQuadratureTolerance).value;
}

// ---------------------------------------------------------------------------
// Lattice bases.

enum class LatticeSource { ClosedForm, Periods };

/// Columns are lattice generators.
struct LatticeBasis {
    Eigen::Matrix3d generators = Eigen::Matrix3d::Identity();
    LatticeSource source = LatticeSource::ClosedForm;

    double covolume() const { return std::abs(generators.determinant()); }
    Eigen::Matrix3d gram() const { return generators.transpose() * generators; }
};

inline bool has_closed_form_lattice(FamilyId f)
{
    return f == FamilyId::rPD || f == FamilyId::H || f == FamilyId::tP;
}

inline LatticeBasis lattice_basis_closed_form(const SurfaceSpec& spec)
{
    validate(spec);
    const double a = spec.a;
    const double s3 = std::sqrt(3.0);
    LatticeBasis out;
    Eigen::Matrix3d& m = out.generators;
    switch (spec.family) {
    case FamilyId::rPD: {
        const double A = rpd_A(a), C = rpd_C(a);
        m << 3 * A, 3 * A, 4 * A,
             s3 * A, -s3 * A, 0.0,
             0.0, 0.0, C;
        break;
    }
    case FamilyId::H: {
        const double B = h_B(a), D = h_D(a);
        m << 0.5 * s3 * B, 0.0, 0.0,
             0.5 * B, B, 0.0,
             0.0, 0.0, D;
        break;
    }
    case FamilyId::tP: {
        const double E = tp_E(a), F = tp_F(a);
        m = Eigen::Vector3d(E, E, F).asDiagonal();
        break;
    }
    default:
        throw UnsupportedFamily("no closed-form lattice for family " + std::string(family_name(spec.family)) +
                                "; use period_lattice");
    }
    return out;
}

struct NormalizedBasis {
    LatticeBasis basis;
    double scale = 1.0;
};

/// Rescales the generators to unit covolume.
inline NormalizedBasis homothety_normalize(const LatticeBasis& basis)
{
    const double det = basis.covolume();
    if (!(det > 0.0) || !std::isfinite(det)) {
        throw SingularBasis("homothety_normalize: singular basis");
    }
    NormalizedBasis out;
    out.scale = std::cbrt(1.0 / det);
    out.basis = basis;
    out.basis.generators *= out.scale;
    return out;
}

// ---------------------------------------------------------------------------
// Ratio curves.

/// Homothety invariant of the lattice: A/C (rPD), B/D (H), E/F (tP).
inline double ratio(FamilyId family, double a)
{
    switch (family) {
    case FamilyId::rPD: return rpd_A(a) / rpd_C(a);
    case FamilyId::H: return h_B(a) / h_D(a);
    case FamilyId::tP: return tp_E(a) / tp_F(a);
    default:
        throw UnsupportedFamily("ratio: no closed-form lattice for family " + std::string(family_name(family)));
    }
}

struct RatioSample {
    double a;
    double ratio;
};

struct RatioCurve {
    FamilyId family = FamilyId::rPD;
    std::vector<RatioSample> samples;
};

inline void check_range(FamilyId family, double lo, double hi)
{
    const auto dom = parameter_domain(family);
    if (!(lo < hi) || !dom.contains(lo) || !dom.contains(hi)) {
        throw DomainError("range must be increasing and inside the parameter domain of " +
                          std::string(family_name(family)));
    }
}

/// Samples the ratio at steps+1 equispaced parameters, in parallel, merged in ascending a.
inline RatioCurve sample_ratio_curve(FamilyId family, double lo, double hi, std::size_t steps,
                                     unsigned workers = 1)
{
    check_range(family, lo, hi);
    if (!has_closed_form_lattice(family)) {
        throw UnsupportedFamily("ratio curve needs a closed-form lattice");
    }
    if (steps < 1) {
        throw DomainError("sample_ratio_curve: need at least one step");
    }
    RatioCurve curve;
    curve.family = family;
    curve.samples = parallel_map<RatioSample>(steps + 1, workers, [&](std::size_t i) {
        const double a = (i == steps) ? hi : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(steps);
        return RatioSample{a, ratio(family, a)};
    });
    return curve;
}

// ---------------------------------------------------------------------------
// Degeneracy instants.

enum class DetectionMethod { RatioExtremum, SpectralScan };
enum class JumpParity { Odd, Even, Unknown };
enum class InstantClass { Transcritical, Genuine, Undecided };

inline std::string_view to_string(DetectionMethod m)
{
    return m == DetectionMethod::RatioExtremum ? "RatioExtremum" : "SpectralScan";
}
inline std::string_view to_string(JumpParity p)
{
    switch (p) {
    case JumpParity::Odd: return "Odd";
    case JumpParity::Even: return "Even";
    default: return "Unknown";
    }
}
inline std::string_view to_string(InstantClass c)
{
    switch (c) {
    case InstantClass::Transcritical: return "Transcritical";
    case InstantClass::Genuine: return "Genuine";
    default: return "Undecided";
    }
}

struct DegeneracyInstant {
    double a_star = 0.0;
    DetectionMethod method = DetectionMethod::RatioExtremum;
    int index_jump = 0;
    JumpParity parity = JumpParity::Unknown;
    InstantClass classification = InstantClass::Undecided;
    // Spectral scans also record the indices on either side and the final bracket.
    int index_before = -1;
    int index_after = -1;
    double bracket_width = 0.0;
    int nullity_at_instant = -1;
    // Ratio scans record the extremal ratio value.
    double ratio_value = 0.0;

    /// Odd jumps satisfy the crossing-number hypothesis of the bifurcation theorem.
    bool bifurcation() const { return parity == JumpParity::Odd; }
};

inline constexpr double kExtremumTolerance = 1e-6;

/// Local extrema of the ratio curve: coarse slope sign changes refined by Brent.
inline std::vector<DegeneracyInstant> scan_ratio_extrema(FamilyId family, double lo, double hi,
                                                         std::size_t coarse_steps, unsigned workers = 1)
{
    if (coarse_steps < 8) {
        throw DomainError("scan_ratio_extrema: coarse_steps must be at least 8");
    }
    const RatioCurve curve = sample_ratio_curve(family, lo, hi, coarse_steps, workers);
    std::vector<DegeneracyInstant> out;
    const auto& s = curve.samples;
    for (std::size_t i = 1; i + 1 < s.size(); ++i) {
        const double left = s[i].ratio - s[i - 1].ratio;
        const double right = s[i + 1].ratio - s[i].ratio;
        if (!(left * right < 0.0)) {
            continue;
        }
        const double sign = left < 0.0 ? 1.0 : -1.0;  // minimize sign*ratio
        const auto r = minimize_bracketed([&](double a) { return sign * ratio(family, a); },
                                          {s[i - 1].a, s[i].a, s[i + 1].a}, kExtremumTolerance);
        DegeneracyInstant inst;
        inst.a_star = r.location;
        inst.method = DetectionMethod::RatioExtremum;
        inst.classification = InstantClass::Transcritical;
        inst.ratio_value = sign * r.value;
        inst.bracket_width = r.bracket_width_at_exit;
        out.push_back(inst);
    }
    return out;
}

inline double default_classification_window(double a_star)
{
    return 0.05 * std::abs(a_star);
}

/// Transcritical when the ratio has a strict interior extremum within the window,
/// Genuine when it is strictly monotone across it, Undecided otherwise.
inline InstantClass classify_instant(FamilyId family, double a_star, double window)
{
    if (!has_closed_form_lattice(family)) {
        throw UnsupportedFamily("classify_instant: ratio unavailable for family " + std::string(family_name(family)));
    }
    if (!(window > 0.0)) {
        throw DomainError("classify_instant: window must be positive");
    }
    const auto dom = parameter_domain(family);
    const double lo = std::max(a_star - window, dom.lower + 1e-9 * (1.0 + std::abs(dom.lower)));
    const double hi = std::min(a_star + window, dom.upper - 1e-9 * (1.0 + std::abs(dom.upper)));
    if (!(lo < a_star && a_star < hi)) {
        throw DomainError("classify_instant: a_star outside the family domain");
    }
    constexpr int n = 40;
    std::vector<double> r(n + 1);
    for (int i = 0; i <= n; ++i) {
        r[i] = ratio(family, lo + (hi - lo) * i / n);
    }
    int rising = 0, falling = 0, flat = 0, sign_changes = 0;
    int last_sign = 0;
    for (int i = 0; i < n; ++i) {
        const double d = r[i + 1] - r[i];
        const double noise = 1e-11 * std::abs(r[i]);
        const int sgn = d > noise ? 1 : (d < -noise ? -1 : 0);
        rising += sgn > 0;
        falling += sgn < 0;
        flat += sgn == 0;
        if (sgn != 0) {
            if (last_sign != 0 && sgn != last_sign) {
                ++sign_changes;
            }
            last_sign = sgn;
        }
    }
    if (sign_changes == 1 && flat == 0) {
        return InstantClass::Transcritical;
    }
    if (flat == 0 && (rising == n || falling == n)) {
        return InstantClass::Genuine;
    }
    return InstantClass::Undecided;
}

// ---------------------------------------------------------------------------
// Integer lattice utilities.

/// LLL reduction (delta = 0.99) of a rank-3 basis given as columns.
inline Eigen::Matrix3d lll_reduce(Eigen::Matrix3d b)
{
    constexpr double delta = 0.99;
    auto gram_schmidt = [](const Eigen::Matrix3d& basis, Eigen::Matrix3d& star, Eigen::Matrix3d& mu) {
        mu.setZero();
        for (int i = 0; i < 3; ++i) {
            star.col(i) = basis.col(i);
            for (int j = 0; j < i; ++j) {
                mu(i, j) = basis.col(i).dot(star.col(j)) / star.col(j).squaredNorm();
                star.col(i) -= mu(i, j) * star.col(j);
            }
        }
    };
    Eigen::Matrix3d star, mu;
    gram_schmidt(b, star, mu);
    int k = 1;
    for (int guard = 0; k < 3 && guard < 10000; ++guard) {
        for (int j = k - 1; j >= 0; --j) {
            const double q = std::round(mu(k, j));
            if (q != 0.0) {
                b.col(k) -= q * b.col(j);
                gram_schmidt(b, star, mu);
            }
        }
        if (star.col(k).squaredNorm() >= (delta - mu(k, k - 1) * mu(k, k - 1)) * star.col(k - 1).squaredNorm()) {
            ++k;
        } else {
            b.col(k).swap(b.col(k - 1));
            gram_schmidt(b, star, mu);
            k = std::max(k - 1, 1);
        }
    }
    if (b.determinant() < 0.0) {
        b.col(2) *= -1.0;
    }
    return b;
}

namespace detail {

/// Column-style Hermite reduction of an integer 3 x m matrix; returns a basis of
/// the column lattice as the first three columns.
inline Eigen::Matrix<long long, 3, 3> integer_column_basis(std::vector<std::array<long long, 3>> cols)
{
    Eigen::Matrix<long long, 3, 3> H = Eigen::Matrix<long long, 3, 3>::Zero();
    std::size_t start = 0;
    for (int row = 0; row < 3; ++row) {
        // Euclid on the row entries of columns [start, end).
        while (true) {
            std::size_t pivot = cols.size();
            for (std::size_t c = start; c < cols.size(); ++c) {
                if (cols[c][row] != 0 && (pivot == cols.size() || std::llabs(cols[c][row]) < std::llabs(cols[pivot][row]))) {
                    pivot = c;
                }
            }
            if (pivot == cols.size()) {
                break;
            }
            bool reduced = false;
            for (std::size_t c = start; c < cols.size(); ++c) {
                if (c == pivot || cols[c][row] == 0) {
                    continue;
                }
                const long long q = cols[c][row] / cols[pivot][row];
                for (int r = 0; r < 3; ++r) {
                    cols[c][r] -= q * cols[pivot][r];
                }
                reduced = true;
            }
            if (!reduced) {
                std::swap(cols[start], cols[pivot]);
                for (int r = 0; r < 3; ++r) {
                    H(r, row) = cols[start][r];
                }
                ++start;
                break;
            }
        }
    }
    if (start != 3) {
        throw RankDeficiency("integer period coefficients have rank below 3");
    }
    return H;
}

} // namespace detail

inline constexpr double kLatticeIntegralityTolerance = 1e-6;

/// Basis of the subgroup generated by `vectors`, or NonDiscrete when the vectors do
/// not sit in a lattice with small denominators relative to their best triple.
inline LatticeBasis lattice_from_vectors(const std::vector<Vec3>& vectors,
                                         double tol = kLatticeIntegralityTolerance, int max_denominator = 12)
{
    const std::size_t m = vectors.size();
    if (m < 3) {
        throw RankDeficiency("need at least three vectors for a rank-3 lattice");
    }
    double scale = 0.0;
    for (const auto& v : vectors) {
        scale = std::max(scale, v.norm());
    }
    struct Triple {
        double det;
        std::array<std::size_t, 3> index;
    };
    std::vector<Triple> triples;
    double best = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = i + 1; j < m; ++j) {
            for (std::size_t k = j + 1; k < m; ++k) {
                Eigen::Matrix3d B;
                B << vectors[i], vectors[j], vectors[k];
                const double d = std::abs(B.determinant());
                triples.push_back({d, {i, j, k}});
                best = std::max(best, d);
            }
        }
    }
    if (!(best > 1e-8 * scale * scale * scale)) {
        throw RankDeficiency("period vectors span fewer than three dimensions");
    }
    // Smallest well-conditioned triples first: their index in the full lattice,
    // hence the denominators needed, is smallest.
    std::erase_if(triples, [&](const Triple& t) { return t.det < 1e-3 * best; });
    std::stable_sort(triples.begin(), triples.end(),
                     [](const Triple& x, const Triple& y) { return x.det < y.det; });
    for (const Triple& triple : triples) {
        Eigen::Matrix3d B;
        B << vectors[triple.index[0]], vectors[triple.index[1]], vectors[triple.index[2]];
        const Eigen::Matrix3d Binv = B.inverse();
        Eigen::Matrix3Xd C(3, m);
        for (std::size_t c = 0; c < m; ++c) {
            C.col(c) = Binv * vectors[c];
        }
        for (int d = 1; d <= max_denominator; ++d) {
            const Eigen::Matrix3Xd scaled = C * static_cast<double>(d);
            const double off = (scaled - scaled.array().round().matrix()).cwiseAbs().maxCoeff();
            if (off > tol * d) {
                continue;
            }
            std::vector<std::array<long long, 3>> cols(m);
            for (std::size_t c = 0; c < m; ++c) {
                for (int r = 0; r < 3; ++r) {
                    cols[c][r] = std::llround(scaled(r, c));
                }
            }
            const auto H = detail::integer_column_basis(std::move(cols));
            LatticeBasis out;
            out.generators = lll_reduce(B * H.cast<double>() / static_cast<double>(d));
            out.source = LatticeSource::Periods;
            return out;
        }
    }
    throw NonDiscrete("period vectors do not generate a discrete lattice at tolerance");
}

struct LatticeComparison {
    bool equivalent = false;
    double relative_gram_error = std::numeric_limits<double>::infinity();
    Eigen::Matrix3i transform = Eigen::Matrix3i::Identity();
};

/// Unimodular equivalence up to ambient isometry: searches integer matrices U with
/// small entries and |det U| = 1 minimizing |U^T G1 U - G2| / |G2| between the
/// Gram matrices of the LLL-reduced bases.
inline LatticeComparison compare_lattices(const Eigen::Matrix3d& first, const Eigen::Matrix3d& second,
                                          double tol = 1e-6)
{
    const Eigen::Matrix3d R1 = lll_reduce(first);
    const Eigen::Matrix3d R2 = lll_reduce(second);
    const Eigen::Matrix3d G1 = R1.transpose() * R1;
    const Eigen::Matrix3d G2 = R2.transpose() * R2;
    const double g2norm = G2.norm();
    constexpr int span = 3;
    std::array<std::vector<Eigen::Vector3i>, 3> candidates;
    for (int x = -span; x <= span; ++x) {
        for (int y = -span; y <= span; ++y) {
            for (int z = -span; z <= span; ++z) {
                if (x == 0 && y == 0 && z == 0) {
                    continue;
                }
                const Eigen::Vector3i u(x, y, z);
                const double len2 = (R1 * u.cast<double>()).squaredNorm();
                for (int j = 0; j < 3; ++j) {
                    if (std::abs(len2 - G2(j, j)) <= 1e-3 * G2(j, j)) {
                        candidates[j].push_back(u);
                    }
                }
            }
        }
    }
    LatticeComparison best;
    for (const auto& u0 : candidates[0]) {
        for (const auto& u1 : candidates[1]) {
            for (const auto& u2 : candidates[2]) {
                Eigen::Matrix3i U;
                U << u0, u1, u2;
                const Eigen::Matrix3d Ud = U.cast<double>();
                if (std::lround(std::abs(Ud.determinant())) != 1) {
                    continue;
                }
                const double err = (Ud.transpose() * G1 * Ud - G2).norm() / g2norm;
                if (err < best.relative_gram_error) {
                    best.relative_gram_error = err;
                    best.transform = U;
                }
            }
        }
    }
    best.equivalent = best.relative_gram_error <= tol;
    return best;
}

} // namespace tpms
