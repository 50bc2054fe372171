#pragma once

// Numerical kernel: adaptive Gauss-Kronrod quadrature with square-root endpoint
// substitution, Brent minimization and root finding, and inertia counting for
// symmetric generalized eigenproblems.

#include "tpms/errors.hpp"

#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <queue>
#include <random>
#include <type_traits>
#include <utility>
#include <vector>

namespace tpms {

using SparseMatrix = Eigen::SparseMatrix<double>;

struct QuadratureResult {
    double value = 0.0;
    double error_estimate = 0.0;
    std::size_t evaluations = 0;
};

/// Quadrature result for vector- or complex-valued integrands.
template <class Value>
struct QuadratureResultOf {
    Value value{};
    double error_estimate = 0.0;
    std::size_t evaluations = 0;
};

struct ExtremumResult {
    double location = 0.0;
    double value = 0.0;
    double bracket_width_at_exit = 0.0;
};

struct InertiaCount {
    std::size_t negative = 0;
    std::size_t zero = 0;
    std::size_t positive = 0;

    std::size_t dimension() const { return negative + zero + positive; }
    friend bool operator==(const InertiaCount&, const InertiaCount&) = default;
};

namespace detail {

inline double magnitude(double v) { return std::abs(v); }
inline double magnitude(std::complex<double> v) { return std::abs(v); }
template <class Derived>
double magnitude(const Eigen::MatrixBase<Derived>& v)
{
    return v.cwiseAbs().maxCoeff();
}

template <class Value>
Value zero_like()
{
    if constexpr (std::is_arithmetic_v<Value>) {
        return Value(0);
    } else if constexpr (std::is_same_v<Value, std::complex<double>>) {
        return Value(0.0, 0.0);
    } else {
        return Value::Zero();
    }
}

// 15-point Kronrod rule with embedded 7-point Gauss rule (abscissae on [-1, 1]).
inline constexpr std::array<double, 8> kKronrodNodes = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
inline constexpr std::array<double, 8> kKronrodWeights = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
inline constexpr std::array<double, 4> kGaussWeights = {
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

template <class Value>
struct Panel {
    double lo = 0.0;
    double hi = 0.0;
    Value value{};
    double error = 0.0;
    double abs_value = 0.0;
};

template <class Value, class F>
Panel<Value> kronrod_panel(F& f, double lo, double hi)
{
    const double center = 0.5 * (lo + hi);
    const double half = 0.5 * (hi - lo);
    Value fc = f(center);
    Value kronrod = fc * kKronrodWeights[7];
    Value gauss = fc * kGaussWeights[3];
    double abs_sum = magnitude(fc) * kKronrodWeights[7];
    for (std::size_t j = 0; j < 7; ++j) {
        const double dx = half * kKronrodNodes[j];
        Value f1 = f(center - dx);
        Value f2 = f(center + dx);
        kronrod += (f1 + f2) * kKronrodWeights[j];
        abs_sum += (magnitude(f1) + magnitude(f2)) * kKronrodWeights[j];
        if (j % 2 == 1) {
            gauss += (f1 + f2) * kGaussWeights[j / 2];
        }
    }
    Panel<Value> p;
    p.lo = lo;
    p.hi = hi;
    p.value = kronrod * half;
    p.error = magnitude(Value((kronrod - gauss) * half));
    p.abs_value = abs_sum * std::abs(half);
    return p;
}

/// Globally adaptive Gauss-Kronrod over [lo, hi] with optional interior breakpoints.
template <class Value, class F>
QuadratureResultOf<Value> adaptive_kronrod(F&& f, std::vector<double> breakpoints, double rel_tol,
                                           double abs_tol, std::size_t max_panels)
{
    using P = Panel<Value>;
    auto worse = [](const P& x, const P& y) { return x.error < y.error; };
    std::priority_queue<P, std::vector<P>, decltype(worse)> queue(worse);
    std::vector<P> done;
    std::size_t evaluations = 0;
    for (std::size_t i = 0; i + 1 < breakpoints.size(); ++i) {
        queue.push(kronrod_panel<Value>(f, breakpoints[i], breakpoints[i + 1]));
        evaluations += 15;
    }

    auto ordered_sum = [&]() {
        // Sum in a fixed order so the result does not depend on heap layout.
        std::vector<P> all = done;
        auto copy = queue;
        while (!copy.empty()) {
            all.push_back(copy.top());
            copy.pop();
        }
        std::sort(all.begin(), all.end(), [](const P& x, const P& y) { return x.lo < y.lo; });
        Value v = zero_like<Value>();
        for (const auto& p : all) {
            v += p.value;
        }
        return v;
    };

    Value value = zero_like<Value>();
    double err = 0.0;
    double abs_value = 0.0;
    {
        auto copy = queue;
        while (!copy.empty()) {
            value += copy.top().value;
            err += copy.top().error;
            abs_value += copy.top().abs_value;
            copy.pop();
        }
    }

    constexpr double eps = std::numeric_limits<double>::epsilon();
    while (true) {
        const double target = std::max({abs_tol, rel_tol * magnitude(value), 50.0 * eps * abs_value});
        if (err <= target) {
            return {ordered_sum(), err, evaluations};
        }
        if (queue.size() + done.size() >= max_panels) {
            throw NonConvergence("adaptive quadrature exhausted its panel budget", magnitude(value), err);
        }
        P worst = queue.top();
        queue.pop();
        const double mid = 0.5 * (worst.lo + worst.hi);
        if (!(mid > worst.lo && mid < worst.hi)) {
            // Interval cannot be split further in floating point.
            done.push_back(worst);
            if (queue.empty()) {
                throw NonConvergence("adaptive quadrature reached machine resolution", magnitude(value),
                                     err);
            }
            continue;
        }
        P left = kronrod_panel<Value>(f, worst.lo, mid);
        P right = kronrod_panel<Value>(f, mid, worst.hi);
        value += left.value + right.value - worst.value;
        err += left.error + right.error - worst.error;
        abs_value += left.abs_value + right.abs_value - worst.abs_value;
        queue.push(left);
        queue.push(right);
        evaluations += 30;
    }
}

} // namespace detail

/// Integrates `integrand` over [lower, upper] when it may blow up like an inverse
/// square root at either end.
///
/// Singular ends are removed by t = lower + s^2 (resp. t = upper - s^2) before
/// adaptive refinement; with both ends singular the two substitutions are joined
/// at the midpoint into one C^1 parameterization. The integrand may be callable
/// as f(t) or as f(t, t - lower, upper - t); the second form receives endpoint
/// distances free of cancellation.
template <class F>
auto integrate_endpoint_singular(F&& integrand, double lower, double upper, bool singular_at_lower,
                                 bool singular_at_upper, double rel_tol, double abs_tol = 0.0,
                                 std::size_t max_panels = 4000)
{
    if (!(lower < upper) || !std::isfinite(lower) || !std::isfinite(upper)) {
        throw DomainError("integrate_endpoint_singular: need finite lower < upper");
    }
    if (!(rel_tol > 0.0 && rel_tol < 1.0)) {
        throw DomainError("integrate_endpoint_singular: rel_tol must lie in (0, 1)");
    }
    auto call = [&](double t, double dl, double du) {
        if constexpr (std::is_invocable_v<F&, double, double, double>) {
            return integrand(t, dl, du);
        } else {
            return integrand(t);
        }
    };
    using Value = std::decay_t<decltype(call(lower, 0.0, 0.0))>;

    const double width = upper - lower;
    QuadratureResultOf<Value> r;
    if (singular_at_lower && singular_at_upper) {
        const double half = 0.5 * width;
        const double S = std::sqrt(half);
        auto g = [&](double s) -> Value {
            if (s <= S) {
                const double dl = s * s;
                return call(lower + dl, dl, width - dl) * (2.0 * s);
            }
            const double r = 2.0 * S - s;
            const double du = r * r;
            return call(upper - du, width - du, du) * (2.0 * r);
        };
        r = detail::adaptive_kronrod<Value>(g, {0.0, S, 2.0 * S}, rel_tol, abs_tol, max_panels);
    } else if (singular_at_lower) {
        auto g = [&](double s) -> Value {
            const double dl = s * s;
            return call(lower + dl, dl, width - dl) * (2.0 * s);
        };
        r = detail::adaptive_kronrod<Value>(g, {0.0, std::sqrt(width)}, rel_tol, abs_tol, max_panels);
    } else if (singular_at_upper) {
        auto g = [&](double s) -> Value {
            const double du = s * s;
            return call(upper - du, width - du, du) * (2.0 * s);
        };
        r = detail::adaptive_kronrod<Value>(g, {0.0, std::sqrt(width)}, rel_tol, abs_tol, max_panels);
    } else {
        auto g = [&](double t) -> Value { return call(t, t - lower, upper - t); };
        r = detail::adaptive_kronrod<Value>(g, {lower, upper}, rel_tol, abs_tol, max_panels);
    }
    if constexpr (std::is_same_v<Value, double>) {
        return QuadratureResult{r.value, r.error_estimate, r.evaluations};
    } else {
        return r;
    }
}

/// Smooth integrand on a finite interval; thin wrapper kept for readability at call sites.
template <class F>
auto integrate_smooth(F&& integrand, double lower, double upper, double rel_tol, double abs_tol = 0.0)
{
    return integrate_endpoint_singular(std::forward<F>(integrand), lower, upper, false, false, rel_tol,
                                       abs_tol);
}

/// Brent's method (parabolic interpolation with golden-section fallback).
///
/// The bracket must satisfy x0 < x1 < x2 and f(x1) < min(f(x0), f(x2)). On exit
/// the final bracket is no wider than `x_tol`.
template <class F>
ExtremumResult minimize_bracketed(F&& f, std::array<double, 3> bracket, double x_tol,
                                  int max_iterations = 500)
{
    constexpr double golden = 0.3819660112501051;
    double a = bracket[0];
    double b = bracket[2];
    double x = bracket[1];
    if (!(a < x && x < b) || !(x_tol > 0.0)) {
        throw InvalidBracket("minimize_bracketed: need x0 < x1 < x2 and x_tol > 0");
    }
    double fx = f(x);
    const double fa = f(a);
    const double fb = f(b);
    if (!(fx < std::min(fa, fb))) {
        throw InvalidBracket("minimize_bracketed: interior point is not below both ends");
    }
    double w = x, v = x, fw = fx, fv = fx;
    double d = 0.0, e = 0.0;
    for (int iter = 0; iter < max_iterations; ++iter) {
        const double xm = 0.5 * (a + b);
        const double tol1 = 0.25 * x_tol + 1e-3 * std::numeric_limits<double>::epsilon() * std::abs(x);
        const double tol2 = 2.0 * tol1;
        if (std::abs(x - xm) <= tol2 - 0.5 * (b - a)) {
            return {x, fx, b - a};
        }
        bool use_golden = true;
        if (std::abs(e) > tol1) {
            double r = (x - w) * (fx - fv);
            double q = (x - v) * (fx - fw);
            double p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if (q > 0.0) {
                p = -p;
            }
            q = std::abs(q);
            const double etemp = e;
            e = d;
            if (!(std::abs(p) >= std::abs(0.5 * q * etemp) || p <= q * (a - x) || p >= q * (b - x))) {
                d = p / q;
                const double u = x + d;
                if (u - a < tol2 || b - u < tol2) {
                    d = std::copysign(tol1, xm - x);
                }
                use_golden = false;
            }
        }
        if (use_golden) {
            e = (x >= xm) ? a - x : b - x;
            d = golden * e;
        }
        const double u = (std::abs(d) >= tol1) ? x + d : x + std::copysign(tol1, d);
        const double fu = f(u);
        if (fu <= fx) {
            (u >= x ? a : b) = x;
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            (u < x ? a : b) = u;
            if (fu <= fw || w == x) {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if (fu <= fv || v == x || v == w) {
                v = u;
                fv = fu;
            }
        }
    }
    throw NonConvergence("minimize_bracketed: iteration limit", fx, b - a);
}

/// Brent's root finder on a sign-changing bracket [lo, hi].
template <class F>
double find_root_bracketed(F&& f, double lo, double hi, double x_tol, int max_iterations = 200)
{
    double a = lo, b = hi;
    double fa = f(a), fb = f(b);
    if (fa == 0.0) return a;
    if (fb == 0.0) return b;
    if ((fa > 0.0) == (fb > 0.0)) {
        throw InvalidBracket("find_root_bracketed: no sign change on the bracket");
    }
    double c = a, fc = fa, d = b - a, e = d;
    for (int iter = 0; iter < max_iterations; ++iter) {
        if ((fb > 0.0) == (fc > 0.0)) {
            c = a;
            fc = fa;
            d = e = b - a;
        }
        if (std::abs(fc) < std::abs(fb)) {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        const double tol1 = 2.0 * std::numeric_limits<double>::epsilon() * std::abs(b) + 0.5 * x_tol;
        const double xm = 0.5 * (c - b);
        if (std::abs(xm) <= tol1 || fb == 0.0) {
            return b;
        }
        if (std::abs(e) >= tol1 && std::abs(fa) > std::abs(fb)) {
            double s = fb / fa, p, q;
            if (a == c) {
                p = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                double qq = fa / fc, r = fb / fc;
                p = s * (2.0 * xm * qq * (qq - r) - (b - a) * (r - 1.0));
                q = (qq - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if (p > 0.0) {
                q = -q;
            }
            p = std::abs(p);
            if (2.0 * p < std::min(3.0 * xm * q - std::abs(tol1 * q), std::abs(e * q))) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        b += (std::abs(d) > tol1) ? d : std::copysign(tol1, xm);
        fb = f(b);
    }
    throw NonConvergence("find_root_bracketed: iteration limit", b, std::abs(c - b));
}

namespace detail {

/// Number of negative pivots of LDL^T(Q - shift*M); throws on a vanishing pivot.
inline std::size_t count_below(const SparseMatrix& Q, const SparseMatrix& M, double shift)
{
    SparseMatrix A = Q - shift * M;
    A.makeCompressed();
    Eigen::SimplicialLDLT<SparseMatrix, Eigen::Lower, Eigen::AMDOrdering<int>> ldlt;
    ldlt.compute(A);
    if (ldlt.info() != Eigen::Success) {
        throw FactorizationBreakdown("LDL^T factorization failed: shift is (numerically) an eigenvalue");
    }
    const auto& D = ldlt.vectorD();
    std::size_t negative = 0;
    for (Eigen::Index i = 0; i < D.size(); ++i) {
        const double d = D[i];
        if (!std::isfinite(d) || d == 0.0) {
            throw FactorizationBreakdown("LDL^T factorization produced a zero or non-finite pivot");
        }
        if (d < 0.0) {
            ++negative;
        }
    }
    return negative;
}

inline double pencil_scale(const SparseMatrix& Q, const SparseMatrix& M)
{
    double scale = 0.0;
    for (Eigen::Index i = 0; i < Q.rows(); ++i) {
        const double m = M.coeff(i, i);
        if (m > 0.0) {
            scale = std::max(scale, std::abs(Q.coeff(i, i)) / m);
        }
    }
    return scale > 0.0 ? scale : 1.0;
}

} // namespace detail

/// Counts generalized eigenvalues of Q u = lambda M u below, inside and above the
/// band [shift - band, shift + band] from the inertia of two LDL^T factorizations
/// (Sylvester's law of inertia). A negative `band` selects a tight default band
/// relative to the pencil's diagonal scale.
inline InertiaCount inertia_of_pencil(const SparseMatrix& Q, const SparseMatrix& M, double shift,
                                      double band = -1.0)
{
    if (Q.rows() != Q.cols() || M.rows() != M.cols() || Q.rows() != M.rows()) {
        throw DomainError("inertia_of_pencil: Q and M must be square and of equal size");
    }
    if (band < 0.0) {
        band = 1e-10 * (detail::pencil_scale(Q, M) + std::abs(shift));
    }
    const std::size_t n = static_cast<std::size_t>(Q.rows());
    const std::size_t below = detail::count_below(Q, M, shift - band);
    const std::size_t below_upper = band > 0.0 ? detail::count_below(Q, M, shift + band) : below;
    InertiaCount c;
    c.negative = below;
    c.zero = below_upper - below;
    c.positive = n - below_upper;
    return c;
}

inline InertiaCount inertia_of_pencil(const Eigen::MatrixXd& Q, const Eigen::MatrixXd& M, double shift,
                                      double band = -1.0)
{
    return inertia_of_pencil(SparseMatrix(Q.sparseView()), SparseMatrix(M.sparseView()), shift, band);
}

/// Lowest `count` generalized eigenvalues of (Q, M) by block shift-invert Krylov
/// iteration with full reorthogonalization in the M inner product, followed by
/// Rayleigh-Ritz on (Q, M). A block at least as wide as `count` resolves
/// (near-)multiple eigenvalues that a single Krylov vector cannot separate.
inline std::vector<double> lowest_eigenvalues(const SparseMatrix& Q, const SparseMatrix& M,
                                              std::size_t count)
{
    const Eigen::Index n = Q.rows();
    if (n == 0 || count == 0) {
        return {};
    }
    count = std::min<std::size_t>(count, static_cast<std::size_t>(n));
    if (n <= 200) {
        Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es{Eigen::MatrixXd(Q), Eigen::MatrixXd(M)};
        std::vector<double> out(es.eigenvalues().data(), es.eigenvalues().data() + count);
        return out;
    }

    // Start close to zero and move down until the shifted matrix is positive
    // definite; a shift near the bottom of the spectrum keeps the inverted
    // eigenvalues well separated.
    double sigma = -1e-8 * detail::pencil_scale(Q, M);
    for (int guard = 0; guard < 200; ++guard) {
        try {
            if (detail::count_below(Q, M, sigma) == 0) {
                break;
            }
        } catch (const FactorizationBreakdown&) {
        }
        sigma *= 2.0;
    }
    SparseMatrix A = Q - sigma * M;
    Eigen::SimplicialLDLT<SparseMatrix, Eigen::Lower, Eigen::AMDOrdering<int>> solver(A);
    if (solver.info() != Eigen::Success) {
        throw FactorizationBreakdown("lowest_eigenvalues: shifted matrix is not factorizable");
    }

    const Eigen::Index block = static_cast<Eigen::Index>(count) + 4;
    const Eigen::Index capacity = std::min<Eigen::Index>(n, 8 * block + 40);
    Eigen::MatrixXd V(n, capacity);
    Eigen::Index used = 0;
    // Appends x after M-orthogonalizing against the basis; rejects dependent vectors.
    auto append = [&](Eigen::VectorXd x) {
        const double initial = std::sqrt(x.dot(M * x));
        for (int pass = 0; pass < 2; ++pass) {
            const Eigen::VectorXd Mx = M * x;
            x.noalias() -= V.leftCols(used) * (V.leftCols(used).transpose() * Mx);
        }
        const double norm = std::sqrt(x.dot(M * x));
        if (used == capacity || !(norm > 1e-10 * initial)) {
            return false;
        }
        V.col(used++) = x / norm;
        return true;
    };

    std::mt19937_64 rng(20240229ULL);
    std::normal_distribution<double> normal;
    for (Eigen::Index k = 0; k < block; ++k) {
        Eigen::VectorXd x(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            x[i] = normal(rng);
        }
        append(solver.solve(M * x));
    }
    Eigen::Index begin = 0;
    while (used < capacity && begin < used) {
        const Eigen::Index end = used;
        for (Eigen::Index j = begin; j < end && used < capacity; ++j) {
            append(solver.solve(M * V.col(j)));
        }
        begin = end;
    }

    const Eigen::MatrixXd B = V.leftCols(used);
    Eigen::MatrixXd Qr = B.transpose() * (Q * B);
    Eigen::MatrixXd Mr = B.transpose() * (M * B);
    Qr = (0.5 * (Qr + Qr.transpose())).eval();
    Mr = (0.5 * (Mr + Mr.transpose())).eval();
    Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es{Qr, Mr};
    const auto& ev = es.eigenvalues();
    std::vector<double> out(ev.data(), ev.data() + std::min<Eigen::Index>(used, static_cast<Eigen::Index>(count)));
    return out;
}

} // namespace tpms
