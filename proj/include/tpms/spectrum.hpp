#pragma once

// Jacobi operator of the catalog surfaces on the genus-3 double cover of the
// sphere, discretized by P1 finite elements.
//
// The Gauss map is the coordinate z, so the Dirichlet form and the potential
// part of the Jacobi form pull back from the round sphere:
//     Q(u) = int |grad u|^2 - |S|^2 u^2 dA = int_cover |grad_S u|^2 - 2 u^2 dA_S.
// The mesh is therefore a triangulated unit sphere, lifted to two sheets glued
// along the edges where analytic continuation of w swaps sign. Only the mass
// matrix sees the surface metric, through the density dA/dA_S.

#include "tpms/errors.hpp"
#include "tpms/families.hpp"
#include "tpms/lattice.hpp"
#include "tpms/numerics.hpp"
#include "tpms/parallel.hpp"

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <map>
#include <numbers>
#include <numeric>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace tpms {

struct SphereTriangulation {
    std::vector<Vec3> vertices;
    std::vector<std::array<int, 3>> triangles;
};

enum class SeedShape { Octahedron, HexagonalAntiprism };

/// Seeds whose symmetry contains that of the branch configuration: the octahedron
/// for the z^8 + a z^4 + 1 curves (four-fold, and z -> 1/z), a capped hexagonal
/// antiprism for H and rPD (six-fold about the polar axis, containing both the
/// three-fold symmetry of the curve and the half turn z -> -z exchanging rPD(a)
/// with rPD(1/a)).
inline SeedShape seed_for(FamilyId f)
{
    return (f == FamilyId::H || f == FamilyId::rPD) ? SeedShape::HexagonalAntiprism : SeedShape::Octahedron;
}

namespace detail {

inline void orient_outward(SphereTriangulation& mesh)
{
    for (auto& t : mesh.triangles) {
        const Vec3& a = mesh.vertices[t[0]];
        const Vec3& b = mesh.vertices[t[1]];
        const Vec3& c = mesh.vertices[t[2]];
        if ((b - a).cross(c - a).dot(a + b + c) < 0.0) {
            std::swap(t[1], t[2]);
        }
    }
}

inline SphereTriangulation octahedron_seed()
{
    SphereTriangulation m;
    m.vertices = {Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(-1, 0, 0), Vec3(0, -1, 0), Vec3(0, 0, 1), Vec3(0, 0, -1)};
    for (int k = 0; k < 4; ++k) {
        m.triangles.push_back({k, (k + 1) % 4, 4});
        m.triangles.push_back({(k + 1) % 4, k, 5});
    }
    orient_outward(m);
    return m;
}

inline SphereTriangulation antiprism_seed()
{
    SphereTriangulation m;
    // Ring latitude chosen so ring and cap edges have comparable length.
    const double lat = std::atan(0.5);
    m.vertices.push_back(Vec3(0, 0, 1));
    m.vertices.push_back(Vec3(0, 0, -1));
    for (int k = 0; k < 6; ++k) {
        const double lon = std::numbers::pi / 3.0 * k;
        m.vertices.push_back(Vec3(std::cos(lat) * std::cos(lon), std::cos(lat) * std::sin(lon), std::sin(lat)));
    }
    for (int k = 0; k < 6; ++k) {
        const double lon = std::numbers::pi / 3.0 * k + std::numbers::pi / 6.0;
        m.vertices.push_back(Vec3(std::cos(lat) * std::cos(lon), std::cos(lat) * std::sin(lon), -std::sin(lat)));
    }
    auto up = [](int k) { return 2 + (k % 6); };
    auto low = [](int k) { return 8 + (k % 6); };
    for (int k = 0; k < 6; ++k) {
        m.triangles.push_back({0, up(k), up(k + 1)});
        m.triangles.push_back({1, low(k + 1), low(k)});
        m.triangles.push_back({up(k), low(k), up(k + 1)});
        m.triangles.push_back({up(k + 1), low(k), low(k + 1)});
    }
    orient_outward(m);
    return m;
}

/// One step of 4:1 midpoint subdivision with projection to the sphere.
inline SphereTriangulation subdivide(const SphereTriangulation& in)
{
    SphereTriangulation out;
    out.vertices = in.vertices;
    std::map<std::pair<int, int>, int> midpoint;
    auto mid = [&](int a, int b) {
        const auto key = std::minmax(a, b);
        auto it = midpoint.find(key);
        if (it != midpoint.end()) {
            return it->second;
        }
        const int id = static_cast<int>(out.vertices.size());
        out.vertices.push_back((in.vertices[a] + in.vertices[b]).normalized());
        midpoint.emplace(key, id);
        return id;
    };
    out.triangles.reserve(4 * in.triangles.size());
    for (const auto& t : in.triangles) {
        const int ab = mid(t[0], t[1]);
        const int bc = mid(t[1], t[2]);
        const int ca = mid(t[2], t[0]);
        out.triangles.push_back({t[0], ab, ca});
        out.triangles.push_back({ab, t[1], bc});
        out.triangles.push_back({ca, bc, t[2]});
        out.triangles.push_back({ab, bc, ca});
    }
    return out;
}

inline double geodesic(const Vec3& a, const Vec3& b)
{
    return std::atan2(a.cross(b).norm(), a.dot(b));
}

/// Radial grading towards each branch direction inside a cap of radius R:
/// distance d maps to R g(d/R) with g(s) = s^m (m - (m-1) s), so g(1) = 1 and
/// g'(1) = 1 keep the cap boundary smooth. Eigenfunctions on the cover behave
/// like r^(1/2) at branch points; quadratic elements need m >= 4 there.
inline void grade_towards(std::vector<Vec3>& vertices, const std::vector<Vec3>& centres, double radius,
                          double exponent)
{
    for (Vec3& x : vertices) {
        for (const Vec3& b : centres) {
            const double d = geodesic(x, b);
            if (d >= radius || d == 0.0) {
                continue;
            }
            const double s = d / radius;
            const double graded = radius * std::pow(s, exponent) * (exponent - (exponent - 1.0) * s);
            const Vec3 tangent = (x - x.dot(b) * b).normalized();
            x = (std::cos(graded) * b + std::sin(graded) * tangent).normalized();
            break;
        }
    }
}

} // namespace detail

/// Base triangulation of the sphere for a curve: seed, `level` subdivisions,
/// grading towards the branch directions and snapping of one vertex onto each.
struct GradedSphere {
    SphereTriangulation mesh;
    std::vector<Vec3> branch_directions;
    std::array<int, 8> branch_vertices{};
};

// Caps of radius half the smallest branch separation touch but never overlap.
inline constexpr double kGradingRadiusFraction = 0.5;
inline constexpr double kGradingExponent = 4.0;

inline std::vector<Vec3> branch_directions(const BranchData& data)
{
    std::vector<Vec3> out;
    for (cplx b : data.finite_points) {
        out.push_back(gauss_map(b));
    }
    if (data.branched_at_infinity) {
        out.push_back(Vec3(0, 0, 1));
    }
    return out;
}

inline GradedSphere graded_sphere(const SurfaceSpec& spec, int level)
{
    if (level < 0 || level > 9) {
        throw DomainError("mesh level must lie in [0, 9]");
    }
    GradedSphere g;
    g.mesh = seed_for(spec.family) == SeedShape::Octahedron ? detail::octahedron_seed() : detail::antiprism_seed();
    for (int l = 0; l < level; ++l) {
        g.mesh = detail::subdivide(g.mesh);
    }
    g.branch_directions = branch_directions(branch_points(spec));
    double min_sep = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < g.branch_directions.size(); ++i) {
        for (std::size_t j = i + 1; j < g.branch_directions.size(); ++j) {
            min_sep = std::min(min_sep, detail::geodesic(g.branch_directions[i], g.branch_directions[j]));
        }
    }
    detail::grade_towards(g.mesh.vertices, g.branch_directions, kGradingRadiusFraction * min_sep, kGradingExponent);
    std::vector<bool> taken(g.mesh.vertices.size(), false);
    for (std::size_t k = 0; k < g.branch_directions.size(); ++k) {
        const Vec3& b = g.branch_directions[k];
        int best = -1;
        double best_d = std::numeric_limits<double>::infinity();
        for (std::size_t v = 0; v < g.mesh.vertices.size(); ++v) {
            const double d = (g.mesh.vertices[v] - b).squaredNorm();
            if (d < best_d) {
                best_d = d;
                best = static_cast<int>(v);
            }
        }
        if (taken[best]) {
            throw CutConstructionFailure("two branch points snap to the same vertex; raise the mesh level");
        }
        taken[best] = true;
        g.mesh.vertices[best] = b;
        g.branch_vertices[k] = best;
    }
    return g;
}

// ---------------------------------------------------------------------------
// The double cover.

struct CoverMesh {
    SurfaceSpec spec;
    int level = 0;
    double resolution = 0.0;  // longest base edge (chord length)

    std::vector<Vec3> base_vertices;
    std::vector<cplx> base_z;  // chart coordinate; infinite at the north pole
    std::vector<std::array<int, 3>> base_triangles;
    std::array<int, 8> branch_vertices{};
    std::vector<std::array<int, 2>> cut_edges;  // base vertex pairs across which the sheets swap

    std::vector<int> vertex_base;   // cover vertex -> base vertex
    std::vector<int> vertex_sheet;  // +1 / -1, 0 on branch vertices
    std::vector<std::array<int, 3>> triangles;
    std::vector<int> triangle_base;
    std::vector<int> triangle_sheet;
    // Lifted edges; triangle_edges[t][e] joins local vertices e and e+1.
    std::vector<std::array<int, 2>> edge_base;
    std::vector<std::array<int, 3>> triangle_edges;

    std::size_t vertex_count() const { return vertex_base.size(); }
    std::size_t edge_count() const { return edge_base.size(); }
    /// Quadratic elements: one node per vertex, then one per edge.
    std::size_t node_count() const { return vertex_count() + edge_count(); }

    long euler_characteristic() const
    {
        return static_cast<long>(vertex_count()) - static_cast<long>(edge_count()) +
               static_cast<long>(triangles.size());
    }
};

namespace detail {

struct ChartPoint {
    Chart chart;
    cplx coordinate;
};

inline ChartPoint chart_of(const Vec3& x)
{
    if (x.z() <= 0.0) {
        return {Chart::Z, sphere_to_z(x)};
    }
    return {Chart::Inverse, sphere_to_zeta(x)};
}

inline cplx coordinate_in(Chart c, const Vec3& x)
{
    return c == Chart::Z ? sphere_to_z(x) : sphere_to_zeta(x);
}

/// Converts a square-root value at x from chart `from` to chart `to` (w_hat = zeta^4 w).
inline cplx convert_root(cplx w, Chart from, Chart to, const Vec3& x)
{
    if (from == to) {
        return w;
    }
    if (from == Chart::Z) {
        const cplx zeta = sphere_to_zeta(x);
        return w * std::pow(zeta, 4);
    }
    const cplx z = sphere_to_z(x);
    return w * std::pow(z, 4);
}

class UnionFind {
public:
    explicit UnionFind(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), 0); }
    std::size_t find(std::size_t x)
    {
        while (parent_[x] != x) {
            parent_[x] = parent_[parent_[x]];
            x = parent_[x];
        }
        return x;
    }
    void unite(std::size_t a, std::size_t b)
    {
        a = find(a);
        b = find(b);
        if (a != b) {
            parent_[std::max(a, b)] = std::min(a, b);
        }
    }

private:
    std::vector<std::size_t> parent_;
};

} // namespace detail

struct CoverOptions {
    bool reverse_sheets = false;
};

/// Triangulates the genus-3 double cover. Sheets are assigned to base triangles
/// by breadth-first continuation of w between neighboring triangle centroids;
/// the edges where the continuation disagrees with the labels are the cuts.
inline CoverMesh build_cover_mesh(const SurfaceSpec& spec, int level, CoverOptions options = {})
{
    if (level < 2) {
        throw DomainError("build_cover_mesh: level must be at least 2");
    }
    validate(spec);
    const GradedSphere graded = graded_sphere(spec, level);
    const HyperellipticCurve curve(spec);

    CoverMesh cover;
    cover.spec = spec;
    cover.level = level;
    cover.base_vertices = graded.mesh.vertices;
    cover.base_triangles = graded.mesh.triangles;
    cover.branch_vertices = graded.branch_vertices;
    for (const Vec3& x : cover.base_vertices) {
        cover.base_z.push_back(sphere_to_z(x));
    }

    const auto& X = cover.base_vertices;
    const auto& T = cover.base_triangles;
    const std::size_t nt = T.size();

    // Edge adjacency.
    struct Side {
        int tri;
        int local;  // edge (local, local+1)
    };
    std::map<std::pair<int, int>, std::vector<Side>> edges;
    for (std::size_t t = 0; t < nt; ++t) {
        for (int j = 0; j < 3; ++j) {
            edges[std::minmax(T[t][j], T[t][(j + 1) % 3])].push_back({static_cast<int>(t), j});
        }
    }
    std::vector<std::vector<std::pair<int, std::pair<int, int>>>> neighbours(nt);
    for (const auto& [key, sides] : edges) {
        if (sides.size() != 2) {
            throw CutConstructionFailure("base triangulation is not a closed manifold");
        }
        neighbours[sides[0].tri].push_back({sides[1].tri, key});
        neighbours[sides[1].tri].push_back({sides[0].tri, key});
    }

    // Reference square roots at centroids.
    std::vector<Vec3> centroid(nt);
    std::vector<detail::ChartPoint> chart(nt);
    std::vector<cplx> w_ref(nt);
    for (std::size_t t = 0; t < nt; ++t) {
        centroid[t] = (X[T[t][0]] + X[T[t][1]] + X[T[t][2]]).normalized();
        chart[t] = detail::chart_of(centroid[t]);
        w_ref[t] = std::sqrt(curve.polynomial(chart[t].chart)(chart[t].coordinate));
    }

    // w carried from the centroid of `from` (with label s_from) to the centroid of `to`,
    // through the midpoint of the shared edge, expressed in the chart of `to`.
    auto carry = [&](int from, int to, std::pair<int, int> edge, int s_from) {
        const Chart c = chart[from].chart;
        const Vec3 m = (X[edge.first] + X[edge.second]).normalized();
        const std::array<cplx, 3> path{chart[from].coordinate, detail::coordinate_in(c, m),
                                       detail::coordinate_in(c, centroid[to])};
        const cplx w = curve.continue_along(c, path, static_cast<double>(s_from) * w_ref[from], 0.0);
        return detail::convert_root(w, c, chart[to].chart, centroid[to]);
    };
    auto agrees = [](cplx a, cplx b) { return std::abs(a - b) <= std::abs(a + b); };

    std::vector<int> label(nt, 0);
    std::deque<int> queue{0};
    label[0] = options.reverse_sheets ? -1 : 1;
    while (!queue.empty()) {
        const int t = queue.front();
        queue.pop_front();
        for (const auto& [u, edge] : neighbours[t]) {
            if (label[u] != 0) {
                continue;
            }
            label[u] = agrees(carry(t, u, edge, label[t]), w_ref[u]) ? 1 : -1;
            queue.push_back(u);
        }
    }

    // Lift: corner (t, k, j) and side (t, k, e), with k = 0 the labelled sheet.
    detail::UnionFind corners(6 * nt);
    detail::UnionFind sides_uf(6 * nt);
    auto slot = [](int t, int k, int j) { return static_cast<std::size_t>((2 * t + k) * 3 + j); };
    for (const auto& [key, sides] : edges) {
        const int t = sides[0].tri;
        const int u = sides[1].tri;
        const bool swap = !agrees(carry(t, u, key, label[t]), static_cast<double>(label[u]) * w_ref[u]);
        if (swap) {
            cover.cut_edges.push_back({key.first, key.second});
        }
        auto local = [&](int tri, int v) {
            for (int j = 0; j < 3; ++j) {
                if (T[tri][j] == v) {
                    return j;
                }
            }
            return -1;
        };
        for (int k = 0; k < 2; ++k) {
            const int k_other = swap ? 1 - k : k;
            for (int v : {key.first, key.second}) {
                corners.unite(slot(t, k, local(t, v)), slot(u, k_other, local(u, v)));
            }
            sides_uf.unite(slot(t, k, sides[0].local), slot(u, k_other, sides[1].local));
        }
    }

    std::unordered_map<std::size_t, int> vertex_id, edge_id;
    cover.triangles.reserve(2 * nt);
    cover.triangle_edges.reserve(2 * nt);
    for (std::size_t t = 0; t < nt; ++t) {
        const int ti = static_cast<int>(t);
        for (int k = 0; k < 2; ++k) {
            std::array<int, 3> tri{};
            std::array<int, 3> tri_edges{};
            for (int j = 0; j < 3; ++j) {
                const std::size_t root = corners.find(slot(ti, k, j));
                auto it = vertex_id.find(root);
                if (it == vertex_id.end()) {
                    it = vertex_id.emplace(root, static_cast<int>(cover.vertex_base.size())).first;
                    cover.vertex_base.push_back(T[t][j]);
                    const bool branch = corners.find(slot(ti, 0, j)) == corners.find(slot(ti, 1, j));
                    const int sheet = k == 0 ? label[t] : -label[t];
                    cover.vertex_sheet.push_back(branch ? 0 : sheet);
                }
                tri[j] = it->second;

                const std::size_t side = sides_uf.find(slot(ti, k, j));
                auto ie = edge_id.find(side);
                if (ie == edge_id.end()) {
                    ie = edge_id.emplace(side, static_cast<int>(cover.edge_base.size())).first;
                    cover.edge_base.push_back({T[t][j], T[t][(j + 1) % 3]});
                }
                tri_edges[j] = ie->second;
            }
            cover.triangles.push_back(tri);
            cover.triangle_edges.push_back(tri_edges);
            cover.triangle_base.push_back(ti);
            cover.triangle_sheet.push_back(k == 0 ? label[t] : -label[t]);
        }
    }

    std::vector<int> branch_found;
    for (std::size_t v = 0; v < cover.vertex_base.size(); ++v) {
        if (cover.vertex_sheet[v] == 0) {
            branch_found.push_back(cover.vertex_base[v]);
        }
    }
    std::vector<int> expected(cover.branch_vertices.begin(), cover.branch_vertices.end());
    std::sort(branch_found.begin(), branch_found.end());
    std::sort(expected.begin(), expected.end());
    if (branch_found != expected) {
        throw CutConstructionFailure("sheet continuation does not close up at the branch points");
    }
    if (cover.euler_characteristic() != -4) {
        throw CutConstructionFailure("lifted mesh does not have the Euler characteristic of genus 3");
    }
    for (const auto& t : T) {
        for (int j = 0; j < 3; ++j) {
            cover.resolution = std::max(cover.resolution, (X[t[j]] - X[t[(j + 1) % 3]]).norm());
        }
    }
    return cover;
}

// ---------------------------------------------------------------------------
// Assembly.

struct JacobiSystem {
    SparseMatrix Q;            // stiffness minus potential
    SparseMatrix M;            // mass of the surface metric
    SparseMatrix stiffness;
    SparseMatrix potential;
    SparseMatrix sphere_mass;  // mass of the round metric pulled back to the cover
};

namespace detail {

inline constexpr int kRegularOrder = 5;
inline constexpr int kSingularOrder = 7;

struct TriangleRule {
    std::vector<Eigen::Vector3d> barycentric;
    std::vector<double> weight;  // sums to 1/2, the reference triangle's area
};

/// Gauss-Legendre rule collapsed onto corner c: barycentric (1-u, u(1-v), uv)
/// with Jacobian u, which absorbs a 1/r singularity at that corner.
inline TriangleRule collapsed_rule(int order, int corner)
{
    std::vector<double> nodes(order), weights(order);
    // Golub-Welsch on [0, 1].
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(order, order);
    for (int i = 1; i < order; ++i) {
        J(i, i - 1) = J(i - 1, i) = i / std::sqrt(4.0 * i * i - 1.0);
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
    for (int i = 0; i < order; ++i) {
        nodes[i] = 0.5 * (es.eigenvalues()[i] + 1.0);
        weights[i] = es.eigenvectors()(0, i) * es.eigenvectors()(0, i);
    }
    TriangleRule rule;
    for (int i = 0; i < order; ++i) {
        for (int j = 0; j < order; ++j) {
            const double u = nodes[i];
            const double v = nodes[j];
            Eigen::Vector3d lam;
            lam[corner] = 1.0 - u;
            lam[(corner + 1) % 3] = u * (1.0 - v);
            lam[(corner + 2) % 3] = u * v;
            rule.barycentric.push_back(lam);
            rule.weight.push_back(weights[i] * weights[j] * u);
        }
    }
    return rule;
}

/// Quadratic Lagrange basis: vertices 0..2, then the midpoints of edges (0,1), (1,2), (2,0).
inline void quadratic_basis(const Eigen::Vector3d& lam, Eigen::Matrix<double, 6, 1>& phi,
                            Eigen::Matrix<double, 6, 2>& grad)
{
    static const std::array<Eigen::Vector2d, 3> dlam{Eigen::Vector2d(-1, -1), Eigen::Vector2d(1, 0),
                                                     Eigen::Vector2d(0, 1)};
    for (int i = 0; i < 3; ++i) {
        phi[i] = lam[i] * (2.0 * lam[i] - 1.0);
        grad.row(i) = ((4.0 * lam[i] - 1.0) * dlam[i]).transpose();
        const int j = (i + 1) % 3;
        phi[3 + i] = 4.0 * lam[i] * lam[j];
        grad.row(3 + i) = (4.0 * (lam[j] * dlam[i] + lam[i] * dlam[j])).transpose();
    }
}

struct ElementMatrices {
    Eigen::Matrix<double, 6, 6> stiffness;
    Eigen::Matrix<double, 6, 6> sphere_mass;
    Eigen::Matrix<double, 6, 6> weighted_mass;
};

/// Element matrices on the spherical triangle obtained by radially projecting
/// the flat triangle (x0, x1, x2); the geometry is exact, not interpolated.
template <class Density>
ElementMatrices element_matrices(const Vec3& x0, const Vec3& x1, const Vec3& x2, const TriangleRule& rule,
                                 Density&& omega)
{
    ElementMatrices e;
    e.stiffness.setZero();
    e.sphere_mass.setZero();
    e.weighted_mass.setZero();
    const Vec3 a1 = x1 - x0;
    const Vec3 a2 = x2 - x0;
    Eigen::Matrix<double, 6, 1> phi;
    Eigen::Matrix<double, 6, 2> grad;
    for (std::size_t q = 0; q < rule.weight.size(); ++q) {
        const Eigen::Vector3d& lam = rule.barycentric[q];
        const Vec3 y = lam[0] * x0 + lam[1] * x1 + lam[2] * x2;
        const double r = y.norm();
        const Vec3 f = y / r;
        const Vec3 j1 = (a1 - f * f.dot(a1)) / r;
        const Vec3 j2 = (a2 - f * f.dot(a2)) / r;
        Eigen::Matrix2d G;
        G << j1.dot(j1), j1.dot(j2), j1.dot(j2), j2.dot(j2);
        const double sqrt_g = std::sqrt(G.determinant());
        quadratic_basis(lam, phi, grad);
        const double w = rule.weight[q] * sqrt_g;
        e.stiffness.noalias() += w * grad * G.inverse() * grad.transpose();
        const Eigen::Matrix<double, 6, 6> pp = phi * phi.transpose();
        e.sphere_mass.noalias() += w * pp;
        e.weighted_mass.noalias() += (w * omega(f)) * pp;
    }
    return e;
}

} // namespace detail

/// Cover node -> global index of the six element nodes of cover triangle t.
inline std::array<int, 6> element_nodes(const CoverMesh& mesh, std::size_t t)
{
    const int nv = static_cast<int>(mesh.vertex_count());
    const auto& v = mesh.triangles[t];
    const auto& e = mesh.triangle_edges[t];
    return {v[0], v[1], v[2], nv + e[0], nv + e[1], nv + e[2]};
}

/// Positions on the unit sphere of all cover nodes (vertices, then edge midpoints).
inline std::vector<Vec3> node_positions(const CoverMesh& mesh)
{
    std::vector<Vec3> out;
    out.reserve(mesh.node_count());
    for (int b : mesh.vertex_base) {
        out.push_back(mesh.base_vertices[b]);
    }
    for (const auto& e : mesh.edge_base) {
        out.push_back((mesh.base_vertices[e[0]] + mesh.base_vertices[e[1]]).normalized());
    }
    return out;
}

inline JacobiSystem assemble_jacobi(const SurfaceSpec& spec, const CoverMesh& mesh)
{
    if (spec.family != mesh.spec.family || spec.a != mesh.spec.a) {
        throw DomainError("assemble_jacobi: mesh was built for a different curve");
    }
    const HyperellipticCurve curve(spec);
    const auto& X = mesh.base_vertices;
    std::vector<bool> is_branch(X.size(), false);
    for (int b : mesh.branch_vertices) {
        is_branch[b] = true;
    }
    static const detail::TriangleRule regular = detail::collapsed_rule(detail::kRegularOrder, 0);
    static const std::array<detail::TriangleRule, 3> singular{detail::collapsed_rule(detail::kSingularOrder, 0),
                                                              detail::collapsed_rule(detail::kSingularOrder, 1),
                                                              detail::collapsed_rule(detail::kSingularOrder, 2)};
    auto omega = [&](const Vec3& x) { return area_density_on_sphere(curve, x); };

    // Both lifts of a base triangle share its element matrices.
    const std::size_t nb = mesh.base_triangles.size();
    std::vector<detail::ElementMatrices> local(nb);
    for (std::size_t t = 0; t < nb; ++t) {
        const auto& tri = mesh.base_triangles[t];
        const detail::TriangleRule* rule = &regular;
        for (int j = 0; j < 3; ++j) {
            if (is_branch[tri[j]]) {
                rule = &singular[j];
            }
        }
        local[t] = detail::element_matrices(X[tri[0]], X[tri[1]], X[tri[2]], *rule, omega);
    }

    std::vector<Eigen::Triplet<double>> tk, ts, tm;
    const std::size_t nnz = 36 * mesh.triangles.size();
    tk.reserve(nnz);
    ts.reserve(nnz);
    tm.reserve(nnz);
    for (std::size_t c = 0; c < mesh.triangles.size(); ++c) {
        const auto nodes = element_nodes(mesh, c);
        const auto& e = local[mesh.triangle_base[c]];
        for (int i = 0; i < 6; ++i) {
            for (int j = 0; j < 6; ++j) {
                tk.emplace_back(nodes[i], nodes[j], e.stiffness(i, j));
                ts.emplace_back(nodes[i], nodes[j], e.sphere_mass(i, j));
                tm.emplace_back(nodes[i], nodes[j], e.weighted_mass(i, j));
            }
        }
    }
    JacobiSystem sys;
    const auto dim = static_cast<Eigen::Index>(mesh.node_count());
    sys.stiffness.resize(dim, dim);
    sys.sphere_mass.resize(dim, dim);
    sys.M.resize(dim, dim);
    sys.stiffness.setFromTriplets(tk.begin(), tk.end());
    sys.sphere_mass.setFromTriplets(ts.begin(), ts.end());
    sys.M.setFromTriplets(tm.begin(), tm.end());
    // |S|^2 dA = 2 dA_S: the potential is twice the round mass.
    sys.potential = 2.0 * sys.sphere_mass;
    sys.Q = sys.stiffness - sys.potential;
    sys.Q.makeCompressed();
    return sys;
}

// ---------------------------------------------------------------------------
// Killing-Jacobi kernel, index and nullity.

/// Gauss-map components sampled at cover nodes.
inline std::array<Eigen::VectorXd, 3> killing_fields(const CoverMesh& mesh)
{
    const auto positions = node_positions(mesh);
    std::array<Eigen::VectorXd, 3> out;
    for (int i = 0; i < 3; ++i) {
        out[i].resize(static_cast<Eigen::Index>(positions.size()));
        for (std::size_t v = 0; v < positions.size(); ++v) {
            out[i][static_cast<Eigen::Index>(v)] = positions[v][i];
        }
    }
    return out;
}

/// |Q(N_i, N_i)| / M(N_i, N_i) for the three Gauss-map components.
inline std::array<double, 3> killing_kernel_residual(const JacobiSystem& sys, const CoverMesh& mesh,
                                                     const SparseMatrix* mass = nullptr)
{
    const SparseMatrix& M = mass ? *mass : sys.M;
    const auto fields = killing_fields(mesh);
    std::array<double, 3> out{};
    for (int i = 0; i < 3; ++i) {
        out[i] = std::abs(fields[i].dot(sys.Q * fields[i])) / fields[i].dot(M * fields[i]);
    }
    return out;
}

inline std::array<double, 3> killing_kernel_residual(const SurfaceSpec& spec, const CoverMesh& mesh)
{
    return killing_kernel_residual(assemble_jacobi(spec, mesh), mesh);
}

/// Relative form defect |Q(N_i,N_i)| / (stiffness + potential), independent of the mass scaling.
inline double killing_relative_defect(const JacobiSystem& sys, const CoverMesh& mesh)
{
    const auto fields = killing_fields(mesh);
    double worst = 0.0;
    for (const auto& f : fields) {
        const double k = f.dot(sys.stiffness * f);
        const double p = f.dot(sys.potential * f);
        worst = std::max(worst, std::abs(k - p) / (k + p));
    }
    return worst;
}

inline constexpr double kZeroBandFactor = 10.0;
inline constexpr double kMaxKillingDefect = 0.05;
inline constexpr std::size_t kReportedEigenvalues = 12;

enum class MassKind { SurfaceMetric, RoundSphere };

struct SpectrumOptions {
    MassKind mass = MassKind::SurfaceMetric;
    bool reverse_sheets = false;
    std::size_t eigenvalue_count = kReportedEigenvalues;
};

struct SpectrumReport {
    SurfaceSpec spec;
    int level = 0;
    std::size_t morse_index = 0;
    std::size_t nullity = 0;
    double zero_tolerance = 0.0;
    std::vector<double> lowest_eigenvalues;
    double resolution = 0.0;
    std::size_t dimension = 0;
    std::array<double, 3> killing_residuals{};
};

namespace detail {

/// Banded inertia, nudging the band if a factorization meets an exact eigenvalue.
inline InertiaCount banded_inertia(const SparseMatrix& Q, const SparseMatrix& M, double band)
{
    for (int attempt = 0; attempt < 8; ++attempt) {
        try {
            return inertia_of_pencil(Q, M, 0.0, band * (1.0 + 1e-6 * attempt));
        } catch (const FactorizationBreakdown&) {
        }
    }
    throw FactorizationBreakdown("banded inertia: repeated factorization breakdown");
}

} // namespace detail

struct CalibratedSystem {
    CoverMesh mesh;
    JacobiSystem system;
    const SparseMatrix& mass(MassKind kind) const { return kind == MassKind::SurfaceMetric ? system.M : system.sphere_mass; }
};

inline CalibratedSystem prepare_system(const SurfaceSpec& spec, int level, bool reverse_sheets = false)
{
    CalibratedSystem out{build_cover_mesh(spec, level, {reverse_sheets}), {}};
    out.system = assemble_jacobi(spec, out.mesh);
    return out;
}

inline SpectrumReport spectrum_of(const CalibratedSystem& prepared, const SpectrumOptions& options = {})
{
    const auto& mesh = prepared.mesh;
    const auto& sys = prepared.system;
    const SparseMatrix& M = prepared.mass(options.mass);
    const double defect = killing_relative_defect(sys, mesh);
    if (!(defect <= kMaxKillingDefect)) {
        throw CalibrationFailure("Killing-Jacobi fields are not near the kernel (relative defect " +
                                 std::to_string(defect) + ")");
    }
    SpectrumReport r;
    r.spec = mesh.spec;
    r.level = mesh.level;
    r.resolution = mesh.resolution;
    r.dimension = mesh.node_count();
    r.killing_residuals = killing_kernel_residual(sys, mesh, &M);
    r.zero_tolerance = kZeroBandFactor * *std::max_element(r.killing_residuals.begin(), r.killing_residuals.end());
    const InertiaCount c = detail::banded_inertia(sys.Q, M, r.zero_tolerance);
    r.morse_index = c.negative;
    r.nullity = c.zero;
    if (options.eigenvalue_count > 0) {
        r.lowest_eigenvalues = lowest_eigenvalues(sys.Q, M, options.eigenvalue_count);
    }
    return r;
}

inline SpectrumReport morse_index_nullity(const SurfaceSpec& spec, int level, const SpectrumOptions& options = {})
{
    if (level < 4) {
        throw DomainError("morse_index_nullity: level must be at least 4");
    }
    return spectrum_of(prepare_system(spec, level, options.reverse_sheets), options);
}

// ---------------------------------------------------------------------------
// Family scans.

inline constexpr int kBisectionDepth = 10;

struct IndexScanOptions {
    unsigned workers = 1;
    double final_relative_width = 1e-6;
};

struct IndexSample {
    double a = 0.0;
    std::size_t morse_index = 0;
    std::size_t nullity = 0;
};

namespace detail {

struct IndexProbe {
    std::size_t index = 0;       // banded index
    std::size_t nullity = 0;
    std::size_t below_half = 0;  // eigenvalues below -tau/2, used for localization
};

inline IndexProbe probe_index(FamilyId family, double a, int level)
{
    const auto prepared = prepare_system(SurfaceSpec::make(family, a), level);
    SpectrumOptions opts;
    opts.eigenvalue_count = 0;
    const auto report = spectrum_of(prepared, opts);
    IndexProbe p;
    p.index = report.morse_index;
    p.nullity = report.nullity;
    // Killing eigenvalues stay within tau/10 of zero; a crossing eigenvalue passes
    // -tau/2 inside the band, so this count changes exactly where the index does.
    for (int attempt = 0; attempt < 8; ++attempt) {
        try {
            p.below_half = count_below(prepared.system.Q, prepared.system.M,
                                       -0.5 * report.zero_tolerance * (1.0 + 1e-6 * attempt));
            return p;
        } catch (const FactorizationBreakdown&) {
        }
    }
    throw FactorizationBreakdown("probe_index: repeated factorization breakdown");
}

} // namespace detail

/// Banded Morse index and nullity on steps+1 equispaced parameters.
inline std::vector<IndexSample> sample_index(FamilyId family, double lo, double hi, std::size_t steps, int level,
                                             unsigned workers = 1)
{
    check_range(family, lo, hi);
    return parallel_map<IndexSample>(steps + 1, workers, [&](std::size_t i) {
        const double a = (i == steps) ? hi : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(steps);
        const auto p = detail::probe_index(family, a, level);
        return IndexSample{a, p.index, p.nullity};
    });
}

/// Locates Morse index changes on a grid and refines each by bisection, first to
/// width range / 2^10 and then on to `final_relative_width` so that instants from
/// different scans can be compared closely. The nullity is read at the final
/// midpoint, where the crossing eigenvalue sits inside the zero band.
inline std::vector<DegeneracyInstant> scan_index_jumps(FamilyId family, double lo, double hi, std::size_t steps,
                                                       int level, IndexScanOptions options = {})
{
    if (steps < 16) {
        throw DomainError("scan_index_jumps: steps must be at least 16");
    }
    check_range(family, lo, hi);
    const double coarse_width = (hi - lo) / std::pow(2.0, kBisectionDepth);
    const double final_width = std::min(coarse_width, options.final_relative_width * (hi - lo));
    auto grid_a = [&](std::size_t i) {
        return (i == steps) ? hi : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(steps);
    };
    const auto grid = parallel_map<detail::IndexProbe>(
        steps + 1, options.workers, [&](std::size_t i) { return detail::probe_index(family, grid_a(i), level); });

    struct Bracket {
        double lo, hi;
        detail::IndexProbe plo, phi;
    };
    std::vector<Bracket> pending;
    for (std::size_t i = 0; i < steps; ++i) {
        if (grid[i].below_half != grid[i + 1].below_half) {
            pending.push_back({grid_a(i), grid_a(i + 1), grid[i], grid[i + 1]});
        }
    }

    auto refine = [&](const Bracket& start) {
        // Index on either side of a sub-bracket, from the grid index and the change in the
        // localization count; the two agree away from the band.
        auto index_at = [&](const detail::IndexProbe& p) {
            return static_cast<int>(start.plo.index) + static_cast<int>(p.below_half) -
                   static_cast<int>(start.plo.below_half);
        };
        std::vector<DegeneracyInstant> found;
        std::vector<Bracket> stack{start};
        while (!stack.empty()) {
            const Bracket cur = stack.back();
            stack.pop_back();
            const double mid = 0.5 * (cur.lo + cur.hi);
            const auto pm = detail::probe_index(family, mid, level);
            const double width = cur.hi - cur.lo;
            if (width <= final_width) {
                DegeneracyInstant inst;
                inst.a_star = mid;
                inst.method = DetectionMethod::SpectralScan;
                inst.index_before = index_at(cur.plo);
                inst.index_after = index_at(cur.phi);
                inst.nullity_at_instant = static_cast<int>(pm.nullity);
                inst.bracket_width = width;
                found.push_back(inst);
                continue;
            }
            if (pm.below_half != cur.plo.below_half) {
                stack.push_back({cur.lo, mid, cur.plo, pm});
            }
            if (pm.below_half != cur.phi.below_half) {
                stack.push_back({mid, cur.hi, pm, cur.phi});
            }
        }
        std::sort(found.begin(), found.end(), [](const auto& x, const auto& y) { return x.a_star < y.a_star; });
        return found;
    };
    const auto nested = parallel_map<std::vector<DegeneracyInstant>>(pending.size(), options.workers,
                                                                     [&](std::size_t i) { return refine(pending[i]); });

    // Crossings closer than the contractual localization width are reported as one
    // instant: a symmetric eigenvalue pair may split slightly under discretization.
    std::vector<DegeneracyInstant> merged;
    for (const auto& group : nested) {
        for (const auto& inst : group) {
            if (!merged.empty() && inst.a_star - merged.back().a_star <= 2.0 * coarse_width &&
                merged.back().index_after == inst.index_before) {
                auto& m = merged.back();
                const double left = m.a_star - 0.5 * m.bracket_width;
                const double right = inst.a_star + 0.5 * inst.bracket_width;
                m.a_star = 0.5 * (left + right);
                m.bracket_width = right - left;
                m.index_after = inst.index_after;
                m.nullity_at_instant = std::max(m.nullity_at_instant, inst.nullity_at_instant);
                continue;
            }
            merged.push_back(inst);
        }
    }
    for (auto& inst : merged) {
        inst.index_jump = std::abs(inst.index_after - inst.index_before);
        inst.parity = inst.index_jump % 2 == 1 ? JumpParity::Odd : JumpParity::Even;
        // Even jumps carry no bifurcation guarantee and stay Undecided.
        if (inst.parity == JumpParity::Odd && has_closed_form_lattice(family)) {
            inst.classification = classify_instant(family, inst.a_star, default_classification_window(inst.a_star));
        }
    }
    return merged;
}

} // namespace tpms
