#include "tpms/spectrum.hpp"

#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <set>

using namespace tpms;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

double total(const SparseMatrix& A)
{
    return Eigen::VectorXd::Ones(A.rows()).dot(A * Eigen::VectorXd::Ones(A.cols()));
}

bool identical(const SparseMatrix& A, const SparseMatrix& B)
{
    if (A.rows() != B.rows() || A.cols() != B.cols() || A.nonZeros() != B.nonZeros()) {
        return false;
    }
    const Eigen::MatrixXd D = Eigen::MatrixXd(A) - Eigen::MatrixXd(B);
    return D.cwiseAbs().maxCoeff() == 0.0;
}

SpectrumOptions counts_only()
{
    SpectrumOptions o;
    o.eigenvalue_count = 0;
    return o;
}

const std::vector<SurfaceSpec>& sample_specs()
{
    static const std::vector<SurfaceSpec> specs{
        SurfaceSpec::make(FamilyId::H, 0.3),   SurfaceSpec::make(FamilyId::H, 0.8),
        SurfaceSpec::make(FamilyId::rPD, 0.6), SurfaceSpec::make(FamilyId::rPD, 2.4),
        SurfaceSpec::make(FamilyId::tP, 3.0),  SurfaceSpec::make(FamilyId::tD, 40.0),
        SurfaceSpec::make(FamilyId::tCLP, 0.0), SurfaceSpec::make(FamilyId::tCLP, -1.5),
    };
    return specs;
}

} // namespace

TEST_CASE("lifted mesh has genus 3", "[cover]")
{
    for (const auto& spec : sample_specs()) {
        for (int level : {2, 3}) {
            const auto mesh = build_cover_mesh(spec, level);
            INFO(family_name(spec.family) << " a=" << spec.a << " level " << level);
            CHECK(mesh.euler_characteristic() == -4);
            CHECK(mesh.vertex_count() == 2 * mesh.base_vertices.size() - 8);
            CHECK(mesh.triangles.size() == 2 * mesh.base_triangles.size());
            CHECK_FALSE(mesh.cut_edges.empty());
        }
    }
}

TEST_CASE("triangles around a branch vertex cover both sheets once", "[cover]")
{
    const auto mesh = build_cover_mesh(SurfaceSpec::make(FamilyId::H, 0.7), 3);
    for (int b : mesh.branch_vertices) {
        std::size_t base_star = 0;
        for (const auto& t : mesh.base_triangles) {
            base_star += (t[0] == b || t[1] == b || t[2] == b);
        }
        std::vector<int> lifted;
        for (std::size_t v = 0; v < mesh.vertex_count(); ++v) {
            if (mesh.vertex_base[v] == b) {
                lifted.push_back(static_cast<int>(v));
            }
        }
        REQUIRE(lifted.size() == 1);
        CHECK(mesh.vertex_sheet[lifted[0]] == 0);
        std::multiset<int> bases;
        std::set<int> sheets;
        for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
            const auto& tri = mesh.triangles[t];
            if (tri[0] == lifted[0] || tri[1] == lifted[0] || tri[2] == lifted[0]) {
                bases.insert(mesh.triangle_base[t]);
                sheets.insert(mesh.triangle_sheet[t]);
            }
        }
        CHECK(bases.size() == 2 * base_star);
        for (int t : bases) {
            CHECK(bases.count(t) == 2);
        }
        CHECK(sheets == std::set<int>{-1, 1});
    }
}

TEST_CASE("ordinary vertices have two lifts on opposite sheets", "[cover]")
{
    const auto mesh = build_cover_mesh(SurfaceSpec::make(FamilyId::tP, 14.0), 3);
    std::vector<int> lifts(mesh.base_vertices.size(), 0);
    std::vector<int> sheet_sum(mesh.base_vertices.size(), 0);
    for (std::size_t v = 0; v < mesh.vertex_count(); ++v) {
        ++lifts[mesh.vertex_base[v]];
        sheet_sum[mesh.vertex_base[v]] += mesh.vertex_sheet[v];
    }
    const std::set<int> branch(mesh.branch_vertices.begin(), mesh.branch_vertices.end());
    for (std::size_t b = 0; b < lifts.size(); ++b) {
        CHECK(lifts[b] == (branch.count(static_cast<int>(b)) ? 1 : 2));
        CHECK(sheet_sum[b] == 0);
    }
}

TEST_CASE("refinement is 4:1 on faces", "[cover]")
{
    for (const auto& spec : {SurfaceSpec::make(FamilyId::tP, 14.0), SurfaceSpec::make(FamilyId::rPD, 0.5)}) {
        const auto coarse = build_cover_mesh(spec, 2);
        const auto fine = build_cover_mesh(spec, 3);
        const std::size_t base_edges = 3 * coarse.base_triangles.size() / 2;
        CHECK(fine.base_triangles.size() == 4 * coarse.base_triangles.size());
        CHECK(fine.base_vertices.size() == coarse.base_vertices.size() + base_edges);
        CHECK(fine.vertex_count() == 2 * (coarse.base_vertices.size() + base_edges) - 8);
        CHECK(fine.resolution < coarse.resolution);
    }
}

TEST_CASE("branch points sit exactly on mesh vertices", "[cover]")
{
    const auto spec = SurfaceSpec::make(FamilyId::H, 0.4);
    const auto mesh = build_cover_mesh(spec, 3);
    const auto dirs = branch_directions(branch_points(spec));
    REQUIRE(dirs.size() == 8);
    for (std::size_t k = 0; k < dirs.size(); ++k) {
        CHECK((mesh.base_vertices[mesh.branch_vertices[k]] - dirs[k]).norm() == 0.0);
    }
}

TEST_CASE("invalid mesh requests", "[cover]")
{
    CHECK_THROWS_AS(build_cover_mesh(SurfaceSpec::make(FamilyId::tP, 14.0), 1), DomainError);
    CHECK_THROWS_AS(build_cover_mesh(SurfaceSpec::make(FamilyId::tP, 1.0), 3), DomainError);
    const auto mesh = build_cover_mesh(SurfaceSpec::make(FamilyId::tP, 14.0), 2);
    CHECK_THROWS_AS(assemble_jacobi(SurfaceSpec::make(FamilyId::tP, 15.0), mesh), DomainError);
    CHECK_THROWS_AS(morse_index_nullity(SurfaceSpec::make(FamilyId::tP, 14.0), 3), DomainError);
}

TEST_CASE("potential mass is 16 pi", "[assembly]")
{
    const auto spec = SurfaceSpec::make(FamilyId::tP, 14.0);
    const auto mesh = build_cover_mesh(spec, 5);
    const auto sys = assemble_jacobi(spec, mesh);
    CHECK_THAT(total(sys.potential), WithinRel(16.0 * std::numbers::pi, 1e-3));
    CHECK_THAT(total(sys.sphere_mass), WithinRel(8.0 * std::numbers::pi, 1e-3));
}

TEST_CASE("constant function has negative Jacobi form", "[assembly]")
{
    for (const auto& spec : sample_specs()) {
        const auto mesh = build_cover_mesh(spec, 3);
        const auto sys = assemble_jacobi(spec, mesh);
        CHECK(total(sys.Q) < 0.0);
        CHECK_THAT(total(sys.stiffness), WithinAbs(0.0, 1e-9));
    }
}

TEST_CASE("matrices are symmetric and the masses positive", "[assembly]")
{
    const auto spec = SurfaceSpec::make(FamilyId::rPD, 0.8);
    const auto mesh = build_cover_mesh(spec, 3);
    const auto sys = assemble_jacobi(spec, mesh);
    CHECK((Eigen::MatrixXd(sys.Q) - Eigen::MatrixXd(sys.Q).transpose()).cwiseAbs().maxCoeff() < 1e-12);
    const auto mass_inertia = inertia_of_pencil(sys.M, sys.sphere_mass, 0.0);
    CHECK(mass_inertia.positive == mesh.node_count());
}

TEST_CASE("the Jacobi form depends only on the curve", "[assembly]")
{
    const double a = kGyroidCurveParameter;
    const auto p_spec = SurfaceSpec::make(FamilyId::tP, a);
    const auto d_spec = SurfaceSpec::make(FamilyId::tD, a);
    const auto g_spec = SurfaceSpec::associate(a, 0.9073);
    const auto p_mesh = build_cover_mesh(p_spec, 3);
    const auto d_mesh = build_cover_mesh(d_spec, 3);
    const auto g_mesh = build_cover_mesh(g_spec, 3);
    const auto p = assemble_jacobi(p_spec, p_mesh);
    const auto d = assemble_jacobi(d_spec, d_mesh);
    const auto g = assemble_jacobi(g_spec, g_mesh);
    CHECK(identical(p.Q, d.Q));
    CHECK(identical(p.Q, g.Q));
    CHECK(identical(p.M, d.M));
    CHECK(identical(p.M, g.M));
    CHECK(killing_kernel_residual(p_spec, p_mesh) == killing_kernel_residual(g_spec, g_mesh));
}

TEST_CASE("global sheet reversal leaves the operator unchanged", "[assembly]")
{
    const auto spec = SurfaceSpec::make(FamilyId::H, 0.6);
    const auto mesh = build_cover_mesh(spec, 3);
    const auto flipped = build_cover_mesh(spec, 3, {true});
    REQUIRE(flipped.vertex_count() == mesh.vertex_count());
    for (std::size_t v = 0; v < mesh.vertex_count(); ++v) {
        CHECK(flipped.vertex_base[v] == mesh.vertex_base[v]);
        CHECK(flipped.vertex_sheet[v] == -mesh.vertex_sheet[v]);
    }
    const auto a = assemble_jacobi(spec, mesh);
    const auto b = assemble_jacobi(spec, flipped);
    const double scale = Eigen::MatrixXd(a.Q).cwiseAbs().maxCoeff();
    CHECK((Eigen::MatrixXd(a.Q) - Eigen::MatrixXd(b.Q)).cwiseAbs().maxCoeff() <= 1e-13 * scale);
    CHECK((Eigen::MatrixXd(a.M) - Eigen::MatrixXd(b.M)).cwiseAbs().maxCoeff() <= 1e-13 * Eigen::MatrixXd(a.M).cwiseAbs().maxCoeff());

    SpectrumOptions reversed = counts_only();
    reversed.reverse_sheets = true;
    const auto r1 = morse_index_nullity(spec, 4, counts_only());
    const auto r2 = morse_index_nullity(spec, 4, reversed);
    CHECK(r1.morse_index == r2.morse_index);
    CHECK(r1.nullity == r2.nullity);
}

TEST_CASE("Killing residuals shrink under refinement", "[kernel]")
{
    for (const auto& spec : {SurfaceSpec::make(FamilyId::tP, 14.0), SurfaceSpec::make(FamilyId::tCLP, 0.0)}) {
        std::array<double, 3> previous{};
        double ratio_product = 1.0;
        for (int level : {2, 3, 4}) {
            const auto residual = killing_kernel_residual(spec, build_cover_mesh(spec, level));
            for (int i = 0; i < 3; ++i) {
                CHECK(residual[i] > 0.0);
                if (level > 2) {
                    CHECK(residual[i] < previous[i]);
                }
            }
            if (level > 2) {
                ratio_product *= *std::max_element(residual.begin(), residual.end()) /
                                  *std::max_element(previous.begin(), previous.end());
            }
            previous = residual;
        }
        CHECK(std::sqrt(ratio_product) <= 0.5);
    }
}

TEST_CASE("Killing fields are independent in the mass inner product", "[kernel]")
{
    const auto spec = SurfaceSpec::make(FamilyId::rPD, 1.0);
    const auto mesh = build_cover_mesh(spec, 3);
    const auto sys = assemble_jacobi(spec, mesh);
    const auto fields = killing_fields(mesh);
    Eigen::Matrix3d gram;
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
            gram(i, j) = fields[i].dot(sys.M * fields[j]);
        }
    }
    CHECK(gram.determinant() > 0.0);
}

TEST_CASE("Morse index and nullity of catalog surfaces", "[index]")
{
    struct Case {
        FamilyId family;
        double a;
        std::size_t index;
    };
    const std::vector<Case> cases{
        {FamilyId::tCLP, 0.0, 3}, {FamilyId::tP, 14.0, 1}, {FamilyId::tD, 14.0, 1}, {FamilyId::tD, 2.85, 2},
        {FamilyId::H, 0.1, 2},    {FamilyId::H, 0.5, 1},   {FamilyId::H, 0.9, 3},   {FamilyId::rPD, 0.1, 2},
        {FamilyId::rPD, 0.5, 1},
    };
    for (const auto& c : cases) {
        const auto r = morse_index_nullity(SurfaceSpec::make(c.family, c.a), 4, counts_only());
        INFO(family_name(c.family) << " a=" << c.a);
        CHECK(r.morse_index == c.index);
        CHECK(r.nullity == 3);
        CHECK(r.zero_tolerance > 0.0);
    }
}

TEST_CASE("counts do not depend on the mass matrix", "[index]")
{
    for (const auto& spec : {SurfaceSpec::make(FamilyId::tCLP, 0.0), SurfaceSpec::make(FamilyId::rPD, 0.3)}) {
        const auto prepared = prepare_system(spec, 4);
        SpectrumOptions surface = counts_only();
        SpectrumOptions round = counts_only();
        round.mass = MassKind::RoundSphere;
        const auto a = spectrum_of(prepared, surface);
        const auto b = spectrum_of(prepared, round);
        CHECK(a.morse_index == b.morse_index);
        CHECK(a.nullity == b.nullity);
    }
}

TEST_CASE("reported eigenvalues bracket the counts", "[index]")
{
    const auto r = morse_index_nullity(SurfaceSpec::make(FamilyId::tP, 14.0), 4);
    REQUIRE(r.lowest_eigenvalues.size() == kReportedEigenvalues);
    CHECK(std::is_sorted(r.lowest_eigenvalues.begin(), r.lowest_eigenvalues.end()));
    CHECK(r.lowest_eigenvalues[0] < -r.zero_tolerance);
    for (int i = 1; i <= 3; ++i) {
        CHECK(std::abs(r.lowest_eigenvalues[i]) <= r.zero_tolerance);
    }
    CHECK(r.lowest_eigenvalues[4] > r.zero_tolerance);
}

TEST_CASE("spectral scan finds the rPD instant", "[scan]")
{
    const auto instants = scan_index_jumps(FamilyId::rPD, 0.4, 0.6, 16, 3);
    REQUIRE(instants.size() == 1);
    const auto& i = instants[0];
    CHECK_THAT(i.a_star, WithinAbs(0.494722, 0.01));
    CHECK(i.index_before == 2);
    CHECK(i.index_after == 1);
    CHECK(i.parity == JumpParity::Odd);
    CHECK(i.bifurcation());
    CHECK(i.nullity_at_instant > 3);
    CHECK(i.bracket_width <= 0.2 / 1024.0);
    CHECK(i.method == DetectionMethod::SpectralScan);
    CHECK(i.classification == InstantClass::Transcritical);
}

TEST_CASE("spectral scan input checks", "[scan]")
{
    CHECK_THROWS_AS(scan_index_jumps(FamilyId::rPD, 0.4, 0.6, 8, 3), DomainError);
    CHECK_THROWS_AS(scan_index_jumps(FamilyId::rPD, 0.6, 0.4, 16, 3), DomainError);
    CHECK_THROWS_AS(scan_index_jumps(FamilyId::H, 0.5, 1.5, 16, 3), DomainError);
}
