// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.
// Targets and tolerances are the published values; nothing here is tuned to the
// implementation's own output.

#include "tpms/geometry.hpp"
#include "tpms/spectrum.hpp"

#include <chrono>
#include <cstdio>
#include <functional>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>

using namespace tpms;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
    bool pass = false;
    std::string detail;
};

int failures = 0;

void criterion(int number, const std::string& title, const std::function<Outcome()>& body)
{
    const auto t0 = Clock::now();
    Outcome o;
    try {
        o = body();
    } catch (const std::exception& e) {
        o = {false, std::string("exception: ") + e.what()};
    }
    const double s = std::chrono::duration<double>(Clock::now() - t0).count();
    failures += o.pass ? 0 : 1;
    std::printf("criterion %d %s  %s: %s [%.1f s]\n", number, o.pass ? "PASS" : "FAIL", title.c_str(),
                o.detail.c_str(), s);
    std::fflush(stdout);
}

std::string num(double x, int digits = 7)
{
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.*g", digits, x);
    return buf;
}

double elapsed(Clock::time_point t0)
{
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

Outcome ratio_minimum(FamilyId family, double lo, double hi, double target, double tol)
{
    const auto t0 = Clock::now();
    const auto extrema = scan_ratio_extrema(family, lo, hi, 200);
    const double seconds = elapsed(t0);
    std::optional<DegeneracyInstant> best;
    for (const auto& e : extrema) {
        if (!best || e.ratio_value < best->ratio_value) {
            best = e;
        }
    }
    if (!best) {
        return {false, "no interior extremum found"};
    }
    const bool ok = std::abs(best->a_star - target) <= tol && seconds < 30.0;
    return {ok, "minimum at a = " + num(best->a_star, 9) + " (target " + num(target) + " ± " + num(tol) + ")"};
}

struct ScanResults {
    std::vector<DegeneracyInstant> h, rpd, tp, td;
};

const DegeneracyInstant* near(const std::vector<DegeneracyInstant>& list, double target, double tol)
{
    const DegeneracyInstant* best = nullptr;
    for (const auto& i : list) {
        if (std::abs(i.a_star - target) <= tol && (!best || std::abs(i.a_star - target) < std::abs(best->a_star - target))) {
            best = &i;
        }
    }
    return best;
}

std::string describe(const DegeneracyInstant* i)
{
    if (!i) {
        return "none";
    }
    return num(i->a_star, 8) + " (" + std::to_string(i->index_before) + "->" + std::to_string(i->index_after) + ", " +
           std::string(to_string(i->parity)) + ", nullity " + std::to_string(i->nullity_at_instant) + ", " +
           std::string(to_string(i->classification)) + ")";
}

bool degenerate(const DegeneracyInstant* i)
{
    return i && i->nullity_at_instant > 3;
}

} // namespace

int main()
{
    std::printf("acceptance suite\n");

    criterion(1, "rPD ratio minimum", [] { return ratio_minimum(FamilyId::rPD, 0.2, 3.0, 0.494722, 5e-4); });
    criterion(2, "H ratio minimum", [] { return ratio_minimum(FamilyId::H, 0.05, 0.95, 0.49701, 1e-3); });
    criterion(3, "tP ratio minimum", [] { return ratio_minimum(FamilyId::tP, 2.5, 100.0, 28.7783, 0.05); });

    criterion(4, "Morse index and nullity table at levels 4 and 5", [] {
        struct Row {
            FamilyId family;
            double a;
            std::size_t index;
        };
        const std::vector<Row> rows{
            {FamilyId::tCLP, 0.0, 3}, {FamilyId::tP, 14.0, 1}, {FamilyId::tD, 14.0, 1},
            {FamilyId::H, 0.1, 2},    {FamilyId::H, 0.5, 1},   {FamilyId::H, 0.9, 3},
            {FamilyId::rPD, 0.1, 2},  {FamilyId::rPD, 0.5, 1},
        };
        SpectrumOptions counts;
        counts.eigenvalue_count = 0;
        const auto t0 = Clock::now();
        bool ok = true;
        std::ostringstream detail;
        for (const auto& row : rows) {
            const auto spec = SurfaceSpec::make(row.family, row.a);
            const auto l4 = morse_index_nullity(spec, 4, counts);
            const auto l5 = morse_index_nullity(spec, 5, counts);
            const bool row_ok = l4.morse_index == row.index && l4.nullity == 3 && l5.morse_index == l4.morse_index &&
                                l5.nullity == l4.nullity;
            ok = ok && row_ok;
            detail << family_name(row.family) << "(" << row.a << ")=(" << l4.morse_index << "," << l4.nullity << ")";
            if (!row_ok) {
                detail << "[L5 (" << l5.morse_index << "," << l5.nullity << "), want (" << row.index << ",3)]";
            }
            detail << " ";
        }
        const double seconds = elapsed(t0);
        return Outcome{ok && seconds < 600.0, detail.str() + "total " + num(seconds, 3) + " s"};
    });

    ScanResults scans;
    criterion(5, "spectral degeneracy scan", [&scans] {
        scans.h = scan_index_jumps(FamilyId::H, 0.2, 0.95, 16, 4);
        scans.rpd = scan_index_jumps(FamilyId::rPD, 0.2, 3.0, 16, 4);
        scans.tp = scan_index_jumps(FamilyId::tP, 2.5, 60.0, 16, 5);
        scans.td = scan_index_jumps(FamilyId::tD, 2.5, 60.0, 16, 5);

        const auto* h0 = near(scans.h, 0.49701, 0.01);
        const auto* h1 = near(scans.h, 0.71479, 0.01);
        const bool h_ok = degenerate(h0) && h0->bifurcation() && degenerate(h1) && h1->parity == JumpParity::Even &&
                          h1->classification == InstantClass::Undecided;

        const auto* r1 = near(scans.rpd, 0.494722, 0.01);
        const auto* r2 = near(scans.rpd, 2.02133, 0.02);
        const bool r_ok = degenerate(r1) && r1->parity == JumpParity::Odd && degenerate(r2) &&
                          r2->parity == JumpParity::Odd && std::abs(r2->a_star - 1.0 / r1->a_star) < 2e-3;

        const auto* p1 = near(scans.tp, 7.40284, 0.05);
        const auto* p2 = near(scans.tp, 28.7783, 0.1);
        const auto* d1 = near(scans.td, 7.40284, 0.05);
        const auto* d2 = near(scans.td, 28.7783, 0.1);
        const bool t_ok = degenerate(p1) && degenerate(p2) && degenerate(d1) && degenerate(d2);

        std::string detail = "H " + describe(h0) + ", " + describe(h1) + "; rPD " + describe(r1) + ", " +
                             describe(r2);
        if (r1 && r2) {
            detail += " |a2-1/a1|=" + num(std::abs(r2->a_star - 1.0 / r1->a_star), 3);
        }
        detail += "; tP " + describe(p1) + ", " + describe(p2) + "; tD " + describe(d1) + ", " + describe(d2);
        return Outcome{h_ok && r_ok && t_ok, detail};
    });

    criterion(6, "classification of the instants", [&scans] {
        const auto* r1 = near(scans.rpd, 0.494722, 0.01);
        const auto* r2 = near(scans.rpd, 2.02133, 0.02);
        const auto* h0 = near(scans.h, 0.49701, 0.01);
        const auto* p1 = near(scans.tp, 7.40284, 0.05);
        const auto* p2 = near(scans.tp, 28.7783, 0.1);
        auto is = [](const DegeneracyInstant* i, InstantClass c) { return i && i->classification == c; };
        const bool ok = is(r1, InstantClass::Transcritical) && is(r2, InstantClass::Genuine) &&
                        is(h0, InstantClass::Transcritical) && is(p1, InstantClass::Genuine) &&
                        is(p2, InstantClass::Transcritical);
        auto name = [](const DegeneracyInstant* i) { return i ? std::string(to_string(i->classification)) : "missing"; };
        return Outcome{ok, "rPD (" + name(r1) + ", " + name(r2) + "), H a0 " + name(h0) + ", tP (" + name(p1) + ", " +
                               name(p2) + ")"};
    });

    criterion(7, "period lattices match the closed forms", [] {
        bool ok = true;
        std::string detail;
        for (const auto& spec : {SurfaceSpec::make(FamilyId::rPD, 1.0), SurfaceSpec::make(FamilyId::H, 0.5),
                                 SurfaceSpec::make(FamilyId::tP, 14.0)}) {
            const auto periods = period_lattice(spec);
            const auto cmp = compare_lattices(periods.basis.generators, lattice_basis_closed_form(spec).generators);
            ok = ok && cmp.equivalent && cmp.relative_gram_error <= 1e-6;
            detail += std::string(family_name(spec.family)) + "(" + num(spec.a) + ") gram error " +
                      num(cmp.relative_gram_error, 3) + (cmp.equivalent ? "" : " NOT EQUIVALENT") + "; ";
        }
        return Outcome{ok, detail};
    });

    criterion(8, "gyroid angle", [] {
        const auto t0 = Clock::now();
        const auto g = gyroid_angle(0.1, 1.4);
        const double seconds = elapsed(t0);
        return Outcome{std::abs(g.theta - 0.907313) <= 1e-3 && seconds < 60.0,
                       "theta = " + num(g.theta, 9) + " (target 0.907313 ± 1e-3), residual " + num(g.residual, 3)};
    });

    criterion(9, "property suites", [] {
        std::string detail;
        bool ok = true;

        const auto spec = SurfaceSpec::make(FamilyId::tP, 14.0);
        const auto mesh5 = build_cover_mesh(spec, 5);
        const auto sys5 = assemble_jacobi(spec, mesh5);
        const Eigen::VectorXd one = Eigen::VectorXd::Ones(sys5.potential.rows());
        const double potential = one.dot(sys5.potential * one);
        const bool gb = std::abs(potential / (16.0 * std::numbers::pi) - 1.0) <= 1e-3;
        ok = ok && gb;
        detail += "potential mass/16pi - 1 = " + num(potential / (16.0 * std::numbers::pi) - 1.0, 3);

        bool monotone = true;
        std::array<double, 3> previous{};
        for (int level : {2, 3, 4}) {
            const auto r = killing_kernel_residual(spec, build_cover_mesh(spec, level));
            for (int i = 0; i < 3 && level > 2; ++i) {
                monotone = monotone && r[i] < previous[i];
            }
            previous = r;
        }
        ok = ok && monotone;
        detail += std::string("; Killing residuals ") + (monotone ? "decrease" : "do NOT decrease") + " over levels 2-4";

        const auto p_mesh = build_cover_mesh(spec, 4);
        const auto d_spec = SurfaceSpec::make(FamilyId::tD, 14.0);
        const auto g_spec = SurfaceSpec::associate(14.0, 0.907313);
        const auto p = assemble_jacobi(spec, p_mesh);
        const auto d = assemble_jacobi(d_spec, build_cover_mesh(d_spec, 4));
        const auto g = assemble_jacobi(g_spec, build_cover_mesh(g_spec, 4));
        auto same = [](const SparseMatrix& x, const SparseMatrix& y) {
            return x.nonZeros() == y.nonZeros() &&
                   std::equal(x.valuePtr(), x.valuePtr() + x.nonZeros(), y.valuePtr()) &&
                   std::equal(x.innerIndexPtr(), x.innerIndexPtr() + x.nonZeros(), y.innerIndexPtr());
        };
        const bool identical = same(p.Q, d.Q) && same(p.Q, g.Q) && same(p.M, d.M) && same(p.M, g.M);
        ok = ok && identical;
        detail += std::string("; Q(tP)=Q(tD)=Q(gyroid) ") + (identical ? "bit-identical" : "DIFFER");

        bool swap_ok = true;
        for (const auto& s : {SurfaceSpec::make(FamilyId::tCLP, 0.0), SurfaceSpec::make(FamilyId::H, 0.9),
                              SurfaceSpec::make(FamilyId::rPD, 0.1)}) {
            const auto prepared = prepare_system(s, 4);
            SpectrumOptions surface;
            surface.eigenvalue_count = 0;
            SpectrumOptions round = surface;
            round.mass = MassKind::RoundSphere;
            const auto a = spectrum_of(prepared, surface);
            const auto b = spectrum_of(prepared, round);
            swap_ok = swap_ok && a.morse_index == b.morse_index && a.nullity == b.nullity;
        }
        ok = ok && swap_ok;
        detail += std::string("; mass swap ") + (swap_ok ? "invariant" : "CHANGES counts");

        std::mt19937 rng(2024);
        std::normal_distribution<double> gauss;
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        double worst = 0.0;
        for (int i = 0; i < 1000; ++i) {
            const FamilyId f = kAllFamilies[i % kAllFamilies.size()];
            const auto dom = parameter_domain(f);
            const double hi = std::isfinite(dom.upper) ? dom.upper : dom.lower + 50.0;
            SurfaceSpec s = SurfaceSpec::make(f, dom.lower + (0.02 + 0.96 * unit(rng)) * (hi - dom.lower));
            s.theta = f == FamilyId::tP ? unit(rng) * std::numbers::pi / 2 : s.theta;
            const cplx z(2.0 * gauss(rng), 2.0 * gauss(rng));
            const cplx w = std::sqrt(defining_polynomial(s)(z));
            const Vec3c phi = weierstrass_integrand(s, {z, 1}, w);
            const cplx null = phi[0] * phi[0] + phi[1] * phi[1] + phi[2] * phi[2];
            worst = std::max(worst, std::abs(null) / (std::norm(phi[0]) + std::norm(phi[1]) + std::norm(phi[2])));
        }
        ok = ok && worst <= 1e-10;
        detail += "; max relative |Phi.Phi| = " + num(worst, 3);
        return Outcome{ok, detail};
    });

    std::printf("%s: %d criterion(s) failed\n", failures == 0 ? "ALL PASS" : "FAILURES", failures);
    return failures == 0 ? 0 : 1;
}
