// Runs the tpms executable end to end. TPMS_CLI is the binary path, set by CMake.

#include "tpms/io.hpp"

#include <catch_amalgamated.hpp>

#include <cstdlib>
#include <fstream>
#include <set>
#include <sys/wait.h>

using namespace tpms;
namespace fs = std::filesystem;

namespace {

struct Run {
    int status;
    std::string out;
    std::string err;
};

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

fs::path scratch()
{
    static const fs::path dir = [] {
        auto d = fs::temp_directory_path() / ("tpms_cli_test_" + std::to_string(::getpid()));
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

Run run_cli(const std::string& args)
{
    const auto out = scratch() / "stdout.txt";
    const auto err = scratch() / "stderr.txt";
    const std::string cmd = std::string(TPMS_CLI) + " " + args + " > " + out.string() + " 2> " + err.string();
    const int raw = std::system(cmd.c_str());
    return {WIFEXITED(raw) ? WEXITSTATUS(raw) : -1, slurp(out), slurp(err)};
}

std::string dir(const std::string& name)
{
    return (scratch() / name).string();
}

} // namespace

TEST_CASE("scan-lattice writes the ratio curve and marks the rPD minimum", "[cli]")
{
    const auto r = run_cli("scan-lattice rPD 0.2..3.0 200 --out " + dir("rpd"));
    REQUIRE(r.status == 0);
    const auto doc = Json::parse(r.out);
    REQUIRE(doc["extrema"].size() >= 1);
    CHECK(std::abs(doc["extrema"][0]["a_star"].get<double>() - 0.494722) < 5e-4);
    const auto csv = slurp(scratch() / "rpd" / "ratio.csv");
    CHECK(csv.rfind("a,ratio\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 202);
    CHECK(slurp(scratch() / "rpd" / "ratio.svg").find("a=0.494722") != std::string::npos);

    // Identical inputs give byte-identical files.
    REQUIRE(run_cli("scan-lattice rPD 0.2..3.0 200 --out " + dir("rpd2")).status == 0);
    CHECK(slurp(scratch() / "rpd2" / "ratio.csv") == csv);
    CHECK(slurp(scratch() / "rpd2" / "ratio.svg") == slurp(scratch() / "rpd" / "ratio.svg"));
}

TEST_CASE("usage and domain errors exit with 2", "[cli]")
{
    CHECK(run_cli("scan-lattice rPD 0.2..3.0 1").status == 2);
    CHECK(run_cli("scan-lattice rPD 3.0..0.2").status == 2);
    CHECK(run_cli("scan-lattice tD 3..10").status == 2);
    CHECK(run_cli("scan-lattice").status == 2);
    CHECK(run_cli("nonsense").status == 2);
    CHECK(run_cli("spectrum Q 1").status == 2);
    CHECK(run_cli("spectrum tP 1.5").status == 2);
    CHECK(run_cli("spectrum tP 14 --level 3").status == 2);
    CHECK(run_cli("mesh tCLP 0 --region -1,-1,1,1").status == 2);
    CHECK(run_cli("gyroid-angle --bracket 0.0..1.4").status == 2);
    CHECK(run_cli("--help").status == 0);
}

TEST_CASE("numerical failures exit with 3 and a JSON diagnostic", "[cli]")
{
    const auto r = run_cli("gyroid-angle --bracket 0.2..0.5");
    CHECK(r.status == 3);
    const auto diag = Json::parse(r.err);
    CHECK(diag["error"] == "NoCoherentAngle");
}

TEST_CASE("spectrum reports do not depend on the associate angle", "[cli]")
{
    const auto plain = run_cli("spectrum tP 14 --out " + dir("s0"));
    const auto rotated = run_cli("spectrum tP 14 --theta 0.907313 --out " + dir("s1"));
    REQUIRE(plain.status == 0);
    REQUIRE(rotated.status == 0);
    auto a = Json::parse(plain.out);
    auto b = Json::parse(rotated.out);
    CHECK(a["index"] == 1);
    CHECK(a["nullity"] == 3);
    CHECK(b["theta"].get<double>() == 0.907313);
    a.erase("theta");
    b.erase("theta");
    CHECK(a == b);
    CHECK(Json::parse(slurp(scratch() / "s0" / "spectrum.json")) == Json::parse(plain.out));
}

TEST_CASE("spectrum of the tCLP surface at level 5", "[cli]")
{
    const auto r = run_cli("spectrum tCLP 0.0 --level 5 --eigenvalues 0 --out " + dir("clp5"));
    REQUIRE(r.status == 0);
    const auto j = Json::parse(r.out);
    CHECK(j["index"] == 3);
    CHECK(j["nullity"] == 3);
    CHECK(j["level"] == 5);
}

TEST_CASE("flags override the config file, which overrides defaults", "[cli]")
{
    const auto cfg = scratch() / "run.cfg";
    std::ofstream(cfg) << "# shared settings\nlevel = 5\neigenvalues=0\n";
    const auto from_config = run_cli("--config " + cfg.string() + " spectrum tCLP 0 --out " + dir("cfg"));
    REQUIRE(from_config.status == 0);
    CHECK(Json::parse(from_config.out)["level"] == 5);
    CHECK(Json::parse(from_config.out)["lowest_eigenvalues"].empty());
    const auto from_flag = run_cli("spectrum tCLP 0 --config " + cfg.string() + " --level 4 --out " + dir("cfg"));
    REQUIRE(from_flag.status == 0);
    CHECK(Json::parse(from_flag.out)["level"] == 4);
    const auto from_default = run_cli("spectrum tCLP 0 --eigenvalues 0 --out " + dir("cfg"));
    CHECK(Json::parse(from_default.out)["level"] == 4);

    std::ofstream(scratch() / "bad.cfg") << "level\n";
    CHECK(run_cli("--config " + (scratch() / "bad.cfg").string() + " spectrum tCLP 0 --out " + dir("cfg")).status == 2);
}

TEST_CASE("mesh exports a valid OBJ", "[cli]")
{
    const auto r = run_cli("mesh tP 14 --out " + dir("mesh"));
    REQUIRE(r.status == 0);
    const auto mesh = parse_obj(slurp(scratch() / "mesh" / "mesh.obj"));
    CHECK(mesh.vertices.size() == Json::parse(r.out)["vertices"].get<std::size_t>());
    CHECK(mesh.faces.size() == Json::parse(r.out)["faces"].get<std::size_t>());
    const auto periods = Json::parse(slurp(scratch() / "mesh" / "periods.json"));
    CHECK(periods["cycles"].size() == 7);
}

TEST_CASE("mesh residual falls with the level", "[cli]")
{
    const auto coarse = run_cli("mesh rPD 0.5 --level 3 --out " + dir("m3"));
    const auto fine = run_cli("mesh rPD 0.5 --level 4 --out " + dir("m4"));
    REQUIRE(coarse.status == 0);
    REQUIRE(fine.status == 0);
    const double rc = Json::parse(coarse.out)["mean_curvature_residual"];
    const double rf = Json::parse(fine.out)["mean_curvature_residual"];
    CHECK(rf < rc / 3.0);
}

TEST_CASE("gyroid alias uses the coherent angle", "[cli]")
{
    const auto r = run_cli("mesh gyroid --level 3 --out " + dir("gyroid"));
    REQUIRE(r.status == 0);
    CHECK(r.err.find("theta = 0.9073") != std::string::npos);
    CHECK(std::abs(Json::parse(r.out)["theta"].get<double>() - 0.907313) < 1e-3);

    const auto g = run_cli("gyroid-angle --out " + dir("angle"));
    REQUIRE(g.status == 0);
    const auto j = Json::parse(slurp(scratch() / "angle" / "gyroid.json"));
    CHECK(std::abs(j["theta"].get<double>() - 0.907313) < 1e-3);
    CHECK(j["residual"].get<double>() < kGyroidResidualTolerance);
}

TEST_CASE("find-instants merges ratio and spectral detections", "[cli]")
{
    const auto r = run_cli("find-instants rPD 0.4..0.6 --level 3 --out " + dir("inst"));
    REQUIRE(r.status == 0);
    const auto j = Json::parse(r.out);
    REQUIRE(j["instants"].size() == 2);
    std::set<std::string> methods;
    for (const auto& i : j["instants"]) {
        methods.insert(i["method"]);
        CHECK(i["classification"] == "Transcritical");
    }
    CHECK(methods == std::set<std::string>{"RatioExtremum", "SpectralScan"});
    CHECK(slurp(scratch() / "inst" / "instants.svg").find("<polyline") != std::string::npos);

    const auto clp = run_cli("find-instants tCLP -1.9..1.9 --level 4 --out " + dir("clp"));
    REQUIRE(clp.status == 0);
    CHECK(Json::parse(clp.out)["instants"].empty());
}
