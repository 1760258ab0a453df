#include <filesystem>
#include <fstream>
#include <sstream>

#include "helpers.hpp"
#include "procspace/parallel.hpp"
#include "procspace/runner.hpp"

using namespace procspace;

namespace {

std::string scenario_path(const std::string& name) { return std::string(PROCSPACE_SCENARIO_DIR) + "/" + name; }

std::string slurp(const std::filesystem::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

std::filesystem::path fresh_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / ("procspace-test-" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace

TEST_CASE("config parsing") {
    CHECK_THROWS_AS(Config::parse("scenario = heat\nsteps = 0\n").validate(), ParseError);
    CHECK_THROWS_AS(Config::parse("scenario = heat\nstepz = 4\n"), ParseError);
    CHECK_THROWS_AS(Config::parse("scenario heat\n"), ParseError);
    Config c = Config::parse("# comment\nscenario = heat\nsteps = 4\n");
    CHECK(c.get_int("steps", 0) == 4);
    c.set_override("steps=6");
    CHECK(c.get_int("steps", 0) == 6);
    CHECK_THROWS_AS(c.set_override("nonsense"), ParseError);
    CHECK_THROWS_AS(c.set_override("bogus.key=1"), ParseError);
    c.set_override("model.anything=2");
    CHECK(c.get_double("model.anything", 0) == 2.0);
    try {
        Config::parse("scenario = heat\n\nsteps = x\n", "demo.cfg").validate();
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find("3") != std::string::npos);
    }
}

TEST_CASE("scenario registry") {
    const auto keys = scenario_keys();
    CHECK(keys.size() >= 10);
    CHECK_THROWS_AS(make_scenario("no-such-scenario", Config::parse("scenario = heat\n")), ParameterError);
    for (const auto& k : keys) CHECK_FALSE(scenario_description(k).empty());
}

TEST_CASE("run the heat scenario") {
    const Config cfg = Config::load(scenario_path("heat.cfg"));
    const auto a = fresh_dir("run-a"), b = fresh_dir("run-b");
    const RunReport r = run_scenario(cfg, a.string());
    REQUIRE(r.checks.size() == 3);
    CHECK(r.checks[0].name == "value_V");
    CHECK(r.checks[1].name == "check_dpp");
    CHECK(r.checks[2].name == "check_lift");
    CHECK(r.pass());

    const int old = thread_count();
    set_thread_count(3);
    run_scenario(cfg, b.string());
    set_thread_count(old);
    CHECK(slurp(a / "report.csv") == slurp(b / "report.csv"));
    CHECK(slurp(a / "report.csv").rfind("check,value,reference,gap,tolerance,pass,detail\n", 0) == 0);
}

TEST_CASE("every shipped scenario passes") {
    for (const auto& entry : std::filesystem::directory_iterator(PROCSPACE_SCENARIO_DIR)) {
        if (entry.path().extension() != ".cfg" || entry.path().filename() == "heat.cfg") continue;
        CAPTURE(entry.path().filename().string());
        const RunReport r = run_scenario(Config::load(entry.path().string()));
        for (const auto& c : r.checks) {
            CAPTURE(c.name);
            CAPTURE(c.detail);
            CHECK(c.pass);
        }
    }
}

TEST_CASE("check names are validated") {
    Config cfg = Config::parse("scenario = heat\nsteps = 2\nparticles.idio = 10\nchecks = value_V, nonsense\n");
    CHECK_THROWS_AS(run_scenario(cfg), ParameterError);
    cfg.set("checks", "transform");
    const RunReport r = run_scenario(cfg);
    REQUIRE(r.checks.size() == 1);
    CHECK(r.checks[0].pass);
}

TEST_CASE("numeric failures are reported per check") {
    const Config cfg = Config::parse("scenario = heat\nsteps = 2\nparticles.idio = 10\nchecks = law_invariance, value_V\n");
    const RunReport r = run_scenario(cfg);
    REQUIRE(r.checks.size() == 2);
    CHECK_FALSE(r.checks[0].pass);
    CHECK_FALSE(r.checks[0].detail.empty());
    CHECK(r.checks[1].pass);
    CHECK_FALSE(r.pass());
}

TEST_CASE("sweeps") {
    SUBCASE("particle ladder") {
        const Config cfg = Config::load(scenario_path("heat.cfg"));
        const auto dir = fresh_dir("sweep");
        const SweepReport s = sweep(cfg, "particles.idio", {"100", "1000", "10000"}, dir.string());
        REQUIRE(s.slope);
        CHECK(*s.slope >= -0.6);
        CHECK(*s.slope <= -0.4);
        CHECK(s.metric == "stderr");
        CHECK(std::filesystem::exists(dir / "sweep.csv"));
        CHECK(std::filesystem::exists(dir / "sweep.svg"));
    }
    SUBCASE("finite-difference grid on a smooth payoff") {
        const Config cfg = Config::parse("scenario = heat_cos\nhorizon = 1\nsteps = 8\nparticles.idio = 200\nseed = 3\n");
        const SweepReport s = sweep(cfg, "fd.dx", {"0.2", "0.1", "0.05"});
        REQUIRE(s.slope);
        CHECK(*s.slope >= 1.5);
    }
    SUBCASE("single level") {
        const Config cfg = Config::parse("scenario = heat\nsteps = 4\nparticles.idio = 100\n");
        const SweepReport s = sweep(cfg, "steps", {"4"});
        CHECK_FALSE(s.slope);
        CHECK_FALSE(s.warnings.empty());
    }
    SUBCASE("unknown parameter") {
        const Config cfg = Config::parse("scenario = heat\nsteps = 4\n");
        CHECK_THROWS_AS(sweep(cfg, "horizon", {"1", "2"}), ParameterError);
    }
}
