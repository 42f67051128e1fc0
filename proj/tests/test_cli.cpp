// End-to-end checks of the command-line tool: run the real binary over temp
// files, parse the JSON reports back and compare against in-process results.
#include <doctest.h>

#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "metaspec/chain.hpp"
#include "metaspec/io.hpp"
#include "metaspec/metastable.hpp"
#include "metaspec/solver.hpp"
#include "metaspec/spectral.hpp"

using namespace metaspec;
using json = nlohmann::json;

namespace {

struct RunResult {
    int code = -1;
    std::string out;
};

RunResult run_cli(const std::string& args) {
    std::string cmd = std::string(METASPEC_CLI_PATH) + " " + args + " 2>/dev/null";
    FILE* pipe = ::popen(cmd.c_str(), "r");
    RunResult r;
    if (!pipe) return r;
    char buf[4096];
    size_t got;
    while ((got = std::fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, got);
    int status = ::pclose(pipe);
    if (WIFEXITED(status)) r.code = WEXITSTATUS(status);
    return r;
}

const std::string& workdir() {
    static std::string dir = [] {
        auto p = std::filesystem::temp_directory_path() / "metaspec_cli_tests";
        std::filesystem::remove_all(p);
        std::filesystem::create_directories(p);
        return p.string();
    }();
    return dir;
}

std::string at(const std::string& name) { return workdir() + "/" + name; }

const std::string kBuildArgs =
    "build --preset double_well --d 1 --N 16 --param barrier=0.16 --param tilt=0.1 --out ";

// Double-well fixture written once through the CLI itself.
const std::string& chain_file() {
    static std::string file = [] {
        std::string f = at("dw16.json");
        run_cli(kBuildArgs + f);
        return f;
    }();
    return file;
}

int count_lines(const std::string& path) {
    std::ifstream in(path);
    int n = 0;
    std::string line;
    while (std::getline(in, line)) ++n;
    return n;
}

std::string first_line(const std::string& path) {
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    return line;
}

}  // namespace

TEST_CASE("cli build emits a validated chain file") {
    RunResult r = run_cli(kBuildArgs + at("b1.json"));
    REQUIRE(r.code == 0);
    json j = json::parse(r.out);
    CHECK(j["command"] == "build");
    CHECK(j["states"] == 17);
    CHECK(j["validation"]["ok"] == true);
    CHECK(j["output"]["path"] == at("b1.json"));
    CHECK(j["output"]["digest"] == io::file_stamp(at("b1.json"))["digest"]);

    ChainModel chain = io::load_chain(at("b1.json"));
    CHECK(chain.n == 17);
    CHECK(validate(chain).ok());
    CHECK(chain.label(4) == "0.25");

    // Same invocation, same bytes on stdout and on disk.
    RunResult again = run_cli(kBuildArgs + at("b1.json"));
    CHECK(again.code == 0);
    CHECK(again.out == r.out);
}

TEST_CASE("cli build rejects bad invocations") {
    SUBCASE("no spec and no preset") {
        RunResult r = run_cli("build --out " + at("none.json"));
        CHECK(r.code == 4);
        CHECK(json::parse(r.out)["error"]["type"] == "input");
    }
    SUBCASE("unknown preset") {
        RunResult r = run_cli("build --preset quadruple_well --out " + at("none.json"));
        CHECK(r.code == 4);
        CHECK(json::parse(r.out)["error"]["type"] == "input");
    }
    SUBCASE("missing required option") {
        RunResult r = run_cli("build --preset double_well");
        CHECK(r.code == 4);
        CHECK(json::parse(r.out)["error"]["type"] == "input");
    }
}

TEST_CASE("cli hit matches the in-process solver") {
    ChainModel chain = io::load_chain(chain_file());
    StateSet I = StateSet::single(4, chain.n);
    StateSet J = StateSet::single(12, chain.n);

    SUBCASE("transform at fixed u") {
        RunResult r = run_cli("hit --chain " + chain_file() + " --target 4 --avoid 12 --u -0.1");
        REQUIRE(r.code == 0);
        json j = json::parse(r.out);
        CHECK(j["solution"]["kind"] == "laplace");
        HittingSolution sol = laplace_transform(chain, I, J, std::complex<double>(-0.1, 0.0));
        Eigen::VectorXd vals = sol.real_values();
        REQUIRE(j["solution"]["values"].size() == static_cast<size_t>(chain.n));
        for (int x = 0; x < chain.n; ++x)
            CHECK(j["solution"]["values"][static_cast<size_t>(x)].get<double>() ==
                  doctest::Approx(vals(x)).epsilon(1e-13));
        CHECK(io::num_from(j["solution"]["residual"]) <= 1e-10);
    }

    SUBCASE("default run is the hitting probability") {
        RunResult r = run_cli("hit --chain " + chain_file() + " --target 4 --avoid 12");
        REQUIRE(r.code == 0);
        json j = json::parse(r.out);
        CHECK(j["solution"]["kind"] == "probability");
        Eigen::VectorXd vals = hitting_probability(chain, I, J).real_values();
        CHECK(j["solution"]["values"][4].get<double>() == 1.0);
        CHECK(j["solution"]["values"][12].get<double>() == 0.0);
        for (int x = 0; x < chain.n; ++x)
            CHECK(j["solution"]["values"][static_cast<size_t>(x)].get<double>() ==
                  doctest::Approx(vals(x)).epsilon(1e-13));
    }

    SUBCASE("states can be given by label") {
        RunResult by_index = run_cli("hit --chain " + chain_file() + " --target 4 --avoid 12");
        RunResult by_label = run_cli("hit --chain " + chain_file() + " --target 0.25 --avoid 0.75");
        REQUIRE(by_index.code == 0);
        REQUIRE(by_label.code == 0);
        CHECK(json::parse(by_index.out)["solution"]["values"] ==
              json::parse(by_label.out)["solution"]["values"]);
    }
}

TEST_CASE("cli maps failures onto exit codes") {
    SUBCASE("transform argument beyond the abscissa") {
        RunResult r = run_cli("hit --chain " + chain_file() + " --target 4 --avoid 12 --u 9.9");
        CHECK(r.code == 3);
        CHECK(json::parse(r.out)["error"]["type"] == "domain");
    }
    SUBCASE("missing chain file") {
        RunResult r = run_cli("hit --chain " + at("nosuch.json") + " --target 4");
        CHECK(r.code == 4);
        CHECK(json::parse(r.out)["error"]["type"] == "input");
    }
    SUBCASE("malformed chain file") {
        io::write_file(at("broken.json"), "not json{\n");
        RunResult r = run_cli("hit --chain " + at("broken.json") + " --target 4");
        CHECK(r.code == 4);
        CHECK(json::parse(r.out)["error"]["type"] == "input");
    }
    SUBCASE("unknown state token") {
        RunResult r = run_cli("hit --chain " + chain_file() + " --target zz");
        CHECK(r.code == 4);
        CHECK(json::parse(r.out)["error"]["type"] == "input");
    }
    SUBCASE("csv export needs a verify hierarchy") {
        RunResult r = run_cli("spectrum --chain " + chain_file() + " --csv " + at("no.csv"));
        CHECK(r.code == 4);
    }
    SUBCASE("eigenvalue count must be positive") {
        RunResult r = run_cli("spectrum --chain " + chain_file() + " --k 0");
        CHECK(r.code == 4);
    }
    SUBCASE("exit start inside the target") {
        RunResult r = run_cli("exitlaw --chain " + chain_file() + " --from 4 --target 4");
        CHECK(r.code == 4);
    }
    SUBCASE("missing required flag is an input error") {
        RunResult r = run_cli("hit --chain " + chain_file());
        CHECK(r.code == 4);
        CHECK(json::parse(r.out)["error"]["type"] == "input");
    }
}

TEST_CASE("cli analyze reports the hierarchy and writes capacity tables") {
    RunResult r = run_cli("analyze --chain " + chain_file() +
                          " --metastable 4,12 --csv " + at("cap"));
    REQUIRE(r.code == 0);
    json j = json::parse(r.out);
    CHECK(j["hierarchy"]["order"] == json::array({4, 12}));
    CHECK(j["hierarchy"]["T"][0] == "inf");
    CHECK(io::num_from(j["metastable"]["separation"]) < 0.5);
    io::write_file(at("an_good.json"), r.out);

    CHECK(first_line(at("cap_E.csv")) == "state,0.25,0.75");
    CHECK(count_lines(at("cap_E.csv")) == 3);
    CHECK(count_lines(at("cap_e.csv")) == 3);

    // Off-diagonal of the capacity CSV equals the in-process value.
    ChainModel chain = io::load_chain(chain_file());
    CapacityTable caps = capacities(chain, StateSet({4, 12}, chain.n));
    std::ifstream in(at("cap_E.csv"));
    std::string line;
    std::getline(in, line);
    std::getline(in, line);
    double cell = std::stod(line.substr(line.find_last_of(',') + 1));
    CHECK(cell == doctest::Approx(caps.E(0, 1)).epsilon(1e-13));
}

TEST_CASE("cli analyze signals weak separation with the soft exit code") {
    RunResult r = run_cli("analyze --chain " + chain_file() + " --metastable 4,5");
    CHECK(r.code == 2);
    json j = json::parse(r.out);
    CHECK(io::num_from(j["metastable"]["separation"]) >= 0.5);
}

TEST_CASE("cli analyze reports ties as degeneracy failures") {
    std::string sym = at("sym16.json");
    RunResult b = run_cli(
        "build --preset double_well --d 1 --N 16 --param barrier=0.16 --param tilt=0.0 --out " +
        sym);
    REQUIRE(b.code == 0);
    RunResult r = run_cli("analyze --chain " + sym + " --metastable 4,12");
    CHECK(r.code == 3);
    CHECK(json::parse(r.out)["error"]["type"] == "degeneracy");
}

TEST_CASE("cli spectrum verifies a hierarchy produced by analyze") {
    // Depends on the analyze test above having written an_good.json; rebuild
    // it here if that order ever changes.
    if (!std::filesystem::exists(at("an_good.json"))) {
        RunResult an = run_cli("analyze --chain " + chain_file() + " --metastable 4,12");
        REQUIRE(an.code == 0);
        io::write_file(at("an_good.json"), an.out);
    }
    RunResult r = run_cli("spectrum --chain " + chain_file() + " --verify " + at("an_good.json") +
                          " --csv " + at("det.csv"));
    REQUIRE(r.code == 0);
    json j = json::parse(r.out);
    REQUIRE(j["checks"].size() == 8);
    for (const auto& row : j["checks"]) CHECK(row["pass"] == true);
    CHECK(j["summary"]["pass"] == true);
    CHECK(first_line(at("det.csv")) == "u,det");
    CHECK(count_lines(at("det.csv")) == 258);
}

TEST_CASE("cli spectrum matches the in-process eigenvalues") {
    RunResult r = run_cli("spectrum --chain " + chain_file() + " --k 3");
    REQUIRE(r.code == 0);
    json j = json::parse(r.out);
    ChainModel chain = io::load_chain(chain_file());
    SpectralReport sr = dirichlet_spectrum(chain, StateSet::empty(chain.n), 3);
    REQUIRE(j["spectrum"]["eigenvalues"].size() == 3);
    for (int i = 0; i < 3; ++i)
        CHECK(io::num_from(j["spectrum"]["eigenvalues"][static_cast<size_t>(i)]) ==
              doctest::Approx(sr.eigenvalues[static_cast<size_t>(i)]).epsilon(1e-12));
}

TEST_CASE("cli exitlaw samples deterministically and reconstructs the law") {
    std::string cmd = "exitlaw --chain " + chain_file() +
                      " --from 12 --target 4 --auto 2 --mc 20000 --seed 42";
    RunResult r = run_cli(cmd + " --csv " + at("el.csv"));
    REQUIRE(r.code == 0);
    json j = json::parse(r.out);
    CHECK(j["mc"]["within_band"] == true);
    CHECK(io::num_from(j["mc"]["ks"]) < io::num_from(j["mc"]["band"]));
    CHECK(j["mc"]["aborted"] == false);
    CHECK(io::num_from(j["mean"]["rel_gap"]) <= 1e-10);
    CHECK(j["residues"]["j0"] == 1);
    CHECK(first_line(at("el.csv")) == "t,survival,reconstruction");
    CHECK(count_lines(at("el.csv")) == j["survival"]["length"].get<int>() + 1);

    SUBCASE("same seed, same bytes") {
        RunResult again = run_cli(cmd + " --csv " + at("el.csv"));
        CHECK(again.code == 0);
        CHECK(again.out == r.out);
    }
    SUBCASE("sample stream does not depend on the worker count") {
        RunResult split = run_cli(cmd + " --jobs 3");
        REQUIRE(split.code == 0);
        CHECK(json::parse(split.out)["mc"] == j["mc"]);
    }
    SUBCASE("another seed moves the statistic") {
        RunResult other = run_cli("exitlaw --chain " + chain_file() +
                                  " --from 12 --target 4 --mc 20000 --seed 43");
        REQUIRE(other.code == 0);
        CHECK(json::parse(other.out)["mc"]["ks"] != j["mc"]["ks"]);
    }
}

TEST_CASE("cli exitlaw honors the worker environment variable") {
    ::setenv("METASPEC_JOBS", "3", 1);
    RunResult r = run_cli("exitlaw --chain " + chain_file() + " --from 12 --target 4");
    ::unsetenv("METASPEC_JOBS");
    REQUIRE(r.code == 0);
    CHECK(json::parse(r.out)["config"]["jobs"] == 3);
}

TEST_CASE("cli exitlaw accepts a hierarchy file when exclusions line up") {
    ChainModel chain = io::load_chain(chain_file());
    StateSet M({4, 12}, chain.n);
    StateSet I0 = StateSet::single(4, chain.n);
    Hierarchy h = build_hierarchy(chain, M, I0);
    io::write_file(at("hier4.json"), io::canonical_dump(io::describe(h, chain)));

    RunResult ok = run_cli("exitlaw --chain " + chain_file() +
                           " --from 12 --target 4 --hierarchy " + at("hier4.json"));
    REQUIRE(ok.code == 0);
    json j = json::parse(ok.out);
    CHECK(j["residues"]["j0"] == h.depth());

    // A hierarchy whose exclusion set differs from the exit target is refused.
    Hierarchy plain = build_hierarchy(chain, M, StateSet::empty(chain.n));
    io::write_file(at("hier0.json"), io::canonical_dump(io::describe(plain, chain)));
    RunResult bad = run_cli("exitlaw --chain " + chain_file() +
                            " --from 12 --target 4 --hierarchy " + at("hier0.json"));
    CHECK(bad.code == 4);
}

TEST_CASE("cli verify passes its matrix and reruns byte-identically") {
    std::string cmd =
        "verify --chain " + chain_file() + " --metastable 4,12 --mc 3000 --seed 7";
    RunResult r = run_cli(cmd);
    REQUIRE(r.code == 0);
    json j = json::parse(r.out);
    CHECK(j["checks"].size() >= 30);
    for (const auto& row : j["checks"]) CHECK(row["pass"] == true);
    CHECK(j["summary"]["pass"] == true);
    CHECK(j["summary"]["hard_failures"] == 0);
    CHECK(j["summary"]["soft_failures"] == 0);

    RunResult again = run_cli(cmd);
    CHECK(again.code == 0);
    CHECK(again.out == r.out);
}
