#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "mapexit/cli.hpp"

namespace {

struct Run {
    int code;
    std::string out, err;
};

Run run(std::vector<std::string> args) {
    args.insert(args.begin(), "mapexit");
    std::vector<char*> argv;
    for (auto& a : args) argv.push_back(a.data());
    std::ostringstream out, err;
    const int code = mapexit::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

std::string model(const std::string& name) { return std::string(MAPEXIT_MODELS_DIR) + "/" + name; }

std::string temp_model(const std::string& name, const std::string& text) {
    const auto path = std::filesystem::temp_directory_path() / name;
    std::ofstream(path) << text;
    return path.string();
}

}  // namespace

TEST_CASE("gambler's ruin through the command line") {
    const Run r = run({"exit", model("brownian.json"), "two-sided-up", "--a", "1", "--b", "1"});
    CHECK(r.code == 0);
    CHECK(r.out == "row_phase,col_phase,value\n0,0,0.5\n");
}

TEST_CASE("Z at x = 0 is the identity") {
    const Run r = run({"zmatrix", model("canonical.json"), "--alpha", "1", "--x", "0"});
    CHECK(r.code == 0);
    CHECK(r.out == "x,row_phase,col_phase,value\n0,0,0,1\n0,0,1,0\n0,1,0,0\n0,1,1,1\n");
}

TEST_CASE("scale grid output") {
    const Run r = run({"scale", model("brownian.json"), "--x", "0:2:3"});
    CHECK(r.code == 0);
    std::istringstream lines(r.out);
    std::string line;
    std::getline(lines, line);
    CHECK(line == "x,row_phase,col_phase,value");
    for (double x : {0.0, 1.0, 2.0}) {
        REQUIRE(std::getline(lines, line));
        double xv = 0, v = 0;
        int i = -1, j = -1;
        REQUIRE(std::sscanf(line.c_str(), "%lf,%d,%d,%lf", &xv, &i, &j, &v) == 4);
        CHECK(xv == x);
        CHECK(i == 0);
        CHECK(j == 0);
        CHECK(v == doctest::Approx(x).epsilon(1e-12));
    }
    const Run j = run({"scale", model("canonical_killed.json"), "--x", "0.5,1", "--kind", "L", "--format", "json"});
    CHECK(j.code == 0);
    const auto doc = nlohmann::json::parse(j.out);
    REQUIRE(doc.size() == 2);
    CHECK(doc[1]["x"] == 1.0);
    CHECK(doc[1]["value"].size() == 2);
    CHECK(run({"scale", model("brownian.json"), "--x", "1", "--kind", "bogus"}).code == 1);
    CHECK(run({"scale", model("brownian.json"), "--x", "a:b"}).code == 1);
}

TEST_CASE("output is byte-for-byte reproducible") {
    const std::vector<std::string> args{"exit", model("risk_two_regime.json"), "reflected-down", "--theta", "0.5",
                                        "--alpha", "1", "--x", "0.2", "--a", "1"};
    const Run a = run(args), b = run(args);
    CHECK(a.code == 0);
    CHECK(a.out == b.out);
    const std::vector<std::string> sim{"simulate", model("canonical.json"), "two-sided-up", "--a", "1", "--b", "1",
                                       "--paths", "500", "--threads", "3"};
    const Run s1 = run(sim), s2 = run(sim);
    CHECK(s1.code == 0);
    CHECK(s1.out == s2.out);
}

TEST_CASE("validate, spectrum and lambda") {
    const Run v = run({"validate", model("canonical.json")});
    CHECK(v.code == 0);
    CHECK(v.out.find("valid: 2 phases") == 0);
    const Run s = run({"spectrum", model("canonical.json"), "--format", "json"});
    CHECK(s.code == 0);
    const auto doc = nlohmann::json::parse(s.out);
    CHECK(doc["roots"].size() == 4);
    CHECK(doc["drift"] == -0.5);
    const Run l = run({"lambda", model("canonical_killed.json")});
    CHECK(l.code == 0);
    CHECK(l.out.rfind("row_phase,col_phase,value\n", 0) == 0);
}

TEST_CASE("every exit identity is reachable") {
    const std::string m = model("canonical_killed.json");
    const std::vector<std::vector<std::string>> calls{
        {"first-up", "--a", "1"},
        {"reflected-up", "--alpha", "1", "--x", "0", "--a", "1"},
        {"two-sided-down", "--alpha", "1", "--x", "0.5", "--a", "1"},
        {"first-down", "--alpha", "1", "--x", "0.5"},
        {"first-down", "--alpha", "0", "--x", "0.5", "--side", "left"},
        {"reflected-down", "--theta", "1", "--alpha", "1", "--x", "0", "--a", "1"},
        {"excursion", "--a", "1"},
        {"first-excursion", "--theta", "0", "--alpha", "1", "--a", "1"},
    };
    for (auto c : calls) {
        c.insert(c.begin(), {"exit", m});
        const Run r = run(c);
        CAPTURE(c[2]);
        CHECK(r.code == 0);
        CHECK(r.out.rfind("row_phase,col_phase,value\n", 0) == 0);
    }
    const Run t = run({"exit", m, "two-sided-reflection", "--alpha", "1", "--a", "1", "--x", "-0.5"});
    CHECK(t.code == 0);
    CHECK(t.out.rfind("matrix,row_phase,col_phase,value\nFstar,0,0,", 0) == 0);
}

TEST_CASE("simulation output") {
    const Run r = run({"simulate", model("brownian.json"), "two-sided-up", "--a", "1", "--b", "1", "--paths", "2000",
                       "--seed", "3"});
    CHECK(r.code == 0);
    const auto doc = nlohmann::json::parse(r.out);
    CHECK(doc["n_paths"] == 2000);
    CHECK(doc["seed"] == 3);
    CHECK(doc["dt"] == 1e-3);
    CHECK(doc["censored"] == 0);
    const double mean = doc["mean"][0][0], se = doc["stderr"][0][0];
    CHECK(std::abs(mean - 0.5) < 4 * se);

    const Run c = run({"simulate", model("brownian.json"), "first-up", "--a", "1", "--paths", "100", "--kill", "1",
                       "--format", "csv"});
    CHECK(c.code == 0);
    CHECK(c.out.rfind("row_phase,col_phase,value,stderr\n0,0,", 0) == 0);

    const Run o = run({"simulate", model("brownian.json"), "occupation", "--x", "1", "--eps", "0.1", "--paths", "200",
                       "--kill", "1"});
    CHECK(o.code == 0);
}

TEST_CASE("verify on the canonical model") {
    const auto report = (std::filesystem::temp_directory_path() / "mapexit_verify.json").string();
    const Run r = run({"verify", model("canonical.json"), "--paths", "4000", "--report", report});
    CHECK(r.code == 0);
    std::ifstream f(report);
    const auto doc = nlohmann::json::parse(f);
    CHECK(doc["summary"]["failed"] == 0);
    CHECK(doc["summary"]["passed"].get<int>() > 5);
    const Run a = run({"verify", model("risk_two_regime.json"), "--no-mc"});
    CHECK(a.code == 0);
}

TEST_CASE("exit codes") {
    SUBCASE("usage") {
        CHECK(run({}).code == 1);
        CHECK(run({"exit", model("brownian.json"), "two-sided-up", "--a", "1"}).code == 1);
        CHECK(run({"exit", model("brownian.json"), "no-such-identity"}).code == 1);
        CHECK(run({"bogus"}).code == 1);
        CHECK(run({"exit", model("brownian.json"), "reflected-up", "--alpha", "1", "--x", "2", "--a", "1"}).code == 1);
    }
    SUBCASE("invalid model") {
        const auto bad = temp_model("mapexit_bad.json",
                                    R"({"states": 2, "Q": [[-1, 2], [1, -1]], "phases": [{"drift": 1, "sigma": 1}, {"drift": 1, "sigma": 1}]})");
        const Run r = run({"validate", bad});
        CHECK(r.code == 2);
        CHECK(r.err.find("row sum must be <= 0") != std::string::npos);
        CHECK(run({"lambda", bad}).code == 2);
        const auto unknown = temp_model("mapexit_unknown.json",
                                        R"({"states": 1, "Q": [[0]], "phases": [{"drift": 1, "sigma": 1}], "colour": 1})");
        CHECK(run({"validate", unknown}).code == 2);
        CHECK(run({"validate", "/nonexistent/model.json"}).code == 1);
    }
    SUBCASE("numerical") {
        const Run r = run({"exit", model("brownian.json"), "first-down", "--alpha", "1", "--x", "1"});
        CHECK(r.code == 3);
        CHECK(r.err.find("recurrent") != std::string::npos);
    }
}
