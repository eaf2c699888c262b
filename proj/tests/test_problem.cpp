#include <doctest.h>

#include <nlohmann/json.hpp>

#include "homlab/error.hpp"
#include "homlab/harness.hpp"
#include "homlab/problem.hpp"

using namespace homlab;
using nlohmann::json;

namespace {

json linear_1d() {
    return json{{"dim", 1},
                {"sigma", {{"1"}}},
                {"b", {"0"}},
                {"c", {"0"}},
                {"domain", {{"shape", "interval"}, {"bounds", {1.0, 2.0}}}},
                {"f", "-u"},
                {"g", "-u"},
                {"l", "x1"},
                {"h", "x1 - 1 - t"},
                {"mu", -1.0},
                {"beta", -1.0},
                {"growth_C", 1.0},
                {"growth_p", 1.0},
                {"lambda_min", 1.0}};
}

ErrorKind load_kind(const json& j) {
    try {
        load_problem(j);
    } catch (const Error& e) {
        return e.kind();
    }
    FAIL("load succeeded");
    return ErrorKind::IoError;
}

const AssumptionCheck& check(const ValidationReport& r, const std::string& name) {
    for (const auto& c : r.checks)
        if (c.name == name) return c;
    FAIL("missing check " << name);
    return r.checks.front();
}

}  // namespace

TEST_CASE("gibbs1d loads from file and built-in") {
    const TwoScaleProblem p = load_problem_file(HOMLAB_CONFIG_DIR "/gibbs1d.json");
    CHECK(p.dim == 1);
    CHECK(p.beta == -1.0);
    CHECK(p.domain.radius() == 0.5);
    const TwoScaleProblem q = builtin_problem("gibbs1d");
    CHECK(q.b[0] == p.b[0]);
    CHECK(q.h == p.h);
    CHECK_FALSE(q.fast_drift_vanishes());
    CHECK(q.coefficients_x_independent());
}

TEST_CASE("schema errors") {
    json j = linear_1d();
    j["beta"] = 0.1;
    CHECK(load_kind(j) == ErrorKind::NonNegativeBeta);
    j = linear_1d();
    j["sigma"] = json::array({json::array({"1", "0"}), json::array({"0", "1"})});
    CHECK(load_kind(j) == ErrorKind::DimensionMismatch);
    j = linear_1d();
    j.erase("f");
    CHECK(load_kind(j) == ErrorKind::SchemaError);
    j = linear_1d();
    j["growth_p"] = 0.5;
    CHECK(load_kind(j) == ErrorKind::SchemaError);
    j = linear_1d();
    j["domain"] = {{"shape", "box"}};
    CHECK(load_kind(j) == ErrorKind::SchemaError);
}

TEST_CASE("parse errors carry the field path") {
    json j = linear_1d();
    j["b"] = {"sin(2*pi*y1"};
    try {
        load_problem(j);
        FAIL("expected failure");
    } catch (const FieldError& e) {
        CHECK(e.kind() == ErrorKind::ParseError);
        CHECK(e.field() == "b[0]");
        CHECK(e.cause() == ErrorKind::UnexpectedToken);
    }
    j = linear_1d();
    j["f"] = "-u + y1";
    CHECK(load_kind(j) == ErrorKind::ParseError);
    j = linear_1d();
    j["l"] = "x1 + u";
    CHECK(load_kind(j) == ErrorKind::ParseError);
}

TEST_CASE("problem json round trip") {
    const TwoScaleProblem p = builtin_problem("gibbs1d");
    const TwoScaleProblem q = load_problem(problem_to_json(p));
    CHECK(q.f == p.f);
    CHECK(q.sigma[0][0] == p.sigma[0][0]);
    CHECK(q.growth_C == p.growth_C);
}

TEST_CASE("linear monotone data pass every check") {
    const ValidationReport r = validate_assumptions(load_problem(linear_1d()), 10000, 1);
    for (const auto& c : r.checks) CHECK_MESSAGE(c.passed, c.name);
    CHECK(r.passed());
}

TEST_CASE("quadratic f violates declared monotonicity") {
    json j = linear_1d();
    j["f"] = "u^2";
    j["mu"] = 0.0;
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        const ValidationReport r = validate_assumptions(load_problem(j), 10000, seed);
        CHECK_FALSE(check(r, "f monotonicity").passed);
        CHECK(r.f_monotonicity_defect > 0.0);
        CHECK(check(r, "g monotonicity").passed);
    }
}

TEST_CASE("degenerate sigma violates ellipticity") {
    json j = linear_1d();
    j["sigma"] = {{"y1"}};
    j["lambda_min"] = 0.01;
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        const ValidationReport r = validate_assumptions(load_problem(j), 10000, seed);
        CHECK_FALSE(check(r, "ellipticity").passed);
    }
}

TEST_CASE("non periodic coefficient is flagged") {
    json j = linear_1d();
    j["c"] = {"y1"};
    const ValidationReport r = validate_assumptions(load_problem(j), 2000, 4);
    CHECK_FALSE(check(r, "periodicity").passed);
}

TEST_CASE("obstacle above terminal value is flagged") {
    json j = linear_1d();
    j["h"] = "x1 + 0.5";
    const ValidationReport r = validate_assumptions(load_problem(j), 2000, 4);
    CHECK_FALSE(check(r, "obstacle below terminal").passed);
}

TEST_CASE("validation is deterministic given the seed") {
    const TwoScaleProblem p = builtin_problem("gibbs1d");
    const json a = to_json(validate_assumptions(p, 3000, 9));
    const json b = to_json(validate_assumptions(p, 3000, 9));
    CHECK(a.dump() == b.dump());
    const ValidationReport r = validate_assumptions(p, 10000, 9);
    CHECK(r.passed());
}
