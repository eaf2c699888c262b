#include <doctest.h>

#include <cmath>
#include <random>

#include "homlab/error.hpp"
#include "homlab/geometry.hpp"

using namespace homlab;

namespace {
Vec v2(double a, double b) {
    Vec v(2);
    v << a, b;
    return v;
}
const ConvexDomain unit(Vec::Zero(2), 1.0);
}  // namespace

TEST_CASE("psi on the unit disc") {
    CHECK(unit.psi(v2(0, 0)) == 1.0);
    CHECK(std::fabs(unit.psi(v2(0.6, 0.8))) <= 1e-15);
    CHECK(unit.psi(v2(1.5, 0)) == -0.5);
}

TEST_CASE("grad psi") {
    CHECK((unit.grad_psi(v2(1, 0)) - v2(-1, 0)).norm() <= 1e-15);
    CHECK((unit.grad_psi(v2(0.6, 0.8)) - v2(-0.6, -0.8)).norm() <= 1e-15);
    CHECK_THROWS_AS(unit.grad_psi(v2(0, 0)), Error);
    try {
        unit.grad_psi(v2(0, 0));
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::DegeneratePoint);
    }
}

TEST_CASE("delta is the gradient of the squared exterior distance") {
    CHECK(unit.delta(v2(0.5, 0)).norm() == 0.0);
    CHECK((unit.delta(v2(2, 0)) - v2(2, 0)).norm() <= 1e-15);
    CHECK((unit.delta(v2(0, -3)) - v2(0, -4)).norm() <= 1e-15);
    CHECK(unit.delta(v2(0, 0)).norm() == 0.0);
}

TEST_CASE("projection examples") {
    auto [p1, d1] = unit.project(v2(0.3, 0.4));
    CHECK((p1 - v2(0.3, 0.4)).norm() == 0.0);
    CHECK(d1 == 0.0);
    auto [p2, d2] = unit.project(v2(1.5, 0));
    CHECK((p2 - v2(1, 0)).norm() <= 1e-15);
    CHECK(d2 == 0.5);
    auto [p3, d3] = unit.project(v2(3, 4));
    CHECK((p3 - v2(0.6, 0.8)).norm() <= 1e-15);
    CHECK(d3 == 4.0);
}

TEST_CASE("interval is the one-dimensional ball") {
    const ConvexDomain iv = ConvexDomain::interval(0.0, 1.0);
    CHECK(iv.dim() == 1);
    CHECK(iv.center()[0] == 0.5);
    CHECK(iv.radius() == 0.5);
    Vec x(1);
    x[0] = 1.3;
    auto [p, d] = iv.project(x);
    CHECK(p[0] == 1.0);
    CHECK(std::fabs(d - 0.3) <= 1e-15);
    x[0] = 0.0;
    CHECK(iv.grad_psi(x)[0] == 1.0);
}

TEST_CASE("sampled geometric invariants") {
    std::mt19937_64 rng(3);
    const ConvexDomain dom(v2(0.2, -0.1), 0.7);
    std::uniform_real_distribution<double> U(-2.5, 2.5);
    for (int i = 0; i < 10000; ++i) {
        const Vec x = v2(U(rng), U(rng));
        const auto [px, dist] = dom.project(x);
        if ((x - dom.center()).norm() > 1e-12) {
            const Vec g = dom.grad_psi(x);
            CHECK(g.dot(dom.delta(x)) <= 0.0);
            CHECK(std::fabs(g.norm() - 1.0) <= 1e-12);
        }
        if (!dom.contains(x)) CHECK(std::fabs(dom.rho(x) - dist * dist) <= 1e-12);
        const auto [pp, d2] = dom.project(px);
        CHECK((pp - px).norm() <= 1e-15);
        CHECK(d2 == 0.0);
        std::vector<double> buf(px.data(), px.data() + 2);
        CHECK(dom.project_in_place(buf) == 0.0);
    }
}
