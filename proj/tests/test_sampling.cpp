#include <catch2/catch_amalgamated.hpp>

#include <cstdio>

#include "mgsms/sampling.hpp"

using namespace mgsms;

TEST_CASE("latin hypercube fills every stratum exactly once", "[sampling]") {
    Vec2 lo(2.0, -1.0), hi(5.0, 4.0);
    for (std::uint64_t seed : {1ull, 77ull, 123456789ull}) {
        auto pts = latin_hypercube(50, lo, hi, seed);
        REQUIRE(pts.size() == 50);
        CHECK(is_stratified(pts, lo, hi));
        for (const Vec2& p : pts) {
            CHECK(p.x() >= lo.x());
            CHECK(p.x() < hi.x());
            CHECK(p.y() >= lo.y());
            CHECK(p.y() < hi.y());
        }
    }
}

TEST_CASE("latin hypercube is seed-deterministic", "[sampling]") {
    Vec2 lo(0, 0), hi(1, 1);
    auto a = latin_hypercube(20, lo, hi, 42);
    auto b = latin_hypercube(20, lo, hi, 42);
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].x() == b[i].x());
        CHECK(a[i].y() == b[i].y());
    }
    auto c = latin_hypercube(20, lo, hi, 43);
    bool any_diff = false;
    for (size_t i = 0; i < a.size(); ++i)
        if (a[i] != c[i]) any_diff = true;
    CHECK(any_diff);
}

TEST_CASE("single-point sample lands in the domain", "[sampling]") {
    auto pts = latin_hypercube(1, Vec2(10, 10), Vec2(11, 12), 5);
    REQUIRE(pts.size() == 1);
    CHECK(pts[0].x() >= 10.0);
    CHECK(pts[0].x() < 11.0);
    CHECK(pts[0].y() >= 10.0);
    CHECK(pts[0].y() < 12.0);
}

TEST_CASE("invalid sampling arguments are rejected", "[sampling]") {
    CHECK_THROWS_AS(latin_hypercube(0, Vec2(0, 0), Vec2(1, 1), 1), Error);
    CHECK_THROWS_AS(latin_hypercube(5, Vec2(0, 0), Vec2(0, 1), 1), Error);
}

TEST_CASE("sample plan CSV round-trips", "[sampling]") {
    SamplePlan plan = make_sample_plan(12, Vec2(0.5, 0.25), Vec2(3.5, 9.0), 99);
    std::string path = "plan_roundtrip_test.csv";
    write_plan_csv(plan, path);
    SamplePlan back = read_plan_csv(path);
    std::remove(path.c_str());

    CHECK(back.seed == plan.seed);
    CHECK(back.lo == plan.lo);
    CHECK(back.hi == plan.hi);
    REQUIRE(back.points.size() == plan.points.size());
    for (size_t i = 0; i < plan.points.size(); ++i) {
        CHECK(back.points[i].x() == plan.points[i].x());
        CHECK(back.points[i].y() == plan.points[i].y());
    }
}
