#pragma once

#include <cstdint>
#include <fstream>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "mgsms/core.hpp"

namespace mgsms {

/// Latin hypercube sample of n points over the rectangle [lo, hi].
/// Each axis is split into n equal strata; every stratum holds exactly one
/// point, jittered uniformly inside it, and the two axes are paired through
/// independent random permutations. Fully deterministic for a given seed.
inline std::vector<Vec2> latin_hypercube(int n, Vec2 lo, Vec2 hi, std::uint64_t seed) {
    require(n >= 1, "latin_hypercube: n must be >= 1");
    require(hi.x() > lo.x() && hi.y() > lo.y(), "latin_hypercube: degenerate domain");

    std::mt19937_64 rng(splitmix64(seed));
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    std::vector<int> perm_x(n), perm_y(n);
    std::iota(perm_x.begin(), perm_x.end(), 0);
    std::iota(perm_y.begin(), perm_y.end(), 0);
    std::shuffle(perm_x.begin(), perm_x.end(), rng);
    std::shuffle(perm_y.begin(), perm_y.end(), rng);

    std::vector<Vec2> pts(n);
    for (int i = 0; i < n; ++i) {
        double fx = (perm_x[i] + unit(rng)) / n;
        double fy = (perm_y[i] + unit(rng)) / n;
        pts[i] = Vec2(lo.x() + fx * (hi.x() - lo.x()), lo.y() + fy * (hi.y() - lo.y()));
    }
    return pts;
}

/// One stratification check: true when every one of the n strata on each
/// axis contains exactly one point.
inline bool is_stratified(const std::vector<Vec2>& pts, Vec2 lo, Vec2 hi) {
    int n = static_cast<int>(pts.size());
    std::vector<int> occ_x(n, 0), occ_y(n, 0);
    for (const Vec2& p : pts) {
        double fx = (p.x() - lo.x()) / (hi.x() - lo.x());
        double fy = (p.y() - lo.y()) / (hi.y() - lo.y());
        if (fx < 0.0 || fx >= 1.0 || fy < 0.0 || fy >= 1.0) return false;
        occ_x[static_cast<int>(fx * n)]++;
        occ_y[static_cast<int>(fy * n)]++;
    }
    for (int i = 0; i < n; ++i)
        if (occ_x[i] != 1 || occ_y[i] != 1) return false;
    return true;
}

struct SamplePlan {
    Vec2 lo{0.0, 0.0};
    Vec2 hi{1.0, 1.0};
    std::uint64_t seed = 0;
    std::vector<Vec2> points;
};

inline SamplePlan make_sample_plan(int n, Vec2 lo, Vec2 hi, std::uint64_t seed) {
    SamplePlan plan;
    plan.lo = lo;
    plan.hi = hi;
    plan.seed = seed;
    plan.points = latin_hypercube(n, lo, hi, seed);
    return plan;
}

inline void write_plan_csv(const SamplePlan& plan, const std::string& path) {
    std::ofstream f(path);
    if (!f) fail("cannot open %s for writing", path.c_str());
    f << format("# domain,%.17g,%.17g,%.17g,%.17g,seed,%llu\n", plan.lo.x(), plan.lo.y(),
                plan.hi.x(), plan.hi.y(), static_cast<unsigned long long>(plan.seed));
    f << "sample_id,x,y\n";
    for (size_t i = 0; i < plan.points.size(); ++i)
        f << format("%zu,%.17g,%.17g\n", i, plan.points[i].x(), plan.points[i].y());
    if (!f) fail("write failed: %s", path.c_str());
}

inline SamplePlan read_plan_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) fail("cannot open %s", path.c_str());
    SamplePlan plan;
    std::string line;
    if (!std::getline(f, line)) fail("empty plan file: %s", path.c_str());
    unsigned long long seed = 0;
    double lx, ly, hx, hy;
    if (std::sscanf(line.c_str(), "# domain,%lf,%lf,%lf,%lf,seed,%llu", &lx, &ly, &hx, &hy,
                    &seed) != 5)
        fail("malformed plan header in %s", path.c_str());
    plan.lo = Vec2(lx, ly);
    plan.hi = Vec2(hx, hy);
    plan.seed = seed;
    std::getline(f, line);  // column names
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        size_t id;
        double x, y;
        if (std::sscanf(line.c_str(), "%zu,%lf,%lf", &id, &x, &y) != 3)
            fail("malformed plan row in %s: %s", path.c_str(), line.c_str());
        require(id == plan.points.size(), "plan rows out of order");
        plan.points.emplace_back(x, y);
    }
    return plan;
}

}  // namespace mgsms
