#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include <henonlab/core_maps.hpp>
#include <henonlab/one_dim.hpp>

using namespace henon;

TEST_CASE("partition geometry") {
    CriticalPartition P = build_partition(3);
    Interval I30 = CriticalPartition::cell_interval(3, 0);
    CHECK(I30.lo == doctest::Approx(std::exp(-4.0)));
    double width = std::exp(-3.0) - std::exp(-4.0);
    CHECK(width == doctest::Approx(0.031471).epsilon(1e-4));
    CHECK(I30.length() == doctest::Approx(0.0034968).epsilon(1e-4));

    CellLocation L = P.locate(0.04);
    CHECK(L.kind == CellLocation::Cell);
    CHECK(L.m == 3);
    int j = static_cast<int>(std::ceil((0.04 - std::exp(-4.0)) / (width / 9))) - 1;
    CHECK(L.j == j);
    CHECK(L.interval.lo < 0.04);
    CHECK(L.interval.hi >= 0.04);
    CHECK(P.locate(-0.5).kind == CellLocation::OuterLeft);
    CHECK(P.locate(0.5).kind == CellLocation::OuterRight);
    CHECK(P.locate(-0.04).m == -3);
    CHECK(P.locate(0).kind == CellLocation::Critical);

    Interval J = I30.expanded(3);
    CHECK(J.length() == doctest::Approx(3 * I30.length()));
    CHECK(J.mid() == doctest::Approx(I30.mid()));
}

TEST_CASE("partition cells are disjoint, ordered and cover") {
    for (int D = 1; D <= 6; ++D) {
        CriticalPartition P = build_partition(D, D + 3);
        for (size_t i = 0; i + 1 < P.cells.size(); ++i) {
            const auto &a = P.cells[i].interval, &b = P.cells[i + 1].interval;
            CHECK(a.lo < a.hi);
            // contiguous except for the gap around 0 below the deepest materialized cell
            if (!(a.hi <= 0 && b.lo >= 0)) CHECK(a.hi == doctest::Approx(b.lo).epsilon(1e-14));
        }
        CHECK(P.cells.front().interval.lo == doctest::Approx(-P.delta));
        CHECK(P.cells.back().interval.hi == doctest::Approx(P.delta));
        for (int m = D; m <= D + 3; ++m) {
            int count = static_cast<int>(std::count_if(P.cells.begin(), P.cells.end(),
                                                       [&](auto& c) { return c.m == m; }));
            CHECK(count == m * m);
        }
        // every point resolves to a cell that contains it
        for (int k = 1; k < 2000; ++k) {
            double x = -1 + 2.0 * k / 2000;
            CellLocation L = P.locate(x);
            if (L.kind == CellLocation::Cell) {
                CHECK(L.interval.lo <= x + 1e-15);
                CHECK(x <= L.interval.hi + 1e-15);
            }
        }
    }
}

TEST_CASE("bound period") {
    CHECK(bound_period_1d(2, 0, 1.4e-5, 50) == 50);
    int p = bound_period_1d(2, std::exp(-4.0), 1.4e-5, 1000);
    // direct scan oracle
    double u = std::exp(-4.0), v = 0;
    int q = 0;
    while (std::abs(u - v) < std::exp(-1.4e-5 * q)) {
        u = 1 - 2 * u * u;
        v = 1 - 2 * v * v;
        ++q;
    }
    CHECK(p == q);
    CHECK(p == 7);
    CHECK(p >= 2);
    CHECK(p <= 12);

    // nearly constant on one I_{m,j}
    Interval cell = CriticalPartition::cell_interval(5, 7);
    int lo = 1 << 20, hi = 0;
    for (int i = 0; i < 16; ++i) {
        int pp = bound_period_1d(2, cell.lo + cell.length() * (i + 0.5) / 16, 1.4e-5, 1000);
        lo = std::min(lo, pp);
        hi = std::max(hi, pp);
    }
    CHECK(hi - lo <= 1);

    // monotone in |x| up to one step
    int prev = 1 << 20;
    for (int i = 1; i <= 200; ++i) {
        double x = 0.05 * i / 200;
        int pp = bound_period_1d(2, x, 1.4e-5, 1000);
        CHECK(pp <= prev + 1);
        prev = std::min(prev, pp);
    }
}

TEST_CASE("1-d BC conditions") {
    for (int N = 1; N <= 30; ++N) {
        BCReport r = check_bc_1d(2, std::numbers::ln2, 1e-6, N);
        CHECK(r.pass());
        CHECK(r.eg_margin >= 0);
        CHECK(r.ba_margin >= 0);
    }
    // a = 2 - 1e-9: the critical orbit drifts off -1 like 1e-9 4^n / 3
    BCReport r = check_bc_1d(2 - 1e-9, std::numbers::ln2, 1e-6, 25);
    CHECK(r.eg_pass);
    CHECK_FALSE(r.ba_pass);
    CHECK(r.ba_margin == doctest::Approx(-2.42628).epsilon(1e-4));
    CHECK(r.ba_worst_n == 23);

    // inside the period-3 window the expansion margin goes negative
    BCReport w = check_bc_1d(1.755, std::numbers::ln2, 1e-6, 25);
    CHECK(w.eg_margin < 0);
    CHECK(lyapunov_1d(1.755, 0.1, 100000) < 0);
}

TEST_CASE("SA / EE estimate") {
    double delta = std::exp(-3.0);
    DerivativeEstimate d = derivative_estimate_1d(2, 0.3, 20, delta, 1e-6, 0.3);
    // conjugacy oracle: x_j = cos(2^j theta)
    double th = std::acos(0.3);
    int first = -1;
    double logD = 0;
    for (int j = 0; j < 20; ++j) {
        double xj = std::cos(std::ldexp(th, j));
        if (first < 0 && std::abs(xj) < delta * std::exp(-1e-6 * j)) first = j;
        logD += std::log(4 * std::abs(xj));
    }
    CHECK(first == 13);
    CHECK(d.sa_holds == (first < 0));
    CHECK(d.first_sa_violation == first);
    CHECK(d.ee_margin == doctest::Approx(logD - std::log(delta) - 6).epsilon(1e-6));
    CHECK(d.ee_margin > 0);

    DerivativeEstimate f = derivative_estimate_1d(2, 0.5, 10, delta, 1e-6, 0.3);
    CHECK(f.sa_holds);
    CHECK(f.ee_margin == doctest::Approx(10 * (std::log(2.0) - 0.3) - std::log(delta)));

    DerivativeEstimate g = derivative_estimate_1d(2, 0.01, 5, delta, 1e-6, 0.3);
    CHECK_FALSE(g.sa_holds);
    CHECK(g.first_sa_violation == 0);
}

TEST_CASE("distortion") {
    CriticalPartition P = build_partition(3);
    DistortionReport r0 = distortion_check_1d(2, {0.1, 0.2}, 0, 8, P);
    CHECK(r0.ratio_max == 1.0);

    Interval cell = CriticalPartition::cell_interval(3, 8);
    DistortionReport r = distortion_check_1d(2, cell, 5, 33, P);
    CHECK(r.admissible);
    CHECK(r.ratio_max <= 10);
    CHECK(r.ratio_max >= 1);

    DistortionReport s = distortion_check_1d(2, {-0.01, 0.01}, 3, 9, P);
    CHECK_FALSE(s.admissible);

    DistortionReport t = distortion_check_1d(2, {0.3, 0.3 + 1e-15}, 10, 5, P);
    CHECK(t.ratio_max == doctest::Approx(1.0).epsilon(1e-9));
}
