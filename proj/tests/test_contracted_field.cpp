#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include <henonlab/contracted_field.hpp>
#include <henonlab/errors.hpp>

using namespace henon;

namespace {

double grid_argmin_angle(const Mat2& A, int npts) {
    double best = 1e300, arg = 0;
    for (int i = 0; i < npts; ++i) {
        double th = std::numbers::pi * i / npts;
        double n = (A * Tangent{std::cos(th), std::sin(th)}).norm();
        if (n < best) best = n, arg = th;
    }
    return arg;
}

double line_gap(double th, Tangent e) {
    double d = std::abs(th - std::atan2(e.v2, e.v1));
    d = std::fmod(d, std::numbers::pi);
    return std::min(d, std::numbers::pi - d);
}

}  // namespace

TEST_CASE("most_contracted closed cases") {
    SingularData s = most_contracted({2, 0, 0, 0.05});
    CHECK(s.e.v1 == doctest::Approx(0).scale(1));
    CHECK(s.e.v2 == doctest::Approx(1));
    CHECK(s.s_min == doctest::Approx(0.05));
    CHECK(s.s_max == doctest::Approx(2));

    SingularData t = most_contracted({0, 1, 0.3, 0});
    CHECK(t.e.v1 == doctest::Approx(1));
    CHECK(std::abs(t.e.v2) < 1e-15);
    CHECK(t.s_min == doctest::Approx(0.3));

    CHECK_THROWS_AS(most_contracted({1, 0, 0, 1}), IsotropyError);
    CHECK_THROWS_AS(most_contracted({0.6, -0.8, 0.8, 0.6}), IsotropyError);
    CHECK_THROWS_AS(most_contracted({1, 2, 2, 4}), IsotropyError);
}

TEST_CASE("most_contracted agrees with angular grid oracle") {
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> U(-3, 3);
    for (int k = 0; k < 100; ++k) {
        Mat2 A{U(rng), U(rng), U(rng), U(rng)};
        SingularData s = most_contracted(A);
        double th = grid_argmin_angle(A, 100000);
        CHECK(line_gap(th, s.e) < 1e-4);
        CHECK((A * s.e).norm() == doctest::Approx(s.s_min).epsilon(1e-10));
        CHECK((A * s.f).norm() == doctest::Approx(s.s_max).epsilon(1e-10));
        CHECK(std::abs(dot(s.e, s.f)) < 1e-14);
        CHECK(s.s_min * s.s_max == doctest::Approx(std::abs(A.det())).epsilon(1e-10));
        CHECK((s.e.v2 > 0 || (s.e.v2 == 0 && s.e.v1 >= 0)));
        SingularData again = most_contracted(A);
        CHECK(again.e.v1 == s.e.v1);
        CHECK(again.e.v2 == s.e.v2);
    }
}

TEST_CASE("e_1 slope law at (1.4, 0.3)") {
    Param p = Param::make(1.4, 0.3);
    for (int i = -50; i <= 50; ++i) {
        double x = 0.01 * i;
        Tangent e = e_n(p, {x, 0}, 1);
        CHECK(std::abs(e.v2 / e.v1 - 2 * p.a * x) <= 10 * p.b);
    }
}

TEST_CASE("e_n singular at b = 0") {
    Param p = Param::make(2, 0);
    CHECK_THROWS_AS(e_n(p, {0.1, 0}, 1), IsotropyError);
}

TEST_CASE("determinant identity along e_n") {
    Param p = Param::make(1.9, 1e-3);
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> U(-0.9, 0.9);
    for (int k = 0; k < 50; ++k) {
        Point z{U(rng), 1e-3 * U(rng)};
        for (int n : {1, 5, 12, 20}) {
            SingularData s = e_n_data(p, z, n);
            JacobianProduct J = jacobian_product(p, z, n);
            double lmin = std::log((J.m * s.e).norm()) + J.log_scale;
            double lmax = std::log((J.m * s.f).norm()) + J.log_scale;
            // the contracted image is swamped by rounding once s_min/s_max < eps
            if (s.log_s_min - s.log_s_max > -30) {
                CHECK(lmin + lmax == doctest::Approx(n * std::log(p.b)).epsilon(1e-8));
            }
            CHECK(s.log_s_min + s.log_s_max == doctest::Approx(n * std::log(p.b)).epsilon(1e-12));
            CHECK(lmax == doctest::Approx(s.log_s_max).epsilon(1e-10));
        }
    }
}

TEST_CASE("field regularity") {
    Param p = Param::make(1.9, 1e-3);
    FieldRegularity z = field_regularity(p, {0.1, 0}, {0.1, 0}, 5, 1);
    CHECK(z.lip_ratio == 0.0);
    for (int i = -10; i <= 10; ++i) {
        double x = 0.01 * i;
        FieldRegularity r = field_regularity(p, {x, 0}, {x + 1e-3, 0}, 5, 1);
        CHECK(r.lip_ratio >= 2 * p.a - 1);
        CHECK(r.lip_ratio <= 2 * p.a + 1);
    }
    // geometric refinement in the order
    for (double b : {1e-3, 2e-2}) {
        Param q = Param::make(1.9, b);
        int top = b < 1e-2 ? 3 : 5;
        double prev = field_regularity(q, {0.3, 0}, {0.3, 0}, 12, 1).order_gap;
        for (int m = 2; m <= top; ++m) {
            double g = field_regularity(q, {0.3, 0}, {0.3, 0}, 12, m).order_gap;
            CHECK(g / prev <= b);
            prev = g;
        }
    }
    CHECK(field_regularity(p, {0.3, 0}, {0.3, 0}, 10, 5).order_gap <= std::pow(1e-3, 5));
}

namespace {

Mat2 random_with_det(std::mt19937_64& rng, double b, double smin, double smax) {
    std::uniform_real_distribution<double> U(0, 1);
    double s = smin + (smax - smin) * U(rng);
    double th = 0.2 * (U(rng) - 0.5), ph = 0.2 * (U(rng) - 0.5);
    Mat2 R1{std::cos(th), -std::sin(th), std::sin(th), std::cos(th)};
    Mat2 R2{std::cos(ph), -std::sin(ph), std::sin(ph), std::cos(ph)};
    return R1 * Mat2{s, 0, 0, b / s} * R2;
}

// rank one update A + u w^T with w^T adj(A) u = 0 keeps the determinant
Mat2 det_preserving_perturbation(std::mt19937_64& rng, const Mat2& A, double size) {
    std::uniform_real_distribution<double> U(-1, 1);
    Tangent u = unit({U(rng), U(rng)});
    Mat2 adj{A.d, -A.b, -A.c, A.a};
    Tangent au = adj * u;
    Tangent w = unit(perp(au));
    double eps = size;  // |u w^T| = 1
    return {A.a + eps * u.v1 * w.v1, A.b + eps * u.v1 * w.v2, A.c + eps * u.v2 * w.v1,
            A.d + eps * u.v2 * w.v2};
}

}  // namespace

TEST_CASE("matrix perturbation checker") {
    std::mt19937_64 rng(99);
    const double b = 1e-3, kappa = 1.5, lambda = 0.2;
    std::vector<Mat2> As;
    for (int i = 0; i < 10; ++i) As.push_back(random_with_det(rng, b, 2.0, 3.5));
    PerturbationReport same = matrix_perturbation_check(As, As, {1, 0}, kappa, lambda);
    CHECK(same.conclusions_hold);
    CHECK(same.max_angle == 0.0);

    int failures = 0, trials = 0;
    for (int t = 0; t < 1000; ++t) {
        std::vector<Mat2> A, Ap;
        for (int i = 1; i <= 10; ++i) {
            A.push_back(random_with_det(rng, b, 2.0, 3.5));
            Ap.push_back(det_preserving_perturbation(rng, A.back(), 0.5 * std::pow(lambda, i)));
        }
        try {
            PerturbationReport r = matrix_perturbation_check(A, Ap, {1, 0}, kappa, lambda);
            ++trials;
            if (!r.conclusions_hold) ++failures;
        } catch (const HypothesisError&) {
        }
    }
    CHECK(trials > 900);
    CHECK(failures == 0);

    std::vector<Mat2> Bad = As;
    Bad[3] = det_preserving_perturbation(rng, As[3], 0.5);
    CHECK_THROWS_AS(matrix_perturbation_check(As, Bad, {1, 0}, kappa, lambda), HypothesisError);
}

TEST_CASE("integral curves") {
    // a = 0 gives a constant Jacobian, hence a constant field
    Param p = Param::make(0, 0.3);
    IntegralCurve c = integrate_field(p, {0.2, 0.1}, 3, 0.5, 0.01);
    Tangent e = e_n(p, {0, 0}, 3);
    CHECK(c.t.front() == doctest::Approx(-0.5));
    CHECK(c.t.back() == doctest::Approx(0.5));
    double dev = 0;
    for (const Point& q : c.nodes) dev = std::max(dev, std::abs(cross(e, {q.x - 0.2, q.y - 0.1})));
    CHECK(dev < 1e-9);
    CHECK(dist(c.nodes.front(), c.nodes.back()) == doctest::Approx(1.0).epsilon(1e-9));

    Param q = Param::make(1.9, 1e-3);
    Point z0{0.02, 0.0};
    IntegralCurve g = integrate_field(q, z0, 1);
    size_t mid = 0;
    while (g.t[mid] != 0) ++mid;
    Point a = g.nodes[mid - 1], b = g.nodes[mid + 1];
    double slope = (b.y - a.y) / (b.x - a.x);
    Tangent e1 = e_n(q, z0, 1);
    CHECK(slope == doctest::Approx(e1.v2 / e1.v1).epsilon(1e-4));
    CHECK(std::abs(slope - 2 * q.a * z0.x) <= 10 * q.b);
    for (size_t i = 0; i < g.nodes.size(); ++i) {
        CHECK(line_angle(g.tangents[i], e_n(q, g.nodes[i], 1)) < 1e-3);
        if (i > 0) CHECK(dist(g.nodes[i], g.nodes[i - 1]) <= g.step * (1 + 1e-9));
    }

    IntegralCurve r = integrate_field(q, z0, 1, -1, -1, -1);
    REQUIRE(r.nodes.size() == g.nodes.size());
    double maxd = 0;
    for (size_t i = 0; i < g.nodes.size(); ++i)
        maxd = std::max(maxd, dist(g.nodes[i], r.nodes[g.nodes.size() - 1 - i]));
    CHECK(maxd < 1e-9);
}
