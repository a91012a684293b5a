#pragma once
#include <cmath>
#include <vector>

namespace henon {

struct Point {
    double x = 0, y = 0;
    bool operator==(const Point&) const = default;
};

struct Tangent {
    double v1 = 1, v2 = 0;
    double slope() const { return v2 / v1; }
    double norm() const { return std::hypot(v1, v2); }
};

inline Point operator+(Point a, Point b) { return {a.x + b.x, a.y + b.y}; }
inline Point operator-(Point a, Point b) { return {a.x - b.x, a.y - b.y}; }
inline Point operator*(double s, Point a) { return {s * a.x, s * a.y}; }
inline Point operator+(Point a, Tangent t) { return {a.x + t.v1, a.y + t.v2}; }
inline Tangent operator*(double s, Tangent t) { return {s * t.v1, s * t.v2}; }
inline double dist(Point a, Point b) { return std::hypot(a.x - b.x, a.y - b.y); }
inline double dot(Tangent a, Tangent b) { return a.v1 * b.v1 + a.v2 * b.v2; }
inline double cross(Tangent a, Tangent b) { return a.v1 * b.v2 - a.v2 * b.v1; }
inline Tangent unit(Tangent t) {
    double n = t.norm();
    return {t.v1 / n, t.v2 / n};
}
inline Tangent perp(Tangent t) { return {-t.v2, t.v1}; }
// angle between two lines, in [0, pi/2]
double line_angle(Tangent a, Tangent b);

struct Mat2 {
    double a = 1, b = 0, c = 0, d = 1;  // [[a, b], [c, d]]

    double det() const { return a * d - b * c; }
    Tangent operator*(Tangent v) const { return {a * v.v1 + b * v.v2, c * v.v1 + d * v.v2}; }
    Mat2 operator*(const Mat2& o) const {
        return {a * o.a + b * o.c, a * o.b + b * o.d, c * o.a + d * o.c, c * o.b + d * o.d};
    }
    Mat2 scaled(double s) const { return {a * s, b * s, c * s, d * s}; }
    double max_abs() const;
    static Mat2 identity() { return {}; }
};

struct Param {
    double a = 1.9;
    double b = 1e-3;
    int Delta = 3;
    double delta = std::exp(-3.0);
    double alpha = 1e-6;
    double beta = 14e-6;
    int horizon = 25;

    // validates and recomputes delta, beta
    static Param make(double a, double b, int Delta = 3, double alpha = 1e-6, int horizon = 25);
};

struct OrbitSegment {
    std::vector<Point> points;
    std::vector<double> log_norms;  // log|Df^k v| for the tracked tangent, k = 0..n
    Mat2 jac;                       // renormalized product Df^n
    double jac_log_scale = 0;       // Df^n = exp(jac_log_scale) * jac
    int renorm_count = 0;
    Tangent tangent;                // unit direction of Df^n v
};

Point henon_step(const Param& p, Point z);
Mat2 henon_jacobian(const Param& p, Point z);
Point fixed_point_first_quadrant(const Param& p);
OrbitSegment iterate_with_jacobian(const Param& p, Point z, int n, Tangent v = {0, 1});

inline double quad_step(double a, double x) { return 1 - a * x * x; }
inline double quad_deriv(double a, double x) { return -2 * a * x; }

// Renormalizing accumulator for long Jacobian products: product = exp(log_scale) * m.
struct JacobianAccumulator {
    Mat2 m;
    double log_scale = 0;
    int renorms = 0;
    void push(const Mat2& step);  // m <- step * m
};

}  // namespace henon
