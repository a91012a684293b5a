#include "henonlab/core_maps.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "henonlab/errors.hpp"

namespace henon {

double line_angle(Tangent a, Tangent b) {
    double ang = std::atan2(std::abs(cross(a, b)), std::abs(dot(a, b)));
    return ang;
}

double Mat2::max_abs() const {
    return std::max({std::abs(a), std::abs(b), std::abs(c), std::abs(d)});
}

Param Param::make(double a, double b, int Delta, double alpha, int horizon) {
    if (!std::isfinite(a) || !std::isfinite(b) || b < 0)
        throw ConfigError("parameter b must be finite and nonnegative");
    if (Delta < 1) throw ConfigError("Delta must be a positive integer");
    if (!(alpha > 0)) throw ConfigError("alpha must be positive");
    if (horizon < 1) throw ConfigError("horizon must be positive");
    Param p;
    p.a = a;
    p.b = b;
    p.Delta = Delta;
    p.delta = std::exp(-static_cast<double>(Delta));
    p.alpha = alpha;
    p.beta = 14 * alpha;
    p.horizon = horizon;
    return p;
}

Point henon_step(const Param& p, Point z) { return {1 - p.a * z.x * z.x + z.y, p.b * z.x}; }

Mat2 henon_jacobian(const Param& p, Point z) { return {-2 * p.a * z.x, 1, p.b, 0}; }

Point fixed_point_first_quadrant(const Param& p) {
    // a x^2 + (1 - b) x - 1 = 0
    double B = 1 - p.b;
    double disc = B * B + 4 * p.a;
    if (!(disc > 0)) throw NoRealRootError("fixed point: discriminant (1-b)^2 + 4a <= 0");
    double x;
    if (p.a == 0) {
        x = 1 / B;
    } else {
        // stable form of the positive root
        double s = std::sqrt(disc);
        x = B >= 0 ? 2 / (B + s) : (s - B) / (2 * p.a);
    }
    return {x, p.b * x};
}

void JacobianAccumulator::push(const Mat2& step) {
    m = step * m;
    double mx = m.max_abs();
    if (!std::isfinite(mx)) throw OverflowError("Jacobian product overflow in a single step");
    if (mx > 1e100 || (mx < 1e-100 && mx > 0)) {
        int e;
        std::frexp(mx, &e);
        m = {std::ldexp(m.a, -e), std::ldexp(m.b, -e), std::ldexp(m.c, -e), std::ldexp(m.d, -e)};
        log_scale += e * std::numbers::ln2;
        ++renorms;
    }
}

OrbitSegment iterate_with_jacobian(const Param& p, Point z, int n, Tangent v) {
    OrbitSegment seg;
    seg.points.reserve(n + 1);
    seg.log_norms.reserve(n + 1);
    seg.points.push_back(z);
    double vn = v.norm();
    Tangent u{v.v1 / vn, v.v2 / vn};
    double lg = std::log(vn);
    seg.log_norms.push_back(lg);
    JacobianAccumulator acc;
    for (int k = 0; k < n; ++k) {
        Mat2 J = henon_jacobian(p, z);
        acc.push(J);
        Tangent w = J * u;
        double wn = w.norm();
        lg += std::log(wn);
        u = {w.v1 / wn, w.v2 / wn};
        z = henon_step(p, z);
        if (!std::isfinite(z.x) || !std::isfinite(z.y)) throw OverflowError("orbit overflow");
        seg.points.push_back(z);
        seg.log_norms.push_back(lg);
    }
    seg.jac = acc.m;
    seg.jac_log_scale = acc.log_scale;
    seg.renorm_count = acc.renorms;
    seg.tangent = u;
    return seg;
}

}  // namespace henon
