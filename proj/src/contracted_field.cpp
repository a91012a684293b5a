#include "henonlab/contracted_field.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "henonlab/errors.hpp"

namespace henon {

Tangent canonical(Tangent t) {
    // second components at rounding level count as ties
    if (std::abs(t.v2) <= 1e-15 * std::abs(t.v1)) return t.v1 < 0 ? Tangent{-t.v1, 0.0} : Tangent{t.v1, 0.0};
    if (t.v2 < 0) return {-t.v1, -t.v2};
    return t;
}

SingularData most_contracted(const Mat2& A) {
    double det = A.det();
    // difference of products with an fma correction
    double w = A.b * A.c;
    double err = std::fma(-A.b, A.c, w);
    det = std::fma(A.a, A.d, -w) + err;
    if (det == 0) throw IsotropyError("most_contracted: singular matrix");
    return most_contracted(A, 0.0, std::log(std::abs(det)));
}

SingularData most_contracted(const Mat2& A0, double log_scale, double log_abs_det) {
    double mx = A0.max_abs();
    if (!(mx > 0) || !std::isfinite(mx)) throw IsotropyError("most_contracted: degenerate matrix");
    int ex;
    std::frexp(mx, &ex);
    Mat2 A{std::ldexp(A0.a, -ex), std::ldexp(A0.b, -ex), std::ldexp(A0.c, -ex), std::ldexp(A0.d, -ex)};
    double L = log_scale + ex * std::log(2.0);

    double E = 0.5 * (A.a + A.d), F = 0.5 * (A.a - A.d);
    double G = 0.5 * (A.c + A.b), H = 0.5 * (A.c - A.b);
    double smax = std::hypot(E, H) + std::hypot(F, G);
    if (!std::isfinite(log_abs_det)) throw IsotropyError("most_contracted: singular matrix");

    SingularData s;
    s.log_s_max = std::log(smax) + L;
    s.log_s_min = log_abs_det - s.log_s_max;
    s.s_max = std::exp(s.log_s_max);
    s.s_min = std::exp(s.log_s_min);
    if (s.log_s_max - s.log_s_min < 1e-12)
        throw IsotropyError("most_contracted: |Av| is constant, direction undefined");

    double num = 2 * (A.a * A.b + A.c * A.d);
    double den = (A.a * A.a + A.c * A.c) - (A.b * A.b + A.d * A.d);
    double psi = 0.5 * std::atan2(num, den);
    s.f = canonical({std::cos(psi), std::sin(psi)});
    s.e = canonical({-std::sin(psi), std::cos(psi)});
    return s;
}

JacobianProduct jacobian_product(const Param& p, Point z, int n) {
    JacobianAccumulator acc;
    for (int k = 0; k < n; ++k) {
        acc.push(henon_jacobian(p, z));
        z = henon_step(p, z);
    }
    JacobianProduct J;
    J.m = acc.m;
    J.log_scale = acc.log_scale;
    J.log_abs_det = n * std::log(p.b);
    J.image = z;
    return J;
}

SingularData e_n_data(const Param& p, Point z, int n) {
    if (n < 1) throw ConfigError("e_n: order must be >= 1");
    if (!(p.b > 0)) throw IsotropyError("e_n: b = 0 makes Df singular");
    JacobianProduct J = jacobian_product(p, z, n);
    return most_contracted(J.m, J.log_scale, J.log_abs_det);
}

Tangent e_n(const Param& p, Point z, int n) { return e_n_data(p, z, n).e; }

namespace {
Tangent aligned(Tangent v, Tangent ref) { return dot(v, ref) < 0 ? Tangent{-v.v1, -v.v2} : v; }
double vdist(Tangent a, Tangent b) { return std::hypot(a.v1 - b.v1, a.v2 - b.v2); }
}  // namespace

FieldRegularity field_regularity(const Param& p, Point z1, Point z2, int n, int m) {
    FieldRegularity r;
    Tangent e1 = e_n(p, z1, n);
    double d = dist(z1, z2);
    if (d > 0) r.lip_ratio = vdist(e1, aligned(e_n(p, z2, n), e1)) / d;
    r.order_gap = vdist(e1, aligned(e_n(p, z1, m), e1));
    return r;
}

double op_norm(const Mat2& A) {
    double E = 0.5 * (A.a + A.d), F = 0.5 * (A.a - A.d);
    double G = 0.5 * (A.c + A.b), H = 0.5 * (A.c - A.b);
    return std::hypot(E, H) + std::hypot(F, G);
}

PerturbationReport matrix_perturbation_check(const std::vector<Mat2>& As,
                                             const std::vector<Mat2>& Aps, Tangent v,
                                             double kappa, double lambda) {
    if (As.size() != Aps.size() || As.empty())
        throw HypothesisError("matrix perturbation: sequences must be nonempty and of equal length");
    double b = std::abs(As[0].det());
    for (const auto* seq : {&As, &Aps})
        for (const Mat2& M : *seq)
            if (std::abs(std::abs(M.det()) - b) > 1e-10)
                throw HypothesisError("matrix perturbation: determinants differ from b");
    size_t n = As.size();
    Tangent w = v;
    for (size_t i = 1; i <= n; ++i) {
        w = As[i - 1] * w;
        double ki = std::pow(kappa, static_cast<double>(i));
        if (w.norm() < ki)
            throw HypothesisError("matrix perturbation: |A^i v| >= kappa^i fails at i = " +
                                  std::to_string(i));
        const Mat2 &A = As[i - 1], &B = Aps[i - 1];
        Mat2 D{A.a - B.a, A.b - B.b, A.c - B.c, A.d - B.d};
        if (!(op_norm(D) < std::pow(lambda, static_cast<double>(i))))
            throw HypothesisError("matrix perturbation: |A_i - A'_i| < lambda^i fails at i = " +
                                  std::to_string(i));
    }
    PerturbationReport r;
    r.b = b;
    r.min_growth_ratio = std::numeric_limits<double>::infinity();
    Tangent u = v, up = v;
    for (size_t i = 1; i <= n; ++i) {
        u = As[i - 1] * u;
        up = Aps[i - 1] * up;
        double ki = std::pow(kappa, static_cast<double>(i));
        double ang = line_angle(u, up);
        r.max_angle = std::max(r.max_angle, ang);
        r.min_growth_ratio = std::min(r.min_growth_ratio, up.norm() / ki);
        bool ok = up.norm() >= 0.5 * ki && ang <= std::pow(lambda, i / 4.0);
        if (!ok && r.conclusions_hold) {
            r.conclusions_hold = false;
            r.first_violation = static_cast<int>(i);
        }
    }
    return r;
}

namespace {

struct SideResult {
    std::vector<Point> pts;
    std::vector<double> ts;
    std::vector<Tangent> tans;
};

SideResult integrate_side(const LineField& field, Point z0, Tangent dir0, double half_len,
                          double step) {
    SideResult out;
    Point z = z0;
    Tangent ref = dir0;
    double t = 0;
    const double hmin = step / 1024;
    auto oriented = [&](Point q, Tangent r) { return aligned(field(q), r); };
    while (t < half_len) {
        double h = std::min(step, half_len - t);
        if (half_len - t - h < 1e-3 * step) h = half_len - t;
        for (;;) {
            Tangent k1 = oriented(z, ref);
            Tangent k2 = oriented(z + (0.5 * h) * k1, k1);
            Tangent k3 = oriented(z + (0.5 * h) * k2, k2);
            Tangent k4 = oriented(z + h * k3, k3);
            if (line_angle(k1, k4) > 0.05) {
                h *= 0.5;
                if (h < hmin) throw TubeExitError("integrate_field: step fell below step/1024");
                continue;
            }
            Tangent inc{(k1.v1 + 2 * k2.v1 + 2 * k3.v1 + k4.v1) / 6,
                        (k1.v2 + 2 * k2.v2 + 2 * k3.v2 + k4.v2) / 6};
            z = z + h * inc;
            t += h;
            ref = oriented(z, k4);
            out.pts.push_back(z);
            out.ts.push_back(t);
            out.tans.push_back(ref);
            break;
        }
    }
    return out;
}

}  // namespace

IntegralCurve integrate_line_field(const LineField& field, Point z0, double half_len, double step,
                                   int orientation) {
    if (!(step > 0) || !(half_len >= 0)) throw ConfigError("integrate_field: bad step or length");
    Tangent d0 = field(z0);
    if (orientation < 0) d0 = -1.0 * d0;
    SideResult fwd = integrate_side(field, z0, d0, half_len, step);
    SideResult bwd = integrate_side(field, z0, -1.0 * d0, half_len, step);
    IntegralCurve c;
    c.center = z0;
    c.step = step;
    for (size_t i = bwd.pts.size(); i-- > 0;) {
        c.nodes.push_back(bwd.pts[i]);
        c.t.push_back(-bwd.ts[i]);
        c.tangents.push_back(-1.0 * bwd.tans[i]);
    }
    c.nodes.push_back(z0);
    c.t.push_back(0);
    c.tangents.push_back(d0);
    for (size_t i = 0; i < fwd.pts.size(); ++i) {
        c.nodes.push_back(fwd.pts[i]);
        c.t.push_back(fwd.ts[i]);
        c.tangents.push_back(fwd.tans[i]);
    }
    return c;
}

IntegralCurve integrate_field(const Param& p, Point z0, int n, double half_len, double step,
                              int orientation) {
    if (half_len < 0) half_len = 10 * p.b;
    if (step <= 0) step = p.b / 10;
    IntegralCurve c = integrate_line_field([&](Point q) { return e_n(p, q, n); }, z0, half_len,
                                           step, orientation);
    c.order = n;
    return c;
}

}  // namespace henon
