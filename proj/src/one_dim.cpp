#include "henonlab/one_dim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "henonlab/core_maps.hpp"
#include "henonlab/errors.hpp"

namespace henon {

Interval CriticalPartition::cell_interval(int m, int j) {
    int am = std::abs(m);
    double lo = std::exp(-(am + 1.0)), hi = std::exp(-static_cast<double>(am));
    double w = (hi - lo) / (static_cast<double>(am) * am);
    double l = lo + j * w, h = (j + 1 == am * am) ? hi : lo + (j + 1) * w;
    if (m > 0) return {l, h};
    return {-h, -l};
}

CriticalPartition build_partition(int Delta, int m_max) {
    if (Delta < 1) throw ConfigError("build_partition: Delta must be >= 1");
    CriticalPartition P;
    P.Delta = Delta;
    P.delta = std::exp(-static_cast<double>(Delta));
    P.m_max = m_max > 0 ? std::max(m_max, Delta) : Delta + 6;
    P.outer_left = {-1, -P.delta};
    P.outer_right = {P.delta, 1};
    for (int m = Delta; m <= P.m_max; ++m)
        for (int j = m * m - 1; j >= 0; --j) P.cells.push_back({-m, j, CriticalPartition::cell_interval(-m, j)});
    for (int m = P.m_max; m >= Delta; --m)
        for (int j = 0; j < m * m; ++j) P.cells.push_back({m, j, CriticalPartition::cell_interval(m, j)});
    return P;
}

CellLocation CriticalPartition::locate(double x) const {
    CellLocation L;
    if (x <= -delta) {
        L.kind = CellLocation::OuterLeft;
        L.interval = outer_left;
        return L;
    }
    if (x > delta) {
        L.kind = CellLocation::OuterRight;
        L.interval = outer_right;
        return L;
    }
    double ax = std::abs(x);
    if (ax == 0) return L;
    // I_m = (e^{-(m+1)}, e^{-m}]
    int m = static_cast<int>(std::floor(-std::log(ax)));
    if (std::exp(-static_cast<double>(m)) < ax) --m;
    if (std::exp(-(m + 1.0)) >= ax) ++m;
    m = std::max(m, Delta);
    double lo = std::exp(-(m + 1.0)), hi = std::exp(-static_cast<double>(m));
    double w = (hi - lo) / (static_cast<double>(m) * m);
    int j = static_cast<int>(std::ceil((ax - lo) / w)) - 1;
    j = std::clamp(j, 0, m * m - 1);
    L.kind = CellLocation::Cell;
    L.m = x > 0 ? m : -m;
    L.j = j;
    L.interval = cell_interval(L.m, j);
    return L;
}

int bound_period_1d(double a, double x, double beta, int cap) {
    double u = x, v = 0;
    for (int k = 0; k < cap; ++k) {
        if (!(std::abs(u - v) < std::exp(-beta * k))) return k;
        u = quad_step(a, u);
        v = quad_step(a, v);
    }
    return cap;
}

BCReport check_bc_1d(double a, double c, double alpha, int N) {
    BCReport r;
    r.horizon = N;
    r.eg_margin = std::numeric_limits<double>::infinity();
    r.ba_margin = std::numeric_limits<double>::infinity();
    // n = 0 term of the expansion condition: log 1 - 0
    r.eg_margin = 0;
    double x = quad_step(a, 0);  // f(0)
    double logD = 0;
    for (int n = 1; n <= N; ++n) {
        // x = f^n(0); BA at n, then extend the derivative along f(0)..f^n(0)
        double ba = std::log(std::abs(x)) + alpha * n;
        if (ba < r.ba_margin) r.ba_margin = ba, r.ba_worst_n = n;
        logD += std::log(std::abs(quad_deriv(a, x)));
        double eg = logD - c * n;
        if (eg < r.eg_margin) r.eg_margin = eg, r.eg_worst_n = n;
        x = quad_step(a, x);
    }
    r.eg_pass = r.eg_margin >= 0;
    r.ba_pass = r.ba_margin >= 0;
    return r;
}

DerivativeEstimate derivative_estimate_1d(double a, double x, int N, double delta, double alpha,
                                          double c2) {
    DerivativeEstimate d;
    d.sa_holds = true;
    double logD = 0;
    for (int j = 0; j < N; ++j) {
        if (std::abs(x) < delta * std::exp(-alpha * j) && d.sa_holds) {
            d.sa_holds = false;
            d.first_sa_violation = j;
        }
        logD += std::log(std::abs(quad_deriv(a, x)));
        x = quad_step(a, x);
    }
    d.ee_margin = logD - std::log(delta) - c2 * N;
    return d;
}

namespace {

bool inside_some_3J(const CriticalPartition& P, Interval img) {
    if (img.lo < 0 && img.hi > 0) return false;
    for (double probe : {img.lo, img.mid(), img.hi}) {
        CellLocation L = P.locate(probe);
        if (L.kind == CellLocation::Critical) continue;
        if (L.interval.expanded(3).contains(img)) return true;
    }
    return false;
}

}  // namespace

DistortionReport distortion_check_1d(double a, Interval omega, int n, int samples,
                                     const CriticalPartition& part) {
    DistortionReport r;
    r.window = omega;
    r.n = n;
    samples = std::max(samples, 2);
    std::vector<double> xs(samples), logD(samples, 0.0);
    for (int i = 0; i < samples; ++i) xs[i] = omega.lo + omega.length() * i / (samples - 1);
    for (int k = 0; k < n; ++k) {
        auto [mn, mx] = std::minmax_element(xs.begin(), xs.end());
        if (r.admissible && !inside_some_3J(part, {*mn, *mx})) {
            r.admissible = false;
            r.first_inadmissible = k;
        }
        for (int i = 0; i < samples; ++i) {
            logD[i] += std::log(std::abs(quad_deriv(a, xs[i])));
            xs[i] = quad_step(a, xs[i]);
        }
    }
    auto [lo, hi] = std::minmax_element(logD.begin(), logD.end());
    r.ratio_max = n == 0 ? 1.0 : std::exp(*hi - *lo);
    if (std::isnan(r.ratio_max)) r.ratio_max = std::numeric_limits<double>::infinity();
    return r;
}

double lyapunov_1d(double a, double x, long n, long burn) {
    for (long i = 0; i < burn; ++i) x = quad_step(a, x);
    double s = 0;
    for (long i = 0; i < n; ++i) {
        s += std::log(std::abs(quad_deriv(a, x)));
        x = quad_step(a, x);
    }
    return s / n;
}

}  // namespace henon
