#pragma once
#include <optional>
#include <vector>

namespace henon {

struct Interval {
    double lo = 0, hi = 0;
    double length() const { return hi - lo; }
    double mid() const { return 0.5 * (lo + hi); }
    bool contains(double x) const { return lo <= x && x <= hi; }
    bool contains(const Interval& o) const { return lo <= o.lo && o.hi <= hi; }
    Interval expanded(double factor) const {
        double h = 0.5 * factor * length();
        return {mid() - h, mid() + h};
    }
    Interval shifted(double s) const { return {lo + s, hi + s}; }
};

struct PartitionCell {
    int m = 0;  // signed: negative cells mirror positive ones
    int j = 0;  // 0 is the subcell closest to the critical point
    Interval interval;
};

struct CellLocation {
    enum Kind { OuterLeft, OuterRight, Cell, Critical } kind = Critical;
    int m = 0;
    int j = 0;
    Interval interval;
};

struct CriticalPartition {
    int Delta = 3;
    double delta = 0;
    int m_max = 0;                     // cells materialized for Delta <= |m| <= m_max
    std::vector<PartitionCell> cells;  // ordered left to right
    Interval outer_left, outer_right;

    CellLocation locate(double x) const;
    static Interval cell_interval(int m, int j);
};

CriticalPartition build_partition(int Delta, int m_max = 0);

int bound_period_1d(double a, double x, double beta, int cap);

struct BCReport {
    int horizon = 0;
    double eg_margin = 0;
    double ba_margin = 0;
    int eg_worst_n = 0;
    int ba_worst_n = 0;
    bool eg_pass = false;
    bool ba_pass = false;
    bool pass() const { return eg_pass && ba_pass; }
};

BCReport check_bc_1d(double a, double c, double alpha, int N);

struct DerivativeEstimate {
    bool sa_holds = false;
    double ee_margin = 0;
    int first_sa_violation = -1;
};

DerivativeEstimate derivative_estimate_1d(double a, double x, int N, double delta, double alpha,
                                          double c2 = 0.3);

struct DistortionReport {
    Interval window;
    int n = 0;
    double ratio_max = 1;
    bool admissible = true;
    int first_inadmissible = -1;
};

DistortionReport distortion_check_1d(double a, Interval omega, int n, int samples,
                                     const CriticalPartition& part);

// top Lyapunov exponent of the quadratic map from x0
double lyapunov_1d(double a, double x0, long n, long burn = 1000);

}  // namespace henon
