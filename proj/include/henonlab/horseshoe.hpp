#pragma once
#include <array>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "henonlab/contracted_field.hpp"
#include "henonlab/intervals.hpp"
#include "henonlab/manifold.hpp"
#include "henonlab/one_dim.hpp"

namespace henon {

// Monotone cubic interpolant of a branch map (Fritsch-Carlson / PCHIP).
class MonotoneMap {
public:
    MonotoneMap() = default;
    MonotoneMap(std::vector<double> xs, std::vector<double> ys);
    static MonotoneMap affine(Interval from, Interval to, bool reversed = false);
    // nodes with given slopes, as stored by a skeleton file
    static MonotoneMap from_nodes(std::vector<double> xs, std::vector<double> ys, std::vector<double> ds);

    double operator()(double x) const;
    double derivative(double x) const;
    double inverse(double y) const;  // clamped to the domain
    bool increasing() const { return ys_.back() > ys_.front(); }
    Interval domain() const { return {xs_.front(), xs_.back()}; }
    Interval range() const;
    const std::vector<double>& xs() const { return xs_; }
    const std::vector<double>& ys() const { return ys_; }
    const std::vector<double>& ds() const { return ds_; }
    // preimage of a set, clipped to the range
    IntervalSet pullback(const IntervalSet& s) const;

private:
    std::vector<double> xs_, ys_, ds_;
};

// Quantities a plane realization of a horseshoe must provide to the tower layer.
class PlaneModel {
public:
    virtual ~PlaneModel() = default;
    virtual Point lift(double x) const = 0;   // H
    virtual Point step(Point z) const = 0;    // f
    virtual Mat2 jacobian(Point z) const = 0;
    virtual Tangent stable_direction(Point z) const = 0;
    virtual double stable_half_length() const = 0;  // 10b
    virtual double contraction() const = 0;         // b
    virtual std::vector<Point> stable_curve(double x, int nodes) const;
};

struct HorseshoeConfig {
    int binding_order = 6;
    int slide_order = 8;
    int refine_samples = 64;
    int cell_samples = 9;
    double cover_factor = 3;
    bool allow_relaxed = true;  // accept 2*Omega0 coverage, flagged
    int bound_cap = 200;
    int branch_nodes = 33;
    int cover_samples = 16;
    double min_window = 1e-14;
    double min_cell = 1e-13;
    size_t max_cells = 200000;
};

// Outermost cells of the partition of (-delta, delta) translated by x0: {Omega0+, Omega0-}.
std::array<Interval, 2> build_omega0(int Delta, double x0);

// Henon realization on the first-generation leaf W1.
class HenonBase : public PlaneModel {
public:
    explicit HenonBase(const Param& p, HorseshoeConfig cfg = {});
    HenonBase(ManifoldData md, HorseshoeConfig cfg);

    const Param& param() const { return p_; }
    const ManifoldData& manifold() const { return md_; }
    const HorseshoeConfig& config() const { return cfg_; }
    double x0() const { return md_.z0.point.x; }
    Interval omega0(int side) const { return omega0_[side]; }
    IntervalSet omega0_set() const { return IntervalSet({omega0_[0], omega0_[1]}); }

    Jet lift_jet(double x) const;
    Jet orbit_jet(double x, int n) const;
    double graph(double x) const;  // W1 height near the strip

    // Signed position relative to the critical set: x outside the strip, the coordinate
    // along the binding tangent inside. binding_failed marks the fallback x - x0.
    struct CritCoord {
        double coord = 0;
        bool in_strip = false;
        bool binding_failed = false;
        std::optional<CriticalApprox> binding;
    };
    CritCoord crit_coord(const Jet& j) const;
    // exclusion radius at time n (partition resolution of delta e^{-alpha n})
    double exclusion_radius(int n) const;

    // Base coordinate reached by sliding z along the contracted field to W1.
    std::optional<double> slide(Point z) const;

    Point lift(double x) const override { return lift_jet(x).z; }
    Point step(Point z) const override { return henon_step(p_, z); }
    Mat2 jacobian(Point z) const override { return henon_jacobian(p_, z); }
    Tangent stable_direction(Point z) const override;
    double stable_half_length() const override { return 10 * p_.b; }
    double contraction() const override { return p_.b; }
    std::vector<Point> stable_curve(double x, int nodes) const override;

private:
    void init();
    Param p_;
    ManifoldData md_;
    HorseshoeConfig cfg_;
    std::array<Interval, 2> omega0_;
    Interval table_range_;
    std::vector<double> tx_, ty_, tdy_, tk_, ts_;
};

struct CantorApprox {
    int level = 0;
    IntervalSet set;
    std::shared_ptr<const CantorApprox> parent;
    double exclusion_ratio = 0;  // |parent \ this| / |parent|
    int windows = 0;
    int binding_fallbacks = 0;
};

CantorApprox omega_level0(const HenonBase& base);
CantorApprox refine_cantor(const HenonBase& base, std::shared_ptr<const CantorApprox> prev);
std::vector<std::shared_ptr<const CantorApprox>> cantor_pipeline(const HenonBase& base, int depth);

// Excluded windows of one interval at time n (generic monotone bracketing helper).
std::vector<Interval> exclusion_windows(const std::function<double(double)>& coord, Interval iv,
                                        double radius, int samples, double min_window);

struct EnvelopeFit {
    double C1 = 0;
    double rate = 0;  // e^{-alpha(1-3beta)}
    int fit_levels = 0;
    double worst_tail_ratio = 0;  // max over held-out levels of ratio / envelope
};
EnvelopeFit fit_exclusion_envelope(const std::vector<std::shared_ptr<const CantorApprox>>& levels,
                                   const Param& p);

struct StableCurveApprox {
    double base_x = 0;
    int order = 0;
    IntegralCurve curve;
    std::vector<std::vector<double>> contraction_log;  // per sampled zeta, log distance for j = 0..order
    double mean_slope = 0;                             // per-step log contraction above the rounding floor
};
StableCurveApprox build_stable_curve(const HenonBase& base, double x, int order);
double curve_distance(const IntegralCurve& u, const IntegralCurve& v);

struct Sublattice {
    int n = 0;
    int j = 0;
    int source = 0;  // Omega0 side of the starting lattice
    int target = 0;  // Omega0 side covered
    bool relaxed = false;
    Interval base;    // the partition cell I
    Interval domain;  // preimage of Omega0[target]
    IntervalSet trace;
    MonotoneMap branch;  // domain -> Omega0[target]
};

struct RegularReturn {
    int n = 0;
    int target = 0;
    bool relaxed = false;
    Interval domain;
};
// Checks freeness of the samples with control_orbit unless assume_free is set.
std::optional<RegularReturn> detect_regular_return(const HenonBase& base, Interval I, int n,
                                                   bool assume_free = false);

// If the monotone image g(I) (where defined) covers `window`, returns g^{-1}(target).
std::optional<Interval> covering_preimage(const std::function<std::optional<double>(double)>& g,
                                          Interval I, Interval window, Interval target, int samples);

struct PartitionLevel {
    int n = 0;
    std::vector<Interval> cells;  // active (unreturned) cells after time n
    double active_length = 0;
    double excluded_length = 0;
    double returned_length = 0;
    int sublattices = 0;
};

struct ReturnPartition {
    int horizon = 0;
    std::array<Interval, 2> omega0;
    std::vector<PartitionLevel> levels;  // index n = 0..horizon
    std::vector<Sublattice> returns;
    IntervalSet unresolved;
    IntervalSet quarantined;
    std::shared_ptr<const CantorApprox> deep;  // Omega_infinity surrogate
    double domain_length() const { return omega0[0].length() + omega0[1].length(); }
    // Leb{R >= n} over the starting domain
    std::vector<double> tail() const;
    std::vector<int> sublattice_counts() const;  // v(n)
};

ReturnPartition build_return_partition(const HenonBase& base, int N,
                                       std::shared_ptr<const CantorApprox> deep);

struct GeometricFit {
    double C0 = 0, theta0 = 0, r2 = 0;
    int from = 0, to = 0;
};
GeometricFit fit_geometric_tail(const std::vector<double>& tail, int from, int to);

struct MatchingReport {
    bool covered = false;
    double uncovered = 0;
    double slack = 0;
    double trace_length = 0;
    std::vector<Interval> gaps;
};
MatchingReport matching_check(const HenonBase& base, const Sublattice& S, const CantorApprox& level);

// Exact pullback for partitions with analytic branches.
MatchingReport matching_check(const Sublattice& S, const IntervalSet& level);

const Sublattice* find_sublattice(const ReturnPartition& part, int n, int j);
IntervalSet itinerary_set(const ReturnPartition& part, const std::vector<std::pair<int, int>>& seq);
// Leb{z : some R^t(z) > N, t <= k} restricted to the traces' hull
double escape_mass(const ReturnPartition& part, int k);
double branch_distortion(const ReturnPartition& part);
// min over sampled sublattice points of |Df^R tau|^{1/R}
double return_expansion(const HenonBase& base, const ReturnPartition& part, int samples = 5);

// Piecewise affine full-shift toys with explicit return times.
struct ToyBranch {
    Interval base;
    int R = 1;
    bool reversed = false;
};

class ToyShift : public PlaneModel {
public:
    ToyShift(std::vector<ToyBranch> branches, double lambda = 1e-3, double height = 0.25);
    static ToyShift thirds(std::array<int, 3> R = {1, 1, 1}, double lambda = 1e-3);
    static ToyShift geometric(int N, double lambda = 1e-3);

    const std::vector<ToyBranch>& branches() const { return br_; }
    ReturnPartition partition(int N) const;

    Point lift(double x) const override { return {x, 0}; }
    Point step(Point z) const override;
    Mat2 jacobian(Point z) const override;
    Tangent stable_direction(Point) const override { return {0, 1}; }
    double stable_half_length() const override { return h_; }
    double contraction() const override { return lambda_; }

private:
    int branch_of(double x) const;
    std::vector<ToyBranch> br_;
    double lambda_, h_;
};

}  // namespace henon
