#pragma once
#include <memory>
#include <optional>
#include <vector>

#include "henonlab/contracted_field.hpp"
#include "henonlab/core_maps.hpp"

namespace henon {

// Point, unit tangent and signed curvature of a curve at a point.
struct Jet {
    Point z;
    Tangent tau;
    double kappa = 0;
};

// Pushes a curve jet forward by f (exact second-order transport).
Jet push_jet(const Param& p, const Jet& j, double* stretch = nullptr);

struct FixedPointData {
    Point z;
    double lambda_u = 0, lambda_s = 0;
    Tangent v_u;
};
FixedPointData saddle_data(const Param& p);

// W^u parametrized as s -> f^K(z* + s v_u)
struct LeafGenerator {
    Param p;
    Point zstar;
    Tangent vu;
    double lambda_u = 0;
    int K = 0;

    Point point(double s) const;
    Jet jet(double s) const;
};

struct LeafSegment {
    int generation = 1;
    std::vector<Point> nodes;
    std::vector<Tangent> tangents;
    std::vector<double> t;  // arclength
    std::vector<double> s;  // generator parameter, empty for synthetic polylines
    std::shared_ptr<const LeafGenerator> gen;
    double resolution = 0;

    // point/tangent at a fractional node position (generator-exact when available)
    Jet at(size_t i, double frac) const;
    LeafSegment restricted_x(double xlo, double xhi) const;
};

LeafSegment make_polyline(const std::vector<Point>& pts, int generation = 1);
LeafSegment sample_generator(std::shared_ptr<const LeafGenerator> gen, double s_a, double s_b,
                             double resolution, int generation);

struct C2bReport {
    double max_slope = 0;
    double max_curvature = 0;
    bool is_c2b = false;
};
C2bReport is_c2b(const LeafSegment& seg, double b);

struct CriticalApprox {
    Point point;
    int order = 0;
    int generation = 1;
    double residual = 0;
    Tangent tangent;
    double curvature = 0;
    double s = 0;  // generator parameter if any
    bool local = false;  // from an osculating leaf model
};

std::vector<CriticalApprox> find_critical_approx(const Param& p, const LeafSegment& seg, int n);

struct ManifoldData {
    FixedPointData saddle;
    std::shared_ptr<const LeafGenerator> gen;
    double s_fold_left = 0, s_fold_right = 0;  // first sweep
    bool has_z0 = false;
    CriticalApprox z0;
    double s_z0 = 0, s_f1 = 0, s_f2 = 0;  // params of z0, f(z0), f^2(z0)
};

ManifoldData build_manifold(const Param& p, int critical_order = 8);
LeafSegment unstable_leaf(const Param& p, int g, double resolution);
LeafSegment unstable_leaf(const ManifoldData& md, int g, double resolution);

bool tangential_position(const CriticalApprox& binding, Point z, double c = 1e-2);

struct DistanceReport {
    double distance = 0;
    int index = -1;      // binding in crit, -1 outside the strip
    int tangential = 0;  // number of tangential candidates
    double spread = 1;   // max/min distance among tangential candidates
};
DistanceReport dist_to_critical_report(Point z, const std::vector<CriticalApprox>& crit,
                                       double delta, double c = 1e-2);
double dist_to_critical(Point z, const std::vector<CriticalApprox>& crit, double delta);

struct BindingInfo {
    CriticalApprox binding;
    double distance = 0;
    bool tangential = false;
    int p = 0;
    int l = 0;
    int m = 0;
    double splitting_angle = 0;
    bool splitting_ok = false;
    double fold_ratio = 0;  // l / p
};

int fold_index(double distance, double b);
BindingInfo bound_and_fold(const Param& p, Point z, const CriticalApprox& binding, int cap);

struct Splitting {
    double angle = 0;
    bool ok = false;
};
Splitting correct_splitting(const Param& p, Point z, Tangent v, int n, const CriticalApprox& binding,
                            int l);

// Critical approximation on the osculating parabola of a leaf through z.
std::optional<CriticalApprox> local_binding(const Param& p, const Jet& leaf, int order,
                                            double half_span);

struct ControlConfig {
    double c = 0.6931471805599453;
    double c0 = 0.2;
    double c1 = 0.2;
    double c2 = 0.3;
    int M0 = 3;
    double C = 5;  // (UH) contraction constant
    double tangential_c = 1e-2;
    int binding_order = 6;
    int bound_cap = 200;
    int critical_window = 3;
};

struct TimeState {
    int n = 0;
    Point z;
    bool free = true;
    bool in_strip = false;
    double log_growth = 0;  // log|Df^n(z) v|
    double curvature = 0;
    std::optional<BindingInfo> binding;
};

struct ControlReport {
    std::vector<TimeState> states;
    int returns = 0;
    int unbound_returns = 0;
    int splitting_ok_count = 0;
    double uh_expansion_margin = 0;   // min log|Df^n (0,1)| - c n
    double uh_contraction_margin = 0; // max log|Df^n tau| - n log(C b)
    double ba_margin = 0;             // min over returns log dist + alpha n
    bool sa_holds = true;
    double ee_margin = 0;
    double backward_margin = 0;       // max log|Df^{-j} tau| + c1 j at free strip states
    double free_stretch_margin = 0;   // min log|Df^k v| - c0 k over outside stretches k >= M0
    int nested_violations = 0;
    bool critical = false;
    bool controlled = true;
};

ControlReport control_orbit(const Param& p, Point z, Tangent v, int N,
                            const std::vector<CriticalApprox>& crit, const ControlConfig& cfg = {},
                            double kappa = 0);

}  // namespace henon
