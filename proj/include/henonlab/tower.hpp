#pragma once
#include <array>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "henonlab/horseshoe.hpp"

namespace henon {

struct QuotientBranch {
    int n = 0;       // return time
    int j = 0;
    int source = 0;
    int target = 0;
    bool relaxed = false;
    Interval domain;
    IntervalSet trace;
    MonotoneMap map;
};

// Return map on the base, stable curves collapsed.
struct QuotientMap {
    const PlaneModel* model = nullptr;
    std::array<Interval, 2> omega0;
    IntervalSet lambda;  // deepest Cantor level (reference support)
    IntervalSet domain;  // union of branch traces
    std::vector<QuotientBranch> branches;  // sorted by domain

    int branch_at(double x) const;  // -1 when x lies in no branch domain
    std::optional<double> apply(double x) const;
};

QuotientMap build_quotient(const ReturnPartition& part, const PlaneModel& model);

struct Density {
    std::vector<Interval> bins;
    std::vector<double> mass;     // invariant probability of each bin
    std::vector<double> ref;      // reference measure of each bin
    std::vector<double> values;   // mass / ref
    std::vector<bool> support;
    double M = 0;                 // max(sup rho, 1/inf rho) over the support
    double residual = 0;          // |pi P - pi|_1
    int iterations = 0;
    int components = 1;           // strongly connected classes of the support
    bool reducible = false;
    double lost_fraction = 0;     // samples without a branch
    double leak = 0;              // transition mass dropped outside the kept class

    int bin_of(double x) const;   // -1 outside every bin
    double operator()(double x) const;
};

struct UlamMatrix {
    std::vector<std::vector<std::pair<int, double>>> rows;  // sparse, row-stochastic on kept rows
};

// Invariant density of the quotient map; bins split evenly over the nonempty Omega0 sides.
Density ulam_density(const QuotientMap& q, int B, int samples_per_bin);

// Quadratic map x -> 1 - a x^2 on [-1, 1], Lebesgue reference measure.
Density ulam_quadratic(double a, int B, int samples_per_bin);
// exact L1 distance between a binned density on [-1, 1] and 1/(pi sqrt(1 - x^2))
double arcsine_l1(const Density& d);

// Left fixed vector of a row-stochastic matrix by lazy power iteration.
std::vector<double> stationary_vector(const UlamMatrix& P, double tol, int max_iter, double* residual,
                                      int* iterations);

struct TestFunction {
    std::string name;
    std::function<double(Point)> f;
    double lip = 1;
    double sup = 1;  // on [-2, 2]^2
};

// "bl-dict-v1": x, y, x^2, xy, y^2 and dict_size trig products, all Lipschitz 1 on [-2, 2]^2.
std::vector<TestFunction> bl_dictionary(int dict_size);
constexpr const char* kDictionaryVersion = "bl-dict-v1";

double discretize(const std::function<double(Point)>& phi, const std::vector<Point>& curve);
double discretize(const std::function<double(Point)>& phi, const PlaneModel& model, double x, int nodes = 129);

struct QuadratureNode {
    double x = 0;
    double w = 0;
    int branch = -1;
};
// Gauss-Legendre nodes on every support bin cut with the quotient domain, weighted by the density.
std::vector<QuadratureNode> base_quadrature(const QuotientMap& q, const Density& rho, int order = 4);

struct BowenConfig {
    int k_max = 6;
    int order = 4;         // Gauss-Legendre points per piece
    int curve_nodes = 129;
};

struct BowenResult {
    std::vector<double> terms;     // k = 0..k_max
    std::vector<double> gaps;      // |terms[k+1] - terms[k]|
    std::vector<double> var_bound; // var phi(k) = Lip C b^k
    double C = 0;                  // fitted contraction constant of the return map
    double limit = 0;
    double gap = 0;                // max successive difference over the tail half
    bool cauchy_ok = false;
};

// Stable-segment lengths after k returns along each node's orbit, k = 0..k_max.
struct LiftGeometry {
    std::vector<QuadratureNode> nodes;
    std::vector<Point> start;               // H(x)
    std::vector<Point> image;               // f^R(H(x))
    std::vector<int> R;
    std::vector<std::vector<double>> half;  // half[i][k]
    std::vector<std::vector<Point>> curve;  // stable curve through H(x)
    std::vector<Tangent> dir;               // stable direction at the image
    std::vector<int> depth;                 // returns resolved inside the quotient domain
    double escaped = 0;                     // node weight with depth < k_max
    double C = 0;  // max of 2 half[i][k] / b^k over resolved returns
    double b = 0;
    int k_max = 0;
};
LiftGeometry lift_geometry(const QuotientMap& q, const Density& rho, const BowenConfig& cfg = {});

BowenResult bowen_lift(const LiftGeometry& g, const TestFunction& phi, int curve_nodes = 129);

struct LiftedMeasure {
    std::vector<double> base_x;
    std::vector<double> param;  // position along the stable curve
    std::vector<Point> points;
    std::vector<double> weights;
    std::vector<int> R;
    int k_used = 0;
    double cauchy_gap = 0;  // var bound for Lipschitz-1 test functions at k_used
};
LiftedMeasure lift_measure(const LiftGeometry& g, int k_used);

struct InvarianceReport {
    double residual = 0;
    double bound = 0;
    double tv_bins = 0;
};
InvarianceReport lifted_invariance_check(const QuotientMap& q, const Density& rho, const LiftedMeasure& nu,
                                         const TestFunction& phi);

struct EmpiricalMeasure {
    std::vector<Point> points;
    std::vector<double> weights;
    std::string tag;              // birkhoff | saturated
    double tail_bound = 0;        // saturated: truncated mass bound
    double mean_return = 0;       // saturated: sum w R over sum w
    long batch_size = 0;          // birkhoff: consecutive points per batch
};

// |sum w (phi(f z) - phi(z))|
double f_invariance_residual(const EmpiricalMeasure& mu, const PlaneModel& model, const TestFunction& phi);

EmpiricalMeasure saturate(const LiftedMeasure& nu, const PlaneModel& model, int L_max,
                          const GeometricFit* tail = nullptr);

EmpiricalMeasure birkhoff_srb(const Param& p, Point z0, long n_burn, long n_keep);
// Birkhoff average of g along the kept orbit, without storing it
double birkhoff_average(const Param& p, Point z0, long n_burn, long n_keep, const std::function<double(Point)>& g);

std::vector<double> moments(const EmpiricalMeasure& mu, const std::vector<TestFunction>& dict);
// standard errors of the moments: batch means for Birkhoff clouds, zero for quadrature clouds
std::vector<double> moment_errors(const EmpiricalMeasure& mu, const std::vector<TestFunction>& dict,
                                  int batches = 20);

double measure_compare(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, int dict_size);
double measure_compare(const std::vector<double>& mu_moments, const std::vector<double>& nu_moments);

// Bonferroni-corrected two-sided z for the dictionary at confidence `level`.
double dictionary_z(size_t features, double level = 0.99);
// error bar of measure_compare: z * max over features of sqrt(se_mu^2 + se_nu^2)
double compare_error_bar(const std::vector<double>& se_mu, const std::vector<double>& se_nu, double level = 0.99);

std::string measure_to_csv(const EmpiricalMeasure& mu);
std::string measure_to_binned_json(const EmpiricalMeasure& mu, int nx, int ny, Interval xr = {-2, 2},
                                   Interval yr = {-2, 2});

}  // namespace henon
