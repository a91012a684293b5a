#pragma once
#include <functional>
#include <vector>

#include "henonlab/core_maps.hpp"

namespace henon {

struct SingularData {
    double s_max = 0;
    double s_min = 0;
    double log_s_max = 0;
    double log_s_min = 0;
    Tangent e;  // most contracted
    Tangent f;  // most expanded
};

// Canonical sign: nonnegative second component, ties by nonnegative first.
Tangent canonical(Tangent t);

SingularData most_contracted(const Mat2& A);
// A scaled by exp(log_scale); log_abs_det is log|det| of the unscaled product
SingularData most_contracted(const Mat2& A, double log_scale, double log_abs_det);

// renormalized Df^n(z)
struct JacobianProduct {
    Mat2 m;
    double log_scale = 0;
    double log_abs_det = 0;
    Point image;
};
JacobianProduct jacobian_product(const Param& p, Point z, int n);

double op_norm(const Mat2& A);

SingularData e_n_data(const Param& p, Point z, int n);
Tangent e_n(const Param& p, Point z, int n);

struct FieldRegularity {
    double lip_ratio = 0;
    double order_gap = 0;
};
FieldRegularity field_regularity(const Param& p, Point z1, Point z2, int n, int m);

struct PerturbationReport {
    bool conclusions_hold = true;
    int first_violation = -1;  // 1-based index i
    double max_angle = 0;
    double min_growth_ratio = 0;  // min |A'^i v| / kappa^i
    double b = 0;
};
PerturbationReport matrix_perturbation_check(const std::vector<Mat2>& As,
                                             const std::vector<Mat2>& Aps, Tangent v,
                                             double kappa, double lambda);

struct IntegralCurve {
    int order = 0;
    Point center;
    std::vector<Point> nodes;
    std::vector<double> t;  // arclength parameter, t = 0 at center
    std::vector<Tangent> tangents;
    double step = 0;
};

using LineField = std::function<Tangent(Point)>;

IntegralCurve integrate_line_field(const LineField& field, Point z0, double half_len, double step,
                                   int orientation = 1);
IntegralCurve integrate_field(const Param& p, Point z0, int n, double half_len = -1,
                              double step = -1, int orientation = 1);

}  // namespace henon
