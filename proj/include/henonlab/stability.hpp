#pragma once
#include <string>
#include <vector>

#include "henonlab/horseshoe.hpp"
#include "henonlab/manifold.hpp"
#include "henonlab/tower.hpp"

namespace henon {

// Critical approximations on the generation-g leaf inside the critical strip.
std::vector<CriticalApprox> critical_set(const Param& p, int generation, int order = 8);

struct CriticalProximity {
    std::vector<double> point_dist;    // per generation 1..gen_cap, max over matched pairs
    std::vector<double> tangent_dist;  // angle between tangents
    std::vector<int> unmatched;        // points left over on either side
};
CriticalProximity critical_proximity(const Param& p, const Param& q, int gen_cap, int order = 8);
CriticalProximity critical_proximity(const std::vector<std::vector<CriticalApprox>>& A,
                                     const std::vector<std::vector<CriticalApprox>>& B);

double cantor_proximity(const IntervalSet& A, const IntervalSet& B);
double cantor_proximity(const HenonBase& p, const HenonBase& q, int depth);

struct StableProximity {
    double c0 = 0;  // node distance
    double c1 = 0;  // tangent angle
    double value = 0;
    int samples = 0;
};
StableProximity stable_curve_proximity(const HenonBase& p, const HenonBase& q, int order, int base_sample);

// per n = 0..N: sublattices matched by return time and base overlap > 1/2
std::vector<double> return_set_proximity(const ReturnPartition& A, const ReturnPartition& B);
std::vector<double> itinerary_proximity(const ReturnPartition& A, const ReturnPartition& B,
                                        const std::vector<std::vector<std::pair<int, int>>>& seqs);

struct ProximityReport {
    CriticalProximity crit;
    double cantor_symdiff = 0;
    double stable_c1 = 0;
    std::vector<double> return_symdiff;
    std::vector<double> itinerary_symdiff;
};

struct ProximityConfig {
    int gen_cap = 1;
    int crit_order = 8;
    int cantor_depth = 12;
    int stable_order = 8;
    int stable_samples = 8;
    int return_horizon = 0;  // 0: first-return horizon of p
    std::vector<std::vector<std::pair<int, int>>> itineraries;
};
ProximityReport proximity_report(const Param& p, const Param& q, const ProximityConfig& cfg = {});

// first n with a regular return on either side of Omega0, 0 if none up to cap
int first_return_horizon(const HenonBase& base, int cap = 20);

struct LyapunovEstimate {
    double exponent = 0;
    bool chaotic = false;
};
LyapunovEstimate lyapunov_filter(const Param& p, long n, Point z0 = {0.1, 0}, long burn = 1000);

struct StabilityConfig {
    long n_burn = 10000;
    long n_keep = 1000000;
    long lyap_n = 100000;
    Point seed{0.1, 0};
    Point control_seed{-0.15, 0};
    int dict_size = 16;
    double level = 0.99;
    bool tower = true;
    int horizon = 16;
    int cantor_depth = 15;
    int ulam_bins = 64;
    int ulam_samples = 64;
    int k_max = 6;
    int L_max = 16;
    bool proximity = true;
};

// Full horseshoe-to-tower pipeline at one parameter.
struct TowerRun {
    std::shared_ptr<const HenonBase> base;
    std::vector<std::shared_ptr<const CantorApprox>> cantor;
    ReturnPartition part;
    QuotientMap q;
    Density rho;
    LiftGeometry geom;
    LiftedMeasure nu;
    GeometricFit tail;
    EmpiricalMeasure saturated;
};
TowerRun run_tower(const Param& p, const StabilityConfig& cfg = {});

struct StabilityRow {
    Param p;
    double param_dist = 0;
    double weak_star = 0;    // Birkhoff cloud against the base cloud
    double error_bar = 0;
    double tower_weak_star = -1;  // saturated tower measure against the base one, -1 if not run
    double cross_method = -1;     // Birkhoff against tower at this parameter
    double cross_bar = -1;
    double lyapunov = 0;
    bool chaotic = false;
    bool quarantined = false;
    std::string reason;
    double crit_gen1 = -1;
    double cantor_symdiff = -1;
};

struct StabilityCurve {
    Param base;
    double base_lyapunov = 0;
    bool base_chaotic = false;
    double control = 0;      // different-seed Birkhoff distance at the base parameter
    double control_bar = 0;
    std::vector<StabilityRow> rows;  // sorted by param_dist
};

// perturbations are absolute offsets in a
StabilityCurve stability_experiment(const Param& base, const std::vector<double>& da, const StabilityConfig& cfg = {});

constexpr const char* kStabilityCsvVersion = "henonlab-stability-csv v1";
std::string stability_to_csv(const StabilityCurve& c);
std::vector<StabilityRow> stability_from_csv(const std::string& text);  // VersionError on unknown header

}  // namespace henon
