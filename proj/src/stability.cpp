#include "henonlab/stability.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "henonlab/contracted_field.hpp"
#include "henonlab/errors.hpp"
#include "henonlab/parallel.hpp"

namespace henon {

namespace {

double overlap(Interval u, Interval v) { return std::max(0.0, std::min(u.hi, v.hi) - std::max(u.lo, v.lo)); }

std::vector<double> spread(const IntervalSet& S, int k) {
    std::vector<double> out;
    double L = S.length();
    if (L <= 0) return out;
    const auto& ivs = S.intervals();
    size_t j = 0;
    double acc = 0;
    for (int s = 0; s < k; ++s) {
        double t = (s + 0.5) / k * L;
        while (j + 1 < ivs.size() && acc + ivs[j].length() < t) acc += ivs[j++].length();
        out.push_back(std::min(ivs[j].hi, ivs[j].lo + (t - acc)));
    }
    return out;
}

}  // namespace

// ---------------------------------------------------------------- critical points

std::vector<CriticalApprox> critical_set(const Param& p, int generation, int order) {
    if (generation < 1) throw ConfigError("critical_set: generation must be >= 1");
    ManifoldData md = build_manifold(p, order);
    LeafSegment W = unstable_leaf(md, generation, 1e-3).restricted_x(-p.delta, p.delta);
    std::vector<CriticalApprox> out = find_critical_approx(p, W, order);
    // one ulp of the generator parameter moves the point by ~1e-9; finish on the osculating parabola
    for (CriticalApprox& ca : out) {
        auto r = local_binding(p, {ca.point, ca.tangent, ca.curvature}, order, 1e-8);
        if (r && dist(r->point, ca.point) < 1e-8) {
            ca.point = r->point;
            ca.tangent = r->tangent;
            ca.residual = r->residual;
        }
    }
    return out;
}

CriticalProximity critical_proximity(const std::vector<std::vector<CriticalApprox>>& A,
                                     const std::vector<std::vector<CriticalApprox>>& B) {
    CriticalProximity r;
    size_t G = std::min(A.size(), B.size());
    for (size_t g = 0; g < G; ++g) {
        struct Pair {
            double d;
            size_t i, j;
        };
        std::vector<Pair> pairs;
        for (size_t i = 0; i < A[g].size(); ++i)
            for (size_t j = 0; j < B[g].size(); ++j) pairs.push_back({dist(A[g][i].point, B[g][j].point), i, j});
        std::sort(pairs.begin(), pairs.end(), [](const Pair& u, const Pair& v) {
            return u.d < v.d || (u.d == v.d && (u.i < v.i || (u.i == v.i && u.j < v.j)));
        });
        std::vector<bool> ua(A[g].size(), false), ub(B[g].size(), false);
        double pd = 0, td = 0;
        size_t matched = 0;
        for (const Pair& pr : pairs) {
            if (ua[pr.i] || ub[pr.j]) continue;
            ua[pr.i] = ub[pr.j] = true;
            ++matched;
            pd = std::max(pd, pr.d);
            td = std::max(td, line_angle(A[g][pr.i].tangent, B[g][pr.j].tangent));
        }
        r.point_dist.push_back(pd);
        r.tangent_dist.push_back(td);
        r.unmatched.push_back(static_cast<int>(A[g].size() + B[g].size() - 2 * matched));
    }
    return r;
}

CriticalProximity critical_proximity(const Param& p, const Param& q, int gen_cap, int order) {
    std::vector<std::vector<CriticalApprox>> A, B;
    for (int g = 1; g <= gen_cap; ++g) {
        A.push_back(critical_set(p, g, order));
        B.push_back(critical_set(q, g, order));
    }
    return critical_proximity(A, B);
}

// ---------------------------------------------------------------- Cantor sets, stable curves

double cantor_proximity(const IntervalSet& A, const IntervalSet& B) { return A.symdiff(B).length(); }

double cantor_proximity(const HenonBase& p, const HenonBase& q, int depth) {
    return cantor_proximity(cantor_pipeline(p, depth).back()->set, cantor_pipeline(q, depth).back()->set);
}

StableProximity stable_curve_proximity(const HenonBase& p, const HenonBase& q, int order, int base_sample) {
    IntervalSet shared = p.omega0_set().intersect(q.omega0_set());
    if (shared.length() <= 0) throw EmptyIntersectionError("stable_curve_proximity: no shared base points");
    std::vector<double> xs = spread(shared, base_sample);
    std::vector<StableProximity> per(xs.size());
    parallel_for(xs.size(), [&](size_t i) {
        IntegralCurve u = build_stable_curve(p, xs[i], order).curve;
        IntegralCurve v = build_stable_curve(q, xs[i], order).curve;
        StableProximity& s = per[i];
        size_t n = std::min(u.nodes.size(), v.nodes.size());
        bool aligned = u.nodes.size() == v.nodes.size() && u.step == v.step;
        if (aligned) {
            for (size_t k = 0; k < n; ++k) {
                s.c0 = std::max(s.c0, dist(u.nodes[k], v.nodes[k]));
                s.c1 = std::max(s.c1, line_angle(u.tangents[k], v.tangents[k]));
            }
        } else {
            s.c0 = curve_distance(u, v);
            for (size_t k = 0; k < n; ++k) s.c1 = std::max(s.c1, line_angle(u.tangents[k], v.tangents[k]));
        }
    });
    StableProximity r;
    for (const StableProximity& s : per) {
        r.c0 = std::max(r.c0, s.c0);
        r.c1 = std::max(r.c1, s.c1);
        r.value = std::max(r.value, s.c0 + s.c1);
    }
    r.samples = static_cast<int>(xs.size());
    return r;
}

// ---------------------------------------------------------------- return sets

std::vector<double> return_set_proximity(const ReturnPartition& A, const ReturnPartition& B) {
    int N = std::min(A.horizon, B.horizon);
    std::vector<double> out(N + 1, 0);
    for (int n = 0; n <= N; ++n) {
        std::vector<const Sublattice*> sa, sb;
        for (const Sublattice& s : A.returns)
            if (s.n == n) sa.push_back(&s);
        for (const Sublattice& s : B.returns)
            if (s.n == n) sb.push_back(&s);
        std::vector<bool> used(sb.size(), false);
        double d = 0;
        for (const Sublattice* s : sa) {
            int best = -1;
            double bo = 0;
            for (size_t j = 0; j < sb.size(); ++j) {
                if (used[j]) continue;
                double o = overlap(s->base, sb[j]->base);
                if (o > 0.5 * std::max(s->base.length(), sb[j]->base.length()) && o > bo) {
                    bo = o;
                    best = static_cast<int>(j);
                }
            }
            if (best < 0) {
                d += s->trace.length();
            } else {
                used[best] = true;
                d += s->trace.symdiff(sb[best]->trace).length();
            }
        }
        for (size_t j = 0; j < sb.size(); ++j)
            if (!used[j]) d += sb[j]->trace.length();
        out[n] = d;
    }
    return out;
}

std::vector<double> itinerary_proximity(const ReturnPartition& A, const ReturnPartition& B,
                                        const std::vector<std::vector<std::pair<int, int>>>& seqs) {
    std::vector<double> out;
    for (const auto& s : seqs) out.push_back(itinerary_set(A, s).symdiff(itinerary_set(B, s)).length());
    return out;
}

int first_return_horizon(const HenonBase& base, int cap) {
    for (int n = 1; n <= cap; ++n)
        for (int s = 0; s < 2; ++s)
            if (base.omega0(s).length() > 0 && detect_regular_return(base, base.omega0(s), n)) return n;
    return 0;
}

ProximityReport proximity_report(const Param& p, const Param& q, const ProximityConfig& cfg) {
    ProximityReport r;
    HenonBase A(p), B(q);
    r.crit = critical_proximity(p, q, cfg.gen_cap, cfg.crit_order);
    auto ca = cantor_pipeline(A, cfg.cantor_depth), cb = cantor_pipeline(B, cfg.cantor_depth);
    r.cantor_symdiff = cantor_proximity(ca.back()->set, cb.back()->set);
    r.stable_c1 = stable_curve_proximity(A, B, cfg.stable_order, cfg.stable_samples).value;
    int N = cfg.return_horizon > 0 ? cfg.return_horizon : first_return_horizon(A);
    if (N > 0) {
        ReturnPartition pa = build_return_partition(A, N, ca.back());
        ReturnPartition pb = build_return_partition(B, N, cb.back());
        r.return_symdiff = return_set_proximity(pa, pb);
        r.itinerary_symdiff = itinerary_proximity(pa, pb, cfg.itineraries);
    }
    return r;
}

// ---------------------------------------------------------------- chaoticity

LyapunovEstimate lyapunov_filter(const Param& p, long n, Point z0, long burn) {
    if (n < 10000) throw ConfigError("lyapunov_filter: need at least 1e4 iterates");
    Point z = z0;
    auto check = [](Point q) {
        if (!(std::abs(q.x) <= 10 && std::abs(q.y) <= 10)) throw DivergenceError("orbit left [-10, 10]^2");
    };
    for (long i = 0; i < burn; ++i) {
        z = henon_step(p, z);
        check(z);
    }
    Tangent v{1, 0};
    double s = 0;
    for (long i = 0; i < n; ++i) {
        Mat2 J = henon_jacobian(p, z);
        v = {J.a * v.v1 + J.b * v.v2, J.c * v.v1 + J.d * v.v2};
        double r = std::hypot(v.v1, v.v2);
        if (r == 0) {  // b = 0 and the orbit hit the critical point
            v = {1, 0};
            s += std::log(std::numeric_limits<double>::min());
        } else {
            s += std::log(r);
            v = {v.v1 / r, v.v2 / r};
        }
        z = henon_step(p, z);
        check(z);
    }
    LyapunovEstimate e;
    e.exponent = s / n;
    e.chaotic = e.exponent > 0.01;
    return e;
}

// ---------------------------------------------------------------- experiments

TowerRun run_tower(const Param& p, const StabilityConfig& cfg) {
    TowerRun t;
    auto base = std::make_shared<const HenonBase>(p);
    t.base = base;
    t.cantor = cantor_pipeline(*base, cfg.cantor_depth);
    t.part = build_return_partition(*base, cfg.horizon, t.cantor.back());
    t.q = build_quotient(t.part, *base);
    t.rho = ulam_density(t.q, cfg.ulam_bins, cfg.ulam_samples);
    BowenConfig bc;
    bc.k_max = cfg.k_max;
    t.geom = lift_geometry(t.q, t.rho, bc);
    t.nu = lift_measure(t.geom, cfg.k_max);
    int from = cfg.horizon;
    auto counts = t.part.sublattice_counts();
    for (int n = 0; n <= cfg.horizon; ++n)
        if (counts[n] > 0) {
            from = n;
            break;
        }
    if (from < cfg.horizon) t.tail = fit_geometric_tail(t.part.tail(), from, cfg.horizon);
    t.saturated = saturate(t.nu, *base, cfg.L_max, from < cfg.horizon ? &t.tail : nullptr);
    return t;
}

StabilityCurve stability_experiment(const Param& base, const std::vector<double>& da, const StabilityConfig& cfg) {
    StabilityCurve c;
    c.base = base;
    auto D = bl_dictionary(cfg.dict_size);
    LyapunovEstimate le = lyapunov_filter(base, cfg.lyap_n, cfg.seed);
    c.base_lyapunov = le.exponent;
    c.base_chaotic = le.chaotic;

    EmpiricalMeasure b0 = birkhoff_srb(base, cfg.seed, cfg.n_burn, cfg.n_keep);
    auto m0 = moments(b0, D), s0 = moment_errors(b0, D);
    b0 = {};
    {
        EmpiricalMeasure bc = birkhoff_srb(base, cfg.control_seed, cfg.n_burn, cfg.n_keep);
        auto mc = moments(bc, D), sc = moment_errors(bc, D);
        c.control = measure_compare(m0, mc);
        c.control_bar = compare_error_bar(s0, sc, cfg.level);
    }
    std::vector<double> t0;
    if (cfg.tower) {
        try {
            t0 = moments(run_tower(base, cfg).saturated, D);
        } catch (const Error&) {
            t0.clear();
        }
    }
    std::vector<double> zero(D.size(), 0);

    c.rows.resize(da.size());
    parallel_for(da.size(), [&](size_t i) {
        StabilityRow& r = c.rows[i];
        try {
            r.p = Param::make(base.a + da[i], base.b, base.Delta, base.alpha, base.horizon);
        } catch (const Error& e) {
            r.p = base;
            r.p.a = base.a + da[i];
            r.param_dist = std::abs(da[i]);
            r.quarantined = true;
            r.reason = e.what();
            return;
        }
        r.param_dist = std::abs(da[i]);
        try {
            LyapunovEstimate l = lyapunov_filter(r.p, cfg.lyap_n, cfg.seed);
            r.lyapunov = l.exponent;
            r.chaotic = l.chaotic;
            EmpiricalMeasure b = birkhoff_srb(r.p, cfg.seed, cfg.n_burn, cfg.n_keep);
            auto m = moments(b, D), s = moment_errors(b, D);
            b = {};
            r.weak_star = measure_compare(m0, m);
            r.error_bar = compare_error_bar(s0, s, cfg.level);
            if (cfg.tower) {
                auto tm = moments(run_tower(r.p, cfg).saturated, D);
                if (!t0.empty()) r.tower_weak_star = measure_compare(t0, tm);
                r.cross_method = measure_compare(m, tm);
                r.cross_bar = compare_error_bar(s, zero, cfg.level);
            }
            if (cfg.proximity) {
                r.crit_gen1 = critical_proximity(base, r.p, 1).point_dist.at(0);
                r.cantor_symdiff = cantor_proximity(HenonBase(base), HenonBase(r.p), 12);
            }
        } catch (const Error& e) {
            r.quarantined = true;
            r.reason = e.what();
        }
    });
    std::stable_sort(c.rows.begin(), c.rows.end(),
                     [](const StabilityRow& u, const StabilityRow& v) { return u.param_dist < v.param_dist; });
    return c;
}

// ---------------------------------------------------------------- CSV

namespace {
const char* kColumns =
    "a,b,param_dist,weak_star,error_bar,tower_weak_star,cross_method,cross_bar,lyapunov,chaotic,quarantined,"
    "crit_gen1,cantor_symdiff,reason";
}

std::string stability_to_csv(const StabilityCurve& c) {
    std::ostringstream os;
    os.precision(17);
    os << "# " << kStabilityCsvVersion << '\n' << kColumns << '\n';
    for (const StabilityRow& r : c.rows) {
        std::string reason = r.reason;
        std::replace(reason.begin(), reason.end(), ',', ';');
        std::replace(reason.begin(), reason.end(), '\n', ' ');
        os << r.p.a << ',' << r.p.b << ',' << r.param_dist << ',' << r.weak_star << ',' << r.error_bar << ','
           << r.tower_weak_star << ',' << r.cross_method << ',' << r.cross_bar << ',' << r.lyapunov << ','
           << r.chaotic << ',' << r.quarantined << ',' << r.crit_gen1 << ',' << r.cantor_symdiff << ',' << reason
           << '\n';
    }
    return os.str();
}

std::vector<StabilityRow> stability_from_csv(const std::string& text) {
    std::istringstream is(text);
    std::string line;
    if (!std::getline(is, line) || line != std::string("# ") + kStabilityCsvVersion)
        throw VersionError("stability csv: unknown version line '" + line + "'");
    if (!std::getline(is, line) || line != kColumns) throw VersionError("stability csv: unexpected columns");
    std::vector<StabilityRow> rows;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::stringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) f.push_back(cell);
        if (line.back() == ',') f.push_back("");
        if (f.size() != 14) throw ConfigError("stability csv: wrong field count");
        StabilityRow r;
        r.p.a = std::stod(f[0]);
        r.p.b = std::stod(f[1]);
        r.param_dist = std::stod(f[2]);
        r.weak_star = std::stod(f[3]);
        r.error_bar = std::stod(f[4]);
        r.tower_weak_star = std::stod(f[5]);
        r.cross_method = std::stod(f[6]);
        r.cross_bar = std::stod(f[7]);
        r.lyapunov = std::stod(f[8]);
        r.chaotic = f[9] == "1";
        r.quarantined = f[10] == "1";
        r.crit_gen1 = std::stod(f[11]);
        r.cantor_symdiff = std::stod(f[12]);
        r.reason = f[13];
        rows.push_back(r);
    }
    return rows;
}

}  // namespace henon
