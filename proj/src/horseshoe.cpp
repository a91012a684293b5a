#include "henonlab/horseshoe.hpp"

#include <algorithm>
#include <math.h>

#include <boost/math/interpolators/pchip.hpp>
#include <boost/math/tools/toms748_solve.hpp>
#include <map>
#include <cmath>
#include <limits>
#include <numbers>

#include "henonlab/errors.hpp"
#include "henonlab/parallel.hpp"

namespace henon {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// bisection on a predicate with pred(a) != pred(b); returns a point next to the switch
template <class Pred>
double bisect_switch(Pred pred, double a, double b) {
    bool pa = pred(a);
    for (int it = 0; it < 200; ++it) {
        double m = 0.5 * (a + b);
        if (m <= std::min(a, b) || m >= std::max(a, b)) break;
        if (pred(m) == pa)
            a = m;
        else
            b = m;
    }
    return 0.5 * (a + b);
}

// root of a continuous f with a sign change on [a, b]
template <class F>
double toms748(F f, double a, double b, double fa, double fb) {
    if (fa == 0) return a;
    if (fb == 0) return b;
    std::uintmax_t iters = 100;
    auto tol = [](double u, double v) { return std::abs(u - v) <= 4 * std::numeric_limits<double>::epsilon() * std::max(std::abs(u), std::abs(v)); };
    auto r = boost::math::tools::toms748_solve(f, a, b, fa, fb, tol, iters);
    return 0.5 * (r.first + r.second);
}

double hermite(double x0, double x1, double y0, double y1, double d0, double d1, double x, double* deriv) {
    double h = x1 - x0, t = (x - x0) / h;
    double t2 = t * t, t3 = t2 * t;
    double h00 = 2 * t3 - 3 * t2 + 1, h10 = t3 - 2 * t2 + t, h01 = -2 * t3 + 3 * t2, h11 = t3 - t2;
    if (deriv) {
        double g00 = 6 * t2 - 6 * t, g10 = 3 * t2 - 4 * t + 1, g01 = -6 * t2 + 6 * t, g11 = 3 * t2 - 2 * t;
        *deriv = (g00 * y0 + g01 * y1) / h + g10 * d0 + g11 * d1;
    }
    return h00 * y0 + h10 * h * d0 + h01 * y1 + h11 * h * d1;
}

size_t segment_of(const std::vector<double>& xs, double x) {
    auto it = std::upper_bound(xs.begin(), xs.end(), x);
    size_t i = it == xs.begin() ? 0 : static_cast<size_t>(it - xs.begin()) - 1;
    return std::min(i, xs.size() - 2);
}

}  // namespace

// ---------------------------------------------------------------- MonotoneMap

MonotoneMap::MonotoneMap(std::vector<double> xs, std::vector<double> ys) {
    if (xs.size() < 4 || xs.size() != ys.size()) throw ConfigError("MonotoneMap: need >= 4 matching nodes");
    for (size_t i = 1; i < xs.size(); ++i)
        if (!(xs[i] > xs[i - 1])) throw ConfigError("MonotoneMap: nodes must increase");
    bool inc = ys.back() > ys.front();
    for (size_t i = 1; i < ys.size(); ++i)
        if (inc ? ys[i] < ys[i - 1] : ys[i] > ys[i - 1]) throw ConfigError("MonotoneMap: values not monotone");
    std::vector<double> bx(xs), by(ys);
    boost::math::interpolators::pchip<std::vector<double>> pc(std::move(bx), std::move(by));
    ds_.resize(xs.size());
    for (size_t i = 0; i < xs.size(); ++i) ds_[i] = pc.prime(xs[i]);
    xs_ = std::move(xs);
    ys_ = std::move(ys);
}

MonotoneMap MonotoneMap::affine(Interval from, Interval to, bool reversed) {
    std::vector<double> xs(4), ys(4);
    for (int i = 0; i < 4; ++i) {
        double t = i / 3.0;
        xs[i] = i == 3 ? from.hi : from.lo + t * from.length();
        double u = reversed ? 1 - t : t;
        ys[i] = u == 1 ? to.hi : to.lo + u * to.length();
    }
    MonotoneMap m;
    m.xs_ = xs;
    m.ys_ = ys;
    double slope = (reversed ? -1 : 1) * to.length() / from.length();
    m.ds_.assign(4, slope);
    return m;
}

MonotoneMap MonotoneMap::from_nodes(std::vector<double> xs, std::vector<double> ys, std::vector<double> ds) {
    if (xs.size() < 2 || xs.size() != ys.size() || xs.size() != ds.size())
        throw ConfigError("MonotoneMap: node arrays differ in size");
    MonotoneMap m;
    m.xs_ = std::move(xs);
    m.ys_ = std::move(ys);
    m.ds_ = std::move(ds);
    return m;
}

double MonotoneMap::operator()(double x) const {
    size_t i = segment_of(xs_, x);
    return hermite(xs_[i], xs_[i + 1], ys_[i], ys_[i + 1], ds_[i], ds_[i + 1], x, nullptr);
}

double MonotoneMap::derivative(double x) const {
    size_t i = segment_of(xs_, x);
    double d = 0;
    hermite(xs_[i], xs_[i + 1], ys_[i], ys_[i + 1], ds_[i], ds_[i + 1], x, &d);
    return d;
}

Interval MonotoneMap::range() const {
    return {std::min(ys_.front(), ys_.back()), std::max(ys_.front(), ys_.back())};
}

double MonotoneMap::inverse(double y) const {
    bool inc = increasing();
    if (inc ? y <= ys_.front() : y >= ys_.front()) return xs_.front();
    if (inc ? y >= ys_.back() : y <= ys_.back()) return xs_.back();
    // node bracket, then bisection inside the cubic piece
    size_t lo = 0, hi = ys_.size() - 1;
    while (hi - lo > 1) {
        size_t m = (lo + hi) / 2;
        if ((ys_[m] <= y) == inc)
            lo = m;
        else
            hi = m;
    }
    double a = xs_[lo], b = xs_[hi];
    for (int it = 0; it < 200; ++it) {
        double m = 0.5 * (a + b);
        if (m <= a || m >= b) break;
        if (((*this)(m) <= y) == inc)
            a = m;
        else
            b = m;
    }
    return 0.5 * (a + b);
}

IntervalSet MonotoneMap::pullback(const IntervalSet& s) const {
    std::vector<Interval> out;
    IntervalSet clipped = s.intersect(range());
    for (const Interval& iv : clipped.intervals()) {
        double u = inverse(iv.lo), v = inverse(iv.hi);
        out.push_back({std::min(u, v), std::max(u, v)});
    }
    return IntervalSet(std::move(out));
}

// ---------------------------------------------------------------- PlaneModel

std::vector<Point> PlaneModel::stable_curve(double x, int nodes) const {
    Point z = lift(x);
    Tangent e = unit(stable_direction(z));
    double h = stable_half_length();
    std::vector<Point> out(nodes);
    for (int i = 0; i < nodes; ++i) {
        double t = nodes == 1 ? 0 : -h + 2 * h * i / (nodes - 1);
        out[i] = z + t * e;
    }
    return out;
}

// ---------------------------------------------------------------- Omega0 and the Henon base

std::array<Interval, 2> build_omega0(int Delta, double x0) {
    if (Delta < 1) throw ConfigError("build_omega0: Delta must be >= 1");
    int outer = Delta * Delta - 1;
    return {CriticalPartition::cell_interval(Delta, outer).shifted(x0),
            CriticalPartition::cell_interval(-Delta, outer).shifted(x0)};
}

HenonBase::HenonBase(const Param& p, HorseshoeConfig cfg) : p_(p), md_(build_manifold(p)), cfg_(cfg) { init(); }

HenonBase::HenonBase(ManifoldData md, HorseshoeConfig cfg) : p_(md.gen->p), md_(std::move(md)), cfg_(cfg) {
    init();
}

void HenonBase::init() {
    if (!md_.has_z0) throw HypothesisError("horseshoe: no critical approximation on W1");
    omega0_ = build_omega0(p_.Delta, x0());
    double span = 2.5 * p_.delta;
    LeafSegment W = unstable_leaf(md_, 1, 1e-3).restricted_x(x0() - span, x0() + span);
    if (W.s.size() < 2) throw HypothesisError("horseshoe: W1 does not cross the strip");
    const int M = 4096;
    double sa = W.s.front(), sb = W.s.back();
    std::vector<Jet> jets(M + 1);
    parallel_for(M + 1, [&](size_t i) { jets[i] = md_.gen->jet(sa + (sb - sa) * i / M); });
    if (jets.front().z.x > jets.back().z.x) std::reverse(jets.begin(), jets.end());
    tx_.clear();
    ty_.clear();
    tdy_.clear();
    tk_.clear();
    for (const Jet& j : jets) {
        if (!tx_.empty() && !(j.z.x > tx_.back())) throw HypothesisError("horseshoe: W1 not a graph over the strip");
        double sgn = j.tau.v1 < 0 ? -1 : 1;
        tx_.push_back(j.z.x);
        ty_.push_back(j.z.y);
        tdy_.push_back(j.tau.v2 / j.tau.v1);
        tk_.push_back(sgn * j.kappa);
    }
    table_range_ = {tx_.front(), tx_.back()};
}

double HenonBase::graph(double x) const {
    if (!table_range_.contains(x)) throw HypothesisError("horseshoe: point outside the W1 table");
    size_t i = segment_of(tx_, x);
    return hermite(tx_[i], tx_[i + 1], ty_[i], ty_[i + 1], tdy_[i], tdy_[i + 1], x, nullptr);
}

Jet HenonBase::lift_jet(double x) const {
    if (!table_range_.contains(x)) throw HypothesisError("horseshoe: lift outside the W1 table");
    size_t i = segment_of(tx_, x);
    double dy = 0;
    double y = hermite(tx_[i], tx_[i + 1], ty_[i], ty_[i + 1], tdy_[i], tdy_[i + 1], x, &dy);
    double w = (x - tx_[i]) / (tx_[i + 1] - tx_[i]);
    return {{x, y}, unit({1, dy}), (1 - w) * tk_[i] + w * tk_[i + 1]};
}

Jet HenonBase::orbit_jet(double x, int n) const {
    Jet j = lift_jet(x);
    for (int k = 0; k < n; ++k) j = push_jet(p_, j);
    return j;
}

HenonBase::CritCoord HenonBase::crit_coord(const Jet& j) const {
    CritCoord c;
    if (std::abs(j.z.x) >= p_.delta) {
        c.coord = j.z.x;
        return c;
    }
    c.in_strip = true;
    auto lb = local_binding(p_, j, cfg_.binding_order, 2 * p_.delta);
    if (!lb) {
        c.binding_failed = true;
        c.coord = j.z.x - x0();
        return c;
    }
    Tangent t = lb->tangent.v1 < 0 ? Tangent{-lb->tangent.v1, -lb->tangent.v2} : lb->tangent;
    c.coord = dot({j.z.x - lb->point.x, j.z.y - lb->point.y}, t);
    c.binding = lb;
    return c;
}

double HenonBase::exclusion_radius(int n) const {
    return std::exp(-(std::floor(p_.Delta + p_.alpha * n) + 1));
}

Tangent HenonBase::stable_direction(Point z) const { return e_n(p_, z, cfg_.slide_order); }

std::optional<double> HenonBase::slide(Point z) const {
    if (!table_range_.contains(z.x)) return std::nullopt;
    auto G = [&](Point q) { return q.y - graph(q.x); };
    double g0 = G(z);
    if (g0 == 0) return z.x;
    const double h = p_.b, L = stable_half_length();
    Tangent prev;
    try {
        prev = e_n(p_, z, cfg_.slide_order);
    } catch (const Error&) {
        return std::nullopt;
    }
    // orient so that |G| decreases
    auto slope_at = [&](double x) {
        size_t i = segment_of(tx_, x);
        double d = 0;
        hermite(tx_[i], tx_[i + 1], ty_[i], ty_[i + 1], tdy_[i], tdy_[i + 1], x, &d);
        return d;
    };
    double dG = prev.v2 - slope_at(z.x) * prev.v1;
    if (dG == 0) return std::nullopt;
    if ((dG > 0) == (g0 > 0)) prev = -1.0 * prev;
    auto field = [&](Point q, Tangent ref) {
        Tangent e = e_n(p_, q, cfg_.slide_order);
        return dot(e, ref) < 0 ? -1.0 * e : e;
    };
    auto rk4 = [&](Point q, Tangent ref, double s) {
        Tangent k1 = field(q, ref);
        Tangent k2 = field(q + (0.5 * s) * k1, k1);
        Tangent k3 = field(q + (0.5 * s) * k2, k2);
        Tangent k4 = field(q + s * k3, k3);
        Tangent d{(k1.v1 + 2 * k2.v1 + 2 * k3.v1 + k4.v1) / 6, (k1.v2 + 2 * k2.v2 + 2 * k3.v2 + k4.v2) / 6};
        return std::pair{q + s * d, k4};
    };
    try {
        Point q = z;
        double travelled = 0;
        while (travelled < L) {
            auto [q1, t1] = rk4(q, prev, h);
            if (!table_range_.contains(q1.x)) return std::nullopt;
            double g1 = G(q1);
            if ((g1 > 0) != (g0 > 0) || g1 == 0) {
                auto Gs = [&](double m) { return G(rk4(q, prev, m).first); };
                double sc = toms748(Gs, 0.0, h, G(q), g1);
                return rk4(q, prev, sc).first.x;
            }
            q = q1;
            prev = t1;
            travelled += h;
        }
    } catch (const Error&) {
        return std::nullopt;
    }
    return std::nullopt;
}

std::vector<Point> HenonBase::stable_curve(double x, int nodes) const {
    IntegralCurve c = integrate_field(p_, lift(x), cfg_.slide_order, stable_half_length(), p_.b / 10);
    std::vector<Point> out(nodes);
    double t0 = c.t.front(), t1 = c.t.back();
    for (int i = 0; i < nodes; ++i) {
        double t = nodes == 1 ? 0 : t0 + (t1 - t0) * i / (nodes - 1);
        size_t k = segment_of(c.t, t);
        double w = (t - c.t[k]) / (c.t[k + 1] - c.t[k]);
        out[i] = {(1 - w) * c.nodes[k].x + w * c.nodes[k + 1].x, (1 - w) * c.nodes[k].y + w * c.nodes[k + 1].y};
    }
    return out;
}

// ---------------------------------------------------------------- Cantor sets

std::vector<Interval> exclusion_windows(const std::function<double(double)>& coord, Interval iv, double radius,
                                        int samples, double min_window) {
    std::vector<Interval> out;
    if (!(iv.hi > iv.lo)) return out;
    int M = std::max(samples, 1);
    std::vector<double> xs(M + 1), cs(M + 1);
    for (int i = 0; i <= M; ++i) {
        xs[i] = i == M ? iv.hi : iv.lo + iv.length() * i / M;
        cs[i] = coord(xs[i]);
    }
    auto bad = [&](double c) { return std::abs(c) <= radius; };
    auto pred = [&](double x) { return bad(coord(x)); };
    auto push = [&](double lo, double hi) {
        if (hi - lo < min_window && !(lo == iv.lo && hi == iv.hi))
            throw ResolutionError("exclusion window narrower than the resolution limit");
        out.push_back({lo, hi});
    };
    double open = bad(cs[0]) ? iv.lo : kNaN;
    for (int i = 0; i < M; ++i) {
        bool b0 = bad(cs[i]), b1 = bad(cs[i + 1]);
        if (!b0 && !b1) {
            if ((cs[i] > 0) != (cs[i + 1] > 0)) {
                double z = bisect_switch([&](double x) { return coord(x) > 0; }, xs[i], xs[i + 1]);
                if (!bad(coord(z))) continue;  // jump across the strip edge, no window
                double l = bisect_switch(pred, xs[i], z);
                double r = bisect_switch(pred, z, xs[i + 1]);
                push(l, r);
            }
        } else if (b0 != b1) {
            double t = bisect_switch(pred, xs[i], xs[i + 1]);
            if (!b0) {
                open = t;
            } else {
                push(open, t);
                open = kNaN;
            }
        }
    }
    if (!std::isnan(open)) push(open, iv.hi);
    return out;
}

CantorApprox omega_level0(const HenonBase& base) {
    CantorApprox c;
    c.level = 0;
    c.set = base.omega0_set();
    return c;
}

CantorApprox refine_cantor(const HenonBase& base, std::shared_ptr<const CantorApprox> prev) {
    if (!prev) throw ConfigError("refine_cantor: missing parent level");
    const int n = prev->level + 1;
    const double r = base.exclusion_radius(n);
    const auto& ivs = prev->set.intervals();
    std::vector<std::vector<Interval>> windows(ivs.size());
    std::vector<int> fallbacks(ivs.size(), 0);
    parallel_for(ivs.size(), [&](size_t i) {
        auto coord = [&](double x) {
            auto c = base.crit_coord(base.orbit_jet(x, n));
            fallbacks[i] += c.binding_failed;
            return c.coord;
        };
        windows[i] = exclusion_windows(coord, ivs[i], r, base.config().refine_samples, base.config().min_window);
    });
    std::vector<Interval> all;
    CantorApprox out;
    out.level = n;
    out.parent = prev;
    for (size_t i = 0; i < ivs.size(); ++i) {
        all.insert(all.end(), windows[i].begin(), windows[i].end());
        out.binding_fallbacks += fallbacks[i];
    }
    out.windows = static_cast<int>(all.size());
    out.set = prev->set.subtract(IntervalSet(all));
    double L = prev->set.length();
    out.exclusion_ratio = L > 0 ? (L - out.set.length()) / L : 0;
    return out;
}

std::vector<std::shared_ptr<const CantorApprox>> cantor_pipeline(const HenonBase& base, int depth) {
    std::vector<std::shared_ptr<const CantorApprox>> levels;
    levels.push_back(std::make_shared<const CantorApprox>(omega_level0(base)));
    for (int n = 1; n <= depth; ++n) levels.push_back(std::make_shared<const CantorApprox>(refine_cantor(base, levels.back())));
    return levels;
}

EnvelopeFit fit_exclusion_envelope(const std::vector<std::shared_ptr<const CantorApprox>>& levels, const Param& p) {
    EnvelopeFit f;
    f.rate = std::exp(-p.alpha * (1 - 3 * p.beta));
    double pre = std::pow(p.delta, 1 - 3 * p.beta);
    auto scaled = [&](size_t n) { return levels[n]->exclusion_ratio / (pre * std::pow(f.rate, n)); };
    // fit on the first half of the levels that exclude anything, hold out the rest
    std::vector<size_t> active;
    for (size_t n = 1; n < levels.size(); ++n)
        if (levels[n]->exclusion_ratio > 0) active.push_back(n);
    if (active.empty()) return f;
    size_t k = (active.size() + 1) / 2;
    f.fit_levels = static_cast<int>(k);
    for (size_t i = 0; i < k; ++i) f.C1 = std::max(f.C1, scaled(active[i]));
    for (size_t i = k; i < active.size(); ++i) f.worst_tail_ratio = std::max(f.worst_tail_ratio, scaled(active[i]) / f.C1);
    return f;
}

// ---------------------------------------------------------------- stable curves

StableCurveApprox build_stable_curve(const HenonBase& base, double x, int order) {
    const Param& p = base.param();
    StableCurveApprox s;
    s.base_x = x;
    s.order = order;
    Point z = base.lift(x);
    s.curve = integrate_field(p, z, order, base.stable_half_length(), p.b / 10);
    std::vector<Point> orbit(order + 1);
    orbit[0] = z;
    for (int j = 0; j < order; ++j) orbit[j + 1] = henon_step(p, orbit[j]);
    const IntegralCurve& c = s.curve;
    double T = std::min(-c.t.front(), c.t.back());
    double slope_sum = 0;
    int count = 0;
    for (double frac : {-1.0, -0.75, -0.5, -0.25, 0.25, 0.5, 0.75, 1.0}) {
        double t = frac * T;
        size_t k = segment_of(c.t, t);
        double w = (t - c.t[k]) / (c.t[k + 1] - c.t[k]);
        Point zeta{(1 - w) * c.nodes[k].x + w * c.nodes[k + 1].x, (1 - w) * c.nodes[k].y + w * c.nodes[k + 1].y};
        // difference propagated in closed form, no cancellation
        double dx = zeta.x - z.x, dy = zeta.y - z.y;
        std::vector<double> logs;
        for (int j = 0; j <= order; ++j) {
            logs.push_back(std::log(std::hypot(dx, dy)));
            double nx = -p.a * dx * (2 * orbit[j].x + dx) + dy;
            dy = p.b * dx;
            dx = nx;
        }
        // rounding floor: beyond it the transverse error dominates
        int J = 0;
        while (J < order && logs[J + 1] > std::log(1e-13)) ++J;
        if (J > 0) slope_sum += (logs[J] - logs[0]) / J;
        count += J > 0;
        s.contraction_log.push_back(std::move(logs));
    }
    s.mean_slope = count ? slope_sum / count : 0;
    return s;
}

double curve_distance(const IntegralCurve& u, const IntegralCurve& v) {
    auto one = [](const IntegralCurve& a, const IntegralCurve& b) {
        double h = 0;
        for (const Point& q : a.nodes) {
            double best = std::numeric_limits<double>::infinity();
            for (size_t k = 0; k + 1 < b.nodes.size(); ++k) {
                Tangent ab{b.nodes[k + 1].x - b.nodes[k].x, b.nodes[k + 1].y - b.nodes[k].y};
                Tangent aq{q.x - b.nodes[k].x, q.y - b.nodes[k].y};
                double L2 = dot(ab, ab);
                double t = L2 > 0 ? std::clamp(dot(ab, aq) / L2, 0.0, 1.0) : 0.0;
                best = std::min(best, std::hypot(aq.v1 - t * ab.v1, aq.v2 - t * ab.v2));
            }
            h = std::max(h, best);
        }
        return h;
    };
    return std::max(one(u, v), one(v, u));
}

// ---------------------------------------------------------------- regular returns

std::optional<Interval> covering_preimage(const std::function<std::optional<double>(double)>& g, Interval I,
                                          Interval window, Interval target, int samples) {
    int M = std::max(samples, 2);
    std::vector<double> xs(M + 1);
    std::vector<std::optional<double>> gs(M + 1);
    for (int i = 0; i <= M; ++i) {
        xs[i] = i == M ? I.hi : I.lo + I.length() * i / M;
        gs[i] = g(xs[i]);
    }
    int below = -1, above = -1;
    for (int i = 0; i <= M; ++i) {
        if (!gs[i]) continue;
        if (*gs[i] <= window.lo && (below < 0 || *gs[i] > *gs[below])) below = i;
        if (*gs[i] >= window.hi && (above < 0 || *gs[i] < *gs[above])) above = i;
    }
    if (below < 0 || above < 0) return std::nullopt;
    int lo = std::min(below, above), hi = std::max(below, above);
    bool inc = below < above;
    for (int i = lo; i < hi; ++i) {
        if (!gs[i + 1]) return std::nullopt;
        if (inc ? *gs[i + 1] < *gs[i] : *gs[i + 1] > *gs[i]) return std::nullopt;
    }
    auto solve = [&](double y) -> std::optional<double> {
        int k = lo;
        while (k < hi && (inc ? *gs[k + 1] < y : *gs[k + 1] > y)) ++k;
        int k1 = std::min(k + 1, hi);
        double ga = *gs[k] - y, gb = *gs[k1] - y;
        if ((ga > 0) == (gb > 0) && ga != 0 && gb != 0) return std::abs(ga) < std::abs(gb) ? xs[k] : xs[k1];
        bool undefined = false;
        auto f = [&](double x) {
            auto gx = g(x);
            if (!gx) {
                undefined = true;
                return 0.0;
            }
            return *gx - y;
        };
        double r = toms748(f, xs[k], xs[k1], ga, gb);
        if (undefined) return std::nullopt;
        return r;
    };
    auto u = solve(target.lo), v = solve(target.hi);
    if (!u || !v) return std::nullopt;
    return Interval{std::min(*u, *v), std::max(*u, *v)};
}

namespace {

// sub-interval of I whose n-th image has x in [lo, hi], assuming a fold-free image
std::optional<Interval> image_window(const HenonBase& base, Interval I, int n, double lo, double hi) {
    auto X = [&](double x) { return base.orbit_jet(x, n).z.x; };
    double xa = X(I.lo), xb = X(I.hi);
    bool inc = xb > xa;
    double mn = std::min(xa, xb), mx = std::max(xa, xb);
    if (mx < lo || mn > hi) return std::nullopt;
    auto solve = [&](double y) {
        if (y <= mn) return inc ? I.lo : I.hi;
        if (y >= mx) return inc ? I.hi : I.lo;
        return bisect_switch([&](double x) { return X(x) < y; }, I.lo, I.hi);
    };
    double u = solve(lo), v = solve(hi);
    return Interval{std::min(u, v), std::max(u, v)};
}

std::optional<RegularReturn> regular_return_free(const HenonBase& base, Interval I, int n) {
    const double margin = 0.03;
    for (int side = 0; side < 2; ++side) {
        Interval target = base.omega0(side);
        Interval w3 = target.expanded(base.config().cover_factor), w2 = target.expanded(2);
        auto J = image_window(base, I, n, w3.lo - margin, w3.hi + margin);
        if (!J || !(J->hi > J->lo)) continue;
        std::map<double, std::optional<double>> memo;
        auto g = [&](double x) {
            auto it = memo.find(x);
            if (it != memo.end()) return it->second;
            return memo[x] = base.slide(base.orbit_jet(x, n).z);
        };
        if (auto d = covering_preimage(g, *J, w3, target, base.config().cover_samples)) return RegularReturn{n, side, false, *d};
        if (base.config().allow_relaxed)
            if (auto d = covering_preimage(g, *J, w2, target, base.config().cover_samples)) return RegularReturn{n, side, true, *d};
    }
    return std::nullopt;
}

}  // namespace

std::optional<RegularReturn> detect_regular_return(const HenonBase& base, Interval I, int n, bool assume_free) {
    if (!assume_free) {
        int S = base.config().cell_samples;
        for (int i = 1; i <= S; ++i) {
            double x = I.lo + I.length() * i / (S + 1);
            Jet j = base.lift_jet(x);
            ControlReport r = control_orbit(base.param(), j.z, j.tau, n, {base.manifold().z0}, {}, j.kappa);
            if (!r.states[n].free) return std::nullopt;
        }
    }
    return regular_return_free(base, I, n);
}

// ---------------------------------------------------------------- return partition

namespace {

struct Cell {
    Interval iv;
    int source = 0;
    int bound_until = 0;
};

struct CellOutcome {
    std::vector<Cell> next;
    std::vector<Sublattice> emitted;
    std::vector<Interval> quarantined;
    double excluded = 0;
};

Sublattice make_sublattice(const HenonBase& base, const Cell& c, const RegularReturn& rr, const CantorApprox* deep) {
    Sublattice S;
    S.n = rr.n;
    S.source = c.source;
    S.target = rr.target;
    S.relaxed = rr.relaxed;
    S.base = c.iv;
    S.domain = rr.domain;
    Interval target = base.omega0(rr.target);
    int M = std::max(base.config().branch_nodes, 4);
    std::vector<double> xs(M), ys(M);
    for (int i = 0; i < M; ++i) {
        xs[i] = i == M - 1 ? rr.domain.hi : rr.domain.lo + rr.domain.length() * i / (M - 1);
        auto s = base.slide(base.orbit_jet(xs[i], rr.n).z);
        if (!s) throw ResamplingError("sublattice branch: slide undefined inside the domain");
        ys[i] = std::clamp(*s, target.lo, target.hi);
    }
    // endpoints map onto the target endpoints by construction
    bool inc = ys.back() > ys.front();
    ys.front() = inc ? target.lo : target.hi;
    ys.back() = inc ? target.hi : target.lo;
    for (int i = 1; i < M; ++i)
        if (inc ? ys[i] < ys[i - 1] : ys[i] > ys[i - 1]) ys[i] = ys[i - 1];
    S.branch = MonotoneMap(xs, ys);
    IntervalSet tgt = deep ? deep->set.intersect(target) : IntervalSet({target});
    S.trace = S.branch.pullback(tgt);
    return S;
}

std::vector<double> partition_boundaries(const Param& p, int n) {
    int mmax = static_cast<int>(std::floor(p.Delta + p.alpha * n));
    std::vector<double> v;
    for (int m = static_cast<int>(p.Delta); m <= mmax; ++m)
        for (int j = 0; j < m * m; ++j) {
            Interval iv = CriticalPartition::cell_interval(m, j);
            v.push_back(iv.lo);
            v.push_back(iv.hi);
            v.push_back(-iv.lo);
            v.push_back(-iv.hi);
        }
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    return v;
}

// splits a free piece at the pulled-back partition boundaries and assigns bound periods
void chop(const HenonBase& base, const Cell& piece, int n, CellOutcome& out) {
    const Param& p = base.param();
    const HorseshoeConfig& cfg = base.config();
    auto coord = [&](double x) { return base.crit_coord(base.orbit_jet(x, n)).coord; };
    int S = cfg.cell_samples + 1;
    std::vector<double> xs(S + 1), cs(S + 1), X(S + 1);
    for (int i = 0; i <= S; ++i) {
        xs[i] = i == S ? piece.iv.hi : piece.iv.lo + piece.iv.length() * i / S;
        Jet j = base.orbit_jet(xs[i], n);
        X[i] = j.z.x;
        cs[i] = base.crit_coord(j).coord;
    }
    bool inc = X[S] > X[0];
    for (int i = 0; i < S; ++i)
        if (inc ? X[i + 1] < X[i] : X[i + 1] > X[i]) {
            out.quarantined.push_back(piece.iv);  // folded image
            return;
        }
    bool touches = false;
    for (double c : cs) touches |= std::abs(c) < p.delta;
    for (int i = 0; i < S && !touches; ++i) touches = (cs[i] > 0) != (cs[i + 1] > 0);
    if (!touches) {
        out.next.push_back(piece);
        return;
    }
    std::vector<double> cuts;
    for (double v : partition_boundaries(p, n))
        for (int i = 0; i < S; ++i)
            if ((cs[i] < v) != (cs[i + 1] < v)) cuts.push_back(bisect_switch([&](double x) { return coord(x) < v; }, xs[i], xs[i + 1]));
    std::sort(cuts.begin(), cuts.end());
    std::vector<Interval> pieces;
    double a = piece.iv.lo;
    for (double c : cuts) {
        if (c - a > cfg.min_cell) {
            pieces.push_back({a, c});
            a = c;
        }
    }
    if (piece.iv.hi - a > cfg.min_cell || pieces.empty())
        pieces.push_back({a, piece.iv.hi});
    else
        pieces.back().hi = piece.iv.hi;
    auto inside = [&](const Interval& iv) { return std::abs(coord(iv.mid())) < p.delta; };
    std::vector<bool> in(pieces.size());
    for (size_t k = 0; k < pieces.size(); ++k) in[k] = inside(pieces[k]);
    // adjoin partial end cells to their strip neighbours
    auto merge = [&](size_t keep, size_t drop) {
        pieces[keep] = {std::min(pieces[keep].lo, pieces[drop].lo), std::max(pieces[keep].hi, pieces[drop].hi)};
        pieces.erase(pieces.begin() + drop);
        in.erase(in.begin() + drop);
    };
    if (pieces.size() >= 2 && in[0] && in[1] && cuts.size() && cuts.front() > piece.iv.lo) merge(1, 0);
    size_t L = pieces.size();
    if (L >= 2 && in[L - 1] && in[L - 2]) merge(L - 2, L - 1);
    for (size_t k = 0; k < pieces.size(); ++k) {
        Cell c{pieces[k], piece.source, n};
        if (in[k]) {
            int pmax = 0;
            for (int i = 1; i <= cfg.cell_samples; ++i) {
                double x = pieces[k].lo + pieces[k].length() * i / (cfg.cell_samples + 1);
                Jet j = base.orbit_jet(x, n);
                auto cc = base.crit_coord(j);
                if (!cc.binding) {
                    pmax = -1;
                    break;
                }
                pmax = std::max(pmax, bound_and_fold(p, j.z, *cc.binding, cfg.bound_cap).p);
            }
            if (pmax < 0) {
                out.quarantined.push_back(pieces[k]);
                continue;
            }
            c.bound_until = n + pmax;
        }
        out.next.push_back(c);
    }
}

CellOutcome process_cell(const HenonBase& base, const Cell& cell, int n, const CantorApprox* deep) {
    CellOutcome out;
    const HorseshoeConfig& cfg = base.config();
    auto coord = [&](double x) { return base.crit_coord(base.orbit_jet(x, n)).coord; };
    std::vector<Interval> win;
    try {
        win = exclusion_windows(coord, cell.iv, base.exclusion_radius(n), cfg.cell_samples + 1, cfg.min_window);
    } catch (const ResolutionError&) {
        out.quarantined.push_back(cell.iv);
        return out;
    }
    IntervalSet kept = IntervalSet({cell.iv}).subtract(IntervalSet(win));
    out.excluded = cell.iv.length() - kept.length();
    std::vector<Cell> pieces;
    for (const Interval& iv : kept.intervals())
        if (iv.length() > cfg.min_cell) pieces.push_back({iv, cell.source, cell.bound_until});
    if (n < cell.bound_until) {
        out.next = std::move(pieces);
        return out;
    }
    std::vector<Cell> rest;
    for (Cell& pc : pieces) {
        std::vector<Cell> work{pc};
        for (int pass = 0; pass < 2; ++pass) {
            std::vector<Cell> nw;
            for (const Cell& c : work) {
                std::optional<RegularReturn> rr;
                try {
                    rr = regular_return_free(base, c.iv, n);
                } catch (const Error&) {
                    rr.reset();
                }
                if (!rr) {
                    nw.push_back(c);
                    continue;
                }
                try {
                    Sublattice S = make_sublattice(base, c, *rr, deep);
                    out.emitted.push_back(std::move(S));
                } catch (const Error&) {
                    out.quarantined.push_back(rr->domain);
                }
                // remainder: outside the domain, plus the pulled-back gaps of the deep level
                IntervalSet rem = IntervalSet({c.iv}).subtract(IntervalSet({rr->domain}));
                if (!out.emitted.empty() && out.emitted.back().domain == rr->domain)
                    rem = rem.unite(IntervalSet({rr->domain}).subtract(out.emitted.back().trace));
                for (const Interval& iv : rem.intervals())
                    if (iv.length() > cfg.min_cell) nw.push_back({iv, c.source, c.bound_until});
            }
            work = std::move(nw);
        }
        rest.insert(rest.end(), work.begin(), work.end());
    }
    for (const Cell& c : rest) {
        try {
            chop(base, c, n, out);
        } catch (const Error&) {
            out.quarantined.push_back(c.iv);
        }
    }
    return out;
}

}  // namespace

std::vector<double> ReturnPartition::tail() const {
    std::vector<double> t(levels.size() + 1, 0);
    if (levels.empty()) return t;
    t[0] = levels[0].active_length;
    for (size_t n = 1; n <= levels.size(); ++n) t[n] = levels[n - 1].active_length;
    return t;
}

std::vector<int> ReturnPartition::sublattice_counts() const {
    std::vector<int> v(horizon + 1, 0);
    for (const Sublattice& S : returns)
        if (S.n >= 0 && S.n <= horizon) ++v[S.n];
    return v;
}

ReturnPartition build_return_partition(const HenonBase& base, int N, std::shared_ptr<const CantorApprox> deep) {
    if (N < 1) throw ConfigError("build_return_partition: horizon must be >= 1");
    ReturnPartition part;
    part.horizon = N;
    part.omega0 = {base.omega0(0), base.omega0(1)};
    part.deep = deep;
    std::vector<Cell> active{{base.omega0(0), 0, 0}, {base.omega0(1), 1, 0}};
    PartitionLevel L0;
    L0.n = 0;
    for (const Cell& c : active) {
        L0.cells.push_back(c.iv);
        L0.active_length += c.iv.length();
    }
    part.levels.push_back(L0);
    std::vector<Interval> quarantine;
    for (int n = 1; n <= N; ++n) {
        std::vector<CellOutcome> res(active.size());
        parallel_for(active.size(), [&](size_t i) { res[i] = process_cell(base, active[i], n, deep.get()); });
        PartitionLevel lv;
        lv.n = n;
        std::vector<Cell> next;
        int j = 0;
        for (CellOutcome& r : res) {
            lv.excluded_length += r.excluded;
            for (Sublattice& S : r.emitted) {
                S.j = j++;
                lv.returned_length += S.trace.length();
                part.returns.push_back(std::move(S));
            }
            quarantine.insert(quarantine.end(), r.quarantined.begin(), r.quarantined.end());
            next.insert(next.end(), r.next.begin(), r.next.end());
        }
        lv.sublattices = j;
        std::sort(next.begin(), next.end(), [](const Cell& u, const Cell& v) { return u.iv.lo < v.iv.lo; });
        if (next.size() > base.config().max_cells) throw ResolutionError("return partition: cell budget exceeded");
        for (const Cell& c : next) {
            lv.cells.push_back(c.iv);
            lv.active_length += c.iv.length();
        }
        part.levels.push_back(std::move(lv));
        active = std::move(next);
    }
    std::vector<Interval> un;
    for (const Cell& c : active) un.push_back(c.iv);
    part.unresolved = IntervalSet(un);
    part.quarantined = IntervalSet(quarantine);
    return part;
}

GeometricFit fit_geometric_tail(const std::vector<double>& tail, int from, int to) {
    GeometricFit f;
    f.from = from;
    f.to = to;
    std::vector<double> xs, ys;
    for (int n = from; n <= to && n < static_cast<int>(tail.size()); ++n)
        if (tail[n] > 0) {
            xs.push_back(n);
            ys.push_back(std::log(tail[n]));
        }
    if (xs.size() < 2) return f;
    double k = xs.size(), sx = 0, sy = 0;
    for (size_t i = 0; i < xs.size(); ++i) sx += xs[i], sy += ys[i];
    double mx = sx / k, my = sy / k, sxx = 0, sxy = 0, syy = 0;
    for (size_t i = 0; i < xs.size(); ++i) {
        sxx += (xs[i] - mx) * (xs[i] - mx);
        sxy += (xs[i] - mx) * (ys[i] - my);
        syy += (ys[i] - my) * (ys[i] - my);
    }
    double slope = sxy / sxx;
    f.theta0 = std::exp(slope);
    f.C0 = std::exp(my - slope * mx);
    f.r2 = syy > 0 ? sxy * sxy / (sxx * syy) : 1.0;
    return f;
}

// ---------------------------------------------------------------- matching and itineraries

MatchingReport matching_check(const HenonBase& base, const Sublattice& S, const CantorApprox& level) {
    MatchingReport m;
    Interval target = base.omega0(S.target);
    IntervalSet want = level.set.intersect(target);
    IntervalSet tr = S.branch.pullback(want);
    m.trace_length = tr.length();
    std::vector<Interval> img;
    for (const Interval& iv : tr.intervals()) {
        auto u = base.slide(base.orbit_jet(iv.lo, S.n).z);
        auto v = base.slide(base.orbit_jet(iv.hi, S.n).z);
        if (!u || !v) continue;
        img.push_back({std::min(*u, *v), std::max(*u, *v)});
    }
    const double Cb = 5 * base.param().b;
    // slide endpoints carry rounding of order 1e-9 relative to the target width
    m.slack = 2 * std::pow(Cb, level.level) + 1e-9 * target.length();
    IntervalSet miss = want.subtract(IntervalSet(img));
    for (const Interval& g : miss.intervals())
        if (g.length() > m.slack) {
            m.gaps.push_back(g);
            m.uncovered += g.length();
        }
    m.covered = m.gaps.empty();
    return m;
}

MatchingReport matching_check(const Sublattice& S, const IntervalSet& level) {
    MatchingReport m;
    IntervalSet want = level.intersect(S.branch.range());
    IntervalSet tr = S.branch.pullback(want);
    m.trace_length = tr.length();
    std::vector<Interval> img;
    for (const Interval& iv : tr.intervals()) {
        double u = S.branch(iv.lo), v = S.branch(iv.hi);
        img.push_back({std::min(u, v), std::max(u, v)});
    }
    IntervalSet miss = want.subtract(IntervalSet(img));
    for (const Interval& g : miss.intervals())
        if (g.length() > 1e-12 * std::max(1.0, want.length())) {
            m.gaps.push_back(g);
            m.uncovered += g.length();
        }
    m.covered = m.gaps.empty();
    return m;
}

const Sublattice* find_sublattice(const ReturnPartition& part, int n, int j) {
    for (const Sublattice& S : part.returns)
        if (S.n == n && S.j == j) return &S;
    return nullptr;
}

IntervalSet itinerary_set(const ReturnPartition& part, const std::vector<std::pair<int, int>>& seq) {
    if (seq.empty()) return {};
    std::vector<const Sublattice*> Ss;
    for (auto [n, j] : seq) {
        const Sublattice* S = find_sublattice(part, n, j);
        if (!S) throw ConfigError("itinerary_set: unknown sublattice");
        Ss.push_back(S);
    }
    IntervalSet set = Ss.back()->trace;
    for (int i = static_cast<int>(Ss.size()) - 2; i >= 0; --i)
        set = Ss[i]->trace.intersect(Ss[i]->branch.pullback(set));
    return set;
}

double escape_mass(const ReturnPartition& part, int k) {
    IntervalSet lambda0 = part.deep ? part.deep->set : IntervalSet({part.omega0[0], part.omega0[1]});
    IntervalSet E1 = part.unresolved.intersect(lambda0);
    IntervalSet E = E1;
    for (int t = 2; t <= k; ++t) {
        IntervalSet nxt = E1;
        for (const Sublattice& S : part.returns) nxt = nxt.unite(S.trace.intersect(S.branch.pullback(E)));
        E = nxt;
    }
    return E.length();
}

double branch_distortion(const ReturnPartition& part) {
    double worst = 1;
    for (const Sublattice& S : part.returns) {
        double mn = std::numeric_limits<double>::infinity(), mx = 0;
        Interval d = S.branch.domain();
        for (int i = 0; i <= 64; ++i) {
            double g = std::abs(S.branch.derivative(d.lo + d.length() * i / 64));
            mn = std::min(mn, g);
            mx = std::max(mx, g);
        }
        if (mn > 0) worst = std::max(worst, mx / mn);
    }
    return worst;
}

double return_expansion(const HenonBase& base, const ReturnPartition& part, int samples) {
    double worst = std::numeric_limits<double>::infinity();
    for (const Sublattice& S : part.returns)
        for (int i = 0; i < samples; ++i) {
            double x = S.domain.lo + S.domain.length() * (i + 0.5) / samples;
            Jet j = base.lift_jet(x);
            OrbitSegment o = iterate_with_jacobian(base.param(), j.z, S.n, j.tau);
            worst = std::min(worst, o.log_norms.back() / S.n);
        }
    return std::isfinite(worst) ? std::exp(worst) : 0.0;
}

// ---------------------------------------------------------------- toy full shifts

ToyShift::ToyShift(std::vector<ToyBranch> branches, double lambda, double height)
    : br_(std::move(branches)), lambda_(lambda), h_(height) {
    std::sort(br_.begin(), br_.end(), [](const ToyBranch& u, const ToyBranch& v) { return u.base.lo < v.base.lo; });
    for (size_t i = 0; i < br_.size(); ++i) {
        if (!(br_[i].base.hi > br_[i].base.lo) || br_[i].R < 1) throw ConfigError("ToyShift: bad branch");
        if (i && br_[i].base.lo < br_[i - 1].base.hi) throw ConfigError("ToyShift: overlapping branches");
    }
    if (!(h_ > 0 && h_ < 0.5) || !(lambda_ > 0 && lambda_ < 1)) throw ConfigError("ToyShift: bad geometry");
}

ToyShift ToyShift::thirds(std::array<int, 3> R, double lambda) {
    std::vector<ToyBranch> b;
    for (int i = 0; i < 3; ++i) b.push_back({{i / 3.0, i == 2 ? 1.0 : (i + 1) / 3.0}, R[i], false});
    return ToyShift(b, lambda);
}

ToyShift ToyShift::geometric(int N, double lambda) {
    std::vector<ToyBranch> b;
    for (int k = 1; k <= N; ++k) b.push_back({{1 - std::ldexp(1.0, 1 - k), 1 - std::ldexp(1.0, -k)}, k, false});
    return ToyShift(b, lambda);
}

int ToyShift::branch_of(double x) const {
    for (size_t i = 0; i < br_.size(); ++i)
        if (x >= br_[i].base.lo && (x < br_[i].base.hi || (x == 1.0 && br_[i].base.hi == 1.0))) return static_cast<int>(i);
    return -1;
}

Point ToyShift::step(Point z) const {
    int k = branch_of(z.x);
    if (k < 0) return z;
    double l = std::round(z.y), y = z.y - l;
    const ToyBranch& B = br_[k];
    if (l + 1 < B.R) return {z.x, z.y + 1};
    double t = (z.x - B.base.lo) / B.base.length();
    double x = B.reversed ? 1 - t : t;
    double K = static_cast<double>(br_.size());
    double c = (1 - lambda_) * h_ * (2 * (k + 0.5) / K - 1);
    return {x, lambda_ * y + c};
}

Mat2 ToyShift::jacobian(Point z) const {
    int k = branch_of(z.x);
    if (k < 0) return Mat2::identity();
    double l = std::round(z.y);
    const ToyBranch& B = br_[k];
    if (l + 1 < B.R) return Mat2::identity();
    return {(B.reversed ? -1 : 1) / B.base.length(), 0, 0, lambda_};
}

ReturnPartition ToyShift::partition(int N) const {
    ReturnPartition part;
    part.horizon = N;
    part.omega0 = {Interval{0, 1}, Interval{1, 1}};
    std::vector<int> count(N + 1, 0);
    std::vector<Interval> open;
    for (const ToyBranch& B : br_) {
        if (B.R > N) {
            open.push_back(B.base);
            continue;
        }
        Sublattice S;
        S.n = B.R;
        S.j = count[B.R]++;
        S.base = S.domain = B.base;
        S.trace = IntervalSet({B.base});
        S.branch = MonotoneMap::affine(B.base, {0, 1}, B.reversed);
        part.returns.push_back(S);
    }
    std::vector<Interval> bases;
    for (const ToyBranch& B : br_) bases.push_back(B.base);
    IntervalSet uncovered = IntervalSet({{0, 1}}).subtract(IntervalSet(bases));
    part.unresolved = IntervalSet(open).unite(uncovered);
    for (int n = 0; n <= N; ++n) {
        PartitionLevel lv;
        lv.n = n;
        for (const ToyBranch& B : br_)
            if (B.R > n) {
                lv.cells.push_back(B.base);
                lv.active_length += B.base.length();
            } else if (B.R == n) {
                lv.returned_length += B.base.length();
                ++lv.sublattices;
            }
        for (const Interval& g : uncovered.intervals()) {
            lv.cells.push_back(g);
            lv.active_length += g.length();
        }
        part.levels.push_back(std::move(lv));
    }
    part.deep = std::make_shared<const CantorApprox>(CantorApprox{0, IntervalSet({{0, 1}}), nullptr, 0, 0, 0});
    return part;
}

}  // namespace henon
