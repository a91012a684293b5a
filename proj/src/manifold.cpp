#include "henonlab/manifold.hpp"

#include <algorithm>
#include <climits>
#include <cmath>
#include <limits>
#include <numbers>

#include "henonlab/errors.hpp"

namespace henon {

Jet push_jet(const Param& p, const Jet& j, double* stretch) {
    Mat2 J = henon_jacobian(p, j.z);
    Tangent d1 = J * j.tau;
    Tangent N = perp(j.tau);
    Tangent d2 = J * (j.kappa * N);
    d2.v1 += -2 * p.a * j.tau.v1 * j.tau.v1;
    double L = d1.norm();
    if (stretch) *stretch = L;
    Jet out;
    out.z = henon_step(p, j.z);
    out.tau = {d1.v1 / L, d1.v2 / L};
    out.kappa = cross(d1, d2) / (L * L * L);
    return out;
}

FixedPointData saddle_data(const Param& p) {
    FixedPointData fd;
    fd.z = fixed_point_first_quadrant(p);
    double ax = p.a * fd.z.x;
    double r = std::sqrt(ax * ax + p.b);
    fd.lambda_u = -ax - r;
    fd.lambda_s = p.b == 0 ? 0.0 : -p.b / fd.lambda_u;
    if (!(std::abs(fd.lambda_u) > 1 && std::abs(fd.lambda_s) < 1))
        throw NonHyperbolicError("fixed point is not a saddle");
    fd.v_u = unit({fd.lambda_u, p.b});
    return fd;
}

Point LeafGenerator::point(double s) const {
    Point z = zstar + s * vu;
    for (int k = 0; k < K; ++k) z = henon_step(p, z);
    return z;
}

Jet LeafGenerator::jet(double s) const {
    Jet j{zstar + s * vu, vu, 0.0};
    for (int k = 0; k < K; ++k) j = push_jet(p, j);
    return j;
}

namespace {

std::vector<double> chord_lengths(const std::vector<Point>& pts) {
    std::vector<double> t(pts.size(), 0.0);
    for (size_t i = 1; i < pts.size(); ++i) t[i] = t[i - 1] + dist(pts[i], pts[i - 1]);
    return t;
}

Tangent nlerp(Tangent a, Tangent b, double f) {
    return unit({a.v1 + f * (b.v1 - a.v1), a.v2 + f * (b.v2 - a.v2)});
}

}  // namespace

Jet LeafSegment::at(size_t i, double frac) const {
    if (i + 1 >= nodes.size()) return {nodes.back(), tangents.back(), 0.0};
    if (gen) return gen->jet(s[i] + frac * (s[i + 1] - s[i]));
    const Point &a = nodes[i], &b = nodes[i + 1];
    return {{a.x + frac * (b.x - a.x), a.y + frac * (b.y - a.y)}, nlerp(tangents[i], tangents[i + 1], frac), 0.0};
}

LeafSegment LeafSegment::restricted_x(double xlo, double xhi) const {
    size_t best_a = 0, best_len = 0;
    for (size_t i = 0; i < nodes.size();) {
        if (nodes[i].x < xlo || nodes[i].x > xhi) {
            ++i;
            continue;
        }
        size_t j = i;
        while (j < nodes.size() && nodes[j].x >= xlo && nodes[j].x <= xhi) ++j;
        if (j - i > best_len) best_a = i, best_len = j - i;
        i = j;
    }
    LeafSegment out;
    out.generation = generation;
    out.gen = gen;
    out.resolution = resolution;
    for (size_t i = best_a; i < best_a + best_len; ++i) {
        out.nodes.push_back(nodes[i]);
        out.tangents.push_back(tangents[i]);
        if (!s.empty()) out.s.push_back(s[i]);
    }
    out.t = chord_lengths(out.nodes);
    return out;
}

LeafSegment make_polyline(const std::vector<Point>& pts, int generation) {
    LeafSegment seg;
    seg.generation = generation;
    seg.nodes = pts;
    size_t n = pts.size();
    seg.tangents.resize(n);
    for (size_t i = 0; i < n; ++i) {
        const Point& a = pts[i == 0 ? 0 : i - 1];
        const Point& b = pts[i + 1 < n ? i + 1 : n - 1];
        seg.tangents[i] = unit({b.x - a.x, b.y - a.y});
    }
    seg.t = chord_lengths(pts);
    double r = 0;
    for (size_t i = 1; i < n; ++i) r = std::max(r, seg.t[i] - seg.t[i - 1]);
    seg.resolution = r;
    return seg;
}

LeafSegment sample_generator(std::shared_ptr<const LeafGenerator> gen, double s_a, double s_b,
                             double resolution, int generation) {
    if (s_a > s_b) std::swap(s_a, s_b);
    struct Node {
        double s;
        Jet j;
    };
    std::vector<Node> cur;
    const int init = 65;
    for (int i = 0; i < init; ++i) {
        double s = s_a + (s_b - s_a) * i / (init - 1);
        cur.push_back({s, gen->jet(s)});
    }
    for (int pass = 0;; ++pass) {
        std::vector<Node> next;
        next.reserve(cur.size() * 2);
        bool refined = false;
        for (size_t i = 0; i + 1 < cur.size(); ++i) {
            next.push_back(cur[i]);
            const Node &a = cur[i], &b = cur[i + 1];
            double d = dist(a.j.z, b.j.z);
            bool must = d > resolution;
            bool turn = line_angle(a.j.tau, b.j.tau) > 0.05 && d > 1e-6 * resolution;
            if (must || turn) {
                double sm = 0.5 * (a.s + b.s);
                bool splittable = sm > a.s && sm < b.s && std::abs(b.s - a.s) > 1e-14 * std::abs(sm);
                if (!splittable || pass > 400) {
                    if (must) throw ResamplingError("unstable_leaf: node spacing cannot be maintained");
                    continue;
                }
                next.push_back({sm, gen->jet(sm)});
                refined = true;
            }
        }
        next.push_back(cur.back());
        cur.swap(next);
        if (!refined) break;
    }
    LeafSegment seg;
    seg.generation = generation;
    seg.gen = gen;
    seg.resolution = resolution;
    for (const Node& n : cur) {
        seg.nodes.push_back(n.j.z);
        seg.tangents.push_back(n.j.tau);
        seg.s.push_back(n.s);
    }
    seg.t = chord_lengths(seg.nodes);
    return seg;
}

C2bReport is_c2b(const LeafSegment& seg, double b) {
    C2bReport r;
    for (const Tangent& t : seg.tangents)
        r.max_slope = std::max(r.max_slope, t.v1 == 0 ? std::numeric_limits<double>::infinity()
                                                       : std::abs(t.v2 / t.v1));
    for (size_t i = 1; i + 1 < seg.nodes.size(); ++i) {
        const Point &a = seg.nodes[i - 1], &p = seg.nodes[i], &c = seg.nodes[i + 1];
        double ab = dist(a, p), bc = dist(p, c), ac = dist(a, c);
        double area2 = std::abs(cross({p.x - a.x, p.y - a.y}, {c.x - a.x, c.y - a.y}));
        if (ab * bc * ac > 0) r.max_curvature = std::max(r.max_curvature, 2 * area2 / (ab * bc * ac));
    }
    r.is_c2b = r.max_slope <= 10 * b && r.max_curvature <= 10 * b;
    return r;
}

namespace {

// signed angle from the line of tau to the line of e, in (-pi/2, pi/2]
double signed_line_angle(Tangent tau, Tangent e) {
    double th = std::atan2(cross(tau, e), dot(tau, e));
    if (th > std::numbers::pi / 2) th -= std::numbers::pi;
    if (th <= -std::numbers::pi / 2) th += std::numbers::pi;
    return th;
}

}  // namespace

std::vector<CriticalApprox> find_critical_approx(const Param& p, const LeafSegment& seg, int n) {
    std::vector<CriticalApprox> out;
    size_t N = seg.nodes.size();
    if (N < 2) return out;
    std::vector<double> g(N);
    for (size_t i = 0; i < N; ++i) g[i] = signed_line_angle(seg.tangents[i], e_n(p, seg.nodes[i], n));
    auto eval = [&](size_t i, double f, Jet* jout) {
        Jet j = seg.at(i, f);
        if (jout) *jout = j;
        return signed_line_angle(j.tau, e_n(p, j.z, n));
    };
    for (size_t i = 0; i + 1 < N; ++i) {
        bool root_here = (g[i] == 0) || (g[i] * g[i + 1] < 0 && std::abs(g[i] - g[i + 1]) < std::numbers::pi / 2);
        if (!root_here) continue;
        double lo = 0, hi = 1, glo = g[i];
        Jet jl = seg.at(i, 0), jh = seg.at(i, 1), jm;
        if (g[i] != 0) {
            for (int it = 0; it < 200 && dist(jl.z, jh.z) > 1e-12; ++it) {
                double mid = 0.5 * (lo + hi);
                double gm = eval(i, mid, &jm);
                if ((gm < 0) == (glo < 0)) {
                    lo = mid, glo = gm, jl = jm;
                } else {
                    hi = mid, jh = jm;
                }
            }
        }
        Jet jr;
        double gr = eval(i, 0.5 * (lo + hi), &jr);
        CriticalApprox ca;
        ca.point = jr.z;
        ca.tangent = jr.tau;
        ca.curvature = jr.kappa;
        ca.order = n;
        ca.generation = seg.generation;
        ca.residual = std::abs(gr);
        if (!seg.s.empty()) ca.s = seg.s[i] + 0.5 * (lo + hi) * (seg.s[i + 1] - seg.s[i]);
        if (ca.residual < 1e-8) out.push_back(ca);
    }
    return out;
}

namespace {

double fold_bisect(const LeafGenerator& g, double s_in, double s_out) {
    double vin = g.jet(s_in).tau.v1;
    for (int it = 0; it < 200; ++it) {
        double m = 0.5 * (s_in + s_out);
        if (m == s_in || m == s_out) break;
        if ((g.jet(m).tau.v1 > 0) == (vin > 0))
            s_in = m;
        else
            s_out = m;
    }
    return 0.5 * (s_in + s_out);
}

// parameter near s_guess whose point is closest to target
double project_param(const LeafGenerator& g, Point target, double s_lo, double s_hi) {
    const int M = 400;
    double best = 1e300, bs = s_lo;
    for (int i = 0; i <= M; ++i) {
        double s = s_lo + (s_hi - s_lo) * i / M;
        double d = dist(g.point(s), target);
        if (d < best) best = d, bs = s;
    }
    double h = (s_hi - s_lo) / M;
    double a = bs - h, b = bs + h;
    const double gr = (std::sqrt(5.0) - 1) / 2;
    double c = b - gr * (b - a), d = a + gr * (b - a);
    double fc = dist(g.point(c), target), fd = dist(g.point(d), target);
    for (int it = 0; it < 200 && b - a > 1e-17 * std::abs(bs); ++it) {
        if (fc < fd) {
            b = d, d = c, fd = fc, c = b - gr * (b - a), fc = dist(g.point(c), target);
        } else {
            a = c, c = d, fc = fd, d = a + gr * (b - a), fd = dist(g.point(d), target);
        }
    }
    return 0.5 * (a + b);
}

}  // namespace

ManifoldData build_manifold(const Param& p, int critical_order) {
    ManifoldData md;
    md.saddle = saddle_data(p);
    const double s0 = 5e-7;
    auto gen = std::make_shared<LeafGenerator>();
    gen->p = p;
    gen->zstar = md.saddle.z;
    gen->vu = md.saddle.v_u;
    gen->lambda_u = md.saddle.lambda_u;
    bool found = false;
    for (int K = 1; K <= 80 && !found; ++K) {
        gen->K = K;
        const int M = 2048;
        std::vector<double> v1(M + 1);
        for (int i = 0; i <= M; ++i) v1[i] = gen->jet(-s0 + 2 * s0 * i / M).tau.v1;
        int c = M / 2, L = -1, R = -1;
        for (int i = c; i > 0; --i)
            if ((v1[i] > 0) != (v1[i - 1] > 0)) {
                L = i;
                break;
            }
        for (int i = c; i < M; ++i)
            if ((v1[i] > 0) != (v1[i + 1] > 0)) {
                R = i;
                break;
            }
        if (L < 0 || R < 0) continue;
        double sL = -s0 + 2 * s0 * L / M, sR = -s0 + 2 * s0 * R / M;
        if (std::max(-sL, sR) > s0 / 4) continue;
        md.s_fold_left = fold_bisect(*gen, sL, sL - 2 * s0 / M);
        md.s_fold_right = fold_bisect(*gen, sR, sR + 2 * s0 / M);
        found = true;
    }
    if (!found) throw ResamplingError("unstable_leaf: first sweep not found");
    md.gen = gen;
    if (!(p.b > 0)) return md;

    LeafSegment sweep = sample_generator(gen, md.s_fold_left, md.s_fold_right, 2e-3, 1);
    LeafSegment strip = sweep.restricted_x(-p.delta, p.delta);
    auto crit = find_critical_approx(p, strip, critical_order);
    if (crit.empty()) return md;
    auto best = std::min_element(crit.begin(), crit.end(), [](auto& a, auto& b) {
        return std::abs(a.point.x) < std::abs(b.point.x);
    });
    md.z0 = *best;
    md.has_z0 = true;
    md.s_z0 = best->s;
    Point f1 = henon_step(p, md.z0.point), f2 = henon_step(p, f1);
    auto near_fold = [&](Point target) {
        Point pl = gen->point(md.s_fold_left), pr = gen->point(md.s_fold_right);
        double sf = dist(pl, target) < dist(pr, target) ? md.s_fold_left : md.s_fold_right;
        return project_param(*gen, target, sf - 0.02 * std::abs(sf), sf + 0.02 * std::abs(sf));
    };
    md.s_f1 = near_fold(f1);
    md.s_f2 = near_fold(f2);
    return md;
}

LeafSegment unstable_leaf(const ManifoldData& md, int g, double resolution) {
    if (g < 1) throw ConfigError("unstable_leaf: generation must be >= 1");
    if (g == 1) {
        if (md.has_z0) return sample_generator(md.gen, md.s_f2, md.s_f1, resolution, 1);
        return sample_generator(md.gen, md.s_fold_left, md.s_fold_right, resolution, 1);
    }
    if (!md.has_z0) return LeafSegment{g, {}, {}, {}, {}, nullptr, resolution};
    auto gen = std::make_shared<LeafGenerator>(*md.gen);
    gen->K = md.gen->K + g - 1;
    return sample_generator(gen, md.s_z0, md.s_f2, resolution, g);
}

LeafSegment unstable_leaf(const Param& p, int g, double resolution) {
    return unstable_leaf(build_manifold(p), g, resolution);
}

bool tangential_position(const CriticalApprox& binding, Point z, double c) {
    Tangent d{z.x - binding.point.x, z.y - binding.point.y};
    Tangent t = unit(binding.tangent);
    double xp = dot(d, t), yp = cross(t, d);
    return std::abs(yp) <= c * xp * xp;
}

DistanceReport dist_to_critical_report(Point z, const std::vector<CriticalApprox>& crit,
                                       double delta, double c) {
    DistanceReport r;
    if (std::abs(z.x) >= delta) {
        r.distance = std::abs(z.x);
        return r;
    }
    double dmin = std::numeric_limits<double>::infinity(), dmax = 0;
    for (size_t i = 0; i < crit.size(); ++i) {
        if (!tangential_position(crit[i], z, c)) continue;
        double d = dist(z, crit[i].point);
        ++r.tangential;
        dmax = std::max(dmax, d);
        bool better = d < dmin || (d == dmin && crit[i].generation < crit[r.index].generation);
        if (better) dmin = d, r.index = static_cast<int>(i);
    }
    if (r.tangential == 0) throw NoBindingError("dist_to_critical: no tangential critical approximation");
    r.distance = dmin;
    r.spread = dmin > 0 ? dmax / dmin : 1.0;
    return r;
}

double dist_to_critical(Point z, const std::vector<CriticalApprox>& crit, double delta) {
    return dist_to_critical_report(z, crit, delta).distance;
}

int fold_index(double d, double b) {
    double lb = std::log(5 * b);
    if (!(lb < 0)) return 1;
    if (!(d > 0)) return INT_MAX / 4;
    int m = static_cast<int>(std::ceil(std::log(d) / lb));
    return std::max(m, 1);
}

BindingInfo bound_and_fold(const Param& p, Point z, const CriticalApprox& binding, int cap) {
    BindingInfo bi;
    bi.binding = binding;
    bi.distance = dist(z, binding.point);
    bi.tangential = tangential_position(binding, z);
    Point u = z, v = binding.point;
    bi.p = cap;
    for (int j = 0; j < cap; ++j) {
        if (!(dist(u, v) < std::exp(-p.beta * j))) {
            bi.p = j;
            break;
        }
        u = henon_step(p, u);
        v = henon_step(p, v);
    }
    bi.m = std::min(fold_index(bi.distance, p.b), cap);
    bi.l = 2 * bi.m;
    bi.fold_ratio = bi.p > 0 ? static_cast<double>(bi.l) / bi.p : std::numeric_limits<double>::infinity();
    return bi;
}

Splitting correct_splitting(const Param& p, Point z, Tangent v, int n, const CriticalApprox& binding,
                            int l) {
    Tangent w = unit(v);
    for (int k = 0; k < n; ++k) {
        w = unit(henon_jacobian(p, z) * w);
        z = henon_step(p, z);
    }
    Splitting s;
    s.angle = line_angle(w, e_n(p, z, std::max(l, 1)));
    double d = dist(z, binding.point);
    s.ok = 3 * d <= s.angle && s.angle <= 5 * d;
    return s;
}

std::optional<CriticalApprox> local_binding(const Param& p, const Jet& leaf, int order, double half_span) {
    Tangent N = perp(leaf.tau);
    auto curve = [&](double u) {
        Point z = leaf.z + u * leaf.tau;
        z = z + (0.5 * leaf.kappa * u * u) * N;
        Tangent t = unit({leaf.tau.v1 + leaf.kappa * u * N.v1, leaf.tau.v2 + leaf.kappa * u * N.v2});
        return std::pair{z, t};
    };
    auto g = [&](double u) {
        auto [z, t] = curve(u);
        return signed_line_angle(t, e_n(p, z, order));
    };
    const int M = 80;
    std::vector<double> us(M + 1), gs(M + 1);
    for (int i = 0; i <= M; ++i) {
        us[i] = -half_span + 2 * half_span * i / M;
        gs[i] = g(us[i]);
    }
    int best = -1;
    for (int i = 0; i < M; ++i) {
        bool root = gs[i] == 0 || (gs[i] * gs[i + 1] < 0 && std::abs(gs[i] - gs[i + 1]) < std::numbers::pi / 2);
        if (!root) continue;
        if (best < 0 || std::abs(us[i] + us[i + 1]) < std::abs(us[best] + us[best + 1])) best = i;
    }
    if (best < 0) return std::nullopt;
    double lo = us[best], hi = us[best + 1], glo = gs[best];
    for (int it = 0; it < 100 && hi - lo > 1e-15; ++it) {
        double m = 0.5 * (lo + hi);
        double gm = g(m);
        if ((gm < 0) == (glo < 0))
            lo = m, glo = gm;
        else
            hi = m;
    }
    double u = 0.5 * (lo + hi);
    auto [z, t] = curve(u);
    CriticalApprox ca;
    ca.point = z;
    ca.tangent = t;
    ca.curvature = leaf.kappa;
    ca.order = order;
    ca.generation = 0;
    ca.residual = std::abs(g(u));
    ca.local = true;
    return ca;
}

namespace {

// nearest tangential built candidate, else the osculating-leaf model
std::optional<CriticalApprox> choose_binding(const Param& p, const Jet& jet,
                                             const std::vector<CriticalApprox>& crit,
                                             const ControlConfig& cfg) {
    try {
        DistanceReport r = dist_to_critical_report(jet.z, crit, p.delta, cfg.tangential_c);
        if (r.index >= 0) return crit[r.index];
    } catch (const NoBindingError&) {
    }
    auto lb = local_binding(p, jet, cfg.binding_order, 3 * p.delta);
    if (lb && tangential_position(*lb, jet.z, cfg.tangential_c)) return lb;
    if (lb && dist(lb->point, jet.z) == 0) return lb;
    return std::nullopt;
}

}  // namespace

ControlReport control_orbit(const Param& p, Point z, Tangent v, int N,
                            const std::vector<CriticalApprox>& crit, const ControlConfig& cfg,
                            double kappa) {
    ControlReport rep;
    const double inf = std::numeric_limits<double>::infinity();
    rep.uh_expansion_margin = inf;
    rep.uh_contraction_margin = -inf;
    rep.ba_margin = inf;
    rep.ee_margin = inf;
    rep.backward_margin = -inf;
    rep.free_stretch_margin = inf;

    Jet jet{z, unit(v), kappa};
    double lg = std::log(v.norm());
    Tangent vert{0, 1};
    double lvert = 0;
    std::vector<double> logs;
    int bound_until = 0;
    int open_return = -1, open_end = 0;
    for (int n = 0; n <= N; ++n) {
        TimeState st;
        st.n = n;
        st.z = jet.z;
        st.free = n >= bound_until;
        st.in_strip = std::abs(jet.z.x) < p.delta;
        st.log_growth = lg;
        st.curvature = jet.kappa;
        logs.push_back(lg);
        if (n >= 1) {
            rep.uh_expansion_margin = std::min(rep.uh_expansion_margin, lvert - cfg.c * n);
            rep.uh_contraction_margin = std::max(rep.uh_contraction_margin, lg - n * std::log(cfg.C * p.b));
        }
        double dC = std::abs(jet.z.x);
        std::optional<CriticalApprox> bind;
        if (st.in_strip && n >= 1) {
            bind = choose_binding(p, jet, crit, cfg);
            if (bind) dC = dist(jet.z, bind->point);
        }
        if (n < N && rep.sa_holds && dC < p.delta * std::exp(-p.alpha * n)) rep.sa_holds = false;
        if (st.in_strip && n >= 1) {
            if (st.free) {
                ++rep.returns;
                if (!bind) {
                    ++rep.unbound_returns;
                    rep.controlled = false;
                } else {
                    BindingInfo bi = bound_and_fold(p, jet.z, *bind, cfg.bound_cap);
                    Splitting sp = correct_splitting(p, jet.z, jet.tau, 0, *bind, bi.l);
                    bi.splitting_angle = sp.angle;
                    bi.splitting_ok = sp.ok;
                    if (sp.ok) ++rep.splitting_ok_count;
                    st.binding = bi;
                    rep.ba_margin = std::min(rep.ba_margin, std::log(bi.distance) + p.alpha * n);
                    bound_until = n + std::max(bi.p, 1);
                    open_return = n;
                    open_end = bound_until;
                    for (int j = 1; j <= n; ++j)
                        rep.backward_margin = std::max(rep.backward_margin, logs[n - j] - lg + cfg.c1 * j);
                }
            } else if (bind && open_return >= 0) {
                BindingInfo nb = bound_and_fold(p, jet.z, *bind, cfg.bound_cap);
                if (n + nb.p > open_end) ++rep.nested_violations;
            }
        }
        if (rep.sa_holds && n >= 1) rep.ee_margin = std::min(rep.ee_margin, lg - std::log(p.delta) - cfg.c2 * n);
        rep.states.push_back(st);
        if (n == N) break;
        Mat2 J = henon_jacobian(p, jet.z);
        Tangent w = J * vert;
        lvert += std::log(w.norm());
        vert = unit(w);
        double stretch = 0;
        jet = push_jet(p, jet, &stretch);
        lg += std::log(stretch);
    }
    // stretches outside the strip starting at free times
    for (int t0 = 0; t0 <= N; ++t0) {
        if (!rep.states[t0].free || rep.states[t0].in_strip) continue;
        if (t0 > 0 && !rep.states[t0 - 1].in_strip && rep.states[t0 - 1].free) continue;
        int k = 0;
        while (t0 + k <= N && !rep.states[t0 + k].in_strip) ++k;
        if (k >= cfg.M0 && t0 + k <= N)
            rep.free_stretch_margin = std::min(rep.free_stretch_margin, logs[t0 + k] - logs[t0] - cfg.c0 * k);
    }
    int W = std::min(cfg.critical_window, N);
    rep.critical = W >= 1;
    for (int j = 1; j <= W; ++j)
        if (logs[j] - logs[0] > -cfg.c1 * j) rep.critical = false;
    return rep;
}

}  // namespace henon
