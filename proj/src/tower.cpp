#include "henonlab/tower.hpp"

#include <math.h>

#include <algorithm>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/quadrature/gauss.hpp>
#include <cmath>
#include <json.hpp>
#include <limits>
#include <map>
#include <numbers>
#include <numeric>
#include <sstream>

#include "henonlab/errors.hpp"
#include "henonlab/parallel.hpp"

namespace henon {

namespace {

template <unsigned N>
void gauss_rule(std::vector<double>& xs, std::vector<double>& ws) {
    using G = boost::math::quadrature::gauss<double, N>;
    const auto& a = G::abscissa();
    const auto& w = G::weights();
    for (size_t i = 0; i < a.size(); ++i) {
        if (a[i] == 0) {
            xs.push_back(0);
            ws.push_back(w[i]);
        } else {
            xs.push_back(-a[i]);
            ws.push_back(w[i]);
            xs.push_back(a[i]);
            ws.push_back(w[i]);
        }
    }
}

// nodes and weights on [-1, 1]
void legendre(int order, std::vector<double>& xs, std::vector<double>& ws) {
    xs.clear();
    ws.clear();
    switch (order) {
        case 1: xs = {0}; ws = {2}; break;
        case 2: gauss_rule<2>(xs, ws); break;
        case 3: gauss_rule<3>(xs, ws); break;
        case 4: gauss_rule<4>(xs, ws); break;
        case 5: gauss_rule<5>(xs, ws); break;
        case 6: gauss_rule<6>(xs, ws); break;
        case 8: gauss_rule<8>(xs, ws); break;
        case 10: gauss_rule<10>(xs, ws); break;
        default: throw ConfigError("Gauss-Legendre order must be one of 1-6, 8, 10");
    }
}

// log of the smallest singular value of a product of jacobians along R steps
double log_smin_along(const PlaneModel& model, Point z, int R) {
    Mat2 M = Mat2::identity();
    double scale = 0, logdet = 0;
    for (int l = 0; l < R; ++l) {
        Mat2 J = model.jacobian(z);
        logdet += std::log(std::abs(J.det()));
        M = J * M;
        double m = M.max_abs();
        if (m > 0) {
            M = {M.a / m, M.b / m, M.c / m, M.d / m};
            scale += std::log(m);
        }
        z = model.step(z);
    }
    return logdet - (scale + std::log(op_norm(M)));
}

Point push(const PlaneModel& model, Point z, int n) {
    for (int l = 0; l < n; ++l) z = model.step(z);
    return z;
}

// strongly connected components (Tarjan, iterative)
std::vector<int> scc(const std::vector<std::vector<int>>& adj, int* count) {
    int n = static_cast<int>(adj.size()), idx = 0, c = 0;
    std::vector<int> index(n, -1), low(n, 0), comp(n, -1), stack;
    std::vector<bool> on(n, false);
    for (int s = 0; s < n; ++s) {
        if (index[s] >= 0) continue;
        std::vector<std::pair<int, size_t>> call{{s, 0}};
        index[s] = low[s] = idx++;
        stack.push_back(s);
        on[s] = true;
        while (!call.empty()) {
            auto& [v, it] = call.back();
            if (it < adj[v].size()) {
                int w = adj[v][it++];
                if (index[w] < 0) {
                    index[w] = low[w] = idx++;
                    stack.push_back(w);
                    on[w] = true;
                    call.push_back({w, 0});
                } else if (on[w]) {
                    low[v] = std::min(low[v], index[w]);
                }
            } else {
                if (low[v] == index[v]) {
                    int w;
                    do {
                        w = stack.back();
                        stack.pop_back();
                        on[w] = false;
                        comp[w] = c;
                    } while (w != v);
                    ++c;
                }
                int done = v;
                call.pop_back();
                if (!call.empty()) low[call.back().first] = std::min(low[call.back().first], low[done]);
            }
        }
    }
    *count = c;
    return comp;
}

// stratified points uniform in Lebesgue measure on a union of pieces
std::vector<double> stratified(const IntervalSet& pieces, int S) {
    std::vector<double> out;
    double L = pieces.length();
    if (L <= 0 || S <= 0) return out;
    const auto& ivs = pieces.intervals();
    size_t k = 0;
    double acc = 0;
    for (int s = 0; s < S; ++s) {
        double t = (s + 0.5) / S * L;
        while (k + 1 < ivs.size() && acc + ivs[k].length() < t) acc += ivs[k++].length();
        out.push_back(std::min(ivs[k].hi, ivs[k].lo + (t - acc)));
    }
    return out;
}

struct Chain {
    UlamMatrix P;
    std::vector<bool> kept;
    int components = 0;
    double leak = 0;
};

// keeps the largest strongly connected class of the rows and renormalizes
Chain restrict_chain(std::vector<std::vector<std::pair<int, double>>> rows, const std::vector<bool>& has_row) {
    int n = static_cast<int>(rows.size());
    std::vector<std::vector<int>> adj(n);
    for (int i = 0; i < n; ++i)
        for (auto [j, w] : rows[i])
            if (w > 0 && has_row[j]) adj[i].push_back(j);
    int count = 0;
    std::vector<int> comp = scc(adj, &count);
    std::vector<int> size(count, 0);
    int live = 0;
    for (int i = 0; i < n; ++i)
        if (has_row[i]) ++size[comp[i]];
    std::vector<bool> seen(count, false);
    for (int i = 0; i < n; ++i)
        if (has_row[i] && !seen[comp[i]]) {
            seen[comp[i]] = true;
            ++live;
        }
    int best = -1;
    for (int i = 0; i < n; ++i)
        if (has_row[i] && (best < 0 || size[comp[i]] > size[best] || (size[comp[i]] == size[best] && comp[i] < best)))
            best = comp[i];
    Chain ch;
    ch.components = live;
    ch.kept.assign(n, false);
    if (best < 0) return ch;
    for (int i = 0; i < n; ++i) ch.kept[i] = has_row[i] && comp[i] == best;
    ch.P.rows.resize(n);
    double dropped = 0;
    int nk = 0;
    for (int i = 0; i < n; ++i) {
        if (!ch.kept[i]) continue;
        ++nk;
        double s = 0, tot = 0;
        for (auto [j, w] : rows[i]) {
            tot += w;
            if (ch.kept[j]) s += w;
        }
        dropped += tot > 0 ? 1 - s / tot : 0;
        for (auto [j, w] : rows[i])
            if (ch.kept[j] && s > 0) ch.P.rows[i].push_back({j, w / s});
    }
    ch.leak = nk ? dropped / nk : 0;
    return ch;
}

void finish_density(Density& d, const Chain& ch) {
    int n = static_cast<int>(d.bins.size());
    std::vector<double> pi = stationary_vector(ch.P, 1e-12, 1000000, &d.residual, &d.iterations);
    // stationary_vector starts uniform on the kept rows
    d.mass = pi;
    d.support = ch.kept;
    d.components = ch.components;
    d.reducible = ch.components > 1;
    d.leak = ch.leak;
    d.values.assign(n, 0);
    double lo = std::numeric_limits<double>::infinity(), hi = 0;
    for (int i = 0; i < n; ++i) {
        if (d.ref[i] > 0) d.values[i] = d.mass[i] / d.ref[i];
        if (d.support[i] && d.ref[i] > 0) {
            lo = std::min(lo, d.values[i]);
            hi = std::max(hi, d.values[i]);
        }
    }
    d.M = hi > 0 ? std::max(hi, lo > 0 ? 1 / lo : std::numeric_limits<double>::infinity()) : 0;
}

}  // namespace

// ---------------------------------------------------------------- quotient

int QuotientMap::branch_at(double x) const {
    auto it = std::upper_bound(branches.begin(), branches.end(), x,
                               [](double v, const QuotientBranch& b) { return v < b.domain.lo; });
    if (it == branches.begin()) return -1;
    --it;
    return it->domain.contains(x) ? static_cast<int>(it - branches.begin()) : -1;
}

std::optional<double> QuotientMap::apply(double x) const {
    int k = branch_at(x);
    if (k < 0) return std::nullopt;
    return branches[k].map(x);
}

QuotientMap build_quotient(const ReturnPartition& part, const PlaneModel& model) {
    if (part.returns.empty()) throw EmptyPartitionError("build_quotient: no certified sublattice");
    QuotientMap q;
    q.model = &model;
    q.omega0 = part.omega0;
    if (part.deep)
        q.lambda = part.deep->set;
    else
        q.lambda = IntervalSet({part.omega0[0], part.omega0[1]});
    std::vector<Interval> traces;
    for (const Sublattice& S : part.returns) {
        QuotientBranch b{S.n, S.j, S.source, S.target, S.relaxed, S.domain, S.trace, S.branch};
        q.branches.push_back(std::move(b));
        traces.insert(traces.end(), S.trace.intervals().begin(), S.trace.intervals().end());
    }
    std::sort(q.branches.begin(), q.branches.end(),
              [](const QuotientBranch& u, const QuotientBranch& v) { return u.domain.lo < v.domain.lo; });
    for (size_t i = 1; i < q.branches.size(); ++i)
        if (q.branches[i].domain.lo < q.branches[i - 1].domain.hi)
            throw ConfigError("build_quotient: overlapping branch domains");
    q.domain = IntervalSet(traces);
    return q;
}

// ---------------------------------------------------------------- densities

int Density::bin_of(double x) const {
    auto it = std::upper_bound(bins.begin(), bins.end(), x, [](double v, const Interval& b) { return v < b.lo; });
    if (it == bins.begin()) return -1;
    --it;
    if (it->contains(x)) return static_cast<int>(it - bins.begin());
    return -1;
}

double Density::operator()(double x) const {
    int k = bin_of(x);
    return k < 0 ? 0.0 : values[k];
}

std::vector<double> stationary_vector(const UlamMatrix& P, double tol, int max_iter, double* residual,
                                      int* iterations) {
    size_t n = P.rows.size();
    std::vector<double> pi(n, 0), next(n);
    size_t live = 0;
    for (size_t i = 0; i < n; ++i) live += !P.rows[i].empty();
    if (!live) {
        if (residual) *residual = 0;
        if (iterations) *iterations = 0;
        return pi;
    }
    for (size_t i = 0; i < n; ++i)
        if (!P.rows[i].empty()) pi[i] = 1.0 / live;
    double res = 0;
    int it = 0;
    for (; it < max_iter; ++it) {
        std::fill(next.begin(), next.end(), 0.0);
        for (size_t i = 0; i < n; ++i)
            for (auto [j, w] : P.rows[i]) next[j] += pi[i] * w;
        res = 0;
        for (size_t i = 0; i < n; ++i) res += std::abs(next[i] - pi[i]);
        if (res < tol) break;
        // lazy step, same fixed vector, no periodic oscillation
        double s = 0;
        for (size_t i = 0; i < n; ++i) {
            pi[i] = 0.5 * (pi[i] + next[i]);
            s += pi[i];
        }
        for (double& v : pi) v /= s;
    }
    if (residual) *residual = res;
    if (iterations) *iterations = it;
    return pi;
}

Density ulam_density(const QuotientMap& q, int B, int samples_per_bin) {
    if (B < 16) throw ConfigError("ulam_density: need at least 16 bins");
    if (samples_per_bin < 1) throw ConfigError("ulam_density: need samples");
    Density d;
    std::vector<int> sides;
    for (int s = 0; s < 2; ++s)
        if (q.omega0[s].length() > 0) sides.push_back(s);
    int per = B / static_cast<int>(sides.size());
    std::vector<std::pair<int, int>> order;  // sort bins by position
    for (int s : sides) {
        Interval om = q.omega0[s];
        for (int i = 0; i < per; ++i)
            d.bins.push_back({om.lo + om.length() * i / per, i == per - 1 ? om.hi : om.lo + om.length() * (i + 1) / per});
    }
    std::sort(d.bins.begin(), d.bins.end(), [](const Interval& u, const Interval& v) { return u.lo < v.lo; });
    int n = static_cast<int>(d.bins.size());
    double Ltot = q.lambda.length();
    d.ref.resize(n);
    double lost = 0;
    std::vector<std::vector<std::pair<int, double>>> rows(n);
    std::vector<bool> has_row(n, false);
    for (int i = 0; i < n; ++i) {
        double lam = q.lambda.intersect(d.bins[i]).length();
        d.ref[i] = Ltot > 0 ? lam / Ltot : 0;
        lost += lam - q.domain.intersect(d.bins[i]).length();
    }
    d.lost_fraction = Ltot > 0 ? lost / Ltot : 0;
    parallel_for(n, [&](size_t i) {
        IntervalSet pieces = q.domain.intersect(d.bins[i]);
        std::vector<double> xs = stratified(pieces, samples_per_bin);
        std::map<int, double> counts;
        int hit = 0;
        for (double x : xs) {
            auto y = q.apply(x);
            if (!y) continue;
            int j = d.bin_of(*y);
            if (j < 0) continue;
            counts[j] += 1;
            ++hit;
        }
        for (auto [j, c] : counts) rows[i].push_back({j, c / hit});
        has_row[i] = hit > 0;
    });
    finish_density(d, restrict_chain(std::move(rows), has_row));
    return d;
}

Density ulam_quadratic(double a, int B, int samples_per_bin) {
    if (B < 16) throw ConfigError("ulam_quadratic: need at least 16 bins");
    if (!(a > 0 && a <= 2)) throw ConfigError("ulam_quadratic: need 0 < a <= 2");
    Density d;
    for (int i = 0; i < B; ++i) d.bins.push_back({-1 + 2.0 * i / B, i == B - 1 ? 1.0 : -1 + 2.0 * (i + 1) / B});
    d.ref.assign(B, 2.0 / B);
    std::vector<std::vector<std::pair<int, double>>> rows(B);
    std::vector<bool> has_row(B, true);
    parallel_for(B, [&](size_t i) {
        std::map<int, double> counts;
        for (int s = 0; s < samples_per_bin; ++s) {
            double x = d.bins[i].lo + d.bins[i].length() * (s + 0.5) / samples_per_bin;
            double y = quad_step(a, x);
            int j = std::clamp(static_cast<int>(std::floor((y + 1) * B / 2)), 0, B - 1);
            counts[j] += 1.0 / samples_per_bin;
        }
        for (auto [j, c] : counts) rows[i].push_back({j, c});
    });
    finish_density(d, restrict_chain(std::move(rows), has_row));
    return d;
}

double arcsine_l1(const Density& d) {
    auto F = [](double x) { return std::asin(std::clamp(x, -1.0, 1.0)) / std::numbers::pi; };
    double total = 0;
    for (size_t i = 0; i < d.bins.size(); ++i) {
        double r = d.values[i], lo = d.bins[i].lo, hi = d.bins[i].hi;
        // crossing points of r with the arcsine density
        std::vector<double> cuts{lo};
        if (r > 1 / std::numbers::pi) {
            double xs = std::sqrt(1 - 1 / (std::numbers::pi * r * std::numbers::pi * r));
            for (double c : {-xs, xs})
                if (c > lo && c < hi) cuts.push_back(c);
        }
        cuts.push_back(hi);
        std::sort(cuts.begin(), cuts.end());
        for (size_t k = 0; k + 1 < cuts.size(); ++k) total += std::abs(r * (cuts[k + 1] - cuts[k]) - (F(cuts[k + 1]) - F(cuts[k])));
    }
    return total;
}

// ---------------------------------------------------------------- test functions

std::vector<TestFunction> bl_dictionary(int dict_size) {
    std::vector<TestFunction> D;
    const double r8 = 1 / (2 * std::sqrt(2.0));
    D.push_back({"x", [](Point z) { return z.x; }, 1, 2});
    D.push_back({"y", [](Point z) { return z.y; }, 1, 2});
    D.push_back({"x2", [](Point z) { return z.x * z.x / 4; }, 1, 1});
    D.push_back({"xy", [r8](Point z) { return z.x * z.y * r8; }, 1, 4 * r8});
    D.push_back({"y2", [](Point z) { return z.y * z.y / 4; }, 1, 1});
    int added = 0;
    for (int s = 1; added < dict_size; ++s)
        for (int k1 = 0; k1 <= s && added < dict_size; ++k1) {
            int k2 = s - k1;
            double w1 = k1 * std::numbers::pi / 2, w2 = k2 * std::numbers::pi / 2;
            double sc = 1 / std::hypot(w1, w2);
            for (int c = 0; c < 4 && added < dict_size; ++c) {
                bool s1 = c & 2, s2 = c & 1;
                if ((s1 && k1 == 0) || (s2 && k2 == 0)) continue;
                std::string name = std::string(s1 ? "sin" : "cos") + std::to_string(k1) + (s2 ? "sin" : "cos") + std::to_string(k2);
                D.push_back({name,
                             [=](Point z) {
                                 double u = s1 ? std::sin(w1 * z.x) : std::cos(w1 * z.x);
                                 double v = s2 ? std::sin(w2 * z.y) : std::cos(w2 * z.y);
                                 return sc * u * v;
                             },
                             1, sc});
                ++added;
            }
        }
    return D;
}

double discretize(const std::function<double(Point)>& phi, const std::vector<Point>& curve) {
    double m = std::numeric_limits<double>::infinity();
    for (const Point& z : curve) m = std::min(m, phi(z));
    return m;
}

double discretize(const std::function<double(Point)>& phi, const PlaneModel& model, double x, int nodes) {
    return discretize(phi, model.stable_curve(x, nodes));
}

// ---------------------------------------------------------------- Bowen lift

std::vector<QuadratureNode> base_quadrature(const QuotientMap& q, const Density& rho, int order) {
    std::vector<double> gx, gw;
    legendre(order, gx, gw);
    std::vector<QuadratureNode> out;
    for (size_t i = 0; i < rho.bins.size(); ++i) {
        if (!rho.support[i] || rho.mass[i] <= 0) continue;
        IntervalSet pieces = q.domain.intersect(rho.bins[i]);
        double L = pieces.length();
        if (L <= 0) continue;
        for (const Interval& iv : pieces.intervals())
            for (size_t k = 0; k < gx.size(); ++k) {
                double x = iv.mid() + 0.5 * iv.length() * gx[k];
                double w = rho.mass[i] * 0.5 * iv.length() * gw[k] / L;
                out.push_back({x, w, q.branch_at(x)});
            }
    }
    return out;
}

LiftGeometry lift_geometry(const QuotientMap& q, const Density& rho, const BowenConfig& cfg) {
    if (!q.model) throw ConfigError("lift_geometry: quotient without a plane model");
    if (cfg.k_max < 1) throw ConfigError("bowen: k_max must be >= 1");
    const PlaneModel& model = *q.model;
    LiftGeometry g;
    g.nodes = base_quadrature(q, rho, cfg.order);
    g.b = model.contraction();
    g.k_max = cfg.k_max;
    size_t n = g.nodes.size();
    g.start.resize(n);
    g.image.resize(n);
    g.R.assign(n, 0);
    g.half.assign(n, std::vector<double>(cfg.k_max + 1, 0));
    g.curve.resize(n);
    g.dir.resize(n);
    g.depth.assign(n, 0);
    double h0 = model.stable_half_length();
    parallel_for(n, [&](size_t i) {
        const QuadratureNode& nd = g.nodes[i];
        g.start[i] = model.lift(nd.x);
        g.R[i] = nd.branch >= 0 ? q.branches[nd.branch].n : 0;
        g.image[i] = push(model, g.start[i], g.R[i]);
        g.curve[i] = model.stable_curve(nd.x, cfg.curve_nodes);
        g.dir[i] = unit(model.stable_direction(g.image[i]));
        auto& h = g.half[i];
        h[0] = h0;
        double y = nd.x, cum = 0;
        bool known = true;
        for (int k = 1; k <= cfg.k_max; ++k) {
            int br = known ? q.branch_at(y) : -1;
            if (br < 0) {
                known = false;
                h[k] = h[k - 1];
                continue;
            }
            cum += log_smin_along(model, model.lift(y), q.branches[br].n);
            g.depth[i] = k;
            h[k] = std::min(h[k - 1], h0 * std::exp(cum));
            y = q.branches[br].map(y);
        }
    });
    // frozen segments add nothing to the successive gaps
    double wsum = 0;
    for (size_t i = 0; i < n; ++i) {
        for (int k = 0; k <= g.depth[i]; ++k) g.C = std::max(g.C, 2 * g.half[i][k] / std::pow(g.b, k));
        wsum += g.nodes[i].w;
        if (g.depth[i] < cfg.k_max) g.escaped += g.nodes[i].w;
    }
    if (wsum > 0) g.escaped /= wsum;
    return g;
}

BowenResult bowen_lift(const LiftGeometry& g, const TestFunction& phi, int curve_nodes) {
    BowenResult r;
    int K = g.k_max;
    r.C = g.C;
    r.terms.assign(K + 1, 0);
    size_t n = g.nodes.size();
    std::vector<std::vector<double>> vals(n, std::vector<double>(K + 1));
    parallel_for(n, [&](size_t i) {
        vals[i][0] = discretize(phi.f, g.curve[i]);
        Point Z = g.image[i];
        Tangent e = g.dir[i];
        for (int k = 1; k <= K; ++k) {
            double L = g.half[i][k], m = std::numeric_limits<double>::infinity();
            for (int s = 0; s < curve_nodes; ++s) {
                double t = curve_nodes == 1 ? 0 : -L + 2 * L * s / (curve_nodes - 1);
                m = std::min(m, phi.f(Z + t * e));
            }
            vals[i][k] = m;
        }
    });
    double wsum = 0;
    for (size_t i = 0; i < n; ++i) wsum += g.nodes[i].w;
    for (int k = 0; k <= K; ++k) {
        double s = 0;
        for (size_t i = 0; i < n; ++i) s += g.nodes[i].w * vals[i][k];
        r.terms[k] = wsum > 0 ? s / wsum : 0;
    }
    r.cauchy_ok = true;
    for (int k = 0; k < K; ++k) {
        r.gaps.push_back(std::abs(r.terms[k + 1] - r.terms[k]));
        r.var_bound.push_back(phi.lip * r.C * std::pow(g.b, k));
        r.cauchy_ok = r.cauchy_ok && r.gaps[k] <= r.var_bound[k];
    }
    r.limit = r.terms[K];
    for (int k = K / 2; k < K; ++k) r.gap = std::max(r.gap, r.gaps[k]);
    return r;
}

LiftedMeasure lift_measure(const LiftGeometry& g, int k_used) {
    if (k_used < 0 || k_used > g.k_max) throw ConfigError("lift_measure: k_used outside the computed range");
    LiftedMeasure m;
    m.k_used = k_used;
    double wsum = 0;
    for (const QuadratureNode& nd : g.nodes) wsum += nd.w;
    for (size_t i = 0; i < g.nodes.size(); ++i) {
        if (g.R[i] <= 0) continue;
        m.base_x.push_back(g.nodes[i].x);
        m.param.push_back(0);
        m.points.push_back(g.start[i]);
        m.weights.push_back(g.nodes[i].w / wsum);
        m.R.push_back(g.R[i]);
    }
    m.cauchy_gap = g.C * std::pow(g.b, k_used);
    return m;
}

double f_invariance_residual(const EmpiricalMeasure& mu, const PlaneModel& model, const TestFunction& phi) {
    double s = 0, wsum = 0;
    for (size_t i = 0; i < mu.points.size(); ++i) {
        s += mu.weights[i] * (phi.f(model.step(mu.points[i])) - phi.f(mu.points[i]));
        wsum += mu.weights[i];
    }
    return wsum > 0 ? std::abs(s) / wsum : 0;
}

InvarianceReport lifted_invariance_check(const QuotientMap& q, const Density& rho, const LiftedMeasure& nu,
                                         const TestFunction& phi) {
    const PlaneModel& model = *q.model;
    InvarianceReport r;
    double s = 0;
    std::vector<double> before(rho.bins.size(), 0), after(rho.bins.size(), 0);
    double outside = 0;
    for (size_t i = 0; i < nu.points.size(); ++i) {
        Point z = nu.points[i];
        s += nu.weights[i] * (phi.f(push(model, z, nu.R[i])) - phi.f(z));
        int b0 = rho.bin_of(nu.base_x[i]);
        if (b0 >= 0) before[b0] += nu.weights[i];
        auto y = q.apply(nu.base_x[i]);
        int b1 = y ? rho.bin_of(*y) : -1;
        if (b1 >= 0)
            after[b1] += nu.weights[i];
        else
            outside += nu.weights[i];
    }
    r.residual = std::abs(s);
    r.tv_bins = outside;
    double width = 0;
    for (size_t j = 0; j < rho.bins.size(); ++j) {
        r.tv_bins += std::abs(after[j] - before[j]);
        width = std::max(width, rho.bins[j].length());
    }
    r.bound = phi.sup * r.tv_bins + phi.lip * (width + 2 * model.stable_half_length());
    return r;
}

// ---------------------------------------------------------------- empirical measures

EmpiricalMeasure saturate(const LiftedMeasure& nu, const PlaneModel& model, int L_max, const GeometricFit* tail) {
    if (L_max < 1) throw ConfigError("saturate: L_max must be >= 1");
    EmpiricalMeasure m;
    m.tag = "saturated";
    double total = 0, wsum = 0, wr = 0;
    for (size_t i = 0; i < nu.points.size(); ++i) {
        int L = std::min(nu.R[i], L_max);
        Point z = nu.points[i];
        for (int l = 0; l < L; ++l) {
            m.points.push_back(z);
            m.weights.push_back(nu.weights[i]);
            if (l + 1 < L) z = model.step(z);
        }
        total += nu.weights[i] * L;
        wsum += nu.weights[i];
        wr += nu.weights[i] * nu.R[i];
    }
    for (double& w : m.weights) w /= total;
    m.mean_return = wsum > 0 ? wr / wsum : 0;
    if (tail && tail->theta0 > 0 && tail->theta0 < 1)
        m.tail_bound = tail->C0 * std::pow(tail->theta0, L_max) / (1 - tail->theta0);
    return m;
}

EmpiricalMeasure birkhoff_srb(const Param& p, Point z0, long n_burn, long n_keep) {
    if (n_keep < 1) throw ConfigError("birkhoff_srb: n_keep must be >= 1");
    EmpiricalMeasure m;
    m.tag = "birkhoff";
    Point z = z0;
    auto check = [](Point q) {
        if (!(std::abs(q.x) <= 10 && std::abs(q.y) <= 10)) throw DivergenceError("orbit left [-10, 10]^2");
    };
    for (long i = 0; i < n_burn; ++i) {
        z = henon_step(p, z);
        check(z);
    }
    m.points.reserve(n_keep);
    for (long i = 0; i < n_keep; ++i) {
        m.points.push_back(z);
        z = henon_step(p, z);
        check(z);
    }
    m.weights.assign(n_keep, 1.0 / n_keep);
    m.batch_size = std::max(1L, n_keep / 20);
    return m;
}

double birkhoff_average(const Param& p, Point z0, long n_burn, long n_keep, const std::function<double(Point)>& g) {
    if (n_keep < 1) throw ConfigError("birkhoff_average: n_keep must be >= 1");
    Point z = z0;
    for (long i = 0; i < n_burn; ++i) z = henon_step(p, z);
    double s = 0, c = 0;  // Kahan
    for (long i = 0; i < n_keep; ++i) {
        if (!(std::abs(z.x) <= 10 && std::abs(z.y) <= 10)) throw DivergenceError("orbit left [-10, 10]^2");
        double y = g(z) - c, t = s + y;
        c = (t - s) - y;
        s = t;
        z = henon_step(p, z);
    }
    return s / n_keep;
}

std::vector<double> moments(const EmpiricalMeasure& mu, const std::vector<TestFunction>& dict) {
    std::vector<double> out(dict.size(), 0);
    double wsum = 0;
    for (double w : mu.weights) wsum += w;
    for (size_t k = 0; k < dict.size(); ++k) {
        double s = 0;
        for (size_t i = 0; i < mu.points.size(); ++i) s += mu.weights[i] * dict[k].f(mu.points[i]);
        out[k] = wsum > 0 ? s / wsum : 0;
    }
    return out;
}

std::vector<double> moment_errors(const EmpiricalMeasure& mu, const std::vector<TestFunction>& dict, int batches) {
    std::vector<double> se(dict.size(), 0);
    if (mu.tag != "birkhoff" || batches < 2 || mu.points.size() < static_cast<size_t>(2 * batches)) return se;
    size_t per = mu.points.size() / batches;
    for (size_t k = 0; k < dict.size(); ++k) {
        std::vector<double> means(batches, 0);
        for (int bI = 0; bI < batches; ++bI) {
            double s = 0;
            for (size_t i = bI * per; i < (bI + 1) * per; ++i) s += dict[k].f(mu.points[i]);
            means[bI] = s / per;
        }
        double m = std::accumulate(means.begin(), means.end(), 0.0) / batches, v = 0;
        for (double x : means) v += (x - m) * (x - m);
        se[k] = std::sqrt(v / (batches - 1) / batches);
    }
    return se;
}

double measure_compare(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw ConfigError("measure_compare: dictionary mismatch");
    double d = 0;
    for (size_t k = 0; k < a.size(); ++k) d = std::max(d, std::abs(a[k] - b[k]));
    return d;
}

double measure_compare(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, int dict_size) {
    auto D = bl_dictionary(dict_size);
    return measure_compare(moments(mu, D), moments(nu, D));
}

double dictionary_z(size_t features, double level) {
    boost::math::normal N;
    double alpha = (1 - level) / (2.0 * std::max<size_t>(features, 1));
    return boost::math::quantile(N, 1 - alpha);
}

double compare_error_bar(const std::vector<double>& se_mu, const std::vector<double>& se_nu, double level) {
    double m = 0;
    for (size_t k = 0; k < se_mu.size(); ++k) m = std::max(m, std::hypot(se_mu[k], k < se_nu.size() ? se_nu[k] : 0.0));
    return dictionary_z(se_mu.size(), level) * m;
}

std::string measure_to_csv(const EmpiricalMeasure& mu) {
    std::ostringstream os;
    os.precision(17);
    os << "x,y,weight\n";
    for (size_t i = 0; i < mu.points.size(); ++i) os << mu.points[i].x << ',' << mu.points[i].y << ',' << mu.weights[i] << '\n';
    return os.str();
}

std::string measure_to_binned_json(const EmpiricalMeasure& mu, int nx, int ny, Interval xr, Interval yr) {
    if (nx < 1 || ny < 1) throw ConfigError("binned export: grid must be nonempty");
    std::vector<std::vector<double>> grid(ny, std::vector<double>(nx, 0));
    double outside = 0;
    for (size_t i = 0; i < mu.points.size(); ++i) {
        const Point& z = mu.points[i];
        int ix = static_cast<int>(std::floor((z.x - xr.lo) / xr.length() * nx));
        int iy = static_cast<int>(std::floor((z.y - yr.lo) / yr.length() * ny));
        if (z.x == xr.hi) ix = nx - 1;
        if (z.y == yr.hi) iy = ny - 1;
        if (ix < 0 || ix >= nx || iy < 0 || iy >= ny)
            outside += mu.weights[i];
        else
            grid[iy][ix] += mu.weights[i];
    }
    nlohmann::json j;
    j["dictionary"] = kDictionaryVersion;
    j["tag"] = mu.tag;
    j["nx"] = nx;
    j["ny"] = ny;
    j["x_range"] = {xr.lo, xr.hi};
    j["y_range"] = {yr.lo, yr.hi};
    j["outside"] = outside;
    j["weights"] = grid;
    return j.dump();
}

}  // namespace henon
