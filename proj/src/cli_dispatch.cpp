#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <json.hpp>
#include <sstream>

#include "henonlab/cli_io.hpp"
#include "henonlab/errors.hpp"
#include "henonlab/one_dim.hpp"
#include "henonlab/parallel.hpp"

namespace fs = std::filesystem;

namespace henon {

namespace {

struct Run {
    RunManifest m;
    fs::path dir;

    std::string write(const std::string& name, const std::string& content, StageRecord& st) {
        fs::path f = dir / name;
        std::ofstream o(f, std::ios::binary);
        if (!o) throw ConfigError("cannot write " + f.string());
        o << content;
        st.checksums[name] = sha256_hex(content);
        return f.string();
    }

    template <class F>
    void stage(const std::string& name, F&& body) {
        StageRecord st;
        st.name = name;
        auto t0 = std::chrono::steady_clock::now();
        body(st);
        st.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        m.stages.push_back(std::move(st));
    }
};

std::string num(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

std::vector<double> parse_list(const std::string& s) {
    std::vector<double> v;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        try {
            size_t used = 0;
            v.push_back(std::stod(tok, &used));
            if (used != tok.size()) throw std::invalid_argument(tok);
        } catch (const std::exception&) {
            throw ConfigError("bad number in list: '" + tok + "'");
        }
    }
    return v;
}

std::string intervals_csv(const IntervalSet& s) {
    std::ostringstream os;
    os << std::setprecision(17) << "lo,hi\n";
    for (const Interval& iv : s.intervals()) os << iv.lo << ',' << iv.hi << '\n';
    return os.str();
}

std::string cantor_levels_csv(const std::vector<std::shared_ptr<const CantorApprox>>& L) {
    std::ostringstream os;
    os << std::setprecision(17) << "# henonlab-cantor-levels v1\nlevel,measure,components,exclusion_ratio,windows,binding_fallbacks\n";
    for (const auto& c : L)
        os << c->level << ',' << c->set.length() << ',' << c->set.size() << ',' << c->exclusion_ratio << ','
           << c->windows << ',' << c->binding_fallbacks << '\n';
    return os.str();
}

std::string partition_csv(const ReturnPartition& P) {
    std::ostringstream os;
    os << std::setprecision(17)
       << "# henonlab-partition v1\nn,j,source,target,relaxed,base_lo,base_hi,domain_lo,domain_hi,trace_measure\n";
    for (const Sublattice& s : P.returns)
        os << s.n << ',' << s.j << ',' << s.source << ',' << s.target << ',' << s.relaxed << ',' << s.base.lo << ','
           << s.base.hi << ',' << s.domain.lo << ',' << s.domain.hi << ',' << s.trace.length() << '\n';
    return os.str();
}

std::string tail_csv(const ReturnPartition& P) {
    std::ostringstream os;
    os << std::setprecision(17) << "n,tail,sublattices\n";
    auto t = P.tail();
    auto v = P.sublattice_counts();
    for (size_t n = 0; n < t.size(); ++n) os << n << ',' << t[n] << ',' << (n < v.size() ? v[n] : 0) << '\n';
    return os.str();
}

}  // namespace

int cli_dispatch(int argc, const char* const* argv) {
    CLI::App app{"henonlab: numerical laboratory for Henon-like attractors"};
    app.set_version_flag("--version", kToolVersion);
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path;
    app.add_option("--config", config_path, "key = value config file");
    std::map<std::string, std::string> flag_values;
    std::map<std::string, CLI::Option*> flags;
    for (const std::string& k : config_keys())
        flags[k] = app.add_option("--" + k, flag_values[k], "config override: " + k);
    std::string out_flag, depth_flag;
    auto* out_opt = app.add_option("--out", out_flag, "output directory");
    auto* depth_opt = app.add_option("--depth", depth_flag, "alias of --cantor_depth");

    auto* iterate = app.add_subcommand("iterate", "orbit of a seed with finite-time Lyapunov exponent");
    long n_iter = 1000;
    iterate->add_option("--n", n_iter, "iterates")->check(CLI::PositiveNumber);

    app.add_subcommand("bc-check", "1-d expansion and basic-assumption check");
    auto* critical = app.add_subcommand("critical", "critical approximations on a generation leaf");
    int gen = 1;
    critical->add_option("--gen", gen, "leaf generation")->check(CLI::PositiveNumber);

    app.add_subcommand("cantor", "Cantor exclusion pipeline");
    auto* stable = app.add_subcommand("stable-curves", "stable curves through base points");
    int samples = 8;
    stable->add_option("--samples", samples, "base points per Omega0 side")->check(CLI::PositiveNumber);

    app.add_subcommand("partition", "return partition and skeleton");
    auto* tower = app.add_subcommand("tower", "quotient density, lift and saturated measure");
    auto* srb = app.add_subcommand("srb", "Birkhoff SRB cloud");
    int bins = 64;
    for (auto* s : {tower, srb}) s->add_option("--bins", bins, "bins per axis of the JSON histogram")->check(CLI::PositiveNumber);

    auto* stability = app.add_subcommand("stability", "statistical-stability sweep");
    std::string base_str, da_str;
    stability->add_option("--base", base_str, "base parameter a,b");
    stability->add_option("--da", da_str, "perturbations of a, comma separated")->required();
    bool no_tower = false;
    stability->add_flag("--no-tower", no_tower, "skip the tower measure");

    auto* toy = app.add_subcommand("toy-shift", "piecewise affine toy horseshoe");
    std::string toy_kind = "thirds";
    double toy_lambda = 1e-3;
    toy->add_option("--kind", toy_kind, "thirds | geometric")->check(CLI::IsMember({"thirds", "geometric"}));
    toy->add_option("--lambda", toy_lambda, "stable contraction");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 64;
    }

    Run run;
    run.m.version = kToolVersion;
    run.m.command = app.get_subcommands().front()->get_name();
    for (int i = 0; i < argc; ++i) run.m.argv.emplace_back(argv[i]);
    run.m.threads = worker_count();
    int status = 0;
    try {
        RunConfig& cfg = run.m.config;
        if (!config_path.empty()) cfg = load_config(config_path);
        for (const auto& [k, opt] : flags)
            if (opt->count() > 0) set_config_value(cfg, k, flag_values[k]);
        if (depth_opt->count() > 0) set_config_value(cfg, "cantor_depth", depth_flag);
        if (out_opt->count() > 0) set_config_value(cfg, "output_dir", out_flag);
        if (!base_str.empty()) {
            auto ab = parse_list(base_str);
            if (ab.size() != 2) throw ConfigError("--base needs a,b");
            cfg.a = ab[0];
            cfg.b = ab[1];
        }
        run.dir = cfg.output_dir;
        fs::create_directories(run.dir);
        run.stage("config", [&](StageRecord& st) { run.write("run.cfg", config_to_text(cfg), st); });

        const std::string& cmd = run.m.command;
        if (cmd == "iterate") {
            run.stage("iterate", [&](StageRecord& st) {
                Param p = cfg.param();
                OrbitSegment o = iterate_with_jacobian(p, cfg.seed, static_cast<int>(n_iter));
                std::ostringstream os;
                os << std::setprecision(17) << "k,x,y,log_norm\n";
                for (size_t k = 0; k < o.points.size(); ++k)
                    os << k << ',' << o.points[k].x << ',' << o.points[k].y << ','
                       << (k < o.log_norms.size() ? o.log_norms[k] : NAN) << '\n';
                run.write("orbit.csv", os.str(), st);
                double lyap = o.log_norms.empty() ? 0 : o.log_norms.back() / static_cast<double>(n_iter);
                std::cout << "finite-time Lyapunov exponent " << num(lyap) << "\n";
            });
        } else if (cmd == "bc-check") {
            run.stage("bc-check", [&](StageRecord& st) {
                BCReport r = check_bc_1d(cfg.a, cfg.c, cfg.alpha, cfg.N);
                nlohmann::ordered_json j{{"a", cfg.a},           {"c", cfg.c},
                                         {"alpha", cfg.alpha},   {"N", cfg.N},
                                         {"pass", r.pass()},     {"eg_pass", r.eg_pass},
                                         {"eg_margin", r.eg_margin}, {"eg_worst_n", r.eg_worst_n},
                                         {"ba_pass", r.ba_pass}, {"ba_margin", r.ba_margin},
                                         {"ba_worst_n", r.ba_worst_n}};
                run.write("bc_check.json", j.dump(2) + "\n", st);
                std::cout << (r.pass() ? "pass" : "fail") << ": eg_margin " << num(r.eg_margin) << ", ba_margin "
                          << num(r.ba_margin) << "\n";
            });
        } else if (cmd == "critical") {
            run.stage("critical", [&](StageRecord& st) {
                std::ostringstream os;
                os << std::setprecision(17) << "generation,x,y,tangent_x,tangent_y,curvature,order,residual\n";
                for (int g = 1; g <= gen; ++g)
                    for (const CriticalApprox& c : critical_set(cfg.param(), g, cfg.n2_order))
                        os << g << ',' << c.point.x << ',' << c.point.y << ',' << c.tangent.v1 << ',' << c.tangent.v2
                           << ',' << c.curvature << ',' << c.order << ',' << c.residual << '\n';
                run.write("critical.csv", os.str(), st);
            });
        } else if (cmd == "cantor") {
            run.stage("cantor", [&](StageRecord& st) {
                HenonBase base(cfg.param());
                auto L = cantor_pipeline(base, cfg.cantor_depth);
                run.write("cantor_intervals.csv", intervals_csv(L.back()->set), st);
                run.write("cantor_levels.csv", cantor_levels_csv(L), st);
                std::cout << "level " << L.back()->level << ": " << L.back()->set.size() << " intervals, measure "
                          << num(L.back()->set.length()) << "\n";
            });
        } else if (cmd == "stable-curves") {
            run.stage("stable-curves", [&](StageRecord& st) {
                HenonBase base(cfg.param());
                std::ostringstream os;
                os << std::setprecision(17) << "curve,base_x,t,x,y\n";
                int id = 0;
                for (int side = 0; side < 2; ++side) {
                    Interval w = base.omega0(side);
                    for (int i = 0; i < samples; ++i) {
                        double x = w.lo + (i + 0.5) / samples * w.length();
                        StableCurveApprox s = build_stable_curve(base, x, cfg.n2_order);
                        for (size_t k = 0; k < s.curve.nodes.size(); ++k)
                            os << id << ',' << x << ',' << s.curve.t[k] << ',' << s.curve.nodes[k].x << ','
                               << s.curve.nodes[k].y << '\n';
                        ++id;
                    }
                }
                run.write("stable_curves.csv", os.str(), st);
            });
        } else if (cmd == "partition") {
            run.stage("partition", [&](StageRecord& st) {
                HenonBase base(cfg.param());
                Skeleton sk;
                sk.param = cfg.param();
                sk.cantor = cantor_pipeline(base, cfg.cantor_depth);
                sk.part = build_return_partition(base, cfg.N, sk.cantor.back());
                run.write("partition.csv", partition_csv(sk.part), st);
                run.write("tail.csv", tail_csv(sk.part), st);
                run.write("skeleton.txt", skeleton_to_text(sk), st);
                std::cout << sk.part.returns.size() << " sublattices, quarantined measure "
                          << num(sk.part.quarantined.length()) << "\n";
                if (!sk.part.quarantined.empty()) status = 2;
            });
        } else if (cmd == "tower") {
            run.stage("tower", [&](StageRecord& st) {
                TowerRun t = run_tower(cfg.param(), cfg.stability());
                std::ostringstream os;
                os << std::setprecision(17) << "bin_lo,bin_hi,mass,ref,value,support\n";
                for (size_t i = 0; i < t.rho.bins.size(); ++i)
                    os << t.rho.bins[i].lo << ',' << t.rho.bins[i].hi << ',' << t.rho.mass[i] << ',' << t.rho.ref[i]
                       << ',' << t.rho.values[i] << ',' << t.rho.support[i] << '\n';
                run.write("density.csv", os.str(), st);
                run.write("tower_measure.csv", measure_to_csv(t.saturated), st);
                run.write("tower_binned.json", measure_to_binned_json(t.saturated, bins, bins), st);
                nlohmann::ordered_json j{{"sublattices", t.part.returns.size()},
                                         {"density_M", t.rho.M},
                                         {"density_residual", t.rho.residual},
                                         {"reducible", t.rho.reducible},
                                         {"leak", t.rho.leak},
                                         {"lost_fraction", t.rho.lost_fraction},
                                         {"tail_theta0", t.tail.theta0},
                                         {"tail_C0", t.tail.C0},
                                         {"tail_r2", t.tail.r2},
                                         {"lift_C", t.geom.C},
                                         {"lift_escaped", t.geom.escaped},
                                         {"cauchy_gap", t.nu.cauchy_gap},
                                         {"tail_bound", t.saturated.tail_bound},
                                         {"mean_return", t.saturated.mean_return}};
                run.write("tower_summary.json", j.dump(2) + "\n", st);
                if (!t.part.quarantined.empty()) status = 2;
            });
        } else if (cmd == "srb") {
            run.stage("srb", [&](StageRecord& st) {
                EmpiricalMeasure mu = birkhoff_srb(cfg.param(), cfg.seed, cfg.orbit_burn, cfg.orbit_keep);
                run.write("srb_measure.csv", measure_to_csv(mu), st);
                run.write("srb_binned.json", measure_to_binned_json(mu, bins, bins), st);
            });
        } else if (cmd == "stability") {
            run.stage("stability", [&](StageRecord& st) {
                StabilityConfig sc = cfg.stability();
                sc.tower = !no_tower;
                StabilityCurve c = stability_experiment(cfg.param(), parse_list(da_str), sc);
                run.write("stability.csv", stability_to_csv(c), st);
                for (const StabilityRow& r : c.rows) {
                    std::cout << "da " << num(r.param_dist) << ": weak* " << num(r.weak_star) << " +- "
                              << num(r.error_bar);
                    if (r.quarantined) std::cout << " (quarantined: " << r.reason << ")";
                    std::cout << "\n";
                    if (r.quarantined) status = 2;
                }
                std::cout << "control " << num(c.control) << " +- " << num(c.control_bar) << "\n";
            });
        } else if (cmd == "toy-shift") {
            run.stage("toy-shift", [&](StageRecord& st) {
                ToyShift T = toy_kind == "geometric" ? ToyShift::geometric(cfg.N, toy_lambda)
                                                     : ToyShift::thirds({1, 1, 1}, toy_lambda);
                Skeleton sk;
                sk.kind = "toy";
                sk.param = cfg.param();
                sk.toy_branches = T.branches();
                sk.toy_lambda = T.contraction();
                sk.toy_height = T.stable_half_length();
                sk.part = T.partition(cfg.N);
                run.write("partition.csv", partition_csv(sk.part), st);
                run.write("tail.csv", tail_csv(sk.part), st);
                run.write("skeleton.txt", skeleton_to_text(sk), st);
            });
        }
        run.m.message = status == 2 ? "partial: quarantined pieces" : "ok";
    } catch (const std::exception& e) {
        std::cerr << "henonlab " << run.m.command << ": " << e.what() << "\n";
        status = 1;
        run.m.message = e.what();
    }
    run.m.exit_status = status;
    if (!run.dir.empty()) {
        std::ofstream mf(run.dir / "manifest.json");
        mf << manifest_to_json(run.m);
    }
    return status;
}

}  // namespace henon
