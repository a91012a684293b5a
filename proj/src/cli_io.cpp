#include "henonlab/cli_io.hpp"

#include <openssl/evp.h>

#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <json.hpp>
#include <sstream>

#include "henonlab/errors.hpp"

namespace henon {

// ---------------------------------------------------------------- config

double RunConfig::delta() const { return std::exp(-static_cast<double>(Delta)); }
double RunConfig::beta() const { return 14 * alpha; }

Param RunConfig::param() const { return Param::make(a, b, Delta, alpha); }

StabilityConfig RunConfig::stability() const {
    StabilityConfig s;
    s.n_burn = orbit_burn;
    s.n_keep = orbit_keep;
    s.lyap_n = lyap_n;
    s.seed = seed;
    s.control_seed = control_seed;
    s.horizon = N;
    s.cantor_depth = cantor_depth;
    s.ulam_bins = ulam_bins;
    s.ulam_samples = ulam_samples;
    s.k_max = bowen_k_max;
    s.L_max = L_max;
    return s;
}

ControlConfig RunConfig::control() const {
    ControlConfig k;
    k.c = c;
    k.c0 = c0;
    k.c1 = c1;
    k.c2 = c2;
    k.M0 = M0;
    return k;
}

namespace {

std::string fmt(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

double parse_double(const std::string& key, const std::string& s) {
    double v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size() || !std::isfinite(v))
        throw ConfigError("config: bad number for " + key + ": '" + s + "'");
    return v;
}

long parse_long(const std::string& key, const std::string& s) {
    long v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) throw ConfigError("config: bad integer for " + key + ": '" + s + "'");
    return v;
}

Point parse_point(const std::string& key, const std::string& s) {
    auto comma = s.find(',');
    if (comma == std::string::npos) throw ConfigError("config: " + key + " needs x,y");
    return {parse_double(key, s.substr(0, comma)), parse_double(key, s.substr(comma + 1))};
}

std::string trim(const std::string& s) {
    size_t i = s.find_first_not_of(" \t\r"), j = s.find_last_not_of(" \t\r");
    return i == std::string::npos ? "" : s.substr(i, j - i + 1);
}

}  // namespace

std::vector<std::string> config_keys() {
    return {"a",          "b",         "Delta",        "alpha",       "c",          "c0",
            "c1",         "c2",        "M0",           "rho_creation", "fold_choice", "N",
            "n2_order",   "cantor_depth", "ulam_bins", "ulam_samples", "bowen_k_max", "L_max",
            "orbit_burn", "orbit_keep", "lyap_n",      "seed",        "control_seed", "output_dir"};
}

void set_config_value(RunConfig& c, const std::string& key, const std::string& v) {
    if (key == "a") c.a = parse_double(key, v);
    else if (key == "b") c.b = parse_double(key, v);
    else if (key == "Delta") c.Delta = static_cast<int>(parse_long(key, v));
    else if (key == "alpha") c.alpha = parse_double(key, v);
    else if (key == "c") c.c = parse_double(key, v);
    else if (key == "c0") c.c0 = parse_double(key, v);
    else if (key == "c1") c.c1 = parse_double(key, v);
    else if (key == "c2") c.c2 = parse_double(key, v);
    else if (key == "M0") c.M0 = static_cast<int>(parse_long(key, v));
    else if (key == "rho_creation") c.rho_creation = parse_double(key, v);
    else if (key == "fold_choice") {
        if (v != "2m") throw ConfigError("config: fold_choice must be 2m (fold period l = 2m)");
        c.fold_choice = v;
    }
    else if (key == "N") c.N = static_cast<int>(parse_long(key, v));
    else if (key == "n2_order") c.n2_order = static_cast<int>(parse_long(key, v));
    else if (key == "cantor_depth") c.cantor_depth = static_cast<int>(parse_long(key, v));
    else if (key == "ulam_bins") c.ulam_bins = static_cast<int>(parse_long(key, v));
    else if (key == "ulam_samples") c.ulam_samples = static_cast<int>(parse_long(key, v));
    else if (key == "bowen_k_max") c.bowen_k_max = static_cast<int>(parse_long(key, v));
    else if (key == "L_max") c.L_max = static_cast<int>(parse_long(key, v));
    else if (key == "orbit_burn") c.orbit_burn = parse_long(key, v);
    else if (key == "orbit_keep") c.orbit_keep = parse_long(key, v);
    else if (key == "lyap_n") c.lyap_n = parse_long(key, v);
    else if (key == "seed") c.seed = parse_point(key, v);
    else if (key == "control_seed") c.control_seed = parse_point(key, v);
    else if (key == "output_dir") {
        if (v.empty()) throw ConfigError("config: output_dir is empty");
        c.output_dir = v;
    }
    else throw ConfigError("config: unknown key '" + key + "'");
}

std::string config_to_text(const RunConfig& c) {
    std::ostringstream os;
    os << "# henonlab run configuration\n";
    os << "# derived: delta = " << fmt(c.delta()) << ", beta = " << fmt(c.beta()) << "\n";
    os << "a = " << fmt(c.a) << "\nb = " << fmt(c.b) << "\nDelta = " << c.Delta << "\nalpha = " << fmt(c.alpha)
       << "\nc = " << fmt(c.c) << "\nc0 = " << fmt(c.c0) << "\nc1 = " << fmt(c.c1) << "\nc2 = " << fmt(c.c2)
       << "\nM0 = " << c.M0 << "\nrho_creation = " << fmt(c.rho_creation) << "\nfold_choice = " << c.fold_choice
       << "\n\nN = " << c.N << "\nn2_order = " << c.n2_order << "\ncantor_depth = " << c.cantor_depth
       << "\nulam_bins = " << c.ulam_bins << "\nulam_samples = " << c.ulam_samples
       << "\nbowen_k_max = " << c.bowen_k_max << "\nL_max = " << c.L_max << "\norbit_burn = " << c.orbit_burn
       << "\norbit_keep = " << c.orbit_keep << "\nlyap_n = " << c.lyap_n << "\n\nseed = " << fmt(c.seed.x) << ','
       << fmt(c.seed.y) << "\ncontrol_seed = " << fmt(c.control_seed.x) << ',' << fmt(c.control_seed.y)
       << "\noutput_dir = " << c.output_dir << "\n";
    return os.str();
}

RunConfig config_from_text(const std::string& text) {
    RunConfig c;
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
        set_config_value(c, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return c;
}

RunConfig load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot read config " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return config_from_text(ss.str());
}

void save_config(const std::string& path, const RunConfig& c) {
    std::ofstream f(path);
    if (!f) throw ConfigError("cannot write config " + path);
    f << config_to_text(c);
}

std::string sha256_hex(const std::string& data) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (!EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr)) throw Error("sha256 failed");
    std::ostringstream os;
    for (unsigned i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
    return os.str();
}

// ---------------------------------------------------------------- skeleton

namespace {

struct Writer {
    std::ostringstream os;
    Writer() { os << std::setprecision(17); }
    void set(const IntervalSet& s) {
        os << s.size();
        for (const Interval& iv : s.intervals()) os << ' ' << iv.lo << ' ' << iv.hi;
    }
    void ivs(const std::vector<Interval>& v) {
        os << v.size();
        for (const Interval& iv : v) os << ' ' << iv.lo << ' ' << iv.hi;
    }
    void vec(const std::vector<double>& v) {
        os << v.size();
        for (double x : v) os << ' ' << x;
    }
};

struct Reader {
    std::istringstream is;
    explicit Reader(const std::string& s) : is(s) {}
    void expect(const std::string& tag) {
        std::string t;
        if (!(is >> t) || t != tag) throw VersionError("skeleton: expected '" + tag + "', found '" + t + "'");
    }
    template <class T>
    T get() {
        T v{};
        if (!(is >> v)) throw VersionError("skeleton: truncated or malformed body");
        return v;
    }
    double num() {
        std::string t = get<std::string>();
        double v = 0;
        auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
        if (ec != std::errc() || p != t.data() + t.size()) throw VersionError("skeleton: bad number '" + t + "'");
        return v;
    }
    std::vector<Interval> ivs() {
        size_t n = get<size_t>();
        std::vector<Interval> v(n);
        for (auto& iv : v) {
            iv.lo = num();
            iv.hi = num();
        }
        return v;
    }
    IntervalSet set() { return IntervalSet(ivs()); }
    std::vector<double> vec() {
        size_t n = get<size_t>();
        std::vector<double> v(n);
        for (double& x : v) x = num();
        return v;
    }
};

}  // namespace

std::string skeleton_to_text(const Skeleton& s) {
    Writer w;
    auto& os = w.os;
    os << "kind " << s.kind << '\n';
    os << "param " << s.param.a << ' ' << s.param.b << ' ' << s.param.Delta << ' ' << s.param.alpha << ' '
       << s.param.horizon << '\n';
    os << "toy " << s.toy_branches.size() << ' ' << s.toy_lambda << ' ' << s.toy_height << '\n';
    for (const ToyBranch& t : s.toy_branches)
        os << t.R << ' ' << t.reversed << ' ' << t.base.lo << ' ' << t.base.hi << '\n';
    os << "cantor " << s.cantor.size() << '\n';
    int deep = -1;
    for (size_t k = 0; k < s.cantor.size(); ++k) {
        const CantorApprox& c = *s.cantor[k];
        if (s.part.deep == s.cantor[k]) deep = static_cast<int>(k);
        os << c.level << ' ' << c.exclusion_ratio << ' ' << c.windows << ' ' << c.binding_fallbacks << ' ';
        w.set(c.set);
        os << '\n';
    }
    const ReturnPartition& P = s.part;
    os << "partition " << P.horizon << ' ' << P.omega0[0].lo << ' ' << P.omega0[0].hi << ' ' << P.omega0[1].lo << ' '
       << P.omega0[1].hi << '\n';
    os << "levels " << P.levels.size() << '\n';
    for (const PartitionLevel& l : P.levels) {
        os << l.n << ' ' << l.active_length << ' ' << l.excluded_length << ' ' << l.returned_length << ' '
           << l.sublattices << ' ';
        w.ivs(l.cells);
        os << '\n';
    }
    os << "returns " << P.returns.size() << '\n';
    for (const Sublattice& r : P.returns) {
        os << r.n << ' ' << r.j << ' ' << r.source << ' ' << r.target << ' ' << r.relaxed << ' ' << r.base.lo << ' '
           << r.base.hi << ' ' << r.domain.lo << ' ' << r.domain.hi << ' ';
        w.set(r.trace);
        os << ' ';
        w.vec(r.branch.xs());
        os << ' ';
        w.vec(r.branch.ys());
        os << ' ';
        w.vec(r.branch.ds());
        os << '\n';
    }
    os << "unresolved ";
    w.set(P.unresolved);
    os << "\nquarantined ";
    w.set(P.quarantined);
    os << "\ndeep " << deep << "\nend\n";
    std::string body = os.str();
    return std::string(kSkeletonVersion) + "\nsha256 " + sha256_hex(body) + "\n" + body;
}

Skeleton skeleton_from_text(const std::string& text) {
    auto nl1 = text.find('\n');
    if (nl1 == std::string::npos || text.substr(0, nl1) != kSkeletonVersion)
        throw VersionError("skeleton: unsupported version '" + text.substr(0, std::min(nl1, text.size())) + "'");
    auto nl2 = text.find('\n', nl1 + 1);
    if (nl2 == std::string::npos) throw VersionError("skeleton: missing checksum line");
    std::string sumline = text.substr(nl1 + 1, nl2 - nl1 - 1);
    std::string body = text.substr(nl2 + 1);
    if (sumline.rfind("sha256 ", 0) != 0) throw VersionError("skeleton: missing checksum line");
    if (sumline.substr(7) != sha256_hex(body)) throw ChecksumError("skeleton: checksum mismatch");

    Skeleton s;
    Reader r(body);
    r.expect("kind");
    s.kind = r.get<std::string>();
    if (s.kind != "henon" && s.kind != "toy") throw VersionError("skeleton: unknown kind " + s.kind);
    r.expect("param");
    s.param.a = r.num();
    s.param.b = r.num();
    s.param.Delta = r.get<int>();
    s.param.alpha = r.num();
    s.param.horizon = r.get<int>();
    s.param = Param::make(s.param.a, s.param.b, s.param.Delta, s.param.alpha, s.param.horizon);
    r.expect("toy");
    size_t K = r.get<size_t>();
    s.toy_lambda = r.num();
    s.toy_height = r.num();
    for (size_t k = 0; k < K; ++k) {
        ToyBranch t;
        t.R = r.get<int>();
        t.reversed = r.get<int>() != 0;
        t.base.lo = r.num();
        t.base.hi = r.num();
        s.toy_branches.push_back(t);
    }
    r.expect("cantor");
    size_t L = r.get<size_t>();
    std::shared_ptr<const CantorApprox> prev;
    for (size_t k = 0; k < L; ++k) {
        auto c = std::make_shared<CantorApprox>();
        c->level = r.get<int>();
        c->exclusion_ratio = r.num();
        c->windows = r.get<int>();
        c->binding_fallbacks = r.get<int>();
        c->set = r.set();
        c->parent = prev;
        prev = c;
        s.cantor.push_back(c);
    }
    ReturnPartition& P = s.part;
    r.expect("partition");
    P.horizon = r.get<int>();
    P.omega0[0].lo = r.num();
    P.omega0[0].hi = r.num();
    P.omega0[1].lo = r.num();
    P.omega0[1].hi = r.num();
    r.expect("levels");
    size_t nl = r.get<size_t>();
    for (size_t k = 0; k < nl; ++k) {
        PartitionLevel l;
        l.n = r.get<int>();
        l.active_length = r.num();
        l.excluded_length = r.num();
        l.returned_length = r.num();
        l.sublattices = r.get<int>();
        l.cells = r.ivs();
        P.levels.push_back(std::move(l));
    }
    r.expect("returns");
    size_t nr = r.get<size_t>();
    for (size_t k = 0; k < nr; ++k) {
        Sublattice S;
        S.n = r.get<int>();
        S.j = r.get<int>();
        S.source = r.get<int>();
        S.target = r.get<int>();
        S.relaxed = r.get<int>() != 0;
        S.base.lo = r.num();
        S.base.hi = r.num();
        S.domain.lo = r.num();
        S.domain.hi = r.num();
        S.trace = r.set();
        auto xs = r.vec(), ys = r.vec(), ds = r.vec();
        S.branch = MonotoneMap::from_nodes(std::move(xs), std::move(ys), std::move(ds));
        P.returns.push_back(std::move(S));
    }
    r.expect("unresolved");
    P.unresolved = r.set();
    r.expect("quarantined");
    P.quarantined = r.set();
    r.expect("deep");
    int deep = r.get<int>();
    if (deep >= static_cast<int>(s.cantor.size())) throw VersionError("skeleton: deep level out of range");
    if (deep >= 0) P.deep = s.cantor[deep];
    r.expect("end");
    return s;
}

void save_skeleton(const std::string& path, const Skeleton& s) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot write skeleton " + path);
    f << skeleton_to_text(s);
}

Skeleton load_skeleton(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot read skeleton " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return skeleton_from_text(ss.str());
}

bool same_skeleton(const Skeleton& u, const Skeleton& v) { return skeleton_to_text(u) == skeleton_to_text(v); }

// ---------------------------------------------------------------- manifest

std::string manifest_to_json(const RunManifest& m) {
    nlohmann::ordered_json j;
    j["tool"] = m.tool;
    j["version"] = m.version;
    j["command"] = m.command;
    j["argv"] = m.argv;
    j["config"] = config_to_text(m.config);
    j["config_sha256"] = sha256_hex(config_to_text(m.config));
    j["threads"] = m.threads;
    j["exit_status"] = m.exit_status;
    j["message"] = m.message;
    auto& st = j["stages"] = nlohmann::ordered_json::array();
    for (const StageRecord& s : m.stages) st.push_back({{"name", s.name}, {"seconds", s.seconds}, {"checksums", s.checksums}});
    return j.dump(2) + "\n";
}

RunManifest manifest_from_json(const std::string& text) {
    auto j = nlohmann::json::parse(text);
    RunManifest m;
    m.tool = j.at("tool");
    m.version = j.at("version");
    m.command = j.at("command");
    m.argv = j.at("argv").get<std::vector<std::string>>();
    m.config = config_from_text(j.at("config").get<std::string>());
    m.threads = j.at("threads");
    m.exit_status = j.at("exit_status");
    m.message = j.at("message");
    for (const auto& s : j.at("stages"))
        m.stages.push_back({s.at("name"), s.at("seconds"), s.at("checksums").get<std::map<std::string, std::string>>()});
    return m;
}

}  // namespace henon
