#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include <henonlab/cli_io.hpp>
#include <henonlab/errors.hpp>

using namespace henon;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    fs::path d = fs::temp_directory_path() / ("henonlab_test_" + name);
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

std::string slurp(const fs::path& f) {
    std::ifstream in(f, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

int run(std::vector<std::string> args) {
    args.insert(args.begin(), "henonlab");
    std::vector<const char*> argv;
    for (const auto& s : args) argv.push_back(s.c_str());
    return cli_dispatch(static_cast<int>(argv.size()), argv.data());
}

void check_same_partition(const ReturnPartition& A, const ReturnPartition& B) {
    REQUIRE(A.returns.size() == B.returns.size());
    CHECK(A.omega0[0] == B.omega0[0]);
    CHECK(A.omega0[1] == B.omega0[1]);
    for (size_t i = 0; i < A.returns.size(); ++i) {
        const Sublattice &s = A.returns[i], &t = B.returns[i];
        CHECK(s.domain == t.domain);
        CHECK(s.trace.intervals() == t.trace.intervals());
        double x = s.domain.lo + 0.37 * s.domain.length();
        CHECK(s.branch(x) == t.branch(x));
    }
    CHECK(A.tail() == B.tail());
}

}  // namespace

TEST_CASE("config round trip") {
    RunConfig c;
    c.a = 1.9 + 1e-7;
    c.b = 1.0 / 3000;
    c.N = 12;
    c.seed = {0.1 / 3, -1e-9};
    c.output_dir = "runs/x";
    RunConfig d = config_from_text(config_to_text(c));
    CHECK(d == c);
    CHECK(d.delta() == doctest::Approx(std::exp(-3.0)));
    CHECK(d.beta() == doctest::Approx(14e-6));

    auto path = scratch("cfg") / "run.cfg";
    save_config(path.string(), c);
    CHECK(load_config(path.string()) == c);

    CHECK_THROWS_AS(config_from_text("nonsense = 1\n"), ConfigError);
    CHECK_THROWS_AS(config_from_text("a = 1.9x\n"), ConfigError);
    CHECK_THROWS_AS(config_from_text("a 1.9\n"), ConfigError);
    CHECK_THROWS_AS(config_from_text("seed = 0.1\n"), ConfigError);
    CHECK(config_from_text("# only comments\n\n  b = 0.002  # trailing\n").b == 0.002);
    for (const auto& k : config_keys()) CHECK(config_to_text(c).find("\n" + k + " = ") != std::string::npos);
}

TEST_CASE("sha256") {
    CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("skeleton round trip on the toy") {
    ToyShift T = ToyShift::geometric(10);
    Skeleton s;
    s.kind = "toy";
    s.toy_branches = T.branches();
    s.toy_lambda = T.contraction();
    s.toy_height = T.stable_half_length();
    s.part = T.partition(10);

    auto path = (scratch("toy") / "toy.skel").string();
    save_skeleton(path, s);
    Skeleton r = load_skeleton(path);
    CHECK(same_skeleton(s, r));
    CHECK(r.kind == "toy");
    REQUIRE(r.toy_branches.size() == s.toy_branches.size());
    for (size_t k = 0; k < s.toy_branches.size(); ++k) {
        CHECK(r.toy_branches[k].base == s.toy_branches[k].base);
        CHECK(r.toy_branches[k].R == s.toy_branches[k].R);
    }
    check_same_partition(s.part, r.part);
}

TEST_CASE("skeleton round trip on the Henon pipeline") {
    Param p = Param::make(1.9, 1e-3);
    HenonBase base(p);
    Skeleton s;
    s.param = p;
    s.cantor = cantor_pipeline(base, 12);
    s.part = build_return_partition(base, 11, s.cantor.back());
    std::string text = skeleton_to_text(s);
    Skeleton r = skeleton_from_text(text);
    CHECK(skeleton_to_text(r) == text);
    REQUIRE(r.cantor.size() == s.cantor.size());
    for (size_t k = 0; k < s.cantor.size(); ++k) CHECK(r.cantor[k]->set.intervals() == s.cantor[k]->set.intervals());
    CHECK(r.cantor.back()->parent == r.cantor[r.cantor.size() - 2]);
    CHECK(r.part.deep == r.cantor.back());
    CHECK(r.param.a == p.a);
    CHECK(r.param.delta == p.delta);
    check_same_partition(s.part, r.part);

    SUBCASE("tampered body") {
        std::string bad = text;
        auto at = bad.find("cantor ");
        bad[bad.find('\n', at) + 1] ^= 1;
        CHECK_THROWS_AS(skeleton_from_text(bad), ChecksumError);
    }
    SUBCASE("wrong version") {
        std::string bad = text;
        bad.replace(bad.find("v1"), 2, "v2");
        CHECK_THROWS_AS(skeleton_from_text(bad), VersionError);
    }
    SUBCASE("missing checksum") {
        std::string bad = text;
        bad.replace(bad.find("sha256"), 6, "md5sum");
        CHECK_THROWS_AS(skeleton_from_text(bad), VersionError);
    }
}

TEST_CASE("manifest round trip") {
    RunManifest m;
    m.version = kToolVersion;
    m.command = "cantor";
    m.argv = {"henonlab", "cantor", "--depth", "3"};
    m.config.cantor_depth = 3;
    m.stages = {{"config", 0.25, {{"run.cfg", sha256_hex("x")}}}, {"cantor", 1.5, {}}};
    m.exit_status = 2;
    m.message = "partial";
    m.threads = 4;
    RunManifest r = manifest_from_json(manifest_to_json(m));
    CHECK(r.command == m.command);
    CHECK(r.argv == m.argv);
    CHECK(r.config == m.config);
    REQUIRE(r.stages.size() == 2);
    CHECK(r.stages[0].checksums == m.stages[0].checksums);
    CHECK(r.stages[1].seconds == 1.5);
    CHECK(r.exit_status == 2);
    CHECK(r.threads == 4);
}

TEST_CASE("dispatch") {
    auto d = scratch("bc");
    CHECK(run({"bc-check", "--a", "2", "--c", "0.6931", "--alpha", "1e-6", "--N", "25", "--out", d.string()}) == 0);
    auto j = nlohmann::json::parse(slurp(d / "bc_check.json"));
    CHECK(j["pass"] == true);
    CHECK(j["eg_margin"].get<double>() >= 0);
    RunManifest m = manifest_from_json(slurp(d / "manifest.json"));
    CHECK(m.exit_status == 0);
    CHECK(m.config.a == 2);
    CHECK(m.config.N == 25);

    CHECK(run({"bc-check", "--frobnicate", "1"}) == 64);
    CHECK(run({"no-such-command"}) == 64);
    CHECK(run({}) == 64);

    // flags override the config file
    auto c = scratch("override");
    RunConfig cfg;
    cfg.a = 1.7;
    cfg.N = 20;
    cfg.output_dir = c.string();
    save_config((c / "in.cfg").string(), cfg);
    CHECK(run({"bc-check", "--config", (c / "in.cfg").string(), "--a", "2"}) == 0);
    RunManifest o = manifest_from_json(slurp(c / "manifest.json"));
    CHECK(o.config.a == 2);
    CHECK(o.config.N == 20);

    // bad config value is a hard error, with a manifest
    auto e = scratch("bad");
    CHECK(run({"bc-check", "--fold_choice", "3m", "--out", e.string()}) == 1);
    CHECK(run({"stability", "--da", "1e-5,zz", "--out", e.string()}) == 1);
    CHECK(manifest_from_json(slurp(e / "manifest.json")).exit_status == 1);
}

TEST_CASE("cantor outputs are reproducible") {
    auto u = scratch("cantor_u"), v = scratch("cantor_v");
    CHECK(run({"cantor", "--a", "1.9", "--b", "1e-3", "--depth", "8", "--out", u.string()}) == 0);
    CHECK(run({"cantor", "--a", "1.9", "--b", "1e-3", "--depth", "8", "--out", v.string()}) == 0);
    std::string levels = slurp(u / "cantor_levels.csv");
    CHECK(levels.rfind("# henonlab-cantor-levels v1\n", 0) == 0);
    int rows = 0;
    for (char ch : levels) rows += ch == '\n';
    CHECK(rows == 2 + 9);
    CHECK(slurp(u / "cantor_intervals.csv").rfind("lo,hi\n", 0) == 0);

    RunManifest a = manifest_from_json(slurp(u / "manifest.json"));
    RunManifest b = manifest_from_json(slurp(v / "manifest.json"));
    REQUIRE(a.stages.size() == 2);
    CHECK(a.stages[1].checksums.size() == 2);
    CHECK(a.stages[1].checksums == b.stages[1].checksums);
    CHECK(a.stages[1].checksums.at("cantor_levels.csv") == sha256_hex(levels));
}

TEST_CASE("toy-shift skeleton loads back") {
    auto d = scratch("toycli");
    CHECK(run({"toy-shift", "--kind", "geometric", "--N", "8", "--out", d.string()}) == 0);
    Skeleton s = load_skeleton((d / "skeleton.txt").string());
    CHECK(s.kind == "toy");
    CHECK(same_skeleton(s, skeleton_from_text(slurp(d / "skeleton.txt"))));
    CHECK(run({"toy-shift", "--kind", "cubic", "--out", d.string()}) == 64);
}
