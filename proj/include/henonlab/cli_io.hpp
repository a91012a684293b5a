#pragma once
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "henonlab/horseshoe.hpp"
#include "henonlab/manifold.hpp"
#include "henonlab/stability.hpp"

namespace henon {

struct RunConfig {
    // parameters and constants
    double a = 1.9;
    double b = 1e-3;
    int Delta = 3;
    double alpha = 1e-6;
    double c = 0.6931471805599453;
    double c0 = 0.2;
    double c1 = 0.2;
    double c2 = 0.84;
    int M0 = 3;
    double rho_creation = 1e-2;
    std::string fold_choice = "2m";
    // depths
    int N = 16;
    int n2_order = 8;
    int cantor_depth = 15;
    int ulam_bins = 64;
    int ulam_samples = 64;
    int bowen_k_max = 6;
    int L_max = 16;
    long orbit_burn = 10000;
    long orbit_keep = 1000000;
    long lyap_n = 100000;
    // seeds
    Point seed{0.1, 0};
    Point control_seed{-0.15, 0};
    std::string output_dir = "out";

    double delta() const;  // e^{-Delta}
    double beta() const;   // 14 alpha
    Param param() const;
    StabilityConfig stability() const;
    ControlConfig control() const;
    bool operator==(const RunConfig&) const = default;
};

// flat "key = value" text, '#' comments
std::string config_to_text(const RunConfig& c);
RunConfig config_from_text(const std::string& text);  // ConfigError on unknown keys or bad values
RunConfig load_config(const std::string& path);
void save_config(const std::string& path, const RunConfig& c);
std::vector<std::string> config_keys();
void set_config_value(RunConfig& c, const std::string& key, const std::string& value);

// hex SHA-256
std::string sha256_hex(const std::string& data);

// Horseshoe scaffolding and return partition, enough to rebuild the tower layer.
struct Skeleton {
    std::string kind = "henon";  // henon | toy
    Param param;
    std::vector<ToyBranch> toy_branches;
    double toy_lambda = 0, toy_height = 0;
    std::vector<std::shared_ptr<const CantorApprox>> cantor;
    ReturnPartition part;
};

constexpr const char* kSkeletonVersion = "henonlab-skeleton v1";
std::string skeleton_to_text(const Skeleton& s);
Skeleton skeleton_from_text(const std::string& text);  // VersionError, ChecksumError
void save_skeleton(const std::string& path, const Skeleton& s);
Skeleton load_skeleton(const std::string& path);
bool same_skeleton(const Skeleton& u, const Skeleton& v);  // bit-identical content

struct StageRecord {
    std::string name;
    double seconds = 0;
    std::map<std::string, std::string> checksums;  // output file -> sha256
};

struct RunManifest {
    std::string tool = "henonlab";
    std::string version;
    std::string command;
    std::vector<std::string> argv;
    RunConfig config;
    std::vector<StageRecord> stages;
    int exit_status = 0;
    std::string message;
    unsigned threads = 1;
};
std::string manifest_to_json(const RunManifest& m);
RunManifest manifest_from_json(const std::string& text);

constexpr const char* kToolVersion = "1.0.0";

// Exit codes: 0 ok, 2 partial (quarantined pieces), 1 hard error, 64 usage.
int cli_dispatch(int argc, const char* const* argv);

}  // namespace henon
