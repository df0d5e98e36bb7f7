// Config-driven front end: reproducible experiment runs over the library.
//
// Exit codes: 0 success, 1 unreadable config (or lock contention),
// 2 validation failure, 3 numerical failure.
#include "bmp/diagnostics.hpp"
#include "bmp/limits.hpp"
#include "bmp/model.hpp"
#include "bmp/moments.hpp"
#include "bmp/montecarlo.hpp"
#include "bmp/spectral.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

using json = nlohmann::json;
namespace fs = std::filesystem;
using namespace bmp;

namespace {

constexpr const char* kToolVersion = "1.0.0";
constexpr int kSchemaVersion = 1;

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void require_keys(const json& obj, const std::string& where,
                  const std::vector<std::string>& allowed) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end())
            throw ConfigError("unknown key '" + it.key() + "' in " + where);
    }
}

RealMat parse_real_matrix(const json& j, const std::string& where) {
    if (!j.is_array() || j.empty()) throw ConfigError(where + ": expected a matrix");
    int rows = static_cast<int>(j.size());
    int cols = static_cast<int>(j[0].size());
    RealMat m(rows, cols);
    for (int r = 0; r < rows; ++r) {
        if (static_cast<int>(j[r].size()) != cols)
            throw ConfigError(where + ": ragged matrix");
        for (int c = 0; c < cols; ++c) m(r, c) = j[r][c].get<double>();
    }
    return m;
}

RealVec parse_real_vector(const json& j, const std::string& where) {
    if (!j.is_array()) throw ConfigError(where + ": expected a vector");
    RealVec v(j.size());
    for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<int>(i)] = j[i].get<double>();
    return v;
}

Complex parse_complex(const json& j, const std::string& where) {
    if (j.is_number()) return {j.get<double>(), 0.0};
    if (j.is_array() && j.size() == 2) return {j[0].get<double>(), j[1].get<double>()};
    throw ConfigError(where + ": expected a number or [re, im]");
}

struct ExperimentConfig {
    BmpModel model;
    std::optional<Regime> regime;
    // Tuple spec: either explicit vectors, or eigenbasis coordinates resolved
    // against the decomposition.
    std::vector<Vec> explicit_tuple;
    struct EigenCoord {
        int block = 0;
        int chain = 0;
        int rank = 0;
        Complex scale{1, 0};
        bool conjugate = false;
        bool normalize = true;
    };
    std::vector<EigenCoord> eigen_tuple;
    std::vector<double> time_grid{0.0, 1.0};
    QuadSpec quad;
    double ode_tol = 1e-9;
    int mc_replicas = 100000;
    std::uint64_t mc_seed = 1;
    double mc_t = 1.0;
    int mc_x0 = 0;
    bool delta_lemma_form = true;
    bool delta_star_form = false;
    std::uint64_t dict_seed = 1;
    int dict_random = 4;
    int alpha = 0;
    int ell = 2;
    std::string output_dir = "out";
};

Regime parse_regime(const std::string& s) {
    if (s == "large") return Regime::Large;
    if (s == "small") return Regime::Small;
    if (s == "critical") return Regime::Critical;
    throw ConfigError("regime must be one of large/small/critical, got '" + s + "'");
}

BmpModel parse_model(const json& j, const fs::path& config_dir) {
    require_keys(j, "model",
                 {"file", "builder", "beta", "mean", "J", "V", "gamma", "Q", "offspring"});
    if (j.contains("file")) {
        fs::path p = j["file"].get<std::string>();
        if (p.is_relative()) p = config_dir / p;
        return load_model_json(p.string());
    }
    std::string builder = j.at("builder").get<std::string>();
    if (builder == "yule") return build_yule(j.at("beta").get<double>());
    if (builder == "from_mean")
        return build_from_mean(parse_real_matrix(j.at("mean"), "model.mean"),
                               parse_real_vector(j.at("gamma"), "model.gamma"));
    if (builder == "from_jordan")
        return build_from_jordan(parse_real_matrix(j.at("J"), "model.J"),
                                 parse_real_matrix(j.at("V"), "model.V"),
                                 parse_real_vector(j.at("gamma"), "model.gamma"));
    if (builder == "multitype") {
        RealMat Q = parse_real_matrix(j.at("Q"), "model.Q");
        RealVec gamma = parse_real_vector(j.at("gamma"), "model.gamma");
        std::vector<std::vector<OffspringAtom>> laws;
        for (const auto& per_state : j.at("offspring")) {
            std::vector<OffspringAtom> atoms;
            for (const auto& ja : per_state) {
                require_keys(ja, "model.offspring[]", {"p", "children"});
                OffspringAtom atom;
                atom.p = ja.at("p").get<double>();
                for (const auto& c : ja.at("children")) atom.children.push_back(c.get<int>());
                atoms.push_back(std::move(atom));
            }
            laws.push_back(std::move(atoms));
        }
        return build_multitype(Q, gamma, laws);
    }
    throw ConfigError("unknown model builder '" + builder + "'");
}

ExperimentConfig parse_config(const json& j, const fs::path& config_dir) {
    require_keys(j, "config root",
                 {"schema_version", "model", "tuple", "regime", "ell", "time_grid",
                  "quadrature", "ode_tol", "mc", "delta", "output_dir"});
    if (!j.contains("schema_version") || !j["schema_version"].is_number_integer())
        throw ConfigError("missing integer 'schema_version'");
    if (j["schema_version"].get<int>() != kSchemaVersion)
        throw ConfigError("unsupported schema_version (expected " +
                          std::to_string(kSchemaVersion) + ")");

    ExperimentConfig cfg;
    cfg.model = parse_model(j.at("model"), config_dir);

    if (j.contains("regime")) cfg.regime = parse_regime(j["regime"].get<std::string>());
    if (j.contains("ell")) cfg.ell = j["ell"].get<int>();

    if (j.contains("tuple")) {
        const auto& jt = j["tuple"];
        require_keys(jt, "tuple", {"vectors", "eigenbasis"});
        if (jt.contains("vectors")) {
            for (const auto& jv : jt["vectors"]) {
                Vec v(jv.size());
                for (std::size_t i = 0; i < jv.size(); ++i)
                    v[static_cast<int>(i)] = parse_complex(jv[i], "tuple.vectors[][]");
                cfg.explicit_tuple.push_back(std::move(v));
            }
        }
        if (jt.contains("eigenbasis")) {
            for (const auto& je : jt["eigenbasis"]) {
                require_keys(je, "tuple.eigenbasis[]",
                             {"block", "chain", "rank", "scale", "conjugate", "normalize"});
                ExperimentConfig::EigenCoord ec;
                ec.block = je.at("block").get<int>();
                if (je.contains("chain")) ec.chain = je["chain"].get<int>();
                if (je.contains("rank")) ec.rank = je["rank"].get<int>();
                if (je.contains("scale")) ec.scale = parse_complex(je["scale"], "scale");
                if (je.contains("conjugate")) ec.conjugate = je["conjugate"].get<bool>();
                if (je.contains("normalize")) ec.normalize = je["normalize"].get<bool>();
                cfg.eigen_tuple.push_back(ec);
            }
        }
        if (cfg.explicit_tuple.empty() == cfg.eigen_tuple.empty())
            throw ConfigError("tuple: give exactly one of 'vectors' or 'eigenbasis'");
    }

    if (j.contains("time_grid")) {
        cfg.time_grid.clear();
        for (const auto& t : j["time_grid"]) cfg.time_grid.push_back(t.get<double>());
    }
    if (j.contains("quadrature")) {
        const auto& jq = j["quadrature"];
        require_keys(jq, "quadrature", {"tol", "min_panels", "max_panels", "horizon_cap"});
        if (jq.contains("tol")) cfg.quad.quad_tol = jq["tol"].get<double>();
        if (jq.contains("min_panels")) cfg.quad.min_panels = jq["min_panels"].get<int>();
        if (jq.contains("max_panels")) cfg.quad.max_panels = jq["max_panels"].get<int>();
        if (jq.contains("horizon_cap")) cfg.quad.horizon_cap = jq["horizon_cap"].get<double>();
    }
    if (j.contains("ode_tol")) cfg.ode_tol = j["ode_tol"].get<double>();
    if (j.contains("mc")) {
        const auto& jm = j["mc"];
        require_keys(jm, "mc", {"replicas", "seed", "t", "x0"});
        if (jm.contains("replicas")) cfg.mc_replicas = jm["replicas"].get<int>();
        if (jm.contains("seed")) cfg.mc_seed = jm["seed"].get<std::uint64_t>();
        if (jm.contains("t")) cfg.mc_t = jm["t"].get<double>();
        if (jm.contains("x0")) cfg.mc_x0 = jm["x0"].get<int>();
    }
    if (j.contains("delta")) {
        const auto& jd = j["delta"];
        require_keys(jd, "delta",
                     {"lemma_form", "star_form", "dictionary_seed", "n_random", "alpha"});
        if (jd.contains("lemma_form")) cfg.delta_lemma_form = jd["lemma_form"].get<bool>();
        if (jd.contains("star_form")) cfg.delta_star_form = jd["star_form"].get<bool>();
        if (jd.contains("dictionary_seed"))
            cfg.dict_seed = jd["dictionary_seed"].get<std::uint64_t>();
        if (jd.contains("n_random")) cfg.dict_random = jd["n_random"].get<int>();
        if (jd.contains("alpha")) cfg.alpha = jd["alpha"].get<int>();
    }
    if (j.contains("output_dir")) cfg.output_dir = j["output_dir"].get<std::string>();
    return cfg;
}

std::uint64_t fnv1a(const std::string& bytes) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

class Runner {
  public:
    Runner(ExperimentConfig cfg, std::string config_bytes, fs::path out_dir)
        : cfg_(std::move(cfg)), config_bytes_(std::move(config_bytes)),
          out_(std::move(out_dir)) {}

    // Spectral data is computed lazily; `validate` must not require it.
    const SpectralDecomposition& dec() {
        if (!dec_) {
            dec_ = decompose(mean_matrix(cfg_.model));
            reg_ = classify_regimes(*dec_);
        }
        return *dec_;
    }
    const RegimeClassification& reg() {
        dec();
        return reg_;
    }

    std::vector<Vec> tuple() {
        if (!cfg_.explicit_tuple.empty()) return cfg_.explicit_tuple;
        std::vector<Vec> fs;
        for (const auto& ec : cfg_.eigen_tuple) {
            const auto& blocks = dec().blocks;
            if (ec.block < 0 || ec.block >= static_cast<int>(blocks.size()))
                throw ConfigError("tuple.eigenbasis: block index out of range");
            const auto& chains = blocks[ec.block].chains;
            if (ec.chain < 0 || ec.chain >= static_cast<int>(chains.size()) ||
                ec.rank < 0 || ec.rank >= static_cast<int>(chains[ec.chain].size()))
                throw ConfigError("tuple.eigenbasis: chain/rank out of range");
            Vec v = chains[ec.chain][ec.rank];
            if (ec.normalize) v /= sup_norm(v);
            if (ec.conjugate) v = v.conjugate();
            fs.push_back(ec.scale * v);
        }
        if (fs.empty()) throw ConfigError("this subcommand needs a 'tuple'");
        return fs;
    }

    Regime regime() {
        if (cfg_.regime) return *cfg_.regime;
        throw ConfigError("this subcommand needs a 'regime'");
    }

    void write_file(const std::string& name, const std::string& content) {
        std::ofstream out(out_ / name, std::ios::binary);
        out << content;
        if (!out) throw std::runtime_error("cannot write " + (out_ / name).string());
        artifacts_.push_back(name);
    }

    int run_validate() {
        auto report = validate_model(cfg_.model);
        json jr;
        jr["ok"] = report.ok();
        jr["issues"] = report.issues;
        write_file("validation.json", jr.dump(2) + "\n");
        return report.ok() ? 0 : 2;
    }

    void run_spectral() {
        write_file("spectral.json", decomposition_to_json_string(dec(), reg()));
    }

    void run_moments() {
        auto table = moment_hierarchy(cfg_.model, tuple(), cfg_.time_grid, cfg_.ode_tol);
        write_file("moments.csv", moment_table_csv(table));
    }

    void run_limits() {
        auto fs = tuple();
        LimitTable table;
        switch (regime()) {
            case Regime::Large:
                table = limit_large(cfg_.model, dec(), reg(), fs, cfg_.quad);
                break;
            case Regime::Small:
                table = limit_small(cfg_.model, dec(), reg(), fs, cfg_.quad);
                break;
            case Regime::Critical:
                table = limit_critical(cfg_.model, dec(), reg(), fs, cfg_.alpha, cfg_.quad);
                break;
        }
        write_file("limits.csv", limit_table_csv(table));
    }

    void run_delta() {
        DeltaCurve curve;
        switch (regime()) {
            case Regime::Large: {
                auto dict = build_dictionary(dec(), reg(), Regime::Large, cfg_.dict_seed,
                                             cfg_.dict_random);
                curve = delta_large(cfg_.model, dec(), reg(), dict, cfg_.ell,
                                    cfg_.time_grid, cfg_.delta_lemma_form, cfg_.quad,
                                    cfg_.ode_tol);
                break;
            }
            case Regime::Small: {
                auto dict = build_dictionary(dec(), reg(), Regime::Small, cfg_.dict_seed,
                                             cfg_.dict_random);
                curve = delta_small(cfg_.model, dec(), reg(), dict, cfg_.ell,
                                    cfg_.time_grid, cfg_.delta_star_form, cfg_.quad,
                                    cfg_.ode_tol);
                break;
            }
            case Regime::Critical:
                curve = delta_critical(cfg_.model, dec(), reg(), {tuple()},
                                       cfg_.time_grid, cfg_.alpha, cfg_.quad,
                                       cfg_.ode_tol);
                break;
        }
        write_file("delta.csv", delta_curve_csv(curve));
    }

    void run_mc() {
        auto est = estimate_moment(cfg_.model, tuple(), cfg_.mc_t, cfg_.mc_x0,
                                   cfg_.mc_replicas, cfg_.mc_seed);
        std::ostringstream out;
        out << "t,x0,replicas,seed,mean_re,mean_im,se\n";
        out << fmt_double(cfg_.mc_t) << "," << cfg_.mc_x0 << "," << est.replicas << ","
            << est.seed << "," << fmt_double(est.mean.real()) << ","
            << fmt_double(est.mean.imag()) << "," << fmt_double(est.se) << "\n";
        write_file("mc.csv", out.str());
    }

    void run_compare() {
        auto fs = tuple();
        auto table = moment_hierarchy(cfg_.model, fs, {0.0, cfg_.mc_t}, cfg_.ode_tol);
        auto ti = table.time_index(cfg_.mc_t);
        std::ostringstream out;
        out << "subset_mask,x0,t,ode_re,ode_im,mc_re,mc_im,se,within_4se\n";
        std::uint64_t seed = cfg_.mc_seed;
        for (std::uint32_t mask = 1; mask < (1u << fs.size()); ++mask) {
            std::vector<Vec> sub;
            for (std::size_t i = 0; i < fs.size(); ++i)
                if (mask & (1u << i)) sub.push_back(fs[i]);
            for (int x0 = 0; x0 < cfg_.model.n; ++x0) {
                Complex ode = table.at(ti, mask)[x0];
                auto est = estimate_moment(cfg_.model, sub, cfg_.mc_t, x0,
                                           cfg_.mc_replicas, seed++);
                bool within = std::abs(est.mean - ode) <= 4 * est.se + 1e-12;
                out << mask << "," << x0 << "," << fmt_double(cfg_.mc_t) << ","
                    << fmt_double(ode.real()) << "," << fmt_double(ode.imag()) << ","
                    << fmt_double(est.mean.real()) << "," << fmt_double(est.mean.imag())
                    << "," << fmt_double(est.se) << "," << (within ? 1 : 0) << "\n";
            }
        }
        write_file("compare.csv", out.str());
    }

    void write_manifest(const std::string& subcommand) {
        json m;
        m["tool_version"] = kToolVersion;
        m["schema_version"] = kSchemaVersion;
        m["subcommand"] = subcommand;
        char hash[32];
        std::snprintf(hash, sizeof(hash), "%016llx",
                      static_cast<unsigned long long>(fnv1a(config_bytes_)));
        m["config_hash"] = hash;
        m["mc_seed"] = cfg_.mc_seed;
        m["dictionary_seed"] = cfg_.dict_seed;
        m["convention_ids"] = {"L3.1-twisted", "T1-proof-consistent", "T2-exp-rate-t",
                               "L3.2-operator-normalized", "T3-exp-rate-t"};
        m["artifacts"] = artifacts_;
        std::ofstream out(out_ / "run_manifest.json", std::ios::binary);
        out << m.dump(2) << "\n";
    }

    ExperimentConfig cfg_;

  private:
    std::string config_bytes_;
    fs::path out_;
    std::vector<std::string> artifacts_;
    std::optional<SpectralDecomposition> dec_;
    RegimeClassification reg_;
};

// One run at a time per output directory.
class DirLock {
  public:
    explicit DirLock(const fs::path& dir) : path_(dir / ".lock") {
        std::error_code ec;
        fs::create_directories(dir, ec);
        FILE* f = std::fopen(path_.c_str(), "wx");
        if (!f) throw std::runtime_error("output directory is locked: " + path_.string());
        std::fclose(f);
    }
    ~DirLock() {
        std::error_code ec;
        fs::remove(path_, ec);
    }
    DirLock(const DirLock&) = delete;
    DirLock& operator=(const DirLock&) = delete;

  private:
    fs::path path_;
};

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"moment asymptotics of finite-state branching Markov processes"};
    app.require_subcommand(1);

    std::string config_path, out_override;
    std::uint64_t seed_override = 0;
    bool has_seed = false;
    int threads = 1;

    std::vector<std::string> names{"validate", "spectral", "moments", "limits",
                                   "delta",    "mc",       "compare", "all"};
    for (const auto& name : names) {
        auto* sub = app.add_subcommand(name);
        sub->add_option("--config", config_path, "experiment config (JSON)")->required();
        sub->add_option("--out", out_override, "output directory (overrides config)");
        sub->add_option("--seed", seed_override, "Monte Carlo seed (overrides config)")
            ->each([&](const std::string&) { has_seed = true; });
        sub->add_option("--threads", threads, "worker threads for MC replicas");
    }

    CLI11_PARSE(app, argc, argv);
    std::string subcommand = app.get_subcommands().front()->get_name();

    // Read and parse the config; any failure here is exit 1.
    std::string config_bytes;
    ExperimentConfig cfg;
    try {
        std::ifstream in(config_path, std::ios::binary);
        if (!in) throw ConfigError("cannot open config: " + config_path);
        std::ostringstream ss;
        ss << in.rdbuf();
        config_bytes = ss.str();
        json j = json::parse(config_bytes);
        cfg = parse_config(j, fs::path(config_path).parent_path());
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 1;
    } catch (const std::invalid_argument& e) {
        // Structurally readable config describing an invalid model.
        std::fprintf(stderr, "validation failure: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 1;
    }
    if (!out_override.empty()) cfg.output_dir = out_override;
    if (has_seed) cfg.mc_seed = seed_override;
    (void)threads;

    try {
        DirLock lock{fs::path(cfg.output_dir)};
        Runner runner(cfg, config_bytes, fs::path(cfg.output_dir));

        int rc = 0;
        auto step = [&](const std::string& name) {
            if (name == "validate") rc = std::max(rc, runner.run_validate());
            else if (name == "spectral") runner.run_spectral();
            else if (name == "moments") runner.run_moments();
            else if (name == "limits") runner.run_limits();
            else if (name == "delta") runner.run_delta();
            else if (name == "mc") runner.run_mc();
            else if (name == "compare") runner.run_compare();
        };
        if (subcommand == "all") {
            for (const auto& name : {"validate", "spectral", "moments", "limits",
                                     "delta", "mc", "compare"}) {
                step(name);
                if (rc != 0) break; // a model that fails validation goes no further
            }
        } else {
            step(subcommand);
        }
        runner.write_manifest(subcommand);
        return rc;
    } catch (const NotInRegime& e) {
        std::fprintf(stderr, "validation failure: %s\n", e.what());
        return 2;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "validation failure: %s\n", e.what());
        return 2;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "validation failure: %s\n", e.what());
        return 2;
    } catch (const NumericalError& e) {
        std::fprintf(stderr, "numerical failure: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
