#pragma once

// Experiment orchestration: flat key = value configuration, seeded multi-run
// training with per-seed metrics and checkpoints, evaluation from a
// checkpoint, and generalization sweeps over fresh start states.

#include "ilbo/agent.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>

namespace ilbo {

using KeyValues = std::vector<std::pair<std::string, std::string>>;

inline std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

/// `key = value` per line; '#' starts a comment; blank lines ignored.
inline KeyValues parse_config_text(std::istream& is, const std::string& origin = "config") {
    KeyValues out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
        const std::string t = trim(line);
        if (t.empty()) continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
        std::string key = trim(std::string_view(t).substr(0, eq));
        std::string value = trim(std::string_view(t).substr(eq + 1));
        if (key.empty() || key.find_first_of(" \t") != std::string::npos)
            throw std::invalid_argument(origin + ":" + std::to_string(lineno) + ": bad key '" + key + "'");
        out.emplace_back(std::move(key), std::move(value));
    }
    return out;
}

inline KeyValues load_config_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::invalid_argument("cannot open config file: " + path);
    return parse_config_text(is, path);
}

/// Output root: $ILBO_OUT when set, else ./ilbo_out.
inline std::string default_output_root() {
    const char* env = std::getenv("ILBO_OUT");
    return env && *env ? std::string(env) : std::string("ilbo_out");
}

struct ExperimentConfig {
    std::string domain = "nav2";
    AgentConfig agent;
    /// "<domain>.<key>" overrides handed to make_domain.
    std::map<std::string, std::string> domain_overrides;
    std::size_t episodes = 5000;
    std::size_t eval_every = 50;
    std::size_t eval_trajectories = 64;
    std::vector<std::int64_t> seeds{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
    std::string out;  // empty: <default_output_root()>/<domain>
    bool keep_best = true;

    /// Accepts top-level keys, agent.<key> and <domain name>.<key>.
    void set(const std::string& key, const std::string& value) {
        try {
            if (key == "domain") domain = value;
            else if (key == "episodes") episodes = to_size(value);
            else if (key == "eval_every") eval_every = to_size(value);
            else if (key == "eval_trajectories") eval_trajectories = to_size(value);
            else if (key == "out") out = value;
            else if (key == "keep_best") keep_best = parse_int(value) != 0;
            else if (key == "seeds") {
                seeds.clear();
                for (const auto& s : split(value, ',')) seeds.push_back(parse_int(s));
            } else if (key.rfind("agent.", 0) == 0) {
                if (!agent.set(key.substr(6), value)) throw std::invalid_argument("unknown key");
            } else if (is_domain_key(key)) {
                domain_overrides[key] = value;
            } else {
                throw std::invalid_argument("unknown key");
            }
        } catch (const std::invalid_argument& e) {
            throw std::invalid_argument("config key '" + key + "': " + e.what());
        }
    }

    /// Clamps eval_every to episodes, then checks invariants and that the domain builds.
    void finalize() {
        if (episodes == 0) throw std::invalid_argument("episodes must be at least 1");
        if (eval_every == 0) throw std::invalid_argument("eval_every must be at least 1");
        if (eval_trajectories == 0) throw std::invalid_argument("eval_trajectories must be at least 1");
        eval_every = std::min(eval_every, episodes);
        if (seeds.empty()) throw std::invalid_argument("seeds must be non-empty");
        if (std::set<std::int64_t>(seeds.begin(), seeds.end()).size() != seeds.size())
            throw std::invalid_argument("seeds must be distinct");
        agent.validate();
        make_domain(domain, domain_overrides);
        for (const auto& [k, v] : domain_overrides)
            if (k.rfind(domain + ".", 0) != 0)
                throw std::invalid_argument("override '" + k + "' does not belong to domain " + domain);
        if (out.empty()) out = (std::filesystem::path(default_output_root()) / domain).string();
    }

    KeyValues to_kv() const {
        KeyValues kv{{"domain", domain},
                     {"episodes", std::to_string(episodes)},
                     {"eval_every", std::to_string(eval_every)},
                     {"eval_trajectories", std::to_string(eval_trajectories)},
                     {"seeds", seeds_string()},
                     {"out", out},
                     {"keep_best", keep_best ? "1" : "0"}};
        for (auto& [k, v] : agent.to_kv()) kv.emplace_back("agent." + k, v);
        for (const auto& [k, v] : domain_overrides) kv.emplace_back(k, v);
        return kv;
    }

    std::string seeds_string() const {
        std::string s;
        for (std::size_t i = 0; i < seeds.size(); ++i) s += (i ? "," : "") + std::to_string(seeds[i]);
        return s;
    }

private:
    static std::size_t to_size(const std::string& v) {
        const auto x = parse_int(v);
        if (x < 0) throw std::invalid_argument("must be non-negative");
        return static_cast<std::size_t>(x);
    }
    static bool is_domain_key(const std::string& key) {
        for (const auto& n : domain_names())
            if (key.rfind(n + ".", 0) == 0) return true;
        return false;
    }
};

/// Defaults, then the file's keys, then the command line's.
inline ExperimentConfig resolve_config(const KeyValues& file, const KeyValues& cli) {
    ExperimentConfig c;
    for (const auto& [k, v] : file) c.set(k, v);
    for (const auto& [k, v] : cli) c.set(k, v);
    c.finalize();
    return c;
}

inline void write_key_values(const KeyValues& kv, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path);
    for (const auto& [k, v] : kv) os << k << " = " << v << '\n';
    if (!os) throw std::runtime_error("write failed: " + path);
}

// ---------------------------------------------------------------------------
// Experiments

struct SeedOutcome {
    std::int64_t seed = 0;
    bool ok = false;
    std::string error;
    double best_mean = 0.0;
    double final_mean = 0.0;
    std::vector<RunRecord> records;
};

struct ExperimentSummary {
    std::vector<SeedOutcome> seeds;
    double mean_best = 0.0;
    double std_best = 0.0;
    bool partial = false;
    std::string out_dir;
};

inline std::string seed_dir(const std::string& out, std::int64_t seed) {
    return (std::filesystem::path(out) / ("seed_" + std::to_string(seed))).string();
}

inline KeyValues domain_meta(const ExperimentConfig& c) {
    KeyValues kv;
    for (const auto& [k, v] : c.domain_overrides) kv.emplace_back(k, v);
    return kv;
}

inline SeedOutcome run_seed(const ExperimentConfig& cfg, std::int64_t seed) {
    SeedOutcome o;
    o.seed = seed;
    const std::string dir = seed_dir(cfg.out, seed);
    std::filesystem::create_directories(dir);
    const DomainPtr dom = make_domain(cfg.domain, cfg.domain_overrides);
    Agent agent(dom, cfg.agent, static_cast<std::uint64_t>(seed));
    MetricsWriter metrics((std::filesystem::path(dir) / "metrics.csv").string());
    KeyValues meta = domain_meta(cfg);
    meta.emplace_back("seed", std::to_string(seed));
    TrainOptions opt;
    opt.episodes = cfg.episodes;
    opt.eval_every = cfg.eval_every;
    opt.eval_trajectories = cfg.eval_trajectories;
    opt.seed = seed;
    o.records = train(agent, opt, [&](const RunRecord& r, const Agent& a, bool improved) {
        metrics.append(r);
        if (cfg.keep_best && improved) save_checkpoint((std::filesystem::path(dir) / "best.ckpt").string(), a.to_checkpoint(meta));
    });
    save_checkpoint((std::filesystem::path(dir) / "final.ckpt").string(), agent.to_checkpoint(meta));
    if (o.records.empty()) throw std::runtime_error("no evaluation points were produced");
    for (const auto& r : o.records)
        if (!std::isfinite(r.eval_mean) || !std::isfinite(r.eval_std) || !std::isfinite(r.td_loss) ||
            !std::isfinite(r.grad_norm))
            throw std::runtime_error("non-finite metric at episode " + std::to_string(r.episode));
    o.final_mean = o.records.back().eval_mean;
    o.best_mean = cfg.keep_best ? o.records.back().best_mean : o.final_mean;
    o.ok = true;
    return o;
}

inline void write_summary(const ExperimentSummary& s, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path);
    os << "seed,status,best_mean,final_mean\n";
    for (const auto& o : s.seeds) {
        if (o.ok)
            os << o.seed << ",ok," << format_double(o.best_mean) << ',' << format_double(o.final_mean) << '\n';
        else
            os << o.seed << ",failed,nan,nan\n";
    }
    os << "mean," << (s.partial ? "partial" : "complete") << ',' << format_double(s.mean_best) << ",\n";
    os << "std," << (s.partial ? "partial" : "complete") << ',' << format_double(s.std_best) << ",\n";
}

/// Each seed trains a fresh agent; a seed that throws is recorded as failed and
/// the summary marked partial. Summary statistics use population std.
inline ExperimentSummary run_experiment(const ExperimentConfig& cfg, std::ostream* log = nullptr) {
    ExperimentSummary s;
    s.out_dir = cfg.out;
    std::filesystem::create_directories(cfg.out);
    write_key_values(cfg.to_kv(), (std::filesystem::path(cfg.out) / "config.txt").string());
    for (auto seed : cfg.seeds) {
        try {
            s.seeds.push_back(run_seed(cfg, seed));
            if (log) *log << "seed " << seed << ": best " << format_double(s.seeds.back().best_mean) << '\n';
        } catch (const std::exception& e) {
            SeedOutcome o;
            o.seed = seed;
            o.error = e.what();
            s.seeds.push_back(o);
            s.partial = true;
            if (log) *log << "seed " << seed << " failed: " << e.what() << '\n';
        }
    }
    std::vector<double> bests;
    for (const auto& o : s.seeds)
        if (o.ok) bests.push_back(o.best_mean);
    if (!bests.empty()) {
        double sum = 0.0;
        for (double b : bests) sum += b;
        s.mean_best = sum / static_cast<double>(bests.size());
        double ss = 0.0;
        for (double b : bests) ss += (b - s.mean_best) * (b - s.mean_best);
        s.std_best = std::sqrt(ss / static_cast<double>(bests.size()));
    } else {
        s.mean_best = s.std_best = std::numeric_limits<double>::quiet_NaN();
    }
    write_summary(s, (std::filesystem::path(cfg.out) / "summary.csv").string());
    return s;
}

// ---------------------------------------------------------------------------
// Evaluation and generalization from checkpoints

/// Rebuilds the domain (with the overrides stored in the checkpoint) and the agent.
inline Agent agent_from_checkpoint(const Checkpoint& ck) {
    const auto name = ck.find_meta("domain");
    if (!name) throw std::runtime_error("checkpoint has no domain entry");
    std::map<std::string, std::string> ov;
    for (const auto& [k, v] : ck.meta)
        if (k.rfind(*name + ".", 0) == 0) ov[k] = v;
    return Agent(make_domain(*name, ov), ck);
}

/// Noise-free evaluation from one start (the domain default when unset).
inline EvalResult evaluate_from(const Agent& agent, const std::optional<Vec>& start, std::size_t n_traj,
                                std::uint64_t seed) {
    Rng rng = make_rng(seed, 0xe1);
    const Vec s0 = start ? *start : agent.domain().default_init_state();
    return agent.evaluate(n_traj, {s0}, rng);
}

struct GeneralizeRadii {
    double near = 0.0;
    double far = 0.0;
};

inline GeneralizeRadii generalize_radii(const std::string& domain) {
    if (domain == "nav2") return {1.0, 3.0};
    if (domain == "hvac6") return {2.0, 6.0};
    if (domain == "res20") return {50.0, 200.0};
    throw std::invalid_argument("no generalization radii for domain '" + domain + "'");
}

struct GeneralizeRow {
    std::size_t index = 0;
    bool near = true;
    double distance = 0.0;
    Vec start;
    double mean_return = 0.0;
    double std_return = 0.0;
};

/// Near starts are uniform in the radius-r_near ball about the default start,
/// far starts uniform in the sampling box beyond r_far; draws outside the
/// state box (or on the wrong side of the threshold) are repeated, at most
/// 1000 times per start.
inline std::vector<Vec> sample_generalization_starts(const DomainModel& d, const GeneralizeRadii& r, std::size_t n_near,
                                                     std::size_t n_far, Rng& rng) {
    const Vec& c = d.default_init_state();
    const auto dim = c.size();
    std::normal_distribution<double> N(0.0, 1.0);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    std::vector<Vec> out;
    auto draw = [&](bool near) {
        for (int attempt = 0; attempt < 1000; ++attempt) {
            Vec x(dim);
            if (near) {
                Vec dir(dim);
                for (Eigen::Index i = 0; i < dim; ++i) dir(i) = N(rng);
                const double radius = r.near * std::pow(U(rng), 1.0 / static_cast<double>(dim));
                x = c + radius * dir / dir.norm();
            } else {
                for (Eigen::Index i = 0; i < dim; ++i)
                    x(i) = d.sample_lo()(i) + (d.sample_hi()(i) - d.sample_lo()(i)) * U(rng);
            }
            const double dist = (x - c).norm();
            if (!d.in_state_box(x)) continue;
            if (near ? dist < r.near : dist > r.far) return x;
        }
        throw std::runtime_error(std::string("generalize: no feasible ") + (near ? "near" : "far") +
                                 " start state after 1000 attempts");
    };
    for (std::size_t k = 0; k < n_near; ++k) out.push_back(draw(true));
    for (std::size_t k = 0; k < n_far; ++k) out.push_back(draw(false));
    return out;
}

/// Evaluates the unchanged policy from n_states fresh starts (first half near).
inline std::vector<GeneralizeRow> generalize(const Agent& agent, std::size_t n_states, std::uint64_t seed,
                                             std::size_t n_traj = 64) {
    if (n_states == 0) throw std::invalid_argument("generalize: n_states must be at least 1");
    const auto radii = generalize_radii(agent.domain().name());
    const std::size_t n_near = (n_states + 1) / 2;
    Rng rng = make_rng(seed, 0x9e);
    const auto starts = sample_generalization_starts(agent.domain(), radii, n_near, n_states - n_near, rng);
    std::vector<GeneralizeRow> rows;
    for (std::size_t i = 0; i < starts.size(); ++i) {
        const auto ev = evaluate_from(agent, starts[i], n_traj, seed);
        rows.push_back({i, i < n_near, (starts[i] - agent.domain().default_init_state()).norm(), starts[i],
                        ev.mean_return, ev.std_return});
    }
    return rows;
}

inline void write_generalize_csv(std::ostream& os, const std::vector<GeneralizeRow>& rows) {
    os << "index,kind,distance,start,mean_return,std_return\n";
    for (const auto& r : rows)
        os << r.index << ',' << (r.near ? "near" : "far") << ',' << format_double(r.distance) << ','
           << format_vector(r.start, ';') << ',' << format_double(r.mean_return) << ',' << format_double(r.std_return)
           << '\n';
}

}  // namespace ilbo
