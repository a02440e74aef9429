// Experiment driver.
//
//   p2pm run      --algo A5 [--scenario s.json] [--out dir] ...
//   p2pm compare  --seeds 1,2,3 [--vary smax --range 0.8..1.2 --steps 5]
//   p2pm scale    --sizes 15,34,69,141 [--etas 12,6]
//   p2pm gap      [--scenario s.json]
//   p2pm generate [--scenario config.json] --out dir
//
// Output goes to --out, else $P2PM_OUT_DIR, else ./p2pm_out.

#include "p2pm/baselines.hpp"
#include "p2pm/error.hpp"
#include "p2pm/persist.hpp"
#include "p2pm/runtime.hpp"
#include "p2pm/scenario.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace p2pm;

namespace {

struct Common {
    std::string scenario;
    std::optional<double> eta, tol;
    std::optional<int> kmax;
    std::optional<std::uint64_t> seed;
    std::string out;
    bool warm_start = false;
    bool direct = false;
};

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("--scenario", c.scenario, "scenario JSON (default: built-in 15-bus)");
    cmd->add_option("--eta", c.eta, "consensus penalty");
    cmd->add_option("--tol", c.tol, "residual tolerance");
    cmd->add_option("--kmax", c.kmax, "iteration cap per slot");
    cmd->add_option("--seed", c.seed, "generator seed");
    cmd->add_option("--out", c.out, "output directory");
    cmd->add_flag("--warm-start", c.warm_start, "carry duals across slots");
    cmd->add_flag("--direct", c.direct, "skip the message bus");
}

fs::path out_dir(const Common& c) {
    if (!c.out.empty()) return c.out;
    if (const char* env = std::getenv("P2PM_OUT_DIR"); env && *env) return env;
    return "p2pm_out";
}

ScenarioConfig base_config(const Common& c) {
    ScenarioConfig cfg = c.scenario.empty() ? ScenarioConfig{} : load_config(c.scenario);
    if (c.seed) cfg.seed = *c.seed;
    if (c.eta) cfg.eta = *c.eta;
    if (c.tol) cfg.tol = *c.tol;
    if (c.kmax) cfg.k_max = *c.kmax;
    if (c.warm_start) cfg.warm_start = true;
    return cfg;
}

RunConfig run_config(const ScenarioConfig& cfg, const Common& c) {
    RunConfig rc;
    rc.admm = cfg.admm();
    rc.message_passing = !c.direct;
    return rc;
}

class Table {
public:
    Table(const fs::path& dir, std::string name, const std::string& header) : name_(std::move(name)) {
        fs::create_directories(dir);
        out_.open(dir / name_, std::ios::binary);
        if (!out_) throw ConfigError("cannot write " + (dir / name_).string());
        out_ << header << '\n';
    }
    template <class... Ts>
    void row(const Ts&... v) {
        bool first = true;
        ((out_ << (first ? "" : ",") << v, first = false), ...);
        out_ << '\n';
        ++rows_;
    }
    [[nodiscard]] nlohmann::json entry() const { return {{"name", name_}, {"rows", rows_}}; }

private:
    std::string name_;
    std::ofstream out_;
    long rows_ = 0;
};

std::string f6(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", quantize(v));
    return buf;
}

void write_manifest(const fs::path& dir, const std::string& command, const std::vector<const Table*>& tables) {
    nlohmann::json j;
    j["command"] = command;
    j["files"] = nlohmann::json::array();
    for (const auto* t : tables) j["files"].push_back(t->entry());
    std::ofstream out(dir / "manifest.json", std::ios::binary);
    if (!out) throw ConfigError("cannot write " + (dir / "manifest.json").string());
    out << j.dump(2) << '\n';
}

double reported_cost(const RunResult& r) { return r.guarantee ? *r.guarantee : r.time_avg_cost; }

// --- commands ----------------------------------------------------------------

int cmd_run(const Common& c, const std::string& algo) {
    const Algorithm a = parse_algorithm(algo);
    const ScenarioConfig cfg = base_config(c);
    const Scenario sc = generate_scenario(cfg);
    const RunResult r = run_horizon(sc, a, run_config(cfg, c));
    const fs::path dir = out_dir(c);
    persist_results(r, dir);
    std::printf("%s %s: time-averaged cost %.6f over %d slots, [Theta]+ %.6f, %ld messages -> %s\n", tag(a), name(a),
                reported_cost(r), r.horizon(), r.theta, r.messages, dir.string().c_str());
    return 0;
}

std::vector<double> parse_range(const std::string& text, int steps) {
    const auto dots = text.find("..");
    if (dots == std::string::npos) throw ConfigError("range must look like lo..hi, got '" + text + "'");
    const double lo = std::stod(text.substr(0, dots)), hi = std::stod(text.substr(dots + 2));
    if (steps < 2 || !(lo <= hi)) throw ConfigError("range needs lo <= hi and at least 2 steps");
    std::vector<double> v;
    for (int k = 0; k < steps; ++k) v.push_back(lo + (hi - lo) * k / (steps - 1));
    return v;
}

void vary(Scenario& sc, const std::string& what, double value) {
    if (what == "smax")
        edit_storage(sc, [&](ProsumerParams& p) { p.soc_max *= value; });
    else if (what == "smin")
        edit_storage(sc, [&](ProsumerParams& p) { p.soc_min = value * p.soc_max; });
    else if (what == "kappa")
        edit_storage(sc, [&](ProsumerParams& p) { p.kappa = value; });
    else
        throw ConfigError("--vary expects smax, smin or kappa, got '" + what + "'");
}

int cmd_compare(const Common& c, std::vector<std::uint64_t> seeds, const std::string& what, const std::string& range,
                int steps) {
    const fs::path dir = out_dir(c);
    ScenarioConfig cfg = base_config(c);
    if (seeds.empty()) seeds.push_back(cfg.seed);
    std::vector<double> values{1.0};
    if (!what.empty()) values = parse_range(range, steps);

    std::optional<Table> cmp, sweep;
    if (what.empty()) cmp.emplace(dir, "compare.csv", "algorithm,seed,time_avg_cost,pct_vs_greedy");
    else sweep.emplace(dir, "sweep.csv", "parameter,value,algorithm,seed,time_avg_cost,pct_vs_greedy");
    for (std::uint64_t seed : seeds) {
        cfg.seed = seed;
        const Scenario base = generate_scenario(cfg);
        for (double v : values) {
            Scenario sc = base;
            if (!what.empty()) vary(sc, what, v);
            const RunConfig rc = run_config(cfg, c);
            const double greedy = run_horizon(sc, Algorithm::Greedy, rc).time_avg_cost;
            for (Algorithm a : kAllAlgorithms) {
                const double cost = a == Algorithm::Greedy ? greedy : reported_cost(run_horizon(sc, a, rc));
                const double pct = greedy != 0.0 ? 100.0 * (greedy - cost) / std::abs(greedy) : 0.0;
                if (cmp) cmp->row(tag(a), seed, f6(cost), f6(pct));
                else sweep->row(what, f6(v), tag(a), seed, f6(cost), f6(pct));
                std::printf("seed %llu%s %s %.6f (%.3f%% vs A1)\n", static_cast<unsigned long long>(seed),
                            what.empty() ? "" : (" " + what + "=" + f6(v)).c_str(), tag(a), cost, pct);
            }
        }
    }
    write_manifest(dir, "compare", {cmp ? &*cmp : &*sweep});
    return 0;
}

int cmd_scale(const Common& c, const std::vector<int>& sizes, std::vector<double> etas, int horizon) {
    const fs::path dir = out_dir(c);
    ScenarioConfig cfg = base_config(c);
    cfg.horizon = horizon;
    cfg.slot_minutes = 24.0 * 60.0 / horizon;
    if (etas.empty()) etas.push_back(cfg.eta);
    Table tab(dir, "scale.csv",
              "buses,eta,mean_iterations,active_slots,converged_slots,critical_path_s,serial_s,centralized_s,"
              "reference_failures");
    using Clock = std::chrono::steady_clock;
    for (int buses : sizes) {
        if (buses < 2) throw ConfigError("bus count must be at least 2");
        ScenarioConfig sc_cfg = cfg;
        if (buses != 15) {
            sc_cfg.network = "radial";
            sc_cfg.radial_prosumers = buses - 1;
        }
        const Scenario sc = generate_scenario(sc_cfg);
        for (double eta : etas) {
            RunConfig rc = run_config(sc_cfg, c);
            rc.admm.eta = eta;
            const auto t0 = Clock::now();
            const RunResult r = run_horizon(sc, Algorithm::ProposedFramework, rc);
            const double dist = std::chrono::duration<double>(Clock::now() - t0).count();
            double central = 0.0;
            long iters = 0;
            int active = 0, converged = 0, failures = 0;
            for (int t = 0; t < sc.horizon(); ++t) {
                const SlotProblem sp = with_policies(slot_problem(sc, t, r.soc.row(t).transpose()),
                                                     Algorithm::ProposedFramework, r.gaps, t, rc.baseline);
                const auto t1 = Clock::now();
                try {
                    (void)solve_centralized_reference(sp);
                } catch (const SolverError&) {
                    ++failures;
                }
                central += std::chrono::duration<double>(Clock::now() - t1).count();
                converged += r.slots[t].record.converged;
                if (r.slots[t].market_active) {
                    ++active;
                    iters += r.slots[t].record.iterations;
                }
            }
            const double mean = active ? double(iters) / active : 0.0;
            tab.row(buses, f6(eta), f6(mean), active, converged, f6(r.critical_path_s), f6(dist), f6(central), failures);
            std::printf("%d buses, eta %g: mean %.1f iterations over %d active slots, distributed %.3f s critical "
                        "path (%.3f s on one core), centralized %.3f s\n",
                        buses, eta, mean, active, r.critical_path_s, dist, central);
        }
    }
    write_manifest(dir, "scale", {&tab});
    return 0;
}

int cmd_gap(const Common& c) {
    const ScenarioConfig cfg = base_config(c);
    const Scenario sc = generate_scenario(cfg);
    const auto gaps = minimize_gaps(sc.ess, GapSearch{});
    const fs::path dir = out_dir(c);
    Table tab(dir, "gap.csv", "bus,delta_star,epsilon_star,theta");
    for (int i = 0; i < sc.size(); ++i)
        tab.row(sc.ess[i].bus, f6(gaps[i].delta_star), f6(gaps[i].epsilon_star), f6(gaps[i].O_star));
    write_manifest(dir, "gap", {&tab});
    std::printf("gap minimization for %d prosumers -> %s\n", sc.size(), (dir / "gap.csv").string().c_str());
    return 0;
}

int cmd_generate(const Common& c) {
    const ScenarioConfig cfg = base_config(c);
    const fs::path dir = out_dir(c);
    save_scenario(generate_scenario(cfg), dir);
    std::printf("scenario '%s' (seed %llu, %d slots) -> %s\n", cfg.name.c_str(),
                static_cast<unsigned long long>(cfg.seed), cfg.horizon, (dir / "scenario.json").string().c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"peer-to-peer energy market simulator"};
    app.require_subcommand(1);

    Common run_c, cmp_c, scale_c, gap_c, gen_c;
    std::string algo;
    auto* run = app.add_subcommand("run", "clear a horizon with one algorithm");
    add_common(run, run_c);
    run->add_option("--algo", algo, "A1..A7 or a name")->required();

    std::vector<std::uint64_t> seeds;
    std::string what, range = "0.8..1.2";
    int steps = 5;
    auto* cmp = app.add_subcommand("compare", "run A1-A7 over seeds");
    add_common(cmp, cmp_c);
    cmp->add_option("--seeds", seeds, "seed list")->delimiter(',');
    cmp->add_option("--vary", what, "smax, smin or kappa");
    cmp->add_option("--range", range, "lo..hi multiplier or value");
    cmp->add_option("--steps", steps, "points in the range");

    std::vector<int> sizes{15, 34, 69, 141};
    std::vector<double> etas;
    int horizon = 24;
    auto* scale = app.add_subcommand("scale", "distributed vs centralized timing on radial feeders");
    add_common(scale, scale_c);
    scale->add_option("--sizes", sizes, "bus counts including the substation")->delimiter(',');
    scale->add_option("--etas", etas, "consensus penalties to sweep")->delimiter(',');
    scale->add_option("--horizon", horizon, "slots per day");

    auto* gap = app.add_subcommand("gap", "per-prosumer gap minimization");
    add_common(gap, gap_c);
    auto* gen = app.add_subcommand("generate", "write a scenario and its CSVs");
    add_common(gen, gen_c);

    CLI11_PARSE(app, argc, argv);
    try {
        if (*run) return cmd_run(run_c, algo);
        if (*cmp) return cmd_compare(cmp_c, seeds, what, range, steps);
        if (*scale) return cmd_scale(scale_c, sizes, etas, horizon);
        if (*gap) return cmd_gap(gap_c);
        if (*gen) return cmd_generate(gen_c);
    } catch (const ParseError& e) {
        std::fprintf(stderr, "parse error: %s\n", e.what());
        return 3;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "configuration error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
