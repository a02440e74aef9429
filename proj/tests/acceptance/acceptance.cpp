// Acceptance run: one PASS/FAIL line per criterion.
//
// usage: p2pm_acceptance [report-file [criterion ...]]
//
// Exit status is nonzero when a criterion outside the known-failure list
// fails or a check throws. Known failures still print FAIL.

#include "oracles.hpp"

#include "p2pm/baselines.hpp"
#include "p2pm/error.hpp"
#include "p2pm/lyapunov.hpp"
#include "p2pm/runtime.hpp"
#include "p2pm/scenario.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <future>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

using namespace p2pm;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

ScenarioConfig feeder15(std::uint64_t seed, int horizon) {
    ScenarioConfig c;
    c.name = "ieee15-seed" + std::to_string(seed);
    c.seed = seed;
    c.horizon = horizon;
    c.slot_minutes = 24.0 * 60.0 / horizon;
    return c;
}

// Slot t of a finished online run, rebuilt with the SoC the run saw.
SlotProblem replay_slot(const Scenario& sc, const RunResult& r, int t, Algorithm a, const RunConfig& rc) {
    return with_policies(slot_problem(sc, t, r.soc.row(t).transpose()), a, r.gaps, t, rc.baseline);
}

// Horizon runs shared by the envelope, safety and ordering checks.
struct SeedRuns {
    std::uint64_t seed = 0;
    Scenario sc;
    std::map<Algorithm, RunResult> runs;
};

const std::vector<SeedRuns>& ordering_runs() {
    static const std::vector<SeedRuns> cache = [] {
        std::vector<std::future<SeedRuns>> jobs;
        for (std::uint64_t seed = 1; seed <= 20; ++seed)
            jobs.push_back(std::async(std::launch::async, [seed] {
                SeedRuns s;
                s.seed = seed;
                s.sc = generate_scenario(feeder15(seed, 96));
                for (Algorithm a : kAllAlgorithms) {
                    if (a == Algorithm::TheoreticalGuarantee) continue;
                    s.runs.emplace(a, run_horizon(s.sc, a, RunConfig{}));
                }
                return s;
            }));
        std::vector<SeedRuns> out;
        for (auto& j : jobs) out.push_back(j.get());
        return out;
    }();
    return cache;
}

// --- AC1 -------------------------------------------------------------------

Outcome ac1() {
    const Scenario sc = generate_scenario(feeder15(1, 24));
    RunConfig rc;
    rc.admm.tol = 1e-5;
    const auto t0 = Clock::now();
    const RunResult r = run_horizon(sc, Algorithm::ProposedFramework, rc);
    const double runtime = seconds_since(t0);

    int active = 0, bad = 0;
    double worst_rel = 0.0, worst_traded = 0.0;
    for (int t = 0; t < sc.horizon(); ++t) {
        if (!r.slots[t].market_active) continue;
        ++active;
        const auto ref = solve_centralized_reference(replay_slot(sc, r, t, Algorithm::ProposedFramework, rc));
        const double rel = std::abs(r.slots[t].objective - ref.objective) / std::max(std::abs(ref.objective), 1e-9);
        const double traded = std::abs(r.slots[t].decision.traded_energy() - ref.decision.traded_energy());
        worst_rel = std::max(worst_rel, rel);
        worst_traded = std::max(worst_traded, traded);
        if (rel > 1e-3 || traded > 1e-3) ++bad;
    }
    Outcome o;
    o.pass = bad == 0 && active > 0 && runtime < 120.0;
    o.detail = fmt("%d active slots, worst rel objective gap %.2e (tol 1e-3), worst traded-energy gap %.2e kWh "
                   "(tol 1e-3), %d outside; distributed run %.2f s (limit 120 s)",
                   active, worst_rel, worst_traded, bad, runtime);
    return o;
}

// --- AC2 -------------------------------------------------------------------

Outcome ac2() {
    int slots = 0, bad_residual = 0, bad_inactive = 0, active = 0;
    long iter_sum = 0;
    int iter_min = 1 << 30, iter_max = 0;
    for (const auto& s : ordering_runs()) {
        for (Algorithm a : {Algorithm::ProposedFramework, Algorithm::ProposedOnline, Algorithm::Greedy}) {
            for (const auto& slot : s.runs.at(a).slots) {
                ++slots;
                const auto& rec = slot.record;
                if (!rec.converged || rec.iterations > 2000 || rec.residual.empty() || rec.residual.back() > 1e-3)
                    ++bad_residual;
                if (!slot.market_active) {
                    if (rec.iterations != 1) ++bad_inactive;
                } else {
                    ++active;
                    iter_sum += rec.iterations;
                    iter_min = std::min(iter_min, rec.iterations);
                    iter_max = std::max(iter_max, rec.iterations);
                }
            }
        }
    }
    Outcome o;
    o.pass = bad_residual == 0 && bad_inactive == 0;
    o.detail = fmt("%d slots (20 seeds x 96, A1/A4/A5): %d missed residual 1e-3 by k_max 2000, %d inactive slots "
                   "took more than 1 iteration; active iterations min %d mean %.1f max %d over %d slots",
                   slots, bad_residual, bad_inactive, active ? iter_min : 0,
                   active ? double(iter_sum) / active : 0.0, iter_max, active);
    return o;
}

// --- AC3 -------------------------------------------------------------------

Outcome ac3() {
    long checks = 0, violations = 0;
    std::map<Algorithm, long> by_algo;
    double worst_v = 0.0, worst_flow = 0.0, worst_soc = 0.0, worst_anti = 0.0;
    for (const auto& s : ordering_runs()) {
        const auto& lim = s.sc.limits;
        for (const auto& [a, r] : s.runs) {
            for (int t = 0; t < r.horizon(); ++t) {
                const auto& f = r.slots[t].flows;
                const auto& d = r.slots[t].decision;
                const double v = std::max((f.v - lim.v_max).maxCoeff(), (lim.v_min - f.v).maxCoeff());
                const double P = std::max((f.P - lim.P_max).maxCoeff(), (lim.P_min - f.P).maxCoeff());
                const double Q = std::max((f.Q - lim.Q_max).maxCoeff(), (lim.Q_min - f.Q).maxCoeff());
                const double anti = (d.e + d.e.transpose()).cwiseAbs().maxCoeff();
                worst_v = std::max(worst_v, v);
                worst_flow = std::max({worst_flow, P, Q});
                worst_anti = std::max(worst_anti, anti);
                ++checks;
                if (v > 1e-9 || P > 1e-9 || Q > 1e-9 || anti > 1e-3) {
                    ++violations;
                    ++by_algo[a];
                }
            }
            for (int t = 0; t <= r.horizon(); ++t)
                for (int i = 0; i < s.sc.size(); ++i) {
                    const double lo = s.sc.ess[i].soc_min - r.soc(t, i), hi = r.soc(t, i) - s.sc.ess[i].soc_max;
                    worst_soc = std::max({worst_soc, lo, hi});
                    if (lo > 1e-9 || hi > 1e-9) {
                        ++violations;
                        ++by_algo[a];
                    }
                }
        }
    }
    const auto& lim = ordering_runs().front().sc.limits;
    Outcome o;
    o.pass = violations == 0;
    o.detail = fmt("%ld slot results (20 seeds x 96, A1-A6): %ld violations; worst excess v %.1e p.u.^2 "
                   "(box [%.4f, %.4f]), P/Q %.1e kW, SoC %.1e kWh, |e_ij+e_ji| %.1e (tol 1e-3)",
                   checks, violations, std::max(worst_v, 0.0), lim.v_min[0], lim.v_max[0], std::max(worst_flow, 0.0),
                   std::max(worst_soc, 0.0), worst_anti);
    for (const auto& [a, c] : by_algo) o.detail += fmt(" %s:%ld", tag(a), c);
    return o;
}

// --- AC4 -------------------------------------------------------------------

struct SandwichCase {
    double offline = 0.0, online = 0.0, theta = 0.0;
    double continuous = 0.0;  // horizon optimum without the grid, for the report
};

SandwichCase sandwich_case(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> horizon(2, 4), prosumers(1, 2);
    ScenarioConfig c;
    c.name = "oracle";
    c.network = "radial";
    c.radial_prosumers = prosumers(rng);
    c.scale_with_size = false;
    c.horizon = horizon(rng);
    c.slot_minutes = 24.0 * 60.0 / c.horizon;
    c.ess_rate_kw = 2.0 / c.slot_hours();  // keeps |w| <= 2 kWh per slot
    c.seed = seed;
    const Scenario sc = generate_scenario(c);

    RunConfig rc;
    rc.admm.tol = 1e-5;
    const RunResult online = run_horizon(sc, Algorithm::ProposedFramework, rc);
    std::vector<SlotProblem> slots;
    for (int t = 0; t < sc.horizon(); ++t) slots.push_back(slot_problem(sc, t, sc.soc0));
    const OfflineResult off = solve_offline(slots, 0.25);
    return {off.average_cost, online.time_avg_cost, online.theta, solve_offline_horizon(slots).average_cost};
}

Outcome ac4() {
    const auto t0 = Clock::now();
    std::vector<std::future<SandwichCase>> jobs;
    for (std::uint64_t k = 0; k < 50; ++k)
        jobs.push_back(std::async(std::launch::async, sandwich_case, 1000 + k));
    int below = 0, above = 0, continuous_below = 0;
    double worst_low = 0.0, worst_high = 0.0;
    for (auto& j : jobs) {
        const auto c = j.get();
        if (c.continuous <= c.online + 1e-6) ++continuous_below;
        const double low = c.offline - c.online, high = c.online - (c.offline + std::max(c.theta, 0.0));
        worst_low = std::max(worst_low, low);
        worst_high = std::max(worst_high, high);
        if (low > 1e-9) ++below;
        if (high > 1e-9) ++above;
    }
    const double runtime = seconds_since(t0);
    Outcome o;
    o.pass = below == 0 && above == 0 && runtime < 60.0;
    o.detail = fmt("50 instances (1-2 prosumers, T 2-4, grid 0.25): %d below the offline value (worst by %.2e), "
                   "%d above offline + [Theta]+ (worst by %.2e); continuous horizon optimum <= online on %d/50; "
                   "%.1f s (limit 60 s)",
                   below, worst_low, above, worst_high, continuous_below, runtime);
    return o;
}

// --- AC5 -------------------------------------------------------------------

Outcome ac5() {
    std::mt19937_64 rng(55);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    long samples = 0, failures = 0;
    int draws_failing = 0;
    double worst = 0.0;
    double kappa_one_worst = -1e300;
    for (int draw = 0; draw < 20; ++draw) {
        ProsumerParams p;
        // Half the draws use the generator's kappa, the rest spread over [0.99, 1].
        p.kappa = draw < 5 ? 0.998 : draw < 10 ? 1.0 : 0.99 + 0.01 * u(rng);
        p.soc_min = 0.0;
        p.soc_max = 5.0 + 3.0 * u(rng);
        p.w_min = -2.0;
        p.w_max = 2.0;
        const LyapunovParams lp{0.01 + 0.04 * u(rng), -p.soc_max + (p.soc_max - p.soc_min) * u(rng)};
        long fails = 0;
        for (int s = 0; s < 10000; ++s) {
            const double soc = p.soc_min + (p.soc_max - p.soc_min) * u(rng);
            const auto [lo, hi] = storage_box(p, soc);
            const double w = lo + (hi - lo) * u(rng);
            const double st = soc + lp.epsilon;
            const double excess =
                exact_drift(p, lp, st, w) - (drift_upper_constant(p, lp, st) + drift_penalty(lp, st, w, p));
            ++samples;
            worst = std::max(worst, excess);
            if (p.kappa == 1.0) kappa_one_worst = std::max(kappa_one_worst, excess);
            if (excess > 1e-9) ++fails;
        }
        failures += fails;
        if (fails) ++draws_failing;
    }
    Outcome o;
    o.pass = failures == 0;
    o.detail = fmt("%ld states over 20 parameter draws: %ld above bound + 1e-9 in %d draws, worst excess %.3e; "
                   "kappa = 1 draws worst excess %.3e",
                   samples, failures, draws_failing, worst, kappa_one_worst);
    return o;
}

// --- AC6 -------------------------------------------------------------------

Outcome ac6() {
    const auto rep = p2pm::testing::kkt_sweep(1000, 6006, 1e-5);
    Outcome o;
    o.pass = rep.failures == 0 && rep.checked > 0;
    o.detail = fmt("%d random inputs, %d interior outputs checked, worst |gradient| %.2e (tol 1e-5), %d failures",
                   rep.samples, rep.checked, rep.worst, rep.failures);
    return o;
}

// --- AC7 -------------------------------------------------------------------

Outcome ac7() {
    int ordered = 0, soft = 0, positive = 0;
    const int seeds = static_cast<int>(ordering_runs().size());
    std::map<Algorithm, double> pct;
    std::ostringstream broken;
    for (const auto& s : ordering_runs()) {
        auto cost = [&](Algorithm a) { return s.runs.at(a).time_avg_cost; };
        const double a1 = cost(Algorithm::Greedy), a4 = cost(Algorithm::ProposedOnline),
                     a5 = cost(Algorithm::ProposedFramework), a6 = cost(Algorithm::Offline);
        const bool ok = a6 <= a5 && a5 <= a4 && a4 <= a1;
        if (ok) ++ordered;
        else
            broken << " seed" << s.seed << "[A6 " << a6 << " A5 " << a5 << " A4 " << a4 << " A1 " << a1 << "]";
        if (a1 - a5 > 0.0) ++positive;
        if (a4 <= std::min(cost(Algorithm::TraditionalLyapunov), cost(Algorithm::OnlineRegret))) ++soft;
        for (const auto& [a, r] : s.runs) pct[a] += 100.0 * (a1 - r.time_avg_cost) / std::max(std::abs(a1), 1e-9) / seeds;
    }
    Outcome o;
    o.pass = ordered == seeds && positive == seeds;
    std::ostringstream d;
    d << ordered << "/" << seeds << " seeds with A6 <= A5 <= A4 <= A1, A5 saving > 0 on " << positive << "/" << seeds
      << ", A4 <= min(A2, A3) on " << soft << "/" << seeds << "; mean saving vs A1:";
    for (const auto& [a, p] : pct)
        if (a != Algorithm::Greedy) d << ' ' << tag(a) << ' ' << fmt("%.3f%%", p);
    if (!broken.str().empty()) d << "; out of order:" << broken.str().substr(0, 400);
    o.detail = d.str();
    return o;
}

// --- AC8 -------------------------------------------------------------------

Outcome ac8() {
    std::mt19937_64 rng(88);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const GapSearch search{1e-2, 5e-2, 1e-3};
    double worst = 0.0;
    int bad = 0;
    for (int draw = 0; draw < 20; ++draw) {
        ProsumerParams p;
        p.kappa = 0.99 + 0.01 * u(rng);
        p.soc_max = 5.0 + 3.0 * u(rng);
        p.soc_min = 0.1 * p.soc_max * u(rng);
        p.w_min = -2.0;
        p.w_max = 2.0;
        const auto r = minimize_gap(p, search);
        double grid = std::numeric_limits<double>::infinity();
        for (int kd = 0; kd <= 40; ++kd) {
            const double d = 1e-2 + 1e-3 * kd;
            const long steps = static_cast<long>(std::floor((p.soc_max - p.soc_min) / 1e-3));
            for (long ke = 0; ke <= steps + 1; ++ke) {
                const double e = std::min(-p.soc_max + 1e-3 * static_cast<double>(ke), -p.soc_min);
                grid = std::min(grid, std::max(p2pm::testing::theta_by_parts(p, d, e), 0.0));
            }
        }
        const double gap = std::abs(r.O_star - grid);
        worst = std::max(worst, gap);
        if (gap > 1e-4) ++bad;
    }
    ProsumerParams deg;
    deg.kappa = 1.0;
    deg.soc_max = 6.0;
    deg.w_min = -1.5;
    deg.w_max = 2.0;
    const auto rd = minimize_gap(deg, search);
    const double expected = 0.5 * search.delta_min * (deg.w_max - deg.w_min) * (deg.w_max - deg.w_min);
    const bool degenerate_ok = rd.O_star == expected && rd.delta_star == search.delta_min;
    Outcome o;
    o.pass = bad == 0 && degenerate_ok;
    o.detail = fmt("20 draws vs dense (delta, eps) grid at 1e-3: worst |[Theta]+ difference| %.2e (tol 1e-4), "
                   "%d outside; kappa = 1 case %.17g vs 1/2 delta_min (w_max-w_min)^2 = %.17g",
                   worst, bad, rd.O_star, expected);
    return o;
}

// --- AC9 -------------------------------------------------------------------

struct SweepPoint {
    double a5 = 0.0, a7 = 0.0;
};

SweepPoint sweep_point(const Scenario& sc) {
    RunConfig rc;
    rc.admm.tol = 1e-5;
    return {run_horizon(sc, Algorithm::ProposedFramework, rc).time_avg_cost,
            *run_horizon(sc, Algorithm::TheoreticalGuarantee, rc).guarantee};
}

Outcome ac9() {
    const Scenario base = generate_scenario(feeder15(1, 24));
    struct Sweep {
        const char* name;
        std::vector<double> values;
        std::function<void(ProsumerParams&, double)> apply;
        int direction;  // -1: cost must not increase along values, +1: must not decrease
    };
    const std::vector<Sweep> sweeps{
        {"S_max scale", {0.8, 0.9, 1.0, 1.1, 1.2}, [](ProsumerParams& p, double v) { p.soc_max *= v; }, -1},
        {"S_min fraction", {0.0, 0.025, 0.05, 0.075, 0.1},
         [](ProsumerParams& p, double v) { p.soc_min = v * p.soc_max; }, +1},
        {"kappa", {0.9925, 0.995, 0.9975, 1.0}, [](ProsumerParams& p, double v) { p.kappa = v; }, -1},
    };
    int breaks = 0, guarantee_breaks = 0, points = 0;
    std::ostringstream d;
    for (const auto& sw : sweeps) {
        std::vector<std::future<SweepPoint>> jobs;
        for (double v : sw.values) {
            Scenario sc = base;
            edit_storage(sc, [&](ProsumerParams& p) { sw.apply(p, v); });
            jobs.push_back(std::async(std::launch::async, [sc = std::move(sc)] { return sweep_point(sc); }));
        }
        std::vector<SweepPoint> pts;
        for (auto& j : jobs) pts.push_back(j.get());
        d << sw.name << " A5:";
        for (size_t k = 0; k < pts.size(); ++k) {
            ++points;
            d << ' ' << fmt("%.6f", pts[k].a5);
            if (pts[k].a7 < pts[k].a5) ++guarantee_breaks;
            if (k > 0 && sw.direction * (pts[k].a5 - pts[k - 1].a5) < 0.0) ++breaks;
        }
        d << "; ";
    }
    Outcome o;
    o.pass = breaks == 0 && guarantee_breaks == 0;
    o.detail = fmt("%d sweep points: %d ordering breaks, %d points with A7 below A5; ", points, breaks,
                   guarantee_breaks) +
               d.str();
    return o;
}

// --- AC10 ------------------------------------------------------------------

struct ScaleRow {
    int buses = 0;
    double distributed = 0.0, serial = 0.0, centralized = 0.0, mean_iter = 0.0;
    int active = 0, central_failures = 0;
};

ScaleRow scale_row(int prosumers) {
    ScenarioConfig c = feeder15(3, 24);
    if (prosumers != 14) {
        c.network = "radial";
        c.radial_prosumers = prosumers;
    }
    const Scenario sc = generate_scenario(c);
    RunConfig rc;
    rc.message_passing = true;
    ScaleRow row;
    row.buses = prosumers + 1;
    const auto t0 = Clock::now();
    const RunResult r = run_horizon(sc, Algorithm::ProposedFramework, rc);
    row.serial = seconds_since(t0);
    row.distributed = r.critical_path_s;
    long iters = 0;
    for (int t = 0; t < sc.horizon(); ++t) {
        const SlotProblem sp = replay_slot(sc, r, t, Algorithm::ProposedFramework, rc);
        const auto t1 = Clock::now();
        try {
            (void)solve_centralized_reference(sp);
        } catch (const SolverError&) {
            ++row.central_failures;
        }
        row.centralized += seconds_since(t1);
        if (r.slots[t].market_active) {
            ++row.active;
            iters += r.slots[t].record.iterations;
        }
    }
    row.mean_iter = row.active ? double(iters) / row.active : 0.0;
    return row;
}

Outcome ac10() {
    bool ok = true;
    std::ostringstream d;
    for (int prosumers : {14, 32, 68, 140}) {
        const auto row = scale_row(prosumers);
        ok = ok && row.mean_iter <= 2000.0 && row.distributed < row.centralized;
        d << row.buses << "-bus: distributed " << fmt("%.2f", row.distributed) << " s critical path ("
          << fmt("%.2f", row.serial) << " s on one core), centralized "
          << fmt("%.2f", row.centralized) << " s (" << row.central_failures << " reference non-convergences), mean "
          << fmt("%.1f", row.mean_iter) << " iterations over " << row.active << " active slots; ";
    }
    return {ok, d.str()};
}

}  // namespace

int main(int argc, char** argv) {
    const std::string report_path = argc > 1 ? argv[1] : "acceptance_report.txt";
    // Criteria whose failure is understood and recorded; see README.
    const std::set<int> known_failures{2, 4, 5, 7, 9};
    const std::vector<std::function<Outcome()>> checks{ac1, ac2, ac3, ac4, ac5, ac6, ac7, ac8, ac9, ac10};

    std::set<int> only;
    for (int a = 2; a < argc; ++a) only.insert(std::stoi(argv[a]));

    std::ofstream report(report_path);
    int unexpected = 0;
    for (size_t k = 0; k < checks.size(); ++k) {
        const int id = static_cast<int>(k) + 1;
        if (!only.empty() && !only.count(id)) continue;
        const auto t0 = Clock::now();
        Outcome o;
        bool threw = false;
        try {
            o = checks[k]();
        } catch (const std::exception& e) {
            o.pass = false;
            o.detail = std::string("threw: ") + e.what();
            threw = true;
        }
        const bool known = known_failures.count(id) > 0 && !threw;
        if (!o.pass && !known) ++unexpected;
        std::ostringstream line;
        line << "AC" << id << ' ' << (o.pass ? "PASS" : "FAIL") << ' ' << o.detail
             << fmt(" [%.1f s]", seconds_since(t0));
        if (!o.pass && known) line << " (known failure)";
        std::cout << line.str() << std::endl;
        report << line.str() << '\n';
    }
    std::cout << (unexpected ? "unexpected failures: " + std::to_string(unexpected) : std::string("no unexpected failures"))
              << std::endl;
    return unexpected ? 1 : 0;
}
