#include "p2pm/baselines.hpp"

#include "p2pm/error.hpp"
#include "p2pm/slot_qp.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <map>
#include <string>

namespace p2pm {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kSocTol = 1e-9;

struct AlgoInfo {
    Algorithm a;
    const char* tag;
    const char* name;
};

constexpr AlgoInfo kInfo[] = {
    {Algorithm::Greedy, "A1", "greedy"},
    {Algorithm::TraditionalLyapunov, "A2", "traditional"},
    {Algorithm::OnlineRegret, "A3", "regret"},
    {Algorithm::ProposedOnline, "A4", "online"},
    {Algorithm::ProposedFramework, "A5", "framework"},
    {Algorithm::Offline, "A6", "offline"},
    {Algorithm::TheoreticalGuarantee, "A7", "guarantee"},
};

}  // namespace

Algorithm parse_algorithm(std::string_view tag) {
    std::string t(tag);
    for (auto& c : t) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    for (const auto& info : kInfo) {
        std::string k = info.tag;
        k[0] = 'a';
        if (t == k || t == info.name) return info.a;
    }
    throw ConfigError("unknown algorithm tag '" + std::string(tag) + "' (expected A1..A7)");
}

const char* tag(Algorithm a) {
    for (const auto& info : kInfo)
        if (info.a == a) return info.tag;
    return "?";
}

const char* name(Algorithm a) {
    for (const auto& info : kInfo)
        if (info.a == a) return info.name;
    return "?";
}

bool is_online(Algorithm a) { return a != Algorithm::Offline && a != Algorithm::TheoreticalGuarantee; }

StoragePolicy storage_policy(Algorithm a, const GapResult& gap, int t, const BaselineConfig& cfg) {
    StoragePolicy p;
    const double d = gap.delta_star + cfg.delta_offset, e = gap.epsilon_star + cfg.epsilon_offset;
    switch (a) {
        case Algorithm::Greedy:
            p.delta = 0.0;
            p.epsilon = 0.0;
            break;
        case Algorithm::TraditionalLyapunov:
            p.delta = d;
            p.epsilon = e;
            p.quadratic_drift = false;
            p.rule = StorageRule::SupportPoints;
            break;
        case Algorithm::OnlineRegret:
            p.delta = d;
            p.epsilon = e;
            p.extra_curvature = cfg.omega * t;
            break;
        case Algorithm::ProposedOnline:
            p.delta = d;
            p.epsilon = e;
            break;
        case Algorithm::ProposedFramework:
            p.delta = gap.delta_star;
            p.epsilon = gap.epsilon_star;
            break;
        default: throw ConfigError(std::string("no per-slot policy for ") + tag(a));
    }
    return p;
}

std::vector<GapResult> minimize_gaps(const std::vector<ProsumerParams>& ess, const GapSearch& search) {
    std::vector<GapResult> out;
    out.reserve(ess.size());
    for (const auto& p : ess) out.push_back(minimize_gap(p, search));
    return out;
}

std::vector<LyapunovParams> lyapunov_params(Algorithm a, const std::vector<GapResult>& gaps,
                                            const BaselineConfig& cfg) {
    std::vector<LyapunovParams> lp;
    for (const auto& g : gaps) {
        if (a == Algorithm::ProposedFramework || a == Algorithm::Offline || a == Algorithm::TheoreticalGuarantee)
            lp.push_back({g.delta_star, g.epsilon_star});
        else if (a == Algorithm::Greedy)
            lp.push_back({0.0, 0.0});
        else
            lp.push_back({g.delta_star + cfg.delta_offset, g.epsilon_star + cfg.epsilon_offset});
    }
    return lp;
}

SlotProblem with_policies(SlotProblem sp, Algorithm a, const std::vector<GapResult>& gaps, int t,
                          const BaselineConfig& cfg) {
    const int n = sp.size();
    if (a != Algorithm::Greedy && static_cast<int>(gaps.size()) != n)
        throw DimensionError("need one gap result per prosumer");
    sp.policy.resize(n);
    for (int i = 0; i < n; ++i) sp.policy[i] = storage_policy(a, a == Algorithm::Greedy ? GapResult{} : gaps[i], t, cfg);
    if (a == Algorithm::TraditionalLyapunov) {
        // Discrete actions make the trading iterations cycle, so each prosumer
        // fixes its support point against the tariff alone first.
        const DualState none = DualState::zeros(n);
        for (int i = 0; i < n; ++i) {
            LocalProblem lp = make_local_problem(i, sp, none, 0.0, 1.0);
            lp.h.clear();
            lp.u.clear();
            lp.loss.clear();
            const LocalSolution s = solve_local(lp);
            if (s.feasible) sp.policy[i].committed = s.w;
        }
    }
    return sp;
}

SlotSolution solve_greedy_slot(SlotProblem sp, const AdmmConfig& config) {
    return solve_slot(with_policies(std::move(sp), Algorithm::Greedy, {}, 0), config);
}

SlotSolution solve_traditional_slot(SlotProblem sp, const std::vector<GapResult>& gaps, const AdmmConfig& config,
                                    const BaselineConfig& cfg) {
    return solve_slot(with_policies(std::move(sp), Algorithm::TraditionalLyapunov, gaps, 0, cfg), config);
}

SlotSolution solve_regret_slot(SlotProblem sp, const std::vector<GapResult>& gaps, int t, const AdmmConfig& config,
                               const BaselineConfig& cfg) {
    return solve_slot(with_policies(std::move(sp), Algorithm::OnlineRegret, gaps, t, cfg), config);
}

CentralizedSolution solve_centralized_reference(const SlotProblem& sp, const ProjectedGradientOptions& opt) {
    const SlotQp sq = build_slot_qp(sp);
    CentralizedSolution out;
    out.qp = solve_qp_projected_gradient(sq.qp, opt);
    if (!out.qp.converged)
        throw SolverError("centralized reference did not converge: projected gradient " +
                              std::to_string(out.qp.stationarity) + ", infeasibility " +
                              std::to_string(out.qp.infeasibility),
                          out.qp.stationarity);
    out.decision = decode_slot(sp, sq.layout, out.qp.x);
    out.objective = slot_objective(sp, out.decision);
    out.cost = objective(out.decision, sp.state, sp.params, sp.registry, sp.losses);
    return out;
}

std::vector<double> ess_grid(const ProsumerParams& prm, double step) {
    if (!(step > 0.0)) throw ConfigError("grid step must be positive");
    std::vector<double> g;
    for (long k = 0;; ++k) {
        const double w = prm.w_min + static_cast<double>(k) * step;
        if (w > prm.w_max + 1e-12) break;
        g.push_back(w);
    }
    auto add = [&](double v) {
        if (v < prm.w_min - 1e-12 || v > prm.w_max + 1e-12) return;
        for (double x : g)
            if (std::abs(x - v) <= 1e-12) return;
        g.push_back(v);
    };
    add(prm.w_max);
    add(0.0);
    std::sort(g.begin(), g.end());
    return g;
}

namespace {

// Needed for the slot to admit any (p, x) at a fixed w: a buyer cannot push
// ESS energy to the grid and a seller cannot pull from it.
bool balance_feasible(const SlotProblem& sp, const Eigen::VectorXd& w) {
    for (int i = 0; i < sp.size(); ++i) {
        const auto [plo, phi] = injection_box(sp.params[i], sp.state.pv[i], sp.state.demand[i]);
        const Role r = sp.registry.role[i];
        if (r == Role::Buyer && plo > w[i] + 1e-12) return false;
        if (r == Role::Seller && phi < w[i] - 1e-12) return false;
    }
    return true;
}

// Interval of starting SoC for which a w sequence keeps SoC inside its box.
struct Interval {
    double lo, hi;
};

// Per prosumer and slot: sorted endpoints of the feasibility intervals of
// every non-empty w sequence over the remaining slots. Two SoC values with
// the same counts admit the same futures.
struct Classifier {
    std::vector<double> lower, upper;
    [[nodiscard]] std::pair<long, long> key(double s) const {
        const long a = std::upper_bound(lower.begin(), lower.end(), s + kSocTol) - lower.begin();
        const long b = std::lower_bound(upper.begin(), upper.end(), s - kSocTol) - upper.begin();
        return {a, b};
    }
};

void collect(const ProsumerParams& prm, const std::vector<double>& grid, int remaining, Interval iv, double gain,
             double offset, std::vector<double>& lower, std::vector<double>& upper) {
    // S_k = gain*S + offset must lie in [S_min, S_max].
    if (remaining == 0) return;
    for (double w : grid) {
        const double g = gain * prm.kappa, o = offset * prm.kappa + w;
        Interval next{std::max(iv.lo, (prm.soc_min - o) / g), std::min(iv.hi, (prm.soc_max - o) / g)};
        if (next.lo > next.hi + kSocTol) continue;
        lower.push_back(next.lo);
        upper.push_back(next.hi);
        collect(prm, grid, remaining - 1, next, g, o, lower, upper);
    }
}

}  // namespace

OfflineResult solve_offline(const std::vector<SlotProblem>& slots, double grid_step, const OracleLimits& limits) {
    if (slots.empty()) throw ConfigError("offline oracle needs at least one slot");
    const int n = slots.front().size(), T = static_cast<int>(slots.size());
    if (n > limits.max_prosumers || T > limits.max_slots)
        throw OracleScaleError("offline oracle is limited to " + std::to_string(limits.max_prosumers) +
                               " prosumers and " + std::to_string(limits.max_slots) + " slots; got " +
                               std::to_string(n) + " prosumers and " + std::to_string(T) + " slots");

    std::vector<std::vector<double>> grid(n);
    for (int i = 0; i < n; ++i) grid[i] = ess_grid(slots.front().params[i], grid_step);

    // Joint actions, enumerated in lexicographic order.
    std::vector<Eigen::VectorXd> joint;
    {
        std::vector<size_t> idx(n, 0);
        for (;;) {
            Eigen::VectorXd w(n);
            for (int i = 0; i < n; ++i) w[i] = grid[i][idx[i]];
            joint.push_back(w);
            int i = n - 1;
            while (i >= 0 && ++idx[i] == grid[i].size()) idx[i--] = 0;
            if (i < 0) break;
        }
    }

    OfflineResult res;
    // Residual slot cost for each joint action.
    std::vector<std::vector<double>> cost(T, std::vector<double>(joint.size(), kInf));
    std::vector<std::vector<Decision>> dec(T, std::vector<Decision>(joint.size()));
    for (int t = 0; t < T; ++t) {
        for (size_t a = 0; a < joint.size(); ++a) {
            if (!balance_feasible(slots[t], joint[a])) continue;
            SlotQpOptions opt;
            opt.drift = false;
            opt.fixed_w = &joint[a];
            const SlotQp sq = build_slot_qp(slots[t], opt);
            const QpResult r = solve_qp_interior_point(sq.qp);
            ++res.evaluated;
            if (!r.converged) {
                if (r.infeasibility > 1e-6) continue;
                throw SolverError("offline oracle: slot problem did not converge at t=" + std::to_string(t),
                                  r.stationarity);
            }
            dec[t][a] = decode_slot(slots[t], sq.layout, r.x);
            cost[t][a] = objective(dec[t][a], slots[t].state, slots[t].params, slots[t].registry, slots[t].losses);
        }
    }

    // Classifiers for the start of every slot.
    std::vector<std::vector<Classifier>> cls(T + 1, std::vector<Classifier>(n));
    for (int t = 0; t <= T; ++t)
        for (int i = 0; i < n; ++i) {
            auto& c = cls[t][i];
            collect(slots.front().params[i], grid[i], T - t, {-kInf, kInf}, 1.0, 0.0, c.lower, c.upper);
            std::sort(c.lower.begin(), c.lower.end());
            std::sort(c.upper.begin(), c.upper.end());
        }

    struct State {
        Eigen::VectorXd soc;
        double cost;
        std::vector<int> path;
    };
    using Key = std::vector<long>;
    auto key_of = [&](int t, const Eigen::VectorXd& s) {
        Key k;
        for (int i = 0; i < n; ++i) {
            const auto [a, b] = cls[t][i].key(s[i]);
            k.push_back(a);
            k.push_back(b);
        }
        return k;
    };

    std::map<Key, State> layer;
    layer.emplace(key_of(0, slots.front().soc), State{slots.front().soc, 0.0, {}});
    for (int t = 0; t < T; ++t) {
        std::map<Key, State> next;
        for (const auto& [k, st] : layer) {
            for (size_t a = 0; a < joint.size(); ++a) {
                if (!std::isfinite(cost[t][a])) continue;
                Eigen::VectorXd s(n);
                bool ok = true;
                for (int i = 0; i < n && ok; ++i) {
                    const auto& prm = slots.front().params[i];
                    s[i] = prm.kappa * st.soc[i] + joint[a][i];
                    ok = s[i] >= prm.soc_min - kSocTol && s[i] <= prm.soc_max + kSocTol;
                }
                if (!ok) continue;
                const double c = st.cost + cost[t][a];
                Key nk = key_of(t + 1, s);
                auto it = next.find(nk);
                if (it == next.end() || c < it->second.cost) {
                    State ns{s, c, st.path};
                    ns.path.push_back(static_cast<int>(a));
                    next[std::move(nk)] = std::move(ns);
                }
            }
        }
        layer = std::move(next);
        if (layer.empty()) throw InvariantViolation("offline oracle: no feasible ESS trajectory at slot " + std::to_string(t));
    }

    const State* best = nullptr;
    for (const auto& [k, st] : layer)
        if (!best || st.cost < best->cost) best = &st;
    res.total_cost = best->cost;
    res.average_cost = best->cost / T;
    res.soc.resize(T + 1, n);
    res.soc.row(0) = slots.front().soc.transpose();
    for (int t = 0; t < T; ++t) {
        const int a = best->path[t];
        res.decisions.push_back(dec[t][a]);
        for (int i = 0; i < n; ++i)
            res.soc(t + 1, i) = slots.front().params[i].kappa * res.soc(t, i) + joint[a][i];
    }
    return res;
}

OfflineResult solve_offline_horizon(const std::vector<SlotProblem>& slots, const InteriorPointOptions& opt) {
    const HorizonQp hq = build_horizon_qp(slots);
    const QpResult r = solve_qp_interior_point(hq.qp, opt);
    if (!r.converged)
        throw SolverError("offline horizon problem did not converge: dual residual " + std::to_string(r.stationarity),
                          r.stationarity);
    OfflineResult res;
    const int n = slots.front().size(), T = static_cast<int>(slots.size());
    res.decisions = decode_horizon(slots, hq, r.x);
    res.soc.resize(T + 1, n);
    res.soc.row(0) = slots.front().soc.transpose();
    for (int t = 0; t < T; ++t) {
        for (int i = 0; i < n; ++i) {
            const auto& prm = slots[t].params[i];
            res.soc(t + 1, i) = std::clamp(r.x[hq.soc_idx[t][i]], prm.soc_min, prm.soc_max);
        }
        res.total_cost += objective(res.decisions[t], slots[t].state, slots[t].params, slots[t].registry,
                                    slots[t].losses);
    }
    res.average_cost = res.total_cost / T;
    res.evaluated = 1;
    return res;
}

double report_guarantee(double offline_cost, const GapBound& gap) { return offline_cost + gap.clamped(); }

}  // namespace p2pm
