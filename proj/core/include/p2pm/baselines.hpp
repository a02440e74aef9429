#pragma once

#include "p2pm/admm.hpp"
#include "p2pm/lyapunov.hpp"
#include "p2pm/qp.hpp"

#include <string>
#include <string_view>
#include <vector>

namespace p2pm {

enum class Algorithm {
    Greedy,                // A1
    TraditionalLyapunov,   // A2
    OnlineRegret,          // A3
    ProposedOnline,        // A4
    ProposedFramework,     // A5
    Offline,               // A6
    TheoreticalGuarantee,  // A7
};

inline constexpr Algorithm kAllAlgorithms[] = {
    Algorithm::Greedy,         Algorithm::TraditionalLyapunov, Algorithm::OnlineRegret,
    Algorithm::ProposedOnline, Algorithm::ProposedFramework,   Algorithm::Offline,
    Algorithm::TheoreticalGuarantee};

// Accepts "A1".."A7" or the lower-case names ("greedy", "framework", ...).
[[nodiscard]] Algorithm parse_algorithm(std::string_view tag);
[[nodiscard]] const char* tag(Algorithm a);
[[nodiscard]] const char* name(Algorithm a);
[[nodiscard]] bool is_online(Algorithm a);

struct BaselineConfig {
    double omega = 0.01;          // A3 penalty growth per slot
    double delta_offset = 0.01;   // A2-A4 perturbation of delta*
    double epsilon_offset = 1.0;  // A2-A4 perturbation of eps*
};

// ESS pricing used by one online algorithm at slot t.
[[nodiscard]] StoragePolicy storage_policy(Algorithm a, const GapResult& gap, int t, const BaselineConfig& cfg = {});

[[nodiscard]] std::vector<GapResult> minimize_gaps(const std::vector<ProsumerParams>& ess, const GapSearch& search);

// The (delta, eps) pair each prosumer runs with under an algorithm.
[[nodiscard]] std::vector<LyapunovParams> lyapunov_params(Algorithm a, const std::vector<GapResult>& gaps,
                                                          const BaselineConfig& cfg = {});

[[nodiscard]] SlotProblem with_policies(SlotProblem sp, Algorithm a, const std::vector<GapResult>& gaps, int t,
                                        const BaselineConfig& cfg = {});

[[nodiscard]] SlotSolution solve_greedy_slot(SlotProblem sp, const AdmmConfig& config);
[[nodiscard]] SlotSolution solve_traditional_slot(SlotProblem sp, const std::vector<GapResult>& gaps,
                                                  const AdmmConfig& config, const BaselineConfig& cfg = {});
[[nodiscard]] SlotSolution solve_regret_slot(SlotProblem sp, const std::vector<GapResult>& gaps, int t,
                                             const AdmmConfig& config, const BaselineConfig& cfg = {});

struct CentralizedSolution {
    Decision decision;
    double objective = 0.0;  // drift-plus-cost, comparable to SlotSolution::objective
    double cost = 0.0;
    QpResult qp;
};

// The slot's convex program solved in one place by projected gradient on an
// augmented Lagrangian. Throws SolverError carrying the final projected
// gradient norm when it does not reach the tolerances.
[[nodiscard]] CentralizedSolution solve_centralized_reference(const SlotProblem& sp,
                                                              const ProjectedGradientOptions& opt = {});

struct OfflineResult {
    double total_cost = 0.0;
    double average_cost = 0.0;
    std::vector<Decision> decisions;
    Eigen::MatrixXd soc;  // (T+1) x n
    long evaluated = 0;   // slot sub-problems solved
};

struct OracleLimits {
    int max_prosumers = 2;
    int max_slots = 4;
};

// Exhaustive search over the w grid {w_min + k*step} (plus w_max and 0) per
// prosumer and slot. slots[t].soc is ignored except slots[0].soc.
[[nodiscard]] OfflineResult solve_offline(const std::vector<SlotProblem>& slots, double grid_step = 0.25,
                                          const OracleLimits& limits = {});

// Continuous offline optimum of the whole horizon by interior point.
[[nodiscard]] OfflineResult solve_offline_horizon(const std::vector<SlotProblem>& slots,
                                                  const InteriorPointOptions& opt = {});

// A7: offline optimum plus [Theta]^+.
[[nodiscard]] double report_guarantee(double offline_cost, const GapBound& gap);

// Grid used by solve_offline for one prosumer.
[[nodiscard]] std::vector<double> ess_grid(const ProsumerParams& prm, double step);

}  // namespace p2pm
