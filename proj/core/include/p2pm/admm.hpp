#pragma once

#include "p2pm/lyapunov.hpp"
#include "p2pm/market.hpp"
#include "p2pm/network.hpp"

#include <Eigen/Dense>

#include <optional>
#include <utility>
#include <vector>

namespace p2pm {

enum class StorageRule {
    Continuous,     // w anywhere in its feasible interval
    SupportPoints,  // w restricted to {w_min, 0, w_max}
};

// How one prosumer prices ESS actions inside a slot. delta = 0 removes the
// drift entirely (greedy). quadratic_drift = false drops the w^2/2 term.
struct StoragePolicy {
    double delta = 0.04;
    double epsilon = 0.0;
    double extra_curvature = 0.0;  // adds this * w^2
    bool quadratic_drift = true;
    StorageRule rule = StorageRule::Continuous;
    // Support-point action chosen before trading starts; the iterations then
    // treat it as given.
    std::optional<double> committed;

    [[nodiscard]] double curvature() const { return (quadratic_drift ? delta : 0.0) + 2.0 * extra_curvature; }
    // Linear coefficient of the drift term: delta*(kappa*S + eps).
    [[nodiscard]] double linear(const ProsumerParams& prm, double soc) const {
        return delta * (prm.kappa * soc + epsilon);
    }
};

// Drift, extra penalty and operating cost of one ESS action.
[[nodiscard]] double storage_cost(const StoragePolicy& pol, const ProsumerParams& prm, double soc, double w);

// Feasible ESS interval from the action box and SoC headroom.
[[nodiscard]] std::pair<double, double> storage_box(const ProsumerParams& prm, double soc);

enum class BalanceMode {
    ExactLocal,  // each prosumer solves its Sp1 exactly, balance enforced
    DualAscent,  // closed forms plus projected ascent on mu and rho_p
};

struct AdmmConfig {
    double eta = 12.0;
    double tau_p = 0.1;
    double tau_u = 0.1;
    double tau_v = 50.0;
    double tau_P = 0.5;
    double tau_Q = 0.5;
    double tau_w = 0.5;
    double tol = 1e-3;
    double network_tol = 1e-9;  // stop only once v, P, Q are inside their boxes to this amount
    int k_max = 2000;
    bool warm_start = false;
    BalanceMode balance = BalanceMode::ExactLocal;
};

void validate(const AdmmConfig& c);

struct DualState {
    Eigen::MatrixXd h;  // h(i, j) shadow price held by i for pair (i, j)
    Eigen::MatrixXd u;
    Eigen::VectorXd mu;
    Eigen::VectorXd rho_p_up, rho_p_lo;
    Eigen::VectorXd rho_w_up, rho_w_lo;
    Eigen::VectorXd rho_v_up, rho_v_lo;
    Eigen::VectorXd rho_P_up, rho_P_lo;
    Eigen::VectorXd rho_Q_up, rho_Q_lo;

    static DualState zeros(int n);
    [[nodiscard]] double min_multiplier() const;
};

struct NetworkPriceSignal {
    Eigen::VectorXd R;
};

struct ConvergenceRecord {
    std::vector<double> residual;
    int iterations = 0;
    bool converged = false;
    double network_violation = 0.0;
    // Agent runtime only: wall time if every agent had its own processor, the
    // sum over rounds of the slowest agent plus the utility. Excludes transport.
    double critical_path_s = 0.0;
};

// Everything a clearing round needs for one slot. Pointers are borrowed.
struct SlotProblem {
    const NetworkTopology* topology = nullptr;
    const SensitivityMatrices* sens = nullptr;
    const NetworkLimits* limits = nullptr;
    const LossModel* losses = nullptr;
    std::vector<ProsumerParams> params;
    SlotState state;
    MarketRegistry registry;
    Eigen::VectorXd soc;
    std::vector<StoragePolicy> policy;
    double slot_hours = 1.0;

    [[nodiscard]] int size() const { return static_cast<int>(params.size()); }
    [[nodiscard]] Eigen::VectorXd reactive_ratios() const;
};

void validate(const SlotProblem& sp);

// --- closed-form updates ---------------------------------------------------

// Trade with one partner; projected onto the role's sign half-line.
[[nodiscard]] double update_trade(Role role, const ProsumerParams& prm, double price, double mu, double h, double u,
                                  double eta, double loss_g = 0.0);
[[nodiscard]] Eigen::VectorXd update_trades(int i, const SlotProblem& sp, const DualState& duals, double eta);

// w from the two printed branches, clipped to the action box.
[[nodiscard]] double update_storage(Role role, const ProsumerParams& prm, const StoragePolicy& pol, double soc,
                                    double price, double mu, double rho_w_up, double rho_w_lo);

[[nodiscard]] double update_injection(Role role, const ProsumerParams& prm, double pv, double demand, double price,
                                      double mu, double rho_p_up, double rho_p_lo, double R);

[[nodiscard]] std::pair<double, double> update_auxiliary(double e_ij, double e_ji, double h_ij, double h_ji,
                                                         double eta);

// Side ascent for h_ij: h_ij + eta*(u_ij - e_ij).
[[nodiscard]] double price_ascent(double h, double u, double e, double eta);
// Consensus value stored on both sides after each side's ascent.
[[nodiscard]] double update_prices(double h_ij, double h_ji, double u_ij, double e_ij, double u_ji, double e_ji,
                                   double eta);

// Balance residual whose sign mu reacts to: buyer sum(e)+w-p, seller p-sum(e)-w.
[[nodiscard]] double balance_residual(Role role, double sum_e, double w, double p);
[[nodiscard]] double update_mu(double mu, double residual, double tau_u);
[[nodiscard]] std::pair<double, double> update_rho_p(double up, double lo, double p, double pv, double d_min,
                                                     double d_max, double tau_p);
[[nodiscard]] std::pair<double, double> update_rho_box(double up, double lo, double value, double vmin, double vmax,
                                                       double tau);

// Projected ascent on the utility-held v, P, Q multipliers. Violations are
// scaled by the slot length so the step acts on per-slot energy and the loop
// gain does not grow as slots get shorter.
void update_network_duals(DualState& duals, const FlowState& flow, const NetworkLimits& limits,
                          const AdmmConfig& config, double slot_hours = 1.0);

[[nodiscard]] NetworkPriceSignal compute_network_price(const SensitivityMatrices& sens, const DualState& duals,
                                                       const Eigen::VectorXd& reactive_ratios);

// Pairs (i, j) with j in N_i, both orders counted.
[[nodiscard]] double residual(const MarketRegistry& reg, const Eigen::MatrixXd& e, const Eigen::MatrixXd& u,
                              const Eigen::MatrixXd& u_prev);

// --- exact local sub-problem -----------------------------------------------

struct LocalProblem {
    Role role = Role::Neutral;
    ProsumerParams prm;
    StoragePolicy policy;
    double soc = 0.0;
    double pv = 0.0;
    double demand = 0.0;
    double price_buy = 0.0;
    double price_sell = 0.0;
    double network_price = 0.0;
    double eta = 12.0;
    std::vector<double> h, u, loss;  // one entry per partner
};

struct LocalSolution {
    std::vector<double> e;
    double p = 0.0;
    double w = 0.0;
    double marginal = 0.0;  // price of one more kWh at the prosumer's meter
    double mu = 0.0;
    bool feasible = true;
};

// Minimizes the prosumer's augmented Lagrangian with the balance, sign, demand
// and ESS constraints held exactly.
[[nodiscard]] LocalSolution solve_local(const LocalProblem& lp);

// Augmented Lagrangian of the local problem; +inf if the balance sign is broken.
[[nodiscard]] double local_lagrangian(const LocalProblem& lp, const std::vector<double>& e, double p, double w);

[[nodiscard]] LocalProblem make_local_problem(int i, const SlotProblem& sp, const DualState& duals, double R_i,
                                              double eta);

// What prosumer i knows about a slot: its own data, public tariffs and its
// partner list. Nothing about other prosumers.
struct ProsumerView {
    int id = 0;
    Role role = Role::Neutral;
    ProsumerParams prm;
    StoragePolicy policy;
    double soc = 0.0;
    double pv = 0.0;
    double demand = 0.0;
    double price_buy = 0.0;
    double price_sell = 0.0;
    std::vector<int> partners;
    std::vector<double> loss;  // per partner
};

// Rows of the pairwise duals owned by one prosumer, indexed by prosumer id,
// plus its scalar multipliers.
struct LocalDuals {
    Eigen::VectorXd h, u;
    double mu = 0.0;
    double rho_p_up = 0.0, rho_p_lo = 0.0;
    double rho_w_up = 0.0, rho_w_lo = 0.0;
};

[[nodiscard]] ProsumerView make_view(int i, const SlotProblem& sp);
[[nodiscard]] LocalDuals extract_local_duals(int i, const DualState& duals);
void store_local_duals(int i, const LocalDuals& local, DualState& duals);

// One Sp1 step for one prosumer; updates its own multipliers.
[[nodiscard]] LocalSolution sp1_update(const ProsumerView& view, LocalDuals& duals, double R_i,
                                       const AdmmConfig& config);

// Sp2 and Sp3 as seen from i for partner j; sets duals.u[j] and duals.h[j].
void pair_update(LocalDuals& duals, int j, double e_ij, double e_ji, double h_ji, double eta);

// Squared residual terms of the pairs i holds. residual() is the square
// root of the sum of these in prosumer order.
[[nodiscard]] double residual_contribution(const std::vector<double>& e_out, const std::vector<double>& e_in,
                                           const std::vector<double>& u, const std::vector<double>& u_prev);

// Network price in the units a prosumer's per-slot injection sees.
[[nodiscard]] Eigen::VectorXd network_price_per_slot(const SlotProblem& sp, const DualState& duals);

// Ranks non-converged iterates: max of residual and network excursion,
// each relative to its tolerance.
[[nodiscard]] double iterate_score(double residual, double violation, const AdmmConfig& config);

// --- slot solve ------------------------------------------------------------

struct SlotSolution {
    Decision decision;
    DualState duals;
    ConvergenceRecord record;
    NetworkPriceSignal price;
    FlowState flows;
    double objective = 0.0;  // drift-plus-cost value
    double cost = 0.0;       // economic cost only
};

// Drift-plus-cost value of a decision for this slot.
[[nodiscard]] double slot_objective(const SlotProblem& sp, const Decision& d);

// Flows for an injection vector given in kWh per slot.
[[nodiscard]] FlowState slot_flows(const SlotProblem& sp, const Eigen::VectorXd& p_kwh);

[[nodiscard]] SlotSolution solve_slot(const SlotProblem& sp, const AdmmConfig& config,
                                      const DualState* warm = nullptr);

// Builds a decision from per-prosumer local solutions and fills the grid
// exchange and realized demand.
[[nodiscard]] Decision assemble_decision(const SlotProblem& sp, const std::vector<LocalSolution>& local);

}  // namespace p2pm
