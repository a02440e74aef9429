#pragma once

#include "p2pm/admm.hpp"
#include "p2pm/baselines.hpp"
#include "p2pm/scenario.hpp"

#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace p2pm {

enum class MessageKind { TradeProposal, ShadowPrice, Injection, NetworkPrice };

[[nodiscard]] const char* to_string(MessageKind k);

// Agent ids: prosumers are 0..n-1, the utility company is kUtility.
inline constexpr int kUtility = -1;

[[nodiscard]] std::string agent_name(int id);

struct AgentMessage {
    MessageKind kind = MessageKind::TradeProposal;
    int sender = 0;
    int receiver = 0;
    int t = 0;
    int k = 0;
    double value = 0.0;
};

enum class FaultAction { Deliver, Drop, Delay };
using FaultHook = std::function<FaultAction(const AgentMessage&)>;

// In-process transport. Messages posted during a round sit in the outbox
// until the next barrier. A delayed message is held back one barrier.
class MessageBus {
public:
    explicit MessageBus(int prosumers);

    void post(const AgentMessage& m);
    void set_fault_hook(FaultHook hook) { fault_ = std::move(hook); }
    void set_audit(std::ostream* out) { audit_ = out; }

    // Moves pending messages into inboxes; returns what was delivered.
    std::vector<AgentMessage> flush();
    [[nodiscard]] std::vector<AgentMessage> take_inbox(int agent);

    [[nodiscard]] long delivered() const { return delivered_; }

private:
    [[nodiscard]] size_t slot(int agent) const { return static_cast<size_t>(agent + 1); }

    std::vector<AgentMessage> outbox_, delayed_;
    std::vector<std::vector<AgentMessage>> inbox_;
    FaultHook fault_;
    std::ostream* audit_ = nullptr;
    long delivered_ = 0;
};

struct Expectation {
    int receiver;
    int sender;
    MessageKind kind;
};

// Barrier: delivers everything pending and checks that each expected
// message for (t, k) arrived exactly once. Throws ProtocolError naming the
// receiving agent otherwise.
std::vector<AgentMessage> exchange_round(MessageBus& bus, const std::vector<Expectation>& expected, int t, int k);

// One prosumer. It is built from its own view of the slot and learns about
// others only through messages.
class ProsumerAgent {
public:
    ProsumerAgent(ProsumerView view, LocalDuals duals);

    void compute(MessageBus& bus, const AdmmConfig& cfg, int t, int k);
    // Pairwise updates from partner messages; returns the residual terms.
    double absorb(const std::vector<AgentMessage>& inbox, const AdmmConfig& cfg);
    void receive_price(const std::vector<AgentMessage>& inbox);
    void snapshot();

    [[nodiscard]] const ProsumerView& view() const { return view_; }
    [[nodiscard]] const LocalSolution& best() const { return best_; }
    [[nodiscard]] const LocalDuals& best_duals() const { return best_duals_; }
    [[nodiscard]] const LocalSolution& current() const { return current_; }

private:
    ProsumerView view_;
    LocalDuals duals_, best_duals_;
    LocalSolution current_, best_;
    double R_ = 0.0;
    std::vector<double> u_prev_;
};

// Network manager at bus 0: holds the sensitivities and the v, P, Q duals.
class UtilityAgent {
public:
    UtilityAgent(const SlotProblem& sp, DualState duals);

    void publish_prices(MessageBus& bus, int t, int k);
    // Reads injections, updates the network duals and flows.
    void absorb(const std::vector<AgentMessage>& inbox, const AdmmConfig& cfg);
    void snapshot();

    [[nodiscard]] const FlowState& flows() const { return flows_; }
    [[nodiscard]] double violation() const;
    [[nodiscard]] const DualState& best_duals() const { return best_duals_; }
    [[nodiscard]] const FlowState& best_flows() const { return best_flows_; }
    [[nodiscard]] const Eigen::VectorXd& best_price() const { return best_R_; }

private:
    const NetworkTopology* topology_;
    const SensitivityMatrices* sens_;
    const NetworkLimits* limits_;
    Eigen::VectorXd X_;
    double slot_hours_;
    DualState duals_, best_duals_;
    Eigen::VectorXd R_, R_prev_, best_R_;
    FlowState flows_, best_flows_;
};

// Clears one slot with one agent per prosumer plus the utility. Produces the
// same iterates as solve_slot.
[[nodiscard]] SlotSolution run_slot_agents(const SlotProblem& sp, const AdmmConfig& cfg, const DualState* warm,
                                           MessageBus& bus);

struct RunConfig {
    AdmmConfig admm;
    BaselineConfig baseline;
    GapSearch gap_search;
    bool message_passing = true;
    double offline_grid_step = 0.25;
    FaultHook fault;                // negative tests only
    std::ostream* audit = nullptr;  // JSON lines {t,k,agent,kind,to}
};

struct SlotRecord {
    int t = 0;
    Decision decision;
    std::vector<Role> roles;
    double cost = 0.0;
    double objective = 0.0;
    ConvergenceRecord record;
    FlowState flows;
    bool market_active = false;
};

struct RunResult {
    Algorithm algorithm = Algorithm::Greedy;
    double slot_hours = 1.0;
    std::vector<SlotRecord> slots;
    Eigen::MatrixXd soc;  // (T+1) x n
    std::vector<GapResult> gaps;
    double total_cost = 0.0;
    double time_avg_cost = 0.0;
    std::optional<double> guarantee;  // A7 only
    double theta = 0.0;               // [Theta]^+ at the framework parameters
    long messages = 0;
    double critical_path_s = 0.0;  // summed over slots, agent runtime only

    [[nodiscard]] int horizon() const { return static_cast<int>(slots.size()); }
};

// Online algorithms clear slot by slot and carry SoC forward. A6 solves the
// horizon offline; A7 reports A6 plus [Theta]^+. A slot whose result breaks
// an ESS bound aborts with InvariantViolation naming the slot.
[[nodiscard]] RunResult run_horizon(const Scenario& sc, Algorithm algorithm, const RunConfig& config);

void write_audit_line(std::ostream& out, const AgentMessage& m);

}  // namespace p2pm
