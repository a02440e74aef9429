#include "p2pm/runtime.hpp"

#include "p2pm/error.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <map>
#include <tuple>

namespace p2pm {

const char* to_string(MessageKind k) {
    switch (k) {
        case MessageKind::TradeProposal: return "TradeProposal";
        case MessageKind::ShadowPrice: return "ShadowPrice";
        case MessageKind::Injection: return "Injection";
        case MessageKind::NetworkPrice: return "NetworkPrice";
    }
    return "?";
}

std::string agent_name(int id) { return id == kUtility ? "utility" : "prosumer:" + std::to_string(id); }

void write_audit_line(std::ostream& out, const AgentMessage& m) {
    out << "{\"t\":" << m.t << ",\"k\":" << m.k << ",\"agent\":\"" << agent_name(m.sender) << "\",\"kind\":\""
        << to_string(m.kind) << "\",\"to\":\"" << agent_name(m.receiver) << "\"}\n";
}

MessageBus::MessageBus(int prosumers) : inbox_(static_cast<size_t>(prosumers) + 1) {}

void MessageBus::post(const AgentMessage& m) {
    if (m.receiver < kUtility || m.receiver >= static_cast<int>(inbox_.size()) - 1)
        throw ProtocolError(agent_name(m.sender), "message addressed to unknown agent " + std::to_string(m.receiver));
    outbox_.push_back(m);
}

std::vector<AgentMessage> MessageBus::flush() {
    std::vector<AgentMessage> now = std::move(delayed_);
    delayed_.clear();
    for (auto& m : outbox_) {
        const FaultAction a = fault_ ? fault_(m) : FaultAction::Deliver;
        if (a == FaultAction::Drop) continue;
        if (a == FaultAction::Delay) {
            delayed_.push_back(m);
            continue;
        }
        now.push_back(m);
    }
    outbox_.clear();
    for (const auto& m : now) {
        inbox_[slot(m.receiver)].push_back(m);
        if (audit_) write_audit_line(*audit_, m);
    }
    delivered_ += static_cast<long>(now.size());
    return now;
}

std::vector<AgentMessage> MessageBus::take_inbox(int agent) {
    std::vector<AgentMessage> out = std::move(inbox_[slot(agent)]);
    inbox_[slot(agent)].clear();
    return out;
}

std::vector<AgentMessage> exchange_round(MessageBus& bus, const std::vector<Expectation>& expected, int t, int k) {
    std::vector<AgentMessage> got = bus.flush();
    std::map<std::tuple<int, int, int>, int> count;
    for (const auto& m : got) {
        if (m.t != t || m.k != k)
            throw ProtocolError(agent_name(m.receiver), "stale " + std::string(to_string(m.kind)) + " from " +
                                                            agent_name(m.sender) + " (t=" + std::to_string(m.t) +
                                                            ", k=" + std::to_string(m.k) + ") at barrier t=" +
                                                            std::to_string(t) + ", k=" + std::to_string(k));
        ++count[{m.receiver, m.sender, static_cast<int>(m.kind)}];
    }
    for (const auto& e : expected) {
        const auto it = count.find({e.receiver, e.sender, static_cast<int>(e.kind)});
        const int c = it == count.end() ? 0 : it->second;
        if (c == 0)
            throw ProtocolError(agent_name(e.receiver), "barrier timeout at t=" + std::to_string(t) + ", k=" +
                                                            std::to_string(k) + ": " + agent_name(e.receiver) +
                                                            " is missing " + to_string(e.kind) + " from " +
                                                            agent_name(e.sender));
        if (c > 1)
            throw ProtocolError(agent_name(e.receiver), "duplicate " + std::string(to_string(e.kind)) + " from " +
                                                            agent_name(e.sender) + " at t=" + std::to_string(t) +
                                                            ", k=" + std::to_string(k));
    }
    if (got.size() != expected.size())
        throw ProtocolError("utility", "unexpected messages at barrier t=" + std::to_string(t) +
                                           ", k=" + std::to_string(k));
    return got;
}

// --- agents ----------------------------------------------------------------

ProsumerAgent::ProsumerAgent(ProsumerView view, LocalDuals duals)
    : view_(std::move(view)), duals_(std::move(duals)), best_duals_(duals_) {}

void ProsumerAgent::compute(MessageBus& bus, const AdmmConfig& cfg, int t, int k) {
    current_ = sp1_update(view_, duals_, R_, cfg);
    for (size_t q = 0; q < view_.partners.size(); ++q) {
        const int j = view_.partners[q];
        bus.post({MessageKind::TradeProposal, view_.id, j, t, k, current_.e[q]});
        bus.post({MessageKind::ShadowPrice, view_.id, j, t, k, duals_.h[j]});
    }
    bus.post({MessageKind::Injection, view_.id, kUtility, t, k, current_.p});
}

double ProsumerAgent::absorb(const std::vector<AgentMessage>& inbox, const AdmmConfig& cfg) {
    const size_t m = view_.partners.size();
    std::vector<double> e_in(m), h_in(m), u(m), up(m);
    std::map<int, size_t> index;
    for (size_t q = 0; q < m; ++q) index[view_.partners[q]] = q;
    for (const auto& msg : inbox) {
        const auto it = index.find(msg.sender);
        if (it == index.end()) continue;
        if (msg.kind == MessageKind::TradeProposal) e_in[it->second] = msg.value;
        else if (msg.kind == MessageKind::ShadowPrice) h_in[it->second] = msg.value;
    }
    for (size_t q = 0; q < m; ++q) {
        const int j = view_.partners[q];
        up[q] = duals_.u[j];
        pair_update(duals_, j, current_.e[q], e_in[q], h_in[q], cfg.eta);
        u[q] = duals_.u[j];
    }
    return residual_contribution(current_.e, e_in, u, up);
}

void ProsumerAgent::receive_price(const std::vector<AgentMessage>& inbox) {
    for (const auto& msg : inbox)
        if (msg.kind == MessageKind::NetworkPrice && msg.sender == kUtility) R_ = msg.value;
}

void ProsumerAgent::snapshot() {
    best_ = current_;
    best_duals_ = duals_;
}

UtilityAgent::UtilityAgent(const SlotProblem& sp, DualState duals)
    : topology_(sp.topology),
      sens_(sp.sens),
      limits_(sp.limits),
      X_(sp.reactive_ratios()),
      slot_hours_(sp.slot_hours),
      duals_(std::move(duals)) {
    R_ = compute_network_price(*sens_, duals_, X_).R;
    R_prev_ = R_;
}

void UtilityAgent::publish_prices(MessageBus& bus, int t, int k) {
    for (Eigen::Index i = 0; i < R_.size(); ++i)
        bus.post({MessageKind::NetworkPrice, kUtility, static_cast<int>(i), t, k, R_[i]});
}

void UtilityAgent::absorb(const std::vector<AgentMessage>& inbox, const AdmmConfig& cfg) {
    Eigen::VectorXd p = Eigen::VectorXd::Zero(X_.size());
    for (const auto& m : inbox)
        if (m.kind == MessageKind::Injection) p[m.sender] = m.value;
    flows_ = evaluate_flows(*sens_, *topology_, p / slot_hours_, X_);
    update_network_duals(duals_, flows_, *limits_, cfg, slot_hours_);
    R_prev_ = R_;
    R_ = compute_network_price(*sens_, duals_, X_).R;
}

double UtilityAgent::violation() const { return max_violation(flows_, *limits_); }

void UtilityAgent::snapshot() {
    best_duals_ = duals_;
    best_flows_ = flows_;
    best_R_ = R_prev_;
}

SlotSolution run_slot_agents(const SlotProblem& sp, const AdmmConfig& cfg, const DualState* warm, MessageBus& bus) {
    validate(cfg);
    validate(sp);
    const int n = sp.size();
    const int t = sp.state.t;
    const DualState init = (warm && cfg.warm_start) ? *warm : DualState::zeros(n);

    std::vector<ProsumerAgent> agents;
    agents.reserve(n);
    for (int i = 0; i < n; ++i) agents.emplace_back(make_view(i, sp), extract_local_duals(i, init));
    UtilityAgent utility(sp, init);

    std::vector<Expectation> proposals, prices;
    for (int i = 0; i < n; ++i) {
        for (int j : sp.registry.partners[i]) {
            proposals.push_back({i, j, MessageKind::TradeProposal});
            proposals.push_back({i, j, MessageKind::ShadowPrice});
        }
        proposals.push_back({kUtility, i, MessageKind::Injection});
        prices.push_back({i, kUtility, MessageKind::NetworkPrice});
    }

    // Opening price broadcast.
    utility.publish_prices(bus, t, 0);
    exchange_round(bus, prices, t, 0);
    for (auto& a : agents) a.receive_price(bus.take_inbox(a.view().id));

    ConvergenceRecord rec;
    double best_score = std::numeric_limits<double>::infinity();
    using Clock = std::chrono::steady_clock;
    auto elapsed = [](Clock::time_point a) { return std::chrono::duration<double>(Clock::now() - a).count(); };
    for (int k = 1; k <= cfg.k_max; ++k) {
        double slowest = 0.0;
        for (auto& a : agents) {
            const auto c0 = Clock::now();
            a.compute(bus, cfg, t, k);
            slowest = std::max(slowest, elapsed(c0));
        }
        exchange_round(bus, proposals, t, k);

        double acc = 0.0, slowest_absorb = 0.0;
        for (auto& a : agents) {
            auto inbox = bus.take_inbox(a.view().id);
            const auto c0 = Clock::now();
            acc += a.absorb(inbox, cfg);
            slowest_absorb = std::max(slowest_absorb, elapsed(c0));
        }
        auto utility_inbox = bus.take_inbox(kUtility);
        const auto u0 = Clock::now();
        utility.absorb(utility_inbox, cfg);
        rec.critical_path_s += slowest + slowest_absorb + elapsed(u0);
        const double r = std::sqrt(acc);
        const double viol = utility.violation();
        rec.residual.push_back(r);
        rec.iterations = k;
        rec.network_violation = viol;
        const bool done = r <= cfg.tol && viol <= cfg.network_tol;
        const double score = iterate_score(r, viol, cfg);
        if (done || score < best_score || k == 1) {
            best_score = score;
            for (auto& a : agents) a.snapshot();
            utility.snapshot();
        }

        utility.publish_prices(bus, t, k);
        exchange_round(bus, prices, t, k);
        for (auto& a : agents) a.receive_price(bus.take_inbox(a.view().id));
        if (done) {
            rec.converged = true;
            break;
        }
    }

    SlotSolution out;
    std::vector<LocalSolution> local;
    local.reserve(n);
    for (const auto& a : agents) local.push_back(a.best());
    out.decision = assemble_decision(sp, local);
    out.duals = utility.best_duals();
    for (int i = 0; i < n; ++i) store_local_duals(i, agents[i].best_duals(), out.duals);
    out.flows = utility.best_flows();
    out.price.R = utility.best_price();
    out.record = std::move(rec);
    out.record.network_violation = max_violation(out.flows, *sp.limits);
    out.cost = objective(out.decision, sp.state, sp.params, sp.registry, sp.losses);
    out.objective = slot_objective(sp, out.decision);
    return out;
}

// --- horizon ---------------------------------------------------------------

namespace {

Eigen::VectorXd advance_soc(const Scenario& sc, int t, const Eigen::VectorXd& soc, const Eigen::VectorXd& w) {
    Eigen::VectorXd next(soc.size());
    for (Eigen::Index i = 0; i < soc.size(); ++i) {
        if (!std::isfinite(w[i]))
            throw InvariantViolation("slot " + std::to_string(t) + ": prosumer " + std::to_string(i) +
                                     " ESS action is not finite");
        try {
            next[i] = next_soc(sc.ess[i], soc[i], w[i]);
        } catch (const InvariantViolation& e) {
            throw InvariantViolation("slot " + std::to_string(t) + ": prosumer " + std::to_string(i) + ": " +
                                     e.what());
        }
    }
    return next;
}

}  // namespace

RunResult run_horizon(const Scenario& sc, Algorithm algorithm, const RunConfig& cfg) {
    validate(cfg.admm);
    const int n = sc.size(), T = sc.horizon();
    if (T < 1) throw ConfigError("horizon must contain at least one slot");

    RunResult res;
    res.algorithm = algorithm;
    res.slot_hours = sc.slot_hours();
    res.gaps = minimize_gaps(sc.ess, cfg.gap_search);
    const GapBound bound = theta_bound(sc.ess, lyapunov_params(Algorithm::ProposedFramework, res.gaps, cfg.baseline));
    res.theta = bound.clamped();
    res.soc.resize(T + 1, n);
    res.soc.row(0) = sc.soc0.transpose();

    if (!is_online(algorithm)) {
        std::vector<SlotProblem> slots;
        for (int t = 0; t < T; ++t) slots.push_back(slot_problem(sc, t, sc.soc0));
        const OfflineResult off = solve_offline_horizon(slots);
        for (int t = 0; t < T; ++t) {
            SlotRecord r;
            r.t = t;
            r.decision = off.decisions[t];
            r.roles = slots[t].registry.role;
            r.cost = objective(r.decision, slots[t].state, slots[t].params, slots[t].registry, slots[t].losses);
            r.objective = r.cost;
            r.flows = slot_flows(slots[t], r.decision.p);
            r.market_active = slots[t].registry.active();
            r.record.converged = true;
            r.record.network_violation = max_violation(r.flows, sc.limits);
            res.total_cost += r.cost;
            res.slots.push_back(std::move(r));
        }
        res.soc = off.soc;
        res.time_avg_cost = res.total_cost / T;
        if (algorithm == Algorithm::TheoreticalGuarantee) res.guarantee = report_guarantee(res.time_avg_cost, bound);
        return res;
    }

    MessageBus bus(n);
    if (cfg.fault) bus.set_fault_hook(cfg.fault);
    bus.set_audit(cfg.audit);

    Eigen::VectorXd soc = sc.soc0;
    std::optional<DualState> warm;
    for (int t = 0; t < T; ++t) {
        const SlotProblem sp = with_policies(slot_problem(sc, t, soc), algorithm, res.gaps, t, cfg.baseline);
        const DualState* w = warm ? &*warm : nullptr;
        SlotSolution sol = cfg.message_passing ? run_slot_agents(sp, cfg.admm, w, bus) : solve_slot(sp, cfg.admm, w);
        soc = advance_soc(sc, t, soc, sol.decision.w);
        res.soc.row(t + 1) = soc.transpose();

        SlotRecord r;
        r.t = t;
        r.roles = sp.registry.role;
        r.cost = sol.cost;
        r.objective = sol.objective;
        res.critical_path_s += sol.record.critical_path_s;
        r.record = std::move(sol.record);
        r.flows = std::move(sol.flows);
        r.market_active = sp.registry.active();
        r.decision = std::move(sol.decision);
        res.total_cost += r.cost;
        res.slots.push_back(std::move(r));
        if (cfg.admm.warm_start) warm = std::move(sol.duals);
    }
    res.time_avg_cost = res.total_cost / T;
    res.messages = bus.delivered();
    return res;
}

}  // namespace p2pm
