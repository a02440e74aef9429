#include "p2pm/network.hpp"

#include "p2pm/error.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <sstream>

namespace p2pm {

NetworkTopology make_topology(const std::vector<Line>& lines, double v0, double power_base_kw) {
    if (lines.empty()) throw StructuralError("network has no lines");
    if (!(v0 > 0.0)) throw StructuralError("substation voltage v0 must be positive");
    if (!(power_base_kw > 0.0)) throw StructuralError("power base must be positive");

    int max_bus = 0;
    for (const auto& l : lines) {
        if (l.from < 0 || l.to < 0) throw StructuralError("negative bus index in line list");
        if (l.from == l.to) throw StructuralError("self-loop at bus " + std::to_string(l.from));
        if (!(l.r >= 0.0) || !(l.x >= 0.0))
            throw StructuralError("line " + std::to_string(l.from) + "-" + std::to_string(l.to) +
                                  " has negative impedance");
        max_bus = std::max({max_bus, l.from, l.to});
    }
    const int n = max_bus;
    if (static_cast<int>(lines.size()) != n) {
        std::ostringstream os;
        os << "not radial: " << lines.size() << " lines for " << n + 1 << " buses";
        if (static_cast<int>(lines.size()) > n) os << " (graph contains a cycle)";
        throw StructuralError(os.str());
    }

    std::vector<std::vector<std::pair<int, int>>> adj(n + 1);
    for (int k = 0; k < n; ++k) {
        adj[lines[k].from].push_back({lines[k].to, k});
        adj[lines[k].to].push_back({lines[k].from, k});
    }

    NetworkTopology topo;
    topo.bus_count = n;
    topo.v0 = v0;
    topo.power_base_kw = power_base_kw;
    topo.parent.assign(n + 1, -2);
    topo.depth.assign(n + 1, 0);
    topo.lines.resize(n);
    topo.input_order.assign(n, -1);
    topo.parent[0] = -1;

    std::queue<int> q;
    q.push(0);
    while (!q.empty()) {
        const int b = q.front();
        q.pop();
        for (const auto& [nb, k] : adj[b]) {
            if (topo.parent[nb] != -2) {
                if (nb != topo.parent[b])
                    throw StructuralError("not radial: cycle through bus " + std::to_string(nb));
                continue;
            }
            topo.parent[nb] = b;
            topo.depth[nb] = topo.depth[b] + 1;
            topo.bfs_order.push_back(nb);
            topo.lines[nb - 1] = Line{b, nb, lines[k].r, lines[k].x};
            topo.input_order[nb - 1] = k;
            q.push(nb);
        }
    }
    std::vector<int> unreached;
    for (int b = 1; b <= n; ++b)
        if (topo.parent[b] == -2) unreached.push_back(b);
    if (!unreached.empty()) {
        std::ostringstream os;
        os << "network is disconnected from the substation; unreachable buses:";
        for (int b : unreached) os << ' ' << b;
        throw StructuralError(os.str());
    }

    topo.r.resize(n);
    topo.x.resize(n);
    topo.H = Eigen::MatrixXd::Zero(n, n);
    for (int l = 0; l < n; ++l) {
        topo.r[l] = topo.lines[l].r;
        topo.x[l] = topo.lines[l].x;
        topo.H(l, l) = -1.0;
        if (topo.lines[l].from != 0) topo.H(l, topo.lines[l].from - 1) = 1.0;
    }

    // Forward substitution along the tree: column b of H^{-1} collects -1 at
    // every line on the path from the substation down to bus b.
    topo.H_inv = Eigen::MatrixXd::Zero(n, n);
    for (int b : topo.bfs_order) {
        for (int a = b; a != 0; a = topo.parent[a]) topo.H_inv(b - 1, a - 1) = -1.0;
    }
    return topo;
}

SensitivityMatrices build_sensitivity(const NetworkTopology& topology, const Eigen::VectorXd& reactive_ratios) {
    const int n = topology.bus_count;
    if (topology.H_inv.rows() != n || topology.H_inv.cols() != n)
        throw StructuralError("topology has no valid incidence inverse");
    if (reactive_ratios.size() != n)
        throw DimensionError("reactive ratio vector has " + std::to_string(reactive_ratios.size()) +
                             " entries, expected " + std::to_string(n));
    SensitivityMatrices s;
    s.B = topology.H_inv.transpose();
    const Eigen::MatrixXd Hr = topology.H_inv * topology.r.asDiagonal();
    const Eigen::MatrixXd Hx = topology.H_inv * topology.x.asDiagonal();
    s.Z = (2.0 * Hr * s.B + 2.0 * Hx * s.B * reactive_ratios.asDiagonal()) / topology.power_base_kw;
    return s;
}

FlowState evaluate_flows(const SensitivityMatrices& sens, const NetworkTopology& topology, const Eigen::VectorXd& p,
                         const Eigen::VectorXd& reactive_ratios) {
    const int n = topology.bus_count;
    if (p.size() != n || reactive_ratios.size() != n)
        throw DimensionError("injection vector has " + std::to_string(p.size()) + " entries, expected " +
                             std::to_string(n));
    FlowState f;
    f.p = p;
    f.q = reactive_ratios.cwiseProduct(p);
    f.P = sens.B * f.p;
    f.Q = sens.B * f.q;
    f.v = Eigen::VectorXd::Constant(n, topology.v0) + sens.Z * f.p;
    return f;
}

NetworkLimits uniform_limits(int bus_count, double v_min_pu, double v_max_pu, double p_max_kw, double q_max_kvar) {
    NetworkLimits lim;
    lim.P_min = Eigen::VectorXd::Constant(bus_count, -p_max_kw);
    lim.P_max = Eigen::VectorXd::Constant(bus_count, p_max_kw);
    lim.Q_min = Eigen::VectorXd::Constant(bus_count, -q_max_kvar);
    lim.Q_max = Eigen::VectorXd::Constant(bus_count, q_max_kvar);
    lim.v_min = Eigen::VectorXd::Constant(bus_count, v_min_pu * v_min_pu);
    lim.v_max = Eigen::VectorXd::Constant(bus_count, v_max_pu * v_max_pu);
    return lim;
}

void validate(const NetworkLimits& lim, int n) {
    const Eigen::VectorXd* all[] = {&lim.P_min, &lim.P_max, &lim.Q_min, &lim.Q_max, &lim.v_min, &lim.v_max};
    for (const auto* v : all)
        if (v->size() != n) throw DimensionError("network limit vector has wrong length");
    for (int i = 0; i < n; ++i) {
        if (lim.P_min[i] > lim.P_max[i] || lim.Q_min[i] > lim.Q_max[i] || lim.v_min[i] > lim.v_max[i])
            throw ConfigError("network limit min exceeds max at index " + std::to_string(i));
        if (!(lim.v_min[i] > 0.0)) throw ConfigError("v_min must be positive");
    }
}

std::string to_string(Quantity q) {
    switch (q) {
        case Quantity::Voltage: return "voltage";
        case Quantity::ActiveFlow: return "active_flow";
        case Quantity::ReactiveFlow: return "reactive_flow";
    }
    return "unknown";
}

namespace {

template <typename F>
void scan_box(const Eigen::VectorXd& val, const Eigen::VectorXd& lo, const Eigen::VectorXd& hi, F&& on_out) {
    for (Eigen::Index i = 0; i < val.size(); ++i) {
        if (val[i] > hi[i]) on_out(static_cast<int>(i), val[i], hi[i], val[i] - hi[i]);
        else if (val[i] < lo[i]) on_out(static_cast<int>(i), val[i], lo[i], lo[i] - val[i]);
    }
}

}  // namespace

std::vector<Violation> check_limits(const FlowState& flow, const NetworkLimits& limits, double tol) {
    std::vector<Violation> out;
    auto add = [&](Quantity q) {
        return [&out, q, tol](int i, double value, double bound, double excess) {
            if (excess > tol) out.push_back({q, i, value, bound});
        };
    };
    scan_box(flow.v, limits.v_min, limits.v_max, add(Quantity::Voltage));
    scan_box(flow.P, limits.P_min, limits.P_max, add(Quantity::ActiveFlow));
    scan_box(flow.Q, limits.Q_min, limits.Q_max, add(Quantity::ReactiveFlow));
    return out;
}

double max_violation(const FlowState& flow, const NetworkLimits& limits) {
    double worst = 0.0;
    auto track = [&worst](int, double, double, double excess) { worst = std::max(worst, excess); };
    scan_box(flow.v, limits.v_min, limits.v_max, track);
    scan_box(flow.P, limits.P_min, limits.P_max, track);
    scan_box(flow.Q, limits.Q_min, limits.Q_max, track);
    return worst;
}

std::vector<int> path_lines(const NetworkTopology& topology, int a, int b) {
    std::vector<int> up_a, up_b;
    while (a != b) {
        if (topology.depth[a] >= topology.depth[b]) {
            up_a.push_back(a - 1);
            a = topology.parent[a];
        } else {
            up_b.push_back(b - 1);
            b = topology.parent[b];
        }
    }
    up_a.insert(up_a.end(), up_b.rbegin(), up_b.rend());
    return up_a;
}

}  // namespace p2pm
