#pragma once

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace p2pm {

// Bus 0 is the substation; prosumer buses are 1..N.
struct Line {
    int from = 0;
    int to = 0;
    double r = 0.0;  // p.u.
    double x = 0.0;  // p.u.
};

// Lines are stored oriented away from the substation and indexed by their
// downstream bus: line row l ends at bus l+1. H follows the incidence
// convention (+1 at the starting bus, -1 at the ending bus) with the
// substation column dropped.
struct NetworkTopology {
    int bus_count = 0;
    std::vector<Line> lines;
    double v0 = 1.0;             // squared substation voltage, p.u.^2
    double power_base_kw = 1.0;  // kW per p.u. of power
    Eigen::MatrixXd H;
    Eigen::MatrixXd H_inv;
    Eigen::VectorXd r;  // per line row
    Eigen::VectorXd x;
    std::vector<int> parent;       // parent[bus], parent[0] = -1
    std::vector<int> depth;        // depth[bus], depth[0] = 0
    std::vector<int> bfs_order;    // prosumer buses in breadth-first order
    std::vector<int> input_order;  // input_order[row] = index in the caller's line list
};

// Throws StructuralError when the graph is not a connected radial tree.
[[nodiscard]] NetworkTopology make_topology(const std::vector<Line>& lines, double v0 = 1.0,
                                            double power_base_kw = 1.0);

struct SensitivityMatrices {
    Eigen::MatrixXd Z;  // p.u.^2 per kW
    Eigen::MatrixXd B;  // H^{-T}
};

[[nodiscard]] SensitivityMatrices build_sensitivity(const NetworkTopology& topology,
                                                    const Eigen::VectorXd& reactive_ratios);

struct FlowState {
    Eigen::VectorXd P;  // kW, per line row
    Eigen::VectorXd Q;  // kVAR
    Eigen::VectorXd v;  // p.u.^2, per prosumer bus
    Eigen::VectorXd p;  // kW
    Eigen::VectorXd q;  // kVAR
};

[[nodiscard]] FlowState evaluate_flows(const SensitivityMatrices& sens, const NetworkTopology& topology,
                                       const Eigen::VectorXd& p, const Eigen::VectorXd& reactive_ratios);

struct NetworkLimits {
    Eigen::VectorXd P_min, P_max;
    Eigen::VectorXd Q_min, Q_max;
    Eigen::VectorXd v_min, v_max;  // squared magnitudes
};

// Same box on every line and bus; voltage bounds given as magnitudes.
[[nodiscard]] NetworkLimits uniform_limits(int bus_count, double v_min_pu = 0.95, double v_max_pu = 1.05,
                                           double p_max_kw = 7.0, double q_max_kvar = 7.0);
void validate(const NetworkLimits& limits, int bus_count);

enum class Quantity { Voltage, ActiveFlow, ReactiveFlow };

struct Violation {
    Quantity quantity;
    int index;  // line row or prosumer index (bus - 1)
    double value;
    double bound;
};

[[nodiscard]] std::string to_string(Quantity q);

// A value counts as a violation when it leaves its box by more than tol.
[[nodiscard]] std::vector<Violation> check_limits(const FlowState& flow, const NetworkLimits& limits,
                                                  double tol = 0.0);

// Largest box excursion over v, P and Q; 0 when all are inside.
[[nodiscard]] double max_violation(const FlowState& flow, const NetworkLimits& limits);

// Unique tree path between two buses, as line rows.
[[nodiscard]] std::vector<int> path_lines(const NetworkTopology& topology, int bus_a, int bus_b);

}  // namespace p2pm
