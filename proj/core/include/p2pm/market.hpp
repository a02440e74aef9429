#pragma once

#include "p2pm/network.hpp"

#include <Eigen/Dense>

#include <utility>
#include <vector>

namespace p2pm {

// Prosumer i sits at bus i+1. Prices in cents, energy in kWh.
struct ProsumerParams {
    int bus = 1;
    double alpha = 0.0;   // cents/kWh^2
    double beta = 0.0;    // cents/kWh
    double gamma = 3.0;   // cents/kWh^2
    double xi = 0.0;      // cents/kWh of ESS throughput
    double kappa = 1.0;
    double soc_min = 0.0;
    double soc_max = 5.0;
    double w_min = -2.0;
    double w_max = 2.0;
    double reactive_ratio = 0.0;
    double d_min_frac = 0.5;
    double d_max_frac = 1.5;
};

// Throws ConfigError on the first broken invariant.
void validate(const ProsumerParams& p);

struct SlotState {
    int t = 0;
    Eigen::VectorXd pv;      // g, kWh
    Eigen::VectorXd demand;  // preferred d, kWh
    double price_sell = 0.0; // lambda_s
    double price_buy = 0.0;  // lambda_b
};

void validate(const SlotState& s, int prosumer_count);

enum class Role { Buyer, Seller, Neutral };

[[nodiscard]] const char* to_string(Role r);

struct MarketRegistry {
    std::vector<Role> role;
    std::vector<int> buyers;
    std::vector<int> sellers;
    std::vector<std::vector<int>> partners;

    [[nodiscard]] int size() const { return static_cast<int>(role.size()); }
    [[nodiscard]] bool active() const { return !buyers.empty() && !sellers.empty(); }
    [[nodiscard]] int pair_count() const { return static_cast<int>(buyers.size() * sellers.size()); }
};

[[nodiscard]] MarketRegistry classify_roles(const SlotState& state);

struct Decision {
    Eigen::MatrixXd e;  // e(i, j): energy i receives from (< 0) or sends to (> 0) j
    Eigen::VectorXd p;  // net injection, kWh per slot
    Eigen::VectorXd w;  // ESS action, + charges
    Eigen::VectorXd grid_buy;
    Eigen::VectorXd grid_sell;
    Eigen::VectorXd demand;  // realized d

    static Decision zeros(int n);
    [[nodiscard]] double traded_energy() const;  // total sold peer-to-peer
};

// Grid exchange implied by the balance equations. Neutral prosumers may
// exchange in either direction.
[[nodiscard]] std::pair<Eigen::VectorXd, Eigen::VectorXd> power_balance(const Decision& d,
                                                                        const MarketRegistry& reg);

struct LossModel {
    double tau = 0.0;
    Eigen::VectorXd impedance;  // |Z_l| per line row
    Eigen::MatrixXd g;          // pairwise cost, prosumer-indexed
};

[[nodiscard]] LossModel build_loss_model(const NetworkTopology& topology, double tau);

// Partial objective of one prosumer; grid terms use the [.]+ operator on the balance.
[[nodiscard]] double prosumer_objective(int i, const Decision& d, const SlotState& s, const ProsumerParams& prm,
                                        const MarketRegistry& reg, const LossModel* losses = nullptr);

[[nodiscard]] double objective(const Decision& d, const SlotState& s, const std::vector<ProsumerParams>& params,
                               const MarketRegistry& reg, const LossModel* losses = nullptr);

// Demand box in injection form: g - d_max <= p <= g - d_min.
[[nodiscard]] std::pair<double, double> injection_box(const ProsumerParams& prm, double pv, double demand);

}  // namespace p2pm
