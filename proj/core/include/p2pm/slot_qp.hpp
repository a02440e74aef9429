#pragma once

#include "p2pm/admm.hpp"
#include "p2pm/qp.hpp"

#include <utility>
#include <vector>

namespace p2pm {

// Variable map of one slot inside a QP. One trade variable x >= 0 per
// (buyer, seller) pair with e(s, b) = x and e(b, s) = -x. The ESS action is
// split as w = w_plus - w_minus so the throughput cost stays linear.
struct SlotQpLayout {
    int offset = 0;
    std::vector<std::pair<int, int>> pairs;  // (buyer, seller)
    std::vector<int> pair_idx;
    std::vector<int> p_idx, wp_idx, wm_idx;
    std::vector<int> y_idx;  // neutral grid purchase, -1 otherwise
    int end = 0;
};

struct SlotQpOptions {
    bool drift = true;     // include the Lyapunov drift terms of the policy
    bool headroom = true;  // w box narrowed by SoC headroom
    bool network = true;   // v, P, Q boxes as linear rows
    const Eigen::VectorXd* fixed_w = nullptr;
};

struct SlotQp {
    QpProblem qp;
    SlotQpLayout layout;
};

[[nodiscard]] SlotQp build_slot_qp(const SlotProblem& sp, const SlotQpOptions& opt = {});

[[nodiscard]] Decision decode_slot(const SlotProblem& sp, const SlotQpLayout& layout, const Eigen::VectorXd& x);

// Whole horizon with S_{t+1} = kappa*S_t + w_t as equalities; no drift.
struct HorizonQp {
    QpProblem qp;
    std::vector<SlotQpLayout> slots;
    std::vector<std::vector<int>> soc_idx;  // soc_idx[t][i] holds S_{t+1}
};

// Each slot's soc field is ignored except slots[0].soc, the initial state.
[[nodiscard]] HorizonQp build_horizon_qp(const std::vector<SlotProblem>& slots, bool network = true);

[[nodiscard]] std::vector<Decision> decode_horizon(const std::vector<SlotProblem>& slots, const HorizonQp& hq,
                                                   const Eigen::VectorXd& x);

}  // namespace p2pm
