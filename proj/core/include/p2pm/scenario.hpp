#pragma once

#include "p2pm/admm.hpp"
#include "p2pm/market.hpp"
#include "p2pm/network.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

namespace p2pm {

struct Range {
    double lo = 0.0;
    double hi = 0.0;
};

// One JSON document. File fields are resolved against base_dir; an empty
// file field selects the built-in generator for that part.
struct ScenarioConfig {
    std::string name = "scenario";
    std::filesystem::path base_dir;

    // "ieee15", "radial" or a line CSV (line,from,to,r_pu,x_pu). The built-in
    // feeders are tabulated in ohms and divided by z_base_ohm.
    std::string network = "ieee15";
    int radial_prosumers = 33;
    double z_base_ohm = 20.0;
    double power_base_kw = 100.0;
    double v0 = 1.0;

    std::string profiles_file;  // t,bus,pv_kwh,load_kwh
    Range pv_peak_kw{0.1, 1.0};
    Range load_kw{0.25, 0.5};
    double profile_noise = 0.05;
    bool scale_with_size = true;  // per-prosumer power scaled by 14/N on other feeders

    std::string prices_file;  // t,lambda_buy,lambda_sell
    double price_offpeak = 0.8;
    double price_regular = 1.4;
    double price_sell = 0.4;
    double offpeak_start_hour = 0.0;
    double offpeak_end_hour = 6.0;

    std::string params_file;  // t,bus,alpha,beta,gamma
    Range buyer_alpha{0.02, 0.1};
    Range buyer_beta{0.5, 2.0};
    Range seller_alpha{0.1, 0.15};
    Range seller_beta{0.2, 0.6};
    Range gamma{2.5, 3.5};

    std::string ess_file;  // bus,soc_min,soc_max,kappa,w_min,w_max,xi,soc0,reactive_ratio,d_min_frac,d_max_frac
    Range soc_max{5.0, 8.0};
    double soc_min_frac = 0.0;
    double kappa = 0.998;
    double ess_rate_kw = 2.0;
    Range xi{0.01, 0.03};
    double soc_initial_frac = 0.5;
    Range demand_flex{0.5, 1.5};
    double reactive_ratio = 0.2;

    std::string bus_limits_file;   // bus,v_min_pu,v_max_pu
    std::string line_limits_file;  // line,p_min_kw,p_max_kw,q_min_kvar,q_max_kvar
    double v_min = 0.95;
    double v_max = 1.05;
    double p_max_kw = 7.0;
    double q_max_kvar = 7.0;
    double loss_tau = 0.0;

    double eta = 12.0;
    double tol = 1e-3;
    int k_max = 2000;
    bool warm_start = false;

    int horizon = 24;
    double slot_minutes = 60.0;
    std::uint64_t seed = 1;

    [[nodiscard]] double slot_hours() const { return slot_minutes / 60.0; }
    [[nodiscard]] AdmmConfig admm() const;
};

// Throws ConfigError on an empty range or a missing referenced file.
void validate(const ScenarioConfig& c);

[[nodiscard]] ScenarioConfig load_config(const std::filesystem::path& json_path);
[[nodiscard]] ScenarioConfig parse_config(const std::string& json_text, const std::filesystem::path& base_dir = {});
[[nodiscard]] std::string to_json(const ScenarioConfig& c);

struct Scenario {
    ScenarioConfig config;
    std::vector<Line> lines;    // p.u., in file order
    std::vector<int> line_ids;  // id per entry of lines
    NetworkTopology topology;
    SensitivityMatrices sens;
    NetworkLimits limits;
    LossModel losses;
    std::vector<ProsumerParams> ess;                  // per prosumer; alpha, beta, gamma unused
    std::vector<std::vector<ProsumerParams>> params;  // [t][i]
    std::vector<SlotState> slots;
    Eigen::VectorXd soc0;

    [[nodiscard]] int size() const { return topology.bus_count; }
    [[nodiscard]] int horizon() const { return static_cast<int>(slots.size()); }
    [[nodiscard]] double slot_hours() const { return config.slot_hours(); }
    [[nodiscard]] const LossModel* loss_model() const { return config.loss_tau > 0.0 ? &losses : nullptr; }
};

[[nodiscard]] Scenario generate_scenario(const ScenarioConfig& config);
[[nodiscard]] Scenario load_scenario(const std::filesystem::path& json_path);

// Slot t with roles classified and default policies; borrows network data
// from the scenario.
[[nodiscard]] SlotProblem slot_problem(const Scenario& sc, int t, const Eigen::VectorXd& soc);

// Applies f to the storage data of every prosumer and mirrors the result
// into the per-slot parameter copies. soc0 is clamped into the new bounds.
void edit_storage(Scenario& sc, const std::function<void(ProsumerParams&)>& f);

// Writes scenario.json plus CSVs that reproduce sc exactly when loaded.
void save_scenario(const Scenario& sc, const std::filesystem::path& dir);

// Line data of the 15-bus feeder in ohms, buses renumbered so the
// substation is bus 0.
[[nodiscard]] std::vector<Line> ieee15_lines();
// Random recursive tree with the given number of prosumer buses, in ohms.
[[nodiscard]] std::vector<Line> radial_lines(int prosumers, std::uint64_t seed);

struct LineFile {
    std::vector<int> ids;
    std::vector<Line> lines;  // p.u.
};

[[nodiscard]] LineFile read_lines_csv(const std::filesystem::path& path);
void write_lines_csv(const LineFile& file, const std::filesystem::path& path);

// Rounds to the 6-decimal grid used in every CSV.
[[nodiscard]] double quantize(double v);

// mt19937_64 seeded through seed_seq; uniforms are built from the top 53
// bits so streams do not depend on the standard library's distributions.
class Rng {
public:
    Rng(std::uint64_t seed, std::uint64_t stream);
    double uniform();  // [0, 1)
    double uniform(const Range& r) { return r.lo + (r.hi - r.lo) * uniform(); }
    std::uint64_t next() { return engine_(); }

private:
    std::mt19937_64 engine_;
};

}  // namespace p2pm
