#include "p2pm/persist.hpp"

#include "p2pm/error.hpp"

#include <nlohmann/json.hpp>

#include <cstdio>
#include <fstream>

namespace p2pm {

namespace fs = std::filesystem;

long Manifest::rows(const std::string& file) const {
    for (const auto& f : files)
        if (f.file == file) return f.rows;
    return -1;
}

namespace {

std::string f6(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", quantize(v));
    return buf;
}

class CsvOut {
public:
    CsvOut(const fs::path& dir, std::string name, const char* header, Manifest& m)
        : name_(std::move(name)), out_(dir / name_, std::ios::binary), manifest_(m) {
        if (!out_) throw ConfigError("cannot write " + (dir / name_).string());
        out_ << header << '\n';
    }
    ~CsvOut() { manifest_.files.push_back({name_, rows_}); }
    CsvOut(const CsvOut&) = delete;
    CsvOut& operator=(const CsvOut&) = delete;

    std::ostream& row() {
        ++rows_;
        return out_;
    }

private:
    std::string name_;
    std::ofstream out_;
    Manifest& manifest_;
    long rows_ = 0;
};

}  // namespace

Manifest persist_results(const RunResult& res, const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw ConfigError("cannot create output directory " + dir.string());
    Manifest m;
    m.dir = dir;
    const int T = res.horizon();
    {
        CsvOut c(dir, "costs.csv",
                 "t,cost,objective,iterations,converged,final_residual,network_violation,traded_kwh,market_active", m);
        for (const auto& s : res.slots)
            c.row() << s.t << ',' << f6(s.cost) << ',' << f6(s.objective) << ',' << s.record.iterations << ','
                    << (s.record.converged ? 1 : 0) << ','
                    << f6(s.record.residual.empty() ? 0.0 : s.record.residual.back()) << ','
                    << f6(s.record.network_violation) << ',' << f6(s.decision.traded_energy()) << ','
                    << (s.market_active ? 1 : 0) << '\n';
    }
    {
        CsvOut c(dir, "decisions.csv", "t,prosumer,role,p,w,grid_buy,grid_sell,demand", m);
        for (const auto& s : res.slots)
            for (Eigen::Index i = 0; i < s.decision.p.size(); ++i)
                c.row() << s.t << ',' << i << ',' << to_string(s.roles[i]) << ',' << f6(s.decision.p[i]) << ','
                        << f6(s.decision.w[i]) << ',' << f6(s.decision.grid_buy[i]) << ','
                        << f6(s.decision.grid_sell[i]) << ',' << f6(s.decision.demand[i]) << '\n';
    }
    {
        CsvOut c(dir, "trades.csv", "t,from,to,e", m);
        for (const auto& s : res.slots)
            for (Eigen::Index i = 0; i < s.decision.e.rows(); ++i)
                for (Eigen::Index j = 0; j < s.decision.e.cols(); ++j)
                    if (s.decision.e(i, j) != 0.0)
                        c.row() << s.t << ',' << i << ',' << j << ',' << f6(s.decision.e(i, j)) << '\n';
    }
    {
        CsvOut c(dir, "soc.csv", "t,prosumer,soc", m);
        for (int t = 0; t <= T && t < res.soc.rows(); ++t)
            for (Eigen::Index i = 0; i < res.soc.cols(); ++i) c.row() << t << ',' << i << ',' << f6(res.soc(t, i)) << '\n';
    }
    {
        CsvOut c(dir, "network.csv", "t,index,v,P,Q", m);
        for (const auto& s : res.slots)
            for (Eigen::Index i = 0; i < s.flows.v.size(); ++i)
                c.row() << s.t << ',' << i << ',' << f6(s.flows.v[i]) << ',' << f6(s.flows.P[i]) << ','
                        << f6(s.flows.Q[i]) << '\n';
    }
    {
        CsvOut c(dir, "convergence.csv", "t,k,residual", m);
        for (const auto& s : res.slots)
            for (size_t k = 0; k < s.record.residual.size(); ++k)
                c.row() << s.t << ',' << (k + 1) << ',' << f6(s.record.residual[k]) << '\n';
    }

    nlohmann::json j;
    j["algorithm"] = tag(res.algorithm);
    j["algorithm_name"] = name(res.algorithm);
    j["horizon"] = T;
    j["slot_hours"] = res.slot_hours;
    j["total_cost"] = quantize(res.total_cost);
    j["time_avg_cost"] = quantize(res.time_avg_cost);
    j["theta"] = quantize(res.theta);
    if (res.guarantee) j["guarantee"] = quantize(*res.guarantee);
    j["messages"] = res.messages;
    for (const auto& f : m.files) j["files"].push_back({{"name", f.file}, {"rows", f.rows}});
    std::ofstream out(dir / "manifest.json", std::ios::binary);
    if (!out) throw ConfigError("cannot write " + (dir / "manifest.json").string());
    out << j.dump(2) << '\n';
    return m;
}

}  // namespace p2pm
