#include "p2pm/scenario.hpp"

#include "p2pm/error.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

namespace p2pm {

namespace fs = std::filesystem;
using nlohmann::json;

AdmmConfig ScenarioConfig::admm() const {
    AdmmConfig a;
    a.eta = eta;
    a.tol = tol;
    a.k_max = k_max;
    a.warm_start = warm_start;
    return a;
}

Rng::Rng(std::uint64_t seed, std::uint64_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
    engine_.seed(seq);
}

double Rng::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

double quantize(double v) {
    const double q = std::round(v * 1e6) / 1e6;
    return q == 0.0 ? 0.0 : q;  // no negative zero in files
}

namespace {

fs::path resolve(const ScenarioConfig& c, const std::string& f) {
    const fs::path p(f);
    return p.is_absolute() || c.base_dir.empty() ? p : c.base_dir / p;
}

void check_range(const Range& r, const char* what) {
    if (!(r.lo <= r.hi)) throw ConfigError(std::string(what) + " range is empty (min > max)");
}

// --- CSV -------------------------------------------------------------------

struct CsvTable {
    std::string file;
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    std::vector<int> line;  // 1-based source line per row
};

std::vector<std::string> split(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    out.push_back(cur);
    for (auto& f : out) {
        const auto a = f.find_first_not_of(" \t"), b = f.find_last_not_of(" \t");
        f = a == std::string::npos ? std::string() : f.substr(a, b - a + 1);
    }
    return out;
}

CsvTable read_csv(const fs::path& path, const std::vector<std::string>& expected) {
    std::ifstream in(path);
    if (!in) throw ParseError(path.string(), 0, "cannot open file");
    CsvTable t;
    t.file = path.string();
    std::string s;
    int ln = 0;
    while (std::getline(in, s)) {
        ++ln;
        if (s.empty() || s == "\r" || s[0] == '#') continue;
        auto f = split(s);
        if (t.header.empty()) {
            t.header = f;
            if (t.header != expected) {
                std::string want;
                for (const auto& e : expected) want += (want.empty() ? "" : ",") + e;
                throw ParseError(t.file, ln, "expected header '" + want + "'");
            }
            continue;
        }
        if (f.size() != expected.size())
            throw ParseError(t.file, ln,
                             "expected " + std::to_string(expected.size()) + " fields, got " + std::to_string(f.size()));
        t.rows.push_back(std::move(f));
        t.line.push_back(ln);
    }
    if (t.header.empty()) throw ParseError(t.file, ln, "missing header");
    return t;
}

double num(const CsvTable& t, size_t r, size_t c) {
    const std::string& s = t.rows[r][c];
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size() || !std::isfinite(v))
        throw ParseError(t.file, t.line[r], "field '" + t.header[c] + "' is not a number: '" + s + "'");
    return v;
}

int integer(const CsvTable& t, size_t r, size_t c) {
    const double v = num(t, r, c);
    if (v != std::floor(v)) throw ParseError(t.file, t.line[r], "field '" + t.header[c] + "' must be an integer");
    return static_cast<int>(v);
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", quantize(v));
    return buf;
}

std::ofstream open_out(const fs::path& p) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw ConfigError("cannot write " + p.string());
    return out;
}

// --- generators ------------------------------------------------------------

double pv_shape(double h) {
    if (h <= 6.0 || h >= 18.0) return 0.0;
    return std::pow(std::sin(std::numbers::pi * (h - 6.0) / 12.0), 1.2);
}

double load_shape(double h) {
    auto bump = [](double x, double c, double w) { return std::exp(-((x - c) / w) * ((x - c) / w)); };
    return 0.55 + 0.35 * bump(h, 8.0, 1.5) + 0.75 * bump(h, 19.5, 2.0);
}

double slot_hour(const ScenarioConfig& c, int t) {
    return std::fmod((t + 0.5) * c.slot_hours(), 24.0);
}

}  // namespace

void validate(const ScenarioConfig& c) {
    check_range(c.pv_peak_kw, "pv_peak_kw");
    check_range(c.load_kw, "load_kw");
    check_range(c.buyer_alpha, "buyer_alpha");
    check_range(c.buyer_beta, "buyer_beta");
    check_range(c.seller_alpha, "seller_alpha");
    check_range(c.seller_beta, "seller_beta");
    check_range(c.gamma, "gamma");
    check_range(c.soc_max, "soc_max");
    check_range(c.xi, "xi");
    check_range(c.demand_flex, "demand_flex");
    if (c.horizon < 1) throw ConfigError("horizon must be at least one slot");
    if (!(c.slot_minutes > 0.0)) throw ConfigError("slot length must be positive");
    if (c.k_max < 1) throw ConfigError("k_max must be at least 1");
    if (!(c.soc_min_frac >= 0.0 && c.soc_min_frac < 1.0)) throw ConfigError("soc_min_frac must lie in [0, 1)");
    if (!(c.soc_initial_frac >= 0.0 && c.soc_initial_frac <= 1.0))
        throw ConfigError("soc_initial_frac must lie in [0, 1]");
    if (!(c.z_base_ohm > 0.0 && c.power_base_kw > 0.0)) throw ConfigError("base values must be positive");
    if (!(c.price_regular >= c.price_sell && c.price_offpeak >= c.price_sell && c.price_sell >= 0.0))
        throw ConfigError("buy prices must not fall below the sell price");
    if (c.network != "ieee15" && c.network != "radial" && !fs::exists(resolve(c, c.network)))
        throw ConfigError("network file not found: " + resolve(c, c.network).string());
    if (c.network == "radial" && c.radial_prosumers < 1) throw ConfigError("radial network needs a prosumer");
    for (const std::string* f :
         {&c.profiles_file, &c.prices_file, &c.params_file, &c.ess_file, &c.bus_limits_file, &c.line_limits_file})
        if (!f->empty() && !fs::exists(resolve(c, *f)))
            throw ConfigError("referenced file not found: " + resolve(c, *f).string());
}

// --- JSON ------------------------------------------------------------------

namespace {

void put(json& j, const char* k, const Range& r) { j[k] = {r.lo, r.hi}; }

void get(const json& j, const char* k, Range& r) {
    if (!j.contains(k)) return;
    const auto& v = j.at(k);
    if (!v.is_array() || v.size() != 2) throw ConfigError(std::string(k) + " must be a [min, max] pair");
    r.lo = v[0].get<double>();
    r.hi = v[1].get<double>();
}

template <class T>
void get(const json& j, const char* k, T& out) {
    if (j.contains(k)) out = j.at(k).get<T>();
}

}  // namespace

ScenarioConfig parse_config(const std::string& text, const fs::path& base_dir) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError("scenario json", 0, e.what());
    }
    ScenarioConfig c;
    c.base_dir = base_dir;
    try {
        get(j, "name", c.name);
        get(j, "network", c.network);
        get(j, "radial_prosumers", c.radial_prosumers);
        get(j, "z_base_ohm", c.z_base_ohm);
        get(j, "power_base_kw", c.power_base_kw);
        get(j, "v0", c.v0);
        get(j, "profiles_file", c.profiles_file);
        get(j, "pv_peak_kw", c.pv_peak_kw);
        get(j, "load_kw", c.load_kw);
        get(j, "profile_noise", c.profile_noise);
        get(j, "scale_with_size", c.scale_with_size);
        get(j, "prices_file", c.prices_file);
        get(j, "price_offpeak", c.price_offpeak);
        get(j, "price_regular", c.price_regular);
        get(j, "price_sell", c.price_sell);
        get(j, "offpeak_start_hour", c.offpeak_start_hour);
        get(j, "offpeak_end_hour", c.offpeak_end_hour);
        get(j, "params_file", c.params_file);
        get(j, "buyer_alpha", c.buyer_alpha);
        get(j, "buyer_beta", c.buyer_beta);
        get(j, "seller_alpha", c.seller_alpha);
        get(j, "seller_beta", c.seller_beta);
        get(j, "gamma", c.gamma);
        get(j, "ess_file", c.ess_file);
        get(j, "soc_max", c.soc_max);
        get(j, "soc_min_frac", c.soc_min_frac);
        get(j, "kappa", c.kappa);
        get(j, "ess_rate_kw", c.ess_rate_kw);
        get(j, "xi", c.xi);
        get(j, "soc_initial_frac", c.soc_initial_frac);
        get(j, "demand_flex", c.demand_flex);
        get(j, "reactive_ratio", c.reactive_ratio);
        get(j, "bus_limits_file", c.bus_limits_file);
        get(j, "line_limits_file", c.line_limits_file);
        get(j, "v_min", c.v_min);
        get(j, "v_max", c.v_max);
        get(j, "p_max_kw", c.p_max_kw);
        get(j, "q_max_kvar", c.q_max_kvar);
        get(j, "loss_tau", c.loss_tau);
        get(j, "eta", c.eta);
        get(j, "tol", c.tol);
        get(j, "k_max", c.k_max);
        get(j, "warm_start", c.warm_start);
        get(j, "horizon", c.horizon);
        get(j, "slot_minutes", c.slot_minutes);
        get(j, "seed", c.seed);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("scenario json: ") + e.what());
    }
    return c;
}

ScenarioConfig load_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError(path.string(), 0, "cannot open scenario file");
    std::stringstream ss;
    ss << in.rdbuf();
    try {
        return parse_config(ss.str(), path.parent_path());
    } catch (const ParseError& e) {
        throw ParseError(path.string(), 0, e.what());
    }
}

std::string to_json(const ScenarioConfig& c) {
    json j;
    j["name"] = c.name;
    j["network"] = c.network;
    j["radial_prosumers"] = c.radial_prosumers;
    j["z_base_ohm"] = c.z_base_ohm;
    j["power_base_kw"] = c.power_base_kw;
    j["v0"] = c.v0;
    j["profiles_file"] = c.profiles_file;
    put(j, "pv_peak_kw", c.pv_peak_kw);
    put(j, "load_kw", c.load_kw);
    j["profile_noise"] = c.profile_noise;
    j["scale_with_size"] = c.scale_with_size;
    j["prices_file"] = c.prices_file;
    j["price_offpeak"] = c.price_offpeak;
    j["price_regular"] = c.price_regular;
    j["price_sell"] = c.price_sell;
    j["offpeak_start_hour"] = c.offpeak_start_hour;
    j["offpeak_end_hour"] = c.offpeak_end_hour;
    j["params_file"] = c.params_file;
    put(j, "buyer_alpha", c.buyer_alpha);
    put(j, "buyer_beta", c.buyer_beta);
    put(j, "seller_alpha", c.seller_alpha);
    put(j, "seller_beta", c.seller_beta);
    put(j, "gamma", c.gamma);
    j["ess_file"] = c.ess_file;
    put(j, "soc_max", c.soc_max);
    j["soc_min_frac"] = c.soc_min_frac;
    j["kappa"] = c.kappa;
    j["ess_rate_kw"] = c.ess_rate_kw;
    put(j, "xi", c.xi);
    j["soc_initial_frac"] = c.soc_initial_frac;
    put(j, "demand_flex", c.demand_flex);
    j["reactive_ratio"] = c.reactive_ratio;
    j["bus_limits_file"] = c.bus_limits_file;
    j["line_limits_file"] = c.line_limits_file;
    j["v_min"] = c.v_min;
    j["v_max"] = c.v_max;
    j["p_max_kw"] = c.p_max_kw;
    j["q_max_kvar"] = c.q_max_kvar;
    j["loss_tau"] = c.loss_tau;
    j["eta"] = c.eta;
    j["tol"] = c.tol;
    j["k_max"] = c.k_max;
    j["warm_start"] = c.warm_start;
    j["horizon"] = c.horizon;
    j["slot_minutes"] = c.slot_minutes;
    j["seed"] = c.seed;
    return j.dump(2) + "\n";
}

// --- networks --------------------------------------------------------------

std::vector<Line> ieee15_lines() {
    // (from, to) renumbered from the 1-based feeder listing.
    return {
        {0, 1, 1.35309, 1.32349},  {1, 2, 1.17024, 1.14464},  {2, 3, 0.84111, 0.82271},
        {3, 4, 1.52348, 1.02760},  {1, 8, 2.01317, 1.35790},  {8, 9, 1.68671, 1.13770},
        {1, 5, 2.55727, 1.72490},  {5, 6, 1.08820, 0.73400},  {5, 7, 1.25143, 0.84410},
        {2, 10, 1.79553, 1.21110}, {10, 11, 2.44845, 1.65150}, {11, 12, 2.01317, 1.35790},
        {3, 13, 2.23081, 1.50480}, {3, 14, 1.19702, 0.80740},
    };
}

std::vector<Line> radial_lines(int prosumers, std::uint64_t seed) {
    if (prosumers < 1) throw ConfigError("radial network needs at least one prosumer bus");
    Rng rng(seed, 4);
    std::vector<Line> lines;
    for (int b = 1; b <= prosumers; ++b) {
        const int parent = static_cast<int>(rng.next() % static_cast<std::uint64_t>(b));
        const double r = quantize(0.8 + 1.8 * rng.uniform());
        const double x = quantize(r * (0.65 + 0.35 * rng.uniform()));
        lines.push_back({parent, b, r, x});
    }
    return lines;
}

LineFile read_lines_csv(const fs::path& path) {
    const CsvTable t = read_csv(path, {"line", "from", "to", "r_pu", "x_pu"});
    LineFile f;
    for (size_t r = 0; r < t.rows.size(); ++r) {
        const int id = integer(t, r, 0);
        Line l{integer(t, r, 1), integer(t, r, 2), num(t, r, 3), num(t, r, 4)};
        if (l.from < 0 || l.to < 0) throw ParseError(t.file, t.line[r], "bus ids must be nonnegative");
        if (std::find(f.ids.begin(), f.ids.end(), id) != f.ids.end())
            throw ParseError(t.file, t.line[r], "duplicate line " + std::to_string(id));
        f.ids.push_back(id);
        f.lines.push_back(l);
    }
    if (f.lines.empty()) throw ParseError(t.file, 1, "no lines");
    return f;
}

void write_lines_csv(const LineFile& f, const fs::path& path) {
    auto out = open_out(path);
    out << "line,from,to,r_pu,x_pu\n";
    for (size_t k = 0; k < f.lines.size(); ++k) {
        const auto& l = f.lines[k];
        out << f.ids[k] << ',' << l.from << ',' << l.to << ',' << fmt(l.r) << ',' << fmt(l.x) << '\n';
    }
}

// --- scenario --------------------------------------------------------------

Scenario generate_scenario(const ScenarioConfig& cfg) {
    validate(cfg);
    Scenario sc;
    sc.config = cfg;
    const double hours = cfg.slot_hours();
    const int T = cfg.horizon;

    if (cfg.network == "ieee15" || cfg.network == "radial") {
        sc.lines = cfg.network == "ieee15" ? ieee15_lines() : radial_lines(cfg.radial_prosumers, cfg.seed);
        for (auto& l : sc.lines) {
            l.r = quantize(l.r / cfg.z_base_ohm);
            l.x = quantize(l.x / cfg.z_base_ohm);
        }
        for (size_t k = 0; k < sc.lines.size(); ++k) sc.line_ids.push_back(static_cast<int>(k) + 1);
    } else {
        LineFile f = read_lines_csv(resolve(cfg, cfg.network));
        sc.lines = std::move(f.lines);
        sc.line_ids = std::move(f.ids);
    }
    sc.topology = make_topology(sc.lines, cfg.v0, cfg.power_base_kw);
    const int n = sc.topology.bus_count;

    // ESS and static per-prosumer data.
    sc.ess.resize(n);
    sc.soc0.resize(n);
    if (!cfg.ess_file.empty()) {
        const CsvTable t = read_csv(resolve(cfg, cfg.ess_file),
                                    {"bus", "soc_min", "soc_max", "kappa", "w_min", "w_max", "xi", "soc0",
                                     "reactive_ratio", "d_min_frac", "d_max_frac"});
        std::vector<bool> seen(n, false);
        for (size_t r = 0; r < t.rows.size(); ++r) {
            const int i = integer(t, r, 0) - 1;
            if (i < 0 || i >= n) throw ParseError(t.file, t.line[r], "bus out of range");
            if (seen[i]) throw ParseError(t.file, t.line[r], "duplicate bus " + std::to_string(i + 1));
            seen[i] = true;
            auto& p = sc.ess[i];
            p.bus = i + 1;
            p.soc_min = num(t, r, 1);
            p.soc_max = num(t, r, 2);
            p.kappa = num(t, r, 3);
            p.w_min = num(t, r, 4);
            p.w_max = num(t, r, 5);
            p.xi = num(t, r, 6);
            sc.soc0[i] = num(t, r, 7);
            p.reactive_ratio = num(t, r, 8);
            p.d_min_frac = num(t, r, 9);
            p.d_max_frac = num(t, r, 10);
            try {
                validate(p);
            } catch (const ConfigError& e) {
                throw ParseError(t.file, t.line[r], e.what());
            }
        }
        for (int i = 0; i < n; ++i)
            if (!seen[i]) throw ParseError(t.file, 0, "missing bus " + std::to_string(i + 1));
    } else {
        Rng rng(cfg.seed, 1);
        for (int i = 0; i < n; ++i) {
            auto& p = sc.ess[i];
            p.bus = i + 1;
            p.soc_max = quantize(rng.uniform(cfg.soc_max));
            p.soc_min = quantize(cfg.soc_min_frac * p.soc_max);
            p.kappa = cfg.kappa;
            p.w_max = quantize(cfg.ess_rate_kw * hours);
            p.w_min = -p.w_max;
            p.xi = quantize(rng.uniform(cfg.xi));
            p.reactive_ratio = cfg.reactive_ratio;
            p.d_min_frac = cfg.demand_flex.lo;
            p.d_max_frac = cfg.demand_flex.hi;
            sc.soc0[i] = quantize(p.soc_min + cfg.soc_initial_frac * (p.soc_max - p.soc_min));
            validate(p);
        }
    }

    // Profiles.
    sc.slots.resize(T);
    for (int t = 0; t < T; ++t) {
        sc.slots[t].t = t;
        sc.slots[t].pv = Eigen::VectorXd::Zero(n);
        sc.slots[t].demand = Eigen::VectorXd::Zero(n);
    }
    if (!cfg.profiles_file.empty()) {
        const CsvTable tb = read_csv(resolve(cfg, cfg.profiles_file), {"t", "bus", "pv_kwh", "load_kwh"});
        std::vector<int> count(static_cast<size_t>(T) * n, 0);
        for (size_t r = 0; r < tb.rows.size(); ++r) {
            const int t = integer(tb, r, 0), i = integer(tb, r, 1) - 1;
            if (t < 0 || t >= T || i < 0 || i >= n) throw ParseError(tb.file, tb.line[r], "slot or bus out of range");
            const double g = num(tb, r, 2), d = num(tb, r, 3);
            if (g < 0.0 || d < 0.0) throw ParseError(tb.file, tb.line[r], "negative energy");
            sc.slots[t].pv[i] = g;
            sc.slots[t].demand[i] = d;
            ++count[static_cast<size_t>(t) * n + i];
        }
        for (size_t k = 0; k < count.size(); ++k)
            if (count[k] != 1)
                throw ParseError(tb.file, 0, "slot " + std::to_string(k / n) + " bus " + std::to_string(k % n + 1) +
                                                 " appears " + std::to_string(count[k]) + " times");
    } else {
        Rng rng(cfg.seed, 2);
        const double scale = (cfg.scale_with_size && n != 14) ? 14.0 / n : 1.0;
        std::vector<double> cap(n), base(n);
        for (int i = 0; i < n; ++i) {
            cap[i] = scale * rng.uniform(cfg.pv_peak_kw);
            base[i] = scale * rng.uniform(cfg.load_kw);
        }
        for (int t = 0; t < T; ++t) {
            const double h = slot_hour(cfg, t);
            const double cloud = 0.85 + 0.15 * rng.uniform();
            for (int i = 0; i < n; ++i) {
                const double ng = 1.0 + cfg.profile_noise * (2.0 * rng.uniform() - 1.0);
                const double nd = 1.0 + cfg.profile_noise * (2.0 * rng.uniform() - 1.0);
                sc.slots[t].pv[i] = quantize(std::max(cap[i] * pv_shape(h) * cloud * ng, 0.0) * hours);
                sc.slots[t].demand[i] = quantize(std::max(base[i] * load_shape(h) * nd, 0.0) * hours);
            }
        }
    }

    // Tariffs.
    if (!cfg.prices_file.empty()) {
        const CsvTable tb = read_csv(resolve(cfg, cfg.prices_file), {"t", "lambda_buy", "lambda_sell"});
        std::vector<bool> seen(T, false);
        for (size_t r = 0; r < tb.rows.size(); ++r) {
            const int t = integer(tb, r, 0);
            if (t < 0 || t >= T) throw ParseError(tb.file, tb.line[r], "slot out of range");
            if (seen[t]) throw ParseError(tb.file, tb.line[r], "duplicate slot " + std::to_string(t));
            seen[t] = true;
            sc.slots[t].price_buy = num(tb, r, 1);
            sc.slots[t].price_sell = num(tb, r, 2);
            if (!(sc.slots[t].price_buy >= sc.slots[t].price_sell && sc.slots[t].price_sell >= 0.0))
                throw ParseError(tb.file, tb.line[r], "need buy >= sell >= 0");
        }
        for (int t = 0; t < T; ++t)
            if (!seen[t]) throw ParseError(tb.file, 0, "missing slot " + std::to_string(t));
    } else {
        for (int t = 0; t < T; ++t) {
            const double h = slot_hour(cfg, t);
            const bool off = h >= cfg.offpeak_start_hour && h < cfg.offpeak_end_hour;
            sc.slots[t].price_buy = off ? cfg.price_offpeak : cfg.price_regular;
            sc.slots[t].price_sell = cfg.price_sell;
        }
    }

    // Per-slot cost parameters, drawn after the roles are known.
    sc.params.assign(T, sc.ess);
    if (!cfg.params_file.empty()) {
        const CsvTable tb = read_csv(resolve(cfg, cfg.params_file), {"t", "bus", "alpha", "beta", "gamma"});
        std::vector<int> count(static_cast<size_t>(T) * n, 0);
        for (size_t r = 0; r < tb.rows.size(); ++r) {
            const int t = integer(tb, r, 0), i = integer(tb, r, 1) - 1;
            if (t < 0 || t >= T || i < 0 || i >= n) throw ParseError(tb.file, tb.line[r], "slot or bus out of range");
            auto& p = sc.params[t][i];
            p.alpha = num(tb, r, 2);
            p.beta = num(tb, r, 3);
            p.gamma = num(tb, r, 4);
            if (p.alpha < 0.0 || p.beta < 0.0 || !(p.gamma > 0.0))
                throw ParseError(tb.file, tb.line[r], "need alpha, beta >= 0 and gamma > 0");
            ++count[static_cast<size_t>(t) * n + i];
        }
        for (size_t k = 0; k < count.size(); ++k)
            if (count[k] != 1)
                throw ParseError(tb.file, 0, "parameters for slot " + std::to_string(k / n) + " bus " +
                                                 std::to_string(k % n + 1) + " appear " + std::to_string(count[k]) +
                                                 " times");
    } else {
        Rng rng(cfg.seed, 3);
        for (int t = 0; t < T; ++t) {
            const MarketRegistry reg = classify_roles(sc.slots[t]);
            for (int i = 0; i < n; ++i) {
                const double u1 = rng.uniform(), u2 = rng.uniform(), u3 = rng.uniform();
                const bool seller = reg.role[i] == Role::Seller;
                const Range& a = seller ? cfg.seller_alpha : cfg.buyer_alpha;
                const Range& b = seller ? cfg.seller_beta : cfg.buyer_beta;
                auto& p = sc.params[t][i];
                p.alpha = quantize(a.lo + (a.hi - a.lo) * u1);
                p.beta = quantize(b.lo + (b.hi - b.lo) * u2);
                p.gamma = quantize(cfg.gamma.lo + (cfg.gamma.hi - cfg.gamma.lo) * u3);
            }
        }
    }

    Eigen::VectorXd X(n);
    for (int i = 0; i < n; ++i) X[i] = sc.ess[i].reactive_ratio;
    sc.sens = build_sensitivity(sc.topology, X);
    sc.limits = uniform_limits(n, cfg.v_min, cfg.v_max, cfg.p_max_kw, cfg.q_max_kvar);
    if (!cfg.bus_limits_file.empty()) {
        const CsvTable tb = read_csv(resolve(cfg, cfg.bus_limits_file), {"bus", "v_min_pu", "v_max_pu"});
        for (size_t r = 0; r < tb.rows.size(); ++r) {
            const int i = integer(tb, r, 0) - 1;
            if (i < 0 || i >= n) throw ParseError(tb.file, tb.line[r], "bus out of range");
            const double lo = num(tb, r, 1), hi = num(tb, r, 2);
            if (!(lo > 0.0 && lo <= hi)) throw ParseError(tb.file, tb.line[r], "need 0 < v_min <= v_max");
            sc.limits.v_min[i] = lo * lo;
            sc.limits.v_max[i] = hi * hi;
        }
    }
    if (!cfg.line_limits_file.empty()) {
        // Line ids refer to the network file; the topology indexes lines by
        // their downstream bus.
        std::vector<int> row_of(sc.lines.size());
        for (int row = 0; row < n; ++row) row_of[sc.topology.input_order[row]] = row;
        const CsvTable tb = read_csv(resolve(cfg, cfg.line_limits_file),
                                     {"line", "p_min_kw", "p_max_kw", "q_min_kvar", "q_max_kvar"});
        for (size_t r = 0; r < tb.rows.size(); ++r) {
            const int id = integer(tb, r, 0);
            const auto it = std::find(sc.line_ids.begin(), sc.line_ids.end(), id);
            if (it == sc.line_ids.end()) throw ParseError(tb.file, tb.line[r], "unknown line " + std::to_string(id));
            const int row = row_of[static_cast<size_t>(it - sc.line_ids.begin())];
            const double pl = num(tb, r, 1), ph = num(tb, r, 2), ql = num(tb, r, 3), qh = num(tb, r, 4);
            if (pl > ph || ql > qh) throw ParseError(tb.file, tb.line[r], "min exceeds max");
            sc.limits.P_min[row] = pl;
            sc.limits.P_max[row] = ph;
            sc.limits.Q_min[row] = ql;
            sc.limits.Q_max[row] = qh;
        }
    }
    sc.losses = build_loss_model(sc.topology, cfg.loss_tau);
    return sc;
}

Scenario load_scenario(const fs::path& json_path) { return generate_scenario(load_config(json_path)); }

SlotProblem slot_problem(const Scenario& sc, int t, const Eigen::VectorXd& soc) {
    if (t < 0 || t >= sc.horizon()) throw ConfigError("slot index " + std::to_string(t) + " outside the horizon");
    SlotProblem sp;
    sp.topology = &sc.topology;
    sp.sens = &sc.sens;
    sp.limits = &sc.limits;
    sp.losses = sc.loss_model();
    sp.params = sc.params[t];
    sp.state = sc.slots[t];
    sp.registry = classify_roles(sp.state);
    sp.soc = soc;
    sp.policy.assign(sc.size(), StoragePolicy{});
    sp.slot_hours = sc.slot_hours();
    return sp;
}

void edit_storage(Scenario& sc, const std::function<void(ProsumerParams&)>& f) {
    for (int i = 0; i < sc.size(); ++i) {
        auto& e = sc.ess[i];
        f(e);
        validate(e);
        sc.soc0[i] = std::clamp(sc.soc0[i], e.soc_min, e.soc_max);
        for (auto& slot : sc.params) {
            auto& p = slot[i];
            p.soc_min = e.soc_min;
            p.soc_max = e.soc_max;
            p.kappa = e.kappa;
            p.w_min = e.w_min;
            p.w_max = e.w_max;
            p.xi = e.xi;
            p.reactive_ratio = e.reactive_ratio;
            p.d_min_frac = e.d_min_frac;
            p.d_max_frac = e.d_max_frac;
        }
    }
}

void save_scenario(const Scenario& sc, const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw ConfigError("cannot create " + dir.string() + ": " + ec.message());
    const int n = sc.size(), T = sc.horizon();
    ScenarioConfig c = sc.config;
    c.base_dir.clear();
    c.network = "network.csv";
    c.profiles_file = "profiles.csv";
    c.prices_file = "prices.csv";
    c.params_file = "params.csv";
    c.ess_file = "ess.csv";
    c.bus_limits_file = "bus_limits.csv";
    c.line_limits_file = "line_limits.csv";
    write_lines_csv({sc.line_ids, sc.lines}, dir / c.network);
    {
        auto out = open_out(dir / c.profiles_file);
        out << "t,bus,pv_kwh,load_kwh\n";
        for (int t = 0; t < T; ++t)
            for (int i = 0; i < n; ++i)
                out << t << ',' << i + 1 << ',' << fmt(sc.slots[t].pv[i]) << ',' << fmt(sc.slots[t].demand[i]) << '\n';
    }
    {
        auto out = open_out(dir / c.prices_file);
        out << "t,lambda_buy,lambda_sell\n";
        for (int t = 0; t < T; ++t)
            out << t << ',' << fmt(sc.slots[t].price_buy) << ',' << fmt(sc.slots[t].price_sell) << '\n';
    }
    {
        auto out = open_out(dir / c.params_file);
        out << "t,bus,alpha,beta,gamma\n";
        for (int t = 0; t < T; ++t)
            for (int i = 0; i < n; ++i) {
                const auto& p = sc.params[t][i];
                out << t << ',' << i + 1 << ',' << fmt(p.alpha) << ',' << fmt(p.beta) << ',' << fmt(p.gamma) << '\n';
            }
    }
    {
        auto out = open_out(dir / c.ess_file);
        out << "bus,soc_min,soc_max,kappa,w_min,w_max,xi,soc0,reactive_ratio,d_min_frac,d_max_frac\n";
        for (int i = 0; i < n; ++i) {
            const auto& p = sc.ess[i];
            out << i + 1 << ',' << fmt(p.soc_min) << ',' << fmt(p.soc_max) << ',' << fmt(p.kappa) << ',' << fmt(p.w_min)
                << ',' << fmt(p.w_max) << ',' << fmt(p.xi) << ',' << fmt(sc.soc0[i]) << ',' << fmt(p.reactive_ratio)
                << ',' << fmt(p.d_min_frac) << ',' << fmt(p.d_max_frac) << '\n';
        }
    }
    {
        auto out = open_out(dir / c.bus_limits_file);
        out << "bus,v_min_pu,v_max_pu\n";
        for (int i = 0; i < n; ++i)
            out << i + 1 << ',' << fmt(std::sqrt(sc.limits.v_min[i])) << ',' << fmt(std::sqrt(sc.limits.v_max[i]))
                << '\n';
    }
    {
        auto out = open_out(dir / c.line_limits_file);
        out << "line,p_min_kw,p_max_kw,q_min_kvar,q_max_kvar\n";
        for (size_t k = 0; k < sc.lines.size(); ++k) {
            const auto row = static_cast<int>(std::find(sc.topology.input_order.begin(), sc.topology.input_order.end(),
                                                        static_cast<int>(k)) -
                                              sc.topology.input_order.begin());
            out << sc.line_ids[k] << ',' << fmt(sc.limits.P_min[row]) << ',' << fmt(sc.limits.P_max[row]) << ','
                << fmt(sc.limits.Q_min[row]) << ',' << fmt(sc.limits.Q_max[row]) << '\n';
        }
    }
    auto out = open_out(dir / "scenario.json");
    out << to_json(c);
}

}  // namespace p2pm
