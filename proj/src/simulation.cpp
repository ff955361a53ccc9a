#include "peertrade/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string_view>

#include "peertrade/errors.hpp"

namespace peertrade {

PriceSchedule PriceBook::at(int slot) const {
    auto pick = [slot](const std::vector<double>& v) {
        return v.size() == 1 ? v.front() : v.at(static_cast<std::size_t>(slot));
    };
    PriceSchedule s;
    s.grid_buy = pick(grid_buy);
    s.grid_sell = pick(grid_sell);
    s.beta = beta;
    s.degradation = degradation;
    s.scaling = scaling;
    return s;
}

void PriceBook::validate(int slots) const {
    const auto n = static_cast<std::size_t>(slots);
    for (const auto* v : {&grid_buy, &grid_sell})
        if (v->size() != 1 && v->size() != n)
            throw ValidationError("price series must have 1 entry or one per slot");
    for (int t = 0; t < slots; ++t) at(t).validate();
}

void SimulationConfig::validate() const {
    if (slots_per_day < 1) throw ValidationError("slots_per_day must be >= 1");
    if (roster.empty()) throw ValidationError("roster must not be empty");
    for (const auto& cfg : roster) cfg.validate();
    std::vector<std::string> ids;
    for (const auto& cfg : roster) ids.push_back(cfg.id);
    std::sort(ids.begin(), ids.end());
    if (std::adjacent_find(ids.begin(), ids.end()) != ids.end())
        throw ValidationError("duplicate prosumer id in roster");
    prices.validate(slots_per_day);
    limits.validate();
}

namespace {

void check_coverage(const SimulationConfig& config, const ReadingsSeries& readings) {
    for (const auto& cfg : config.roster) {
        auto it = readings.find(cfg.id);
        if (it == readings.end())
            throw DataError(DataError::Kind::MissingReading,
                            "no readings for prosumer " + cfg.id);
        if (it->second.size() < static_cast<std::size_t>(config.slots_per_day))
            throw DataError(DataError::Kind::MissingReading,
                            "prosumer " + cfg.id + " has " + std::to_string(it->second.size()) +
                                " readings, needs " + std::to_string(config.slots_per_day));
    }
}

std::map<std::string, SlotReading> slot_slice(const SimulationConfig& config,
                                              const ReadingsSeries& readings, int slot) {
    std::map<std::string, SlotReading> slice;
    for (const auto& cfg : config.roster)
        slice[cfg.id] = readings.at(cfg.id)[static_cast<std::size_t>(slot)];
    return slice;
}

}  // namespace

SimulationRun run_simulation(const SimulationConfig& config, const ReadingsSeries& readings) {
    config.validate();
    check_coverage(config, readings);

    std::map<std::string, BatteryState> batteries;
    for (const auto& cfg : config.roster) batteries[cfg.id] = {cfg.initial_soc_or_default()};

    SimulationRun run;
    Partition previous;  // empty: everyone counts as state 1 before the day starts
    previous.slot = -1;
    for (int t = 0; t < config.slots_per_day; ++t) {
        SlotResult r = form_coalitions_slot(config.roster, batteries, slot_slice(config, readings, t),
                                            config.prices.at(t), config.limits, previous, t,
                                            config.options);
        previous = r.partition;
        run.outcomes.push_back(std::move(r.outcome));
        run.transitions.push_back(std::move(r.transitions));
    }
    return run;
}

SimulationRun fit_baseline(const SimulationConfig& config, const ReadingsSeries& readings) {
    config.validate();
    check_coverage(config, readings);

    std::vector<const ProsumerConfig*> order;
    for (const auto& cfg : config.roster) order.push_back(&cfg);
    std::sort(order.begin(), order.end(),
              [](const ProsumerConfig* a, const ProsumerConfig* b) { return a->id < b->id; });

    std::map<std::string, BatteryState> batteries;
    for (const auto& cfg : config.roster) batteries[cfg.id] = {cfg.initial_soc_or_default()};

    SimulationRun run;
    for (int t = 0; t < config.slots_per_day; ++t) {
        const PriceSchedule schedule = config.prices.at(t);
        const MidPrices mid = mid_market_prices(schedule);

        SlotOutcome out;
        out.slot = t;
        out.schedule = schedule;
        out.prices.discharge_mid = mid.discharge;
        out.prices.charge_mid = mid.charge;
        out.partition.slot = t;

        TransitionLog log;
        for (const ProsumerConfig* cfg : order) {
            BatteryState& battery = batteries[cfg->id];
            const SlotReading reading = readings.at(cfg->id)[static_cast<std::size_t>(t)];

            ProsumerOutcome row;
            row.id = cfg->id;
            row.alpha = cfg->alpha;
            row.battery_capacity = cfg->battery_capacity;
            row.soc_min = cfg->soc_min;
            row.pv = reading.pv;
            row.demand = reading.demand;
            row.soc_before = battery.soc;
            row.transfer_cap = effective_transfer_cap(*cfg, config.limits);

            const EnergyBalance bal = settle_slot_energy(*cfg, battery, reading, config.limits);
            row.self_consumption = bal.self_consumption;
            row.charged = bal.charged;
            row.discharged = bal.discharged;
            row.surplus = bal.surplus;
            row.deficit = bal.deficit;
            row.soc_after = battery.soc;
            row.available_capacity = cfg->battery_capacity - battery.soc;
            row.deficit_locked = bal.deficit > 0.0;
            row.no_battery = cfg->battery_capacity <= 0.0;
            row.charge_threshold = threshold_charge_price(*cfg, battery, schedule);
            row.discharge_threshold = threshold_discharge_price(*cfg, battery, schedule);

            std::tie(row.utility, row.cost) = state1_settlement(bal.surplus, bal.deficit, schedule);
            row.net_benefit = row.utility - row.cost;

            out.partition.state1.push_back(cfg->id);
            log.push_back({cfg->id, ProsumerState::State1, ProsumerState::State1,
                           {TransitionAction::Stay}});
            out.prosumers.push_back(std::move(row));
        }
        run.outcomes.push_back(std::move(out));
        run.transitions.push_back(std::move(log));
    }
    return run;
}

ComparisonReport compare(const SimulationRun& p2p, const SimulationRun& fit) {
    if (p2p.outcomes.size() != fit.outcomes.size())
        throw ValidationError("compare: runs cover different slot counts");

    ComparisonReport report;
    bool first = true;
    for (std::size_t t = 0; t < p2p.outcomes.size(); ++t) {
        const SlotOutcome& a = p2p.outcomes[t];
        const SlotOutcome& b = fit.outcomes[t];
        if (a.prosumers.size() != b.prosumers.size())
            throw ValidationError("compare: runs cover different rosters");
        for (std::size_t i = 0; i < a.prosumers.size(); ++i) {
            const ProsumerOutcome& pa = a.prosumers[i];
            const ProsumerOutcome& pb = b.prosumers[i];
            if (pa.id != pb.id) throw ValidationError("compare: runs cover different rosters");

            ComparisonRow row{a.slot, pa.id, pa.net_benefit, pb.net_benefit,
                              pa.net_benefit - pb.net_benefit};
            report.daily_p2p[pa.id] += row.p2p_net;
            report.daily_fit[pa.id] += row.fit_net;
            report.daily_delta[pa.id] += row.delta;
            if (first || row.delta < report.min_delta) report.min_delta = row.delta;
            first = false;
            if (row.delta < -1e-9) report.violations.push_back(row);
            report.battery_trace.push_back({a.slot, pa.id, pa.charged, pa.discharged, pa.traded});
            report.rows.push_back(std::move(row));
        }
    }
    return report;
}

namespace {

std::uint64_t splitmix64(std::uint64_t& x) {
    x += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

// Small deterministic stream so generated data does not depend on the
// platform's distribution implementations.
struct Stream {
    std::uint64_t state;
    double u01() { return static_cast<double>(splitmix64(state) >> 11) * 0x1.0p-53; }
    double range(double lo, double hi) { return lo + (hi - lo) * u01(); }
};

double bell(double x, double center, double width) {
    const double z = (x - center) / width;
    return std::exp(-0.5 * z * z);
}

}  // namespace

ReadingsSeries gen_synthetic_readings(const std::vector<ProsumerConfig>& roster, int slots,
                                      std::uint64_t seed, double pv_scale) {
    if (slots < 1) throw ValidationError("gen_synthetic_readings: slots must be >= 1");
    if (!(pv_scale >= 0.0)) throw ValidationError("gen_synthetic_readings: pv_scale must be >= 0");

    ReadingsSeries series;
    for (const auto& cfg : roster) {
        if (cfg.id.empty()) throw ValidationError("gen_synthetic_readings: empty prosumer id");
        Stream rng{seed ^ fnv1a(cfg.id)};
        rng.u01();  // decouple the state from the raw seed xor

        const double pv_peak = rng.range(0.8, 1.6);
        const double pv_center = rng.range(12.2, 13.8);
        const double pv_width = rng.range(2.0, 3.0);
        const double base_load = rng.range(0.05, 0.15);
        const double morning_peak = rng.range(0.15, 0.45);
        const double morning_center = rng.range(7.0, 8.0);
        const double evening_peak = rng.range(0.25, 0.65);
        const double evening_center = rng.range(18.0, 19.5);

        std::vector<SlotReading>& rows = series[cfg.id];
        rows.reserve(static_cast<std::size_t>(slots));
        for (int t = 0; t < slots; ++t) {
            const double hour = (t + 0.5) * 24.0 / slots;
            double pv = pv_scale * pv_peak * bell(hour, pv_center, pv_width);
            if (pv < 1e-4) pv = 0.0;  // keep nights exactly dark
            const double demand = base_load + morning_peak * bell(hour, morning_center, 1.0) +
                                  evening_peak * bell(hour, evening_center, 1.5) +
                                  rng.range(0.0, 0.05);
            rows.push_back({pv, demand});
        }
    }
    return series;
}

}  // namespace peertrade
