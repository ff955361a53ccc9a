#pragma once

// Shared helpers for the test suites: a small deterministic RNG (so every
// suite replays identically on any platform) and builders for randomized
// instances.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "peertrade/model.hpp"
#include "peertrade/pricing.hpp"

namespace testsupport {

struct Rng {
    std::uint64_t state;

    std::uint64_t next() {
        state += 0x9e3779b97f4a7c15ULL;
        std::uint64_t z = state;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }
    double u01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
    double range(double lo, double hi) { return lo + (hi - lo) * u01(); }
    int index(int n) { return static_cast<int>(next() % static_cast<std::uint64_t>(n)); }
    bool chance(double p) { return u01() < p; }
};

inline peertrade::PriceSchedule random_schedule(Rng& rng) {
    peertrade::PriceSchedule s;
    s.grid_sell = rng.range(0.05, 0.30);
    s.grid_buy = s.grid_sell + rng.range(0.05, 0.40);
    s.beta = rng.range(0.0, 0.30);
    s.degradation = rng.range(0.0, 0.15);
    s.scaling = rng.range(0.02, 1.0);
    return s;
}

inline std::string padded_id(int i) {
    // two digits keep lexical order equal to numeric order for n <= 100
    std::string id = "p";
    if (i < 10) id += '0';
    id += std::to_string(i);
    return id;
}

inline peertrade::ProsumerConfig random_prosumer(Rng& rng, int index) {
    peertrade::ProsumerConfig cfg;
    cfg.id = padded_id(index);
    cfg.battery_capacity = rng.chance(0.15) ? 0.0 : rng.range(2.0, 15.0);
    cfg.alpha = rng.range(0.4, 3.0);
    cfg.soc_min = cfg.battery_capacity * rng.range(0.0, 0.2);
    cfg.rated_rate = rng.range(1.0, 6.0);
    cfg.charge_efficiency = rng.range(0.85, 1.0);
    cfg.initial_soc = cfg.soc_min + (cfg.battery_capacity - cfg.soc_min) * rng.u01();
    return cfg;
}

struct SlotInstance {
    std::vector<peertrade::ProsumerConfig> roster;
    std::map<std::string, peertrade::BatteryState> batteries;
    std::map<std::string, peertrade::SlotReading> readings;
    peertrade::PriceSchedule schedule;
    peertrade::NetworkLimits limits;
};

inline SlotInstance random_slot_instance(Rng& rng, int n) {
    SlotInstance inst;
    inst.schedule = random_schedule(rng);
    inst.limits.transfer_limit = rng.range(1.0, 8.0);
    for (int i = 0; i < n; ++i) {
        peertrade::ProsumerConfig cfg = random_prosumer(rng, i);
        inst.batteries[cfg.id] = {cfg.initial_soc_or_default()};
        inst.readings[cfg.id] = {rng.range(0.0, 2.5), rng.range(0.0, 2.5)};
        inst.roster.push_back(std::move(cfg));
    }
    return inst;
}

}  // namespace testsupport
