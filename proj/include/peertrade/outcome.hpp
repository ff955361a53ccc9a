#pragma once

#include <string>
#include <vector>

#include "peertrade/model.hpp"
#include "peertrade/pricing.hpp"

namespace peertrade {

// Which coalition each prosumer sits in for one slot: state-1 members keep to
// grid terms, providers and receivers together form the battery market.
struct Partition {
    int slot = 0;
    std::vector<std::string> state1;     // sorted ids
    std::vector<std::string> providers;  // sorted ids
    std::vector<std::string> receivers;  // sorted ids

    // Checks the three sets are disjoint and cover exactly `ids` (sorted).
    void validate(const std::vector<std::string>& ids) const;
    bool in_market(const std::string& id) const;
};

// Everything recorded for one prosumer in one slot. The *_kwh / price fields
// beyond the headline results exist so a stored outcome can be re-audited
// without the original inputs.
struct ProsumerOutcome {
    std::string id;
    ProsumerState state = ProsumerState::State1;       // after balancing
    ProsumerState classified = ProsumerState::State1;  // threshold decision
    bool deficit_locked = false;  // unmet deficit forced state 1
    bool no_battery = false;

    double pv = 0.0;
    double demand = 0.0;
    double self_consumption = 0.0;
    double charged = 0.0;
    double discharged = 0.0;
    double surplus = 0.0;
    double deficit = 0.0;
    double soc_before = 0.0;
    double soc_after = 0.0;
    double available_capacity = 0.0;  // battery_capacity - soc_after
    double transfer_cap = 0.0;

    double alpha = 1.0;
    double battery_capacity = 0.0;
    double soc_min = 0.0;

    double charge_threshold = 0.0;
    double discharge_threshold = 0.0;
    double classified_quantity = 0.0;  // clamped optimum backing `classified`
    double classified_utility = 0.0;

    double traded = 0.0;  // battery energy actually exchanged, kWh
    double utility = 0.0;
    double cost = 0.0;
    double net_benefit = 0.0;  // utility - cost
};

struct SlotOutcome {
    int slot = 0;
    PriceSchedule schedule;
    ClearedPrices prices;
    double alpha_d_used = 0.0;  // provider-side alpha behind prices.discharge_s2
    double alpha_c_used = 0.0;
    std::vector<ProsumerOutcome> prosumers;  // sorted by id
    Partition partition;

    const ProsumerOutcome* find(const std::string& id) const;
};

}  // namespace peertrade
