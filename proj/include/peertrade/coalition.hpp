#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "peertrade/model.hpp"
#include "peertrade/outcome.hpp"
#include "peertrade/pricing.hpp"

namespace peertrade {

// Behaviour toggles that deviate from the default settlement rules. Both are
// off unless a scenario asks for them.
struct EngineOptions {
    // Clamp the reported supply/demand price pair into [grid_sell, grid_buy].
    bool clamp_s2_to_band = false;
    // Match state-1 surplus against state-1 deficit at the mid rate and only
    // settle the residual at grid prices (default settles everything at grid
    // prices directly).
    bool state1_matched_volume = false;
};

enum class TransitionAction { Stay, Split, Merge };

// Movement of one prosumer between the state-1 coalition and the market
// coalition relative to the previous slot. A prosumer that changes coalitions
// splits from the old one before merging into the new one.
struct TransitionRecord {
    std::string id;
    ProsumerState previous = ProsumerState::State1;
    ProsumerState current = ProsumerState::State1;
    std::vector<TransitionAction> actions;  // {Stay} or {Split, Merge}
};

using TransitionLog = std::vector<TransitionRecord>;

struct Deviation {
    std::string id;
    ProsumerState alternative = ProsumerState::State1;
    double gain = 0.0;  // $ the prosumer would pick up by switching
};

struct StabilityReport {
    bool is_dhp_stable = true;
    std::vector<Deviation> deviations;
};

// True when every entry of `a` is >= its counterpart in `b` and at least one
// is strictly greater. Key sets must match.
bool pareto_prefers(const std::map<std::string, double>& a,
                    const std::map<std::string, double>& b);

struct BalanceResult {
    std::map<std::string, double> offers;    // adjusted provider quantities
    std::map<std::string, double> requests;  // adjusted receiver quantities
    std::set<std::string> reassigned;        // members whose quantity hit 0
};

// Shrink the heavier side of the market to the lighter one by repeatedly
// subtracting the per-member share of the excess. Quantities never go
// negative and the side totals end equal (within float noise) unless one
// side started empty.
BalanceResult balance_supply_demand(const std::map<std::string, double>& offers,
                                    const std::map<std::string, double>& requests);

struct SlotResult {
    Partition partition;
    SlotOutcome outcome;
    TransitionLog transitions;
};

// Run one slot end to end: self-dispatch every battery, classify everyone
// against the session prices, balance the market sides, price the formed
// coalition, and settle. Battery states update in place (self-dispatch only).
SlotResult form_coalitions_slot(const std::vector<ProsumerConfig>& prosumers,
                                std::map<std::string, BatteryState>& batteries,
                                const std::map<std::string, SlotReading>& readings,
                                const PriceSchedule& schedule, const NetworkLimits& limits,
                                const Partition& previous, int slot,
                                const EngineOptions& options = {});

// Check no prosumer could gain more than `tolerance` by unilaterally taking a
// different state, holding the outcome's session prices fixed. Deficit-locked
// and battery-less prosumers have no alternative and are skipped.
StabilityReport verify_dhp_stability(const SlotOutcome& outcome, const ClearedPrices& prices,
                                     double tolerance = 1e-9);

// Sum of net benefits across the slot.
double social_welfare(const SlotOutcome& outcome);

}  // namespace peertrade
