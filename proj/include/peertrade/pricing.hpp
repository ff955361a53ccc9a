#pragma once

#include <limits>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "peertrade/model.hpp"

namespace peertrade {

// Tariff and market constants for one slot. grid_buy (p_b) and grid_sell
// (p_s) bound every sane internal price; scaling (k) converts stored-energy
// satisfaction into $ and degradation (p_l) charges battery wear per kWh.
struct PriceSchedule {
    double grid_buy = 0.0;     // price paid to import, $/kWh
    double grid_sell = 0.0;    // price received to export, $/kWh
    double beta = 0.0;         // charge premium over the discharge price, >= 0
    double degradation = 0.0;  // battery wear price, $/kWh
    double scaling = 1.0;      // satisfaction scaling, in (0, 1]

    void validate() const;
};

// Session prices for the battery market: the midpoint pair that drives all
// state decisions, plus the supply/demand-derived pair reported for the
// formed coalition (absent when no market formed).
struct ClearedPrices {
    double discharge_mid = 0.0;  // (grid_buy + grid_sell) / 2
    double charge_mid = 0.0;     // (1 + beta) * discharge_mid
    std::optional<double> discharge_s2;
    std::optional<double> charge_s2;
    bool s2_in_band = true;  // false when discharge_s2 left [grid_sell, grid_buy]
};

enum class ProsumerState { State1, State2Provider, State2Receiver };

// Outcome of the per-slot state choice for one prosumer.
struct StateDecision {
    ProsumerState state = ProsumerState::State1;
    double optimal_quantity = 0.0;   // clamped argmax of the chosen trade, kWh
    double utility_at_optimum = 0.0;  // $ at that quantity, 0 when State1
};

struct MidPrices {
    double discharge = 0.0;
    double charge = 0.0;
};

MidPrices mid_market_prices(const PriceSchedule& schedule);

// Surplus sells at grid_sell, deficit buys at grid_buy. Returns
// (utility, cost); both positive at once is a caller bug.
std::pair<double, double> state1_settlement(double surplus, double deficit,
                                            const PriceSchedule& schedule);

// $ value of charging e kWh bought at charge_price, given the remaining
// battery headroom. Concave in e; negative once the price outweighs the
// stored-energy satisfaction.
double charge_utility(double e, double available_capacity, double alpha, double charge_price,
                      const PriceSchedule& schedule);

// $ value of discharging e kWh sold at discharge_price, given the current
// state of charge.
double discharge_utility(double e, double soc, double alpha, double discharge_price,
                         const PriceSchedule& schedule);

// Price above which charging stops being worthwhile for this battery state.
double threshold_charge_price(const ProsumerConfig& config, const BatteryState& battery,
                              const PriceSchedule& schedule);

// Price below which discharging stops being worthwhile.
double threshold_discharge_price(const ProsumerConfig& config, const BatteryState& battery,
                                 const PriceSchedule& schedule);

// Unconstrained argmax of charge_utility clamped to
// min(cap_kwh, headroom, surplus). Returns 0 exactly when
// charge_price >= threshold_charge_price.
double optimal_charge(const ProsumerConfig& config, const BatteryState& battery,
                      const PriceSchedule& schedule, double charge_price, double cap_kwh,
                      double surplus);

// Unconstrained argmax of discharge_utility clamped to
// min(cap_kwh, soc - soc_min, extra_bound). Returns 0 exactly when
// discharge_price <= threshold_discharge_price.
double optimal_discharge(const ProsumerConfig& config, const BatteryState& battery,
                         const PriceSchedule& schedule, double discharge_price, double cap_kwh,
                         double extra_bound = std::numeric_limits<double>::infinity());

// Pick the prosumer's state for this slot by comparing both trade directions
// at the given session prices. Deficit or no battery forces State1; an exact
// utility tie resolves to State1.
StateDecision classify_state(const ProsumerConfig& config, const BatteryState& battery,
                             const EnergyBalance& balance, const PriceSchedule& schedule,
                             const MidPrices& mid, double cap_kwh);

// One provider's stance entering the clearing computation.
struct ProviderQuote {
    double soc = 0.0;  // kWh available to sell from
    double alpha = 1.0;
};

// One receiver's stance: how much headroom it is buying toward.
struct ReceiverQuote {
    double capacity_gap = 0.0;  // battery_capacity - soc, kWh
    double alpha = 1.0;
};

// Total energy the providers would sell at discharge_price (their optima
// summed, no clamps). Empty set yields 0. Heterogeneous alphas enter through
// their arithmetic mean.
double aggregate_supply(std::span<const ProviderQuote> providers, const PriceSchedule& schedule,
                        double discharge_price);

// Total energy the receivers would buy at charge_price.
double aggregate_demand(std::span<const ReceiverQuote> receivers, const PriceSchedule& schedule,
                        double charge_price);

struct ClearingResult {
    double discharge_price = 0.0;  // $/kWh paid to providers
    double charge_price = 0.0;     // (1 + beta) * discharge_price, paid by receivers
    double supply_at_clear = 0.0;  // aggregate_supply at discharge_price
    double demand_at_clear = 0.0;  // aggregate_demand at charge_price
    double alpha_d_used = 0.0;     // provider-side alpha the closed form used
    double alpha_c_used = 0.0;     // receiver-side alpha
    bool alpha_heterogeneous = false;
    bool in_band = true;  // discharge_price within [grid_sell, grid_buy]
};

// Closed-form price pair that equates aggregate supply and demand for the
// given coalition membership. Throws NoMarketError when either side is empty.
ClearingResult clear_coalition2_prices(std::span<const ProviderQuote> providers,
                                       std::span<const ReceiverQuote> receivers,
                                       const PriceSchedule& schedule);

}  // namespace peertrade
