#include "peertrade/pricing.hpp"

#include <algorithm>
#include <cmath>

#include "peertrade/errors.hpp"

namespace peertrade {

void PriceSchedule::validate() const {
    for (double v : {grid_buy, grid_sell, beta, degradation, scaling})
        if (!std::isfinite(v)) throw ValidationError("price schedule values must be finite");
    if (grid_sell < 0.0) throw ValidationError("grid_sell must be >= 0");
    if (grid_buy < grid_sell) throw ValidationError("grid_buy must be >= grid_sell");
    if (beta < 0.0) throw ValidationError("beta must be >= 0");
    if (degradation < 0.0) throw ValidationError("degradation must be >= 0");
    if (scaling <= 0.0 || scaling > 1.0) throw ValidationError("scaling must be in (0, 1]");
}

MidPrices mid_market_prices(const PriceSchedule& schedule) {
    MidPrices mid;
    mid.discharge = (schedule.grid_buy + schedule.grid_sell) / 2.0;
    mid.charge = (1.0 + schedule.beta) * mid.discharge;
    return mid;
}

std::pair<double, double> state1_settlement(double surplus, double deficit,
                                            const PriceSchedule& schedule) {
    if (surplus < 0.0 || deficit < 0.0)
        throw ValidationError("state1_settlement: surplus and deficit must be >= 0");
    if (surplus > 0.0 && deficit > 0.0)
        throw ValidationError("state1_settlement: surplus and deficit cannot both be positive");
    return {schedule.grid_sell * surplus, schedule.grid_buy * deficit};
}

double charge_utility(double e, double available_capacity, double alpha, double charge_price,
                      const PriceSchedule& schedule) {
    return schedule.scaling * (available_capacity * e - 0.5 * alpha * e * e) -
           (schedule.degradation + charge_price) * e;
}

double discharge_utility(double e, double soc, double alpha, double discharge_price,
                         const PriceSchedule& schedule) {
    return schedule.scaling * (soc * e - 0.5 * alpha * e * e) +
           (discharge_price - schedule.degradation) * e;
}

double threshold_charge_price(const ProsumerConfig& config, const BatteryState& battery,
                              const PriceSchedule& schedule) {
    return schedule.scaling * (config.battery_capacity - battery.soc) - schedule.degradation;
}

double threshold_discharge_price(const ProsumerConfig& config, const BatteryState& battery,
                                 const PriceSchedule& schedule) {
    return schedule.degradation - schedule.scaling * battery.soc;
}

namespace {

void require_positive_slope(const ProsumerConfig& config, const PriceSchedule& schedule) {
    if (config.alpha <= 0.0) throw ValidationError("alpha must be > 0");
    if (schedule.scaling <= 0.0) throw ValidationError("scaling must be > 0");
}

}  // namespace

double optimal_charge(const ProsumerConfig& config, const BatteryState& battery,
                      const PriceSchedule& schedule, double charge_price, double cap_kwh,
                      double surplus) {
    require_positive_slope(config, schedule);
    // Written as a threshold difference so the boundary price gives 0 exactly.
    const double margin = threshold_charge_price(config, battery, schedule) - charge_price;
    const double e = std::max(0.0, margin / (schedule.scaling * config.alpha));
    const double headroom = std::max(0.0, config.battery_capacity - battery.soc);
    const double clamp = std::max(0.0, std::min({cap_kwh, headroom, surplus}));
    return std::min(e, clamp);
}

double optimal_discharge(const ProsumerConfig& config, const BatteryState& battery,
                         const PriceSchedule& schedule, double discharge_price, double cap_kwh,
                         double extra_bound) {
    require_positive_slope(config, schedule);
    const double margin = discharge_price - threshold_discharge_price(config, battery, schedule);
    const double e = std::max(0.0, margin / (schedule.scaling * config.alpha));
    const double depth = std::max(0.0, battery.soc - config.soc_min);
    const double clamp = std::max(0.0, std::min({cap_kwh, depth, extra_bound}));
    return std::min(e, clamp);
}

StateDecision classify_state(const ProsumerConfig& config, const BatteryState& battery,
                             const EnergyBalance& balance, const PriceSchedule& schedule,
                             const MidPrices& mid, double cap_kwh) {
    StateDecision decision;
    if (balance.deficit > 0.0 || config.battery_capacity <= 0.0) return decision;

    const bool wants_charge = mid.charge < threshold_charge_price(config, battery, schedule);
    const bool wants_discharge = mid.discharge > threshold_discharge_price(config, battery, schedule);
    if (!wants_charge && !wants_discharge) return decision;

    double e_c = 0.0, u_c = 0.0, e_d = 0.0, u_d = 0.0;
    if (wants_charge) {
        e_c = optimal_charge(config, battery, schedule, mid.charge, cap_kwh, balance.surplus);
        u_c = charge_utility(e_c, config.battery_capacity - battery.soc, config.alpha, mid.charge,
                             schedule);
    }
    if (wants_discharge) {
        e_d = optimal_discharge(config, battery, schedule, mid.discharge, cap_kwh);
        u_d = discharge_utility(e_d, battery.soc, config.alpha, mid.discharge, schedule);
    }

    if (wants_charge && !wants_discharge) {
        decision = {ProsumerState::State2Receiver, e_c, u_c};
    } else if (wants_discharge && !wants_charge) {
        decision = {ProsumerState::State2Provider, e_d, u_d};
    } else if (u_c > u_d) {  // both directions open: higher utility wins, tie stays put
        decision = {ProsumerState::State2Receiver, e_c, u_c};
    } else if (u_d > u_c) {
        decision = {ProsumerState::State2Provider, e_d, u_d};
    }
    return decision;
}

namespace {

struct SideTotals {
    double sum = 0.0;        // kWh the side is working from (soc or headroom)
    double mean_alpha = 0.0;
    bool heterogeneous = false;
    std::size_t count = 0;
};

template <typename Quote, typename Field>
SideTotals side_totals(std::span<const Quote> quotes, Field field) {
    SideTotals t;
    t.count = quotes.size();
    if (quotes.empty()) return t;
    double alpha_sum = 0.0;
    for (const Quote& q : quotes) {
        if (q.alpha <= 0.0) throw ValidationError("quote alpha must be > 0");
        t.sum += field(q);
        alpha_sum += q.alpha;
        if (q.alpha != quotes.front().alpha) t.heterogeneous = true;
    }
    t.mean_alpha = alpha_sum / static_cast<double>(t.count);
    return t;
}

}  // namespace

double aggregate_supply(std::span<const ProviderQuote> providers, const PriceSchedule& schedule,
                        double discharge_price) {
    if (providers.empty()) return 0.0;
    const SideTotals t = side_totals(providers, [](const ProviderQuote& q) { return q.soc; });
    const double k = schedule.scaling;
    return t.sum / t.mean_alpha - (schedule.degradation - discharge_price) *
                                      static_cast<double>(t.count) / (k * t.mean_alpha);
}

double aggregate_demand(std::span<const ReceiverQuote> receivers, const PriceSchedule& schedule,
                        double charge_price) {
    if (receivers.empty()) return 0.0;
    const SideTotals t =
        side_totals(receivers, [](const ReceiverQuote& q) { return q.capacity_gap; });
    const double k = schedule.scaling;
    return t.sum / t.mean_alpha - (schedule.degradation + charge_price) *
                                      static_cast<double>(t.count) / (k * t.mean_alpha);
}

ClearingResult clear_coalition2_prices(std::span<const ProviderQuote> providers,
                                       std::span<const ReceiverQuote> receivers,
                                       const PriceSchedule& schedule) {
    if (providers.empty() || receivers.empty())
        throw NoMarketError("clearing requires at least one provider and one receiver");
    if (schedule.scaling <= 0.0) throw ValidationError("scaling must be > 0");

    const SideTotals d = side_totals(providers, [](const ProviderQuote& q) { return q.soc; });
    const SideTotals c =
        side_totals(receivers, [](const ReceiverQuote& q) { return q.capacity_gap; });
    const double k = schedule.scaling;
    const double pl = schedule.degradation;
    const double kcount = static_cast<double>(d.count);
    const double lcount = static_cast<double>(c.count);

    ClearingResult result;
    result.alpha_d_used = d.mean_alpha;
    result.alpha_c_used = c.mean_alpha;
    result.alpha_heterogeneous =
        d.heterogeneous || c.heterogeneous ||
        (providers.front().alpha != receivers.front().alpha);

    const double numerator =
        pl * (c.mean_alpha * kcount - d.mean_alpha * lcount) - k * (c.mean_alpha * d.sum - d.mean_alpha * c.sum);
    const double denominator =
        c.mean_alpha * kcount + d.mean_alpha * (1.0 + schedule.beta) * lcount;
    result.discharge_price = numerator / denominator;
    result.charge_price = (1.0 + schedule.beta) * result.discharge_price;
    result.supply_at_clear = aggregate_supply(providers, schedule, result.discharge_price);
    result.demand_at_clear = aggregate_demand(receivers, schedule, result.charge_price);
    result.in_band = result.discharge_price >= schedule.grid_sell &&
                     result.discharge_price <= schedule.grid_buy;
    return result;
}

}  // namespace peertrade
