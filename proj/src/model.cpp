#include "peertrade/model.hpp"

#include <algorithm>
#include <cmath>

#include "peertrade/errors.hpp"

namespace peertrade {

namespace {

void require_finite(double v, const std::string& what) {
    if (!std::isfinite(v)) throw ValidationError(what + " must be finite");
}

}  // namespace

double ProsumerConfig::initial_soc_or_default() const {
    return initial_soc ? *initial_soc : battery_capacity / 2.0;
}

void ProsumerConfig::validate() const {
    const std::string who = "prosumer " + (id.empty() ? std::string("<unnamed>") : id) + ": ";
    if (id.empty()) throw ValidationError("prosumer id must be non-empty");
    require_finite(battery_capacity, who + "battery_capacity");
    if (battery_capacity < 0.0) throw ValidationError(who + "battery_capacity must be >= 0");
    require_finite(alpha, who + "alpha");
    if (alpha <= 0.0) throw ValidationError(who + "alpha must be > 0");
    require_finite(soc_min, who + "soc_min");
    if (soc_min < 0.0 || soc_min > battery_capacity)
        throw ValidationError(who + "soc_min must lie in [0, battery_capacity]");
    require_finite(rated_rate, who + "rated_rate");
    if (rated_rate < 0.0) throw ValidationError(who + "rated_rate must be >= 0");
    require_finite(charge_efficiency, who + "charge_efficiency");
    if (charge_efficiency <= 0.0 || charge_efficiency > 1.0)
        throw ValidationError(who + "charge_efficiency must be in (0, 1]");
    if (initial_soc) {
        require_finite(*initial_soc, who + "initial_soc");
        if (*initial_soc < soc_min || *initial_soc > battery_capacity)
            throw ValidationError(who + "initial_soc must lie in [soc_min, battery_capacity]");
    }
}

void NetworkLimits::validate() const {
    if (!std::isfinite(transfer_limit) || transfer_limit < 0.0)
        throw ValidationError("network transfer_limit must be finite and >= 0");
}

double self_consumption(double pv, double discharged, double demand) {
    if (!(pv >= 0.0) || !(discharged >= 0.0) || !(demand >= 0.0))
        throw ValidationError("self_consumption: arguments must be non-negative");
    return std::min(pv + discharged, demand);
}

double effective_transfer_cap(const ProsumerConfig& config, const NetworkLimits& limits) {
    if (limits.combiner == CombinerMode::CapMin)
        return std::min(config.rated_rate, limits.transfer_limit);
    return std::max(config.rated_rate, limits.transfer_limit);
}

EnergyBalance settle_slot_energy(const ProsumerConfig& config, BatteryState& battery,
                                 const SlotReading& reading, const NetworkLimits& limits) {
    if (!std::isfinite(reading.pv) || !std::isfinite(reading.demand))
        throw ValidationError("slot reading must be finite");
    if (reading.pv < 0.0 || reading.demand < 0.0)
        throw ValidationError("slot reading must be non-negative");

    const double cap = effective_transfer_cap(config, limits);
    const double eta = config.charge_efficiency;
    EnergyBalance bal;

    if (reading.pv > reading.demand) {
        const double headroom = std::max(0.0, config.battery_capacity - battery.soc);
        bal.charged = std::min({headroom, cap, reading.pv - reading.demand});
        battery.soc += eta * bal.charged;
        // the max clamps away the rounding dust left when charged absorbs the gap
        bal.surplus = std::max(0.0, reading.pv - (reading.demand + bal.charged));
    } else if (reading.pv < reading.demand) {
        const double depth = std::max(0.0, battery.soc - config.soc_min);
        bal.discharged = std::min({depth, cap, reading.demand - reading.pv});
        battery.soc -= eta * bal.discharged;
        bal.deficit = std::max(0.0, reading.demand - (reading.pv + bal.discharged));
    }
    // pv == demand: nothing moves.

    bal.self_consumption = self_consumption(reading.pv, bal.discharged, reading.demand);
    return bal;
}

}  // namespace peertrade
