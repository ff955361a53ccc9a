#pragma once

#include <optional>
#include <string>

namespace peertrade {

// Static description of one prosumer: a household with rooftop solar and an
// optional battery. Energies are kWh per slot, prices are $/kWh.
struct ProsumerConfig {
    std::string id;
    double battery_capacity = 0.0;    // total capacity, 0 means no battery
    double alpha = 1.0;               // stored-energy satisfaction falloff, > 0
    double soc_min = 0.0;             // floor the battery never discharges below
    double rated_rate = 0.0;          // charge/discharge limit per slot
    double charge_efficiency = 1.0;   // in (0, 1]
    std::optional<double> initial_soc;  // defaults to half capacity

    double initial_soc_or_default() const;
    void validate() const;  // throws ValidationError naming the bad field
};

struct BatteryState {
    double soc = 0.0;  // kWh currently stored
};

// One metered interval for one prosumer.
struct SlotReading {
    double pv = 0.0;      // solar generation, kWh
    double demand = 0.0;  // household demand, kWh
};

// How the per-slot transfer cap combines the battery's rated rate with the
// network limit. PerPaperMax keeps the looser of the two; CapMin is the
// conservative alternative.
enum class CombinerMode { PerPaperMax, CapMin };

struct NetworkLimits {
    double transfer_limit = 0.0;  // kWh per slot the network will move
    CombinerMode combiner = CombinerMode::PerPaperMax;

    void validate() const;
};

// Result of settling one prosumer's slot against its own solar and battery.
// Exactly one of charged/discharged is nonzero, likewise surplus/deficit.
struct EnergyBalance {
    double self_consumption = 0.0;  // demand covered from own pv + battery
    double surplus = 0.0;           // left over after demand and charging
    double deficit = 0.0;           // demand left uncovered
    double charged = 0.0;           // energy put into the battery this slot
    double discharged = 0.0;        // energy drawn from the battery this slot
};

// min(pv + discharged, demand); all arguments must be non-negative.
double self_consumption(double pv, double discharged, double demand);

// Per-slot energy transfer cap for one prosumer under the given limits.
double effective_transfer_cap(const ProsumerConfig& config, const NetworkLimits& limits);

// Self-dispatch for one slot: charge the battery from excess solar, or
// discharge it toward unmet demand, then report the slot's balance.
// Updates battery.soc in place.
EnergyBalance settle_slot_energy(const ProsumerConfig& config, BatteryState& battery,
                                 const SlotReading& reading, const NetworkLimits& limits);

}  // namespace peertrade
