#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "peertrade/coalition.hpp"
#include "peertrade/model.hpp"
#include "peertrade/outcome.hpp"
#include "peertrade/pricing.hpp"

namespace peertrade {

// Grid tariffs either constant for the day or given per slot.
struct PriceBook {
    std::vector<double> grid_buy;   // size 1 or slots_per_day
    std::vector<double> grid_sell;  // size 1 or slots_per_day
    double beta = 0.0;
    double degradation = 0.0;
    double scaling = 1.0;

    PriceSchedule at(int slot) const;
    void validate(int slots) const;
};

struct SimulationConfig {
    int slots_per_day = 96;
    std::uint64_t seed = 0;
    std::vector<ProsumerConfig> roster;
    PriceBook prices;
    NetworkLimits limits;
    EngineOptions options;

    void validate() const;
};

// readings[id][slot]
using ReadingsSeries = std::map<std::string, std::vector<SlotReading>>;

struct SimulationRun {
    std::vector<SlotOutcome> outcomes;        // one per slot
    std::vector<TransitionLog> transitions;   // aligned with outcomes
};

// Full-day cooperative run. Battery state threads from slot to slot through
// the self-dispatch updates.
SimulationRun run_simulation(const SimulationConfig& config, const ReadingsSeries& readings);

// Same dispatch, no battery market: surplus exports and deficit imports all
// settle against the grid. The reference everyone is compared against.
SimulationRun fit_baseline(const SimulationConfig& config, const ReadingsSeries& readings);

struct ComparisonRow {
    int slot = 0;
    std::string id;
    double p2p_net = 0.0;
    double fit_net = 0.0;
    double delta = 0.0;  // p2p_net - fit_net
};

struct BatteryTraceRow {
    int slot = 0;
    std::string id;
    double charged = 0.0;     // self-dispatch charge, kWh
    double discharged = 0.0;  // self-dispatch discharge, kWh
    double traded = 0.0;      // battery market quantity, kWh
};

struct ComparisonReport {
    std::vector<ComparisonRow> rows;  // sorted by (slot, id)
    std::map<std::string, double> daily_p2p;
    std::map<std::string, double> daily_fit;
    std::map<std::string, double> daily_delta;
    double min_delta = 0.0;
    std::vector<ComparisonRow> violations;  // rows with delta < -1e-9
    std::vector<BatteryTraceRow> battery_trace;
};

// Per-prosumer per-slot deltas between a cooperative run and its baseline.
// Throws ValidationError when the two runs do not line up.
ComparisonReport compare(const SimulationRun& p2p, const SimulationRun& fit);

// Seeded synthetic day: solar follows a midday bell scaled by pv_scale
// (0 models a fully overcast day), demand mixes a base load with morning and
// evening peaks. Each prosumer gets an independent stream derived from the
// seed, so rosters can grow without disturbing existing series.
ReadingsSeries gen_synthetic_readings(const std::vector<ProsumerConfig>& roster, int slots,
                                      std::uint64_t seed, double pv_scale = 1.0);

}  // namespace peertrade
