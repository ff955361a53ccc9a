#include "peertrade/coalition.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "peertrade/errors.hpp"

namespace peertrade {

void Partition::validate(const std::vector<std::string>& ids) const {
    std::vector<std::string> combined;
    combined.reserve(state1.size() + providers.size() + receivers.size());
    for (const auto* set : {&state1, &providers, &receivers}) {
        if (!std::is_sorted(set->begin(), set->end()))
            throw ValidationError("partition sets must be sorted by id");
        combined.insert(combined.end(), set->begin(), set->end());
    }
    std::sort(combined.begin(), combined.end());
    if (std::adjacent_find(combined.begin(), combined.end()) != combined.end())
        throw ValidationError("partition sets must be disjoint");
    std::vector<std::string> expected = ids;
    std::sort(expected.begin(), expected.end());
    if (combined != expected)
        throw ValidationError("partition must cover every prosumer exactly once");
}

bool Partition::in_market(const std::string& id) const {
    return std::binary_search(providers.begin(), providers.end(), id) ||
           std::binary_search(receivers.begin(), receivers.end(), id);
}

const ProsumerOutcome* SlotOutcome::find(const std::string& id) const {
    auto it = std::lower_bound(prosumers.begin(), prosumers.end(), id,
                               [](const ProsumerOutcome& row, const std::string& key) {
                                   return row.id < key;
                               });
    return (it != prosumers.end() && it->id == id) ? &*it : nullptr;
}

bool pareto_prefers(const std::map<std::string, double>& a,
                    const std::map<std::string, double>& b) {
    if (a.size() != b.size()) throw ValidationError("pareto_prefers: key sets differ");
    for (auto ita = a.begin(), itb = b.begin(); ita != a.end(); ++ita, ++itb)
        if (ita->first != itb->first) throw ValidationError("pareto_prefers: key sets differ");
    bool any_strict = false;
    for (auto ita = a.begin(), itb = b.begin(); ita != a.end(); ++ita, ++itb) {
        if (ita->second < itb->second) return false;
        if (ita->second > itb->second) any_strict = true;
    }
    return any_strict;
}

namespace {

double total(const std::map<std::string, double>& m) {
    return std::accumulate(m.begin(), m.end(), 0.0,
                           [](double acc, const auto& kv) { return acc + kv.second; });
}

void check_quantities(const std::map<std::string, double>& m, const char* side) {
    for (const auto& [id, v] : m)
        if (!std::isfinite(v) || v < 0.0)
            throw ValidationError(std::string("balance_supply_demand: ") + side + " quantity for " +
                                  id + " must be finite and >= 0");
}

}  // namespace

BalanceResult balance_supply_demand(const std::map<std::string, double>& offers,
                                    const std::map<std::string, double>& requests) {
    check_quantities(offers, "offer");
    check_quantities(requests, "request");

    BalanceResult result{offers, requests, {}};

    // A one-sided market cannot trade at all.
    if (offers.empty() || requests.empty()) {
        for (auto& [id, v] : result.offers) v = 0.0;
        for (auto& [id, v] : result.requests) v = 0.0;
    } else {
        const double offered = total(result.offers);
        const double requested = total(result.requests);
        auto& heavy = offered > requested ? result.offers : result.requests;
        const double light_total = std::min(offered, requested);

        // Spread the excess evenly over whoever is still trading; members that
        // hit zero drop out and the remainder is re-spread.
        const std::size_t max_passes = heavy.size() + 2;
        for (std::size_t pass = 0; pass < max_passes; ++pass) {
            const double excess = total(heavy) - light_total;
            if (excess <= 1e-9) break;
            std::size_t active = 0;
            for (const auto& [id, v] : heavy)
                if (v > 0.0) ++active;
            if (active == 0) break;
            const double share = excess / static_cast<double>(active);
            for (auto& [id, v] : heavy)
                if (v > 0.0) v -= std::min(v, share);
        }
    }

    for (const auto* side : {&result.offers, &result.requests}) {
        const auto& original = side == &result.offers ? offers : requests;
        for (const auto& [id, v] : *side)
            if (v <= 0.0 && original.at(id) > 0.0) result.reassigned.insert(id);
    }
    return result;
}

namespace {

ProsumerState previous_state_of(const Partition& previous, const std::string& id) {
    if (std::binary_search(previous.providers.begin(), previous.providers.end(), id))
        return ProsumerState::State2Provider;
    if (std::binary_search(previous.receivers.begin(), previous.receivers.end(), id))
        return ProsumerState::State2Receiver;
    return ProsumerState::State1;  // unknown ids count as state 1 before trading starts
}

bool in_market_state(ProsumerState s) { return s != ProsumerState::State1; }

}  // namespace

SlotResult form_coalitions_slot(const std::vector<ProsumerConfig>& prosumers,
                                std::map<std::string, BatteryState>& batteries,
                                const std::map<std::string, SlotReading>& readings,
                                const PriceSchedule& schedule, const NetworkLimits& limits,
                                const Partition& previous, int slot,
                                const EngineOptions& options) {
    schedule.validate();
    limits.validate();
    if (prosumers.empty()) throw ValidationError("form_coalitions_slot: roster is empty");

    std::vector<const ProsumerConfig*> order;
    order.reserve(prosumers.size());
    for (const auto& cfg : prosumers) order.push_back(&cfg);
    std::sort(order.begin(), order.end(),
              [](const ProsumerConfig* a, const ProsumerConfig* b) { return a->id < b->id; });
    for (std::size_t i = 1; i < order.size(); ++i)
        if (order[i - 1]->id == order[i]->id)
            throw ValidationError("duplicate prosumer id: " + order[i]->id);

    const MidPrices mid = mid_market_prices(schedule);

    SlotResult result;
    SlotOutcome& out = result.outcome;
    out.slot = slot;
    out.schedule = schedule;
    out.prices.discharge_mid = mid.discharge;
    out.prices.charge_mid = mid.charge;

    // Self-dispatch each battery against its own readings, then take the
    // threshold decision for everyone that is allowed into the market.
    std::map<std::string, double> offers, requests;
    for (const ProsumerConfig* cfg : order) {
        cfg->validate();
        auto reading_it = readings.find(cfg->id);
        if (reading_it == readings.end())
            throw DataError(DataError::Kind::MissingReading,
                            "no reading for prosumer " + cfg->id + " at slot " +
                                std::to_string(slot));
        auto [bat_it, inserted] =
            batteries.try_emplace(cfg->id, BatteryState{cfg->initial_soc_or_default()});
        BatteryState& battery = bat_it->second;
        if (battery.soc < cfg->soc_min - 1e-12 || battery.soc > cfg->battery_capacity + 1e-12)
            throw ValidationError("prosumer " + cfg->id + ": soc outside [soc_min, capacity]");

        ProsumerOutcome row;
        row.id = cfg->id;
        row.alpha = cfg->alpha;
        row.battery_capacity = cfg->battery_capacity;
        row.soc_min = cfg->soc_min;
        row.pv = reading_it->second.pv;
        row.demand = reading_it->second.demand;
        row.soc_before = battery.soc;
        row.transfer_cap = effective_transfer_cap(*cfg, limits);

        const EnergyBalance bal = settle_slot_energy(*cfg, battery, reading_it->second, limits);
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

        const StateDecision decision =
            classify_state(*cfg, battery, bal, schedule, mid, row.transfer_cap);
        row.classified = decision.state;
        row.classified_quantity = decision.optimal_quantity;
        row.classified_utility = decision.utility_at_optimum;

        if (decision.state == ProsumerState::State2Provider && decision.optimal_quantity > 0.0)
            offers[cfg->id] = decision.optimal_quantity;
        else if (decision.state == ProsumerState::State2Receiver && decision.optimal_quantity > 0.0)
            requests[cfg->id] = decision.optimal_quantity;

        out.prosumers.push_back(std::move(row));
    }

    // Trim whichever side over-committed; members trimmed to zero fall back
    // to state 1 for this slot.
    const bool two_sided = !offers.empty() && !requests.empty();
    BalanceResult balanced;
    if (two_sided) balanced = balance_supply_demand(offers, requests);

    for (ProsumerOutcome& row : out.prosumers) {
        row.state = ProsumerState::State1;
        row.traded = 0.0;
        if (two_sided) {
            if (auto it = balanced.offers.find(row.id);
                it != balanced.offers.end() && it->second > 0.0) {
                row.state = ProsumerState::State2Provider;
                row.traded = it->second;
            } else if (auto it2 = balanced.requests.find(row.id);
                       it2 != balanced.requests.end() && it2->second > 0.0) {
                row.state = ProsumerState::State2Receiver;
                row.traded = it2->second;
            }
        }
    }

    // Price the coalition that actually formed.
    std::vector<ProviderQuote> provider_quotes;
    std::vector<ReceiverQuote> receiver_quotes;
    for (const ProsumerOutcome& row : out.prosumers) {
        if (row.state == ProsumerState::State2Provider)
            provider_quotes.push_back({row.soc_after, row.alpha});
        else if (row.state == ProsumerState::State2Receiver)
            receiver_quotes.push_back({row.available_capacity, row.alpha});
    }
    if (!provider_quotes.empty() && !receiver_quotes.empty()) {
        ClearingResult clearing =
            clear_coalition2_prices(provider_quotes, receiver_quotes, schedule);
        if (options.clamp_s2_to_band && !clearing.in_band) {
            clearing.discharge_price =
                std::clamp(clearing.discharge_price, schedule.grid_sell, schedule.grid_buy);
            clearing.charge_price = (1.0 + schedule.beta) * clearing.discharge_price;
        }
        out.prices.discharge_s2 = clearing.discharge_price;
        out.prices.charge_s2 = clearing.charge_price;
        out.prices.s2_in_band = clearing.in_band;
        out.alpha_d_used = clearing.alpha_d_used;
        out.alpha_c_used = clearing.alpha_c_used;
    }

    // Settle grid flows and the battery trades at the session prices.
    double matched_pool = 0.0, state1_surplus = 0.0, state1_deficit = 0.0;
    if (options.state1_matched_volume) {
        for (const ProsumerOutcome& row : out.prosumers) {
            if (row.state != ProsumerState::State1) continue;
            state1_surplus += row.surplus;
            state1_deficit += row.deficit;
        }
        matched_pool = std::min(state1_surplus, state1_deficit);
    }

    for (ProsumerOutcome& row : out.prosumers) {
        double utility = 0.0, cost = 0.0;
        if (options.state1_matched_volume && row.state == ProsumerState::State1 &&
            matched_pool > 0.0) {
            // Internally matched kWh earn/pay the mid rate; the rest settles
            // against the grid as usual.
            if (row.surplus > 0.0) {
                const double matched = matched_pool * row.surplus / state1_surplus;
                utility = mid.discharge * matched + schedule.grid_sell * (row.surplus - matched);
            }
            if (row.deficit > 0.0) {
                const double matched = matched_pool * row.deficit / state1_deficit;
                cost = mid.discharge * matched + schedule.grid_buy * (row.deficit - matched);
            }
        } else {
            std::tie(utility, cost) = state1_settlement(row.surplus, row.deficit, schedule);
        }

        if (row.state == ProsumerState::State2Provider) {
            utility += discharge_utility(row.traded, row.soc_after, row.alpha, mid.discharge,
                                         schedule);
        } else if (row.state == ProsumerState::State2Receiver) {
            utility += charge_utility(row.traded, row.available_capacity, row.alpha, mid.charge,
                                      schedule);
        }
        row.utility = utility;
        row.cost = cost;
        row.net_benefit = utility - cost;
    }

    // Assemble the partition and the coalition moves since the last slot.
    Partition& part = result.outcome.partition;
    part.slot = slot;
    std::vector<std::string> ids;
    for (const ProsumerOutcome& row : out.prosumers) {
        ids.push_back(row.id);
        switch (row.state) {
            case ProsumerState::State1: part.state1.push_back(row.id); break;
            case ProsumerState::State2Provider: part.providers.push_back(row.id); break;
            case ProsumerState::State2Receiver: part.receivers.push_back(row.id); break;
        }
    }
    part.validate(ids);

    for (const ProsumerOutcome& row : out.prosumers) {
        TransitionRecord rec;
        rec.id = row.id;
        rec.previous = previous_state_of(previous, row.id);
        rec.current = row.state;
        if (in_market_state(rec.previous) == in_market_state(rec.current))
            rec.actions = {TransitionAction::Stay};
        else
            rec.actions = {TransitionAction::Split, TransitionAction::Merge};
        result.transitions.push_back(std::move(rec));
    }

    result.partition = part;
    return result;
}

StabilityReport verify_dhp_stability(const SlotOutcome& outcome, const ClearedPrices& prices,
                                     double tolerance) {
    StabilityReport report;
    for (const ProsumerOutcome& row : outcome.prosumers) {
        if (row.deficit_locked || row.no_battery) continue;

        ProsumerConfig cfg;
        cfg.id = row.id;
        cfg.battery_capacity = row.battery_capacity;
        cfg.alpha = row.alpha;
        cfg.soc_min = row.soc_min;
        const BatteryState battery{row.soc_after};

        const double e_c = optimal_charge(cfg, battery, outcome.schedule, prices.charge_mid,
                                          row.transfer_cap, row.surplus);
        const double u_c = charge_utility(e_c, row.available_capacity, row.alpha,
                                          prices.charge_mid, outcome.schedule);
        const double e_d = optimal_discharge(cfg, battery, outcome.schedule, prices.discharge_mid,
                                             row.transfer_cap);
        const double u_d = discharge_utility(e_d, row.soc_after, row.alpha, prices.discharge_mid,
                                             outcome.schedule);

        double realized = 0.0;
        if (row.classified == ProsumerState::State2Provider) realized = u_d;
        if (row.classified == ProsumerState::State2Receiver) realized = u_c;

        const double best = std::max({0.0, u_c, u_d});
        if (best - realized > tolerance) {
            const ProsumerState alternative =
                u_c >= u_d ? ProsumerState::State2Receiver : ProsumerState::State2Provider;
            report.deviations.push_back({row.id, alternative, best - realized});
        }
    }
    report.is_dhp_stable = report.deviations.empty();
    return report;
}

double social_welfare(const SlotOutcome& outcome) {
    double sum = 0.0;
    for (const ProsumerOutcome& row : outcome.prosumers) sum += row.net_benefit;
    return sum;
}

}  // namespace peertrade
