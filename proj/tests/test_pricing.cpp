#include <cmath>

#include "doctest.h"

#include "peertrade/errors.hpp"
#include "peertrade/pricing.hpp"
#include "support.hpp"

using namespace peertrade;

namespace {

PriceSchedule retail_schedule() {
    PriceSchedule s;
    s.grid_buy = 0.26;
    s.grid_sell = 0.10;
    s.beta = 0.1;
    s.degradation = 0.1;
    s.scaling = 0.04;
    return s;
}

ProsumerConfig battery_of(double capacity, double alpha = 1.0, double soc_min = 0.0) {
    ProsumerConfig cfg;
    cfg.id = "x";
    cfg.battery_capacity = capacity;
    cfg.alpha = alpha;
    cfg.soc_min = soc_min;
    cfg.rated_rate = 100.0;
    return cfg;
}

}  // namespace

TEST_CASE("price schedule validation") {
    PriceSchedule s = retail_schedule();
    CHECK_NOTHROW(s.validate());
    s.grid_sell = 0.3;  // above grid_buy
    CHECK_THROWS_AS(s.validate(), ValidationError);
    s = retail_schedule();
    s.beta = -0.1;
    CHECK_THROWS_AS(s.validate(), ValidationError);
    s = retail_schedule();
    s.scaling = 0.0;
    CHECK_THROWS_AS(s.validate(), ValidationError);
    s = retail_schedule();
    s.scaling = 1.5;
    CHECK_THROWS_AS(s.validate(), ValidationError);
    s = retail_schedule();
    s.degradation = -1.0;
    CHECK_THROWS_AS(s.validate(), ValidationError);
}

TEST_CASE("mid prices sit halfway between the grid pair") {
    const MidPrices mid = mid_market_prices(retail_schedule());
    CHECK(mid.discharge == doctest::Approx(0.18));
    CHECK(mid.charge == doctest::Approx(0.198));

    PriceSchedule flat = retail_schedule();
    flat.grid_sell = flat.grid_buy;
    flat.beta = 0.0;
    const MidPrices m2 = mid_market_prices(flat);
    CHECK(m2.discharge == 0.26);
    CHECK(m2.charge == 0.26);
}

TEST_CASE("state 1 settles directly against the grid") {
    const PriceSchedule s = retail_schedule();
    auto [u1, c1] = state1_settlement(2.0, 0.0, s);
    CHECK(u1 == doctest::Approx(0.20));
    CHECK(c1 == 0.0);
    auto [u2, c2] = state1_settlement(0.0, 3.0, s);
    CHECK(u2 == 0.0);
    CHECK(c2 == doctest::Approx(0.78));
    CHECK_THROWS_AS(state1_settlement(1.0, 1.0, s), ValidationError);
    CHECK_THROWS_AS(state1_settlement(-1.0, 0.0, s), ValidationError);
}

TEST_CASE("trade utilities match hand-computed values") {
    PriceSchedule s;
    s.scaling = 1.0;
    s.degradation = 1.0;
    // k(b_nc e - a e^2 / 2) - (p_l + p_c) e with e=10, b_nc=9, a=0.5, p_c=3
    CHECK(charge_utility(10.0, 9.0, 0.5, 3.0, s) == doctest::Approx(25.0));

    s.degradation = 0.5;
    // k(s e - a e^2 / 2) + (p_d - p_l) e with e=2, soc=3, a=1, p_d=1
    CHECK(discharge_utility(2.0, 3.0, 1.0, 1.0, s) == doctest::Approx(5.0));

    CHECK(charge_utility(0.0, 9.0, 0.5, 3.0, s) == 0.0);
    CHECK(discharge_utility(0.0, 3.0, 1.0, 1.0, s) == 0.0);
}

TEST_CASE("threshold prices delimit when a trade is worth anything") {
    const PriceSchedule s = retail_schedule();  // k=0.04, p_l=0.1
    const ProsumerConfig cfg = battery_of(10.0);
    CHECK(threshold_charge_price(cfg, {1.0}, s) == doctest::Approx(0.26));
    CHECK(threshold_discharge_price(cfg, {4.5}, s) == doctest::Approx(-0.08));

    // exactly at the threshold the optimum is zero, bit for bit
    const double t_c = threshold_charge_price(cfg, {1.0}, s);
    CHECK(optimal_charge(cfg, {1.0}, s, t_c, 100.0, 100.0) == 0.0);
    const double t_d = threshold_discharge_price(cfg, {4.5}, s);
    CHECK(optimal_discharge(cfg, {4.5}, s, t_d, 100.0) == 0.0);
    // and past it, still zero
    CHECK(optimal_charge(cfg, {1.0}, s, t_c + 0.01, 100.0, 100.0) == 0.0);
    CHECK(optimal_discharge(cfg, {4.5}, s, t_d - 0.01, 100.0) == 0.0);
}

TEST_CASE("optimal charge clamps against cap, headroom and surplus") {
    PriceSchedule s;
    s.scaling = 1.0;
    s.degradation = 1.0;
    const ProsumerConfig cfg = battery_of(20.0);
    const BatteryState empty{0.0};
    CHECK(optimal_charge(cfg, empty, s, 3.0, 100.0, 100.0) == doctest::Approx(16.0));
    CHECK(optimal_charge(cfg, empty, s, 3.0, 100.0, 10.0) == 10.0);   // surplus binds
    CHECK(optimal_charge(cfg, empty, s, 3.0, 12.0, 100.0) == 12.0);   // transfer cap binds
    CHECK(optimal_charge(cfg, {15.0}, s, 3.0, 100.0, 100.0) ==
          doctest::Approx(1.0));  // headroom shrinks the interior optimum
    CHECK(optimal_charge(cfg, empty, s, 3.0, 100.0, 0.0) == 0.0);     // nothing spare to buy
}

TEST_CASE("optimal discharge clamps against cap and depth") {
    PriceSchedule s;
    s.scaling = 1.0;
    s.degradation = 0.5;
    const ProsumerConfig cfg = battery_of(10.0, 2.0, 1.0);
    const BatteryState battery{9.0};
    CHECK(optimal_discharge(cfg, battery, s, 0.0, 5.0) == doctest::Approx(4.25));
    CHECK(optimal_discharge(cfg, battery, s, 0.0, 3.5) == 3.5);  // transfer cap binds
    CHECK(optimal_discharge(cfg, battery, s, 0.0, 5.0, 2.0) == 2.0);  // extra bound binds
    CHECK(optimal_discharge(cfg, {1.0}, s, 0.0, 5.0) == 0.0);  // at the floor already
}

TEST_CASE("clamped optima beat every feasible alternative on a grid") {
    testsupport::Rng rng{0x5eed0002};
    for (int trial = 0; trial < 400; ++trial) {
        const PriceSchedule s = testsupport::random_schedule(rng);
        ProsumerConfig cfg = testsupport::random_prosumer(rng, 0);
        if (cfg.battery_capacity <= 0.0) cfg.battery_capacity = rng.range(2.0, 15.0);
        const BatteryState battery{cfg.soc_min +
                                   (cfg.battery_capacity - cfg.soc_min) * rng.u01()};
        const double cap = rng.range(0.5, 8.0);
        const double surplus = rng.range(0.0, 5.0);
        const double price = rng.range(0.0, 0.8);

        const double e_c = optimal_charge(cfg, battery, s, price, cap, surplus);
        const double hi_c =
            std::min({cap, std::max(0.0, cfg.battery_capacity - battery.soc), surplus});
        const double u_c = charge_utility(e_c, cfg.battery_capacity - battery.soc, cfg.alpha,
                                          price, s);
        for (int g = 0; g <= 60; ++g) {
            const double e = hi_c * g / 60.0;
            const double u = charge_utility(e, cfg.battery_capacity - battery.soc, cfg.alpha,
                                            price, s);
            CHECK(u_c >= u - 1e-9);
        }

        const double e_d = optimal_discharge(cfg, battery, s, price, cap);
        const double hi_d = std::min(cap, std::max(0.0, battery.soc - cfg.soc_min));
        const double u_d = discharge_utility(e_d, battery.soc, cfg.alpha, price, s);
        for (int g = 0; g <= 60; ++g) {
            const double e = hi_d * g / 60.0;
            const double u = discharge_utility(e, battery.soc, cfg.alpha, price, s);
            CHECK(u_d >= u - 1e-9);
        }

        // interior optima sit where the marginal value crosses zero
        if (e_c > 1e-6 && e_c < hi_c - 1e-6) {
            const double h = 1e-6;
            const double slope = (charge_utility(e_c + h, cfg.battery_capacity - battery.soc,
                                                 cfg.alpha, price, s) -
                                  charge_utility(e_c - h, cfg.battery_capacity - battery.soc,
                                                 cfg.alpha, price, s)) /
                                 (2 * h);
            CHECK(std::abs(slope) < 1e-6);
        }
    }
}

TEST_CASE("state choice: deficit or a missing battery forces state 1") {
    const PriceSchedule s = retail_schedule();
    const MidPrices mid = mid_market_prices(s);
    const ProsumerConfig cfg = battery_of(10.0);

    EnergyBalance deficit;
    deficit.deficit = 0.5;
    StateDecision d = classify_state(cfg, {5.0}, deficit, s, mid, 7.0);
    CHECK(d.state == ProsumerState::State1);
    CHECK(d.optimal_quantity == 0.0);

    const ProsumerConfig none = battery_of(0.0);
    d = classify_state(none, {0.0}, {}, s, mid, 7.0);
    CHECK(d.state == ProsumerState::State1);
}

TEST_CASE("state choice: a nearly full battery becomes a provider") {
    const PriceSchedule s = retail_schedule();
    const MidPrices mid = mid_market_prices(s);
    const ProsumerConfig cfg = battery_of(10.0);
    const StateDecision d = classify_state(cfg, {9.5}, {}, s, mid, 7.0);
    CHECK(d.state == ProsumerState::State2Provider);
    CHECK(d.optimal_quantity == 7.0);  // transfer cap binds before the interior optimum
    CHECK(d.utility_at_optimum == doctest::Approx(2.24));
}

TEST_CASE("state choice: an empty battery under a dear wear price becomes a receiver") {
    PriceSchedule s = retail_schedule();
    s.degradation = 0.2;  // discourages discharging at the mid price
    s.beta = 0.0;
    const MidPrices mid = mid_market_prices(s);  // 0.18 / 0.18
    const ProsumerConfig cfg = battery_of(10.0);
    EnergyBalance bal;
    bal.surplus = 5.0;
    const StateDecision d = classify_state(cfg, {0.0}, bal, s, mid, 7.0);
    CHECK(d.state == ProsumerState::State2Receiver);
    CHECK(d.optimal_quantity == doctest::Approx(0.5));
    CHECK(d.utility_at_optimum == doctest::Approx(0.005));
}

TEST_CASE("state choice: no worthwhile direction stays in state 1") {
    PriceSchedule s = retail_schedule();
    s.degradation = 0.25;  // dear wear closes both directions for a small store
    const MidPrices mid = mid_market_prices(s);
    const ProsumerConfig cfg = battery_of(1.0);
    const StateDecision d = classify_state(cfg, {0.5}, {}, s, mid, 7.0);
    CHECK(d.state == ProsumerState::State1);
    CHECK(d.utility_at_optimum == 0.0);
}

TEST_CASE("state choice: both directions open picks the higher utility") {
    const PriceSchedule s = retail_schedule();
    const MidPrices mid = mid_market_prices(s);
    const ProsumerConfig cfg = battery_of(10.0);
    EnergyBalance bal;
    bal.surplus = 10.0;
    const StateDecision d = classify_state(cfg, {1.0}, bal, s, mid, 7.0);
    CHECK(d.state == ProsumerState::State2Provider);  // shallow store still sells best here
    CHECK(d.optimal_quantity == 1.0);
    CHECK(d.utility_at_optimum == doctest::Approx(0.1));
}

TEST_CASE("state choice: an exact utility tie resolves to state 1") {
    PriceSchedule s;
    s.grid_buy = 1.5;
    s.grid_sell = 0.5;
    s.beta = 0.0;
    s.degradation = 0.0;
    s.scaling = 1.0;
    const MidPrices mid = mid_market_prices(s);
    CHECK(mid.discharge == 1.0);

    const ProsumerConfig cfg = battery_of(7.5);
    EnergyBalance bal;
    bal.surplus = 1.0;
    // charge side: clamp to surplus 1 gives 5.5 - 0.5 - 1 = 4.0 exactly;
    // discharge side: depth 2 gives (4 - 2) + 2 = 4.0 exactly
    CHECK(charge_utility(1.0, 5.5, 1.0, 1.0, s) == 4.0);
    CHECK(discharge_utility(2.0, 2.0, 1.0, 1.0, s) == 4.0);
    const StateDecision d = classify_state(cfg, {2.0}, bal, s, mid, 100.0);
    CHECK(d.state == ProsumerState::State1);
    CHECK(d.optimal_quantity == 0.0);
    CHECK(d.utility_at_optimum == 0.0);
}

TEST_CASE("closed-form clearing equates the two sides") {
    PriceSchedule s;
    s.grid_buy = 1.2;
    s.grid_sell = 0.8;
    s.beta = 0.1;
    s.degradation = 2.0;
    s.scaling = 1.0;
    const ProviderQuote provider{3.0, 1.0};
    const ReceiverQuote receiver{5.0, 1.0};
    const ClearingResult r = clear_coalition2_prices({&provider, 1}, {&receiver, 1}, s);
    CHECK(r.discharge_price == doctest::Approx(2.0 / 2.1));
    CHECK(r.charge_price == doctest::Approx(1.1 * 2.0 / 2.1));
    CHECK(r.supply_at_clear == doctest::Approx(1.952380952381));
    CHECK(r.demand_at_clear == doctest::Approx(r.supply_at_clear));
    CHECK(r.alpha_d_used == 1.0);
    CHECK(r.alpha_c_used == 1.0);
    CHECK_FALSE(r.alpha_heterogeneous);
    CHECK(r.in_band);  // 0.952 sits inside [0.8, 1.2]

    s.grid_sell = 1.0;
    const ClearingResult tight = clear_coalition2_prices({&provider, 1}, {&receiver, 1}, s);
    CHECK_FALSE(tight.in_band);
}

TEST_CASE("clearing rejects a one-sided market") {
    const PriceSchedule s = retail_schedule();
    const ProviderQuote provider{3.0, 1.0};
    const ReceiverQuote receiver{5.0, 1.0};
    CHECK_THROWS_AS(clear_coalition2_prices({&provider, 1}, {}, s), NoMarketError);
    CHECK_THROWS_AS(clear_coalition2_prices({}, {&receiver, 1}, s), NoMarketError);
}

TEST_CASE("heterogeneous alphas enter through their side means") {
    PriceSchedule s;
    s.grid_buy = 1.2;
    s.grid_sell = 0.8;
    s.beta = 0.0;
    s.degradation = 1.0;
    s.scaling = 0.5;
    const ProviderQuote providers[] = {{3.0, 1.0}, {4.0, 3.0}};
    const ReceiverQuote receivers[] = {{5.0, 2.0}};
    const ClearingResult r = clear_coalition2_prices({providers, 2}, {receivers, 1}, s);
    CHECK(r.alpha_d_used == 2.0);
    CHECK(r.alpha_c_used == 2.0);
    CHECK(r.alpha_heterogeneous);
    CHECK(r.supply_at_clear == doctest::Approx(r.demand_at_clear));
    // the closed form solves exactly the aggregate balance it claims to
    CHECK(aggregate_supply({providers, 2}, s, r.discharge_price) ==
          doctest::Approx(aggregate_demand({receivers, 1}, s, r.charge_price)));
}

TEST_CASE("random clearings always balance supply and demand") {
    testsupport::Rng rng{0x5eed0003};
    for (int trial = 0; trial < 200; ++trial) {
        const PriceSchedule s = testsupport::random_schedule(rng);
        std::vector<ProviderQuote> providers;
        std::vector<ReceiverQuote> receivers;
        const int np = 1 + rng.index(6);
        const int nr = 1 + rng.index(6);
        for (int i = 0; i < np; ++i)
            providers.push_back({rng.range(0.5, 12.0), rng.range(0.4, 3.0)});
        for (int i = 0; i < nr; ++i)
            receivers.push_back({rng.range(0.5, 12.0), rng.range(0.4, 3.0)});
        const ClearingResult r = clear_coalition2_prices(providers, receivers, s);
        const double scale = std::max({1.0, std::abs(r.supply_at_clear)});
        CHECK(std::abs(r.supply_at_clear - r.demand_at_clear) <= 1e-9 * scale);
        CHECK(r.charge_price == doctest::Approx((1.0 + s.beta) * r.discharge_price));
    }
}
