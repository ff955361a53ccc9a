// Command line front end for the peertrade library. Subcommands cover the
// full workflow: generate a synthetic day, run the cooperative simulation,
// run the feed-in-tariff baseline, compare the two, price a coalition by
// hand and audit a stored results bundle.
//
// Exit codes: 0 success, 1 rejected input or an empty market, 2 anything
// unexpected (including a results bundle too damaged to parse).

#include <cstdlib>
#include <exception>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "peertrade/errors.hpp"
#include "peertrade/io.hpp"
#include "peertrade/simulation.hpp"

using namespace peertrade;

namespace {

std::string slurp(const std::string& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw IoError("cannot open " + file);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

std::string default_out_dir() {
    const char* env = std::getenv("PEERTRADE_OUT_DIR");
    return env ? env : "results";
}

int guarded(const std::function<void()>& body) {
    try {
        body();
        return 0;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const NoMarketError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}

struct LoadedInputs {
    std::string scenario_text;
    std::string readings_text;
    SimulationConfig config;
    ReadingsSeries readings;
};

LoadedInputs load_inputs(const std::string& config_path, const std::string& readings_path,
                         int slots_override) {
    LoadedInputs in;
    in.scenario_text = slurp(config_path);
    in.config = parse_scenario(in.scenario_text);
    if (slots_override > 0) in.config.slots_per_day = slots_override;
    in.readings_text = slurp(readings_path);
    in.readings = parse_readings(in.readings_text);
    return in;
}

void print_daily_table(std::ostream& os, const ComparisonReport& report) {
    os << "prosumer        p2p_net      fit_net        delta\n";
    for (const auto& [id, p2p] : report.daily_p2p) {
        os << id;
        for (std::size_t pad = id.size(); pad < 12; ++pad) os << ' ';
        os << ' ' << format_number(p2p) << ' ' << format_number(report.daily_fit.at(id)) << ' '
           << format_number(report.daily_delta.at(id)) << "\n";
    }
}

int run_simulate(const std::string& config_path, const std::string& readings_path,
                 const std::string& out_dir, int slots_override, bool quiet) {
    return guarded([&] {
        ResultsBundle bundle;
        LoadedInputs in = load_inputs(config_path, readings_path, slots_override);
        bundle.scenario_text = std::move(in.scenario_text);
        bundle.readings_text = std::move(in.readings_text);
        bundle.config = std::move(in.config);
        bundle.p2p = run_simulation(bundle.config, in.readings);
        bundle.fit = fit_baseline(bundle.config, in.readings);
        bundle.comparison = compare(bundle.p2p, bundle.fit);
        write_results(bundle, out_dir);

        if (quiet) return;
        double p2p_total = 0.0, fit_total = 0.0;
        for (const SlotOutcome& slot : bundle.p2p.outcomes) p2p_total += social_welfare(slot);
        for (const SlotOutcome& slot : bundle.fit.outcomes) fit_total += social_welfare(slot);
        int market_slots = 0, out_of_band = 0;
        for (const SlotOutcome& slot : bundle.p2p.outcomes) {
            if (!slot.partition.providers.empty()) ++market_slots;
            if (slot.prices.discharge_s2 && !slot.prices.s2_in_band) ++out_of_band;
        }
        std::cout << "slots: " << bundle.config.slots_per_day
                  << "  prosumers: " << bundle.config.roster.size() << "\n"
                  << "p2p welfare: " << format_number(p2p_total)
                  << "  fit welfare: " << format_number(fit_total)
                  << "  min delta: " << format_number(bundle.comparison.min_delta) << "\n"
                  << "market slots: " << market_slots << " of " << bundle.config.slots_per_day
                  << "  out-of-band price reports: " << out_of_band << "\n"
                  << "wrote results to " << out_dir << "\n";
    });
}

int run_baseline(const std::string& config_path, const std::string& readings_path,
                 int slots_override) {
    return guarded([&] {
        const LoadedInputs in = load_inputs(config_path, readings_path, slots_override);
        const SimulationRun fit = fit_baseline(in.config, in.readings);
        std::map<std::string, double> daily;
        for (const SlotOutcome& slot : fit.outcomes)
            for (const ProsumerOutcome& row : slot.prosumers) daily[row.id] += row.net_benefit;
        double total = 0.0;
        std::cout << "prosumer        net_benefit\n";
        for (const auto& [id, net] : daily) {
            std::cout << id;
            for (std::size_t pad = id.size(); pad < 12; ++pad) std::cout << ' ';
            std::cout << ' ' << format_number(net) << "\n";
            total += net;
        }
        std::cout << "total: " << format_number(total) << "\n";
    });
}

int run_compare(const std::string& config_path, const std::string& readings_path,
                int slots_override) {
    return guarded([&] {
        const LoadedInputs in = load_inputs(config_path, readings_path, slots_override);
        const SimulationRun p2p = run_simulation(in.config, in.readings);
        const SimulationRun fit = fit_baseline(in.config, in.readings);
        const ComparisonReport report = compare(p2p, fit);
        print_daily_table(std::cout, report);
        std::cout << "min delta: " << format_number(report.min_delta)
                  << "  detrimental rows: " << report.violations.size() << "\n";
    });
}

int run_gen_data(const std::string& config_path, const std::string& out_file,
                 int slots_override, std::uint64_t seed_override, bool seed_given,
                 double pv_scale) {
    return guarded([&] {
        const SimulationConfig config = parse_scenario(slurp(config_path));
        const int slots = slots_override > 0 ? slots_override : config.slots_per_day;
        const std::uint64_t seed = seed_given ? seed_override : config.seed;
        const ReadingsSeries series =
            gen_synthetic_readings(config.roster, slots, seed, pv_scale);
        save_readings(series, out_file);
        std::cout << "wrote " << slots << " slots for " << series.size() << " prosumers to "
                  << out_file << "\n";
    });
}

int run_clear_prices(const std::string& config_path, const std::string& instance_path,
                     int slot) {
    return guarded([&] {
        const SimulationConfig config = parse_scenario(slurp(config_path));
        if (slot < 0 || slot >= config.slots_per_day)
            throw ValidationError("slot must lie in [0, slots_per_day)");
        const PriceSchedule schedule = config.prices.at(slot);

        nlohmann::json j;
        try {
            j = nlohmann::json::parse(slurp(instance_path));
        } catch (const nlohmann::json::exception& e) {
            throw ValidationError(std::string("instance: invalid json: ") + e.what());
        }
        std::vector<ProviderQuote> providers;
        std::vector<ReceiverQuote> receivers;
        for (const auto& p : j.value("providers", nlohmann::json::array()))
            providers.push_back({p.at("soc").get<double>(), p.value("alpha", 1.0)});
        for (const auto& r : j.value("receivers", nlohmann::json::array()))
            receivers.push_back({r.at("capacity_gap").get<double>(), r.value("alpha", 1.0)});

        const ClearingResult result = clear_coalition2_prices(providers, receivers, schedule);
        std::cout << "discharge price: " << format_number(result.discharge_price) << "\n"
                  << "charge price: " << format_number(result.charge_price) << "\n"
                  << "supply at clear: " << format_number(result.supply_at_clear) << "\n"
                  << "demand at clear: " << format_number(result.demand_at_clear) << "\n";
        if (!result.in_band)
            std::cerr << "warning: discharge price " << format_number(result.discharge_price)
                      << " lies outside the grid band [" << format_number(schedule.grid_sell)
                      << ", " << format_number(schedule.grid_buy) << "]\n";
    });
}

int run_verify(const std::string& dir, bool quiet) {
    try {
        const VerifyReport report = verify_bundle(dir);
        if (report.ok) {
            if (!quiet) std::cout << "ok: bundle verifies clean\n";
            return 0;
        }
        for (const VerifyIssue& issue : report.issues)
            std::cerr << "issue: " << issue.where << ": " << issue.detail << "\n";
        std::cerr << report.issues.size() << " issue(s) found\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: bundle unreadable: " << e.what() << "\n";
        return 2;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"cooperative battery-sharing market simulator"};
    app.set_version_flag("--version", "peertrade 0.1.0");
    app.require_subcommand(1);

    std::string config_path, readings_path, instance_path, dir;
    std::string out_dir = default_out_dir();
    std::string out_file = "readings.csv";
    int slots_override = 0;
    int slot = 0;
    std::uint64_t seed_override = 0;
    double pv_scale = 1.0;
    bool quiet = false;

    CLI::App* simulate = app.add_subcommand("simulate", "run the cooperative day and write a bundle");
    simulate->add_option("--config", config_path, "scenario json")->required();
    simulate->add_option("--readings", readings_path, "readings csv")->required();
    simulate->add_option("--out", out_dir, "output directory")->capture_default_str();
    simulate->add_option("--slots", slots_override, "override slots_per_day");
    simulate->add_flag("--quiet", quiet, "suppress the summary");

    CLI::App* baseline = app.add_subcommand("baseline", "run the feed-in-tariff reference day");
    baseline->add_option("--config", config_path, "scenario json")->required();
    baseline->add_option("--readings", readings_path, "readings csv")->required();
    baseline->add_option("--slots", slots_override, "override slots_per_day");

    CLI::App* cmp = app.add_subcommand("compare", "daily per-prosumer deltas against the baseline");
    cmp->add_option("--config", config_path, "scenario json")->required();
    cmp->add_option("--readings", readings_path, "readings csv")->required();
    cmp->add_option("--slots", slots_override, "override slots_per_day");

    CLI::App* gen = app.add_subcommand("gen-data", "write a synthetic readings csv");
    gen->add_option("--config", config_path, "scenario json")->required();
    gen->add_option("--out", out_file, "output csv path")->capture_default_str();
    gen->add_option("--slots", slots_override, "override slots_per_day");
    CLI::Option* seed_opt = gen->add_option("--seed", seed_override, "override the scenario seed");
    gen->add_option("--pv-scale", pv_scale, "scale solar output (0 = overcast)")
        ->capture_default_str();

    CLI::App* clear = app.add_subcommand("clear-prices", "price a provider/receiver coalition");
    clear->add_option("--config", config_path, "scenario json for the tariff schedule")->required();
    clear->add_option("--instance", instance_path, "coalition membership json")->required();
    clear->add_option("--slot", slot, "slot whose tariffs apply")->capture_default_str();

    CLI::App* verify = app.add_subcommand("verify", "audit a stored results bundle");
    verify->add_option("--dir", dir, "bundle directory")->required();
    verify->add_flag("--quiet", quiet, "only set the exit code");

    CLI11_PARSE(app, argc, argv);

    if (simulate->parsed())
        return run_simulate(config_path, readings_path, out_dir, slots_override, quiet);
    if (baseline->parsed()) return run_baseline(config_path, readings_path, slots_override);
    if (cmp->parsed()) return run_compare(config_path, readings_path, slots_override);
    if (gen->parsed())
        return run_gen_data(config_path, out_file, slots_override, seed_override,
                            seed_opt->count() > 0, pv_scale);
    if (clear->parsed()) return run_clear_prices(config_path, instance_path, slot);
    if (verify->parsed()) return run_verify(dir, quiet);
    return 2;  // unreachable with require_subcommand(1)
}
