#include "peertrade/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"

#include "peertrade/errors.hpp"

namespace peertrade {

using nlohmann::json;

namespace {

constexpr const char* kGenerator = "peertrade 0.1.0";
constexpr const char* kBundleFormat = "peertrade-bundle/1";

constexpr const char* kReadingsHeader = "prosumer_id,slot,pv_kwh,demand_kwh";
constexpr const char* kOutcomesHeader =
    "slot,prosumer_id,state,classified,deficit_locked,no_battery,pv_kwh,demand_kwh,"
    "self_consumption_kwh,charged_kwh,discharged_kwh,surplus_kwh,deficit_kwh,soc_before_kwh,"
    "soc_after_kwh,available_capacity_kwh,transfer_cap_kwh,alpha,battery_capacity_kwh,"
    "soc_min_kwh,charge_threshold,discharge_threshold,classified_quantity_kwh,"
    "classified_utility,traded_kwh,utility,cost,net_benefit,grid_buy,grid_sell,beta,"
    "degradation,scaling,p_d_mid,p_c_mid,p_d_s2,p_c_s2,s2_in_band,alpha_d_used,alpha_c_used";
constexpr const char* kPartitionHeader = "slot,prosumer_id,coalition,previous_coalition,action";
constexpr const char* kComparisonHeader =
    "slot,prosumer_id,p2p_net_benefit,fit_net_benefit,delta";

std::vector<std::string_view> split_lines(std::string_view text) {
    std::vector<std::string_view> lines;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        std::size_t end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        std::string_view line = text.substr(pos, end - pos);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        lines.push_back(line);
        if (end == text.size()) break;
        pos = end + 1;
    }
    // a trailing newline yields one empty tail entry; drop it
    while (!lines.empty() && lines.back().empty()) lines.pop_back();
    return lines;
}

std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> fields;
    std::size_t pos = 0;
    while (true) {
        std::size_t comma = line.find(',', pos);
        if (comma == std::string_view::npos) {
            fields.push_back(line.substr(pos));
            break;
        }
        fields.push_back(line.substr(pos, comma - pos));
        pos = comma + 1;
    }
    return fields;
}

double parse_double_field(std::string_view field, std::size_t row, const char* what) {
    double v = 0.0;
    const auto* begin = field.data();
    const auto* end = field.data() + field.size();
    auto [ptr, ec] = std::from_chars(begin, end, v);
    if (ec != std::errc() || ptr != end)
        throw DataError(DataError::Kind::MalformedRow,
                        "row " + std::to_string(row) + ": cannot parse " + what + " from '" +
                            std::string(field) + "'");
    return v;
}

long parse_int_field(std::string_view field, std::size_t row, const char* what) {
    long v = 0;
    const auto* begin = field.data();
    const auto* end = field.data() + field.size();
    auto [ptr, ec] = std::from_chars(begin, end, v);
    if (ec != std::errc() || ptr != end)
        throw DataError(DataError::Kind::MalformedRow,
                        "row " + std::to_string(row) + ": cannot parse " + what + " from '" +
                            std::string(field) + "'");
    return v;
}

bool parse_bool_field(std::string_view field, std::size_t row, const char* what) {
    if (field == "1") return true;
    if (field == "0") return false;
    throw DataError(DataError::Kind::MalformedRow,
                    "row " + std::to_string(row) + ": " + what + " must be 0 or 1");
}

const char* state_name(ProsumerState s) {
    switch (s) {
        case ProsumerState::State1: return "state1";
        case ProsumerState::State2Provider: return "provider";
        case ProsumerState::State2Receiver: return "receiver";
    }
    return "state1";
}

ProsumerState parse_state(std::string_view field, std::size_t row) {
    if (field == "state1") return ProsumerState::State1;
    if (field == "provider") return ProsumerState::State2Provider;
    if (field == "receiver") return ProsumerState::State2Receiver;
    throw DataError(DataError::Kind::MalformedRow,
                    "row " + std::to_string(row) + ": unknown state '" + std::string(field) + "'");
}

const char* coalition_letter(ProsumerState s) {
    switch (s) {
        case ProsumerState::State1: return "W";
        case ProsumerState::State2Provider: return "K";
        case ProsumerState::State2Receiver: return "L";
    }
    return "W";
}

std::string read_file(const std::filesystem::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw IoError("cannot open " + file.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_file(const std::filesystem::path& file, std::string_view content) {
    std::ofstream out(file, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + file.string());
    out << content;
    if (!out) throw IoError("cannot write " + file.string());
}

}  // namespace

std::string format_number(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

std::string content_hash(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[32];
    std::snprintf(buf, sizeof(buf), "fnv1a64:%016llx", static_cast<unsigned long long>(h));
    return buf;
}

ReadingsSeries parse_readings(std::string_view text) {
    const auto lines = split_lines(text);
    if (lines.empty())
        throw DataError(DataError::Kind::MalformedRow, "readings: empty file");
    if (lines.front() != kReadingsHeader)
        throw DataError(DataError::Kind::MalformedRow,
                        std::string("readings: header must be '") + kReadingsHeader + "'");

    std::map<std::string, std::map<long, SlotReading>> acc;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const std::size_t row = i + 1;  // 1-based, counting the header
        if (lines[i].empty()) continue;
        const auto fields = split_fields(lines[i]);
        if (fields.size() != 4)
            throw DataError(DataError::Kind::MalformedRow,
                            "row " + std::to_string(row) + ": expected 4 fields, got " +
                                std::to_string(fields.size()));
        const std::string id(fields[0]);
        if (id.empty())
            throw DataError(DataError::Kind::MalformedRow,
                            "row " + std::to_string(row) + ": empty prosumer_id");
        const long slot = parse_int_field(fields[1], row, "slot");
        if (slot < 0)
            throw DataError(DataError::Kind::MalformedRow,
                            "row " + std::to_string(row) + ": slot must be >= 0");
        const double pv = parse_double_field(fields[2], row, "pv_kwh");
        const double demand = parse_double_field(fields[3], row, "demand_kwh");
        for (auto [v, name] : {std::pair{pv, "pv_kwh"}, std::pair{demand, "demand_kwh"}}) {
            if (!std::isfinite(v))
                throw DataError(DataError::Kind::NonFinite,
                                "row " + std::to_string(row) + ": " + name + " must be finite");
            if (v < 0.0)
                throw DataError(DataError::Kind::NegativeValue,
                                "row " + std::to_string(row) + ": " + name +
                                    " must be >= 0 (prosumer " + id + ", slot " +
                                    std::to_string(slot) + ")");
        }
        if (!acc[id].emplace(slot, SlotReading{pv, demand}).second)
            throw DataError(DataError::Kind::DuplicateKey,
                            "row " + std::to_string(row) + ": duplicate reading for prosumer " +
                                id + ", slot " + std::to_string(slot));
    }
    if (acc.empty()) throw DataError(DataError::Kind::MalformedRow, "readings: no data rows");

    std::size_t expected = 0;
    for (const auto& [id, slots] : acc) expected = std::max(expected, slots.size());

    ReadingsSeries series;
    for (const auto& [id, slots] : acc) {
        const long max_slot = slots.rbegin()->first;
        for (long s = 0; s <= max_slot; ++s)
            if (!slots.count(s))
                throw DataError(DataError::Kind::SlotGap, "prosumer " + id + " is missing slot " +
                                                              std::to_string(s));
        if (slots.size() != expected)
            throw DataError(DataError::Kind::SlotGap,
                            "prosumer " + id + " has " + std::to_string(slots.size()) +
                                " slots, expected " + std::to_string(expected));
        auto& rows = series[id];
        rows.reserve(slots.size());
        for (const auto& [s, reading] : slots) rows.push_back(reading);
    }
    return series;
}

ReadingsSeries load_readings(const std::filesystem::path& file) {
    return parse_readings(read_file(file));
}

std::string readings_to_csv(const ReadingsSeries& readings) {
    std::string out = kReadingsHeader;
    out += '\n';
    for (const auto& [id, rows] : readings) {
        for (std::size_t t = 0; t < rows.size(); ++t) {
            out += id;
            out += ',';
            out += std::to_string(t);
            out += ',';
            out += format_number(rows[t].pv);
            out += ',';
            out += format_number(rows[t].demand);
            out += '\n';
        }
    }
    return out;
}

void save_readings(const ReadingsSeries& readings, const std::filesystem::path& file) {
    write_file(file, readings_to_csv(readings));
}

namespace {

double require_number(const json& j, const char* key, const char* ctx) {
    if (!j.contains(key) || !j.at(key).is_number())
        throw ValidationError(std::string("scenario: ") + ctx + "." + key +
                              " must be a number");
    return j.at(key).get<double>();
}

double number_or(const json& j, const char* key, double fallback, const char* ctx) {
    if (!j.contains(key)) return fallback;
    if (!j.at(key).is_number())
        throw ValidationError(std::string("scenario: ") + ctx + "." + key +
                              " must be a number");
    return j.at(key).get<double>();
}

std::vector<double> price_series(const json& prices, const char* key) {
    if (!prices.contains(key))
        throw ValidationError(std::string("scenario: prices.") + key + " is required");
    const json& v = prices.at(key);
    if (v.is_number()) return {v.get<double>()};
    if (v.is_array() && !v.empty()) {
        std::vector<double> series;
        for (const auto& item : v) {
            if (!item.is_number())
                throw ValidationError(std::string("scenario: prices.") + key +
                                      " entries must be numbers");
            series.push_back(item.get<double>());
        }
        return series;
    }
    throw ValidationError(std::string("scenario: prices.") + key +
                          " must be a number or a non-empty array");
}

}  // namespace

SimulationConfig parse_scenario(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ValidationError(std::string("scenario: invalid json: ") + e.what());
    }
    if (!j.is_object()) throw ValidationError("scenario: top level must be an object");

    SimulationConfig cfg;
    if (!j.contains("slots_per_day") || !j.at("slots_per_day").is_number_integer())
        throw ValidationError("scenario: slots_per_day must be an integer");
    cfg.slots_per_day = j.at("slots_per_day").get<int>();
    if (j.contains("seed")) {
        if (!j.at("seed").is_number_unsigned() && !j.at("seed").is_number_integer())
            throw ValidationError("scenario: seed must be an integer");
        cfg.seed = j.at("seed").get<std::uint64_t>();
    }

    if (!j.contains("prices") || !j.at("prices").is_object())
        throw ValidationError("scenario: prices object is required");
    const json& prices = j.at("prices");
    cfg.prices.grid_buy = price_series(prices, "grid_buy");
    cfg.prices.grid_sell = price_series(prices, "grid_sell");
    cfg.prices.beta = number_or(prices, "beta", 0.0, "prices");
    cfg.prices.degradation = number_or(prices, "degradation", 0.0, "prices");
    cfg.prices.scaling = require_number(prices, "scaling", "prices");

    if (!j.contains("network") || !j.at("network").is_object())
        throw ValidationError("scenario: network object is required");
    const json& network = j.at("network");
    cfg.limits.transfer_limit = require_number(network, "transfer_limit", "network");
    if (network.contains("combiner")) {
        const std::string mode = network.at("combiner").get<std::string>();
        if (mode == "per-paper-max")
            cfg.limits.combiner = CombinerMode::PerPaperMax;
        else if (mode == "cap-min")
            cfg.limits.combiner = CombinerMode::CapMin;
        else
            throw ValidationError("scenario: network.combiner must be 'per-paper-max' or 'cap-min'");
    }

    if (j.contains("options")) {
        const json& options = j.at("options");
        if (!options.is_object()) throw ValidationError("scenario: options must be an object");
        if (options.contains("clamp_s2_to_band"))
            cfg.options.clamp_s2_to_band = options.at("clamp_s2_to_band").get<bool>();
        if (options.contains("state1_matched_volume"))
            cfg.options.state1_matched_volume = options.at("state1_matched_volume").get<bool>();
    }

    if (!j.contains("prosumers") || !j.at("prosumers").is_array() || j.at("prosumers").empty())
        throw ValidationError("scenario: prosumers must be a non-empty array");
    for (const json& p : j.at("prosumers")) {
        if (!p.is_object() || !p.contains("id") || !p.at("id").is_string())
            throw ValidationError("scenario: every prosumer needs a string id");
        ProsumerConfig pc;
        pc.id = p.at("id").get<std::string>();
        const std::string ctx = "prosumers[" + pc.id + "]";
        pc.battery_capacity = number_or(p, "battery_capacity", 0.0, ctx.c_str());
        pc.alpha = number_or(p, "alpha", 1.0, ctx.c_str());
        pc.soc_min = number_or(p, "soc_min", 0.0, ctx.c_str());
        pc.rated_rate = number_or(p, "rated_rate", 0.0, ctx.c_str());
        pc.charge_efficiency = number_or(p, "charge_efficiency", 1.0, ctx.c_str());
        if (p.contains("initial_soc"))
            pc.initial_soc = require_number(p, "initial_soc", ctx.c_str());
        cfg.roster.push_back(std::move(pc));
    }

    cfg.validate();
    return cfg;
}

SimulationConfig load_scenario(const std::filesystem::path& file) {
    return parse_scenario(read_file(file));
}

std::string outcomes_to_csv(const std::vector<SlotOutcome>& outcomes) {
    std::string out = kOutcomesHeader;
    out += '\n';
    for (const SlotOutcome& slot : outcomes) {
        for (const ProsumerOutcome& row : slot.prosumers) {
            out += std::to_string(slot.slot);
            out += ',';
            out += row.id;
            out += ',';
            out += state_name(row.state);
            out += ',';
            out += state_name(row.classified);
            out += ',';
            out += row.deficit_locked ? "1" : "0";
            out += ',';
            out += row.no_battery ? "1" : "0";
            for (double v : {row.pv, row.demand, row.self_consumption, row.charged,
                             row.discharged, row.surplus, row.deficit, row.soc_before,
                             row.soc_after, row.available_capacity, row.transfer_cap, row.alpha,
                             row.battery_capacity, row.soc_min, row.charge_threshold,
                             row.discharge_threshold, row.classified_quantity,
                             row.classified_utility, row.traded, row.utility, row.cost,
                             row.net_benefit, slot.schedule.grid_buy, slot.schedule.grid_sell,
                             slot.schedule.beta, slot.schedule.degradation,
                             slot.schedule.scaling, slot.prices.discharge_mid,
                             slot.prices.charge_mid}) {
                out += ',';
                out += format_number(v);
            }
            out += ',';
            if (slot.prices.discharge_s2) out += format_number(*slot.prices.discharge_s2);
            out += ',';
            if (slot.prices.charge_s2) out += format_number(*slot.prices.charge_s2);
            out += ',';
            out += slot.prices.s2_in_band ? "1" : "0";
            out += ',';
            out += format_number(slot.alpha_d_used);
            out += ',';
            out += format_number(slot.alpha_c_used);
            out += '\n';
        }
    }
    return out;
}

std::string partition_to_csv(const std::vector<SlotOutcome>& outcomes,
                             const std::vector<TransitionLog>& transitions) {
    if (outcomes.size() != transitions.size())
        throw ValidationError("partition_to_csv: outcomes and transitions must align");
    std::string out = kPartitionHeader;
    out += '\n';
    for (std::size_t t = 0; t < outcomes.size(); ++t) {
        const SlotOutcome& slot = outcomes[t];
        const TransitionLog& log = transitions[t];
        if (log.size() != slot.prosumers.size())
            throw ValidationError("partition_to_csv: transition log must cover the roster");
        for (std::size_t i = 0; i < slot.prosumers.size(); ++i) {
            const ProsumerOutcome& row = slot.prosumers[i];
            const TransitionRecord& rec = log[i];
            if (rec.id != row.id)
                throw ValidationError("partition_to_csv: transition order mismatch");
            out += std::to_string(slot.slot);
            out += ',';
            out += row.id;
            out += ',';
            out += coalition_letter(row.state);
            out += ',';
            out += coalition_letter(rec.previous);
            out += ',';
            out += rec.actions.size() == 1 ? "stay" : "split+merge";
            out += '\n';
        }
    }
    return out;
}

std::string comparison_to_csv(const ComparisonReport& report) {
    std::string out = kComparisonHeader;
    out += '\n';
    for (const ComparisonRow& row : report.rows) {
        out += std::to_string(row.slot);
        out += ',';
        out += row.id;
        out += ',';
        out += format_number(row.p2p_net);
        out += ',';
        out += format_number(row.fit_net);
        out += ',';
        out += format_number(row.delta);
        out += '\n';
    }
    return out;
}

namespace {

json build_manifest(const ResultsBundle& bundle, std::size_t outcome_rows,
                    std::size_t partition_rows, std::size_t comparison_rows) {
    double p2p_total = 0.0, fit_total = 0.0;
    for (const SlotOutcome& slot : bundle.p2p.outcomes) p2p_total += social_welfare(slot);
    for (const SlotOutcome& slot : bundle.fit.outcomes) fit_total += social_welfare(slot);

    json m;
    m["format"] = kBundleFormat;
    m["generator"] = kGenerator;
    m["config_hash"] = content_hash(bundle.scenario_text);
    m["readings_hash"] = content_hash(bundle.readings_text);
    m["n_prosumers"] = bundle.config.roster.size();
    m["slots"] = bundle.config.slots_per_day;
    m["seed"] = bundle.config.seed;
    m["rows"] = {{"outcomes", outcome_rows},
                 {"partition", partition_rows},
                 {"comparison", comparison_rows}};
    m["welfare"] = {{"p2p_total", format_number(p2p_total)},
                    {"fit_total", format_number(fit_total)},
                    {"min_delta", format_number(bundle.comparison.min_delta)}};
    return m;
}

std::size_t count_rows(const std::string& csv) {
    // data rows: lines minus the header
    std::size_t lines = 0;
    for (char c : csv)
        if (c == '\n') ++lines;
    return lines == 0 ? 0 : lines - 1;
}

}  // namespace

void write_results(const ResultsBundle& bundle, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

    const std::string outcomes = outcomes_to_csv(bundle.p2p.outcomes);
    const std::string partition = partition_to_csv(bundle.p2p.outcomes, bundle.p2p.transitions);
    const std::string comparison = comparison_to_csv(bundle.comparison);
    const json manifest = build_manifest(bundle, count_rows(outcomes), count_rows(partition),
                                         count_rows(comparison));

    write_file(dir / "scenario.json", bundle.scenario_text);
    write_file(dir / "readings.csv", bundle.readings_text);
    write_file(dir / "outcomes.csv", outcomes);
    write_file(dir / "partition.csv", partition);
    write_file(dir / "comparison.csv", comparison);
    write_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

namespace {

std::vector<SlotOutcome> parse_outcomes_csv(const std::string& text) {
    const auto lines = split_lines(text);
    if (lines.empty() || lines.front() != kOutcomesHeader)
        throw DataError(DataError::Kind::MalformedRow, "outcomes.csv: bad or missing header");

    std::vector<SlotOutcome> outcomes;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const std::size_t rownum = i + 1;
        const auto f = split_fields(lines[i]);
        if (f.size() != 40)
            throw DataError(DataError::Kind::MalformedRow,
                            "outcomes.csv row " + std::to_string(rownum) +
                                ": expected 40 fields, got " + std::to_string(f.size()));
        const int slot = static_cast<int>(parse_int_field(f[0], rownum, "slot"));
        if (outcomes.empty() || outcomes.back().slot != slot) {
            if (!outcomes.empty() && slot < outcomes.back().slot)
                throw DataError(DataError::Kind::MalformedRow,
                                "outcomes.csv row " + std::to_string(rownum) +
                                    ": slots out of order");
            SlotOutcome s;
            s.slot = slot;
            outcomes.push_back(std::move(s));
        }
        SlotOutcome& out = outcomes.back();

        ProsumerOutcome row;
        row.id = std::string(f[1]);
        row.state = parse_state(f[2], rownum);
        row.classified = parse_state(f[3], rownum);
        row.deficit_locked = parse_bool_field(f[4], rownum, "deficit_locked");
        row.no_battery = parse_bool_field(f[5], rownum, "no_battery");
        std::size_t idx = 6;
        auto num = [&](const char* what) { return parse_double_field(f[idx++], rownum, what); };
        row.pv = num("pv_kwh");
        row.demand = num("demand_kwh");
        row.self_consumption = num("self_consumption_kwh");
        row.charged = num("charged_kwh");
        row.discharged = num("discharged_kwh");
        row.surplus = num("surplus_kwh");
        row.deficit = num("deficit_kwh");
        row.soc_before = num("soc_before_kwh");
        row.soc_after = num("soc_after_kwh");
        row.available_capacity = num("available_capacity_kwh");
        row.transfer_cap = num("transfer_cap_kwh");
        row.alpha = num("alpha");
        row.battery_capacity = num("battery_capacity_kwh");
        row.soc_min = num("soc_min_kwh");
        row.charge_threshold = num("charge_threshold");
        row.discharge_threshold = num("discharge_threshold");
        row.classified_quantity = num("classified_quantity_kwh");
        row.classified_utility = num("classified_utility");
        row.traded = num("traded_kwh");
        row.utility = num("utility");
        row.cost = num("cost");
        row.net_benefit = num("net_benefit");
        out.schedule.grid_buy = num("grid_buy");
        out.schedule.grid_sell = num("grid_sell");
        out.schedule.beta = num("beta");
        out.schedule.degradation = num("degradation");
        out.schedule.scaling = num("scaling");
        out.prices.discharge_mid = num("p_d_mid");
        out.prices.charge_mid = num("p_c_mid");
        if (f[idx].empty()) {
            ++idx;
        } else {
            out.prices.discharge_s2 = num("p_d_s2");
        }
        if (f[idx].empty()) {
            ++idx;
        } else {
            out.prices.charge_s2 = num("p_c_s2");
        }
        out.prices.s2_in_band = parse_bool_field(f[idx++], rownum, "s2_in_band");
        out.alpha_d_used = num("alpha_d_used");
        out.alpha_c_used = num("alpha_c_used");

        out.partition.slot = slot;
        switch (row.state) {
            case ProsumerState::State1: out.partition.state1.push_back(row.id); break;
            case ProsumerState::State2Provider: out.partition.providers.push_back(row.id); break;
            case ProsumerState::State2Receiver: out.partition.receivers.push_back(row.id); break;
        }
        out.prosumers.push_back(std::move(row));
    }

    for (SlotOutcome& out : outcomes) {
        std::sort(out.prosumers.begin(), out.prosumers.end(),
                  [](const ProsumerOutcome& a, const ProsumerOutcome& b) { return a.id < b.id; });
        for (auto* set : {&out.partition.state1, &out.partition.providers,
                          &out.partition.receivers})
            std::sort(set->begin(), set->end());
    }
    return outcomes;
}

std::vector<PartitionCsvRow> parse_partition_csv(const std::string& text) {
    const auto lines = split_lines(text);
    if (lines.empty() || lines.front() != kPartitionHeader)
        throw DataError(DataError::Kind::MalformedRow, "partition.csv: bad or missing header");
    std::vector<PartitionCsvRow> rows;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const std::size_t rownum = i + 1;
        const auto f = split_fields(lines[i]);
        if (f.size() != 5)
            throw DataError(DataError::Kind::MalformedRow,
                            "partition.csv row " + std::to_string(rownum) +
                                ": expected 5 fields");
        PartitionCsvRow row;
        row.slot = static_cast<int>(parse_int_field(f[0], rownum, "slot"));
        row.id = std::string(f[1]);
        row.coalition = std::string(f[2]);
        row.previous_coalition = std::string(f[3]);
        row.action = std::string(f[4]);
        for (const std::string* c : {&row.coalition, &row.previous_coalition})
            if (*c != "W" && *c != "K" && *c != "L")
                throw DataError(DataError::Kind::MalformedRow,
                                "partition.csv row " + std::to_string(rownum) +
                                    ": coalition must be W, K or L");
        if (row.action != "stay" && row.action != "split+merge")
            throw DataError(DataError::Kind::MalformedRow,
                            "partition.csv row " + std::to_string(rownum) + ": unknown action");
        rows.push_back(std::move(row));
    }
    return rows;
}

std::vector<ComparisonRow> parse_comparison_csv(const std::string& text) {
    const auto lines = split_lines(text);
    if (lines.empty() || lines.front() != kComparisonHeader)
        throw DataError(DataError::Kind::MalformedRow, "comparison.csv: bad or missing header");
    std::vector<ComparisonRow> rows;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const std::size_t rownum = i + 1;
        const auto f = split_fields(lines[i]);
        if (f.size() != 5)
            throw DataError(DataError::Kind::MalformedRow,
                            "comparison.csv row " + std::to_string(rownum) +
                                ": expected 5 fields");
        ComparisonRow row;
        row.slot = static_cast<int>(parse_int_field(f[0], rownum, "slot"));
        row.id = std::string(f[1]);
        row.p2p_net = parse_double_field(f[2], rownum, "p2p_net_benefit");
        row.fit_net = parse_double_field(f[3], rownum, "fit_net_benefit");
        row.delta = parse_double_field(f[4], rownum, "delta");
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace

StoredBundle load_results(const std::filesystem::path& dir) {
    StoredBundle b;
    b.scenario_text = read_file(dir / "scenario.json");
    b.readings_text = read_file(dir / "readings.csv");
    b.outcomes_text = read_file(dir / "outcomes.csv");
    b.partition_text = read_file(dir / "partition.csv");
    b.comparison_text = read_file(dir / "comparison.csv");
    b.manifest_text = read_file(dir / "manifest.json");
    b.outcomes = parse_outcomes_csv(b.outcomes_text);
    b.partition_rows = parse_partition_csv(b.partition_text);
    b.comparison_rows = parse_comparison_csv(b.comparison_text);
    return b;
}

VerifyReport verify_bundle(const std::filesystem::path& dir) {
    const StoredBundle stored = load_results(dir);

    VerifyReport report;
    auto flag = [&report](const std::string& where, const std::string& detail) {
        report.issues.push_back({where, detail});
    };

    json manifest;
    try {
        manifest = json::parse(stored.manifest_text);
    } catch (const json::exception& e) {
        throw DataError(DataError::Kind::MalformedRow,
                        std::string("manifest.json: invalid json: ") + e.what());
    }

    // Manifest integrity.
    try {
        if (manifest.at("format").get<std::string>() != kBundleFormat)
            flag("manifest.json", "unknown bundle format");
        if (manifest.at("config_hash").get<std::string>() != content_hash(stored.scenario_text))
            flag("manifest.json", "config_hash does not match scenario.json");
        if (manifest.at("readings_hash").get<std::string>() != content_hash(stored.readings_text))
            flag("manifest.json", "readings_hash does not match readings.csv");
        for (auto [key, text] : {std::pair{"outcomes", &stored.outcomes_text},
                                 std::pair{"partition", &stored.partition_text},
                                 std::pair{"comparison", &stored.comparison_text}}) {
            if (manifest.at("rows").at(key).get<std::size_t>() != count_rows(*text))
                flag("manifest.json", std::string("row count mismatch for ") + key);
        }
    } catch (const json::exception& e) {
        throw DataError(DataError::Kind::MalformedRow,
                        std::string("manifest.json: missing field: ") + e.what());
    }

    // Re-run the embedded inputs and require byte-identical tables.
    SimulationConfig config = parse_scenario(stored.scenario_text);
    try {
        config.slots_per_day = manifest.at("slots").get<int>();
        config.seed = manifest.at("seed").get<std::uint64_t>();
    } catch (const json::exception& e) {
        throw DataError(DataError::Kind::MalformedRow,
                        std::string("manifest.json: missing field: ") + e.what());
    }
    const ReadingsSeries readings = parse_readings(stored.readings_text);
    ResultsBundle fresh;
    fresh.config = config;
    fresh.p2p = run_simulation(config, readings);
    fresh.fit = fit_baseline(config, readings);
    fresh.comparison = compare(fresh.p2p, fresh.fit);
    if (outcomes_to_csv(fresh.p2p.outcomes) != stored.outcomes_text)
        flag("outcomes.csv", "differs from a clean re-run of the embedded inputs");
    if (partition_to_csv(fresh.p2p.outcomes, fresh.p2p.transitions) != stored.partition_text)
        flag("partition.csv", "differs from a clean re-run of the embedded inputs");
    if (comparison_to_csv(fresh.comparison) != stored.comparison_text)
        flag("comparison.csv", "differs from a clean re-run of the embedded inputs");

    // Stability of the stored outcomes at their recorded prices.
    for (const SlotOutcome& slot : stored.outcomes) {
        const StabilityReport stability = verify_dhp_stability(slot, slot.prices);
        for (const Deviation& d : stability.deviations)
            flag("stability slot " + std::to_string(slot.slot),
                 "prosumer " + d.id + " would gain " + format_number(d.gain) + " as " +
                     state_name(d.alternative));
    }

    // Stored comparison must be arithmetically sound and never detrimental.
    for (const ComparisonRow& row : stored.comparison_rows) {
        if (std::abs(row.delta - (row.p2p_net - row.fit_net)) > 1e-9)
            flag("comparison.csv",
                 "slot " + std::to_string(row.slot) + " prosumer " + row.id +
                     ": delta column does not equal p2p - fit");
        if (row.delta < -1e-9)
            flag("never-detrimental",
                 "slot " + std::to_string(row.slot) + " prosumer " + row.id + ": delta " +
                     format_number(row.delta));
    }

    // Partition and outcome tables must tell the same story.
    std::map<int, std::map<std::string, const PartitionCsvRow*>> partition_by_slot;
    for (const PartitionCsvRow& row : stored.partition_rows)
        partition_by_slot[row.slot][row.id] = &row;
    std::map<int, std::map<std::string, std::string>> coalition_history;

    for (const SlotOutcome& slot : stored.outcomes) {
        std::vector<std::string> ids;
        double sold = 0.0, bought = 0.0;
        for (const ProsumerOutcome& row : slot.prosumers) {
            ids.push_back(row.id);
            const std::string where = "slot " + std::to_string(slot.slot) + " prosumer " + row.id;
            if (std::abs(row.net_benefit - (row.utility - row.cost)) > 1e-9)
                flag(where, "net_benefit must equal utility - cost");
            if (row.state == ProsumerState::State1 && row.traded != 0.0)
                flag(where, "state-1 member with nonzero traded energy");
            if (row.state != ProsumerState::State1 && row.state != row.classified)
                flag(where, "market member contradicts its threshold classification");
            if (row.state == ProsumerState::State1 && row.classified != ProsumerState::State1 &&
                row.traded != 0.0)
                flag(where, "reassigned member kept a trade");
            if (row.state == ProsumerState::State2Provider) sold += row.traded;
            if (row.state == ProsumerState::State2Receiver) bought += row.traded;
            coalition_history[slot.slot][row.id] = coalition_letter(row.state);

            const auto slot_it = partition_by_slot.find(slot.slot);
            const PartitionCsvRow* prow = nullptr;
            if (slot_it != partition_by_slot.end()) {
                auto it = slot_it->second.find(row.id);
                if (it != slot_it->second.end()) prow = it->second;
            }
            if (!prow) {
                flag("partition.csv", where + " has no partition row");
            } else if (prow->coalition != coalition_letter(row.state)) {
                flag("partition.csv", where + " coalition disagrees with outcomes.csv");
            }
        }
        try {
            slot.partition.validate(ids);
        } catch (const ValidationError& e) {
            flag("partition slot " + std::to_string(slot.slot), e.what());
        }
        if (std::abs(sold - bought) > 1e-9)
            flag("conservation slot " + std::to_string(slot.slot),
                 "sold " + format_number(sold) + " kWh but bought " + format_number(bought) +
                     " kWh");
    }

    // Previous-coalition columns must chain across slots.
    for (const PartitionCsvRow& row : stored.partition_rows) {
        std::string expected = "W";
        if (auto prev = coalition_history.find(row.slot - 1); prev != coalition_history.end()) {
            if (auto it = prev->second.find(row.id); it != prev->second.end())
                expected = it->second;
        }
        const std::string where = "partition slot " + std::to_string(row.slot) + " prosumer " +
                                  row.id;
        if (row.previous_coalition != expected)
            flag(where, "previous_coalition should be " + expected);
        const bool was_market = expected != "W";
        const bool is_market = row.coalition != "W";
        const std::string action = was_market == is_market ? "stay" : "split+merge";
        if (row.action != action) flag(where, "action should be " + action);
    }

    report.ok = report.issues.empty();
    return report;
}

}  // namespace peertrade
