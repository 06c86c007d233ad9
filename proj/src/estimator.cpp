#include "offload/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "offload/errors.hpp"

namespace offload {

std::vector<double> AbsorptionTable::default_profile() {
    // Buckets 0..10 cover 0..100 % humidity: dry air below 50 %, humid above.
    std::vector<double> p(11, 0.5);
    for (std::size_t i = 5; i < p.size(); ++i) p[i] = 2.0;
    return p;
}

double AbsorptionTable::k_abs(double frequency_hz, double humidity_pct) const {
    auto band = static_cast<std::int64_t>(std::floor(frequency_hz / band_width_hz));
    const std::vector<double>* row = &humidity_profile;
    if (auto it = bands.find(band); it != bands.end()) row = &it->second;
    if (row->empty()) return 0.0;
    auto bucket = static_cast<std::int64_t>(std::floor(humidity_pct / humidity_bucket_pct));
    bucket = std::clamp<std::int64_t>(bucket, 0, static_cast<std::int64_t>(row->size()) - 1);
    return (*row)[static_cast<std::size_t>(bucket)];
}

void to_json(Json& j, const AbsorptionTable& v) {
    Json bands = Json::object();
    for (const auto& [b, row] : v.bands) bands[std::to_string(b)] = row;
    j = Json{{"band_width_hz", v.band_width_hz},
             {"humidity_bucket_pct", v.humidity_bucket_pct},
             {"humidity_profile", v.humidity_profile},
             {"bands", bands}};
}

void from_json(const Json& j, AbsorptionTable& v) {
    v.band_width_hz = j.value("band_width_hz", v.band_width_hz);
    v.humidity_bucket_pct = j.value("humidity_bucket_pct", v.humidity_bucket_pct);
    if (j.contains("humidity_profile")) j.at("humidity_profile").get_to(v.humidity_profile);
    v.bands.clear();
    if (j.contains("bands"))
        for (const auto& [name, row] : j.at("bands").items())
            v.bands[std::stoll(name)] = row.get<std::vector<double>>();
}

void to_json(Json& j, const LinkBudgetParams& v) {
    j = Json{{"tx_power_dbm", v.tx_power_dbm},
             {"g_tx_dbi", v.g_tx_dbi},
             {"g_rx_dbi", v.g_rx_dbi},
             {"noise_figure_db", v.noise_figure_db},
             {"absorption", v.absorption},
             {"temperature_coeff_db_per_m_per_c",
              v.temperature_coeff_db_per_m_per_c ? Json(*v.temperature_coeff_db_per_m_per_c)
                                                 : Json(nullptr)},
             {"code_rate", v.code_rate},
             {"estimated_cost_ms", v.estimated_cost_ms},
             {"cache_hit_cost_ms", v.cache_hit_cost_ms}};
}

void from_json(const Json& j, LinkBudgetParams& v) {
    v.tx_power_dbm = j.value("tx_power_dbm", v.tx_power_dbm);
    v.g_tx_dbi = j.value("g_tx_dbi", v.g_tx_dbi);
    v.g_rx_dbi = j.value("g_rx_dbi", v.g_rx_dbi);
    v.noise_figure_db = j.value("noise_figure_db", v.noise_figure_db);
    if (j.contains("absorption")) j.at("absorption").get_to(v.absorption);
    if (auto it = j.find("temperature_coeff_db_per_m_per_c"); it != j.end() && !it->is_null())
        v.temperature_coeff_db_per_m_per_c = it->get<double>();
    v.code_rate = j.value("code_rate", v.code_rate);
    v.estimated_cost_ms = j.value("estimated_cost_ms", v.estimated_cost_ms);
    v.cache_hit_cost_ms = j.value("cache_hit_cost_ms", v.cache_hit_cost_ms);
}

void validate_params(const LinkBudgetParams& p) {
    auto finite = [](double x) { return std::isfinite(x); };
    if (!finite(p.tx_power_dbm) || !finite(p.g_tx_dbi) || !finite(p.g_rx_dbi) ||
        !finite(p.noise_figure_db))
        throw InvariantError("link budget powers, gains and noise figure must be finite");
    if (!(p.code_rate > 0 && p.code_rate <= 1)) throw InvariantError("code_rate must lie in (0, 1]");
    if (!(p.absorption.band_width_hz > 0 && p.absorption.humidity_bucket_pct > 0))
        throw InvariantError("absorption bucket widths must be positive");
    auto check_row = [](const std::vector<double>& row) {
        for (double k : row)
            if (!(k >= 0) || !std::isfinite(k)) throw InvariantError("k_abs must be >= 0");
    };
    check_row(p.absorption.humidity_profile);
    for (const auto& [b, row] : p.absorption.bands) check_row(row);
    if (p.temperature_coeff_db_per_m_per_c && !finite(*p.temperature_coeff_db_per_m_per_c))
        throw InvariantError("temperature coefficient must be finite");
}

LinkBudgetParams load_link_budget(const std::string& path) {
    Json j = load_json_file(path);
    LinkBudgetParams p;
    try {
        j.get_to(p);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path, 0, e.what());
    }
    validate_params(p);
    return p;
}

double free_space_path_loss_db(double distance_m, double frequency_hz) {
    return 20.0 * std::log10(4.0 * std::numbers::pi * distance_m * frequency_hz / kSpeedOfLight);
}

double effective_k_abs(const ChannelState& state, const LinkBudgetParams& params) {
    double k = params.absorption.k_abs(state.frequency_hz, state.humidity_pct);
    if (params.temperature_coeff_db_per_m_per_c)
        k += *params.temperature_coeff_db_per_m_per_c * (state.temperature_c - 20.0);
    return std::max(0.0, k);
}

double path_loss_db(double distance_m, double frequency_hz, const ChannelState& state,
                    const LinkBudgetParams& params) {
    ChannelState at = state;
    at.frequency_hz = frequency_hz;
    return free_space_path_loss_db(distance_m, frequency_hz) +
           effective_k_abs(at, params) * distance_m;
}

double noise_floor_dbm(double bandwidth_hz, double noise_figure_db) {
    return -174.0 + 10.0 * std::log10(bandwidth_hz) + noise_figure_db;
}

double snr_db(const QosRequirements& qos, const ChannelState& state,
              const LinkBudgetParams& params) {
    double received = params.tx_power_dbm + params.g_tx_dbi + params.g_rx_dbi -
                      path_loss_db(state.distance_m, state.frequency_hz, state, params);
    return received - noise_floor_dbm(qos.bandwidth_hz, params.noise_figure_db);
}

double q_function(double x) { return 0.5 * std::erfc(x / std::numbers::sqrt2); }

double ber_of(Modulation m, double snr) {
    double gamma = std::pow(10.0, snr / 10.0);
    if (m == Modulation::BPSK) return q_function(std::sqrt(2.0 * gamma));
    double M = constellation_size(m);
    double bits = std::log2(M);
    return (4.0 / bits) * (1.0 - 1.0 / std::sqrt(M)) * q_function(std::sqrt(3.0 * gamma / (M - 1.0)));
}

std::optional<Modulation> select_modulation(double snr, double ber_max) {
    std::optional<Modulation> best;
    for (Modulation m : kModulationsByOrder)
        if (ber_of(m, snr) <= ber_max) best = m;
    return best;
}

std::optional<ChannelConfig> derive_config(const QosRequirements& qos, const ChannelState& state,
                                           const LinkBudgetParams& params) {
    double snr = snr_db(qos, state, params);
    auto m = select_modulation(snr, qos.ber_max);
    if (!m) return std::nullopt;
    ChannelConfig c;
    c.modulation = *m;
    c.code_rate = params.code_rate;
    c.bandwidth_hz = qos.bandwidth_hz;
    c.tx_power_dbm = params.tx_power_dbm;
    c.predicted_snr_db = snr;
    c.predicted_ber = ber_of(*m, snr);
    return c;
}

EstimateOutcome estimate(const QosRequirements& qos, const ChannelState& state,
                         const LinkBudgetParams& params, ConfigStore& store,
                         const BucketGrid& grid, Nanos now) {
    ConfigKey key = make_config_key(qos, state, grid);
    if (auto hit = store.read(key))
        return {hit->config, Provenance::CacheHit, params.cache_hit_cost_ms};
    auto config = derive_config(qos, state, params);
    if (!config) throw NoFeasibleModulation("no modulation meets ber_max at the predicted SNR");
    store.write(key, *config, now);
    return {*config, Provenance::Estimated, params.estimated_cost_ms};
}

}  // namespace offload
