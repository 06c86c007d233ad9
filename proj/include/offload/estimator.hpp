#pragma once

// Deterministic link-budget surrogate for the channel-quality estimator:
// free-space path loss plus molecular absorption, thermal noise floor, and
// BER curves for the supported constellations.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "offload/codec.hpp"
#include "offload/config_store.hpp"
#include "offload/domain.hpp"

namespace offload {

inline constexpr double kSpeedOfLight = 299792458.0;

// k_abs (dB/m) indexed by (frequency band, humidity bucket). Bands without an
// explicit row use humidity_profile.
struct AbsorptionTable {
    double band_width_hz = 100e9;
    double humidity_bucket_pct = 10.0;
    std::vector<double> humidity_profile = default_profile();
    std::map<std::int64_t, std::vector<double>> bands;

    double k_abs(double frequency_hz, double humidity_pct) const;

    static std::vector<double> default_profile();
};

struct LinkBudgetParams {
    double tx_power_dbm = 20.0;
    double g_tx_dbi = 25.0;
    double g_rx_dbi = 25.0;
    double noise_figure_db = 10.0;
    AbsorptionTable absorption;
    // Applied as k_abs + coeff * (T - 20 C), floored at zero.
    std::optional<double> temperature_coeff_db_per_m_per_c;
    double code_rate = 0.75;
    double estimated_cost_ms = 20.0;
    double cache_hit_cost_ms = 1.0;
};

void to_json(Json& j, const AbsorptionTable& v);
void from_json(const Json& j, AbsorptionTable& v);
void to_json(Json& j, const LinkBudgetParams& v);
void from_json(const Json& j, LinkBudgetParams& v);

// Throws InvariantError if any k_abs is negative or a gain is not finite.
void validate_params(const LinkBudgetParams& p);
LinkBudgetParams load_link_budget(const std::string& path);

double free_space_path_loss_db(double distance_m, double frequency_hz);
double effective_k_abs(const ChannelState& state, const LinkBudgetParams& params);
double path_loss_db(double distance_m, double frequency_hz, const ChannelState& state,
                    const LinkBudgetParams& params);
double noise_floor_dbm(double bandwidth_hz, double noise_figure_db);
double snr_db(const QosRequirements& qos, const ChannelState& state,
              const LinkBudgetParams& params);

// Gaussian tail probability Q(x) = P(N(0,1) > x).
double q_function(double x);
double ber_of(Modulation m, double snr_db);

inline constexpr Modulation kModulationsByOrder[] = {Modulation::BPSK, Modulation::QPSK,
                                                     Modulation::QAM16, Modulation::QAM64};

// Highest-order modulation meeting ber_max, or nullopt when BPSK fails too.
std::optional<Modulation> select_modulation(double snr_db, double ber_max);

// The computed (uncached) configuration; nullopt if no modulation is feasible.
std::optional<ChannelConfig> derive_config(const QosRequirements& qos, const ChannelState& state,
                                           const LinkBudgetParams& params);

enum class Provenance { CacheHit, Estimated };

struct EstimateOutcome {
    ChannelConfig config;
    Provenance provenance = Provenance::Estimated;
    double compute_cost_ms = 0.0;
};

// Lookup, estimate on miss, write back. One read always; one write only on
// the Estimated path. Throws NoFeasibleModulation when the link cannot meet
// ber_max; StorageError propagates.
EstimateOutcome estimate(const QosRequirements& qos, const ChannelState& state,
                         const LinkBudgetParams& params, ConfigStore& store,
                         const BucketGrid& grid = {}, Nanos now = Nanos{0});

}  // namespace offload
