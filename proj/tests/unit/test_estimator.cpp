#include <doctest.h>

#include <cmath>
#include <random>

#include "../support/oracles.hpp"
#include "offload/errors.hpp"
#include "offload/estimator.hpp"

using namespace offload;

namespace {

LinkBudgetParams dry_params() {
    LinkBudgetParams p;
    p.absorption.humidity_profile = {0.0};
    return p;
}

int order(Modulation m) { return constellation_size(m); }

}  // namespace

TEST_CASE("free-space path loss at 300 GHz and 1 m") {
    double v = free_space_path_loss_db(1.0, 300e9);
    // 81.98 is the figure with c rounded to 3e8; exact c gives 81.990.
    CHECK(std::abs(v - 81.98) < 0.02);
    CHECK(std::abs(v - oracle::fspl_db(1.0, 300e9)) < 1e-9);
}

TEST_CASE("doubling distance adds 20 log10 2") {
    auto p = dry_params();
    ChannelState s;
    for (double d : {0.5, 1.0, 3.0, 17.0}) {
        double a = path_loss_db(d, 300e9, s, p);
        double b = path_loss_db(2 * d, 300e9, s, p);
        CHECK(b - a == doctest::Approx(20 * std::log10(2.0)).epsilon(1e-12));
    }
}

TEST_CASE("absorption adds k_abs times distance") {
    LinkBudgetParams p;
    ChannelState s;
    s.humidity_pct = 60;
    CHECK(effective_k_abs(s, p) == 2.0);
    CHECK(path_loss_db(10, 300e9, s, p) - free_space_path_loss_db(10, 300e9) ==
          doctest::Approx(20.0).epsilon(1e-12));
    s.humidity_pct = 30;
    CHECK(effective_k_abs(s, p) == 0.5);
}

TEST_CASE("temperature correction is floored at zero") {
    LinkBudgetParams p;
    p.temperature_coeff_db_per_m_per_c = 0.1;
    ChannelState s;
    s.humidity_pct = 30;
    s.temperature_c = 30;
    CHECK(effective_k_abs(s, p) == doctest::Approx(1.5));
    s.temperature_c = -40;
    CHECK(effective_k_abs(s, p) == 0.0);
}

TEST_CASE("noise floor and SNR composition") {
    CHECK(noise_floor_dbm(1e9, 10.0) == doctest::Approx(-74.0).epsilon(1e-12));
    LinkBudgetParams p = dry_params();
    p.tx_power_dbm = 0;
    p.g_tx_dbi = 0;
    p.g_rx_dbi = 0;
    p.noise_figure_db = 10;
    QosRequirements q;
    q.bandwidth_hz = 1e9;
    ChannelState s;
    double pl = path_loss_db(s.distance_m, s.frequency_hz, s, p);
    CHECK(snr_db(q, s, p) == doctest::Approx(74.0 - pl).epsilon(1e-12));

    ChannelState far = s;
    far.distance_m = 2 * s.distance_m;
    CHECK(snr_db(q, s, p) - snr_db(q, far, p) == doctest::Approx(20 * std::log10(2.0)).epsilon(1e-9));
}

TEST_CASE("Q function limits") {
    CHECK(q_function(0.0) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(ber_of(Modulation::BPSK, -300.0) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(ber_of(Modulation::BPSK, 60.0) < 1e-300);
}

TEST_CASE("BPSK at 9.6 dB is about 1e-5") {
    double oracle_v = oracle::ber(Modulation::BPSK, std::pow(10.0, 0.96));
    CHECK(oracle_v == doctest::Approx(1e-5).epsilon(0.05));
    CHECK(ber_of(Modulation::BPSK, 9.6) == doctest::Approx(oracle_v).epsilon(1e-12));
}

TEST_CASE("ber_of matches the extended-precision oracle") {
    double worst = 0.0;
    for (Modulation m : kModulationsByOrder) {
        for (int i = 0; i <= 400; ++i) {
            double gamma = std::pow(10.0, -2.0 + 8.0 * i / 400.0);
            double db = 10.0 * std::log10(gamma);
            double g = std::pow(10.0, db / 10.0);
            worst = std::max(worst, std::abs(ber_of(m, db) - oracle::ber(m, g)));
        }
    }
    CHECK(worst <= 1e-12);
}

TEST_CASE("QAM16 BER is at least QPSK BER at equal SNR") {
    // Below about -6 dB the M-QAM approximation's prefactor inverts the order.
    for (int i = 0; i <= 200; ++i) {
        double db = -6 + 0.25 * i;
        CHECK(ber_of(Modulation::QAM16, db) >= ber_of(Modulation::QPSK, db));
        CHECK(oracle::ber(Modulation::QAM16, std::pow(10, db / 10)) >=
              oracle::ber(Modulation::QPSK, std::pow(10, db / 10)));
    }
}

TEST_CASE("select_modulation") {
    CHECK(select_modulation(60.0, 1e-6) == Modulation::QAM64);
    CHECK_FALSE(select_modulation(-10.0, 1e-9));
    for (double snr = -10; snr < 40; snr += 0.5) {
        auto m = select_modulation(snr, 1e-5);
        if (!m) {
            CHECK(ber_of(Modulation::BPSK, snr) > 1e-5);
            continue;
        }
        CHECK(ber_of(*m, snr) <= 1e-5);
        for (Modulation h : kModulationsByOrder)
            if (order(h) > order(*m)) CHECK(ber_of(h, snr) > 1e-5);
    }
}

TEST_CASE("monotonicity on random draws") {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    LinkBudgetParams p;
    for (int i = 0; i < 10000; ++i) {
        Modulation m = kModulationsByOrder[rng() % 4];
        double a = -20 + 60 * u(rng), b = a + 1e-3 + 10 * u(rng);
        double ba = ber_of(m, a), bb = ber_of(m, b);
        if (ba > 0 && bb > 1e-300) CHECK(bb < ba);
        else CHECK(bb <= ba);

        QosRequirements q;
        q.bandwidth_hz = std::pow(10.0, 8 + 3 * u(rng));
        q.ber_max = std::pow(10.0, -9 + 7 * u(rng));
        ChannelState s;
        s.frequency_hz = 0.1e12 + 9.9e12 * u(rng);
        s.humidity_pct = 100 * u(rng);
        s.distance_m = 0.1 + 30 * u(rng);
        ChannelState t = s;
        t.distance_m = s.distance_m * (1.001 + u(rng));
        double sn = snr_db(q, s, p), tn = snr_db(q, t, p);
        CHECK(tn < sn);
        auto ms = select_modulation(sn, q.ber_max), mt = select_modulation(tn, q.ber_max);
        if (mt) {
            REQUIRE(ms);
            CHECK(order(*mt) <= order(*ms));
        }
    }
}

TEST_CASE("estimate caches its result") {
    ConfigStore store;
    LinkBudgetParams p;
    QosRequirements q;
    q.ber_max = 1e-6;
    ChannelState s;
    auto first = estimate(q, s, p, store);
    CHECK(first.provenance == Provenance::Estimated);
    CHECK(first.compute_cost_ms == p.estimated_cost_ms);
    CHECK(store.read(make_config_key(q, s)));
    auto second = estimate(q, s, p, store);
    CHECK(second.provenance == Provenance::CacheHit);
    CHECK(second.compute_cost_ms == p.cache_hit_cost_ms);
    CHECK(Json(second.config).dump() == Json(first.config).dump());
    auto st = store.stats();
    // Two estimate calls plus the explicit read above.
    CHECK(st.read_count == 3);
    CHECK(st.write_count == 1);
}

TEST_CASE("estimate is deterministic") {
    LinkBudgetParams p;
    QosRequirements q;
    ChannelState s;
    s.distance_m = 3.7;
    auto a = derive_config(q, s, p), b = derive_config(q, s, p);
    REQUIRE(a);
    CHECK(Json(*a).dump() == Json(*b).dump());
    CHECK(a->predicted_ber >= 0.0);
    CHECK(a->predicted_ber <= 0.5);
    CHECK(a->code_rate > 0.0);
    CHECK(a->code_rate <= 1.0);
}

TEST_CASE("infeasible link is rejected") {
    ConfigStore store;
    LinkBudgetParams p;
    QosRequirements q;
    q.ber_max = 1e-9;
    ChannelState s;
    s.distance_m = 10000;
    s.frequency_hz = 300e9;
    // Oracle: SNR is hundreds of dB below the BPSK threshold.
    CHECK(snr_db(q, s, p) < -1000);
    CHECK_THROWS_AS(estimate(q, s, p, store), NoFeasibleModulation);
    CHECK(store.stats().write_count == 0);
}

TEST_CASE("link budget parameters validate and load") {
    LinkBudgetParams p;
    p.absorption.humidity_profile[3] = -0.1;
    CHECK_THROWS_AS(validate_params(p), InvariantError);
    p = LinkBudgetParams{};
    p.g_tx_dbi = std::nan("");
    CHECK_THROWS_AS(validate_params(p), InvariantError);
    auto loaded = load_link_budget(OFFLOAD_SOURCE_DIR "/configs/estimator.json");
    CHECK(loaded.tx_power_dbm == 20.0);
    CHECK(loaded.absorption.k_abs(300e9, 55) == 2.0);
    Json j = loaded;
    CHECK(j.get<LinkBudgetParams>().absorption.humidity_profile == loaded.absorption.humidity_profile);
}
