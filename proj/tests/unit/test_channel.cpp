#include "wfald/channel.hpp"
#include "wfald/errors.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>

using namespace wfald;

TEST_SUITE("channel") {
  TEST_CASE("transmit_signal") {
    Vector theta(2), grad(2);
    theta << 1, 0;
    grad << 0, 1;
    const Vector x = transmit_signal(theta, grad, 0.5, 2.0);
    CHECK(x[0] == 2.0);
    CHECK(x[1] == -1.0);
    CHECK(transmit_signal(theta, Vector::Zero(2), 0.5, 1.0) == theta);
    CHECK(x.squaredNorm() == doctest::Approx(4.0 * (theta - 0.5 * grad).squaredNorm()));
  }

  TEST_CASE("power_gain branches") {
    // eta = 0.5, K = 1, N0 = 1: sqrt(N0 / (2 eta K)) = 1.
    std::vector<Vector> one{Vector::Constant(1, 1e-9)};
    std::vector<double> h1{1.0};
    CHECK(power_gain(one, h1, 1e6, 1.0, 0.5, 1) == doctest::Approx(1.0));

    // Max payload norm 2, P = 1, Langevin term 10: alpha = 0.5.
    Vector a(2), b(2);
    a << 2, 0;
    b << 0.5, 0.5;
    std::vector<Vector> payloads{a, b};
    std::vector<double> h{1.0, 1.0};
    const double eta = 0.01;
    const std::size_t K = 2;
    const double N0 = 100.0 * 2 * eta * K;
    const double alpha = power_gain(payloads, h, 1.0, N0, eta, K);
    CHECK(alpha == doctest::Approx(0.5));
    std::vector<Vector> signals{alpha / h[0] * a, alpha / h[1] * b};
    CHECK(signals[0].squaredNorm() == doctest::Approx(1.0));
    const auto ok = check_power(signals, 1.0);
    CHECK(ok[0]);
    CHECK(ok[1]);
  }

  TEST_CASE("zero payloads do not constrain the cap") {
    std::vector<Vector> payloads{Vector::Zero(2), Vector::Ones(2)};
    std::vector<double> h{1.0, 1.0};
    CHECK(inversion_cap(payloads, h, 2.0) == doctest::Approx(1.0));
    std::vector<Vector> zeros{Vector::Zero(2)};
    std::vector<double> h1{1.0};
    CHECK(std::isinf(inversion_cap(zeros, h1, 1.0)));
  }

  TEST_CASE("residual noise") {
    const double eta = 0.5, N0 = 1.0;
    const std::size_t K = 1;
    const double slack = std::sqrt(N0 / (2 * eta * K));
    CHECK(residual_noise(N0, slack, eta, K) == doctest::Approx(0.0));
    CHECK(residual_noise(N0, 0.5, eta, K) == doctest::Approx(3.0));
    CHECK(residual_noise(N0, 10.0, eta, K) == 0.0);
  }

  TEST_CASE("noma_superpose identities") {
    RandomStream rng(1);
    ChannelRound round;
    Vector x(3);
    x << 1, 2, 3;
    std::vector<Vector> single{x};
    std::vector<double> h1{1.0};
    CHECK(noma_superpose(single, h1, rng, 0.0, round) == x);

    Vector e1 = Vector::Zero(2);
    e1[0] = 1;
    std::vector<Vector> pair{e1, e1};
    std::vector<double> h2{1.0, -1.0};
    CHECK(noma_superpose(pair, h2, rng, 0.0, round).norm() == 0.0);
  }

  TEST_CASE("channel noise variance") {
    RandomStream rng(2);
    std::vector<Vector> zero{Vector::Zero(2)};
    std::vector<double> h{1.0};
    ChannelRound round;
    const int M = 100000;
    Vector sumsq = Vector::Zero(2);
    for (int i = 0; i < M; ++i) {
      const Vector y = noma_superpose(zero, h, rng, 4.0, round);
      CHECK(round.noise == y);
      sumsq += y.cwiseProduct(y);
    }
    for (int j = 0; j < 2; ++j) CHECK(sumsq[j] / M == doctest::Approx(4.0).epsilon(0.03));
  }

  TEST_CASE("post-scaling noise variance at fixed alpha") {
    RandomStream rng(3);
    const double N0 = 0.5, alpha = 0.2;
    const std::size_t K = 3;
    std::vector<Vector> zero(K, Vector::Zero(1));
    std::vector<double> h(K, 1.0);
    ChannelRound round;
    const int M = 100000;
    double sumsq = 0;
    for (int i = 0; i < M; ++i) {
      const double a = receive_aggregate(noma_superpose(zero, h, rng, N0, round), alpha, K)[0];
      sumsq += a * a;
    }
    CHECK(sumsq / M == doctest::Approx(N0 / (alpha * K * alpha * K)).epsilon(0.03));
  }

  TEST_CASE("noiseless receive is FedAvg of the payloads") {
    const std::size_t K = 3;
    RandomStream rng(4);
    std::vector<Vector> payloads;
    for (std::size_t k = 0; k < K; ++k) payloads.push_back(rng.normal_vector(4));
    std::vector<double> h(K, 1.0);
    ChannelRound round;
    for (double alpha : {0.1, 1.0, 7.0}) {
      std::vector<Vector> signals;
      for (const auto& p : payloads) signals.push_back(alpha * p);
      const Vector agg = receive_aggregate(noma_superpose(signals, h, rng, 0.0, round), alpha, K);
      const Vector expect = (payloads[0] + payloads[1] + payloads[2]) / 3.0;
      CHECK((agg - expect).norm() <= 1e-12 * expect.norm());
    }
  }

  TEST_CASE("check_power boundary and violations") {
    const double P = 2.0;
    Vector edge = Vector::Zero(3);
    edge[0] = std::sqrt(P);
    std::vector<Vector> ok{edge, Vector::Zero(3)};
    const auto flags = check_power(ok, P);
    CHECK(flags[0]);
    CHECK(flags[1]);
    std::vector<Vector> bad{Vector::Zero(3), 2.0 * edge};
    CHECK_FALSE(check_power(bad, P)[1]);
    try {
      enforce_power(bad, P, 12);
      FAIL("expected ProtocolError");
    } catch (const ProtocolError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("1") != std::string::npos);
      CHECK(msg.find("12") != std::string::npos);
    }
  }

  TEST_CASE("gain draws and guard") {
    ChannelConfig cfg = ChannelConfig::from_snr_db(20.0, 5);
    RandomStream rng(5);
    const auto constant = draw_gains(cfg, 30, rng);
    for (double g : constant) CHECK(g == 1.0);
    cfg.gain_model = GainModel::rayleigh;
    cfg.gain_value = 1.0;
    double sumsq = 0;
    for (int i = 0; i < 2000; ++i) {
      for (double g : draw_gains(cfg, 10, rng)) {
        CHECK(g > 0.0);
        sumsq += g * g;
      }
    }
    CHECK(sumsq / 20000 == doctest::Approx(2.0).epsilon(0.05));

    std::vector<double> tiny{1.0, 1.0, 1e-9};
    CHECK_THROWS_AS(guard_gains(tiny, 0), ProtocolError);
    std::vector<double> fine{1.0, 0.5, 2.0};
    CHECK_NOTHROW(guard_gains(fine, 0));
  }

  TEST_CASE("snr conversion") {
    const ChannelConfig c = ChannelConfig::from_snr_db(10.0, 5, 1.0);
    CHECK(c.N0 == doctest::Approx(1.0 / 50.0));
    CHECK(c.snr() == doctest::Approx(10.0));
    const ChannelConfig inf = ChannelConfig::from_snr_db(std::numeric_limits<double>::infinity(), 5);
    CHECK(inf.N0 == 0.0);
    CHECK(std::isinf(inf.snr()));
  }

  TEST_CASE("wireless round: slack power gives zero residual noise") {
    const std::size_t K = 4;
    const double eta = 0.003;
    RandomStream rng(6), payload_rng(7);
    std::vector<Vector> payloads;
    for (std::size_t k = 0; k < K; ++k) payloads.push_back(0.1 * payload_rng.normal_vector(5));
    std::vector<double> h(K, 1.0);
    const ChannelConfig cfg = ChannelConfig::from_snr_db(40.0, 5, 1.0);
    const auto out = wireless_round(payloads, h, cfg, eta, K, PowerPolicy::langevin, rng, 0);
    CHECK_FALSE(out.round.power_limited);
    CHECK(out.round.beta == 0.0);
    CHECK(out.round.alpha == doctest::Approx(std::sqrt(cfg.N0 / (2 * eta * K))));
    CHECK(out.round.noise_var == doctest::Approx(2 * eta / K));
  }

  TEST_CASE("wireless round: beta identity when power limited") {
    const std::size_t K = 4;
    const double eta = 0.003;
    RandomStream rng(8), payload_rng(9);
    std::vector<Vector> payloads;
    for (std::size_t k = 0; k < K; ++k) payloads.push_back(3.0 * payload_rng.normal_vector(5));
    std::vector<double> h(K, 1.0);
    const ChannelConfig cfg = ChannelConfig::from_snr_db(0.0, 5, 1.0);
    const auto out = wireless_round(payloads, h, cfg, eta, K, PowerPolicy::langevin, rng, 0);
    CHECK(out.round.power_limited);
    const double ka = out.round.alpha * K;
    CHECK(std::abs(out.round.beta - std::max(0.0, cfg.N0 / (ka * ka) - 2 * eta / K)) <= 1e-12);
    CHECK(out.round.beta > 0.0);
    std::vector<Vector> signals;
    for (std::size_t k = 0; k < K; ++k) signals.push_back(out.round.alpha / h[k] * payloads[k]);
    for (bool b : check_power(signals, cfg.P)) CHECK(b);
  }

  TEST_CASE("wireless round at N0 = 0 matches the noiseless average plus Langevin noise") {
    const std::size_t K = 3;
    const double eta = 0.01;
    RandomStream payload_rng(10);
    std::vector<Vector> payloads;
    for (std::size_t k = 0; k < K; ++k) payloads.push_back(payload_rng.normal_vector(2));
    std::vector<double> h(K, 1.0);
    const ChannelConfig cfg = ChannelConfig::from_snr_db(std::numeric_limits<double>::infinity(), 2, 1.0);

    RandomStream rng(11), mirror(11);
    const auto out = wireless_round(payloads, h, cfg, eta, K, PowerPolicy::langevin, rng, 0);
    const Vector w = mirror.normal_vector(2);
    const Vector expect = (payloads[0] + payloads[1] + payloads[2]) / 3.0 + std::sqrt(2 * eta / K) * w;
    CHECK((out.aggregate - expect).norm() <= 1e-12 * expect.norm());
    CHECK(out.round.beta == 0.0);

    RandomStream rng2(12);
    const auto inv = wireless_round(payloads, h, cfg, eta, K, PowerPolicy::inversion, rng2, 0);
    const Vector plain = (payloads[0] + payloads[1] + payloads[2]) / 3.0;
    CHECK((inv.aggregate - plain).norm() <= 1e-12 * plain.norm());
  }
}
