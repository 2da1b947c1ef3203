#include "wfald/errors.hpp"
#include "wfald/sampling.hpp"

#include <doctest.h>

#include <cmath>
#include <stdexcept>

using namespace wfald;

namespace {

std::vector<LocalDataset> small_shards(std::size_t K, std::size_t n, std::size_t d, std::uint64_t seed) {
  RandomStream rng(seed);
  return partition_even(generate_synthetic(n, d, Vector::Ones(static_cast<Eigen::Index>(d)), 1.0, rng), K);
}

}  // namespace

TEST_SUITE("sampling") {
  TEST_CASE("sgld_step variance") {
    RandomStream rng(1);
    const int M = 100000;
    Vector sumsq = Vector::Zero(2);
    for (int i = 0; i < M; ++i) {
      const Vector x = sgld_step(Vector::Zero(2), Vector::Zero(2), 0.005, rng);
      sumsq += x.cwiseProduct(x);
    }
    for (int j = 0; j < 2; ++j) CHECK(sumsq[j] / M == doctest::Approx(0.01).epsilon(0.05));
  }

  TEST_CASE("sgld_step limits") {
    RandomStream rng(2);
    Vector theta(2);
    theta << 0.3, -0.7;
    const Vector tiny = sgld_step(theta, Vector::Ones(2), 1e-12, rng);
    CHECK((tiny - theta).norm() <= 1e-5);
    const double eta = 0.1;
    const Vector out = sgld_update(theta, theta / eta, eta, Vector::Zero(2));
    CHECK(out.norm() == doctest::Approx(0.0));
  }

  TEST_CASE("correlated noise endpoints") {
    RandomStream common_rng(3), a(4), b(5);
    const Vector common = common_rng.normal_vector(3);
    const Vector x = correlated_noise(1.0, 4, common, a);
    const Vector y = correlated_noise(1.0, 4, common, b);
    CHECK(x == y);
    CHECK((x - common / 2.0).norm() == doctest::Approx(0.0));
    // tau = 1 consumes nothing from the device stream.
    RandomStream a2(4);
    CHECK(a.normal() == a2.normal());

    CHECK_THROWS_AS(correlated_noise(-0.1, 4, common, a), std::invalid_argument);
    CHECK_THROWS_AS(correlated_noise(1.1, 4, common, a), std::invalid_argument);
  }

  TEST_CASE("tau = 1 aggregate noise identity") {
    const std::size_t K = 4;
    const double eta = 0.01;
    RandomStream c(6);
    const Vector common = c.normal_vector(3);
    Vector sum = Vector::Zero(3);
    for (std::size_t k = 0; k < K; ++k) {
      RandomStream dev(100 + k);
      sum += std::sqrt(2 * eta) * correlated_noise(1.0, K, common, dev);
    }
    CHECK((sum / double(K) - std::sqrt(2 * eta / K) * common).norm() <= 1e-15);
  }

  TEST_CASE("marginal noise law") {
    const int M = 100000;
    for (double tau : {0.0, 0.3, 1.0}) {
      RandomStream c(7), dev(8);
      double sum = 0, sumsq = 0;
      for (int i = 0; i < M; ++i) {
        const Vector common = c.normal_vector(1);
        const double x = correlated_noise(tau, 5, common, dev)[0];
        sum += x;
        sumsq += x * x;
      }
      const double var = tau / 5 + 1 - tau;
      CHECK(sumsq / M == doctest::Approx(var).epsilon(0.03));
      CHECK(std::abs(sum / M) <= 4 * std::sqrt(var / M));
    }
  }

  TEST_CASE("private noise is independent across devices") {
    RandomStream c(9), a(10), b(11);
    const int M = 100000;
    double cross = 0;
    for (int i = 0; i < M; ++i) {
      const Vector common = c.normal_vector(1);
      cross += correlated_noise(0.0, 2, common, a)[0] * correlated_noise(0.0, 2, common, b)[0];
    }
    CHECK(std::abs(cross / M) <= 4.0 / std::sqrt(double(M)));
  }

  TEST_CASE("round flags") {
    SharedRandomness s1 = SharedRandomness::from_seed(12);
    for (int i = 0; i < 1000; ++i) CHECK(draw_round_flag(s1, 1.0));

    SharedRandomness s2 = SharedRandomness::from_seed(13);
    const int M = 100000;
    int hits = 0;
    for (int i = 0; i < M; ++i) hits += draw_round_flag(s2, 0.25);
    CHECK(std::abs(hits / double(M) - 0.25) <= 4 * std::sqrt(0.25 * 0.75 / M));

    SharedRandomness r1 = SharedRandomness::from_seed(14), r2 = SharedRandomness::from_seed(14);
    for (int i = 0; i < 1000; ++i) CHECK(draw_round_flag(r1, 0.3) == draw_round_flag(r2, 0.3));

    CHECK_THROWS_AS(draw_round_flag(r1, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(draw_round_flag(r1, 1.5), std::invalid_argument);
  }

  TEST_CASE("fald_round with K = 1 is an SGLD step") {
    const auto shards = small_shards(1, 20, 2, 15);
    auto devices = make_devices(shards, Vector::Zero(2), 99);
    SharedRandomness shared = SharedRandomness::from_seed(99);
    FaldParams params{0.01, 1.0, 1.0, 1, {}, false};
    RoundWorkspace ws;
    ws.resize(1, 2);

    Vector theta = Vector::Zero(2);
    SharedRandomness mirror = SharedRandomness::from_seed(99);
    for (std::size_t s = 0; s < 20; ++s) {
      draw_round_flag(mirror, 1.0);
      const Vector common = mirror.common_noise.normal_vector(2);
      // tau = 1, K = 1: noise is exactly the common draw.
      theta = sgld_update(theta, local_grad(theta, shards[0], 1), 0.01, common);
      fald_round(devices, shards, params, shared, s, ws);
      CHECK((devices[0].theta - theta).norm() <= 1e-12);
    }
  }

  TEST_CASE("aggregation rounds leave identical devices and satisfy the update identity") {
    const std::size_t K = 5;
    const double eta = 0.003;
    const auto shards = small_shards(K, 60, 3, 16);
    RandomStream init(17);
    auto devices = make_devices(shards, Vector::Zero(3), 17);
    for (auto& d : devices) d.theta = init.normal_vector(3);
    SharedRandomness shared = SharedRandomness::from_seed(17);
    SharedRandomness mirror = SharedRandomness::from_seed(17);
    FaldParams params{eta, 0.5, 1.0, K, {}, false};
    RoundWorkspace ws;
    ws.resize(K, 3);

    std::vector<Vector> before;
    for (auto& d : devices) before.push_back(d.theta);
    fald_round(devices, shards, params, shared, 0, ws);
    draw_round_flag(mirror, 1.0);
    const Vector common = mirror.common_noise.normal_vector(3);

    Vector expected = Vector::Zero(3);
    for (std::size_t k = 0; k < K; ++k) expected += before[k] - eta * ws.grads[k];
    expected = expected / double(K) + std::sqrt(2 * eta / K) * common;
    for (std::size_t k = 0; k < K; ++k) {
      CHECK(devices[k].theta == devices[0].theta);
    }
    CHECK((devices[0].theta - expected).norm() <= 1e-12);
  }

  TEST_CASE("full-batch p_c = 1 FALD matches SGLD with rate eta / K on f") {
    const std::size_t K = 4, d = 2, R = 1000, steps = 10;
    const double eta = 0.01;
    const auto shards = small_shards(K, 40, d, 18);
    Dataset whole;
    whole.covariates = Matrix(d, 0);
    for (const auto& s : shards) {
      Matrix c(d, whole.covariates.cols() + s.covariates.cols());
      c << whole.covariates, s.covariates;
      whole.covariates = c;
    }
    whole.targets = Vector(40);
    {
      Eigen::Index off = 0;
      for (const auto& s : shards) {
        whole.targets.segment(off, s.size()) = s.targets;
        off += s.size();
      }
    }
    const QuadraticCost f = global_cost(whole);
    FaldParams params{eta, 1.0, 1.0, K, {}, false};

    Vector m1 = Vector::Zero(d), m2 = Vector::Zero(d), n1 = Vector::Zero(d), n2 = Vector::Zero(d);
    RandomStream direct(19);
    for (std::size_t r = 0; r < R; ++r) {
      auto devices = make_devices(shards, Vector::Zero(d), 1000 + r);
      SharedRandomness shared = SharedRandomness::from_seed(1000 + r);
      RoundWorkspace ws;
      ws.resize(K, d);
      for (std::size_t s = 0; s < steps; ++s) fald_round(devices, shards, params, shared, s, ws);
      m1 += devices[0].theta;
      m2 += devices[0].theta.cwiseProduct(devices[0].theta);

      Vector x = Vector::Zero(d);
      for (std::size_t s = 0; s < steps; ++s) {
        x = sgld_step(x, f.gradient(x), eta / K, direct);
      }
      n1 += x;
      n2 += x.cwiseProduct(x);
    }
    m1 /= R;
    n1 /= R;
    const Vector va = m2 / R - m1.cwiseProduct(m1);
    const Vector vb = n2 / R - n1.cwiseProduct(n1);
    for (std::size_t j = 0; j < d; ++j) {
      CHECK(std::abs(m1[j] - n1[j]) <= 4 * std::sqrt((va[j] + vb[j]) / R));
      CHECK(va[j] == doctest::Approx(vb[j]).epsilon(0.2));
    }
  }

  TEST_CASE("p_c = 0 style rounds keep devices apart") {
    const std::size_t K = 2;
    const auto shards = small_shards(K, 20, 2, 20);
    auto devices = make_devices(shards, Vector::Zero(2), 21);
    SharedRandomness shared = SharedRandomness::from_seed(21);
    FaldParams params{0.01, 1.0, 1e-12, K, {}, false};
    RoundWorkspace ws;
    ws.resize(K, 2);
    for (std::size_t s = 0; s < 5; ++s) {
      const auto out = fald_round(devices, shards, params, shared, s, ws);
      CHECK_FALSE(out.aggregated);
    }
    CHECK(devices[0].theta != devices[1].theta);
  }

  TEST_CASE("non-finite particles are reported with context") {
    Vector bad(2);
    bad << 1.0, std::nan("");
    try {
      ensure_finite(bad, 3, 17);
      FAIL("expected ProtocolError");
    } catch (const ProtocolError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("3") != std::string::npos);
      CHECK(msg.find("17") != std::string::npos);
    }
  }

  TEST_CASE("average_into is exact for identical particles") {
    Vector p(3);
    p << 0.1, 1e-17, -3.3;
    std::vector<Vector> same(30, p);
    Vector out(3);
    average_into(same, out);
    CHECK(out == p);
  }

  TEST_CASE("trajectory storage") {
    Trajectory t(3, 2, 2);
    t.at(1, 0) << 1.0, 2.0;
    t.at(1, 1) << 3.0, 4.0;
    const Vector avg = t.average(1);
    CHECK(avg[0] == 2.0);
    CHECK(avg[1] == 3.0);
    CHECK(t.raw().size() == 4 * 2 * 2);
  }
}
