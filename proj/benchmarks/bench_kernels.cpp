#include "wfald/analysis.hpp"
#include "wfald/channel.hpp"
#include "wfald/protocol.hpp"

#include <benchmark/benchmark.h>

#include <numeric>

using namespace wfald;

namespace {

const Problem& reference_problem() {
  static const Problem p = make_problem(RunConfig{});
  return p;
}

void BM_MinibatchGrad(benchmark::State& state) {
  const Problem& p = reference_problem();
  RandomStream rng(1);
  BatchSampler sampler(static_cast<std::size_t>(p.shards[0].size()));
  const Vector theta = p.posterior.mean;
  Vector out(theta.size());
  const std::size_t m = batch_size(static_cast<std::size_t>(p.shards[0].size()), 0.4);
  for (auto _ : state) {
    minibatch_grad(theta, p.shards[0], sampler.sample(m, rng), 0.4, 30, out);
    benchmark::DoNotOptimize(out.data());
  }
}
BENCHMARK(BM_MinibatchGrad);

void BM_WirelessRound(benchmark::State& state) {
  const std::size_t K = 30;
  RandomStream rng(2);
  std::vector<Vector> payloads;
  for (std::size_t k = 0; k < K; ++k) payloads.push_back(rng.normal_vector(5));
  const std::vector<double> gains(K, 1.0);
  const ChannelConfig cfg = ChannelConfig::from_snr_db(static_cast<double>(state.range(0)), 5);
  std::size_t s = 0;
  for (auto _ : state) {
    auto out = wireless_round(payloads, gains, cfg, 3e-3, K, PowerPolicy::langevin, rng, s++);
    benchmark::DoNotOptimize(out.aggregate.data());
  }
}
BENCHMARK(BM_WirelessRound)->Arg(0)->Arg(40);

void BM_W2Gaussian(benchmark::State& state) {
  const auto d = static_cast<Eigen::Index>(state.range(0));
  RandomStream rng(3);
  Matrix a(d, d), b(d, d);
  for (Eigen::Index i = 0; i < d * d; ++i) {
    a(i / d, i % d) = rng.normal();
    b(i / d, i % d) = rng.normal();
  }
  const GaussianDist p{rng.normal_vector(d), a * a.transpose()};
  const GaussianDist q{rng.normal_vector(d), b * b.transpose()};
  for (auto _ : state) benchmark::DoNotOptimize(w2_squared(p, q));
}
BENCHMARK(BM_W2Gaussian)->Arg(5)->Arg(50);

void BM_Replicate(benchmark::State& state) {
  RunConfig c;
  c.algorithm = static_cast<Algorithm>(state.range(0));
  c.record_channel_log = false;
  const Problem& p = reference_problem();
  std::size_t r = 0;
  for (auto _ : state) {
    auto res = run_replicate(c, p, r++);
    benchmark::DoNotOptimize(res.metrics.mse);
  }
  state.SetLabel(std::string(to_string(c.algorithm)));
}
BENCHMARK(BM_Replicate)
    ->Arg(static_cast<int>(Algorithm::wfald))
    ->Arg(static_cast<int>(Algorithm::fald))
    ->Arg(static_cast<int>(Algorithm::wfedavg))
    ->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
