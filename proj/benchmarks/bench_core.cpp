#include <benchmark/benchmark.h>

#include <vector>

#include "pcdiag/data.hpp"
#include "pcdiag/geom.hpp"
#include "pcdiag/network.hpp"

using namespace pcdiag;

namespace {

geom::PointCloud cloud_of(std::size_t n) {
  return data::normalize(data::generate_shape(data::ShapeClass::torus, n, 1));
}

void BM_FarthestPointSample(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto cloud = cloud_of(n);
  for (auto _ : state) benchmark::DoNotOptimize(geom::farthest_point_sample(cloud, n / 4));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_FarthestPointSample)->RangeMultiplier(2)->Range(128, 1024)->Complexity();

void BM_KnnSearch(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto cloud = cloud_of(n);
  const auto centers = geom::farthest_point_sample(cloud, n / 4);
  for (auto _ : state) benchmark::DoNotOptimize(geom::knn_search(cloud, centers, 16, true));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_KnnSearch)->RangeMultiplier(2)->Range(128, 1024)->Complexity();

void BM_Forward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const nets::Classifier net(nets::baseline_spec(6), 2);
  const auto cloud = cloud_of(n);
  const auto plan = net.plan(cloud);
  const auto coords = geom::to_tensor(cloud);
  ag::FreezeParameters freeze;
  for (auto _ : state) benchmark::DoNotOptimize(net.forward(coords, plan).logits[0]);
}
BENCHMARK(BM_Forward)->Arg(256)->Arg(512)->Unit(benchmark::kMillisecond);

void BM_ForwardBackward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  nets::Classifier net(nets::baseline_spec(6), 2);
  const auto cloud = cloud_of(n);
  const auto plan = net.plan(cloud);
  const auto coords = geom::to_tensor(cloud);
  for (auto _ : state) {
    const auto loss = ag::softmax_cross_entropy(net.forward(coords, plan).logits, 0);
    ag::backward(loss);
    net.parameters().zero_grad();
  }
}
BENCHMARK(BM_ForwardBackward)->Arg(256)->Arg(512)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
