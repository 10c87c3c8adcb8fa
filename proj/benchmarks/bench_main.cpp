#include <benchmark/benchmark.h>

#include <string>
#include <vector>

#include "semkd/gradcheck.hpp"
#include "semkd/losses.hpp"
#include "semkd/model.hpp"
#include "semkd/rng.hpp"
#include "semkd/semantics.hpp"

namespace {

using namespace semkd;

Vec gaussian(Rng& rng, Eigen::Index n) {
  std::normal_distribution<double> nd;
  return Vec::NullaryExpr(n, [&] { return nd(rng); });
}

// Head forward at the default widths (u=32, mapping 512-728), d = 16.
void BM_HeadForward(benchmark::State& state) {
  ModelConfig mc;
  mc.num_superclasses = static_cast<std::size_t>(state.range(0));
  const auto model = init_model(mc, InputShape{16, 1, 1}, 16, 1);
  Rng rng(2);
  const Vec g = backbone_forward(model, gaussian(rng, 16));
  for (auto _ : state) benchmark::DoNotOptimize(head_forward(model.head, g).y);
}
BENCHMARK(BM_HeadForward)->Arg(1)->Arg(3)->Arg(8);

void BM_ObjectiveWithGrad(benchmark::State& state) {
  GradCheckInstanceSpec spec;
  spec.u = 32;
  spec.d = 16;
  spec.mapping_hidden = {128, 128};
  spec.batch = static_cast<std::size_t>(state.range(0));
  spec.num_old = 20;
  spec.num_new = 5;
  const auto inst = make_gradcheck_instance(spec);
  for (auto _ : state) {
    HeadParams grads = zeros_like(inst.model.head);
    benchmark::DoNotOptimize(
        evaluate_objective(inst.model.head, inst.head, inst.batch, inst.num_old, LossConfig{}, Phase::novel, &grads));
  }
}
BENCHMARK(BM_ObjectiveWithGrad)->Arg(8)->Arg(32);

void BM_Distillation(benchmark::State& state) {
  const auto classes = state.range(0);
  Rng rng(3);
  DistillationContext ctx;
  ctx.num_old = static_cast<std::size_t>(classes);
  std::vector<Vec> d;
  for (int i = 0; i < 32; ++i) {
    ctx.old_scores.push_back(gaussian(rng, classes).cwiseAbs());
    d.push_back(gaussian(rng, classes + 5).cwiseAbs());
  }
  for (auto _ : state) benchmark::DoNotOptimize(distillation_loss_grad(d, ctx, 2.0).value);
}
BENCHMARK(BM_Distillation)->Arg(20)->Arg(100);

void BM_KMeans(benchmark::State& state) {
  Rng rng(4);
  std::vector<Vec> points;
  for (int i = 0; i < state.range(0); ++i) points.push_back(gaussian(rng, 16));
  KMeansOptions opt;
  opt.num_clusters = 3;
  for (auto _ : state) benchmark::DoNotOptimize(kmeans(points, opt).sse_trace.back());
}
BENCHMARK(BM_KMeans)->Arg(20)->Arg(200);

}  // namespace
BENCHMARK_MAIN();
