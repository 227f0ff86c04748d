#include "self_check.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "gdas/oracle.hpp"
#include "gdas/rng.hpp"
#include "gdas/trainer.hpp"

namespace gdas::cli {

namespace {

std::string format(const char* fmt, double a, double b = 0.0) {
  char buf[160];
  std::snprintf(buf, sizeof buf, fmt, a, b);
  return buf;
}

// A small supernet and batch built from the configured task.
struct Fixture {
  SearchSpaceSpec spec;
  NetworkPlan plan;
  Tensor images;
  std::vector<int> labels;
};

Fixture make_fixture(const RunConfig& config, bool drop_zeroize, std::uint64_t seed) {
  Fixture f;
  f.spec.nodes = 2;
  f.spec.retained = 1;
  f.spec.candidates.clear();
  for (auto op : config.search_space.candidates) {
    if (!(drop_zeroize && op == OpKind::zeroize)) f.spec.candidates.push_back(op);
  }
  f.plan.C = 2;
  f.plan.N = 1;
  f.plan.num_classes = config.dataset.synthetic.num_classes;
  SyntheticSpec ds = config.dataset.synthetic;
  ds.size = 6;
  const auto data = make_oriented_edges(ds, seed);
  std::vector<std::size_t> idx(data.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  f.images = data.batch_images(idx);
  f.labels = data.batch_labels(idx);
  return f;
}

CheckResult check_marginals(const SelfCheckOptions& o) {
  CheckResult r{"gumbel_max_marginals", true, ""};
  Rng rng(derive_seed(o.seed, "validate_marginals"));
  double worst = 1.0;
  for (std::size_t v = 0; v < o.logit_vectors; ++v) {
    std::vector<double> logits(5);
    for (auto& x : logits) x = rng.uniform(-2.0, 2.0);
    worst = std::min(worst, validate_marginals(logits, o.draws, rng.engine()()).p_value);
  }
  r.passed = worst > 0.01 / static_cast<double>(o.logit_vectors);
  r.detail = format("min p-value %.4g over %g logit vectors", worst, static_cast<double>(o.logit_vectors));
  return r;
}

CheckResult check_temperature_limits(const SelfCheckOptions& o) {
  CheckResult r{"temperature_limits", true, ""};
  const std::vector<double> logits{0.3, -0.2, 1.1, 0.0};
  const auto noise = gumbel_noise({o.seed, 0, 0, 0, 0}, logits.size());
  const auto soft = gumbel_softmax(logits, noise, o.tau);
  double sum = 0.0;
  for (double p : soft) sum += p;
  const auto cold = gumbel_softmax(logits, noise, 1e-4);
  const std::size_t k = gumbel_argmax(logits, noise);
  r.passed = std::abs(sum - 1.0) < 1e-12 && std::abs(cold[k] - 1.0) < 1e-6;
  r.detail = format("sum at tau %.4g is %.17g", o.tau, sum);
  return r;
}

CheckResult check_acceleration(const RunConfig& config, const SelfCheckOptions& o) {
  CheckResult r{"accelerated_matches_hard", true, ""};
  const auto f = make_fixture(config, false, o.seed);
  double loss[2];
  std::vector<double> grads[2];
  std::uint64_t evals[2];
  for (int m = 0; m < 2; ++m) {
    Network net = build_search_network(f.spec, f.plan, false, o.seed);
    SampleContext ctx{.seed = o.seed, .phase = 2, .iteration = 0, .tau = o.tau,
                      .mode = m == 0 ? SelectionMode::hard_sampled : SelectionMode::accelerated};
    const auto l = classification_loss(net.forward(f.images, ctx), f.labels);
    backward(l);
    loss[m] = l.item();
    evals[m] = net.counter().evaluations;
    for (const auto& w : net.weights()) {
      if (w.has_grad()) grads[m].insert(grads[m].end(), w.grad().begin(), w.grad().end());
    }
  }
  double gdiff = 0.0;
  for (std::size_t i = 0; i < grads[0].size(); ++i) gdiff = std::max(gdiff, std::abs(grads[0][i] - grads[1][i]));
  const auto k = static_cast<std::uint64_t>(f.spec.num_candidates());
  r.passed = grads[0].size() == grads[1].size() && std::abs(loss[0] - loss[1]) <= 1e-12 && gdiff <= 1e-10 &&
             evals[0] == k * evals[1];
  r.detail = format("loss diff %.3g, max W-grad diff %.3g", std::abs(loss[0] - loss[1]), gdiff);
  return r;
}

CheckResult check_relaxed_gradient(const RunConfig& config, const SelfCheckOptions& o) {
  CheckResult r{"relaxed_supernet_gradient", true, ""};
  const auto f = make_fixture(config, true, o.seed);
  Network net = build_search_network(f.spec, f.plan, false, o.seed);
  const SampleContext ctx{.seed = o.seed, .phase = 2, .iteration = 0, .tau = o.tau, .mode = SelectionMode::relaxed};
  const auto loss = [&] { return classification_loss(net.forward(f.images, ctx), f.labels); };
  backward(loss());
  Tensor a = net.arch().normal;
  const std::vector<double> analytic(a.grad().begin(), a.grad().end());
  const double h = 1e-5;
  double num = 0.0, den_a = 0.0, den_f = 0.0;
  NoGradGuard guard;
  for (std::size_t i = 0; i < std::min<std::size_t>(a.numel(), 12); ++i) {
    const double x = a.data()[i];
    a.data()[i] = x + h;
    const double up = loss().item();
    a.data()[i] = x - h;
    const double down = loss().item();
    a.data()[i] = x;
    const double fd = (up - down) / (2 * h);
    num += (fd - analytic[i]) * (fd - analytic[i]);
    den_a += analytic[i] * analytic[i];
    den_f += fd * fd;
  }
  const double rel = std::sqrt(num) / std::max({std::sqrt(den_a), std::sqrt(den_f), 1e-8});
  r.passed = rel < 1e-4;
  r.detail = format("relative error %.3g at tau %.4g", rel, o.tau);
  return r;
}

}  // namespace

std::vector<CheckResult> run_self_checks(const RunConfig& config, const SelfCheckOptions& options) {
  std::vector<CheckResult> out;
  out.push_back(check_marginals(options));
  out.push_back(check_temperature_limits(options));
  out.push_back(check_acceleration(config, options));
  out.push_back(check_relaxed_gradient(config, options));
  return out;
}

}  // namespace gdas::cli
