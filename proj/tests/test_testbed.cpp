#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "lightvla/errors.hpp"
#include "lightvla/testbed.hpp"
#include "support.hpp"

using namespace lightvla;
using testing::relative_error;

namespace {

ToyConfig small_config() {
  ToyConfig c;
  c.visual_tokens = 9;
  c.text_tokens = 4;
  c.dim = 8;
  c.informative = 3;
  c.feature_dim = 8;
  c.key_count = 6;
  return c;
}

ModelConfig model_config(Variant v) {
  ModelConfig m;
  m.variant = v;
  m.hidden = 12;
  m.queries = 4;
  if (v == Variant::llm_learnable) m.layers = 2;
  return m;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double t = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) t += a[i] * b[i];
  return t;
}

}  // namespace

TEST_CASE("generate_sample examples") {
  ToyConfig cfg = small_config();
  cfg.noise_scale = 0.0;
  cfg.informative = cfg.visual_tokens - 1;
  cfg.text_tokens = cfg.informative;
  cfg.key_count = 12;
  const ToyWorld world = make_world(cfg);
  Rng rng(81);
  const SyntheticSample s = generate_sample(cfg, world, rng);
  // Every text key appears in exactly one patch; the payload coordinate gives the action.
  const Matrix& v = s.visual.embeddings.value();
  const Matrix& l = s.language.embeddings.value();
  for (std::size_t m = 0; m < cfg.informative; ++m) {
    std::size_t matches = 0;
    for (std::size_t i = 1; i < cfg.visual_tokens; ++i) {
      std::vector<double> diff(cfg.feature_dim);
      for (std::size_t c = 0; c < cfg.feature_dim; ++c) diff[c] = v(i, c) - l(m, c);
      const double along = dot(diff, world.payload_direction.row(0));
      double residual = 0.0;
      for (std::size_t c = 0; c < cfg.feature_dim; ++c) {
        const double r = diff[c] - along * world.payload_direction(0, c);
        residual += r * r;
      }
      if (residual < 1e-18) {
        ++matches;
        CHECK(along / cfg.payload_scale == doctest::Approx(s.target(0, m)).epsilon(1e-12));
      }
    }
    CHECK(matches == 1);
  }

  Rng a(82), b(82);
  const ToyConfig d = small_config();
  const ToyWorld w = make_world(d);
  const SyntheticSample x = generate_sample(d, w, a), y = generate_sample(d, w, b);
  CHECK(x.visual.embeddings.value() == y.visual.embeddings.value());
  CHECK(x.language.embeddings.value() == y.language.embeddings.value());
  CHECK(x.target == y.target);
  CHECK(x.informative == y.informative);

  ToyConfig bad = small_config();
  bad.informative = bad.visual_tokens;
  CHECK_THROWS_AS(generate_sample(bad, w, a), ArgumentError);
}

TEST_CASE("sample invariants") {
  const ToyConfig cfg;
  const ToyWorld world = make_world(cfg);
  Rng rng(83);
  for (int t = 0; t < 200; ++t) {
    const SyntheticSample s = generate_sample(cfg, world, rng);
    CHECK(s.informative.size() == cfg.informative);
    CHECK(std::find(s.informative.begin(), s.informative.end(), 0) == s.informative.end());
    CHECK(std::is_sorted(s.informative.begin(), s.informative.end()));
    CHECK(s.visual.cls_index == std::optional<std::size_t>(0));
    for (double v : s.visual.embeddings.value().row(0)) CHECK(v == 0.0);
    for (double a : s.target.values()) CHECK((std::abs(a) >= 0.5 && std::abs(a) <= 1.5));
  }
}

TEST_CASE("background tokens are uncorrelated with the target") {
  const ToyConfig cfg;
  const ToyWorld world = make_world(cfg);
  Rng rng(84);
  const std::size_t n = 10000;
  // Pearson correlation between target[0] and each feature of one background patch.
  std::vector<double> xs(n), ys(n);
  double worst = 0.0;
  for (std::size_t c = 0; c < 4; ++c) {
    Rng local = rng.split(c);
    for (std::size_t i = 0; i < n; ++i) {
      const SyntheticSample s = generate_sample(cfg, world, local);
      std::size_t bg = 1;
      while (std::binary_search(s.informative.begin(), s.informative.end(), bg)) ++bg;
      xs[i] = dot(s.visual.embeddings.value().row(bg), world.payload_direction.row(0)) + s.visual.embeddings.value()(bg, c);
      ys[i] = s.target(0, 0);
    }
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < n; ++i) {
      mx += xs[i];
      my += ys[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < n; ++i) {
      sxy += (xs[i] - mx) * (ys[i] - my);
      sxx += (xs[i] - mx) * (xs[i] - mx);
      syy += (ys[i] - my) * (ys[i] - my);
    }
    worst = std::max(worst, std::abs(sxy / std::sqrt(sxx * syy)));
  }
  CHECK(worst < 0.05);
}

TEST_CASE("forward: all-kept selection matches the unpruned model bit-exactly") {
  const ToyConfig cfg = small_config();
  const ToyWorld world = make_world(cfg);
  Rng data(85);
  for (Variant v : {Variant::parameter_free, Variant::vision_learnable}) {
    Rng i1(86), i2(86);
    const ToyModel none(cfg, model_config(Variant::none), i1);
    const ToyModel pruned(cfg, model_config(v), i2);
    for (const char* name : {"embed", "layer0.wq", "readout"})
      CHECK(none.parameters()[none.index_of(name)].value == pruned.parameters()[pruned.index_of(name)].value);
    for (int t = 0; t < 10; ++t) {
      const SyntheticSample s = generate_sample(cfg, world, data);
      const ForwardOutput full = predict(none, s);
      CHECK_FALSE(full.selection.has_value());
      CHECK(full.visual_tokens_consumed == cfg.visual_tokens);
      ForwardOptions all;
      all.forced_kept = testing::iota(cfg.visual_tokens);
      const ForwardOutput kept = forward(pruned, bind(pruned, nullptr), s, all);
      CHECK(kept.prediction.value() == full.prediction.value());
    }
  }
}

TEST_CASE("forward is deterministic") {
  const ToyConfig cfg = small_config();
  const ToyWorld world = make_world(cfg);
  for (Variant v : {Variant::parameter_free, Variant::vision_learnable, Variant::llm_learnable}) {
    Rng init(87);
    const ToyModel model(cfg, model_config(v), init);
    Rng d1(88), d2(88);
    const SyntheticSample s1 = generate_sample(cfg, world, d1), s2 = generate_sample(cfg, world, d2);
    Rng n1(89), n2(89);
    ForwardOptions o1, o2;
    o1.mode = o2.mode = PruneMode::train;
    o1.alpha = o2.alpha = 0.8;
    o1.rng = &n1;
    o2.rng = &n2;
    const ForwardOutput a = forward(model, bind(model, nullptr), s1, o1);
    const ForwardOutput b = forward(model, bind(model, nullptr), s2, o2);
    CHECK(a.prediction.value() == b.prediction.value());
    CHECK(a.selection->kept_indices == b.selection->kept_indices);
    CHECK(predict(model, s1).prediction.value() == predict(model, s2).prediction.value());
  }
}

TEST_CASE("forward rejects mismatched samples") {
  const ToyConfig cfg = small_config();
  Rng init(90);
  const ToyModel model(cfg, model_config(Variant::parameter_free), init);
  ToyConfig other = small_config();
  other.feature_dim = 5;
  Rng data(91);
  const SyntheticSample s = generate_sample(other, make_world(other), data);
  CHECK_THROWS_AS(predict(model, s), ShapeError);
}

TEST_CASE("train-mode gradients match finite differences on a 6-token instance") {
  ToyConfig cfg = small_config();
  cfg.visual_tokens = 6;
  cfg.informative = 2;
  cfg.text_tokens = 3;
  const ToyWorld world = make_world(cfg);
  for (Variant v : {Variant::parameter_free, Variant::vision_learnable, Variant::llm_learnable}) {
    CAPTURE(to_string(v));
    Rng init(92), data(93);
    const ToyModel model(cfg, model_config(v), init);
    const SyntheticSample s = generate_sample(cfg, world, data);

    Tape tape;
    const BoundParameters params = bind(model, &tape);
    Rng noise(94);
    ForwardOptions opts;
    opts.mode = PruneMode::train;
    opts.alpha = 0.5;
    opts.rng = &noise;
    const ForwardOutput out = forward(model, params, s, opts);
    const Var loss = mean_squared_error(out.prediction, s.target);
    tape.backward(loss);

    // Straight-through oracle: with the hard selection frozen, the gradient is
    // the replayed loss difference plus <dL/dI, d softmax(S')>.
    const Var& indicator = out.selection->indicator;
    const Var& ranked = out.selection->ranked_scores;
    const Matrix g_indicator = tape.grad(indicator);
    const Matrix hard0 = indicator.value();
    for (std::size_t k = 0; k < params.vars.size(); ++k) {
      CAPTURE(model.parameters()[k].name);
      const Var& leaf = params.vars[k];
      const Matrix original = leaf.value();
      auto surrogate = [&](const Matrix& value) {
        tape.set_leaf(leaf, value);
        tape.replay();
        REQUIRE(indicator.value() == hard0);
        const Matrix soft = softmax_rows(ranked.value());
        double inner = 0.0;
        for (std::size_t i = 0; i < soft.size(); ++i) inner += g_indicator.data()[i] * soft.data()[i];
        return loss.value()(0, 0) + inner;
      };
      const Matrix oracle = testing::finite_difference(surrogate, original);
      tape.set_leaf(leaf, original);
      tape.replay();
      CHECK(relative_error(tape.grad(leaf), oracle) < 1e-4);
    }
  }
}

TEST_CASE("every parameter receives a finite, non-zero gradient") {
  const ToyConfig cfg;
  const ToyWorld world = make_world(cfg);
  for (Variant v : {Variant::none, Variant::parameter_free, Variant::vision_learnable, Variant::llm_learnable}) {
    CAPTURE(to_string(v));
    ModelConfig mc;
    mc.variant = v;
    if (v == Variant::llm_learnable) mc.layers = 2;
    Rng init(95), data(96), noise(97);
    const ToyModel model(cfg, mc, init);
    const SyntheticSample s = generate_sample(cfg, world, data);
    Tape tape;
    const BoundParameters params = bind(model, &tape);
    ForwardOptions opts;
    opts.mode = PruneMode::train;
    opts.alpha = 1.0;
    opts.rng = &noise;
    tape.backward(mean_squared_error(forward(model, params, s, opts).prediction, s.target));
    for (std::size_t k = 0; k < params.vars.size(); ++k) {
      CAPTURE(model.parameters()[k].name);
      const Matrix g = tape.grad(params.vars[k]);
      CHECK(all_finite(g));
      CHECK(testing::max_abs(g) > 0.0);
    }
  }
}

TEST_CASE("model configuration errors") {
  const ToyConfig cfg = small_config();
  Rng rng(98);
  ModelConfig llm = model_config(Variant::llm_learnable);
  llm.layers = 1;
  CHECK_THROWS_AS(ToyModel(cfg, llm, rng), ArgumentError);
  ModelConfig many = model_config(Variant::vision_learnable);
  many.queries = cfg.visual_tokens + 1;
  CHECK_THROWS_AS(ToyModel(cfg, many, rng), ArgumentError);
  CHECK(parse_variant("parameter-free") == Variant::parameter_free);
  CHECK_FALSE(parse_variant("lightvla").has_value());
}

TEST_CASE("train with zero steps reports the initial model") {
  TrainConfig cfg;
  cfg.data = small_config();
  cfg.model = model_config(Variant::parameter_free);
  cfg.steps = 0;
  cfg.eval_episodes = 20;
  const TrainResult r = train(cfg);
  CHECK(r.report.trace.empty());
  CHECK(r.report.recovery.episodes == 20);
  Rng init(cfg.seed);
  Rng init_stream = init.split(stream_tag("init"));
  const ToyModel fresh(cfg.data, cfg.model, init_stream);
  CHECK(fresh.parameters()[0].value == r.model.parameters()[0].value);
  Rng eval = Rng(cfg.seed).split(stream_tag("eval"));
  const RecoveryMetrics m = evaluate_recovery(fresh, 20, eval);
  CHECK(m.recall == r.report.recovery.recall);
  CHECK(m.accuracy == r.report.recovery.accuracy);
}

TEST_CASE("short training is reproducible and parallel-safe") {
  TrainConfig cfg;
  cfg.data = small_config();
  cfg.model = model_config(Variant::parameter_free);
  cfg.steps = 20;
  cfg.batch = 4;
  cfg.eval_episodes = 10;
  const TrainResult a = train(cfg);
  cfg.jobs = 3;
  const TrainResult b = train(cfg);
  REQUIRE(a.report.trace.size() == 20);
  for (std::size_t i = 0; i < 20; ++i) {
    CHECK(a.report.trace[i].loss == b.report.trace[i].loss);
    CHECK(a.report.trace[i].retained_mean == b.report.trace[i].retained_mean);
  }
  CHECK(a.model.parameters()[0].value == b.model.parameters()[0].value);
  CHECK(a.report.trace.front().alpha == 1.0);
}

TEST_CASE("evaluate_recovery: no pruner means full recall") {
  const ToyConfig cfg = small_config();
  Rng init(99), eval(100);
  const ToyModel none(cfg, model_config(Variant::none), init);
  const RecoveryMetrics m = evaluate_recovery(none, 50, eval);
  CHECK(m.recall == 1.0);
  CHECK(m.retained_mean == static_cast<double>(cfg.visual_tokens));
  CHECK(m.retained_std == 0.0);
}

TEST_CASE("random scores: recall tracks the kept fraction") {
  Rng rng(101);
  const std::size_t patches = 63, k = 8;
  double recall = 0.0, kept = 0.0;
  const int trials = 3000;
  for (int t = 0; t < trials; ++t) {
    Matrix s(patches, patches);
    for (double& v : s.values()) v = rng.normal();
    const SelectionResult sel = select_infer(ScoreMatrix::from_values(Var(s)));
    const auto informative = rng.sample_without_replacement(patches, k);
    std::size_t found = 0;
    for (std::size_t i : informative)
      if (std::binary_search(sel.kept_indices.begin(), sel.kept_indices.end(), i)) ++found;
    recall += static_cast<double>(found) / k;
    kept += static_cast<double>(sel.kept_count());
  }
  recall /= trials;
  kept /= trials;
  CHECK(std::abs(recall - kept / patches) < 0.01);
}

TEST_CASE("sign accuracy") {
  CHECK(sign_accuracy(Matrix{{0.3, -0.2, 0.1}}, Matrix{{1.0, -1.0, -1.0}}) == doctest::Approx(2.0 / 3.0));
  CHECK_THROWS_AS(sign_accuracy(Matrix(1, 2), Matrix(1, 3)), ShapeError);
}
