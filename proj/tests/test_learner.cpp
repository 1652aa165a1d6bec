#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <nlohmann/json.hpp>

#include "subtune/learner.hpp"
#include "subtune/rng.hpp"
#include "subtune/synth.hpp"

using namespace subtune;

namespace {

Configuration make_config(double eta, double alpha, double lambda, double gamma, double subsample,
                          double col_subsample, int max_depth, int num_round) {
  Configuration c;
  c.values = {{"eta", eta},           {"alpha", alpha},
              {"lambda", lambda},     {"gamma", gamma},
              {"subsample", subsample}, {"col_subsample", col_subsample},
              {"max_depth", static_cast<double>(max_depth)},
              {"num_round", static_cast<double>(num_round)}};
  return c;
}

DataBlock block_from_rows(const std::vector<std::vector<double>>& rows,
                          const std::vector<double>& targets) {
  DataBlock block;
  block.n_rows = rows.size();
  block.n_features = rows.front().size();
  block.columns.resize(block.n_rows * block.n_features);
  for (std::size_t i = 0; i < block.n_rows; ++i)
    for (std::size_t f = 0; f < block.n_features; ++f)
      block.columns[f * block.n_rows + i] = rows[i][f];
  block.targets = targets;
  return block;
}

}  // namespace

TEST_CASE("leaf weight formula with hand values") {
  // -sign(G) max(0, |G|-alpha) / (H+lambda)
  CHECK(leaf_weight(10.0, 2.0, 0.0, 1.0) == doctest::Approx(-10.0 / 3.0));
  CHECK(leaf_weight(-10.0, 2.0, 0.0, 1.0) == doctest::Approx(10.0 / 3.0));
  CHECK(leaf_weight(10.0, 2.0, 3.0, 1.0) == doctest::Approx(-7.0 / 3.0));
  CHECK(leaf_weight(10.0, 2.0, 15.0, 1.0) == 0.0);   // alpha clips to zero
  CHECK(leaf_weight(0.0, 5.0, 0.0, 1.0) == 0.0);
}

TEST_CASE("split gain formula with hand values") {
  // GL=10,HL=2,GR=-10,HR=2,lambda=1,gamma=0:
  // 1/2 [100/3 + 100/3 - 0/5] = 100/3
  CHECK(split_gain(10.0, 2.0, -10.0, 2.0, 1.0, 0.0) == doctest::Approx(100.0 / 3.0));
  CHECK(split_gain(10.0, 2.0, -10.0, 2.0, 1.0, 5.0) == doctest::Approx(100.0 / 3.0 - 5.0));
  // No separation: splitting identical halves gains nothing.
  CHECK(split_gain(5.0, 2.0, 5.0, 2.0, 1.0, 0.0) ==
        doctest::Approx(0.5 * (25.0 / 3.0 + 25.0 / 3.0 - 100.0 / 5.0)));
}

TEST_CASE("randomized leaf/gain formulas agree with the closed forms") {
  Rng rng(42);
  for (int i = 0; i < 200; ++i) {
    const double g = rng.uniform(-20.0, 20.0);
    const double h = rng.uniform(0.1, 10.0);
    const double alpha = rng.uniform(0.0, 5.0);
    const double lambda = rng.uniform(1e-6, 3.0);
    const double expected =
        -(g > 0 ? 1.0 : (g < 0 ? -1.0 : 0.0)) * std::max(0.0, std::abs(g) - alpha) / (h + lambda);
    CHECK(leaf_weight(g, h, alpha, lambda) == doctest::Approx(expected).epsilon(1e-12));

    const double gl = rng.uniform(-20.0, 20.0), hl = rng.uniform(0.1, 10.0);
    const double gr = rng.uniform(-20.0, 20.0), hr = rng.uniform(0.1, 10.0);
    const double gamma = rng.uniform(0.0, 4.0);
    const double gain_expected =
        0.5 * (gl * gl / (hl + lambda) + gr * gr / (hr + lambda) -
               (gl + gr) * (gl + gr) / (hl + hr + lambda)) -
        gamma;
    CHECK(split_gain(gl, hl, gr, hr, lambda, gamma) ==
          doctest::Approx(gain_expected).epsilon(1e-12));
  }
}

TEST_CASE("one boosted round on four hand-built rows") {
  // Squared loss, base = mean(y) = 5, so g = (5,5,-5,-5), h = 1 each.
  // Best split x < 2.5: GL=10, HL=2, GR=-10, HR=2; leaves -10/3 and 10/3.
  const auto block = block_from_rows({{1.0}, {2.0}, {3.0}, {4.0}}, {0.0, 0.0, 10.0, 10.0});
  const auto config = make_config(1.0, 0.0, 1.0, 0.0, 1.0, 1.0, 1, 1);
  const auto out = train(config, block, Task::kRegression, 0, 7);

  REQUIRE(out.model.trees.size() == 1);
  const Tree& tree = out.model.trees[0];
  REQUIRE(tree.nodes.size() == 3);
  CHECK(tree.nodes[0].feature == 0);
  CHECK(tree.nodes[0].threshold == doctest::Approx(2.5));
  CHECK(tree.nodes[0].gain == doctest::Approx(100.0 / 3.0));
  CHECK(tree.nodes[tree.nodes[0].left].weight == doctest::Approx(-10.0 / 3.0));
  CHECK(tree.nodes[tree.nodes[0].right].weight == doctest::Approx(10.0 / 3.0));

  const auto preds = predict(out.model, block);
  CHECK(preds[0] == doctest::Approx(5.0 - 10.0 / 3.0));
  CHECK(preds[3] == doctest::Approx(5.0 + 10.0 / 3.0));
}

TEST_CASE("structure respects num_round and max_depth") {
  Rng rng(5);
  std::vector<std::vector<double>> rows8;
  std::vector<double> targets8;
  for (int i = 0; i < 8; ++i) {
    rows8.push_back({rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)});
    targets8.push_back(rows8.back()[0] + 0.5 * rows8.back()[1] * rows8.back()[2]);
  }
  const auto block = block_from_rows(rows8, targets8);

  const auto out = train(make_config(0.3, 0.0, 1.0, 0.0, 1.0, 1.0, 2, 2), block,
                         Task::kRegression, 0, 3);
  CHECK(out.model.trees.size() == 2);
  for (const auto& tree : out.model.trees) CHECK(tree.depth() <= 2);
  CHECK(out.train_seconds > 0.0);
}

TEST_CASE("gamma larger than any achievable gain forces single-leaf trees") {
  SynthSpec spec;
  spec.n_rows = 50;
  spec.n_features = 4;
  spec.seed = 9;
  const Dataset ds = make_synthetic(spec);
  std::vector<std::uint32_t> rows(50);
  for (std::uint32_t i = 0; i < 50; ++i) rows[i] = i;
  const auto block = materialize(ds, rows);

  const auto out = train(make_config(0.3, 0.0, 1.0, 1e9, 1.0, 1.0, 6, 4), block,
                         Task::kRegression, 0, 3);
  for (const auto& tree : out.model.trees) {
    CHECK(tree.nodes.size() == 1);
    CHECK(tree.nodes[0].is_leaf());
  }
}

TEST_CASE("every recorded split gain is positive") {
  SynthSpec spec;
  spec.n_rows = 200;
  spec.n_features = 6;
  spec.seed = 13;
  const Dataset ds = make_synthetic(spec);
  std::vector<std::uint32_t> rows(200);
  for (std::uint32_t i = 0; i < 200; ++i) rows[i] = i;
  const auto block = materialize(ds, rows);

  const auto out = train(make_config(0.2, 0.01, 0.5, 0.1, 0.8, 0.7, 5, 12), block,
                         Task::kRegression, 0, 21);
  for (const auto& tree : out.model.trees)
    for (const auto& node : tree.nodes)
      if (!node.is_leaf()) CHECK(node.gain > 0.0);
}

TEST_CASE("training loss is non-increasing without subsampling") {
  SynthSpec spec;
  spec.n_rows = 120;
  spec.n_features = 5;
  spec.noise = 0.3;
  spec.seed = 17;

  for (Task task : {Task::kRegression, Task::kBinary, Task::kMulticlass}) {
    spec.task = task;
    const Dataset ds = make_synthetic(spec);
    std::vector<std::uint32_t> rows(spec.n_rows);
    for (std::uint32_t i = 0; i < spec.n_rows; ++i) rows[i] = i;
    const auto block = materialize(ds, rows);

    double previous = std::numeric_limits<double>::infinity();
    for (int rounds : {1, 2, 4, 8, 16}) {
      const auto out = train(make_config(0.4, 0.0, 1.0, 0.0, 1.0, 1.0, 4, rounds), block, task,
                             ds.n_classes, 23);
      const double loss = training_loss(out.model, block);
      CHECK(loss <= previous + 1e-9);
      previous = loss;
    }
  }
}

TEST_CASE("noiseless regression is nearly interpolated with generous capacity") {
  SynthSpec spec;
  spec.n_rows = 400;
  spec.n_features = 6;
  spec.noise = 0.0;
  spec.seed = 31;
  const Dataset ds = make_synthetic(spec);
  std::vector<std::uint32_t> rows(400);
  for (std::uint32_t i = 0; i < 400; ++i) rows[i] = i;
  const auto block = materialize(ds, rows);

  const auto out = train(make_config(0.3, 0.0, 1e-6, 1e-6, 1.0, 1.0, 6, 200), block,
                         Task::kRegression, 0, 3);
  const auto score = evaluate(out.model, block, MetricKind::kR2);
  CHECK(score.value >= 0.99);
}

TEST_CASE("binary training separates a separable toy set") {
  // Label = x0 > 0, plenty of rounds.
  std::vector<std::vector<double>> rows;
  std::vector<double> targets;
  Rng rng(3);
  for (int i = 0; i < 60; ++i) {
    const double x0 = rng.uniform(-1.0, 1.0);
    rows.push_back({x0, rng.uniform(-1.0, 1.0)});
    targets.push_back(x0 > 0 ? 1.0 : 0.0);
  }
  const auto block = block_from_rows(rows, targets);
  const auto out = train(make_config(0.5, 0.0, 1.0, 0.0, 1.0, 1.0, 3, 30), block, Task::kBinary,
                         2, 11);
  CHECK(evaluate(out.model, block, MetricKind::kWeightedAuc).value == doctest::Approx(1.0));

  const auto preds = predict(out.model, block);
  for (double p : preds) {
    CHECK(p > 0.0);
    CHECK(p < 1.0);
  }
}

TEST_CASE("multiclass grows one tree per class per round") {
  SynthSpec spec;
  spec.task = Task::kMulticlass;
  spec.n_classes = 3;
  spec.n_rows = 90;
  spec.n_features = 4;
  spec.seed = 37;
  const Dataset ds = make_synthetic(spec);
  std::vector<std::uint32_t> rows(90);
  for (std::uint32_t i = 0; i < 90; ++i) rows[i] = i;
  const auto block = materialize(ds, rows);

  const auto out = train(make_config(0.3, 0.0, 1.0, 0.0, 1.0, 1.0, 3, 5), block,
                         Task::kMulticlass, 3, 41);
  CHECK(out.model.trees.size() == 15);

  const auto probs = predict(out.model, block);
  REQUIRE(probs.size() == 90 * 3);
  for (std::size_t i = 0; i < 90; ++i) {
    double sum = 0.0;
    for (std::size_t c = 0; c < 3; ++c) sum += probs[i * 3 + c];
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
  }
  CHECK(evaluate(out.model, block, MetricKind::kOvrWeightedAuc).value > 0.6);
}

TEST_CASE("zero-weight leaves predict the base score") {
  const auto block = block_from_rows({{1.0}, {2.0}, {3.0}, {4.0}}, {1.0, 2.0, 3.0, 4.0});
  // alpha large enough to clip every leaf to zero.
  const auto out = train(make_config(0.5, 1e6, 1.0, 0.0, 1.0, 1.0, 3, 3), block,
                         Task::kRegression, 0, 2);
  const auto preds = predict(out.model, block);
  for (double p : preds) CHECK(p == doctest::Approx(2.5));
}

TEST_CASE("determinism and per-round stream independence") {
  SynthSpec spec;
  spec.n_rows = 150;
  spec.n_features = 5;
  spec.seed = 43;
  const Dataset ds = make_synthetic(spec);
  std::vector<std::uint32_t> rows(150);
  for (std::uint32_t i = 0; i < 150; ++i) rows[i] = i;
  const auto block = materialize(ds, rows);

  const auto config = make_config(0.3, 0.01, 0.5, 0.01, 0.7, 0.6, 4, 6);
  const auto a = train(config, block, Task::kRegression, 0, 99);
  const auto b = train(config, block, Task::kRegression, 0, 99);
  CHECK(a.model.to_json().dump() == b.model.to_json().dump());

  const auto c = train(config, block, Task::kRegression, 0, 100);
  CHECK(a.model.to_json().dump() != c.model.to_json().dump());

  // Extending num_round leaves earlier rounds untouched.
  auto config10 = config;
  config10.values["num_round"] = 10;
  const auto d = train(config10, block, Task::kRegression, 0, 99);
  REQUIRE(d.model.trees.size() == 10);
  for (std::size_t t = 0; t < 6; ++t) {
    REQUIRE(d.model.trees[t].nodes.size() == a.model.trees[t].nodes.size());
    for (std::size_t n = 0; n < d.model.trees[t].nodes.size(); ++n) {
      CHECK(d.model.trees[t].nodes[n].weight == a.model.trees[t].nodes[n].weight);
      CHECK(d.model.trees[t].nodes[n].threshold == a.model.trees[t].nodes[n].threshold);
    }
  }

  const auto p1 = predict(a.model, block);
  const auto p2 = predict(a.model, block);
  CHECK(p1 == p2);
}

TEST_CASE("model JSON round-trip preserves predictions") {
  SynthSpec spec;
  spec.n_rows = 80;
  spec.n_features = 4;
  spec.seed = 53;
  const Dataset ds = make_synthetic(spec);
  std::vector<std::uint32_t> rows(80);
  for (std::uint32_t i = 0; i < 80; ++i) rows[i] = i;
  const auto block = materialize(ds, rows);

  const auto out = train(make_config(0.3, 0.01, 0.5, 0.01, 0.8, 0.8, 4, 8), block,
                         Task::kRegression, 0, 61);
  const auto restored = BoostedModel::from_json(out.model.to_json());
  CHECK(predict(restored, block) == predict(out.model, block));
}

TEST_CASE("error paths") {
  const auto block = block_from_rows({{1.0}, {2.0}}, {0.0, 1.0});
  DataBlock empty;
  CHECK_THROWS_AS(train(make_config(0.3, 0, 1, 0, 1, 1, 2, 2), empty, Task::kRegression, 0, 1),
                  std::invalid_argument);

  Configuration incomplete;
  incomplete.values = {{"eta", 0.1}};
  CHECK_THROWS_AS(train(incomplete, block, Task::kRegression, 0, 1), std::invalid_argument);

  const auto out = train(make_config(0.3, 0, 1, 0, 1, 1, 2, 2), block, Task::kRegression, 0, 1);
  CHECK_THROWS_AS(evaluate(out.model, block, MetricKind::kWeightedAuc), std::invalid_argument);

  DataBlock wrong = block_from_rows({{1.0, 2.0}}, {0.0});
  CHECK_THROWS_AS(predict(out.model, wrong), std::invalid_argument);

  // Numeric overflow is reported, not clamped.
  const auto huge = block_from_rows({{1.0}, {2.0}, {3.0}, {4.0}},
                                    {1e308, 1e308, -1e308, 1e308});
  CHECK_THROWS_AS(train(make_config(1.0, 0, 1e-6, 0, 1, 1, 3, 4), huge, Task::kRegression, 0, 1),
                  std::runtime_error);
}
