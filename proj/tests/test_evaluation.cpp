#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <sstream>

#include "aesm2/evaluation.hpp"
#include "aesm2/train.hpp"
#include "test_util.hpp"

using namespace aesm2;

namespace {

// O(P*N) pair-counting oracle, ties worth 1/2.
double oracle_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  double wins = 0.0;
  long pairs = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 1) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] != 0) continue;
      ++pairs;
      if (scores[i] > scores[j])
        wins += 1.0;
      else if (scores[i] == scores[j])
        wins += 0.5;
    }
  }
  return wins / static_cast<double>(pairs);
}

}  // namespace

TEST_SUITE("evaluation") {

TEST_CASE("auc basics") {
  SUBCASE("perfect ordering") {
    std::vector<double> s{0.1, 0.2, 0.8, 0.9};
    std::vector<int> l{0, 0, 1, 1};
    CHECK(*auc(s, l) == 1.0);
  }
  SUBCASE("all ties") {
    std::vector<double> s{0.5, 0.5, 0.5, 0.5};
    std::vector<int> l{0, 1, 0, 1};
    CHECK(*auc(s, l) == 0.5);
  }
  SUBCASE("hand-counted 0.75") {
    std::vector<double> s{0.1, 0.4, 0.35, 0.8};
    std::vector<int> l{0, 0, 1, 1};
    CHECK(*auc(s, l) == 0.75);
  }
  SUBCASE("single class is undefined, never 0.5") {
    std::vector<double> s{0.1, 0.2};
    std::vector<int> l{1, 1};
    CHECK_FALSE(auc(s, l).has_value());
  }
  SUBCASE("bad labels rejected") {
    std::vector<double> s{0.1};
    std::vector<int> l{2};
    CHECK_THROWS_AS(auc(s, l), DataError);
  }
}

TEST_CASE("auc equals brute-force pair counting on 1000 random inputs") {
  RandomSource rng(31337);
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 2 + rng.uniform_int(199);
    std::vector<double> scores;
    std::vector<int> labels;
    int pos = 0;
    for (int i = 0; i < n; ++i) {
      // Quantized scores force plenty of ties.
      scores.push_back(0.1 * rng.uniform_int(10));
      labels.push_back(rng.uniform() < 0.4 ? 1 : 0);
      pos += labels.back();
    }
    if (pos == 0) labels[0] = 1;
    if (pos == n) labels[0] = 0;
    CHECK(*auc(scores, labels) == oracle_auc(scores, labels));
  }
}

TEST_CASE("auc is invariant under strictly increasing transforms") {
  RandomSource rng(55);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 5 + rng.uniform_int(50);
    std::vector<double> scores;
    std::vector<int> labels;
    for (int i = 0; i < n; ++i) {
      scores.push_back(rng.normal());
      labels.push_back(rng.uniform() < 0.5 ? 1 : 0);
    }
    labels[0] = 1;
    labels[1] = 0;
    std::vector<double> transformed;
    for (double s : scores) transformed.push_back(std::exp(0.5 * s) + 3.0);
    CHECK(*auc(scores, labels) == *auc(transformed, labels));
  }
}

TEST_CASE("evaluate on an untrained model is chance level") {
  // Needs the default (large-vocabulary) schema: with a tiny input space an
  // untrained model's random per-id scores correlate with the ground truth.
  SyntheticSpec spec = default_synthetic_spec();
  spec.shares = {0.25, 0.25, 0.25, 0.25};
  spec.ctr_base = {0.3, 0.3, 0.3, 0.3};
  spec.cvr_base = {0.2, 0.2, 0.2, 0.2};
  const Dataset ds = generate_synthetic(spec, 60000, 7);
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto model = make_model(ModelKind::aesm2, ModelConfig{}, ds.schema, seed);
    const MetricReport report = evaluate(*model, ds);
    for (const auto& cell : report.cells) {
      REQUIRE(cell.auc.has_value());
      CHECK(*cell.auc > 0.45);
      CHECK(*cell.auc < 0.55);
    }
  }
}

TEST_CASE("a trained model beats chance everywhere") {
  SyntheticSpec spec = testutil::tiny_spec();
  spec.alpha = 0.5;
  spec.beta = 0.5;
  const Dataset train = generate_synthetic(spec, 24000, 100);
  const Dataset val = generate_synthetic(spec, 4000, 101);
  const Dataset test = generate_synthetic(spec, 8000, 102);

  ModelConfig cfg = testutil::tiny_model_config();
  auto model = make_model(ModelKind::aesm2, cfg, train.schema, 1);
  TrainSettings settings;
  settings.epochs = 4;
  settings.patience = 4;
  train_model(*model, train, val, settings, 9);
  const MetricReport report = evaluate(*model, test);
  for (const auto& cell : report.cells) {
    REQUIRE(cell.auc.has_value());
    CHECK(*cell.auc > 0.55);
  }
}

TEST_CASE("evaluate is deterministic") {
  SyntheticSpec spec = testutil::tiny_spec();
  const Dataset ds = generate_synthetic(spec, 5000, 3);
  auto model = make_model(ModelKind::aesm2, testutil::tiny_model_config(),
                          ds.schema, 11);
  const MetricReport a = evaluate(*model, ds);
  const MetricReport b = evaluate(*model, ds);
  REQUIRE(a.cells.size() == b.cells.size());
  for (std::size_t i = 0; i < a.cells.size(); ++i)
    CHECK(a.cells[i].auc == b.cells[i].auc);
}

TEST_CASE("transfer matrix shape and determinism") {
  SyntheticSpec spec = testutil::tiny_spec();
  const Dataset train = generate_synthetic(spec, 8000, 300);
  const Dataset test = generate_synthetic(spec, 4000, 301);

  std::vector<std::unique_ptr<Model>> owned;
  std::vector<Model*> models;
  std::vector<Dataset> tests;
  for (int s = 0; s < 4; ++s) {
    Dataset tr, te;
    tr.schema = train.schema;
    te.schema = test.schema;
    for (const auto& inst : train.instances)
      if (scenario_index(train.schema, inst) == s) tr.instances.push_back(inst);
    for (const auto& inst : test.instances)
      if (scenario_index(test.schema, inst) == s) te.instances.push_back(inst);
    auto m = make_model(ModelKind::hard_sharing, testutil::tiny_model_config(),
                        train.schema, 40 + static_cast<std::uint64_t>(s));
    TrainSettings settings;
    settings.epochs = 1;
    train_model(*m, tr, tr, settings, 50 + static_cast<std::uint64_t>(s));
    owned.push_back(std::move(m));
    models.push_back(owned.back().get());
    tests.push_back(std::move(te));
  }
  const TransferMatrices mats = transfer_matrix(models, tests);
  CHECK(mats.scenario_names.size() == 4);
  CHECK(mats.by_task.at("ctr").size() == 4);
  CHECK(mats.by_task.at("ctcvr")[0].size() == 4);
  std::ostringstream os;
  write_transfer_csv(os, mats, "ctr");
  CHECK(os.str().find("train\\test") == 0);
}

TEST_CASE("utilization") {
  const DatasetSchema schema = testutil::tiny_schema();
  ModelConfig cfg = testutil::tiny_model_config();
  cfg.noise_scale = 0.0;
  SyntheticSpec spec = testutil::tiny_spec();
  const Dataset ds = generate_synthetic(spec, 2000, 9);

  SUBCASE("specific frequencies per group sum to k_specific") {
    AESM2Model model(ModelKind::aesm2, cfg, schema, 77);
    const UtilizationReport report = utilization(model, ds);
    std::map<std::pair<int, std::string>, double> sums;
    for (const auto& c : report.cells)
      sums[{c.layer, c.group}] += c.specific_freq;
    CHECK(!sums.empty());
    for (const auto& [key, total] : sums)
      CHECK(total == doctest::Approx(static_cast<double>(cfg.k_specific)).epsilon(1e-9));
  }
  SUBCASE("gates pinned to expert 0 give it frequency 1") {
    AESM2Model model(ModelKind::aesm2, cfg, schema, 78);
    // All-zero gates make every G-tilde row uniform; every KL ties and the
    // lowest index wins everywhere.
    for (auto* layers : {&model.scenario_layers, &model.task_layers})
      for (auto& layer : *layers)
        for (auto& gate : layer.gates) {
          std::fill(gate.w.values().begin(), gate.w.values().end(), 0.0);
          std::fill(gate.b.values().begin(), gate.b.values().end(), 0.0);
        }
    const UtilizationReport report = utilization(model, ds);
    for (const auto& c : report.cells) {
      if (c.expert == 0) {
        CHECK(c.specific_freq == doctest::Approx(1.0));
        CHECK(c.shared_freq == doctest::Approx(1.0));
      } else {
        CHECK(c.specific_freq == doctest::Approx(0.0));
        CHECK(c.shared_freq == doctest::Approx(0.0));
      }
    }
  }
}

TEST_CASE("utilization groups channel-similar scenarios together") {
  // Scenarios sharing a channel should have closer channel-level utilization
  // vectors than cross-channel pairs; majority vote over 5 seeds.
  SyntheticSpec spec = default_synthetic_spec();
  spec.alpha = 0.5;
  spec.beta = 0.1;
  spec.shares = {0.25, 0.25, 0.25, 0.25};
  spec.ctr_base = {0.35, 0.25, 0.30, 0.20};
  spec.cvr_base = {0.2, 0.2, 0.2, 0.2};

  int wins = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const Dataset train = generate_synthetic(spec, 30000, derive_seed(seed, "t"));
    const Dataset val = generate_synthetic(spec, 5000, derive_seed(seed, "v"));
    ModelConfig cfg = testutil::tiny_model_config();
    cfg.scenario_experts = 4;
    cfg.task_experts = 4;
    auto model = make_model(ModelKind::aesm2, cfg, train.schema, seed);
    TrainSettings settings;
    settings.epochs = 3;
    settings.patience = 3;
    train_model(*model, train, val, settings, seed);

    const UtilizationReport report = utilization(*model, val);
    // Channel-layer (layer 0) specific-frequency vector per leaf scenario.
    std::map<std::string, std::vector<double>> vecs;
    for (const auto& c : report.cells)
      if (c.layer == 0 && !c.task_level) {
        auto& v = vecs[c.group];
        if (v.size() <= static_cast<std::size_t>(c.expert))
          v.resize(static_cast<std::size_t>(c.expert) + 1, 0.0);
        v[static_cast<std::size_t>(c.expert)] = c.specific_freq;
      }
    REQUIRE(vecs.size() == 4);
    auto l1 = [&](const std::string& a, const std::string& b) {
      double d = 0.0;
      for (std::size_t i = 0; i < vecs[a].size(); ++i)
        d += std::fabs(vecs[a][i] - vecs[b][i]);
      return d;
    };
    const double same_channel =
        0.5 * (l1("channel0.domain0", "channel0.domain1") +
               l1("channel1.domain0", "channel1.domain1"));
    const double cross_channel =
        0.25 * (l1("channel0.domain0", "channel1.domain0") +
                l1("channel0.domain0", "channel1.domain1") +
                l1("channel0.domain1", "channel1.domain0") +
                l1("channel0.domain1", "channel1.domain1"));
    if (same_channel < cross_channel) ++wins;
  }
  CHECK(wins >= 3);
}

TEST_CASE("kl_curves parses the training step log") {
  SUBCASE("well-formed log") {
    std::istringstream is(
        "step,epoch,bce_ctr,bce_ctcvr,kl_specific,kl_shared,l2,total\n"
        "0,0,0.7,0.1,2.5,1.5,0.01,3.0\n"
        "20,0,0.6,0.09,2.0,1.2,0.01,2.6\n");
    const KlCurves curves = kl_curves(is);
    CHECK(curves.steps == std::vector<long>{0, 20});
    CHECK(curves.kl_specific == std::vector<double>{2.5, 2.0});
    CHECK(curves.kl_shared == std::vector<double>{1.5, 1.2});
  }
  SUBCASE("missing fields are reported") {
    std::istringstream is("step,epoch,total\n0,0,1.0\n");
    CHECK_THROWS_WITH_AS(kl_curves(is), doctest::Contains("kl_specific"),
                         DataError);
  }
}

}  // TEST_SUITE
