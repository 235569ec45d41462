#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "parlab/gradcheck.hpp"
#include "parlab/head.hpp"
#include "parlab/metrics.hpp"
#include "support/oracles.hpp"

using namespace parlab;

TEST_CASE("head_forward", "[head]") {
  Rng rng(101);
  SECTION("zero logits give p=0.5 everywhere") {
    ParamRegistry reg;
    auto head = ParHead::init(HeadMode::pooled, 6, 4, rng, reg, "head");
    for (auto& v : head.w.values()) v = 0;
    Tensor p = head_forward(randn({5, 6}, rng), head);
    REQUIRE(p.shape() == Shape{4});
    for (int64_t i = 0; i < 4; ++i) REQUIRE(p.v(i) == 0.5);
  }
  SECTION("output length is L for any token count") {
    ParamRegistry reg;
    auto head = ParHead::init(HeadMode::pooled, 6, 7, rng, reg, "head");
    for (int64_t T : {1L, 3L, 17L})
      REQUIRE(head_forward(randn({T, 6}, rng), head).shape() == Shape{7});
  }
  SECTION("per-attribute mode uses one row per attribute") {
    ParamRegistry reg;
    auto head = ParHead::init(HeadMode::per_attribute, 6, 4, rng, reg, "head");
    Tensor feats = randn({4, 6}, rng);
    Tensor p = head_forward(feats, head);
    REQUIRE(p.shape() == Shape{4});
    REQUIRE_THROWS_AS(head_forward(randn({5, 6}, rng), head), ShapeError);
  }
  SECTION("monotone: raising one logit moves only its probability") {
    ParamRegistry reg;
    auto head = ParHead::init(HeadMode::per_attribute, 3, 4, rng, reg, "head");
    Tensor feats = randn({4, 3}, rng);
    Tensor p0 = head_forward(feats, head);
    head.b.at(2) += 0.75;  // bump attribute 2's logit
    Tensor p1 = head_forward(feats, head);
    for (int64_t j = 0; j < 4; ++j) {
      if (j == 2) REQUIRE(p1.v(j) > p0.v(j));
      else REQUIRE(p1.v(j) == p0.v(j));
    }
  }
}

TEST_CASE("positive_ratios", "[head]") {
  REQUIRE(positive_ratios({{1}, {1}}) == std::vector<Real>{1.0});
  REQUIRE(positive_ratios({{0}, {0}, {0}}) == std::vector<Real>{0.0});
  auto r = positive_ratios({{1, 0}, {1, 1}});
  REQUIRE(r == std::vector<Real>{1.0, 0.5});
  REQUIRE_THROWS_AS(positive_ratios({}), ConfigError);
}

TEST_CASE("weighted_bce", "[head]") {
  SECTION("hand value: y=1, p=0.5, w=1") {
    Tensor p = Tensor::from({1}, {0.5});
    Tensor loss = weighted_bce(p, {1}, LossWeights::uniform(1));
    REQUIRE(loss.v(0) == Catch::Approx(0.6931471805599453).epsilon(1e-12));
  }
  SECTION("perfect prediction is clamp-limited zero") {
    Tensor p = Tensor::from({3}, {1.0, 0.0, 1.0});
    LossWeights w{{0.5, 0.5, 0.5}, WeightMode::deepmar};
    Tensor loss = weighted_bce(p, {1, 0, 1}, w);
    REQUIRE(loss.v(0) >= 0.0);
    REQUIRE(loss.v(0) < 3 * std::exp(1.0) * 1.1e-7);
  }
  SECTION("uniform mode equals unweighted bce bitwise") {
    Rng rng(5);
    Tensor p = rand_uniform({2, 3}, rng, 0.1, 0.9);
    std::vector<uint8_t> y = {1, 0, 1, 0, 0, 1};
    LossWeights uni{{0.2, 0.5, 0.9}, WeightMode::uniform};
    Tensor a = weighted_bce(p, y, uni);
    // direct unweighted computation
    double ref = 0;
    for (int64_t s = 0; s < 2; ++s)
      for (int64_t j = 0; j < 3; ++j) {
        double pv = p.v(s * 3 + j);
        ref -= y[static_cast<std::size_t>(s * 3 + j)] ? std::log(pv) : std::log1p(-pv);
      }
    ref /= 2;
    REQUIRE(a.v(0) == Catch::Approx(ref).epsilon(1e-12));
  }
  SECTION("deepmar weighting favors rare positives") {
    LossWeights w{{0.1}, WeightMode::deepmar};
    REQUIRE(w.pos(0) == Catch::Approx(std::exp(0.9)));
    REQUIRE(w.neg(0) == Catch::Approx(std::exp(0.1)));
    LossWeights lit{{0.1}, WeightMode::literal};
    REQUIRE(lit.pos(0) == lit.neg(0));
  }
  SECTION("loss decreases as p moves toward y") {
    LossWeights w{{0.3}, WeightMode::deepmar};
    double prev = 1e9;
    for (double pv : {0.2, 0.4, 0.6, 0.8, 0.95}) {
      Tensor loss = weighted_bce(Tensor::from({1}, {pv}), {1}, w);
      REQUIRE(loss.v(0) < prev);
      prev = loss.v(0);
    }
  }
  SECTION("non-negative and differentiable") {
    Rng rng(7);
    LossWeights w{{0.2, 0.7}, WeightMode::deepmar};
    auto f = [&](const Tensor& logits) {
      return weighted_bce(sigmoid(logits), {1, 0}, w);
    };
    REQUIRE(grad_check(f, randn({2}, rng), 1e-5) < 1e-6);
  }
  SECTION("NaN probabilities fault") {
    Tensor p = Tensor::from({1}, {std::nan("")});
    REQUIRE_THROWS_AS(weighted_bce(p, {1}, LossWeights::uniform(1)), FaultError);
  }
}

TEST_CASE("compute_metrics hand case", "[metrics]") {
  // Y = [[1,0],[1,1]], predictions [[1,0],[0,1]]
  std::vector<double> scores = {1.0, 0.0, 0.0, 1.0};
  std::vector<uint8_t> labels = {1, 0, 1, 1};
  auto m = compute_metrics(scores, labels, 2, 2);
  REQUIRE(m.pooled.tp == 2);
  REQUIRE(m.pooled.tn == 1);
  REQUIRE(m.pooled.fp == 0);
  REQUIRE(m.pooled.fn == 1);
  REQUIRE(m.acc == 0.75);
  REQUIRE(m.prec == 1.0);
  REQUIRE(m.recall == Catch::Approx(2.0 / 3.0).epsilon(1e-15));
  REQUIRE(m.f1 == Catch::Approx(0.8).epsilon(1e-15));
}

TEST_CASE("perfect predictor scores 1.0 on every metric", "[metrics]") {
  Rng rng(11);
  int64_t S = 20, L = 4;
  std::vector<uint8_t> labels(static_cast<std::size_t>(S * L));
  std::vector<double> scores(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    labels[i] = rng.coin(0.5);
    scores[i] = labels[i] ? rng.uniform(0.6, 1.0) : rng.uniform(0.0, 0.4);
  }
  // ensure every attribute has at least one positive
  for (int64_t j = 0; j < L; ++j) {
    labels[static_cast<std::size_t>(j)] = 1;
    scores[static_cast<std::size_t>(j)] = 0.9;
  }
  auto m = compute_metrics(scores, labels, S, L);
  REQUIRE(m.ma_ap == 1.0);
  REQUIRE(m.ma_bal == 1.0);
  REQUIRE(m.acc == 1.0);
  REQUIRE(m.prec == 1.0);
  REQUIRE(m.recall == 1.0);
  REQUIRE(m.f1 == 1.0);
}

TEST_CASE("compute_metrics equals brute-force enumeration", "[metrics][property]") {
  Rng rng(13);
  for (int trial = 0; trial < 30; ++trial) {
    int64_t S = 50, L = 5;
    std::vector<uint8_t> labels(static_cast<std::size_t>(S * L));
    std::vector<double> scores(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
      labels[i] = rng.coin(rng.uniform(0.1, 0.9));
      scores[i] = rng.uniform(0.0, 1.0);
    }
    auto m = compute_metrics(scores, labels, S, L);
    auto b = oracle::brute_force_metrics(scores, labels, S, L);
    REQUIRE(m.ma_ap == b.ma_ap);
    REQUIRE(m.ma_bal == b.ma_bal);
    REQUIRE(m.acc == b.acc);
    REQUIRE(m.prec == b.prec);
    REQUIRE(m.recall == b.recall);
    REQUIRE(m.f1 == b.f1);
  }
}

TEST_CASE("metric invariants", "[metrics][property]") {
  Rng rng(17);
  int64_t S = 24, L = 3;
  std::vector<uint8_t> labels(static_cast<std::size_t>(S * L));
  std::vector<double> scores(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    labels[i] = rng.coin(0.4);
    scores[i] = rng.uniform(0.0, 1.0);
  }
  auto m = compute_metrics(scores, labels, S, L);

  SECTION("all metrics in [0, 1] and f1 is the harmonic mean") {
    for (double v : {m.ma_ap, m.ma_bal, m.acc, m.prec, m.recall, m.f1}) {
      REQUIRE(v >= 0.0);
      REQUIRE(v <= 1.0);
    }
    if (m.prec + m.recall > 0)
      REQUIRE(m.f1 == Catch::Approx(2 * m.prec * m.recall / (m.prec + m.recall)).epsilon(1e-15));
  }
  SECTION("invariant to sample permutation") {
    std::vector<int64_t> perm(static_cast<std::size_t>(S));
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm);
    std::vector<uint8_t> pl(labels.size());
    std::vector<double> ps(scores.size());
    for (int64_t s = 0; s < S; ++s)
      for (int64_t j = 0; j < L; ++j) {
        ps[static_cast<std::size_t>(s * L + j)] =
            scores[static_cast<std::size_t>(perm[static_cast<std::size_t>(s)] * L + j)];
        pl[static_cast<std::size_t>(s * L + j)] =
            labels[static_cast<std::size_t>(perm[static_cast<std::size_t>(s)] * L + j)];
      }
    auto pm = compute_metrics(ps, pl, S, L);
    REQUIRE(pm.acc == m.acc);
    REQUIRE(pm.prec == m.prec);
    REQUIRE(pm.recall == m.recall);
    REQUIRE(pm.f1 == m.f1);
    REQUIRE(pm.ma_bal == Catch::Approx(m.ma_bal).epsilon(1e-14));
    REQUIRE(pm.ma_ap == Catch::Approx(m.ma_ap).epsilon(1e-14));
  }
  SECTION("pooled metrics invariant to attribute permutation") {
    std::vector<int64_t> perm = {2, 0, 1};
    std::vector<uint8_t> pl(labels.size());
    std::vector<double> ps(scores.size());
    for (int64_t s = 0; s < S; ++s)
      for (int64_t j = 0; j < L; ++j) {
        ps[static_cast<std::size_t>(s * L + j)] =
            scores[static_cast<std::size_t>(s * L + perm[static_cast<std::size_t>(j)])];
        pl[static_cast<std::size_t>(s * L + j)] =
            labels[static_cast<std::size_t>(s * L + perm[static_cast<std::size_t>(j)])];
      }
    auto pm = compute_metrics(ps, pl, S, L);
    REQUIRE(pm.acc == m.acc);
    REQUIRE(pm.prec == m.prec);
    REQUIRE(pm.recall == m.recall);
    REQUIRE(pm.f1 == m.f1);
  }
  SECTION("mA_ap is invariant to strictly monotone score transforms") {
    std::vector<double> ts(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i)
      ts[i] = std::tanh(3.0 * scores[i] - 1.0);  // strictly increasing
    auto tm = compute_metrics(ts, labels, S, L);
    REQUIRE(tm.ma_ap == m.ma_ap);
  }
  SECTION("zero-positive attribute is flagged with AP=0") {
    std::vector<uint8_t> zl = labels;
    for (int64_t s = 0; s < S; ++s) zl[static_cast<std::size_t>(s * L)] = 0;
    auto zm = compute_metrics(scores, zl, S, L);
    REQUIRE(zm.degenerate_attrs == 1);
    REQUIRE(zm.per_attr_ap[0] == 0.0);
  }
}

TEST_CASE("metrics line format", "[metrics]") {
  std::vector<double> scores = {1.0, 0.0};
  std::vector<uint8_t> labels = {1, 0};
  auto m = compute_metrics(scores, labels, 1, 2);
  std::string line = metrics_line(m);
  REQUIRE(line.find("mA_ap=") != std::string::npos);
  REQUIRE(line.find("mA_bal=") != std::string::npos);
  REQUIRE(line.find("f1=") != std::string::npos);
}
