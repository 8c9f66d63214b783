#include "doctest_torch.hpp"

#include <random>

#include "cyws/error.hpp"
#include "cyws/evaluation.hpp"
#include "support.hpp"

using namespace cyws;
using namespace cyws::evaluation;

using support::random_instance;

TEST_SUITE("evaluation") {
  TEST_CASE("match examples") {
    EvalInstance one{{{0, 0, 10, 10}}, {{{0, 0, 10, 10}, 0.9}}};
    CHECK((match(one) == std::vector<MatchLabel>{MatchLabel::tp}));

    EvalInstance none{{}, {{{0, 0, 10, 10}, 0.9}, {{1, 1, 5, 5}, 0.3}}};
    CHECK((match(none) == std::vector<MatchLabel>{MatchLabel::fp, MatchLabel::fp}));

    EvalInstance twice{{{0, 0, 10, 10}}, {{{0, 0, 10, 10}, 0.9}, {{0, 0, 10, 9}, 0.8}}};
    CHECK((match(twice) == std::vector<MatchLabel>{MatchLabel::tp, MatchLabel::fp}));
  }

  TEST_CASE("matching picks the best unmatched ground truth, lower index on ties") {
    EvalInstance inst{{{0, 0, 10, 10}, {0, 0, 10, 10}}, {{{0, 0, 10, 10}, 0.9}, {{0, 0, 10, 10}, 0.8}}};
    CHECK((match(inst) == std::vector<MatchLabel>{MatchLabel::tp, MatchLabel::tp}));
  }

  TEST_CASE("average precision examples") {
    std::vector<EvalInstance> perfect{{{{0, 0, 10, 10}, {20, 20, 30, 30}},
                                       {{{0, 0, 10, 10}, 0.9}, {{20, 20, 30, 30}, 0.8}}}};
    CHECK(average_precision(perfect).ap == 1.0);

    std::vector<EvalInstance> missed{{{{0, 0, 10, 10}}, {}}};
    CHECK(average_precision(missed).ap == 0.0);

    std::vector<EvalInstance> quarter{{{{0, 0, 10, 10}, {20, 20, 30, 30}},
                                       {{{50, 50, 60, 60}, 0.9}, {{0, 0, 10, 10}, 0.8}}}};
    const auto r = average_precision(quarter);
    CHECK(r.ap == 0.25);
    REQUIRE(r.curve.size() == 2);
    CHECK(r.curve[0].recall == 0.0);
    CHECK(r.curve[0].precision == 0.0);
    CHECK(r.curve[1].recall == 0.5);
    CHECK(r.curve[1].precision == 0.5);

    CHECK(ap_oracle(perfect) == 1.0);
    CHECK(ap_oracle(missed) == 0.0);
    CHECK(ap_oracle(quarter) == 0.25);
  }

  TEST_CASE("degenerate inputs") {
    std::vector<EvalInstance> empty_all{{}};
    CHECK(average_precision(empty_all).ap == 1.0);
    std::vector<EvalInstance> only_fp{{{}, {{{0, 0, 1, 1}, 0.5}}}};
    CHECK(average_precision(only_fp).ap == 0.0);
    CHECK_THROWS(average_precision(std::vector<EvalInstance>{}));
  }

  TEST_CASE("eleven-point interpolation") {
    std::vector<EvalInstance> quarter{{{{0, 0, 10, 10}, {20, 20, 30, 30}},
                                       {{{50, 50, 60, 60}, 0.9}, {{0, 0, 10, 10}, 0.8}}}};
    // Precision 0.5 is available for recall 0, 0.1 .. 0.5: six of eleven points.
    CHECK(average_precision(quarter, 0.5, Interpolation::eleven_point).ap == doctest::Approx(6.0 * 0.5 / 11.0));
  }

  TEST_CASE("optimized AP equals the naive oracle") {
    std::mt19937_64 rng(21);
    for (int trial = 0; trial < 200; ++trial) {
      std::vector<EvalInstance> instances;
      const int n = 1 + trial % 4;
      for (int i = 0; i < n; ++i) instances.push_back(random_instance(rng));
      CHECK(std::abs(average_precision(instances).ap - ap_oracle(instances)) < 1e-9);
    }
  }

  TEST_CASE("oracle refuses large instances") {
    EvalInstance big;
    for (int i = 0; i < 9; ++i) big.predictions.push_back({{0, 0, 1, 1}, 0.5});
    CHECK_THROWS(ap_oracle(std::vector<EvalInstance>{big}));
  }

  TEST_CASE("rank-only invariance and monotonicity") {
    std::mt19937_64 rng(22);
    for (int trial = 0; trial < 50; ++trial) {
      std::vector<EvalInstance> inst{random_instance(rng), random_instance(rng)};
      const double ap = average_precision(inst).ap;
      CHECK(ap >= 0.0);
      CHECK(ap <= 1.0);
      auto scaled = inst;
      for (auto& i : scaled)
        for (auto& p : i.predictions) p.score *= 3.5;
      CHECK(average_precision(scaled).ap == doctest::Approx(ap).epsilon(1e-12));

      // A new object found by the top-ranked prediction never hurts.
      auto better = inst;
      const Bbox fresh{1000, 1000, 1010, 1010};
      better[0].ground_truth.push_back(fresh);
      better[0].predictions.insert(better[0].predictions.begin(), {fresh, 100.0});
      CHECK(average_precision(better).ap >= ap - 1e-12);
    }
  }

  TEST_CASE("size buckets") {
    const auto buckets = coco_buckets();
    REQUIRE(buckets.size() == 4);
    dataset::PairRecord big;
    big.id = "p";
    big.boxes1 = {{0, 0, 100, 100}};
    big.boxes2 = {{0, 0, 120, 100}};
    dataset::PredictionSet preds;
    preds["p"] = {{{{0, 0, 100, 100}, 0.9}, {{0, 0, 5, 5}, 0.95}}, {{{0, 0, 120, 100}, 0.8}}};
    const auto r = evaluate_dataset({big}, preds, buckets);
    CHECK(r.at("small").num_gt == 0);
    CHECK(r.at("large").num_gt == 2);
    CHECK(r.at("large").ap == 1.0);  // the small FP does not count against large
    CHECK(r.at("all").ap < 1.0);
    CHECK(r.at("small").num_fp == 1);

    // Single-bucket dataset: bucket AP equals overall AP.
    dataset::PredictionSet clean;
    clean["p"] = {{{{0, 0, 100, 100}, 0.9}}, {{{0, 0, 120, 100}, 0.8}, {{0, 0, 120, 110}, 0.1}}};
    const auto c = evaluate_dataset({big}, clean, buckets);
    CHECK(c.at("large").ap == c.at("all").ap);
  }

  TEST_CASE("bucket AP equals the oracle when the bucket covers everything") {
    std::mt19937_64 rng(23);
    for (int trial = 0; trial < 50; ++trial) {
      std::vector<EvalInstance> inst{random_instance(rng), random_instance(rng)};
      const SizeBucket all{"all"};
      CHECK(std::abs(bucket_average_precision(inst, all).ap - ap_oracle(inst)) < 1e-9);
    }
  }

  TEST_CASE("missing predictions are reported by id") {
    dataset::PairRecord a, b;
    a.id = "a";
    b.id = "b";
    dataset::PredictionSet preds;
    preds["a"] = {};
    try {
      instances_for({a, b}, preds);
      FAIL("expected DataError");
    } catch (const DataError& e) {
      CHECK(std::string(e.what()).find("b") != std::string::npos);
    }
  }

  TEST_CASE("display suppression") {
    std::vector<Detection> disjoint;
    for (int i = 0; i < 8; ++i) disjoint.push_back({{i * 20.0, 0, i * 20.0 + 10, 10}, 1.0 - i * 0.1});
    auto top = suppress_for_display(disjoint);
    CHECK(top.size() == 5);
    CHECK(top[4].score == doctest::Approx(0.6));

    std::vector<Detection> same(100, Detection{{0, 0, 10, 10}, 0.5});
    CHECK(suppress_for_display(same).size() == 1);

    // Chain: b overlaps a (IoU 0.6) and c (IoU 0.6); d overlaps c only.
    // a kept, b dropped, c kept (IoU with a is 1/3), d dropped.
    std::vector<Detection> chain{{{0, 0, 10, 10}, 0.9}, {{2.5, 0, 12.5, 10}, 0.8}, {{5, 0, 15, 10}, 0.7},
                                 {{7.5, 0, 17.5, 10}, 0.6}};
    auto kept = suppress_for_display(chain);
    REQUIRE(kept.size() == 2);
    CHECK(kept[0].score == 0.9);
    CHECK(kept[1].score == 0.7);
  }

  TEST_CASE("metrics json and csv") {
    std::vector<EvalInstance> quarter{{{{0, 0, 10, 10}, {20, 20, 30, 30}},
                                       {{{50, 50, 60, 60}, 0.9}, {{0, 0, 10, 10}, 0.8}}}};
    std::map<std::string, APResult> results{{"all", average_precision(quarter)}};
    const auto j = metrics_to_json(results);
    CHECK(j["all"]["ap"] == 0.25);
    CHECK(j["all"]["num_gt"] == 2);
    CHECK(j["all"]["num_tp"] == 1);
    CHECK(j["all"]["num_fp"] == 1);
    CHECK(pr_curve_csv(results).find("all,") != std::string::npos);
  }
}
