#include <numeric>
#include <sstream>

#include "doctest.h"
#include "test_util.hpp"
#include "unlearn/analysis.hpp"
#include "unlearn/error.hpp"

using namespace unlearn;

namespace {

LabelBOW bows_of(std::vector<std::set<TokenId>> sets) {
  LabelBOW b;
  for (std::size_t c = 0; c < sets.size(); ++c) {
    b.words[static_cast<int>(c)] = sets[c];
    for (TokenId w : sets[c]) b.frequencies[static_cast<int>(c)][w] = 1.0 / static_cast<double>(sets[c].size());
  }
  return b;
}

// Three instances per class, one substitute each.
struct Fixture {
  Dataset data;
  NoiseSet noise;
  Fixture() {
    data.num_classes = 2;
    for (int i = 0; i < 6; ++i) data.texts.push_back({"t" + std::to_string(i), {2, 3, 4, 5, 6}, i % 2});
    const TokenId subs[] = {10, 20, 10, 21, 11, 20};
    const std::size_t pos[] = {0, 4, 2, 4, 4, 3};
    for (int i = 0; i < 6; ++i) {
      const std::string id = "t" + std::to_string(i);
      noise.modifications.emplace(id, Modification{id, pos[i], subs[i]});
    }
  }
};

}  // namespace

TEST_CASE("jaccard hand cases") {
  CHECK(avg_jaccard(bows_of({{1, 2}, {1, 2}})).mean == 1.0);
  CHECK(avg_jaccard(bows_of({{1, 2}, {3}})).mean == 0.0);
  CHECK(avg_jaccard(bows_of({{1, 2}, {2, 3}})).mean == doctest::Approx(1.0 / 3));
  CHECK(avg_jaccard(bows_of({{}, {}})).mean == 0.0);
  const JaccardStats three = avg_jaccard(bows_of({{1, 2}, {2, 3}, {1, 2}}));
  CHECK(three.pairs == 3);
  CHECK(three.sum == doctest::Approx(1.0 / 3 + 1.0 + 1.0 / 3));
  CHECK(three.mean == doctest::Approx(three.sum / 3));
  CHECK_THROWS_AS(avg_jaccard(bows_of({{1}})), Error);
}

TEST_CASE("jaccard is bounded and invariant under relabeling") {
  Rng rng(1);
  for (int c = 0; c < 100; ++c) {
    std::vector<std::set<TokenId>> sets(2 + rng.below(4));
    for (auto& s : sets)
      for (std::size_t i = rng.below(6); i > 0; --i) s.insert(static_cast<TokenId>(rng.below(10)));
    const double a = avg_jaccard(bows_of(sets)).mean;
    CHECK(a >= 0.0);
    CHECK(a <= 1.0);
    rng.shuffle(sets);
    CHECK(avg_jaccard(bows_of(sets)).mean == doctest::Approx(a));
  }
}

TEST_CASE("top-k cumulative probability") {
  LabelBOW b;
  b.frequencies[0] = {{1, 0.5}, {2, 0.3}, {3, 0.2}};
  b.frequencies[1] = {};
  const auto r = topk_cumulative(b, 2);
  CHECK(*r.at(0) == doctest::Approx(0.8));
  CHECK_FALSE(r.at(1).has_value());
  CHECK(*topk_cumulative(b, 3).at(0) == 1.0);
  CHECK(*topk_cumulative(b, 10).at(0) == 1.0);
  CHECK_THROWS_AS(topk_cumulative(b, 0), Error);

  Rng rng(2);
  for (int c = 0; c < 50; ++c) {
    LabelBOW x;
    std::vector<double> w(1 + rng.below(8));
    for (auto& v : w) v = rng.uniform() + 0.01;
    const double total = std::accumulate(w.begin(), w.end(), 0.0);
    for (std::size_t i = 0; i < w.size(); ++i) x.frequencies[0][static_cast<TokenId>(i)] = w[i] / total;
    double prev = 0.0;
    for (std::size_t k = 1; k <= w.size(); ++k) {
      const double v = *topk_cumulative(x, k).at(0);
      CHECK(v >= prev);
      CHECK(v <= 1.0);
      prev = v;
    }
    CHECK(prev == 1.0);
  }
}

TEST_CASE("label BOWs from a noise set") {
  Fixture f;
  const LabelBOW b = label_bows(f.noise, f.data);
  CHECK(b.words.at(0) == std::set<TokenId>{10, 11});
  CHECK(b.words.at(1) == std::set<TokenId>{20, 21});
  CHECK(b.frequencies.at(0).at(10) == doctest::Approx(2.0 / 3));
  for (const auto& [label, freq] : b.frequencies) {
    double s = 0.0;
    for (const auto& [w, p] : freq) s += p;
    CHECK(s == doctest::Approx(1.0).epsilon(1e-9));
  }
  CHECK(avg_jaccard(b).mean == 0.0);
}

TEST_CASE("relative positions and histogram") {
  CHECK(relative_position(0, 5) == 0.0);
  CHECK(relative_position(4, 5) == 1.0);
  CHECK(relative_position(2, 5) == 0.5);
  CHECK(relative_position(0, 1) == 0.0);

  Fixture f;
  const PositionHistogram h = position_histogram(f.noise, f.data);
  CHECK(h.p_rel.size() == 6);
  double mass = 0.0;
  for (double m : h.mass) mass += m;
  CHECK(mass == doctest::Approx(1.0));
  CHECK(h.mass[9] == doctest::Approx(0.5));  // three edits at the last token
  CHECK(h.mass[0] == doctest::Approx(1.0 / 6));
  for (double p : h.p_rel) {
    CHECK(p >= 0.0);
    CHECK(p <= 1.0);
  }
}

TEST_CASE("answer distances") {
  CHECK(answer_distance(2, {3, 4}) == 1);
  CHECK(answer_distance(9, {3, 4}) == 5);
  CHECK(answer_distance(5, {3, 4}) == 1);
  Dataset qa;
  qa.task = TaskKind::qa;
  qa.qas = {{"a", {2, 3, 4, 5, 6, 7, 8, 9, 10, 11}, {2}, {3, 4}}, {"b", {2, 3, 4, 5, 6, 7, 8, 9, 10, 11}, {2}, {3, 4}}};
  NoiseSet n;
  n.modifications.emplace("a", Modification{"a", 2, 12});
  n.modifications.emplace("b", Modification{"b", 9, 12});
  const auto d = answer_distance_stats(n, qa);
  CHECK(d.at(1) == 1);
  CHECK(d.at(5) == 1);
  Fixture f;
  CHECK_THROWS_AS(answer_distance_stats(f.noise, f.data), Error);
  const AnalysisReport r = analyze_noise(n, qa);
  CHECK(r.answer_distance_share(1) == 0.5);
  CHECK(to_json(r)["answer_distance"]["5"] == 1);
}

TEST_CASE("report json and csv") {
  Fixture f;
  const AnalysisReport r = analyze_noise(f.noise, f.data, 1);
  REQUIRE(r.jaccard);
  const auto j = to_json(r);
  CHECK(j["jaccard"]["mean"] == 0.0);
  CHECK(j["topk"]["cumulative"]["0"] == doctest::Approx(2.0 / 3));
  std::ostringstream out;
  write_report_csv(out, r);
  const std::string csv = out.str();
  CHECK(csv.rfind("statistic,key,value\n", 0) == 0);
  CHECK(csv.find("jaccard_mean,,0\n") != std::string::npos);
  CHECK(csv.find("position_bin,9,0.5\n") != std::string::npos);
}
