#include <cmath>
#include <functional>
#include <limits>
#include <numeric>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "support.hpp"
#include "xlt/analysis.hpp"

using namespace xlt;
using fixtures::optimal_cost;
using fixtures::oracle_spearman;

namespace {

std::vector<std::vector<double>> dataset(std::uint64_t seed, std::size_t n, std::size_t d, bool blobs) {
  Rng rng(seed);
  std::vector<std::vector<double>> centres(3, std::vector<double>(d));
  for (auto& c : centres) {
    for (auto& x : c) x = rng.uniform(-10, 10);
  }
  std::vector<std::vector<double>> pts(n, std::vector<double>(d));
  for (auto& p : pts) {
    const auto& c = centres[rng.below(3)];
    for (std::size_t j = 0; j < d; ++j) p[j] = blobs ? c[j] + rng.uniform(-1, 1) : rng.uniform(-5, 5);
  }
  return pts;
}

HeadScores scores_from(HeadTopology topo, std::vector<double> v, std::string pair = "") {
  HeadScores s;
  s.topology = topo;
  s.heads = topo.canonical_heads();
  s.scores = std::move(v);
  s.pair = std::move(pair);
  return s;
}

CorrelationReport hand_report(std::vector<std::string> labels, std::vector<std::vector<double>> m) {
  CorrelationReport r;
  r.labels = std::move(labels);
  r.matrix = std::move(m);
  r.subset = "dec";
  r.metric = "spearman";
  summarize(r);
  return r;
}

}  // namespace

TEST(AverageRanks, TiesShareMean) {
  const std::vector<double> v{10, 20, 10, 30, 20, 20};
  EXPECT_EQ(average_ranks(v), (std::vector<double>{1.5, 4, 1.5, 6, 4, 4}));
}

TEST(Spearman, HandCaseIsExactlyPointSix) {
  const std::vector<double> a{1, 2, 3, 4, 5};
  const std::vector<double> b{3, 1, 2, 5, 4};
  EXPECT_EQ(spearman(a, b), 0.6);
}

TEST(Spearman, MonotoneAndReversed) {
  const std::vector<double> a{0.3, 0.1, 0.9, 0.5, 0.7};
  std::vector<double> up, down;
  for (double x : a) {
    up.push_back(std::exp(3 * x) + 2);
    down.push_back(-x * x * x);
  }
  EXPECT_EQ(spearman(a, up), 1.0);
  EXPECT_EQ(spearman(a, down), -1.0);
}

TEST(Spearman, MatchesOracleWithTies) {
  Rng rng(2024);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto n = 2 + static_cast<std::size_t>(rng.below(49));
    std::vector<double> a(n), b(n);
    const bool coarse = trial % 2 == 0;
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = coarse ? static_cast<double>(rng.below(5)) : rng.uniform();
      b[i] = coarse ? static_cast<double>(rng.below(4)) : rng.uniform();
    }
    // Guarantee rank variance on both sides.
    a[0] = -1.0;
    b[1] = 10.0;
    EXPECT_NEAR(spearman(a, b), oracle_spearman(a, b), 1e-10) << "trial " << trial;
  }
}

TEST(Spearman, InvariantsAndErrors) {
  Rng rng(7);
  std::vector<double> a(20), b(20);
  for (auto& x : a) x = rng.uniform();
  for (auto& x : b) x = rng.uniform();
  EXPECT_DOUBLE_EQ(spearman(a, b), spearman(b, a));
  std::vector<double> transformed;
  for (double x : a) transformed.push_back(std::log(x + 1e-3) * 5 - 2);
  EXPECT_EQ(spearman(a, b), spearman(transformed, b));
  EXPECT_THROW(spearman(std::vector<double>{1}, std::vector<double>{2}), UndefinedCorrelationError);
  EXPECT_THROW(spearman(std::vector<double>{1, 1, 1}, std::vector<double>{1, 2, 3}), UndefinedCorrelationError);
  EXPECT_THROW(spearman(std::vector<double>{1, 2}, std::vector<double>{1, 2, 3}), std::invalid_argument);
}

TEST(Spearman, SubsetFlattensCanonically) {
  const HeadTopology topo{2, 2, 4};
  Rng rng(3);
  std::vector<double> va(24), vb(24);
  for (auto& x : va) x = rng.uniform();
  for (auto& x : vb) x = rng.uniform();
  const auto a = scores_from(topo, va);
  const auto b = scores_from(topo, vb);
  // Decoder = self + cross in canonical order: indices 8..23.
  const std::vector<double> da(va.begin() + 8, va.end());
  const std::vector<double> db(vb.begin() + 8, vb.end());
  EXPECT_EQ(spearman(a, b, HeadSubset::decoder), spearman(da, db));
  const std::vector<double> ea(va.begin(), va.begin() + 8);
  const std::vector<double> eb(vb.begin(), vb.begin() + 8);
  EXPECT_EQ(spearman(a, b, HeadSubset::encoder), spearman(ea, eb));
  EXPECT_THROW(spearman(a, scores_from({2, 1, 4}, std::vector<double>(16, 1.0)), HeadSubset::decoder),
               std::invalid_argument);
}

TEST(TopK, F1Cases) {
  std::vector<double> a(20), b(20);
  for (int i = 0; i < 20; ++i) {
    a[i] = i;
    b[i] = i;
  }
  EXPECT_EQ(topk_f1(a, b, 10), 1.0);
  std::vector<double> rev(a.rbegin(), a.rend());
  EXPECT_EQ(topk_f1(a, rev, 10), 0.0);
  // Shift by five: top sets {10..19} and {5..14} share five heads.
  std::vector<double> shifted(20);
  for (int i = 0; i < 20; ++i) shifted[i] = -std::abs(i - 9.5);
  EXPECT_EQ(topk_indices(shifted, 10), (std::vector<std::size_t>{5, 6, 7, 8, 9, 10, 11, 12, 13, 14}));
  EXPECT_DOUBLE_EQ(topk_f1(a, shifted, 10), 0.5);
  EXPECT_DOUBLE_EQ(topk_f1(shifted, a, 10), 0.5);
  EXPECT_THROW(topk_f1(std::vector<double>(5, 1.0), std::vector<double>(5, 1.0), 10), std::invalid_argument);
}

TEST(TopK, TiesGoToLowerIndex) {
  const std::vector<double> v{1, 3, 3, 3, 0};
  EXPECT_EQ(topk_indices(v, 2), (std::vector<std::size_t>{1, 2}));
}

TEST(Report, IdenticalVectorsAreAllOnes) {
  const HeadTopology topo{1, 1, 4};
  const auto s = scores_from(topo, {1, 2, 3, 4, 4, 3, 2, 1, 1, 3, 2, 4}, "xa-en");
  const auto r = correlation_report({s, s}, HeadSubset::decoder);
  EXPECT_EQ(r.matrix, (std::vector<std::vector<double>>{{1, 1}, {1, 1}}));
  EXPECT_EQ(r.mean, 1.0);
  EXPECT_EQ(r.stddev, 0.0);
}

TEST(Report, SymmetricWithUnitDiagonalAndOracleSummary) {
  const HeadTopology topo{2, 2, 4};
  Rng rng(12);
  std::vector<HeadScores> all;
  for (int i = 0; i < 5; ++i) {
    std::vector<double> v(24);
    for (auto& x : v) x = rng.uniform();
    all.push_back(scores_from(topo, v, "x" + std::string(1, static_cast<char>('a' + i)) + "-en"));
  }
  for (auto metric : {Metric::spearman, Metric::f1}) {
    const auto r = correlation_report(all, HeadSubset::decoder, metric, 5);
    std::vector<double> off;
    for (std::size_t i = 0; i < 5; ++i) {
      EXPECT_EQ(r.matrix[i][i], 1.0);
      for (std::size_t j = 0; j < 5; ++j) {
        EXPECT_NEAR(r.matrix[i][j], r.matrix[j][i], 1e-12);
        if (i < j) off.push_back(r.matrix[i][j]);
      }
    }
    EXPECT_EQ(off.size(), 10u);
    const double mean = std::accumulate(off.begin(), off.end(), 0.0) / 10.0;
    double var = 0.0;
    for (double x : off) var += (x - mean) * (x - mean);
    EXPECT_NEAR(r.mean, mean, 1e-12);
    EXPECT_NEAR(r.stddev, std::sqrt(var / 10.0), 1e-12);
  }
}

TEST(Report, HandBuiltSummary) {
  auto r = hand_report({"a", "b", "c"}, {{1, 0.2, 0.5}, {0.2, 1, 0.8}, {0.5, 0.8, 1}});
  EXPECT_NEAR(r.mean, 0.5, 1e-15);
  EXPECT_NEAR(r.stddev, std::sqrt((0.09 + 0.0 + 0.09) / 3.0), 1e-15);
}

TEST(Report, DecoderEqualsJointSelfCross) {
  const HeadTopology topo{1, 2, 3};
  Rng rng(4);
  std::vector<HeadScores> all;
  for (int i = 0; i < 3; ++i) {
    std::vector<double> v(15);
    for (auto& x : v) x = rng.uniform();
    all.push_back(scores_from(topo, v, std::to_string(i)));
  }
  const auto r = correlation_report(all, HeadSubset::decoder);
  double total = 0.0;
  for (int i = 0; i < 3; ++i) {
    for (int j = i + 1; j < 3; ++j) {
      auto join = [](const HeadScores& s) {
        const auto self = subset(s, HeadSubset::self).scores;
        const auto cross = subset(s, HeadSubset::cross).scores;
        std::vector<double> out(self);
        out.insert(out.end(), cross.begin(), cross.end());
        return out;
      };
      total += spearman(join(all[i]), join(all[j]));
    }
  }
  EXPECT_NEAR(r.mean, total / 3.0, 1e-12);
}

TEST(Report, CsvRoundTrip) {
  const auto r = hand_report({"xa-en", "xb-en"}, {{1, 0.25}, {0.25, 1}});
  const auto text = report_csv(r);
  EXPECT_NE(text.find("# subset=dec"), std::string::npos);
  EXPECT_NE(text.find("# metric=spearman"), std::string::npos);
  const auto back = parse_report_csv(text);
  EXPECT_EQ(back.labels, r.labels);
  EXPECT_EQ(back.matrix, r.matrix);
  EXPECT_EQ(back.mean, r.mean);
}

TEST(KMeans, FourPointsOnALine) {
  const std::vector<std::vector<double>> pts{{0}, {1}, {10}, {11}};
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto c = kmeanspp(pts, {2, seed, 100, 1});
    EXPECT_DOUBLE_EQ(c.cost, 1.0) << seed;
    EXPECT_EQ(c.assignment[0], c.assignment[1]);
    EXPECT_EQ(c.assignment[2], c.assignment[3]);
    EXPECT_NE(c.assignment[0], c.assignment[2]);
    EXPECT_DOUBLE_EQ(c.centroids[static_cast<std::size_t>(c.assignment[0])][0], 0.5);
    EXPECT_DOUBLE_EQ(c.centroids[static_cast<std::size_t>(c.assignment[2])][0], 10.5);
  }
  EXPECT_EQ(optimal_cost(pts, 2), 1.0);
}

TEST(KMeans, KEqualsNAndIdenticalPoints) {
  const std::vector<std::vector<double>> pts{{0, 1}, {3, 4}, {-2, 5}};
  EXPECT_EQ(kmeanspp(pts, {3, 1, 100, 1}).cost, 0.0);
  const std::vector<std::vector<double>> same(5, std::vector<double>{2, 2});
  const auto c = kmeanspp(same, {2, 1, 100, 1});
  EXPECT_EQ(c.cost, 0.0);
  EXPECT_EQ(c.centroids.size(), 2u);
  EXPECT_THROW(kmeanspp(pts, {4, 1, 100, 1}), std::invalid_argument);
}

TEST(KMeans, LloydPropertiesAndDeterminism) {
  for (std::uint64_t s = 1; s <= 30; ++s) {
    const auto pts = dataset(s, 12, 3, s % 2 == 0);
    const auto c = kmeanspp(pts, {3, s, 100, 1});
    const auto again = kmeanspp(pts, {3, s, 100, 1});
    EXPECT_EQ(c.assignment, again.assignment);
    EXPECT_EQ(c.cost, again.cost);
    EXPECT_LE(c.cost, c.seeding_cost + 1e-12);
    for (std::size_t i = 1; i < c.cost_history.size(); ++i) EXPECT_LE(c.cost_history[i], c.cost_history[i - 1] + 1e-12);
    EXPECT_NEAR(clustering_cost(pts, c.assignment, c.centroids), c.cost, 1e-9);
    // Fixpoint: each point sits with its nearest centroid.
    for (std::size_t p = 0; p < pts.size(); ++p) {
      auto dist = [&](std::size_t k) {
        double d = 0.0;
        for (std::size_t j = 0; j < pts[p].size(); ++j) d += std::pow(pts[p][j] - c.centroids[k][j], 2);
        return d;
      };
      const double own = dist(static_cast<std::size_t>(c.assignment[p]));
      for (std::size_t k = 0; k < c.centroids.size(); ++k) EXPECT_LE(own, dist(k) + 1e-12);
    }
  }
}

TEST(KMeans, UsuallyReachesExhaustiveOptimum) {
  int runs = 0;
  int single = 0;
  int restarted = 0;
  for (std::uint64_t ds = 1; ds <= 40; ++ds) {
    const std::size_t n = 3 + ds % 6;
    const std::size_t d = 1 + ds % 3;
    const int k = 2 + static_cast<int>(ds % 2);
    const auto pts = dataset(1000 + ds, n, d, ds % 3 != 0);
    const double best = optimal_cost(pts, k);
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const auto one = kmeanspp(pts, {k, seed, 100, 1});
      const auto many = kmeanspp(pts, {k, seed, 100, 10});
      ++runs;
      single += one.cost <= best + 1e-9;
      restarted += many.cost <= best + 1e-9;
      EXPECT_GE(one.cost, best - 1e-9);
      EXPECT_LE(one.cost, one.seeding_cost + 1e-12);
      EXPECT_LE(many.cost, many.seeding_cost + 1e-12);
      // The first restart reuses the base seed.
      EXPECT_LE(many.cost, one.cost);
    }
  }
  EXPECT_GE(static_cast<double>(restarted) / runs, 0.9) << restarted << "/" << runs;
  // A single seeding lands in a local optimum noticeably often on overlapping data.
  EXPECT_GE(static_cast<double>(single) / runs, 0.6) << single << "/" << runs;
}

TEST(Select, RelatedHandCase) {
  // Rows en-X against columns Y-en average to 0.7, 0.5 and 0.61.
  const std::vector<std::string> labels{"en-xa", "en-xb", "en-xc", "xa-en", "xb-en", "xc-en"};
  std::vector<std::vector<double>> m(6, std::vector<double>(6, 0.0));
  const double avg[3] = {0.7, 0.5, 0.61};
  for (int i = 0; i < 6; ++i) m[i][i] = 1.0;
  for (int x = 0; x < 3; ++x) {
    for (int y = 3; y < 6; ++y) m[x][y] = m[y][x] = avg[x];
  }
  const auto r = hand_report(labels, m);
  const auto averages = related_averages(r);
  EXPECT_NEAR(averages.at("xa"), 0.7, 1e-15);
  EXPECT_NEAR(averages.at("xb"), 0.5, 1e-15);
  EXPECT_EQ(select_related(r, 0.6), (std::vector<std::string>{"xa", "xc"}));
  EXPECT_TRUE(select_related(r, 1.0).empty());
  EXPECT_EQ(select_related(r, -1.0).size(), 3u);
  EXPECT_THROW(select_related(CorrelationReport{}, 0.6), std::invalid_argument);
}

TEST(Select, ClosestIsStrict) {
  const std::vector<std::string> labels{"xa-en", "xb-en", "xc-en", "xd-en"};
  const auto r = hand_report(labels, {{1, 0.81, 0.80, 0.79}, {0.81, 1, 0, 0}, {0.80, 0, 1, 0}, {0.79, 0, 0, 1}});
  EXPECT_EQ(select_closest(r, "xa-en", 0.8), (std::vector<std::string>{"xa-en", "xb-en"}));
  EXPECT_EQ(select_closest(r, "xa", 0.8), (std::vector<std::string>{"xa-en", "xb-en"}));
  EXPECT_EQ(select_closest(r, "xa-en", 0.9), (std::vector<std::string>{"xa-en"}));
  const auto single = hand_report({"xa-en", "xb-en", "xc-en"}, {{1, 0.85, 0.1}, {0.85, 1, 0.2}, {0.1, 0.2, 1}});
  EXPECT_EQ(select_closest(single, "xa-en", 0.8), (std::vector<std::string>{"xa-en", "xb-en"}));
  EXPECT_THROW(select_closest(r, "zz-en", 0.8), std::invalid_argument);
}

TEST(Projection, AxesPreservedUpToSign) {
  const std::vector<std::vector<double>> v{{2, 0}, {-2, 0}, {0, 1}, {0, -1}};
  const auto p = project_2d(v);
  for (std::size_t i = 0; i < v.size(); ++i) {
    EXPECT_NEAR(std::abs(p.coords[i][0]), std::abs(v[i][0]), 1e-12);
    EXPECT_NEAR(std::abs(p.coords[i][1]), std::abs(v[i][1]), 1e-12);
  }
}

TEST(Projection, DegenerateInputs) {
  const auto same = project_2d(std::vector<std::vector<double>>(3, std::vector<double>{1, 2, 3}));
  for (const auto& c : same.coords) {
    EXPECT_EQ(c[0], 0.0);
    EXPECT_EQ(c[1], 0.0);
  }
  const auto line = project_2d({{0, 0, 0}, {1, 2, 3}, {3, 6, 9}});
  for (const auto& c : line.coords) EXPECT_NEAR(c[1], 0.0, 1e-10);
  EXPECT_NEAR(line.coords[2][0] - line.coords[0][0], std::sqrt(9.0 + 36.0 + 81.0), 1e-10);
  EXPECT_THROW(project_2d({{1, 2}}), std::invalid_argument);
}

TEST(Projection, SignConvention) {
  const std::vector<std::vector<double>> v{{1, 0, 5}, {2, 1, -3}, {0, 4, 1}, {3, 3, 3}};
  const auto a = project_2d(v);
  std::vector<std::vector<double>> flipped;
  for (const auto& x : v) flipped.push_back({-x[0], -x[1], -x[2]});
  const auto b = project_2d(flipped);
  // Negating the data leaves the loadings alone, so every score flips sign.
  for (std::size_t i = 0; i < v.size(); ++i) {
    EXPECT_NEAR(a.coords[i][0], -b.coords[i][0], 1e-10);
    EXPECT_NEAR(a.coords[i][1], -b.coords[i][1], 1e-10);
  }
}
