#include "xlt/analysis.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

#include "xlt/random.hpp"

namespace xlt {

std::vector<double> average_ranks(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = r;
    i = j + 1;
  }
  return ranks;
}

double spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("spearman: length mismatch");
  if (a.size() < 2) throw UndefinedCorrelationError("spearman: need at least two values");
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!std::isfinite(a[i]) || !std::isfinite(b[i])) throw std::invalid_argument("spearman: non-finite value");
  }
  const auto ra = average_ranks(a);
  const auto rb = average_ranks(b);
  const double n = static_cast<double>(a.size());
  // Ranks always average to (n + 1) / 2.
  const double mean = (n + 1.0) / 2.0;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    const double da = ra[i] - mean;
    const double db = rb[i] - mean;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa == 0.0 || sbb == 0.0) throw UndefinedCorrelationError("spearman: one side has no rank variance");
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

namespace {

void check_same_topology(const HeadScores& a, const HeadScores& b) {
  if (!(a.topology == b.topology) || a.heads != b.heads) {
    throw std::invalid_argument("score vectors " + a.pair + " and " + b.pair + " come from different head layouts");
  }
}

}  // namespace

double spearman(const HeadScores& a, const HeadScores& b, HeadSubset which) {
  check_same_topology(a, b);
  return spearman(subset(a, which).scores, subset(b, which).scores);
}

std::vector<std::size_t> topk_indices(std::span<const double> scores, std::size_t k) {
  if (k == 0 || k > scores.size()) {
    throw std::invalid_argument("top-k: k=" + std::to_string(k) + " but only " + std::to_string(scores.size()) +
                                " heads");
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  order.resize(k);
  std::sort(order.begin(), order.end());
  return order;
}

double topk_f1(std::span<const double> a, std::span<const double> b, std::size_t k) {
  if (a.size() != b.size()) throw std::invalid_argument("top-k F1: length mismatch");
  const auto ta = topk_indices(a, k);
  const auto tb = topk_indices(b, k);
  std::vector<std::size_t> both;
  std::set_intersection(ta.begin(), ta.end(), tb.begin(), tb.end(), std::back_inserter(both));
  const double precision = static_cast<double>(both.size()) / static_cast<double>(k);
  const double recall = precision;  // both sets have k members
  return precision + recall == 0.0 ? 0.0 : 2.0 * precision * recall / (precision + recall);
}

double topk_f1(const HeadScores& a, const HeadScores& b, HeadSubset which, std::size_t k) {
  check_same_topology(a, b);
  return topk_f1(subset(a, which).scores, subset(b, which).scores, k);
}

std::string to_string(Metric m) { return m == Metric::spearman ? "spearman" : "f1"; }

Metric parse_metric(std::string_view s) {
  if (s == "spearman") return Metric::spearman;
  if (s == "f1") return Metric::f1;
  throw std::invalid_argument("unknown metric '" + std::string(s) + "' (expected spearman or f1)");
}

std::size_t CorrelationReport::index_of(std::string_view label) const {
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == label) return i;
  }
  throw std::out_of_range("report has no row '" + std::string(label) + "'");
}

double CorrelationReport::at(std::string_view row, std::string_view col) const {
  return matrix[index_of(row)][index_of(col)];
}

void summarize(CorrelationReport& report) {
  const std::size_t n = report.labels.size();
  std::vector<double> off;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i != j) off.push_back(report.matrix[i][j]);
    }
  }
  if (off.empty()) {
    report.mean = 0.0;
    report.stddev = 0.0;
    return;
  }
  const double mean = std::accumulate(off.begin(), off.end(), 0.0) / static_cast<double>(off.size());
  double var = 0.0;
  for (double v : off) var += (v - mean) * (v - mean);
  report.mean = mean;
  report.stddev = std::sqrt(var / static_cast<double>(off.size()));
}

CorrelationReport correlation_report(const std::vector<HeadScores>& scores, HeadSubset which, Metric metric,
                                     std::size_t k) {
  if (scores.size() < 2) throw std::invalid_argument("correlation report: need at least two score vectors");
  CorrelationReport r;
  r.subset = to_string(which);
  r.metric = to_string(metric);
  const std::size_t n = scores.size();
  std::vector<std::vector<double>> flat;
  for (const auto& s : scores) {
    check_same_topology(scores.front(), s);
    r.labels.push_back(s.pair);
    flat.push_back(subset(s, which).scores);
  }

  r.matrix.assign(n, std::vector<double>(n, 1.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double v = metric == Metric::spearman ? spearman(flat[i], flat[j]) : topk_f1(flat[i], flat[j], k);
      r.matrix[i][j] = r.matrix[j][i] = v;
    }
  }
  summarize(r);
  return r;
}

double clustering_cost(const std::vector<std::vector<double>>& points, const std::vector<int>& assignment,
                       const std::vector<std::vector<double>>& centroids) {
  double cost = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto& c = centroids[static_cast<std::size_t>(assignment[i])];
    for (std::size_t d = 0; d < points[i].size(); ++d) cost += (points[i][d] - c[d]) * (points[i][d] - c[d]);
  }
  return cost;
}

namespace {

double sq_dist(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t d = 0; d < a.size(); ++d) s += (a[d] - b[d]) * (a[d] - b[d]);
  return s;
}

std::vector<int> nearest(const std::vector<std::vector<double>>& points,
                         const std::vector<std::vector<double>>& centroids) {
  std::vector<int> out(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < centroids.size(); ++c) {
      const double d = sq_dist(points[i], centroids[c]);
      if (d < best) {
        best = d;
        out[i] = static_cast<int>(c);
      }
    }
  }
  return out;
}

ClusterAssignment single_run(const std::vector<std::vector<double>>& points, int k, int max_iters,
                             std::uint64_t seed) {
  const std::size_t n = points.size();
  Rng rng(seed);
  std::vector<std::vector<double>> centroids;
  centroids.push_back(points[rng.below(n)]);
  std::vector<double> d2(n);
  while (static_cast<int>(centroids.size()) < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::numeric_limits<double>::infinity();
      for (const auto& c : centroids) d2[i] = std::min(d2[i], sq_dist(points[i], c));
      total += d2[i];
    }
    std::size_t pick = n - 1;
    if (total > 0.0) {
      const double u = rng.uniform() * total;
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        acc += d2[i];
        if (d2[i] > 0.0 && u < acc) {
          pick = i;
          break;
        }
      }
      // Rounding can leave u at the very top; fall back to the last
      // point with positive weight.
      if (d2[pick] == 0.0) {
        for (std::size_t i = n; i-- > 0;) {
          if (d2[i] > 0.0) {
            pick = i;
            break;
          }
        }
      }
    } else {
      pick = rng.below(n);
    }
    centroids.push_back(points[pick]);
  }

  ClusterAssignment out;
  out.k = k;
  out.seed = seed;
  auto assign = nearest(points, centroids);
  out.seeding_cost = clustering_cost(points, assign, centroids);
  out.cost_history.push_back(out.seeding_cost);
  for (int it = 1; it <= max_iters; ++it) {
    std::vector<std::vector<double>> sums(static_cast<std::size_t>(k), std::vector<double>(points[0].size(), 0.0));
    std::vector<std::size_t> counts(static_cast<std::size_t>(k), 0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto c = static_cast<std::size_t>(assign[i]);
      ++counts[c];
      for (std::size_t d = 0; d < points[i].size(); ++d) sums[c][d] += points[i][d];
    }
    for (std::size_t c = 0; c < static_cast<std::size_t>(k); ++c) {
      if (counts[c] == 0) continue;  // empty cluster keeps its centroid
      for (auto& v : sums[c]) v /= static_cast<double>(counts[c]);
      centroids[c] = sums[c];
    }
    auto next = nearest(points, centroids);
    out.cost_history.push_back(clustering_cost(points, next, centroids));
    out.iterations = it;
    const bool fixpoint = next == assign;
    assign = std::move(next);
    if (fixpoint) break;
  }
  out.assignment = std::move(assign);
  out.centroids = std::move(centroids);
  out.cost = out.cost_history.back();
  return out;
}

}  // namespace

ClusterAssignment kmeanspp(const std::vector<std::vector<double>>& points, const KMeansSettings& settings,
                           std::vector<std::string> labels) {
  const auto n = points.size();
  if (settings.k < 1) throw std::invalid_argument("k-means: k must be positive");
  if (static_cast<std::size_t>(settings.k) > n) {
    throw std::invalid_argument("k-means: k=" + std::to_string(settings.k) + " exceeds the " + std::to_string(n) +
                                " points");
  }
  for (const auto& p : points) {
    if (p.size() != points[0].size()) throw std::invalid_argument("k-means: points differ in dimension");
  }
  if (!labels.empty() && labels.size() != n) throw std::invalid_argument("k-means: label count mismatch");
  if (settings.restarts < 1) throw std::invalid_argument("k-means: restarts must be positive");

  ClusterAssignment best;
  for (int r = 0; r < settings.restarts; ++r) {
    const auto seed = r == 0 ? settings.seed : derive_seed(settings.seed, static_cast<std::uint64_t>(r));
    auto run = single_run(points, settings.k, settings.max_iters, seed);
    if (r == 0 || run.cost < best.cost) best = std::move(run);
  }
  best.seed = settings.seed;
  best.labels = std::move(labels);
  return best;
}

namespace {

std::pair<std::string, std::string> split_label(const std::string& label) {
  const auto p = LanguagePair::parse(label);
  return {p.source, p.target};
}

}  // namespace

std::map<std::string, double> related_averages(const CorrelationReport& report, const std::string& anchor) {
  if (report.labels.empty()) throw std::invalid_argument("select: empty report");
  std::vector<std::size_t> rows;
  std::vector<std::size_t> cols;
  for (std::size_t i = 0; i < report.labels.size(); ++i) {
    const auto [src, tgt] = split_label(report.labels[i]);
    if (src == anchor) rows.push_back(i);
    if (tgt == anchor) cols.push_back(i);
  }
  if (rows.empty() || cols.empty()) {
    throw std::invalid_argument("select: report needs both " + anchor + "-X and X-" + anchor + " pairs");
  }
  std::map<std::string, double> out;
  for (auto r : rows) {
    double sum = 0.0;
    for (auto c : cols) sum += report.matrix[r][c];
    out[split_label(report.labels[r]).second] = sum / static_cast<double>(cols.size());
  }
  return out;
}

std::vector<std::string> select_related(const CorrelationReport& report, double threshold,
                                        const std::string& anchor) {
  std::vector<std::string> out;
  for (const auto& [lang, avg] : related_averages(report, anchor)) {
    if (avg > threshold) out.push_back(lang);
  }
  return out;
}

std::vector<std::string> select_closest(const CorrelationReport& report, const std::string& anchor,
                                        double threshold) {
  if (report.labels.empty()) throw std::invalid_argument("select: empty report");
  std::size_t row = report.labels.size();
  for (std::size_t i = 0; i < report.labels.size(); ++i) {
    if (report.labels[i] == anchor) row = i;
  }
  if (row == report.labels.size()) {
    for (std::size_t i = 0; i < report.labels.size(); ++i) {
      const auto [src, tgt] = split_label(report.labels[i]);
      if (src == anchor || tgt == anchor) {
        if (row != report.labels.size()) {
          throw std::invalid_argument("select: language '" + anchor + "' matches several pairs; name one");
        }
        row = i;
      }
    }
  }
  if (row == report.labels.size()) throw std::invalid_argument("select: anchor '" + anchor + "' not in report");
  std::vector<std::string> out{report.labels[row]};
  for (std::size_t j = 0; j < report.labels.size(); ++j) {
    if (j != row && report.matrix[row][j] > threshold) out.push_back(report.labels[j]);
  }
  return out;
}

Projection project_2d(const std::vector<std::vector<double>>& vectors, std::vector<std::string> labels) {
  const auto n = vectors.size();
  if (n < 2) throw std::invalid_argument("projection: need at least two vectors");
  const auto d = vectors[0].size();
  for (const auto& v : vectors) {
    if (v.size() != d) throw std::invalid_argument("projection: vectors differ in dimension");
  }
  if (!labels.empty() && labels.size() != n) throw std::invalid_argument("projection: label count mismatch");

  Eigen::MatrixXd x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = vectors[i][j];
  }
  x.rowwise() -= x.colwise().mean();

  Projection out;
  out.labels = std::move(labels);
  out.coords.assign(n, {0.0, 0.0});
  if (d == 0) return out;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(x, Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  const double top = sv.size() > 0 ? sv(0) : 0.0;
  for (Eigen::Index c = 0; c < std::min<Eigen::Index>(2, sv.size()); ++c) {
    // Numerically rank-deficient directions project to exactly zero.
    if (top == 0.0 || sv(c) <= 1e-12 * top) continue;
    Eigen::VectorXd axis = svd.matrixV().col(c);
    Eigen::Index arg = 0;
    for (Eigen::Index j = 1; j < axis.size(); ++j) {
      if (std::abs(axis(j)) > std::abs(axis(arg))) arg = j;
    }
    if (axis(arg) < 0) axis = -axis;
    const Eigen::VectorXd proj = x * axis;
    for (std::size_t i = 0; i < n; ++i) out.coords[i][static_cast<std::size_t>(c)] = proj(static_cast<Eigen::Index>(i));
  }
  return out;
}

namespace {

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

std::string report_csv(const CorrelationReport& r) {
  std::ostringstream out;
  out << "# subset=" << r.subset << '\n'
      << "# metric=" << r.metric << '\n'
      << "# mean=" << num(r.mean) << '\n'
      << "# std=" << num(r.stddev) << '\n';
  for (std::size_t i = 0; i < r.labels.size(); ++i) out << (i ? "," : "") << r.labels[i];
  out << '\n';
  for (const auto& row : r.matrix) {
    for (std::size_t j = 0; j < row.size(); ++j) out << (j ? "," : "") << num(row[j]);
    out << '\n';
  }
  return out.str();
}

void write_report_csv(const CorrelationReport& report, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << report_csv(report);
}

CorrelationReport parse_report_csv(const std::string& text) {
  CorrelationReport r;
  std::istringstream in(text);
  std::string line;
  bool have_labels = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto body = line.substr(std::min(line.size(), line.find_first_not_of("# ")));
      const auto eq = body.find('=');
      if (eq == std::string::npos) continue;
      const auto key = body.substr(0, eq);
      const auto value = body.substr(eq + 1);
      if (key == "subset") r.subset = value;
      else if (key == "metric") r.metric = value;
      else if (key == "mean") r.mean = std::stod(value);
      else if (key == "std") r.stddev = std::stod(value);
      continue;
    }
    if (!have_labels) {
      r.labels = split_csv(line);
      have_labels = true;
      continue;
    }
    std::vector<double> row;
    for (const auto& cell : split_csv(line)) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw std::invalid_argument("report: bad number '" + cell + "'");
      }
    }
    if (row.size() != r.labels.size()) throw std::invalid_argument("report: row width differs from label count");
    r.matrix.push_back(std::move(row));
  }
  if (!have_labels || r.matrix.size() != r.labels.size()) throw std::invalid_argument("report: matrix is not square");
  return r;
}

CorrelationReport read_report_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_report_csv(ss.str());
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(path.string() + ": " + e.what());
  }
}

std::string clusters_csv(const ClusterAssignment& c) {
  std::ostringstream out;
  out << "pair,cluster\n";
  for (std::size_t i = 0; i < c.assignment.size(); ++i) {
    out << (c.labels.empty() ? std::to_string(i) : c.labels[i]) << ',' << c.assignment[i] << '\n';
  }
  return out.str();
}

std::string projection_csv(const Projection& p) {
  std::ostringstream out;
  out << "pair,x,y\n";
  for (std::size_t i = 0; i < p.coords.size(); ++i) {
    out << (p.labels.empty() ? std::to_string(i) : p.labels[i]) << ',' << num(p.coords[i][0]) << ','
        << num(p.coords[i][1]) << '\n';
  }
  return out.str();
}

}  // namespace xlt
