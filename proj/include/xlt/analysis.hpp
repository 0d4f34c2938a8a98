#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "xlt/probe.hpp"

namespace xlt {

/// Fewer than two values, or no rank variance on one side.
class UndefinedCorrelationError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// 1-based ranks; tied values share the average of their positions.
std::vector<double> average_ranks(std::span<const double> values);

double spearman(std::span<const double> a, std::span<const double> b);
/// Both vectors are restricted to `which` and flattened in canonical order.
double spearman(const HeadScores& a, const HeadScores& b, HeadSubset which);

/// Top-k sets by descending score, ties at the cut broken by lower index.
std::vector<std::size_t> topk_indices(std::span<const double> scores, std::size_t k);
double topk_f1(std::span<const double> a, std::span<const double> b, std::size_t k);
double topk_f1(const HeadScores& a, const HeadScores& b, HeadSubset which, std::size_t k = 10);

enum class Metric { spearman, f1 };
std::string to_string(Metric m);
Metric parse_metric(std::string_view s);

struct CorrelationReport {
  std::vector<std::string> labels;
  std::vector<std::vector<double>> matrix;
  std::string subset;
  std::string metric;
  double mean = 0.0;  // over off-diagonal entries
  double stddev = 0.0;  // population standard deviation, off-diagonal

  std::size_t index_of(std::string_view label) const;
  double at(std::string_view row, std::string_view col) const;
};

CorrelationReport correlation_report(const std::vector<HeadScores>& scores, HeadSubset which,
                                     Metric metric = Metric::spearman, std::size_t k = 10);

/// Recomputes mean/std from the matrix (used after building one by hand).
void summarize(CorrelationReport& report);

struct KMeansSettings {
  int k = 5;
  std::uint64_t seed = 0;
  int max_iters = 100;
  /// Independent seedings; the lowest final cost wins.
  int restarts = 1;
};

struct ClusterAssignment {
  int k = 0;
  std::vector<std::string> labels;
  std::vector<int> assignment;
  std::vector<std::vector<double>> centroids;
  double cost = 0.0;
  /// Cost of assigning every point to its nearest seed, before any Lloyd step.
  double seeding_cost = 0.0;
  std::vector<double> cost_history;
  int iterations = 0;
  std::uint64_t seed = 0;
};

ClusterAssignment kmeanspp(const std::vector<std::vector<double>>& points, const KMeansSettings& settings,
                           std::vector<std::string> labels = {});

double clustering_cost(const std::vector<std::vector<double>>& points, const std::vector<int>& assignment,
                       const std::vector<std::vector<double>>& centroids);

/// Mean correlation of each anchor-X row against every Y-anchor column.
std::map<std::string, double> related_averages(const CorrelationReport& report,
                                               const std::string& anchor = "en");
/// Languages X whose average exceeds `threshold` (strictly).
std::vector<std::string> select_related(const CorrelationReport& report, double threshold = 0.60,
                                        const std::string& anchor = "en");

/// The anchor plus every label whose correlation with it is strictly above
/// `threshold`. `anchor` is a label, or a language naming exactly one label.
std::vector<std::string> select_closest(const CorrelationReport& report, const std::string& anchor,
                                        double threshold = 0.80);

struct Projection {
  std::vector<std::string> labels;
  std::vector<std::array<double, 2>> coords;
};

/// Top two principal components of the mean-centred vectors. Each
/// component's largest-magnitude loading is made positive.
Projection project_2d(const std::vector<std::vector<double>>& vectors, std::vector<std::string> labels = {});

std::string report_csv(const CorrelationReport& report);
void write_report_csv(const CorrelationReport& report, const std::filesystem::path& path);
CorrelationReport parse_report_csv(const std::string& text);
CorrelationReport read_report_csv(const std::filesystem::path& path);

std::string clusters_csv(const ClusterAssignment& clusters);
std::string projection_csv(const Projection& projection);

}  // namespace xlt
