#pragma once

// Pattern statistics over noise sets: per-label bags of substitutes and
// their overlap, concentration, positions and distance to the answer.

#include <array>
#include <cstddef>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <vector>

#include "json.hpp"
#include "unlearn/minmin.hpp"

namespace unlearn {

struct LabelBOW {
  std::map<int, std::set<TokenId>> words;
  /// Relative frequency of each substitute within its class.
  std::map<int, std::map<TokenId, double>> frequencies;
};

/// Groups substitutes by the label of the modified instance. Every class of
/// the dataset gets an entry, possibly empty. Classification only.
LabelBOW label_bows(const NoiseSet& noise, const Dataset& data);

struct JaccardStats {
  double mean = 0.0;  ///< averaged over unordered class pairs
  double sum = 0.0;   ///< unnormalized pair total
  std::size_t pairs = 0;
};

/// Throws when fewer than two classes are present. A pair of empty bags scores 0.
JaccardStats avg_jaccard(const LabelBOW& bows);

/// Sum of the k largest substitute probabilities per class; nullopt for
/// classes without substitutes.
std::map<int, std::optional<double>> topk_cumulative(const LabelBOW& bows, std::size_t k);

struct PositionHistogram {
  static constexpr std::size_t kBins = 10;
  std::array<double, kBins> mass{};  ///< all zero for an empty noise set
  std::vector<double> p_rel;         ///< in noise-set order
};

/// p_rel = p / (T - 1), or 0 for single-token texts.
double relative_position(std::size_t p, std::size_t length);
PositionHistogram position_histogram(const NoiseSet& noise, const Dataset& data);

/// Token distance to the nearest answer boundary.
std::size_t answer_distance(std::size_t p, AnswerSpan span);
/// Counts per distance. Throws for non-QA data.
std::map<std::size_t, std::size_t> answer_distance_stats(const NoiseSet& noise, const Dataset& data);

struct AnalysisReport {
  TaskKind task = TaskKind::classification;
  std::size_t milestone = 0;
  std::size_t modifications = 0;
  std::size_t k = 5;
  std::optional<JaccardStats> jaccard;  ///< classification with K >= 2
  std::map<int, std::optional<double>> topk;
  PositionHistogram positions;
  std::map<std::size_t, std::size_t> answer_distances;  ///< QA only

  /// Share of modifications at the given answer distance.
  double answer_distance_share(std::size_t distance) const;
};

AnalysisReport analyze_noise(const NoiseSet& noise, const Dataset& data, std::size_t k = 5);

nlohmann::json to_json(const AnalysisReport& report);
/// Header "statistic,key,value", one row per statistic.
void write_report_csv(std::ostream& out, const AnalysisReport& report);

}  // namespace unlearn
