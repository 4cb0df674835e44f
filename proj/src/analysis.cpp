#include "unlearn/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "unlearn/error.hpp"
#include "unlearn/trace.hpp"

namespace unlearn {

using nlohmann::json;

namespace {

std::unordered_map<std::string, std::size_t> index_by_id(const Dataset& data) {
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < data.size(); ++i) index.emplace(data.id_at(i), i);
  return index;
}

std::size_t resolve(const std::unordered_map<std::string, std::size_t>& index, const std::string& id) {
  auto it = index.find(id);
  if (it == index.end()) throw Error("noise set references unknown instance '" + id + "'");
  return it->second;
}

}  // namespace

LabelBOW label_bows(const NoiseSet& noise, const Dataset& data) {
  if (data.task != TaskKind::classification) throw Error("label BOWs need a classification dataset");
  LabelBOW bows;
  for (int c = 0; c < data.num_classes; ++c) {
    bows.words[c];
    bows.frequencies[c];
  }
  const auto index = index_by_id(data);
  std::map<int, std::size_t> totals;
  for (const auto& [id, mod] : noise.modifications) {
    const int label = data.texts[resolve(index, id)].label;
    bows.words[label].insert(mod.substitute);
    bows.frequencies[label][mod.substitute] += 1.0;
    ++totals[label];
  }
  for (auto& [label, freq] : bows.frequencies)
    for (auto& [word, f] : freq) f /= static_cast<double>(totals[label]);
  return bows;
}

JaccardStats avg_jaccard(const LabelBOW& bows) {
  if (bows.words.size() < 2) throw Error("Jaccard similarity needs at least two classes");
  JaccardStats stats;
  for (auto a = bows.words.begin(); a != bows.words.end(); ++a) {
    for (auto b = std::next(a); b != bows.words.end(); ++b) {
      std::size_t common = 0;
      for (TokenId w : a->second) common += b->second.count(w);
      const std::size_t joint = a->second.size() + b->second.size() - common;
      stats.sum += joint == 0 ? 0.0 : static_cast<double>(common) / static_cast<double>(joint);
      ++stats.pairs;
    }
  }
  stats.mean = stats.sum / static_cast<double>(stats.pairs);
  return stats;
}

std::map<int, std::optional<double>> topk_cumulative(const LabelBOW& bows, std::size_t k) {
  if (k < 1) throw Error("top-k needs k >= 1");
  std::map<int, std::optional<double>> out;
  for (const auto& [label, freq] : bows.frequencies) {
    if (freq.empty()) {
      out[label] = std::nullopt;
      continue;
    }
    std::vector<std::pair<TokenId, double>> ranked(freq.begin(), freq.end());
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& x, const auto& y) { return x.second > y.second; });
    if (k >= ranked.size()) {
      out[label] = 1.0;
      continue;
    }
    double mass = 0.0;
    for (std::size_t i = 0; i < k; ++i) mass += ranked[i].second;
    out[label] = std::min(mass, 1.0);
  }
  return out;
}

double relative_position(std::size_t p, std::size_t length) {
  if (length < 2) return 0.0;
  return std::clamp(static_cast<double>(p) / static_cast<double>(length - 1), 0.0, 1.0);
}

PositionHistogram position_histogram(const NoiseSet& noise, const Dataset& data) {
  PositionHistogram h;
  const auto index = index_by_id(data);
  for (const auto& [id, mod] : noise.modifications) {
    const std::size_t i = resolve(index, id);
    const std::size_t length =
        data.task == TaskKind::classification ? data.texts[i].tokens.size() : data.qas[i].passage.size();
    const double r = relative_position(mod.position, length);
    h.p_rel.push_back(r);
    const auto bin = std::min(PositionHistogram::kBins - 1, static_cast<std::size_t>(r * PositionHistogram::kBins));
    h.mass[bin] += 1.0;
  }
  if (!h.p_rel.empty())
    for (double& m : h.mass) m /= static_cast<double>(h.p_rel.size());
  return h;
}

std::size_t answer_distance(std::size_t p, AnswerSpan span) {
  auto gap = [](std::size_t a, std::size_t b) { return a > b ? a - b : b - a; };
  return std::min(gap(p, span.start), gap(p, span.end));
}

std::map<std::size_t, std::size_t> answer_distance_stats(const NoiseSet& noise, const Dataset& data) {
  if (data.task != TaskKind::qa) throw Error("answer distances need a QA dataset");
  const auto index = index_by_id(data);
  std::map<std::size_t, std::size_t> counts;
  for (const auto& [id, mod] : noise.modifications)
    ++counts[answer_distance(mod.position, data.qas[resolve(index, id)].answer)];
  return counts;
}

double AnalysisReport::answer_distance_share(std::size_t distance) const {
  std::size_t total = 0;
  for (const auto& [d, n] : answer_distances) total += n;
  if (total == 0) return 0.0;
  auto it = answer_distances.find(distance);
  return it == answer_distances.end() ? 0.0 : static_cast<double>(it->second) / static_cast<double>(total);
}

AnalysisReport analyze_noise(const NoiseSet& noise, const Dataset& data, std::size_t k) {
  AnalysisReport r;
  r.task = data.task;
  r.milestone = noise.milestone;
  r.modifications = noise.modifications.size();
  r.k = k;
  r.positions = position_histogram(noise, data);
  if (data.task == TaskKind::classification) {
    const LabelBOW bows = label_bows(noise, data);
    if (bows.words.size() >= 2) r.jaccard = avg_jaccard(bows);
    r.topk = topk_cumulative(bows, k);
  } else {
    r.answer_distances = answer_distance_stats(noise, data);
  }
  return r;
}

json to_json(const AnalysisReport& r) {
  json j{{"task", to_string(r.task)},
         {"milestone", r.milestone},
         {"modifications", r.modifications},
         {"position_histogram", r.positions.mass},
         {"p_rel", r.positions.p_rel}};
  if (r.jaccard) j["jaccard"] = {{"mean", r.jaccard->mean}, {"sum", r.jaccard->sum}, {"pairs", r.jaccard->pairs}};
  if (r.task == TaskKind::classification) {
    json topk = json::object();
    for (const auto& [label, v] : r.topk) topk[std::to_string(label)] = v ? json(*v) : json(nullptr);
    j["topk"] = {{"k", r.k}, {"cumulative", topk}};
  } else {
    json dist = json::object();
    for (const auto& [d, n] : r.answer_distances) dist[std::to_string(d)] = n;
    j["answer_distance"] = dist;
  }
  return j;
}

void write_report_csv(std::ostream& out, const AnalysisReport& r) {
  out << "statistic,key,value\n";
  out << "modifications,," << r.modifications << '\n';
  if (r.jaccard) {
    out << "jaccard_mean,," << format_double(r.jaccard->mean) << '\n';
    out << "jaccard_sum,," << format_double(r.jaccard->sum) << '\n';
  }
  for (const auto& [label, v] : r.topk)
    if (v) out << "top" << r.k << "_cumulative," << label << ',' << format_double(*v) << '\n';
  for (std::size_t b = 0; b < PositionHistogram::kBins; ++b)
    out << "position_bin," << b << ',' << format_double(r.positions.mass[b]) << '\n';
  for (const auto& [d, n] : r.answer_distances) out << "answer_distance," << d << ',' << n << '\n';
}

}  // namespace unlearn
