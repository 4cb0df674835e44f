#include "unlearn/embedding.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "unlearn/error.hpp"
#include "unlearn/rng.hpp"

namespace unlearn {

EmbeddingMatrix init_embeddings(std::size_t n, std::size_t m, std::uint64_t seed) {
  if (n < 2 || m < 1) throw Error("embedding matrix needs n >= 2 and m >= 1");
  Rng rng(seed);
  EmbeddingMatrix e{Matrix(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m))};
  for (Eigen::Index i = 0; i < e.values.rows(); ++i)
    for (Eigen::Index j = 0; j < e.values.cols(); ++j) e.values(i, j) = rng.uniform(-0.1, 0.1);
  e.values.row(Vocabulary::kPad).setZero();
  return e;
}

PretrainedLoad load_pretrained(const std::filesystem::path& path, const Vocabulary& vocab, std::uint64_t seed) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read pretrained vectors from " + path.string());

  struct Row {
    TokenId id;
    std::vector<double> values;
  };
  std::vector<Row> rows;
  std::size_t dim = 0;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ss(line);
    std::string token;
    if (!(ss >> token)) continue;
    std::vector<double> values;
    double v;
    while (ss >> v) values.push_back(v);
    if (!ss.eof()) throw Error(path.string() + ":" + std::to_string(line_no) + ": malformed vector entry");
    if (values.empty()) throw Error(path.string() + ":" + std::to_string(line_no) + ": no vector values");
    if (dim == 0) dim = values.size();
    if (values.size() != dim)
      throw Error(path.string() + ":" + std::to_string(line_no) + ": dimension " + std::to_string(values.size()) +
                  " differs from " + std::to_string(dim));
    for (double x : values)
      if (!std::isfinite(x)) throw Error(path.string() + ":" + std::to_string(line_no) + ": non-finite value");
    // Tokens are matched after the same lowercasing as the tokenizer.
    auto words = split_words(token);
    if (words.size() != 1) continue;
    if (auto id = vocab.find(words.front()); id && !Vocabulary::is_special(*id)) rows.push_back({*id, std::move(values)});
  }
  if (dim == 0) throw Error(path.string() + ": no vectors");

  PretrainedLoad out{init_embeddings(vocab.size(), dim, seed), 0.0};
  std::vector<bool> filled(vocab.size(), false);
  for (const auto& r : rows) {
    for (std::size_t j = 0; j < dim; ++j) out.embeddings.values(r.id, static_cast<Eigen::Index>(j)) = r.values[j];
    filled[static_cast<std::size_t>(r.id)] = true;
  }
  out.coverage = static_cast<double>(std::count(filled.begin(), filled.end(), true)) / static_cast<double>(vocab.size());
  return out;
}

const std::vector<TokenId>& NeighborIndex::neighbors(TokenId w) const {
  if (w < 0 || static_cast<std::size_t>(w) >= neighbors_.size())
    throw Error("neighbour lookup for id " + std::to_string(w) + " outside index");
  return neighbors_[static_cast<std::size_t>(w)];
}

bool NeighborIndex::contains(TokenId w, TokenId s) const {
  const auto& n = neighbors(w);
  return std::binary_search(n.begin(), n.end(), s);
}

nlohmann::json NeighborIndex::to_json(const Vocabulary& vocab) const {
  nlohmann::json j;
  j["threshold"] = threshold_;
  nlohmann::json map = nlohmann::json::object();
  for (std::size_t w = 0; w < neighbors_.size(); ++w) {
    if (neighbors_[w].empty()) continue;
    std::vector<std::string> names;
    for (TokenId s : neighbors_[w]) names.push_back(vocab.token(s));
    map[vocab.token(static_cast<TokenId>(w))] = names;
  }
  j["neighbors"] = std::move(map);
  return j;
}

NeighborIndex build_neighbor_index(const Matrix& embeddings, double threshold) {
  if (!(threshold >= -1.0 && threshold <= 1.0)) throw Error("similarity threshold must lie in [-1, 1]");
  const auto n = static_cast<std::size_t>(embeddings.rows());
  NeighborIndex index;
  index.threshold_ = threshold;
  index.neighbors_.assign(n, {});

  std::vector<double> norms(n);
  for (std::size_t i = 0; i < n; ++i) norms[i] = embeddings.row(static_cast<Eigen::Index>(i)).norm();

  for (std::size_t a = 0; a < n; ++a) {
    if (Vocabulary::is_special(static_cast<TokenId>(a)) || norms[a] == 0.0) continue;
    for (std::size_t b = a + 1; b < n; ++b) {
      if (Vocabulary::is_special(static_cast<TokenId>(b)) || norms[b] == 0.0) continue;
      double cos = embeddings.row(static_cast<Eigen::Index>(a)).dot(embeddings.row(static_cast<Eigen::Index>(b))) /
                   (norms[a] * norms[b]);
      // Parallel rows can land a few ulps under 1; treat that as exact.
      if (cos >= threshold - 1e-12) {
        index.neighbors_[a].push_back(static_cast<TokenId>(b));
        index.neighbors_[b].push_back(static_cast<TokenId>(a));
      }
    }
  }
  // Lists come out sorted: lower ids are appended while a < w, higher ones after.
  return index;
}

}  // namespace unlearn
