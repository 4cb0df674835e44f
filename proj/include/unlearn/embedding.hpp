#pragma once

// Embedding table E (n x m) and the cosine-similarity candidate index used
// to keep substitutions semantically close to the word they replace.

#include <cstdint>
#include <filesystem>
#include <vector>

#include "json.hpp"
#include "unlearn/corpus.hpp"
#include "unlearn/tensor.hpp"

namespace unlearn {

/// Row w holds e_w. Row 0 (pad) is kept at zero.
struct EmbeddingMatrix {
  Matrix values;

  std::size_t rows() const noexcept { return static_cast<std::size_t>(values.rows()); }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(values.cols()); }
};

/// Entries i.i.d. uniform in [-0.1, 0.1]; the pad row is zero.
EmbeddingMatrix init_embeddings(std::size_t n, std::size_t m, std::uint64_t seed);

struct PretrainedLoad {
  EmbeddingMatrix embeddings;
  double coverage = 0.0;  ///< fraction of vocabulary rows filled from the file
};

/// Reads "token v1 ... vm" lines. Rows missing from the file keep the values
/// of init_embeddings(vocab.size(), m, seed); file tokens outside the
/// vocabulary are skipped.
PretrainedLoad load_pretrained(const std::filesystem::path& path, const Vocabulary& vocab, std::uint64_t seed);

class NeighborIndex {
 public:
  NeighborIndex() = default;

  double threshold() const noexcept { return threshold_; }
  std::size_t size() const noexcept { return neighbors_.size(); }

  /// Sorted neighbour ids of w.
  const std::vector<TokenId>& neighbors(TokenId w) const;
  bool contains(TokenId w, TokenId s) const;

  nlohmann::json to_json(const Vocabulary& vocab) const;

  friend NeighborIndex build_neighbor_index(const Matrix& embeddings, double threshold);

 private:
  double threshold_ = 0.0;
  std::vector<std::vector<TokenId>> neighbors_;
};

/// Exact cosine similarity over all row pairs; s is a neighbour of w when
/// cos(e_w, e_s) >= threshold. Specials and zero-norm rows get no neighbours.
NeighborIndex build_neighbor_index(const Matrix& embeddings, double threshold);
inline NeighborIndex build_neighbor_index(const EmbeddingMatrix& e, double threshold) {
  return build_neighbor_index(e.values, threshold);
}

}  // namespace unlearn
