#pragma once

#include <string>
#include <vector>

#include "unlearn/corpus.hpp"
#include "unlearn/error.hpp"
#include "unlearn/rng.hpp"
#include "unlearn/tensor.hpp"

namespace unlearn::detail {

inline Matrix uniform_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols, double bound) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rng.uniform(-bound, bound);
  return m;
}

inline void check_tokens(const std::vector<TokenId>& tokens, std::size_t vocab_size) {
  if (tokens.empty()) throw Error("empty token sequence");
  for (TokenId t : tokens)
    if (t < 0 || static_cast<std::size_t>(t) >= vocab_size)
      throw Error("token id " + std::to_string(t) + " outside model vocabulary");
}

inline Matrix gather_rows(const Matrix& table, const std::vector<TokenId>& tokens) {
  Matrix out(static_cast<Eigen::Index>(tokens.size()), table.cols());
  for (std::size_t t = 0; t < tokens.size(); ++t) out.row(static_cast<Eigen::Index>(t)) = table.row(tokens[t]);
  return out;
}

}  // namespace unlearn::detail
