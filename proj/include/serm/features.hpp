#pragma once

#include <array>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "serm/core.hpp"
#include "serm/math.hpp"

namespace serm {

// Lowercase, whitespace-separated terms. Leading '#' is stripped.
std::vector<std::string> tokenize(std::string_view text);

/// Lexical-overlap features for a query/document pair.
///
/// Layout (kFeatureDim = 6):
///   0 fraction of distinct query terms found in the title
///   1 fraction found in the summary
///   2 fraction found in the hashtags
///   3 IDF-weighted fraction found in the document text (title or summary)
///   4 length ratio |q| / (|q| + |title|)
///   5 constant bias
/// All entries lie in [0, 1].
class FeatureExtractor {
 public:
  static constexpr int kFeatureDim = 6;
  static constexpr std::array<std::string_view, kFeatureDim> kNames = {
      "title_overlap", "summary_overlap", "hashtag_overlap", "idf_overlap", "length_ratio", "bias"};

  // Without a corpus every term gets the same IDF.
  FeatureExtractor() = default;
  explicit FeatureExtractor(const std::vector<Document>& corpus);

  double idf(const std::string& term) const;
  std::size_t corpus_size() const noexcept { return num_docs_; }

  Vector extract(const Query& query, const Document& doc) const;

  // One row per pair.
  RowMatrix extract_all(const std::vector<const QueryDocumentPair*>& pairs) const;

 private:
  std::unordered_map<std::string, std::size_t> doc_freq_;
  std::size_t num_docs_ = 0;
};

}  // namespace serm
