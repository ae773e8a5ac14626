#include "serm/features.hpp"

#include <cctype>
#include <cmath>
#include <set>
#include <unordered_set>

namespace serm {

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    std::size_t start = 0;
    while (start < cur.size() && cur[start] == '#') ++start;
    if (start < cur.size()) out.push_back(cur.substr(start));
    cur.clear();
  };
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      flush();
    } else {
      cur += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
  }
  flush();
  return out;
}

namespace {

std::unordered_set<std::string> term_set(std::string_view text) {
  auto toks = tokenize(text);
  return {toks.begin(), toks.end()};
}

std::unordered_set<std::string> hashtag_set(const std::vector<std::string>& tags) {
  std::unordered_set<std::string> out;
  for (const auto& t : tags) {
    for (auto& tok : tokenize(t)) out.insert(std::move(tok));
  }
  return out;
}

}  // namespace

FeatureExtractor::FeatureExtractor(const std::vector<Document>& corpus) : num_docs_(corpus.size()) {
  for (const auto& d : corpus) {
    auto terms = term_set(d.title);
    for (auto& t : term_set(d.summary)) terms.insert(t);
    for (auto& t : hashtag_set(d.hashtags)) terms.insert(t);
    for (const auto& t : terms) ++doc_freq_[t];
  }
}

double FeatureExtractor::idf(const std::string& term) const {
  auto it = doc_freq_.find(term);
  const double df = it == doc_freq_.end() ? 0.0 : static_cast<double>(it->second);
  return std::log((static_cast<double>(num_docs_) + 1.0) / (df + 1.0)) + 1.0;
}

Vector FeatureExtractor::extract(const Query& query, const Document& doc) const {
  // std::set keeps the IDF summation order fixed.
  const auto qtoks = tokenize(query.text);
  const std::set<std::string> qterms(qtoks.begin(), qtoks.end());
  const auto title = term_set(doc.title);
  const auto summary = term_set(doc.summary);
  const auto tags = hashtag_set(doc.hashtags);

  Vector x = Vector::Zero(kFeatureDim);
  x(5) = 1.0;
  if (qterms.empty()) return x;

  double in_title = 0, in_summary = 0, in_tags = 0, idf_hit = 0, idf_total = 0;
  for (const auto& t : qterms) {
    const bool a = title.count(t) > 0, b = summary.count(t) > 0, c = tags.count(t) > 0;
    in_title += a;
    in_summary += b;
    in_tags += c;
    const double w = idf(t);
    idf_total += w;
    if (a || b) idf_hit += w;
  }
  const double nq = static_cast<double>(qterms.size());
  x(0) = in_title / nq;
  x(1) = in_summary / nq;
  x(2) = in_tags / nq;
  x(3) = idf_hit / idf_total;
  x(4) = nq / (nq + static_cast<double>(title.size()));
  return x;
}

RowMatrix FeatureExtractor::extract_all(const std::vector<const QueryDocumentPair*>& pairs) const {
  RowMatrix X(static_cast<Eigen::Index>(pairs.size()), kFeatureDim);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    X.row(static_cast<Eigen::Index>(i)) = extract(pairs[i]->query, pairs[i]->document).transpose();
  }
  return X;
}

}  // namespace serm
