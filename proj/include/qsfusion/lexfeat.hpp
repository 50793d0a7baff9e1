#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

namespace qsfusion {

// Lowercased letter runs. URLs and @mentions are dropped; a hashtag keeps its word.
std::vector<std::string> tokenize(std::string_view text);

// Hook for translating non-English text before tokenization. Identity by default.
using TextNormalizer = std::function<std::string(std::string_view text, std::string_view lang)>;
TextNormalizer identity_normalizer();

struct LexiconCategory {
  int id = 0;
  std::string name;
};

class Lexicon {
 public:
  Lexicon() = default;
  Lexicon(std::string name, std::vector<LexiconCategory> categories);

  // `entry` is a word, or a prefix when it ends with '*'. Category ids must be declared.
  void add_entry(std::string_view entry, std::span<const int> category_ids);

  // Category indices (positions in categories()) of every entry matching the token.
  std::vector<std::size_t> match(std::string_view token) const;

  const std::string& name() const { return name_; }
  const std::vector<LexiconCategory>& categories() const { return categories_; }
  std::size_t entry_count() const { return entries_.size(); }
  std::optional<std::size_t> category_index(int id) const;
  // (entry, category ids) in first-insertion order, merged.
  const std::vector<std::pair<std::string, std::vector<int>>>& entries() const { return entries_; }

 private:
  std::string name_;
  std::vector<LexiconCategory> categories_;
  std::unordered_map<int, std::size_t> index_by_id_;
  std::unordered_map<std::string, std::vector<std::size_t>> words_;
  std::unordered_map<std::string, std::vector<std::size_t>> prefixes_;
  std::size_t max_prefix_len_ = 0;
  std::vector<std::pair<std::string, std::vector<int>>> entries_;
  std::unordered_map<std::string, std::size_t> entry_slot_;
};

// LIWC .dic layout: a '%'-delimited header of "<id>\t<name>" lines, then
// "<word or prefix*>\t<id>..." body lines. Throws DataError with the line number on
// an undeclared category id or a malformed line. When `expected_categories` is
// given the header must declare exactly that many.
Lexicon load_lexicon(const std::filesystem::path& path, std::string name,
                     std::optional<std::size_t> expected_categories = std::nullopt);
Lexicon parse_lexicon(std::istream& in, std::string name,
                      std::optional<std::size_t> expected_categories = std::nullopt);
// Inverse of parse_lexicon; entries in first-insertion order.
std::string render_lexicon(const Lexicon& lexicon);

enum class Provenance { Bio, Tweet };
std::string_view prefix_of(Provenance p);

struct NamedValues {
  std::vector<std::string> names;
  std::vector<double> values;
};

// Per category: matching tokens / max(1, token count). Names are <prefix><lexicon>_<category>.
NamedValues category_features(std::span<const std::string> tokens, const Lexicon& lexicon, Provenance provenance);

using TokenCounts = std::map<std::string, std::int64_t>;
TokenCounts count_tokens(std::span<const std::string> tokens);

// Top `max_vocab` tokens by document frequency over the training rows, df >= min_df,
// ties broken by lexicographic order. The result is sorted by (df desc, token asc).
std::vector<std::string> build_vocabulary(std::span<const TokenCounts> docs, std::span<const std::size_t> train_rows,
                                          std::int64_t min_df, std::size_t max_vocab);

// Rows = docs, columns = vocabulary; value = token count / max(1, total tokens in doc).
Eigen::MatrixXd bow_values(std::span<const TokenCounts> docs, std::span<const std::string> vocabulary);

struct ScalingParams {
  std::vector<double> min;
  std::vector<double> max;
};

struct FeatureMatrix {
  std::vector<std::string> users;
  std::vector<std::string> features;
  Eigen::MatrixXd values;
  std::optional<ScalingParams> scaling;

  // Throws std::logic_error when shapes disagree.
  void validate() const;
};

FeatureMatrix hconcat(const FeatureMatrix& a, const FeatureMatrix& b);
FeatureMatrix select_columns(const FeatureMatrix& m, const std::function<bool(const std::string&)>& keep);

// Min/max from the training rows; constant training columns map to 0; every row is
// clipped into [0, 1]. Throws std::invalid_argument on empty train_rows.
FeatureMatrix minmax_scale(FeatureMatrix m, std::span<const std::size_t> train_rows);
void apply_scaling(Eigen::MatrixXd& values, const ScalingParams& params);
double unscale_value(double scaled, double min, double max);

std::string feature_matrix_csv(const FeatureMatrix& m);
// Throws DataError on malformed rows.
FeatureMatrix parse_feature_matrix_csv(std::istream& in);

// One user's text after normalization and tokenization.
struct UserDocument {
  std::string user_id;
  std::string lang;
  std::vector<std::string> bio_tokens;
  std::vector<std::string> tweet_tokens;  // all normal tweets, concatenated
};

UserDocument build_document(std::string user_id, std::string lang, std::string_view bio,
                            std::span<const std::string> normal_tweets,
                            const TextNormalizer& normalizer = identity_normalizer());

// Category features for every lexicon; Tweet_ always, Bio_ when include_bio.
FeatureMatrix lexical_features(std::span<const UserDocument> docs, std::span<const Lexicon> lexicons,
                               bool include_bio);

}  // namespace qsfusion
