#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

namespace qsfusion {

// Which kind of application generated a tweet, decided from its source field.
enum class SourceClass { WeighIn, OtherWeightLoss, Fitness, Normal };

inline constexpr std::array<SourceClass, 4> kAllSourceClasses = {
    SourceClass::WeighIn, SourceClass::OtherWeightLoss, SourceClass::Fitness, SourceClass::Normal};

std::string_view to_string(SourceClass c);
// Throws DataError on an unknown name.
SourceClass source_class_from_string(std::string_view name);

struct TweetRecord {
  std::string tweet_id;
  std::string user_id;
  std::string text;
  std::string source_label;  // visible application name, markup stripped
  std::int64_t created_at = 0;  // unix seconds, UTC
  std::string lang = "und";
};

struct UserRecord {
  std::string user_id;
  std::string bio;
  std::int64_t friends_count = 0;
  std::int64_t followers_count = 0;
  std::string lang = "und";
};

using CorpusRecord = std::variant<TweetRecord, UserRecord>;

// "tweet_v1": one Twitter v1.1 tweet object per line, with an embedded user object.
// "user_v1": one user object per line.
enum class CorpusSchema { Tweets, Users };
CorpusSchema corpus_schema_from_string(std::string_view id);

struct LineError {
  std::size_t line = 0;  // 1-based
  std::string message;
};

struct ReadOptions {
  // Only for raw stream captures; curated corpora skip it.
  bool keyword_prefilter = false;
};

struct CorpusReadResult {
  std::vector<CorpusRecord> records;
  // User snapshots embedded in tweet lines, first-seen order, last snapshot wins.
  std::vector<UserRecord> embedded_users;
  std::vector<LineError> errors;
  std::size_t line_count = 0;
  std::size_t filtered = 0;  // lines dropped by the keyword prefilter
};

// Throws DataError if the file cannot be opened. Per-line problems are collected
// in `errors`; records + errors + filtered == line_count.
CorpusReadResult read_corpus(const std::filesystem::path& path, CorpusSchema schema,
                             const ReadOptions& options = {});
CorpusReadResult read_corpus(std::istream& in, CorpusSchema schema, const ReadOptions& options = {});

TweetRecord parse_tweet_object(const nlohmann::json& j, UserRecord* embedded_user = nullptr);
UserRecord parse_user_object(const nlohmann::json& j);

// True iff "lb" or "kg" occurs as a standalone token or as the unit suffix of a number.
bool keyword_prefilter(std::string_view text);

// `<a href="..." rel="nofollow">WiTwit</a>` -> "WiTwit". Plain text is returned trimmed.
std::string strip_source_markup(std::string_view raw);

struct SourcePattern {
  std::string pattern;
  SourceClass source_class;
};

const std::vector<SourcePattern>& default_source_patterns();

// First case-insensitive substring match in table order; Normal when nothing matches.
SourceClass classify_source(std::string_view source_label, std::span<const SourcePattern> patterns);

struct IngestReport {
  std::size_t line_count = 0;
  std::size_t tweet_count = 0;
  std::size_t user_count = 0;
  std::size_t filtered = 0;
  std::array<std::size_t, 4> per_class{};  // indexed by SourceClass
  std::vector<std::pair<std::string, LineError>> errors;  // (file, error)

  nlohmann::json to_json() const;
};

}  // namespace qsfusion
