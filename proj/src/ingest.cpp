#include "qsfusion/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <istream>
#include <unordered_map>
#include <unordered_set>

#include "qsfusion/civil_time.hpp"
#include "qsfusion/errors.hpp"

namespace qsfusion {

namespace {

using nlohmann::json;

char ascii_lower(char c) { return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c; }

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), ascii_lower);
  return out;
}

bool is_ascii_letter(unsigned char c) { return (c | 0x20) >= 'a' && (c | 0x20) <= 'z'; }
bool is_digit(unsigned char c) { return c >= '0' && c <= '9'; }

const json& require(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) throw DataError(std::string("missing field '") + key + "'");
  return *it;
}

std::string require_string(const json& j, const char* key) {
  const json& v = require(j, key);
  if (!v.is_string()) throw DataError(std::string("field '") + key + "' is not a string");
  return v.get<std::string>();
}

std::string optional_string(const json& j, const char* key, std::string fallback) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return fallback;
  if (!it->is_string()) throw DataError(std::string("field '") + key + "' is not a string");
  return it->get<std::string>();
}

std::int64_t count_field(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return 0;
  if (!it->is_number_integer()) throw DataError(std::string("field '") + key + "' is not an integer");
  const auto v = it->get<std::int64_t>();
  if (v < 0) throw DataError(std::string("field '") + key + "' is negative");
  return v;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

std::string_view to_string(SourceClass c) {
  switch (c) {
    case SourceClass::WeighIn: return "WeighIn";
    case SourceClass::OtherWeightLoss: return "OtherWeightLoss";
    case SourceClass::Fitness: return "Fitness";
    case SourceClass::Normal: return "Normal";
  }
  return "Normal";
}

SourceClass source_class_from_string(std::string_view name) {
  for (SourceClass c : kAllSourceClasses) {
    if (to_string(c) == name) return c;
  }
  throw DataError("unknown source class '" + std::string(name) + "'");
}

CorpusSchema corpus_schema_from_string(std::string_view id) {
  if (id == "tweet_v1") return CorpusSchema::Tweets;
  if (id == "user_v1") return CorpusSchema::Users;
  throw DataError("unknown corpus schema '" + std::string(id) + "'");
}

UserRecord parse_user_object(const json& j) {
  if (!j.is_object()) throw DataError("user is not an object");
  UserRecord u;
  u.user_id = require_string(j, "id_str");
  if (u.user_id.empty()) throw DataError("empty user id_str");
  u.bio = optional_string(j, "description", "");
  u.friends_count = count_field(j, "friends_count");
  u.followers_count = count_field(j, "followers_count");
  u.lang = optional_string(j, "lang", "und");
  if (u.lang.empty()) u.lang = "und";
  return u;
}

TweetRecord parse_tweet_object(const json& j, UserRecord* embedded_user) {
  if (!j.is_object()) throw DataError("record is not an object");
  TweetRecord t;
  t.tweet_id = require_string(j, "id_str");
  if (t.tweet_id.empty()) throw DataError("empty tweet id_str");
  const UserRecord user = parse_user_object(require(j, "user"));
  t.user_id = user.user_id;
  t.text = require_string(j, "text");
  t.source_label = strip_source_markup(optional_string(j, "source", ""));
  const std::string created = require_string(j, "created_at");
  const auto ts = civil::parse_timestamp(created);
  if (!ts) throw DataError("unparseable created_at '" + created + "'");
  t.created_at = *ts;
  t.lang = optional_string(j, "lang", "und");
  if (t.lang.empty()) t.lang = "und";
  if (embedded_user) *embedded_user = user;
  return t;
}

CorpusReadResult read_corpus(std::istream& in, CorpusSchema schema, const ReadOptions& options) {
  CorpusReadResult result;
  std::unordered_set<std::string> seen_ids;
  std::unordered_map<std::string, std::size_t> user_slot;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    try {
      if (trim(line).empty()) throw DataError("empty line");
      json j = json::parse(line);
      if (schema == CorpusSchema::Users) {
        UserRecord u = parse_user_object(j);
        if (!seen_ids.insert(u.user_id).second) throw DataError("duplicate user id_str " + u.user_id);
        result.records.emplace_back(std::move(u));
        continue;
      }
      UserRecord embedded;
      TweetRecord t = parse_tweet_object(j, &embedded);
      if (options.keyword_prefilter && !keyword_prefilter(t.text)) {
        ++result.filtered;
        continue;
      }
      if (!seen_ids.insert(t.tweet_id).second) throw DataError("duplicate tweet id_str " + t.tweet_id);
      auto [it, inserted] = user_slot.try_emplace(embedded.user_id, result.embedded_users.size());
      if (inserted) {
        result.embedded_users.push_back(std::move(embedded));
      } else {
        result.embedded_users[it->second] = std::move(embedded);
      }
      result.records.emplace_back(std::move(t));
    } catch (const json::exception& e) {
      result.errors.push_back({line_no, std::string("invalid JSON: ") + e.what()});
    } catch (const DataError& e) {
      result.errors.push_back({line_no, e.what()});
    }
  }
  result.line_count = line_no;
  return result;
}

CorpusReadResult read_corpus(const std::filesystem::path& path, CorpusSchema schema,
                             const ReadOptions& options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open corpus file " + path.string());
  return read_corpus(in, schema, options);
}

bool keyword_prefilter(std::string_view text) {
  for (std::size_t i = 0; i + 1 < text.size(); ++i) {
    const char a = ascii_lower(text[i]);
    const char b = ascii_lower(text[i + 1]);
    if (!((a == 'l' && b == 'b') || (a == 'k' && b == 'g'))) continue;
    // Preceded by a letter means it is inside a word ("Kilogram" has no "kg"; "blkg" is not a unit).
    // Digits are allowed before it so that "80kg" counts.
    if (i > 0) {
      const auto prev = static_cast<unsigned char>(text[i - 1]);
      if (is_ascii_letter(prev) || prev >= 0x80) continue;
    }
    if (i + 2 < text.size()) {
      const auto next = static_cast<unsigned char>(text[i + 2]);
      if (is_ascii_letter(next) || is_digit(next) || next >= 0x80) continue;
    }
    return true;
  }
  return false;
}

std::string strip_source_markup(std::string_view raw) {
  std::string out;
  out.reserve(raw.size());
  bool in_tag = false;
  for (char c : raw) {
    if (c == '<') {
      in_tag = true;
    } else if (c == '>') {
      in_tag = false;
    } else if (!in_tag) {
      out.push_back(c);
    }
  }
  // Anchors carry a few HTML entities in practice; decoded in one pass so "&amp;#43;" stays literal.
  static const std::pair<std::string_view, char> kNamed[] = {
      {"&amp;", '&'}, {"&lt;", '<'}, {"&gt;", '>'}, {"&quot;", '"'}, {"&apos;", '\''}};
  std::string decoded;
  decoded.reserve(out.size());
  for (std::size_t i = 0; i < out.size();) {
    if (out[i] != '&') {
      decoded.push_back(out[i++]);
      continue;
    }
    const std::string_view rest = std::string_view(out).substr(i);
    bool done = false;
    for (const auto& [name, ch] : kNamed) {
      if (rest.substr(0, name.size()) == name) {
        decoded.push_back(ch);
        i += name.size();
        done = true;
        break;
      }
    }
    if (!done && rest.size() > 3 && rest[1] == '#') {
      const bool hex = rest[2] == 'x' || rest[2] == 'X';
      const std::size_t start = hex ? 3 : 2;
      const std::size_t semi = rest.find(';');
      unsigned code = 0;
      if (semi != std::string_view::npos && semi > start && semi <= start + 4) {
        const auto digits = rest.substr(start, semi - start);
        auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), code, hex ? 16 : 10);
        if (ec == std::errc() && ptr == digits.data() + digits.size() && code >= 0x20 && code < 0x7F) {
          decoded.push_back(static_cast<char>(code));
          i += semi + 1;
          done = true;
        }
      }
    }
    if (!done) decoded.push_back(out[i++]);
  }
  out = std::move(decoded);
  return trim(out);
}

const std::vector<SourcePattern>& default_source_patterns() {
  static const std::vector<SourcePattern> kPatterns = {
      {"WiTwit", SourceClass::WeighIn},
      {"Lose It!", SourceClass::OtherWeightLoss},
      {"SimpleWeight", SourceClass::OtherWeightLoss},
      {"MyFitnessPal", SourceClass::OtherWeightLoss},
      {"RunKeeper", SourceClass::Fitness},
      {"Fitbit", SourceClass::Fitness},
      {"Nike+ GPS", SourceClass::Fitness},
      {"Nike", SourceClass::Fitness},
      {"Runmeter", SourceClass::Fitness},
      {"Runtastic", SourceClass::Fitness},
      {"iSmoothRun", SourceClass::Fitness},
  };
  return kPatterns;
}

SourceClass classify_source(std::string_view source_label, std::span<const SourcePattern> patterns) {
  const std::string hay = lower(source_label);
  for (const auto& p : patterns) {
    if (p.pattern.empty()) continue;
    if (hay.find(lower(p.pattern)) != std::string::npos) return p.source_class;
  }
  return SourceClass::Normal;
}

nlohmann::json IngestReport::to_json() const {
  json j;
  j["line_count"] = line_count;
  j["tweet_count"] = tweet_count;
  j["user_count"] = user_count;
  j["filtered"] = filtered;
  json classes = json::object();
  for (SourceClass c : kAllSourceClasses) classes[std::string(to_string(c))] = per_class[static_cast<int>(c)];
  j["per_class"] = classes;
  json errs = json::array();
  for (const auto& [file, err] : errors) errs.push_back({{"file", file}, {"line", err.line}, {"message", err.message}});
  j["errors"] = errs;
  j["error_count"] = errors.size();
  return j;
}

}  // namespace qsfusion
