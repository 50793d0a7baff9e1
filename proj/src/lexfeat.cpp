#include "qsfusion/lexfeat.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "qsfusion/csv.hpp"
#include "qsfusion/errors.hpp"

namespace qsfusion {

namespace {

// Decodes one UTF-8 code point starting at s[i] and advances i. Invalid bytes yield U+FFFD.
char32_t next_code_point(std::string_view s, std::size_t& i) {
  const auto b0 = static_cast<unsigned char>(s[i]);
  auto cont = [&](std::size_t k) -> int {
    if (i + k >= s.size()) return -1;
    const auto b = static_cast<unsigned char>(s[i + k]);
    return (b & 0xC0) == 0x80 ? (b & 0x3F) : -1;
  };
  if (b0 < 0x80) {
    ++i;
    return b0;
  }
  int len = 0;
  char32_t cp = 0;
  if ((b0 & 0xE0) == 0xC0) {
    len = 2;
    cp = b0 & 0x1F;
  } else if ((b0 & 0xF0) == 0xE0) {
    len = 3;
    cp = b0 & 0x0F;
  } else if ((b0 & 0xF8) == 0xF0) {
    len = 4;
    cp = b0 & 0x07;
  } else {
    ++i;
    return 0xFFFD;
  }
  for (int k = 1; k < len; ++k) {
    const int c = cont(static_cast<std::size_t>(k));
    if (c < 0) {
      ++i;
      return 0xFFFD;
    }
    cp = (cp << 6) | static_cast<char32_t>(c);
  }
  i += static_cast<std::size_t>(len);
  return cp;
}

void append_utf8(std::string& out, char32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

// Letter blocks of the scripts we expect in tweets. Not a full Unicode table.
bool is_letter(char32_t c) {
  if ((c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z')) return true;
  if (c < 0xC0) return c == 0xAA || c == 0xB5 || c == 0xBA;
  if (c <= 0xFF) return c != 0xD7 && c != 0xF7;
  struct Range {
    char32_t lo, hi;
  };
  static constexpr Range kRanges[] = {
      {0x0100, 0x02AF}, {0x0370, 0x03FF}, {0x0400, 0x052F}, {0x0531, 0x0587}, {0x05D0, 0x05EA},
      {0x0620, 0x064A}, {0x0671, 0x06D3}, {0x0904, 0x0939}, {0x0E01, 0x0E30}, {0x10A0, 0x10FF},
      {0x1E00, 0x1FFF}, {0x3041, 0x3096}, {0x30A1, 0x30FA}, {0x30FC, 0x30FF}, {0x3400, 0x4DBF},
      {0x4E00, 0x9FFF}, {0xAC00, 0xD7A3}, {0xF900, 0xFAFF}, {0xFF21, 0xFF3A}, {0xFF41, 0xFF5A},
      {0xFF66, 0xFF9F},
  };
  for (const auto& r : kRanges) {
    if (c >= r.lo && c <= r.hi) return true;
  }
  return false;
}

char32_t to_lower(char32_t c) {
  if (c >= 'A' && c <= 'Z') return c + 32;
  if (c < 0xC0) return c;
  if (c <= 0xDE) return c == 0xD7 ? c : c + 32;
  if (c >= 0x100 && c <= 0x137) return c | 1;
  if (c >= 0x139 && c <= 0x148) return (c % 2 == 1) ? c + 1 : c;
  if (c >= 0x14A && c <= 0x177) return c | 1;
  if (c == 0x178) return 0xFF;
  if (c >= 0x179 && c <= 0x17E) return (c % 2 == 1) ? c + 1 : c;
  if (c >= 0x391 && c <= 0x3A9 && c != 0x3A2) return c + 32;
  if (c >= 0x400 && c <= 0x40F) return c + 80;
  if (c >= 0x410 && c <= 0x42F) return c + 32;
  if (c >= 0xFF21 && c <= 0xFF3A) return c + 32;
  return c;
}

bool starts_with_icase(std::string_view s, std::string_view prefix) {
  if (s.size() < prefix.size()) return false;
  for (std::size_t i = 0; i < prefix.size(); ++i) {
    char c = s[i];
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    if (c != prefix[i]) return false;
  }
  return true;
}

bool is_mention_char(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_';
}

void tokenize_chunk(std::string_view chunk, std::vector<std::string>& out) {
  // Anything from a URL scheme to the end of the chunk is a link.
  for (std::string_view scheme : {"http://", "https://"}) {
    for (std::size_t p = 0; p + scheme.size() <= chunk.size(); ++p) {
      if (starts_with_icase(chunk.substr(p), scheme)) {
        chunk = chunk.substr(0, p);
        break;
      }
    }
  }
  std::string cur;
  std::size_t i = 0;
  while (i < chunk.size()) {
    if (chunk[i] == '@' && i + 1 < chunk.size() && is_mention_char(chunk[i + 1])) {
      if (!cur.empty()) out.push_back(std::move(cur)), cur.clear();
      ++i;
      while (i < chunk.size() && is_mention_char(chunk[i])) ++i;
      continue;
    }
    const char32_t cp = next_code_point(chunk, i);
    if (is_letter(cp)) {
      append_utf8(cur, to_lower(cp));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
}

std::string ascii_trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_ws(std::string_view s) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t' || s[i] == '\r')) ++i;
    const std::size_t b = i;
    while (i < s.size() && s[i] != ' ' && s[i] != '\t' && s[i] != '\r') ++i;
    if (i > b) out.emplace_back(s.substr(b, i - b));
  }
  return out;
}

std::string lowercase_utf8(std::string_view s) {
  std::string out;
  std::size_t i = 0;
  while (i < s.size()) append_utf8(out, to_lower(next_code_point(s, i)));
  return out;
}

bool parse_int(std::string_view s, int& v) {
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  return ec == std::errc() && ptr == s.data() + s.size();
}

void insert_sorted_unique(std::vector<std::size_t>& v, std::size_t x) {
  auto it = std::lower_bound(v.begin(), v.end(), x);
  if (it == v.end() || *it != x) v.insert(it, x);
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; };
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    const std::size_t b = i;
    while (i < text.size() && !is_space(text[i])) ++i;
    if (i == b) continue;
    std::string_view chunk = text.substr(b, i - b);
    if (starts_with_icase(chunk, "www.")) continue;
    tokenize_chunk(chunk, out);
  }
  return out;
}

TextNormalizer identity_normalizer() {
  return [](std::string_view text, std::string_view) { return std::string(text); };
}

Lexicon::Lexicon(std::string name, std::vector<LexiconCategory> categories)
    : name_(std::move(name)), categories_(std::move(categories)) {
  for (std::size_t i = 0; i < categories_.size(); ++i) {
    if (!index_by_id_.emplace(categories_[i].id, i).second)
      throw DataError("duplicate category id " + std::to_string(categories_[i].id));
  }
}

std::optional<std::size_t> Lexicon::category_index(int id) const {
  auto it = index_by_id_.find(id);
  if (it == index_by_id_.end()) return std::nullopt;
  return it->second;
}

void Lexicon::add_entry(std::string_view entry, std::span<const int> category_ids) {
  std::string key = lowercase_utf8(entry);
  const bool is_prefix = !key.empty() && key.back() == '*';
  if (key.empty() || key == "*") throw DataError("empty lexicon entry");
  std::vector<std::size_t> idx;
  for (int id : category_ids) {
    auto ci = category_index(id);
    if (!ci) throw DataError("undeclared category id " + std::to_string(id));
    idx.push_back(*ci);
  }
  auto [slot, fresh] = entry_slot_.try_emplace(key, entries_.size());
  if (fresh) entries_.emplace_back(key, std::vector<int>{});
  auto& ids = entries_[slot->second].second;
  for (int id : category_ids) {
    if (std::find(ids.begin(), ids.end(), id) == ids.end()) ids.push_back(id);
  }
  if (is_prefix) key.pop_back();
  auto& target = is_prefix ? prefixes_[key] : words_[key];
  for (std::size_t i : idx) insert_sorted_unique(target, i);
  if (is_prefix) max_prefix_len_ = std::max(max_prefix_len_, key.size());
}

std::vector<std::size_t> Lexicon::match(std::string_view token) const {
  std::vector<std::size_t> out;
  if (auto it = words_.find(std::string(token)); it != words_.end()) out = it->second;
  if (!prefixes_.empty()) {
    const std::size_t limit = std::min(max_prefix_len_, token.size());
    std::string key;
    for (std::size_t len = 1; len <= limit; ++len) {
      key.assign(token.substr(0, len));
      if (auto it = prefixes_.find(key); it != prefixes_.end()) {
        for (std::size_t i : it->second) insert_sorted_unique(out, i);
      }
    }
  }
  return out;
}

Lexicon parse_lexicon(std::istream& in, std::string name, std::optional<std::size_t> expected_categories) {
  std::string line;
  std::size_t line_no = 0;
  int section = 0;  // 0 before header, 1 header, 2 body
  std::vector<LexiconCategory> cats;
  std::vector<std::tuple<std::size_t, std::string, std::vector<int>>> body;
  auto fail = [&](const std::string& msg) {
    throw DataError("lexicon line " + std::to_string(line_no) + ": " + msg);
  };
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = ascii_trim(line);
    if (t.empty()) continue;
    if (t == "%") {
      if (section == 2) fail("unexpected '%' in body");
      ++section;
      continue;
    }
    if (section == 0) fail("expected '%' header delimiter");
    const auto fields = split_ws(t);
    if (section == 1) {
      if (fields.size() < 2) fail("header line needs <id> <name>");
      int id = 0;
      if (!parse_int(fields[0], id)) fail("category id '" + fields[0] + "' is not an integer");
      std::string cname = fields[1];
      for (std::size_t k = 2; k < fields.size(); ++k) cname += "_" + fields[k];
      cats.push_back({id, std::move(cname)});
      continue;
    }
    if (fields.size() < 2) fail("entry '" + fields[0] + "' has no categories");
    std::vector<int> ids;
    for (std::size_t k = 1; k < fields.size(); ++k) {
      int id = 0;
      if (!parse_int(fields[k], id)) fail("category id '" + fields[k] + "' is not an integer");
      ids.push_back(id);
    }
    body.emplace_back(line_no, fields[0], std::move(ids));
  }
  if (section < 2) throw DataError("lexicon: missing '%' header section");
  if (expected_categories && cats.size() != *expected_categories)
    throw DataError("lexicon " + name + ": expected " + std::to_string(*expected_categories) +
                    " categories, found " + std::to_string(cats.size()));
  Lexicon lex(std::move(name), std::move(cats));
  for (auto& [ln, entry, ids] : body) {
    try {
      lex.add_entry(entry, ids);
    } catch (const DataError& e) {
      throw DataError("lexicon line " + std::to_string(ln) + ": " + e.what());
    }
  }
  return lex;
}

Lexicon load_lexicon(const std::filesystem::path& path, std::string name,
                     std::optional<std::size_t> expected_categories) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open lexicon " + path.string());
  return parse_lexicon(in, std::move(name), expected_categories);
}

std::string render_lexicon(const Lexicon& lexicon) {
  std::ostringstream out;
  out << "%\n";
  for (const auto& c : lexicon.categories()) out << c.id << '\t' << c.name << '\n';
  out << "%\n";
  for (const auto& [entry, ids] : lexicon.entries()) {
    out << entry;
    for (int id : ids) out << '\t' << id;
    out << '\n';
  }
  return out.str();
}

std::string_view prefix_of(Provenance p) { return p == Provenance::Bio ? "Bio_" : "Tweet_"; }

NamedValues category_features(std::span<const std::string> tokens, const Lexicon& lexicon, Provenance provenance) {
  const auto& cats = lexicon.categories();
  NamedValues out;
  out.names.reserve(cats.size());
  std::vector<std::int64_t> counts(cats.size(), 0);
  for (const auto& tok : tokens) {
    for (std::size_t ci : lexicon.match(tok)) ++counts[ci];
  }
  const double denom = static_cast<double>(std::max<std::size_t>(1, tokens.size()));
  for (std::size_t c = 0; c < cats.size(); ++c) {
    out.names.push_back(std::string(prefix_of(provenance)) + lexicon.name() + "_" + cats[c].name);
    out.values.push_back(static_cast<double>(counts[c]) / denom);
  }
  return out;
}

TokenCounts count_tokens(std::span<const std::string> tokens) {
  TokenCounts c;
  for (const auto& t : tokens) ++c[t];
  return c;
}

std::vector<std::string> build_vocabulary(std::span<const TokenCounts> docs, std::span<const std::size_t> train_rows,
                                          std::int64_t min_df, std::size_t max_vocab) {
  std::map<std::string, std::int64_t> df;
  for (std::size_t r : train_rows) {
    for (const auto& [tok, n] : docs[r]) {
      if (n > 0) ++df[tok];
    }
  }
  std::vector<std::pair<std::string, std::int64_t>> ranked;
  for (auto& [tok, n] : df) {
    if (n >= min_df) ranked.emplace_back(tok, n);
  }
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  if (ranked.size() > max_vocab) ranked.resize(max_vocab);
  std::vector<std::string> vocab;
  vocab.reserve(ranked.size());
  for (auto& [tok, n] : ranked) vocab.push_back(std::move(tok));
  return vocab;
}

Eigen::MatrixXd bow_values(std::span<const TokenCounts> docs, std::span<const std::string> vocabulary) {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(docs.size()),
                                            static_cast<Eigen::Index>(vocabulary.size()));
  for (std::size_t r = 0; r < docs.size(); ++r) {
    std::int64_t total = 0;
    for (const auto& [tok, n] : docs[r]) total += n;
    const double denom = static_cast<double>(std::max<std::int64_t>(1, total));
    for (std::size_t c = 0; c < vocabulary.size(); ++c) {
      auto it = docs[r].find(vocabulary[c]);
      if (it != docs[r].end())
        m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = static_cast<double>(it->second) / denom;
    }
  }
  return m;
}

void FeatureMatrix::validate() const {
  if (static_cast<std::size_t>(values.rows()) != users.size() ||
      static_cast<std::size_t>(values.cols()) != features.size())
    throw std::logic_error("feature matrix shape does not match its labels");
  if (scaling && (scaling->min.size() != features.size() || scaling->max.size() != features.size()))
    throw std::logic_error("scaling parameters do not match feature count");
}

FeatureMatrix hconcat(const FeatureMatrix& a, const FeatureMatrix& b) {
  if (a.users != b.users) throw std::logic_error("hconcat: user lists differ");
  FeatureMatrix out;
  out.users = a.users;
  out.features = a.features;
  out.features.insert(out.features.end(), b.features.begin(), b.features.end());
  out.values.resize(a.values.rows(), a.values.cols() + b.values.cols());
  out.values << a.values, b.values;
  return out;
}

FeatureMatrix select_columns(const FeatureMatrix& m, const std::function<bool(const std::string&)>& keep) {
  std::vector<Eigen::Index> cols;
  FeatureMatrix out;
  out.users = m.users;
  for (std::size_t c = 0; c < m.features.size(); ++c) {
    if (keep(m.features[c])) {
      cols.push_back(static_cast<Eigen::Index>(c));
      out.features.push_back(m.features[c]);
    }
  }
  out.values.resize(m.values.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t k = 0; k < cols.size(); ++k) out.values.col(static_cast<Eigen::Index>(k)) = m.values.col(cols[k]);
  return out;
}

FeatureMatrix minmax_scale(FeatureMatrix m, std::span<const std::size_t> train_rows) {
  if (train_rows.empty()) throw std::invalid_argument("minmax_scale: no training rows");
  ScalingParams p;
  const auto cols = m.values.cols();
  p.min.assign(static_cast<std::size_t>(cols), 0.0);
  p.max.assign(static_cast<std::size_t>(cols), 0.0);
  for (Eigen::Index c = 0; c < cols; ++c) {
    double lo = m.values(static_cast<Eigen::Index>(train_rows[0]), c);
    double hi = lo;
    for (std::size_t r : train_rows) {
      const double v = m.values(static_cast<Eigen::Index>(r), c);
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    p.min[static_cast<std::size_t>(c)] = lo;
    p.max[static_cast<std::size_t>(c)] = hi;
  }
  apply_scaling(m.values, p);
  m.scaling = std::move(p);
  return m;
}

void apply_scaling(Eigen::MatrixXd& values, const ScalingParams& params) {
  for (Eigen::Index c = 0; c < values.cols(); ++c) {
    const double lo = params.min[static_cast<std::size_t>(c)];
    const double hi = params.max[static_cast<std::size_t>(c)];
    const double range = hi - lo;
    for (Eigen::Index r = 0; r < values.rows(); ++r) {
      double& v = values(r, c);
      if (!(range > 0.0)) {
        v = 0.0;
      } else {
        v = std::clamp((v - lo) / range, 0.0, 1.0);
      }
    }
  }
}

double unscale_value(double scaled, double min, double max) { return min + scaled * (max - min); }

std::string feature_matrix_csv(const FeatureMatrix& m) {
  m.validate();
  std::ostringstream out;
  std::vector<std::string> header{"user_id"};
  header.insert(header.end(), m.features.begin(), m.features.end());
  out << csv::join(header) << '\n';
  for (std::size_t r = 0; r < m.users.size(); ++r) {
    out << csv::escape(m.users[r]);
    for (Eigen::Index c = 0; c < m.values.cols(); ++c)
      out << ',' << csv::format_double(m.values(static_cast<Eigen::Index>(r), c));
    out << '\n';
  }
  return out.str();
}

FeatureMatrix parse_feature_matrix_csv(std::istream& in) {
  std::string line;
  FeatureMatrix m;
  if (!std::getline(in, line)) throw DataError("feature matrix: missing header");
  auto header = csv::split_line(line);
  if (header.empty() || header[0] != "user_id") throw DataError("feature matrix: header must start with user_id");
  m.features.assign(header.begin() + 1, header.end());
  std::vector<std::vector<double>> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto f = csv::split_line(line);
    if (f.size() != header.size())
      throw DataError("feature matrix line " + std::to_string(line_no) + ": wrong field count");
    m.users.push_back(f[0]);
    std::vector<double> row;
    for (std::size_t k = 1; k < f.size(); ++k) {
      double v = 0.0;
      auto [ptr, ec] = std::from_chars(f[k].data(), f[k].data() + f[k].size(), v);
      if (ec != std::errc() || ptr != f[k].data() + f[k].size())
        throw DataError("feature matrix line " + std::to_string(line_no) + ": bad number '" + f[k] + "'");
      row.push_back(v);
    }
    rows.push_back(std::move(row));
  }
  m.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(m.features.size()));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < rows[r].size(); ++c)
      m.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
  return m;
}

UserDocument build_document(std::string user_id, std::string lang, std::string_view bio,
                            std::span<const std::string> normal_tweets, const TextNormalizer& normalizer) {
  UserDocument d;
  d.user_id = std::move(user_id);
  d.lang = std::move(lang);
  d.bio_tokens = tokenize(normalizer(bio, d.lang));
  for (const auto& t : normal_tweets) {
    auto toks = tokenize(normalizer(t, d.lang));
    d.tweet_tokens.insert(d.tweet_tokens.end(), std::make_move_iterator(toks.begin()),
                          std::make_move_iterator(toks.end()));
  }
  return d;
}

FeatureMatrix lexical_features(std::span<const UserDocument> docs, std::span<const Lexicon> lexicons,
                               bool include_bio) {
  FeatureMatrix m;
  std::vector<Provenance> provs{Provenance::Tweet};
  if (include_bio) provs.insert(provs.begin(), Provenance::Bio);
  std::vector<std::vector<double>> rows;
  for (const auto& d : docs) {
    m.users.push_back(d.user_id);
    std::vector<double> row;
    std::vector<std::string> names;
    for (Provenance p : provs) {
      const auto& toks = p == Provenance::Bio ? d.bio_tokens : d.tweet_tokens;
      for (const auto& lex : lexicons) {
        auto nv = category_features(toks, lex, p);
        row.insert(row.end(), nv.values.begin(), nv.values.end());
        if (m.features.empty()) names.insert(names.end(), nv.names.begin(), nv.names.end());
      }
    }
    if (m.features.empty()) m.features = std::move(names);
    rows.push_back(std::move(row));
  }
  if (docs.empty()) {
    for (Provenance p : provs)
      for (const auto& lex : lexicons) {
        auto nv = category_features({}, lex, p);
        m.features.insert(m.features.end(), nv.names.begin(), nv.names.end());
      }
  }
  m.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(m.features.size()));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < rows[r].size(); ++c)
      m.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
  return m;
}

}  // namespace qsfusion
