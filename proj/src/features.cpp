#include "disputelab/features.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <unordered_map>

namespace disputelab {

namespace {

FeatureMatrix empty_matrix(const Conversation& c, std::vector<std::string> names) {
  FeatureMatrix fm;
  fm.conversation_id = c.id;
  fm.values = Matrix(c.size(), names.size());
  fm.names = std::move(names);
  return fm;
}

std::string prefixed(std::string_view prefix, std::string_view name) {
  if (prefix.empty()) return std::string(name);
  return std::string(prefix) + "." + std::string(name);
}

bool matches_at(const std::vector<std::string>& tokens, std::size_t i,
                const std::vector<std::string>& pattern) {
  if (pattern.empty() || i + pattern.size() > tokens.size()) return false;
  for (std::size_t k = 0; k < pattern.size(); ++k) {
    if (tokens[i + k] != pattern[k]) return false;
  }
  return true;
}

std::set<std::string> function_word_types(const std::vector<std::string>& tokens,
                                          const std::unordered_set<std::string>& function_words) {
  std::set<std::string> out;
  for (const auto& t : tokens) {
    if (function_words.contains(t)) out.insert(t);
  }
  return out;
}

}  // namespace

// --- lexicons -------------------------------------------------------------

const LexiconCategory& Lexicon::category(std::string_view n) const {
  for (const auto& c : categories) {
    if (c.name == n) return c;
  }
  throw LookupError("lexicon " + name + " has no category " + std::string(n));
}

bool Lexicon::has_category(std::string_view n) const {
  return std::any_of(categories.begin(), categories.end(),
                     [&](const LexiconCategory& c) { return c.name == n; });
}

std::unordered_set<std::string> Lexicon::words() const {
  std::unordered_set<std::string> out;
  for (const auto& c : categories) {
    for (const auto& p : c.patterns) {
      if (p.size() == 1) out.insert(p[0]);
    }
  }
  return out;
}

Lexicon parse_lexicon(std::istream& in, std::string name) {
  Lexicon lex;
  lex.name = std::move(name);
  std::set<std::string> seen;
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = trim(raw);
    if (line.empty() || line[0] == '#') continue;
    if (line[0] == '[') {
      const auto close = line.find(']');
      if (close == std::string::npos) throw ParseError("unterminated category header", line_no);
      LexiconCategory cat;
      cat.name = trim(std::string_view(line).substr(1, close - 1));
      if (cat.name.empty()) throw ParseError("empty category name", line_no);
      const std::string rest = trim(std::string_view(line).substr(close + 1));
      if (rest == "@start") {
        cat.position = Position::UtteranceStart;
      } else if (!rest.empty()) {
        throw ParseError("unexpected text after category header: " + rest, line_no);
      }
      if (!seen.insert(cat.name).second) throw ParseError("duplicate category " + cat.name, line_no);
      lex.categories.push_back(std::move(cat));
      continue;
    }
    if (lex.categories.empty()) throw ParseError("pattern before any category header", line_no);
    if (line != to_lower(line)) throw ParseError("patterns must be lowercase: " + line, line_no);
    auto tokens = tokenize(line);
    if (tokens.empty()) throw ParseError("pattern has no tokens: " + line, line_no);
    lex.categories.back().patterns.push_back(std::move(tokens));
  }
  return lex;
}

Lexicon load_lexicon(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open lexicon " + path.string());
  return parse_lexicon(in, path.stem().string());
}

Lexicon default_pronoun_lexicon() {
  const auto cat = [](std::string name, std::vector<std::string> words) {
    LexiconCategory c;
    c.name = std::move(name);
    for (auto& w : words) c.patterns.push_back({std::move(w)});
    return c;
  };
  Lexicon lex;
  lex.name = "pronouns";
  lex.categories.push_back(cat("first", {"i", "me", "my", "mine", "we", "us", "our", "ours"}));
  lex.categories.push_back(cat("second", {"you", "your", "yours"}));
  lex.categories.push_back(cat("third", {"he", "she", "they", "him", "her", "them", "his", "hers",
                                         "their", "theirs", "it", "its"}));
  return lex;
}

// --- feature matrices -----------------------------------------------------

FeatureMatrix hcat(FeatureMatrix a, const FeatureMatrix& b) {
  if (a.values.rows != b.values.rows) throw Error("hcat: row count mismatch");
  Matrix m(a.values.rows, a.values.cols + b.values.cols);
  for (std::size_t r = 0; r < m.rows; ++r) {
    for (std::size_t c = 0; c < a.values.cols; ++c) m(r, c) = a.values(r, c);
    for (std::size_t c = 0; c < b.values.cols; ++c) m(r, a.values.cols + c) = b.values(r, c);
  }
  a.values = std::move(m);
  a.names.insert(a.names.end(), b.names.begin(), b.names.end());
  return a;
}

void write_feature_csv(const FeatureMatrix& fm, std::ostream& out) {
  for (std::size_t c = 0; c < fm.names.size(); ++c) out << (c ? "," : "") << fm.names[c];
  out << "\n";
  for (std::size_t r = 0; r < fm.values.rows; ++r) {
    for (std::size_t c = 0; c < fm.values.cols; ++c) {
      out << (c ? "," : "") << format_double(fm.values(r, c));
    }
    out << "\n";
  }
}

std::size_t count_matches(const std::vector<std::string>& tokens, const LexiconCategory& category) {
  const auto longest_at = [&](std::size_t i) {
    std::size_t best = 0;
    for (const auto& p : category.patterns) {
      if (p.size() > best && matches_at(tokens, i, p)) best = p.size();
    }
    return best;
  };
  if (category.position == Position::UtteranceStart) return longest_at(0) > 0 ? 1 : 0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < tokens.size();) {
    const std::size_t len = longest_at(i);
    if (len > 0) {
      ++count;
      i += len;
    } else {
      ++i;
    }
  }
  return count;
}

FeatureMatrix extract_lexicon_features(const Conversation& c, const Lexicon& lex, Normalize normalize,
                                       std::string_view prefix) {
  std::vector<std::string> names;
  for (const auto& cat : lex.categories) names.push_back(prefixed(prefix, cat.name));
  FeatureMatrix fm = empty_matrix(c, std::move(names));
  for (std::size_t r = 0; r < c.size(); ++r) {
    const auto tokens = tokenize(c.utterances[r].text);
    for (std::size_t k = 0; k < lex.categories.size(); ++k) {
      double v = static_cast<double>(count_matches(tokens, lex.categories[k]));
      if (normalize == Normalize::PerToken) v = tokens.empty() ? 0.0 : v / static_cast<double>(tokens.size());
      fm.values(r, k) = v;
    }
  }
  return fm;
}

FeatureMatrix extract_pronoun_features(const Conversation& c) {
  static const Lexicon pronouns = default_pronoun_lexicon();
  return extract_pronoun_features(c, pronouns);
}

FeatureMatrix extract_pronoun_features(const Conversation& c, const Lexicon& pronouns) {
  const Lexicon classes{pronouns.name,
                        {pronouns.category("first"), pronouns.category("second"), pronouns.category("third")}};
  FeatureMatrix fm = extract_lexicon_features(c, classes, Normalize::PerToken);
  fm.names = {"pronoun_first", "pronoun_second", "pronoun_third"};
  return fm;
}

FeatureMatrix extract_idea_features(const Conversation& c, const Lexicon& certainty,
                                    const std::unordered_set<std::string>& function_words) {
  FeatureMatrix fm =
      empty_matrix(c, {"ideas_introduced", "ideas_adopted", "ideas_adopted_with_certainty"});
  // content word -> author who first used it
  std::unordered_map<std::string, std::string> first_author;
  // author -> content words that author has used
  std::unordered_map<std::string, std::unordered_set<std::string>> used_by;
  for (std::size_t r = 0; r < c.size(); ++r) {
    const auto& u = c.utterances[r];
    const auto tokens = tokenize(u.text);
    std::set<std::string> types;
    for (const auto& t : tokens) {
      if (t.size() >= 3 && !function_words.contains(t)) types.insert(t);
    }
    auto& mine = used_by[u.author];
    std::size_t introduced = 0, adopted = 0;
    for (const auto& w : types) {
      auto it = first_author.find(w);
      if (it == first_author.end()) {
        ++introduced;
      } else if (it->second != u.author && !mine.contains(w)) {
        ++adopted;
      }
    }
    bool certain = false;
    for (const auto& cat : certainty.categories) certain = certain || count_matches(tokens, cat) > 0;
    for (const auto& w : types) {
      first_author.emplace(w, u.author);
      mine.insert(w);
    }
    fm.values(r, 0) = static_cast<double>(introduced);
    fm.values(r, 1) = static_cast<double>(adopted);
    fm.values(r, 2) = certain ? static_cast<double>(adopted) : 0.0;
  }
  return fm;
}

FeatureMatrix extract_accommodation(const Conversation& c,
                                    const std::unordered_set<std::string>& function_words) {
  FeatureMatrix fm = empty_matrix(c, {"accommodation"});
  std::set<std::string> previous;
  for (std::size_t r = 0; r < c.size(); ++r) {
    auto current = function_word_types(tokenize(c.utterances[r].text), function_words);
    if (r > 0 && c.utterances[r].author != c.utterances[r - 1].author) {
      std::size_t both = 0;
      for (const auto& w : current) both += previous.contains(w) ? 1 : 0;
      const std::size_t either = current.size() + previous.size() - both;
      fm.values(r, 0) = either == 0 ? 0.0 : static_cast<double>(both) / static_cast<double>(either);
    }
    previous = std::move(current);
  }
  return fm;
}

FeatureMatrix extract_reply_gap(const Conversation& c) {
  FeatureMatrix fm = empty_matrix(c, {"reply_gap"});
  for (std::size_t r = 1; r < c.size(); ++r) {
    const double gap = static_cast<double>(c.utterances[r].timestamp - c.utterances[r - 1].timestamp);
    fm.values(r, 0) = std::log1p(std::max(0.0, gap));
  }
  return fm;
}

FeatureMatrix toxicity_columns(const Conversation& c) {
  FeatureMatrix fm = empty_matrix(c, {"toxicity", "severe_toxicity"});
  for (std::size_t r = 0; r < c.size(); ++r) {
    const auto& u = c.utterances[r];
    if (!u.toxicity || !u.severe_toxicity) {
      throw Error("utterance " + u.id + " is missing toxicity scores");
    }
    fm.values(r, 0) = *u.toxicity;
    fm.values(r, 1) = *u.severe_toxicity;
  }
  return fm;
}

double line_slope(const std::vector<double>& ys) {
  const std::size_t n = ys.size();
  if (n < 2) return 0.0;
  if (std::all_of(ys.begin(), ys.end(), [&](double y) { return y == ys[0]; })) return 0.0;
  const double denom = static_cast<double>(n - 1);
  double x_mean = 0.5, y_mean = 0.0;
  for (double y : ys) y_mean += y;
  y_mean /= static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = static_cast<double>(i) / denom - x_mean;
    sxy += dx * (ys[i] - y_mean);
    sxx += dx * dx;
  }
  return sxx == 0.0 ? 0.0 : sxy / sxx;
}

AggregatedFeatures aggregate(const FeatureMatrix& fm) {
  if (fm.values.rows == 0) throw Error("aggregate: feature matrix has no rows");
  AggregatedFeatures agg;
  agg.conversation_id = fm.conversation_id;
  agg.names = fm.names;
  agg.mean.resize(fm.values.cols);
  agg.gradient.resize(fm.values.cols);
  for (std::size_t k = 0; k < fm.values.cols; ++k) {
    const auto col = fm.values.column(k);
    double s = 0.0;
    for (double v : col) s += v;
    agg.mean[k] = s / static_cast<double>(col.size());
    agg.gradient[k] = line_slope(col);
  }
  return agg;
}

// --- featuresets ----------------------------------------------------------

std::string_view to_string(FeatureSet fs) {
  switch (fs) {
    case FeatureSet::Politeness: return "politeness";
    case FeatureSet::Collaboration: return "collaboration";
    case FeatureSet::Toxicity: return "toxicity";
    case FeatureSet::Sentiment: return "sentiment";
  }
  return "unknown";
}

FeatureSet feature_set_from_string(std::string_view s) {
  for (auto fs : {FeatureSet::Politeness, FeatureSet::Collaboration, FeatureSet::Toxicity,
                  FeatureSet::Sentiment}) {
    if (to_string(fs) == s) return fs;
  }
  throw ConfigError("unknown featureset '" + std::string(s) + "'");
}

std::filesystem::path default_lexicon_dir() {
  if (const char* env = std::getenv("DISPUTELAB_LEXICON_DIR")) return env;
#ifdef DISPUTELAB_DATA_DIR
  return std::filesystem::path(DISPUTELAB_DATA_DIR) / "lexicons";
#else
  return "data/lexicons";
#endif
}

Lexicons Lexicons::load(const std::filesystem::path& dir) {
  Lexicons lex;
  lex.politeness = load_lexicon(dir / "politeness.txt");
  lex.hedges = load_lexicon(dir / "hedges.txt");
  lex.certainty = load_lexicon(dir / "certainty.txt");
  lex.pronouns = load_lexicon(dir / "pronouns.txt");
  lex.sentiment = load_lexicon(dir / "sentiment.txt");
  lex.function_words = load_lexicon(dir / "function_words.txt").words();
  return lex;
}

FeatureMatrix extract_featureset(const Conversation& c, FeatureSet fs, const Lexicons& lex) {
  FeatureMatrix fm;
  switch (fs) {
    case FeatureSet::Politeness:
      fm = extract_lexicon_features(c, lex.politeness, Normalize::RawCount);
      break;
    case FeatureSet::Collaboration:
      fm = extract_idea_features(c, lex.certainty, lex.function_words);
      fm = hcat(std::move(fm), extract_lexicon_features(c, lex.hedges, Normalize::RawCount));
      fm = hcat(std::move(fm), extract_lexicon_features(c, lex.certainty, Normalize::RawCount));
      fm = hcat(std::move(fm), extract_pronoun_features(c, lex.pronouns));
      fm = hcat(std::move(fm), extract_accommodation(c, lex.function_words));
      fm = hcat(std::move(fm), extract_reply_gap(c));
      break;
    case FeatureSet::Toxicity:
      fm = toxicity_columns(c);
      break;
    case FeatureSet::Sentiment:
      fm = extract_lexicon_features(c, lex.sentiment, Normalize::RawCount);
      break;
  }
  fm.conversation_id = c.id;
  for (auto& n : fm.names) n = prefixed(to_string(fs), n);
  return fm;
}

DesignMatrix build_design(const std::vector<Conversation>& cs, const std::vector<FeatureSet>& sets,
                          bool with_gradients, const Lexicons& lex) {
  if (sets.empty()) throw ConfigError("no featuresets requested");
  std::vector<AggregatedFeatures> rows(cs.size());
  parallel_for(cs.size(), [&](std::size_t i) {
    FeatureMatrix fm = extract_featureset(cs[i], sets[0], lex);
    for (std::size_t s = 1; s < sets.size(); ++s) fm = hcat(std::move(fm), extract_featureset(cs[i], sets[s], lex));
    rows[i] = aggregate(fm);
  });

  std::vector<std::string> base_names;
  if (!cs.empty()) {
    base_names = rows[0].names;
  } else {
    // Column names are still needed for an empty corpus.
    Conversation probe;
    probe.utterances.push_back(Utterance{"probe", "probe", 0, "probe", UtteranceKind::TalkPost, 0.0, 0.0});
    FeatureMatrix fm = extract_featureset(probe, sets[0], lex);
    for (std::size_t s = 1; s < sets.size(); ++s) fm = hcat(std::move(fm), extract_featureset(probe, sets[s], lex));
    base_names = fm.names;
  }

  DesignMatrix d;
  for (const auto& n : base_names) d.names.push_back(n + ":mean");
  if (with_gradients) {
    for (const auto& n : base_names) d.names.push_back(n + ":grad");
  }
  d.x = Matrix(cs.size(), d.names.size());
  for (std::size_t i = 0; i < cs.size(); ++i) {
    const auto& a = rows[i];
    const std::size_t k = a.mean.size();
    for (std::size_t j = 0; j < k; ++j) d.x(i, j) = a.mean[j];
    if (with_gradients) {
      for (std::size_t j = 0; j < k; ++j) d.x(i, k + j) = a.gradient[j];
    }
    d.ids.push_back(cs[i].id);
    d.labels.push_back(cs[i].escalated() ? 1 : 0);
  }
  return d;
}

void write_design_csv(const DesignMatrix& d, std::ostream& out) {
  out << "conversation_id,label";
  for (const auto& n : d.names) out << "," << n;
  out << "\n";
  for (std::size_t i = 0; i < d.x.rows; ++i) {
    out << d.ids[i] << "," << d.labels[i];
    for (std::size_t j = 0; j < d.x.cols; ++j) out << "," << format_double(d.x(i, j));
    out << "\n";
  }
}

}  // namespace disputelab
