#include "disputelab/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <set>
#include <sstream>

namespace disputelab::synth {

namespace {

const std::vector<std::string> kHedges = {"maybe",    "perhaps", "possibly", "probably", "apparently",
                                          "seems",    "suppose", "guess",    "unclear",  "likely"};
const std::vector<std::string> kCertainty = {"certainly", "definitely", "obviously", "clearly",
                                             "undoubtedly", "surely",  "absolutely"};
const std::vector<std::string> kFunction = {"the", "a",    "of",   "to",   "in",  "is",   "this", "that",
                                            "it",  "we",   "you",  "i",    "and", "for",  "on",   "with",
                                            "as",  "be",   "are",  "not",  "was", "have", "they", "there"};
const std::vector<std::string> kContent = {
    "article",  "section",  "source",   "page",      "reference", "policy",   "wording",   "paragraph",
    "citation", "claim",    "text",     "version",   "change",    "history",  "topic",     "discussion",
    "content",  "sentence", "title",    "image",     "link",      "review",   "editor",    "issue",
    "term",     "list",     "note",     "draft",     "summary",   "proposal", "example",   "detail",
    "data",     "book",     "author",   "report",    "paper",     "study",    "news",      "website",
    "infobox",  "template", "category", "lead",      "table",     "figure",   "chapter",   "quote",
    "opinion",  "view",     "point",    "question",  "answer",    "reason",   "evidence",  "context",
    "material", "factual",  "neutral",  "notable",   "relevant",  "recent",   "original",  "primary",
    "secondary", "archive", "journal",  "newspaper", "interview", "biography", "timeline", "region",
    "country",  "city",     "party",    "election",  "company",   "product",  "album",     "film"};
const std::vector<std::string> kSentiment = {"good", "helpful", "agree", "fair", "bad", "wrong", "biased", "disagree"};
const std::vector<std::string> kPolite = {"thanks", "please", "sorry"};
const std::vector<std::string> kRevert = {"revert", "reverted", "rv", "undo", "undid"};
const std::vector<std::string> kCopyedit = {"copyedit", "ce", "typo", "format", "tidy"};

const std::string& pick(const std::vector<std::string>& words, Rng& rng) { return words[rng.below(words.size())]; }

std::size_t between(std::size_t lo, std::size_t hi, Rng& rng) { return lo + rng.below(hi - lo + 1); }

std::size_t binomial(std::size_t trials, double p, Rng& rng) {
  std::size_t k = 0;
  for (std::size_t i = 0; i < trials; ++i) k += rng.bernoulli(p) ? 1 : 0;
  return k;
}

std::string join(const std::vector<std::string>& words) {
  std::string out;
  for (const auto& w : words) {
    if (!out.empty()) out.push_back(' ');
    out += w;
  }
  out.push_back('.');
  return out;
}

std::vector<std::string> filler(std::size_t n, Rng& rng) {
  std::vector<std::string> words;
  for (std::size_t i = 0; i < n; ++i) words.push_back(rng.bernoulli(0.45) ? pick(kFunction, rng) : pick(kContent, rng));
  return words;
}

void insert_random(std::vector<std::string>& words, const std::string& w, Rng& rng) {
  words.insert(words.begin() + static_cast<std::ptrdiff_t>(rng.below(words.size() + 1)), w);
}

std::string style_text(bool revert, Rng& rng) {
  std::vector<std::string> words = {pick(revert ? kRevert : kCopyedit, rng)};
  const auto rest = filler(between(2, 4, rng), rng);
  words.insert(words.end(), rest.begin(), rest.end());
  return join(words);
}

std::string id_of(const char* prefix, std::size_t n) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s%05zu", prefix, n);
  return buf;
}

}  // namespace

void SynthConfig::validate() const {
  if (conversations == 0) throw ConfigError("synth: conversations must be positive");
  if (min_utterances > max_utterances) throw ConfigError("synth: min_utterances exceeds max_utterances");
  if (min_words == 0 || min_words > max_words) throw ConfigError("synth: invalid word range");
  if (min_utterances < edits + style_talk_posts + 2) {
    throw ConfigError("synth: min_utterances too small for the edits and style posts");
  }
  if (embedding_dim == 0) throw ConfigError("synth: embedding_dim must be positive");
}

std::vector<Conversation> generate_corpus(const SynthConfig& config) {
  config.validate();
  std::vector<Conversation> out;
  out.reserve(config.conversations);
  const std::size_t period = config.negatives_per_positive + 1;
  for (std::size_t ci = 0; ci < config.conversations; ++ci) {
    Rng rng(mix_seed(config.seed, ci));
    const bool positive = ci % period == 0;
    Conversation c;
    c.id = id_of("syn-", ci);
    c.page = id_of("Page_", ci);
    c.label = positive ? Label::Escalated : Label::NotEscalated;

    const std::size_t n = between(config.min_utterances, config.max_utterances, rng);
    // Edits never open or close the conversation, so they sit inside the
    // talk-post window.
    std::vector<std::size_t> inner(n - 2);
    for (std::size_t i = 0; i < inner.size(); ++i) inner[i] = i + 1;
    rng.shuffle(inner);
    std::vector<bool> is_edit(n, false);
    for (std::size_t k = 0; k < config.edits; ++k) is_edit[inner[k]] = true;
    std::vector<std::size_t> talk;
    for (std::size_t i = 0; i < n; ++i)
      if (!is_edit[i]) talk.push_back(i);
    std::vector<std::size_t> shuffled_talk = talk;
    rng.shuffle(shuffled_talk);
    std::vector<bool> is_style(n, false);
    for (std::size_t k = 0; k < config.style_talk_posts; ++k) is_style[shuffled_talk[k]] = true;

    // Marker drift centred over the posts that carry markers, so both
    // classes have the same expected marker totals.
    const auto pos = [&](std::size_t i) { return static_cast<double>(i) / static_cast<double>(n - 1); };
    double centre = 0.0;
    std::size_t marker_posts = 0;
    for (std::size_t i : talk) {
      if (is_style[i]) continue;
      centre += pos(i) * pos(i);
      ++marker_posts;
    }
    centre /= static_cast<double>(marker_posts);

    const std::size_t participants = between(2, 5, rng);
    std::vector<std::string> authors;
    for (std::size_t a = 0; a < participants; ++a) authors.push_back("User" + std::to_string(rng.below(90000) + 10000));
    Timestamp t = 1500000000 + static_cast<Timestamp>(rng.below(100000000));

    std::size_t talk_seen = 0;
    for (std::size_t i = 0; i < n; ++i) {
      Utterance u;
      u.id = c.id + "-" + std::to_string(i);
      t += static_cast<Timestamp>(between(60, 86400, rng));
      u.timestamp = t;
      if (is_edit[i]) {
        u.kind = UtteranceKind::EditSummary;
        u.author = authors[rng.below(participants)];
        const double p = positive ? config.revert_edit_positive : config.revert_edit_negative;
        u.text = style_text(rng.bernoulli(p), rng);
      } else {
        u.kind = UtteranceKind::TalkPost;
        // The first two talk posts come from different authors.
        u.author = talk_seen < 2 ? authors[talk_seen] : authors[rng.below(participants)];
        ++talk_seen;
        if (is_style[i]) {
          u.text = style_text(rng.bernoulli(0.5), rng);
        } else {
          auto words = filler(between(config.min_words, config.max_words, rng), rng);
          const double d = positive ? pos(i) * pos(i) - centre : 0.0;
          const double ph = std::clamp(config.marker_base - config.drift * d, 0.0, 1.0);
          const double pc = std::clamp(config.marker_base + config.drift * d, 0.0, 1.0);
          for (std::size_t k = binomial(2, ph, rng); k > 0; --k) insert_random(words, pick(kHedges, rng), rng);
          for (std::size_t k = binomial(2, pc, rng); k > 0; --k) insert_random(words, pick(kCertainty, rng), rng);
          if (rng.bernoulli(0.3)) insert_random(words, pick(kSentiment, rng), rng);
          if (rng.bernoulli(0.15)) insert_random(words, pick(kPolite, rng), rng);
          u.text = join(words);
        }
      }
      u.toxicity = rng.uniform(0.0, 0.3);
      u.severe_toxicity = *u.toxicity * rng.uniform(0.0, 0.5);
      c.utterances.push_back(std::move(u));
    }
    out.push_back(std::move(c));
  }
  return out;
}

std::vector<std::string> vocabulary() {
  std::set<std::string> words;
  for (const auto* list : {&kHedges, &kCertainty, &kFunction, &kContent, &kSentiment, &kPolite, &kRevert, &kCopyedit})
    words.insert(list->begin(), list->end());
  return {words.begin(), words.end()};
}

void write_embeddings(const SynthConfig& config, std::ostream& out) {
  const std::size_t d = config.embedding_dim;
  Rng rng(mix_seed(config.seed, 0x656d62));
  const auto centre = [&] {
    std::vector<double> v(d);
    for (double& x : v) x = 0.5 * rng.normal();
    return v;
  };
  const std::vector<std::vector<std::string>> groups = {kHedges, kCertainty, kRevert, kCopyedit};
  std::vector<std::vector<double>> centres;
  for (std::size_t g = 0; g < groups.size(); ++g) centres.push_back(centre());
  const std::vector<double> zero(d, 0.0);
  for (const auto& word : vocabulary()) {
    const std::vector<double>* base = &zero;
    double spread = 0.4;
    for (std::size_t g = 0; g < groups.size(); ++g) {
      if (std::find(groups[g].begin(), groups[g].end(), word) != groups[g].end()) {
        base = &centres[g];
        spread = 0.15;
      }
    }
    out << word;
    for (std::size_t k = 0; k < d; ++k) out << ' ' << format_fixed((*base)[k] + spread * rng.normal(), 5);
    out << '\n';
  }
}

EmbeddingTable embeddings(const SynthConfig& config) {
  std::stringstream ss;
  write_embeddings(config, ss);
  return parse_embeddings(ss, config.embedding_dim, config.seed);
}

}  // namespace disputelab::synth
