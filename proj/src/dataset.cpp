#include "disputelab/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace disputelab {

namespace {

bool by_id(const Conversation& a, const Conversation& b) { return a.id < b.id; }

void require_label(const Conversation& c) {
  if (!c.label) throw Error("conversation " + c.id + " is unlabelled");
}

}  // namespace

std::string_view to_string(SplitName s) {
  switch (s) {
    case SplitName::Train: return "train";
    case SplitName::Validation: return "validation";
    case SplitName::Test: return "test";
  }
  return "unknown";
}

MatchResult match_by_length(const std::vector<Conversation>& escalated,
                            const std::vector<Conversation>& pool, const MatchConfig& cfg) {
  if (cfg.max_matches_per_positive < 1) throw ConfigError("max_matches_per_positive must be >= 1");
  for (const auto& c : escalated) {
    require_label(c);
    if (!c.escalated()) throw Error("conversation " + c.id + " is not escalated");
  }
  for (const auto& c : pool) {
    require_label(c);
    if (c.escalated()) throw Error("matching pool contains escalated conversation " + c.id);
  }

  // Buckets of candidate indices by utterance count, each in id order.
  std::vector<std::size_t> pool_order(pool.size());
  for (std::size_t i = 0; i < pool.size(); ++i) pool_order[i] = i;
  std::sort(pool_order.begin(), pool_order.end(),
            [&](std::size_t a, std::size_t b) { return pool[a].id < pool[b].id; });
  std::map<std::size_t, std::vector<std::size_t>> buckets;
  for (auto i : pool_order) buckets[pool[i].size()].push_back(i);

  std::vector<const Conversation*> positives;
  for (const auto& c : escalated) positives.push_back(&c);
  std::sort(positives.begin(), positives.end(),
            [](const Conversation* a, const Conversation* b) { return a->id < b->id; });

  Rng rng(cfg.seed);
  MatchResult result;
  for (const auto* pos : positives) {
    result.dataset.push_back(*pos);
    auto& bucket = buckets[pos->size()];
    const std::size_t take = std::min(cfg.max_matches_per_positive, bucket.size());
    // Partial Fisher-Yates: draw `take` entries, removing them from the bucket.
    for (std::size_t k = 0; k < take; ++k) {
      const std::size_t j = k + rng.below(bucket.size() - k);
      std::swap(bucket[k], bucket[j]);
      result.dataset.push_back(pool[bucket[k]]);
    }
    bucket.erase(bucket.begin(), bucket.begin() + static_cast<std::ptrdiff_t>(take));
    if (take < cfg.max_matches_per_positive) {
      result.shortfalls.push_back({pos->id, pos->size(), cfg.max_matches_per_positive, take});
    }
  }
  return result;
}

MatchResult match_by_length(const std::vector<Conversation>& labelled, const MatchConfig& cfg) {
  std::vector<Conversation> pos, neg;
  for (const auto& c : labelled) {
    require_label(c);
    (c.escalated() ? pos : neg).push_back(c);
  }
  return match_by_length(pos, neg, cfg);
}

SplitSpec SplitSpec::from_counts(ClassCounts train, ClassCounts validation, ClassCounts test,
                                 std::uint64_t seed) {
  SplitSpec s;
  s.mode = Mode::Counts;
  s.train = train;
  s.validation = validation;
  s.test = test;
  s.seed = seed;
  return s;
}

SplitSpec SplitSpec::from_fractions(double train, double validation, std::uint64_t seed) {
  SplitSpec s;
  s.mode = Mode::Fractions;
  s.train_fraction = train;
  s.validation_fraction = validation;
  s.seed = seed;
  return s;
}

ClassCounts class_counts(const std::vector<Conversation>& cs) {
  ClassCounts n;
  for (const auto& c : cs) {
    require_label(c);
    (c.escalated() ? n.escalated : n.not_escalated)++;
  }
  return n;
}

Splits split(const std::vector<Conversation>& dataset, const SplitSpec& spec) {
  std::vector<Conversation> classes[2];
  for (const auto& c : dataset) {
    require_label(c);
    classes[c.escalated() ? 1 : 0].push_back(c);
  }
  for (auto& cls : classes) std::sort(cls.begin(), cls.end(), by_id);
  {
    std::vector<std::string> ids;
    for (const auto& c : dataset) ids.push_back(c.id);
    std::sort(ids.begin(), ids.end());
    if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) {
      throw Error("dataset contains duplicate conversation ids");
    }
  }

  Splits out;
  Rng rng(spec.seed);
  for (int cls = 1; cls >= 0; --cls) {
    auto& members = classes[cls];
    const std::string name = cls == 1 ? "escalated" : "not_escalated";
    const std::size_t total = members.size();
    std::size_t n_train, n_val, n_test;
    if (spec.mode == SplitSpec::Mode::Counts) {
      const auto pick = [&](const ClassCounts& c) { return cls == 1 ? c.escalated : c.not_escalated; };
      n_train = pick(spec.train);
      n_val = pick(spec.validation);
      n_test = pick(spec.test);
      const std::size_t requested = n_train + n_val + n_test;
      if (requested > total) {
        throw Error("split infeasible: class " + name + " requests " + std::to_string(requested) +
                    " conversations but only " + std::to_string(total) + " are available");
      }
      if (requested < total) {
        throw Error("split infeasible: class " + name + " counts sum to " +
                    std::to_string(requested) + " but the class has " + std::to_string(total) +
                    " conversations");
      }
    } else {
      if (spec.train_fraction < 0 || spec.validation_fraction < 0 ||
          spec.train_fraction + spec.validation_fraction > 1.0 + 1e-12) {
        throw ConfigError("split fractions must be non-negative and sum to at most 1");
      }
      n_train = static_cast<std::size_t>(std::llround(spec.train_fraction * static_cast<double>(total)));
      n_train = std::min(n_train, total);
      n_val = static_cast<std::size_t>(std::llround(spec.validation_fraction * static_cast<double>(total)));
      n_val = std::min(n_val, total - n_train);
      n_test = total - n_train - n_val;
    }
    rng.shuffle(members);
    auto it = members.begin();
    const auto take = [&](std::vector<Conversation>& dst, std::size_t n) {
      dst.insert(dst.end(), it, it + static_cast<std::ptrdiff_t>(n));
      it += static_cast<std::ptrdiff_t>(n);
    };
    take(out.train, n_train);
    take(out.validation, n_val);
    take(out.test, n_test);
  }
  for (auto* part : {&out.train, &out.validation, &out.test}) {
    std::sort(part->begin(), part->end(), by_id);
  }
  return out;
}

SplitManifest manifest_of(const Splits& splits) {
  SplitManifest m;
  for (const auto& c : splits.train) m[c.id] = SplitName::Train;
  for (const auto& c : splits.validation) m[c.id] = SplitName::Validation;
  for (const auto& c : splits.test) m[c.id] = SplitName::Test;
  return m;
}

Splits apply_manifest(const std::vector<Conversation>& dataset, const SplitManifest& manifest) {
  Splits out;
  for (const auto& c : dataset) {
    auto it = manifest.find(c.id);
    if (it == manifest.end()) continue;
    switch (it->second) {
      case SplitName::Train: out.train.push_back(c); break;
      case SplitName::Validation: out.validation.push_back(c); break;
      case SplitName::Test: out.test.push_back(c); break;
    }
  }
  for (auto* part : {&out.train, &out.validation, &out.test}) {
    std::sort(part->begin(), part->end(), by_id);
  }
  return out;
}

void write_manifest(const SplitManifest& manifest, const std::filesystem::path& path,
                    const std::map<std::string, std::string>& metadata) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write manifest " + path.string());
  for (const auto& [k, v] : metadata) out << "# " << k << "=" << v << "\n";
  out << "conversation_id,split\n";
  for (const auto& [id, s] : manifest) out << id << "," << to_string(s) << "\n";
}

SplitManifest read_manifest(const std::filesystem::path& path,
                            std::map<std::string, std::string>* metadata) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open manifest " + path.string());
  SplitManifest m;
  std::string line;
  std::size_t line_no = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto body = trim(std::string_view(line).substr(1));
      const auto eq = body.find('=');
      if (metadata && eq != std::string::npos) (*metadata)[body.substr(0, eq)] = body.substr(eq + 1);
      continue;
    }
    if (!header) {
      header = true;
      if (line != "conversation_id,split") throw ParseError("unexpected manifest header", line_no);
      continue;
    }
    const auto comma = line.rfind(',');
    if (comma == std::string::npos) throw ParseError("manifest line lacks a split", line_no);
    const auto name = line.substr(comma + 1);
    SplitName s;
    if (name == "train") {
      s = SplitName::Train;
    } else if (name == "validation") {
      s = SplitName::Validation;
    } else if (name == "test") {
      s = SplitName::Test;
    } else {
      throw ParseError("unknown split '" + name + "'", line_no);
    }
    m[line.substr(0, comma)] = s;
  }
  return m;
}

}  // namespace disputelab
