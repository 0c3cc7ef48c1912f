// End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
// exits non-zero if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string_view>

#include <nlohmann/json.hpp>

#include "disputelab/analysis.hpp"
#include "disputelab/dataset.hpp"
#include "disputelab/features.hpp"
#include "disputelab/linear.hpp"
#include "disputelab/pipeline.hpp"
#include "disputelab/serve.hpp"
#include "disputelab/synth.hpp"
#include "gradcases.hpp"
#include "oracles.hpp"

using namespace disputelab;
namespace fs = std::filesystem;
using nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

int failures = 0;

void report(int n, std::string_view verdict, const std::string& detail) {
  if (verdict == "FAIL") ++failures;
  std::cout << "criterion " << n << ": " << verdict << "  " << detail << std::endl;
}

void report(int n, bool pass, const std::string& detail) {
  report(n, std::string_view(pass ? "PASS" : "FAIL"), detail);
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v, int digits = 3) {
  std::ostringstream s;
  s.setf(std::ios::fixed);
  s.precision(digits);
  s << v;
  return s.str();
}

std::string sci(double v) {
  std::ostringstream s;
  s.setf(std::ios::scientific);
  s.precision(1);
  s << v;
  return s.str();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "disputelab");
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  if (code != 0) std::cerr << err.str();
  return code;
}

// --- 1 --------------------------------------------------------------------

void gradient_checks() {
  const auto t0 = Clock::now();
  double worst = 0;
  std::string where;
  for (const auto& c : oracle::op_gradient_cases()) {
    const auto r = oracle::check_gradients(c.fn, c.inputs);
    if (r.max_rel_error > worst) {
      worst = r.max_rel_error;
      where = c.name + " " + r.worst;
    }
  }
  const auto s = oracle::tiny_setup();
  for (auto arch : {Architecture::Averaged, Architecture::Sequential, Architecture::Hierarchical}) {
    for (bool edits : {false, true}) {
      ModelConfig mc;
      mc.architecture = arch;
      mc.hidden = 3;
      mc.attention = 4;
      mc.include_edits = edits;
      NeuralModel model(mc, s.table, 11);
      for (std::size_t k = 0; k < s.conversations.size(); ++k) {
        const auto& c = s.conversations[k];
        const auto r = oracle::check_model_gradients(model, model.prepare(c), c.escalated() ? 1 : 0);
        if (r.max_rel_error > worst) {
          worst = r.max_rel_error;
          where = std::string(to_string(arch)) + " " + r.worst;
        }
      }
    }
  }
  const double secs = seconds_since(t0);
  report(1, worst < 1e-4 && secs < 60,
         "max rel error " + sci(worst) + (where.empty() ? "" : " (" + where + ")") + ", " + fmt(secs, 1) + " s");
}

// --- 2 --------------------------------------------------------------------

void metric_oracles() {
  Rng rng(2024);
  double worst = 0;
  for (int k = 0; k < 1000; ++k) {
    const std::size_t n = 2 + rng.below(49);
    eval::ScoredSet s;
    for (std::size_t i = 0; i < n; ++i) {
      // Coarse scores so ties are common.
      const double score = rng.bernoulli(0.5) ? static_cast<double>(rng.below(5)) / 4 : rng.uniform();
      s.add("x" + std::to_string(i), rng.bernoulli(0.3) ? 1 : 0, score);
    }
    if (s.positives() == 0) s.labels[0] = 1;
    worst = std::max(worst, std::abs(eval::pr_auc(s) - oracle::pr_auc(s.scores, s.labels)));
    worst = std::max(worst, std::abs(eval::break_even_f1(s) - oracle::break_even_f1(s.scores, s.labels)));
  }
  eval::ScoredSet perfect;
  for (int i = 0; i < 40; ++i) perfect.add(std::to_string(i), i < 7 ? 1 : 0, 1.0 - i / 40.0);
  const double perfect_auc = eval::pr_auc(perfect);

  std::vector<int> train_labels(1000, 0), test_labels(300, 0);
  std::vector<std::string> ids(300);
  for (std::size_t i = 0; i < train_labels.size(); i += 10) train_labels[i] = 1;
  for (std::size_t i = 0; i < test_labels.size(); ++i) {
    ids[i] = std::to_string(i);
    test_labels[i] = i % 10 == 3 ? 1 : 0;
  }
  double total = 0;
  for (std::uint64_t seed = 0; seed < 1000; ++seed)
    total += eval::pr_auc(eval::random_baseline(train_labels, ids, test_labels, seed));
  const double random_auc = total / 1000;
  report(2, worst <= 1e-9 && perfect_auc == 1.0 && std::abs(random_auc - 0.1) <= 0.02,
         "max oracle gap " + sci(worst) + ", perfect " + fmt(perfect_auc) + ", random " + fmt(random_auc) +
             " at prevalence 0.100");
}

// --- 3 --------------------------------------------------------------------

void aggregation() {
  const auto t0 = Clock::now();
  FeatureMatrix fm{"c", {"x"}, Matrix(3, 1)};
  fm.values.data = {0, 1, 2};
  const auto a = aggregate(fm);
  bool ok = a.gradient[0] == 2.0 && a.mean[0] == 1.0;
  Rng rng(3);
  double worst = 0;
  for (int k = 0; k < 1000; ++k) {
    std::vector<double> ys(1 + rng.below(30));
    for (double& y : ys) y = rng.normal();
    std::vector<double> rev(ys.rbegin(), ys.rend());
    worst = std::max(worst, std::abs(line_slope(rev) + line_slope(ys)));
    worst = std::max(worst, std::abs(line_slope(ys) - oracle::slope(ys)));
    const std::vector<double> flat(ys.size(), ys[0]);
    ok = ok && line_slope(flat) == 0.0;
  }
  ok = ok && worst < 1e-9;
  const double ms = seconds_since(t0) * 1000;
  report(3, ok && ms < 1000,
         "slope([0,1,2]) " + fmt(a.gradient[0], 1) + ", mean " + fmt(a.mean[0], 1) + ", max reversal/oracle gap " +
             sci(worst) + ", " + fmt(ms, 1) + " ms");
}

// --- 4 and 5 --------------------------------------------------------------

struct SeedRun {
  std::map<std::string, double> auc;
  std::unique_ptr<NeuralModel> early_model;
  std::vector<Conversation> test;
};

eval::ScoredSet score_neural(const NeuralModel& m, const std::vector<Conversation>& cs) {
  eval::ScoredSet s;
  for (const auto& c : cs) s.add(c.id, c.escalated() ? 1 : 0, m.predict(c));
  return s;
}

SeedRun synthetic_seed(std::uint64_t seed, const Lexicons& lex, bool keep_model) {
  synth::SynthConfig sc;
  sc.conversations = 2000;
  sc.seed = seed;
  const auto corpus = synth::generate_corpus(sc);
  const auto table = std::make_shared<const EmbeddingTable>(synth::embeddings(sc));
  const auto parts = split(corpus, SplitSpec::from_fractions(0.6, 0.2, mix_seed(seed, 1)));
  SeedRun run;

  for (bool gradients : {false, true}) {
    const auto tr = build_design(parts.train, {FeatureSet::Collaboration}, gradients, lex);
    const auto va = build_design(parts.validation, {FeatureSet::Collaboration}, gradients, lex);
    const auto te = build_design(parts.test, {FeatureSet::Collaboration}, gradients, lex);
    const auto g = linear::grid_search(tr.x, tr.labels, va.x, va.labels, tr.names);
    const auto p = linear::predict_proba(g.best, te.x);
    eval::ScoredSet s;
    for (std::size_t i = 0; i < p.size(); ++i) s.add(te.ids[i], te.labels[i], p[i]);
    run.auc[gradients ? "collaboration+gradients" : "collaboration"] = eval::pr_auc(s);
  }

  TrainConfig tc;
  tc.max_epochs = 40;
  tc.patience = 8;
  tc.adam.lr = 0.003;
  for (const std::string name :
       {"averaged", "sequential", "hierarchical", "hierarchical+edits", "hierarchical+stripped"}) {
    ModelConfig base;
    base.hidden = 8;
    const auto v = cli::neural_variant(name, base);
    const NeuralModel init(v.model, table, mix_seed(seed, 2));
    auto r = train(init, parts.train, parts.validation, tc, mix_seed(seed, 3));
    run.auc[name] = eval::pr_auc(score_neural(r.model, parts.test));
    if (keep_model && name == "hierarchical+edits") run.early_model = std::make_unique<NeuralModel>(r.model);
  }
  if (keep_model) run.test = parts.test;
  return run;
}

void synthetic_end_to_end() {
  const auto t0 = Clock::now();
  const auto lex = Lexicons::load(default_lexicon_dir());
  std::map<std::string, double> mean;
  std::unique_ptr<NeuralModel> early_model;
  std::vector<Conversation> early_test;
  const int seeds = 5;
  for (int s = 1; s <= seeds; ++s) {
    auto run = synthetic_seed(static_cast<std::uint64_t>(s), lex, s == 1);
    std::cout << "  seed " << s;
    for (const auto& [k, v] : run.auc) {
      mean[k] += v / seeds;
      std::cout << " " << k << "=" << fmt(v);
    }
    std::cout << std::endl;
    if (run.early_model) {
      early_model = std::move(run.early_model);
      early_test = std::move(run.test);
    }
  }
  const double secs = seconds_since(t0);
  const double gain = mean["collaboration+gradients"] - mean["collaboration"];
  const bool a = gain >= 0.03;
  const bool b = mean["hierarchical"] >= mean["sequential"] && mean["sequential"] >= mean["averaged"];
  const bool c = mean["hierarchical+edits"] > mean["hierarchical+stripped"];
  report(4, a && b && c && secs < 1800,
         "(a) gradients " + fmt(mean["collaboration+gradients"]) + " vs means " + fmt(mean["collaboration"]) +
             (a ? " ok" : " short") + "; (b) hierarchical " + fmt(mean["hierarchical"]) + ", sequential " +
             fmt(mean["sequential"]) + ", averaged " + fmt(mean["averaged"]) + (b ? " ok" : " out of order") +
             "; (c) <EDIT> " + fmt(mean["hierarchical+edits"]) + " vs stripped " +
             fmt(mean["hierarchical+stripped"]) + (c ? " ok" : " not better") + "; " + fmt(secs / 60, 1) + " min");

  const auto t1 = Clock::now();
  const auto curve = eval::early_estimation(*early_model, early_test, 30, 5);
  const auto& p2 = curve.points[1];
  const auto& p5 = curve.points[4];
  const auto& p10 = curve.points[9];
  std::cout << "  early estimation (hierarchical+edits, seed 1, " << curve.conversations << " conversations):";
  for (const auto& p : curve.points) std::cout << " " << fmt(p.fraction, 1) << "=" << fmt(p.pr_auc) << "/" << fmt(p.mean_uncertainty, 4);
  std::cout << std::endl;
  const bool rise = p10.pr_auc - p5.pr_auc >= 0.05;
  const bool calm = p10.mean_uncertainty <= p2.mean_uncertainty;
  report(5, rise && calm,
         "PR-AUC " + fmt(p5.pr_auc) + " at 0.5 -> " + fmt(p10.pr_auc) + " at 1.0" + (rise ? " ok" : " short") +
             "; uncertainty " + fmt(p2.mean_uncertainty, 4) + " at 0.2 -> " + fmt(p10.mean_uncertainty, 4) +
             " at 1.0" + (calm ? " ok" : " higher") + "; " + fmt(seconds_since(t1), 1) + " s");
}

// --- 6 --------------------------------------------------------------------

void mc_dropout() {
  const auto s = oracle::tiny_setup();
  ModelConfig mc;
  mc.hidden = 3;
  mc.include_edits = true;
  mc.dropout = 0.0;
  const NeuralModel still(mc, s.table, 4);
  bool zero = true;
  for (const auto& c : s.conversations) zero = zero && predict_mc(still, c, 30, 9).uncertainty == 0.0;
  mc.dropout = 0.3;
  const auto noisy = std::make_shared<const NeuralModel>(mc, s.table, 4);
  bool repeat = true;
  for (const auto& c : s.conversations) {
    const auto a = predict_mc(*noisy, c, 30, 9, 1);
    const auto b = predict_mc(*noisy, c, 30, 9, 3);
    repeat = repeat && a.mean == b.mean && a.uncertainty == b.uncertainty && a.uncertainty > 0;
  }
  const auto by_default = predict_mc(*noisy, s.conversations[0]);
  const auto explicit30 = predict_mc(*noisy, s.conversations[0], 30, 0);
  const auto cfg = cli::ExperimentConfig::from_json(json::object(), ".");
  serve::ScoringService svc(noisy);
  const std::string id = json::parse(svc.create_session().body)["session_id"];
  svc.append(id, R"({"author":"A","text":"maybe the source"})");
  const int served = json::parse(svc.score(id).body)["samples"];
  const bool n30 = by_default.mean == explicit30.mean && by_default.uncertainty == explicit30.uncertainty &&
                   cfg.mc_samples == 30 && served == 30;
  report(6, zero && repeat && n30,
         std::string("p=0 std ") + (zero ? "exactly 0" : "nonzero") + "; fixed seed " +
             (repeat ? "bitwise identical" : "differs") + "; default N " + std::to_string(cfg.mc_samples) +
             " (config), " + std::to_string(served) + " (serve)");
}

// --- 7 --------------------------------------------------------------------

std::size_t median_length(std::vector<std::size_t> v) {
  std::sort(v.begin(), v.end());
  return v.empty() ? 0 : v[v.size() / 2];
}

void pipeline_and_filters() {
  const fs::path fixture = fs::path(TEST_DATA_DIR) / "filter_fixture.jsonl";
  const auto tmp = fs::temp_directory_path() / "disputelab_acceptance";
  fs::remove_all(tmp);
  bool same = true;
  for (const std::string run : {"a", "b"}) {
    same = same && run_cli({"ingest", "--set", "paths.corpus=" + fixture.string(), "--set",
                            "paths.output_dir=" + (tmp / run).string()}) == 0;
    same = same && run_cli({"match", "--set", "paths.corpus=" + fixture.string(), "--set",
                            "paths.output_dir=" + (tmp / run).string()}) == 0;
  }
  for (const auto* f : {"ingest_report.csv", "corpus.jsonl", "matched.jsonl", "match_report.csv"})
    same = same && slurp(tmp / "a" / f) == slurp(tmp / "b" / f);
  const std::string rep = slurp(tmp / "a" / "ingest_report.csv");
  const std::map<std::string, int> expected = {{"input", 200},
                                               {"rejected_min_utterances", 40},
                                               {"rejected_max_utterances", 30},
                                               {"rejected_min_tokens", 25},
                                               {"rejected_min_participants", 23},
                                               {"kept", 82}};
  bool counts = true;
  for (const auto& [k, v] : expected) counts = counts && rep.find(k + "," + std::to_string(v) + "\n") != std::string::npos;

  const auto matched = load_corpus(tmp / "a" / "matched.jsonl");
  std::vector<std::size_t> pos, neg;
  for (const auto& c : matched) (c.escalated() ? pos : neg).push_back(c.size());
  const bool medians = !pos.empty() && median_length(pos) == median_length(neg);
  fs::remove_all(tmp);

  synth::SynthConfig sc;
  sc.conversations = 2211;  // 201 escalated, 2010 not
  sc.seed = 7;
  std::vector<Conversation> corpus;
  std::size_t negatives = 0;
  for (auto& c : synth::generate_corpus(sc)) {
    if (!c.escalated() && ++negatives > 1994) continue;
    corpus.push_back(std::move(c));
  }
  const auto s = split(corpus, SplitSpec::from_counts({125, 1411}, {46, 284}, {30, 299}, 7));
  const auto tr = class_counts(s.train), va = class_counts(s.validation), te = class_counts(s.test);
  const bool shape = tr.escalated == 125 && tr.not_escalated == 1411 && va.escalated == 46 &&
                     va.not_escalated == 284 && te.escalated == 30 && te.not_escalated == 299;
  report(7, same && counts && medians && shape,
         std::string("two runs ") + (same ? "byte-identical" : "differ") + "; filter counts " +
             (counts ? "match" : "differ") + "; medians " + std::to_string(median_length(pos)) + "/" +
             std::to_string(median_length(neg)) + "; split " + std::to_string(tr.escalated) + "/" +
             std::to_string(tr.not_escalated) + ", " + std::to_string(va.escalated) + "/" +
             std::to_string(va.not_escalated) + ", " + std::to_string(te.escalated) + "/" +
             std::to_string(te.not_escalated));
}

// --- 8 --------------------------------------------------------------------

void logistic_oracle() {
  Rng rng(8);
  double worst = 0;
  bool monotone = true;
  for (int k = 0; k < 20; ++k) {
    const std::size_t n = 10 + rng.below(91), d = 1 + rng.below(5);
    Matrix x(n, d);
    std::vector<int> y(n);
    std::vector<double> w(d);
    for (double& v : w) v = rng.normal();
    for (std::size_t i = 0; i < n; ++i) {
      double z = 0;
      for (std::size_t j = 0; j < d; ++j) {
        x(i, j) = rng.normal() * (1 + j) + static_cast<double>(j);
        z += w[j] * x(i, j) / (1 + j);
      }
      y[i] = rng.uniform() < 1 / (1 + std::exp(-z)) ? 1 : 0;
    }
    y[0] = 1;
    y[1] = 0;
    const Matrix zx = oracle::zscore(x);
    for (bool l1 : {true, false}) {
      for (double C : {0.1, 1.0, 10.0}) {
        const auto m = linear::fit(x, y, l1 ? linear::Regularization::L1 : linear::Regularization::L2, C);
        const double got = oracle::logistic_objective(zx, y, m.weights, m.bias, l1, C);
        const double ref = oracle::reference_logistic(zx, y, l1, C).objective;
        worst = std::max(worst, got - ref);
      }
    }
    double prev = -1;
    for (double C : {0.1, 1.0, 10.0, 100.0}) {
      const auto m = linear::fit(x, y, linear::Regularization::L1, C);
      double norm = 0;
      for (double v : m.weights) norm += std::abs(v);
      monotone = monotone && norm >= prev - 1e-9;
      prev = norm;
    }
  }
  report(8, worst <= 1e-6 && monotone,
         "max objective excess over reference " + sci(std::max(worst, 0.0)) + "; L1 norm " +
             (monotone ? "monotone" : "not monotone") + " over C");
}

// --- 9 --------------------------------------------------------------------

void released_corpus() {
  const char* env = std::getenv("DISPUTELAB_RELEASED_CONFIG");
  if (!env || !*env) {
    report(9, std::string_view("SKIP"), "set DISPUTELAB_RELEASED_CONFIG to an experiment config for the released corpus");
    return;
  }
  if (run_cli({"pipeline", "-c", env}) != 0) {
    report(9, false, "pipeline failed");
    return;
  }
  const auto cfg = cli::ExperimentConfig::load(fs::path(env));
  std::map<std::string, double> auc;
  std::istringstream rep(slurp(cfg.output_dir / "report.csv"));
  std::string line;
  while (std::getline(rep, line)) {
    if (line.empty() || line[0] == '#' || line.rfind("model,", 0) == 0) continue;
    const auto fields = split(line, ',');
    auc[fields[0]] = std::stod(fields[1]);
  }
  double best_feature = 0;
  for (const auto& m : cli::feature_models()) best_feature = std::max(best_feature, auc[m.name]);
  const double combined = auc["combined+gradients"];
  const bool near = std::abs(combined - 0.281) <= 0.05;
  const bool han = auc.count("hierarchical+edits") && auc["hierarchical+edits"] > best_feature;
  const auto model = json::parse(slurp(cfg.output_dir / "models" / "linear" / "combined+gradients.json"));
  std::map<std::string, double> weight;
  for (std::size_t i = 0; i < model["feature_names"].size(); ++i)
    weight[model["feature_names"][i]] = model["weights"][i];
  const double second = weight["collaboration.pronoun_second:mean"];
  const double hedges = weight["collaboration.hedges:mean"];
  const bool signs = second > 0 && hedges < 0;
  report(9, near && han && signs,
         "combined+gradients " + fmt(combined) + "; hierarchical+edits " + fmt(auc["hierarchical+edits"]) +
             " vs best feature " + fmt(best_feature) + "; 2nd person " + fmt(second) + ", hedges " + fmt(hedges));
}

std::vector<int> selected;  // empty runs everything

void guarded(const std::vector<int>& criteria, void (*check)()) {
  if (!selected.empty() && std::find(selected.begin(), selected.end(), criteria.front()) == selected.end()) return;
  try {
    check();
  } catch (const std::exception& e) {
    for (int n : criteria) report(n, false, std::string("error: ") + e.what());
  }
}

}  // namespace

// Optional arguments pick criteria by number, e.g. `acceptance 7 8`.
int main(int argc, char** argv) {
  for (int i = 1; i < argc; ++i) selected.push_back(std::atoi(argv[i]));
  set_warning_sink([](const std::string&) {});
  const auto t0 = Clock::now();
  guarded({1}, gradient_checks);
  guarded({2}, metric_oracles);
  guarded({3}, aggregation);
  guarded({4, 5}, synthetic_end_to_end);
  guarded({6}, mc_dropout);
  guarded({7}, pipeline_and_filters);
  guarded({8}, logistic_oracle);
  guarded({9}, released_corpus);
  std::cout << "total " << fmt(seconds_since(t0) / 60, 1) << " min, " << failures << " failed" << std::endl;
  return failures == 0 ? 0 : 1;
}
