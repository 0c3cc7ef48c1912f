#include "gradcases.hpp"

#include <algorithm>
#include <cmath>

#include "disputelab/nd/ops.hpp"

namespace oracle {

using namespace disputelab;
using namespace disputelab::nd;

namespace {

Tensor rt(std::size_t r, std::size_t c, std::uint64_t seed, double scale = 1.0) {
  Rng rng(seed);
  Tensor t(r, c);
  for (double& v : t.data) v = scale * rng.normal();
  return t;
}

Var wsum(Graph& g, Var v, std::uint64_t seed = 99) { return sum(mul(v, g.constant(rt(v.rows(), v.cols(), seed)))); }

using Vars = std::vector<Var>;

}  // namespace

std::vector<GradCase> op_gradient_cases() {
  std::vector<GradCase> c;
  const auto pair32 = std::vector<Tensor>{rt(3, 2, 1), rt(3, 2, 2)};
  const auto single = std::vector<Tensor>{rt(3, 4, 5)};
  c.push_back({"matmul", [](Graph& g, const Vars& x) { return wsum(g, matmul(x[0], x[1])); }, {rt(3, 4, 1), rt(4, 2, 2)}});
  c.push_back({"add", [](Graph& g, const Vars& x) { return wsum(g, add(x[0], x[1])); }, pair32});
  c.push_back({"sub", [](Graph& g, const Vars& x) { return wsum(g, sub(x[0], x[1])); }, pair32});
  c.push_back({"mul", [](Graph& g, const Vars& x) { return wsum(g, mul(x[0], x[1])); }, pair32});
  c.push_back({"add_row", [](Graph& g, const Vars& x) { return wsum(g, add_row(x[0], x[1])); }, {rt(4, 3, 1), rt(1, 3, 2)}});
  c.push_back({"scale", [](Graph& g, const Vars& x) { return wsum(g, scale(x[0], -2.5)); }, single});
  c.push_back({"tanh", [](Graph& g, const Vars& x) { return wsum(g, nd::tanh(x[0])); }, single});
  c.push_back({"sigmoid", [](Graph& g, const Vars& x) { return wsum(g, sigmoid(x[0])); }, single});
  c.push_back({"transpose", [](Graph& g, const Vars& x) { return wsum(g, transpose(x[0])); }, single});
  c.push_back({"softmax_column", [](Graph& g, const Vars& x) { return wsum(g, softmax(x[0])); }, {rt(5, 1, 3)}});
  c.push_back({"softmax_row", [](Graph& g, const Vars& x) { return wsum(g, softmax(x[0])); }, {rt(1, 6, 4)}});
  c.push_back({"softmax_masked",
               [](Graph& g, const Vars& x) { return wsum(g, softmax(x[0], {true, false, true, true, false})); },
               {rt(5, 1, 5)}});
  const auto three = std::vector<Tensor>{rt(3, 2, 1), rt(3, 3, 2), rt(2, 2, 3)};
  c.push_back({"concat_cols", [](Graph& g, const Vars& x) { return wsum(g, concat_cols({x[0], x[1], x[0]})); }, three});
  c.push_back({"concat_rows", [](Graph& g, const Vars& x) { return wsum(g, concat_rows({x[0], x[2]})); }, three});
  c.push_back({"slice_rows", [](Graph& g, const Vars& x) { return wsum(g, slice_rows(x[1], 1, 3)); }, three});
  c.push_back({"slice_cols", [](Graph& g, const Vars& x) { return wsum(g, slice_cols(x[1], 0, 2)); }, three});
  c.push_back({"mean_rows", [](Graph& g, const Vars& x) { return wsum(g, mean_rows(x[0])); }, {rt(4, 3, 7)}});
  c.push_back({"mean_rows_subset", [](Graph& g, const Vars& x) { return wsum(g, mean_rows(x[0], {0, 2})); }, {rt(4, 3, 7)}});
  c.push_back({"mean", [](Graph&, const Vars& x) { return mean(x[0]); }, {rt(4, 3, 7)}});
  c.push_back({"sum", [](Graph&, const Vars& x) { return sum(x[0]); }, {rt(4, 3, 7)}});
  const Tensor table = rt(5, 3, 11);
  c.push_back({"lookup",
               [table](Graph& g, const Vars& x) { return wsum(g, lookup(g, table, x[0], {0, -1, 4, -2, -1, 2})); },
               {rt(2, 3, 12)}});
  c.push_back({"dropout",
               [](Graph& g, const Vars& x) {
                 Rng rng(5);
                 return wsum(g, dropout(x[0], 0.4, DropoutMode::Train, rng));
               },
               {rt(4, 5, 13)}});
  const std::size_t T = 4, d = 3, h = 2;
  const std::vector<Tensor> lstm_in = {rt(T, d, 1), rt(d, 4 * h, 2, 0.5), rt(h, 4 * h, 3, 0.5), rt(1, 4 * h, 4, 0.5)};
  c.push_back({"lstm_forward", [](Graph& g, const Vars& x) { return wsum(g, lstm(x[0], x[1], x[2], x[3], false)); }, lstm_in});
  c.push_back({"lstm_reverse", [](Graph& g, const Vars& x) { return wsum(g, lstm(x[0], x[1], x[2], x[3], true)); }, lstm_in});
  std::vector<Tensor> bi_in = {rt(3, 2, 1)};
  for (std::uint64_t s = 0; s < 2; ++s) {
    bi_in.push_back(rt(2, 8, 20 + s, 0.5));
    bi_in.push_back(rt(2, 8, 30 + s, 0.5));
    bi_in.push_back(rt(1, 8, 40 + s, 0.5));
  }
  c.push_back({"bilstm",
               [](Graph& g, const Vars& x) { return wsum(g, bilstm(x[0], {x[1], x[2], x[3]}, {x[4], x[5], x[6]})); },
               bi_in});
  for (double gamma : {0.0, 1.0, 2.0}) {
    c.push_back({"focal_loss_gamma" + std::to_string(static_cast<int>(gamma)),
                 [gamma](Graph&, const Vars& x) { return focal_loss(sigmoid(x[0]), {1, 0, 0, 1, 0}, gamma, 0.3); },
                 {rt(5, 1, 21)}});
  }
  c.push_back({"attention_block",
               [](Graph& g, const Vars& x) {
                 Var s = matmul(nd::tanh(add_row(matmul(x[0], x[1]), x[2])), x[3]);
                 Var a = softmax(s, {true, true, false, true});
                 return wsum(g, matmul(transpose(a), x[0]));
               },
               {rt(4, 3, 1), rt(3, 3, 2), rt(1, 3, 3), rt(3, 1, 4)}});
  return c;
}

GradCheck check_model_gradients(NeuralModel& model, const PreparedInput& in, int label, double gamma, double alpha,
                                double h, double floor) {
  Rng unused(0);
  const auto analytic = example_gradients(model, in, label, gamma, alpha, DropoutMode::Eval, unused).grads;
  const auto loss = [&] {
    Graph g(false);
    Rng rng(0);
    Var p = model.forward(g, in, DropoutMode::Eval, rng);
    const double pt = label == 1 ? p.value()(0, 0) : 1 - p.value()(0, 0);
    const double at = label == 1 ? alpha : 1 - alpha;
    return -at * std::pow(1 - pt, gamma) * std::log(pt);
  };
  GradCheck result;
  for (auto& [name, tensor] : model.params()) {
    const auto it = analytic.find(name);
    for (std::size_t i = 0; i < tensor.data.size(); ++i) {
      const double orig = tensor.data[i];
      tensor.data[i] = orig + h;
      const double up = loss();
      tensor.data[i] = orig - h;
      const double down = loss();
      tensor.data[i] = orig;
      const double numeric = (up - down) / (2 * h);
      const double a = it == analytic.end() ? 0.0 : it->second.data[i];
      const double rel = std::abs(a - numeric) / std::max(std::abs(a) + std::abs(numeric), floor);
      if (rel > result.max_rel_error) {
        result.max_rel_error = rel;
        result.worst = name + "[" + std::to_string(i) + "]";
      }
    }
  }
  return result;
}

TinySetup tiny_setup(std::uint64_t seed) {
  const std::vector<std::string> words = {"maybe", "clearly", "revert", "source", "page", "the", "you", "agree"};
  Rng rng(seed);
  Tensor vectors(words.size(), 4);
  for (double& v : vectors.data) v = rng.normal() * 0.5;
  std::vector<double> unk(4);
  for (double& v : unk) v = rng.uniform(-0.05, 0.05);
  TinySetup s;
  s.table = std::make_shared<const EmbeddingTable>(words, vectors, unk);
  for (int ci = 0; ci < 3; ++ci) {
    Conversation c;
    c.id = "tiny" + std::to_string(ci);
    c.label = ci == 0 ? Label::Escalated : Label::NotEscalated;
    const std::vector<std::string> texts = {"maybe the source", "you clearly unknownword revert",
                                            "agree", "rv the page", "the page is fine maybe clearly"};
    Timestamp t = 0;
    for (std::size_t k = 0; k < texts.size(); ++k) {
      Utterance u;
      u.id = c.id + "-" + std::to_string(k);
      u.author = k % 2 ? "B" : "A";
      u.timestamp = t += 10;
      u.text = texts[(k + static_cast<std::size_t>(ci)) % texts.size()];
      u.kind = k == 3 ? UtteranceKind::EditSummary : UtteranceKind::TalkPost;
      c.utterances.push_back(u);
    }
    s.conversations.push_back(c);
  }
  return s;
}

}  // namespace oracle
