#pragma once

#include <cstdint>
#include <vector>

#include "disputelab/nd/graph.hpp"

namespace disputelab::nd {

// Shape mismatches throw disputelab::Error naming the op.

Var matmul(Var a, Var b);
Var add(Var a, Var b);
// a [n x m] + row [1 x m], broadcast over rows.
Var add_row(Var a, Var row);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double k);
Var tanh(Var a);
Var sigmoid(Var a);
Var transpose(Var a);

// Softmax over all entries of a row or column vector. Entries with
// mask[i] == false behave as a score of -inf and get weight exactly 0.
// An empty mask means nothing is masked.
Var softmax(Var a, const std::vector<bool>& mask = {});

Var concat_cols(const std::vector<Var>& parts);
Var concat_rows(const std::vector<Var>& parts);
Var slice_rows(Var a, std::size_t begin, std::size_t end);
Var slice_cols(Var a, std::size_t begin, std::size_t end);
// Column means over the selected rows ([1 x m]); `rows` empty means all rows.
Var mean_rows(Var a, const std::vector<std::size_t>& rows = {});
// Mean of every entry, [1 x 1].
Var mean(Var a);
Var sum(Var a);

// Builds a [n x d] matrix of embedding rows. Non-negative ids index the
// frozen `table`; id -k-1 selects row k of the trainable `special` matrix.
Var lookup(Graph& g, const Tensor& table, Var special, const std::vector<std::int64_t>& ids);

enum class DropoutMode { Train, Eval, MonteCarlo };

// Inverted dropout. Identity in Eval mode or when p == 0.
Var dropout(Var a, double p, DropoutMode mode, Rng& rng);

// Single-direction LSTM over the rows of x [T x d]. Gate column order in
// w [d x 4h], u [h x 4h], b [1 x 4h] is input, forget, cell, output.
// Returns hidden states [T x h] indexed by input position, also when
// `reverse` runs the recurrence from the last row to the first.
Var lstm(Var x, Var w, Var u, Var b, bool reverse);

struct LstmParams {
  Var w, u, b;
};
// Forward and reverse states concatenated per step: [T x 2h].
Var bilstm(Var x, const LstmParams& forward, const LstmParams& backward);

// Mean focal loss of probabilities p [n x 1] against labels. Probabilities
// outside (0,1) are clamped to [1e-7, 1-1e-7] with a warning.
Var focal_loss(Var p, const std::vector<int>& labels, double gamma, double alpha);

}  // namespace disputelab::nd
