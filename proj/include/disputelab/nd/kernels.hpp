#pragma once

#include "disputelab/common.hpp"

namespace disputelab::nd::kernels {

// C = A B
Matrix matmul(const Matrix& a, const Matrix& b);
// C += A^T B
void matmul_at_b_acc(const Matrix& a, const Matrix& b, Matrix& c);
// C += A B^T
void matmul_a_bt_acc(const Matrix& a, const Matrix& b, Matrix& c);

}  // namespace disputelab::nd::kernels
