#pragma once

namespace stereo::detail {

// C (M x N) = op(A) * op(B) [+ C when accumulate], all row-major dense.
// op(X) is X or X^T per the trans flags; A is physically M x K (or K x M when
// transposed), B is K x N (or N x K).
void gemm(int m, int n, int k, const float* a, bool trans_a, const float* b, bool trans_b,
          float* c, bool accumulate);
void gemm(int m, int n, int k, const double* a, bool trans_a, const double* b, bool trans_b,
          double* c, bool accumulate);

}  // namespace stereo::detail
