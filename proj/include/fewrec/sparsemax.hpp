#ifndef FEWREC_SPARSEMAX_HPP
#define FEWREC_SPARSEMAX_HPP

#include <vector>

namespace fewrec {

// Euclidean projection of z onto the probability simplex (sort-and-threshold).
// Output sums to 1, entries >= 0, typically with exact zeros.
std::vector<double> sparsemax(const std::vector<double>& z);

// Jacobian-vector product of sparsemax at z. On the support set K,
// J = I_K - (1/|K|) 1_K 1_K^T; rows/columns off the support are zero.
std::vector<double> sparsemax_jvp(const std::vector<double>& z,
                                  const std::vector<double>& upstream);

}  // namespace fewrec

#endif
