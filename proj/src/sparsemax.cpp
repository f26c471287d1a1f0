#include "fewrec/sparsemax.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fewrec/errors.hpp"

namespace fewrec {

namespace {

// Threshold tau such that sum_i max(z_i - tau, 0) = 1.
double simplex_threshold(const std::vector<double>& z) {
    std::vector<double> sorted(z);
    std::sort(sorted.begin(), sorted.end(), std::greater<double>());
    double cumsum = 0.0;
    int k_support = 0;
    double cumsum_at_k = 0.0;
    for (int k = 1; k <= static_cast<int>(sorted.size()); ++k) {
        cumsum += sorted[k - 1];
        if (1.0 + k * sorted[k - 1] > cumsum) {
            k_support = k;
            cumsum_at_k = cumsum;
        }
    }
    return (cumsum_at_k - 1.0) / k_support;
}

}  // namespace

std::vector<double> sparsemax(const std::vector<double>& z) {
    if (z.empty()) {
        throw ConfigError("sparsemax: empty input vector");
    }
    for (double v : z) {
        if (!std::isfinite(v)) {
            throw NumericError("sparsemax: non-finite input entry");
        }
    }
    // Subtracting the max keeps the operator exactly shift invariant whenever
    // the shifted inputs are exactly representable.
    double zmax = *std::max_element(z.begin(), z.end());
    std::vector<double> centered(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) centered[i] = z[i] - zmax;
    double tau = simplex_threshold(centered);
    std::vector<double> out(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) {
        out[i] = std::max(centered[i] - tau, 0.0);
    }
    return out;
}

std::vector<double> sparsemax_jvp(const std::vector<double>& z,
                                  const std::vector<double>& upstream) {
    if (z.size() != upstream.size()) {
        throw ConfigError("sparsemax_jvp: size mismatch");
    }
    std::vector<double> p = sparsemax(z);
    std::size_t support = 0;
    double sum_on_support = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] > 0.0) {
            ++support;
            sum_on_support += upstream[i];
        }
    }
    std::vector<double> out(z.size(), 0.0);
    if (support == 0) return out;  // unreachable: sparsemax output sums to 1
    double mean = sum_on_support / static_cast<double>(support);
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] > 0.0) out[i] = upstream[i] - mean;
    }
    return out;
}

}  // namespace fewrec
