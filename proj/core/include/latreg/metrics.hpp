#ifndef LATREG_METRICS_HPP
#define LATREG_METRICS_HPP

#include <utility>
#include <vector>

#include "latreg/geom3d.hpp"

namespace latreg {

// Pairwise relative rotation errors over all unordered view pairs.
// Translations are ignored throughout.
struct PairwiseErrors {
  struct Entry {
    int i;
    int j;
    double theta;  // radians, [0, pi]
  };
  std::vector<Entry> entries;  // ordered (i, j), i < j

  int size() const { return static_cast<int>(entries.size()); }
};

// theta_ij = angle(est_i * truth_i^T, est_j * truth_j^T) with both lists in
// the same template-to-view convention. Invariant to composing every
// estimate with one common rotation, which removes the gauge freedom of the
// template's pose.
PairwiseErrors pairwise_rre(const std::vector<Rotation>& estimated,
                            const std::vector<Rotation>& truth);

// Fraction of errors strictly below the threshold (radians).
double registration_recall(const PairwiseErrors& errors, double threshold);

// Cumulative distribution sampled at the sorted error values;
// recall(t) equals the CDF evaluated just below t.
std::vector<std::pair<double, double>> recall_cdf(const PairwiseErrors& errors);

}  // namespace latreg

#endif  // LATREG_METRICS_HPP
