#include "latreg/metrics.hpp"

#include <algorithm>

#include "latreg/error.hpp"

namespace latreg {

PairwiseErrors pairwise_rre(const std::vector<Rotation>& estimated,
                            const std::vector<Rotation>& truth) {
  if (estimated.size() != truth.size()) {
    throw data_error("pairwise_rre: estimate and truth counts differ (" +
                     std::to_string(estimated.size()) + " vs " +
                     std::to_string(truth.size()) + ")");
  }
  const int n = static_cast<int>(estimated.size());
  if (n < 2) throw data_error("pairwise_rre: need at least 2 views");
  std::vector<Rotation> gauge;
  gauge.reserve(n);
  for (int i = 0; i < n; ++i) gauge.push_back(estimated[i] * truth[i].transpose());
  PairwiseErrors out;
  out.entries.reserve(n * (n - 1) / 2);
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      out.entries.push_back({i, j, relative_angle(gauge[i], gauge[j])});
    }
  }
  return out;
}

double registration_recall(const PairwiseErrors& errors, double threshold) {
  if (!(threshold > 0.0)) throw data_error("registration_recall: threshold must be positive");
  if (errors.entries.empty()) throw data_error("registration_recall: no errors");
  int below = 0;
  for (const auto& e : errors.entries) {
    if (e.theta < threshold) ++below;
  }
  return static_cast<double>(below) / static_cast<double>(errors.entries.size());
}

std::vector<std::pair<double, double>> recall_cdf(const PairwiseErrors& errors) {
  if (errors.entries.empty()) throw data_error("recall_cdf: no errors");
  std::vector<double> thetas;
  thetas.reserve(errors.entries.size());
  for (const auto& e : errors.entries) thetas.push_back(e.theta);
  std::sort(thetas.begin(), thetas.end());
  const double n = static_cast<double>(thetas.size());
  std::vector<std::pair<double, double>> cdf;
  cdf.reserve(thetas.size());
  for (size_t i = 0; i < thetas.size(); ++i) {
    // step function value at and above thetas[i]
    size_t j = i;
    while (j + 1 < thetas.size() && thetas[j + 1] == thetas[i]) ++j;
    cdf.emplace_back(thetas[i], static_cast<double>(j + 1) / n);
    i = j;
  }
  return cdf;
}

}  // namespace latreg
