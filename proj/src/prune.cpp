// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <numeric>

#include "mpolstm/cells.hpp"
#include "mpolstm/error.hpp"

namespace mpolstm {

namespace {

std::vector<std::uint8_t> prune_matrix(std::span<const double> w, double sparsity) {
  const std::size_t n = w.size();
  const auto drop = static_cast<std::size_t>(std::floor(sparsity * static_cast<double>(n)));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return std::fabs(w[a]) < std::fabs(w[b]); });
  std::vector<std::uint8_t> keep(n, 1);
  for (std::size_t k = 0; k < drop; ++k) keep[order[k]] = 0;
  return keep;
}

void mask_values(std::span<double> w, const std::vector<std::uint8_t>& keep) {
  for (std::size_t e = 0; e < w.size(); ++e)
    if (!keep[e]) w[e] = 0.0;
}

}  // namespace

std::size_t PruneMask::kept() const {
  return static_cast<std::size_t>(std::count(keep_w.begin(), keep_w.end(), 1) +
                                  std::count(keep_h.begin(), keep_h.end(), 1));
}

PruneMask magnitude_prune(const LstmParams& p, double sparsity) {
  if (!(sparsity >= 0.0 && sparsity < 1.0)) throw ExtentError("sparsity must lie in [0, 1)");
  p.validate();
  return {prune_matrix(p.w_x.data(), sparsity), prune_matrix(p.w_h.data(), sparsity), sparsity};
}

void apply_mask_in_place(LstmParams& p, const PruneMask& m) {
  if (m.keep_w.size() != p.w_x.size() || m.keep_h.size() != p.w_h.size()) {
    throw ExtentError("prune mask does not match parameter extents");
  }
  mask_values(p.w_x.data(), m.keep_w);
  mask_values(p.w_h.data(), m.keep_h);
}

LstmParams apply_mask(const LstmParams& p, const PruneMask& m) {
  LstmParams out = p;
  apply_mask_in_place(out, m);
  return out;
}

}  // namespace mpolstm
