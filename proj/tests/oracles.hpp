// Independent reference implementations used to pin down op behaviour.
// These are deliberately written in the most obvious way possible (triple
// loops, direct formulas) and never share code with the library.
#pragma once

#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "hatsc/ops.hpp"
#include "hatsc/rng.hpp"
#include "hatsc/tensor.hpp"

namespace oracles {

inline double rel_diff(double a, double b, double floor = 1e-2) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

// Plain triple-loop matrix product, one 2-D slice at a time.
inline void matmul_2d(const double* a, const double* b, double* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int p = 0; p < k; ++p) acc += a[i * k + p] * b[p * n + j];
      c[i * n + j] = acc;
    }
  }
}

// Batched reference product covering the three supported layouts: equal
// batches, shared rank-2 right operand, shared rank-2 left operand.
inline std::vector<double> matmul_ref(const std::vector<double>& a, const hatsc::Shape& sa,
                                      const std::vector<double>& b, const hatsc::Shape& sb) {
  const int m = sa[sa.size() - 2], k = sa.back();
  const int n = sb.back();
  int64_t batch_a = 1, batch_b = 1;
  for (size_t i = 0; i + 2 < sa.size(); ++i) batch_a *= sa[i];
  for (size_t i = 0; i + 2 < sb.size(); ++i) batch_b *= sb[i];
  const int64_t batch = std::max(batch_a, batch_b);
  std::vector<double> c(static_cast<size_t>(batch) * m * n);
  for (int64_t i = 0; i < batch; ++i) {
    matmul_2d(a.data() + (batch_a == 1 ? 0 : i * m * k), b.data() + (batch_b == 1 ? 0 : i * k * n),
              c.data() + i * m * n, m, k, n);
  }
  return c;
}

inline std::vector<double> softmax_row_ref(const std::vector<double>& row) {
  double mx = row[0];
  for (double v : row) mx = std::max(mx, v);
  std::vector<double> out(row.size());
  double sum = 0.0;
  for (size_t i = 0; i < row.size(); ++i) {
    out[i] = std::exp(row[i] - mx);
    sum += out[i];
  }
  for (double& v : out) v /= sum;
  return out;
}

// Label-smoothed cross entropy, straight from the definition.
inline double cross_entropy_ref(const std::vector<double>& logits, int n, int v,
                                const std::vector<int>& targets, double eps, int pad_id) {
  double total = 0.0;
  int count = 0;
  for (int r = 0; r < n; ++r) {
    if (targets[static_cast<size_t>(r)] == pad_id) continue;
    std::vector<double> row(logits.begin() + r * v, logits.begin() + (r + 1) * v);
    std::vector<double> p = softmax_row_ref(row);
    double loss = (1.0 - eps) * -std::log(p[static_cast<size_t>(targets[static_cast<size_t>(r)])]);
    for (int j = 0; j < v; ++j) loss += eps / v * -std::log(p[static_cast<size_t>(j)]);
    total += loss;
    ++count;
  }
  return total / count;
}

// Well-formed phrase: 1-5 words of 1-8 uppercase letters, single spaces.
inline std::string random_phrase(hatsc::Rng& rng, int max_words = 5, int max_len = 8) {
  const int words = 1 + static_cast<int>(rng.below(static_cast<uint64_t>(max_words)));
  std::string phrase;
  for (int w = 0; w < words; ++w) {
    if (w) phrase.push_back(' ');
    const int len = 1 + static_cast<int>(rng.below(static_cast<uint64_t>(max_len)));
    for (int i = 0; i < len; ++i) {
      phrase.push_back(static_cast<char>('A' + rng.below(26)));
    }
  }
  return phrase;
}

inline hatsc::TensorD random_tensor(hatsc::Shape shape, hatsc::Rng& rng, double lo = -1.0,
                                    double hi = 1.0) {
  hatsc::TensorD t(std::move(shape));
  for (int64_t i = 0; i < t.size(); ++i) t.data()[i] = rng.uniform(lo, hi);
  return t;
}

// Central finite differences in double precision against the analytic
// gradient. `build` must construct the same graph on every call (reseed any
// randomness inside it). Checks every element of every listed leaf.
inline void check_grad(const std::function<hatsc::TensorD()>& build,
                       std::vector<hatsc::TensorD> leaves, double step = 1e-4,
                       double tol = 1e-4) {
  for (hatsc::TensorD& leaf : leaves) {
    leaf.set_requires_grad(true);
    leaf.zero_grad();  // leaves may be shared between successive checks
  }

  hatsc::TensorD loss = build();
  hatsc::backward(loss);

  std::vector<std::vector<double>> analytic;
  for (hatsc::TensorD& leaf : leaves) {
    REQUIRE(leaf.has_grad());
    analytic.push_back(leaf.grad_values());
  }

  hatsc::NoGradGuard ng;
  for (size_t li = 0; li < leaves.size(); ++li) {
    hatsc::TensorD& leaf = leaves[li];
    for (int64_t i = 0; i < leaf.size(); ++i) {
      const double saved = leaf.data()[i];
      leaf.data()[i] = saved + step;
      const double up = build().item();
      leaf.data()[i] = saved - step;
      const double down = build().item();
      leaf.data()[i] = saved;
      const double fd = (up - down) / (2.0 * step);
      const double an = analytic[li][static_cast<size_t>(i)];
      INFO("leaf " << li << " element " << i << " analytic " << an << " fd " << fd);
      CHECK(rel_diff(an, fd) <= tol);
    }
  }
}

}  // namespace oracles
