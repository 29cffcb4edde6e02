// Tensor container semantics, RNG reproducibility, and forward behaviour of
// every op pinned against independent reference implementations.
#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <set>
#include <vector>

#include "hatsc/errors.hpp"
#include "hatsc/ops.hpp"
#include "hatsc/rng.hpp"
#include "hatsc/tensor.hpp"
#include "oracles.hpp"

using namespace hatsc;

TEST_CASE("shape helpers") {
  CHECK(shape_numel({}) == 1);
  CHECK(shape_numel({3}) == 3);
  CHECK(shape_numel({2, 3, 4}) == 24);
  CHECK(shape_str({2, 3}) == "(2,3)");
  CHECK(shape_str({}) == "()");
}

TEST_CASE("tensor construction and handle semantics") {
  Tensor a({2, 3}, 1.5f);
  CHECK(a.rank() == 2);
  CHECK(a.size() == 6);
  CHECK(a.data()[5] == 1.5f);

  Tensor b({2, 2}, {1.0f, 2.0f, 3.0f, 4.0f});
  CHECK(b.values() == std::vector<float>{1.0f, 2.0f, 3.0f, 4.0f});
  CHECK_THROWS_AS(Tensor({2, 2}, {1.0f, 2.0f}), UsageError);

  // Copies are views of the same storage.
  Tensor c = b;
  c.data()[0] = 9.0f;
  CHECK(b.data()[0] == 9.0f);
  CHECK(b.storage_id() == c.storage_id());

  Tensor s = Tensor::scalar(7.0f);
  CHECK(s.rank() == 0);
  CHECK(s.item() == 7.0f);
  CHECK_THROWS_AS(b.item(), UsageError);
}

TEST_CASE("gradient buffer lifecycle") {
  Tensor a({3}, {1.0f, 2.0f, 3.0f});
  CHECK_FALSE(a.has_grad());
  CHECK(a.grad_values() == std::vector<float>{0.0f, 0.0f, 0.0f});
  std::vector<float> g{1.0f, 1.0f, 1.0f};
  a.accumulate_grad(g.data(), 3);
  a.accumulate_grad(g.data(), 3);
  CHECK(a.grad_values() == std::vector<float>{2.0f, 2.0f, 2.0f});
  a.zero_grad();
  CHECK(a.grad_values() == std::vector<float>{0.0f, 0.0f, 0.0f});
}

TEST_CASE("all_finite") {
  Tensor a({2}, {1.0f, 2.0f});
  CHECK(a.all_finite());
  a.data()[1] = std::numeric_limits<float>::quiet_NaN();
  CHECK_FALSE(a.all_finite());
  a.data()[1] = std::numeric_limits<float>::infinity();
  CHECK_FALSE(a.all_finite());
}

TEST_CASE("rng reference sequence") {
  // First outputs of the splitmix64 reference for seeds 0 and 42.
  Rng r0(0);
  CHECK(r0.next_u64() == 0xe220a8397b1dcdafull);
  CHECK(r0.next_u64() == 0x6e789e6aa1b965f4ull);
  CHECK(r0.next_u64() == 0x06c45d188009454full);
  Rng r42(42);
  CHECK(r42.next_u64() == 0xbdd732262feb6e95ull);
  CHECK(r42.uniform() == doctest::Approx(0.1599103928769201).epsilon(1e-9));
}

TEST_CASE("rng determinism and state round trip") {
  Rng a(123), b(123);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

  const uint64_t snap = a.state();
  std::vector<uint64_t> first;
  for (int i = 0; i < 10; ++i) first.push_back(a.next_u64());
  a.set_state(snap);
  for (int i = 0; i < 10; ++i) CHECK(a.next_u64() == first[static_cast<size_t>(i)]);
}

TEST_CASE("rng uniform and below stay in range") {
  Rng r(7);
  for (int i = 0; i < 10000; ++i) {
    const double u = r.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
  std::set<uint64_t> seen;
  for (int i = 0; i < 10000; ++i) {
    const uint64_t v = r.below(13);
    CHECK(v < 13);
    seen.insert(v);
  }
  CHECK(seen.size() == 13);  // every bucket reached
}

TEST_CASE("rng normal moments") {
  Rng r(99);
  const int n = 200000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double v = r.normal();
    sum += v;
    sq += v * v;
  }
  const double mean = sum / n;
  const double var = sq / n - mean * mean;
  CHECK(std::abs(mean) < 0.01);
  CHECK(std::abs(var - 1.0) < 0.02);
}

TEST_CASE("rng derived streams differ") {
  Rng a = Rng::derive(5, 0);
  Rng b = Rng::derive(5, 1);
  Rng c = Rng::derive(6, 0);
  const uint64_t va = a.next_u64(), vb = b.next_u64(), vc = c.next_u64();
  CHECK(va != vb);
  CHECK(va != vc);
  CHECK(vb != vc);
  Rng a2 = Rng::derive(5, 0);
  CHECK(a2.next_u64() == va);
}

TEST_CASE("add and broadcast add") {
  TensorD a({2, 3}, {1, 2, 3, 4, 5, 6});
  TensorD b({2, 3}, {10, 20, 30, 40, 50, 60});
  CHECK(add(a, b).values() == std::vector<double>{11, 22, 33, 44, 55, 66});

  TensorD bias({3}, {100, 200, 300});
  CHECK(add(a, bias).values() == std::vector<double>{101, 202, 303, 104, 205, 306});

  TensorD bad({2}, {1, 2});
  CHECK_THROWS_AS(add(a, bad), UsageError);
}

TEST_CASE("mul and scale") {
  TensorD a({4}, {1, -2, 3, -4});
  TensorD b({4}, {2, 2, -1, 0});
  CHECK(mul(a, b).values() == std::vector<double>{2, -4, -3, 0});
  CHECK_THROWS_AS(mul(a, TensorD({2}, {1, 2})), UsageError);
  CHECK(scale(a, 0.5).values() == std::vector<double>{0.5, -1, 1.5, -2});
}

TEST_CASE("matmul matches the triple-loop reference") {
  Rng rng(2024);
  auto run = [&](Shape sa, Shape sb) {
    TensorD a = oracles::random_tensor(sa, rng);
    TensorD b = oracles::random_tensor(sb, rng);
    TensorD c = matmul(a, b);
    std::vector<double> ref = oracles::matmul_ref(a.values(), sa, b.values(), sb);
    REQUIRE(c.size() == static_cast<int64_t>(ref.size()));
    for (int64_t i = 0; i < c.size(); ++i) {
      CHECK(c.data()[i] == doctest::Approx(ref[static_cast<size_t>(i)]).epsilon(1e-12));
    }
  };
  run({4, 5}, {5, 6});                 // plain 2-D
  run({2, 3, 4, 5}, {2, 3, 5, 6});     // equal batch
  run({3, 4, 5}, {5, 6});              // shared right operand
  run({4, 5}, {3, 5, 6});              // shared left operand
  run({1, 7}, {7, 1});                 // degenerate dims

  CHECK_THROWS_AS(matmul(TensorD({2, 3}), TensorD({4, 5})), UsageError);
  CHECK_THROWS_AS(matmul(TensorD({3}), TensorD({3, 2})), UsageError);
  CHECK_THROWS_AS(matmul(TensorD({2, 3, 4}), TensorD({3, 4, 2})), UsageError);
}

TEST_CASE("matmul float route agrees with double route") {
  Rng rng(11);
  Tensor a({8, 16});
  Tensor b({16, 12});
  TensorD ad({8, 16});
  TensorD bd({16, 12});
  for (int64_t i = 0; i < a.size(); ++i) {
    const double v = rng.uniform(-1.0, 1.0);
    a.data()[i] = static_cast<float>(v);
    ad.data()[i] = v;
  }
  for (int64_t i = 0; i < b.size(); ++i) {
    const double v = rng.uniform(-1.0, 1.0);
    b.data()[i] = static_cast<float>(v);
    bd.data()[i] = v;
  }
  Tensor c = matmul(a, b);
  TensorD cd = matmul(ad, bd);
  for (int64_t i = 0; i < c.size(); ++i) {
    CHECK(oracles::rel_diff(c.data()[i], cd.data()[i]) < 1e-5);
  }
}

TEST_CASE("transpose") {
  TensorD a({2, 3}, {1, 2, 3, 4, 5, 6});
  TensorD t = transpose(a, 0, 1);
  CHECK(t.shape() == Shape{3, 2});
  CHECK(t.values() == std::vector<double>{1, 4, 2, 5, 3, 6});

  // Swapping twice restores the original, for any axis pair.
  Rng rng(3);
  TensorD x = oracles::random_tensor({2, 3, 4, 5}, rng);
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) {
      TensorD back = transpose(transpose(x, i, j), i, j);
      CHECK(back.values() == x.values());
    }
  }

  // Negative axes address from the end.
  TensorD n1 = transpose(x, -2, -1);
  TensorD n2 = transpose(x, 2, 3);
  CHECK(n1.values() == n2.values());

  // Manual index remap for one interior swap.
  TensorD y = transpose(x, 1, 2);
  for (int a0 = 0; a0 < 2; ++a0)
    for (int a1 = 0; a1 < 3; ++a1)
      for (int a2 = 0; a2 < 4; ++a2)
        for (int a3 = 0; a3 < 5; ++a3) {
          const double src = x.data()[((a0 * 3 + a1) * 4 + a2) * 5 + a3];
          const double dst = y.data()[((a0 * 4 + a2) * 3 + a1) * 5 + a3];
          CHECK(src == dst);
        }

  CHECK_THROWS_AS(transpose(a, 0, 2), UsageError);
}

TEST_CASE("reshape preserves row-major order") {
  TensorD a({2, 3}, {1, 2, 3, 4, 5, 6});
  TensorD r = reshape(a, {3, 2});
  CHECK(r.shape() == Shape{3, 2});
  CHECK(r.values() == a.values());
  CHECK_THROWS_AS(reshape(a, {4, 2}), UsageError);
}

TEST_CASE("concat") {
  TensorD a({2, 2}, {1, 2, 3, 4});
  TensorD b({2, 1}, {5, 6});
  TensorD c = concat(std::vector<TensorD>{a, b}, 1);
  CHECK(c.shape() == Shape{2, 3});
  CHECK(c.values() == std::vector<double>{1, 2, 5, 3, 4, 6});

  TensorD d = concat(std::vector<TensorD>{a, a}, 0);
  CHECK(d.shape() == Shape{4, 2});
  CHECK(d.values() == std::vector<double>{1, 2, 3, 4, 1, 2, 3, 4});

  CHECK_THROWS_AS(concat(std::vector<TensorD>{}, 0), UsageError);
  CHECK_THROWS_AS(concat(std::vector<TensorD>{a, b}, 0), UsageError);  // non-axis dims differ
}

TEST_CASE("relu") {
  TensorD a({5}, {-2, -0.5, 0, 0.5, 2});
  CHECK(relu(a).values() == std::vector<double>{0, 0, 0, 0.5, 2});
}

TEST_CASE("softmax matches reference and normalizes") {
  Rng rng(17);
  TensorD x = oracles::random_tensor({3, 7}, rng, -5.0, 5.0);
  TensorD y = softmax(x, -1);
  for (int r = 0; r < 3; ++r) {
    std::vector<double> row(x.values().begin() + r * 7, x.values().begin() + (r + 1) * 7);
    std::vector<double> ref = oracles::softmax_row_ref(row);
    double sum = 0.0;
    for (int j = 0; j < 7; ++j) {
      CHECK(y.data()[r * 7 + j] == doctest::Approx(ref[static_cast<size_t>(j)]).epsilon(1e-12));
      sum += y.data()[r * 7 + j];
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("softmax is shift stable and handles uniform rows") {
  TensorD big({1, 3}, {1000.0, 1000.0, 1000.0});
  TensorD y = softmax(big, 1);
  CHECK(y.all_finite());
  for (int j = 0; j < 3; ++j) CHECK(y.data()[j] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

  TensorD x({1, 4}, {1.0, 2.0, 3.0, 4.0});
  TensorD shifted({1, 4}, {1001.0, 1002.0, 1003.0, 1004.0});
  TensorD y0 = softmax(x, 1);
  TensorD y1 = softmax(shifted, 1);
  for (int j = 0; j < 4; ++j) {
    CHECK(y0.data()[j] == doctest::Approx(y1.data()[j]).epsilon(1e-9));
  }
}

TEST_CASE("softmax over an interior axis") {
  Rng rng(23);
  TensorD x = oracles::random_tensor({2, 3, 4}, rng);
  TensorD y = softmax(x, 1);
  for (int a = 0; a < 2; ++a) {
    for (int c = 0; c < 4; ++c) {
      std::vector<double> lane(3);
      for (int b = 0; b < 3; ++b) lane[static_cast<size_t>(b)] = x.data()[(a * 3 + b) * 4 + c];
      std::vector<double> ref = oracles::softmax_row_ref(lane);
      for (int b = 0; b < 3; ++b) {
        CHECK(y.data()[(a * 3 + b) * 4 + c] ==
              doctest::Approx(ref[static_cast<size_t>(b)]).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("layer_norm normalizes rows") {
  Rng rng(31);
  const int d = 16;
  TensorD x = oracles::random_tensor({4, d}, rng, -3.0, 3.0);
  TensorD gain({d}, 1.0);
  TensorD bias({d}, 0.0);
  TensorD y = layer_norm(x, gain, bias, 1e-6);
  for (int r = 0; r < 4; ++r) {
    double mean = 0.0, var = 0.0;
    for (int j = 0; j < d; ++j) mean += y.data()[r * d + j];
    mean /= d;
    for (int j = 0; j < d; ++j) {
      const double c = y.data()[r * d + j] - mean;
      var += c * c;
    }
    var /= d;
    CHECK(std::abs(mean) < 1e-9);
    CHECK(var == doctest::Approx(1.0).epsilon(1e-4));
  }

  // Affine part applies per feature.
  TensorD g2({d}, 2.0);
  TensorD b2({d}, 0.5);
  TensorD y2 = layer_norm(x, g2, b2, 1e-6);
  for (int64_t i = 0; i < y.size(); ++i) {
    CHECK(y2.data()[i] == doctest::Approx(2.0 * y.data()[i] + 0.5).epsilon(1e-9));
  }

  CHECK_THROWS_AS(layer_norm(x, TensorD({d + 1}, 1.0), bias, 1e-6), UsageError);
}

TEST_CASE("dropout") {
  Rng rng(5);
  TensorD x({100, 100}, 1.0);

  // Identity cases return the same storage untouched.
  TensorD eval_out = dropout(x, 0.5, false, rng);
  CHECK(eval_out.storage_id() == x.storage_id());
  TensorD p0_out = dropout(x, 0.0, true, rng);
  CHECK(p0_out.storage_id() == x.storage_id());

  const uint64_t snap = rng.state();
  TensorD y = dropout(x, 0.3, true, rng);
  int64_t kept = 0;
  for (int64_t i = 0; i < y.size(); ++i) {
    const double v = y.data()[i];
    const bool is_zero = v == 0.0;
    const bool is_scaled = std::abs(v - 1.0 / 0.7) < 1e-12;
    CHECK((is_zero || is_scaled));
    kept += is_scaled;
  }
  // Keep rate concentrates near 1-p.
  CHECK(std::abs(static_cast<double>(kept) / static_cast<double>(y.size()) - 0.7) < 0.02);

  // Same generator state, same mask.
  Rng rng2(0);
  rng2.set_state(snap);
  TensorD y2 = dropout(x, 0.3, true, rng2);
  CHECK(y.values() == y2.values());

  CHECK_THROWS_AS(dropout(x, 1.0, true, rng), UsageError);
  CHECK_THROWS_AS(dropout(x, -0.1, true, rng), UsageError);
}

TEST_CASE("masked_fill") {
  TensorD x({2, 2}, {1, 2, 3, 4});
  TensorD mask({2, 2}, {0, 1, 0, 1});
  TensorD y = masked_fill(x, mask, -1e9);
  CHECK(y.values() == std::vector<double>{1, -1e9, 3, -1e9});
  CHECK_THROWS_AS(masked_fill(x, TensorD({4}, 0.0), 0.0), UsageError);
}

TEST_CASE("embedding_lookup") {
  TensorD table({4, 3}, {0, 1, 2, 10, 11, 12, 20, 21, 22, 30, 31, 32});
  TensorD out = embedding_lookup(table, {3, 0, 3});
  CHECK(out.shape() == Shape{3, 3});
  CHECK(out.values() == std::vector<double>{30, 31, 32, 0, 1, 2, 30, 31, 32});
  CHECK_THROWS_AS(embedding_lookup(table, {4}), DataError);
  CHECK_THROWS_AS(embedding_lookup(table, {-1}), DataError);
}

TEST_CASE("reduce_sum") {
  TensorD a({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(reduce_sum(a).item() == doctest::Approx(21.0));
  CHECK(reduce_sum(a).rank() == 0);
}

TEST_CASE("cross_entropy matches the direct formula") {
  Rng rng(41);
  const int n = 6, v = 9;
  TensorD logits = oracles::random_tensor({n, v}, rng, -2.0, 2.0);
  const std::vector<int> targets{1, 0, 8, 0, 4, 2};  // pad id 0 excluded
  for (double eps : {0.0, 0.1, 0.4}) {
    TensorD loss = cross_entropy(logits, targets, eps, 0);
    const double ref = oracles::cross_entropy_ref(logits.values(), n, v, targets, eps, 0);
    CHECK(loss.item() == doctest::Approx(ref).epsilon(1e-12));
  }

  // Without smoothing the loss is exactly the mean -log softmax[target].
  TensorD plain = cross_entropy(logits, targets, 0.0, -1);
  double manual = 0.0;
  for (int r = 0; r < n; ++r) {
    std::vector<double> row(logits.values().begin() + r * v, logits.values().begin() + (r + 1) * v);
    manual += -std::log(oracles::softmax_row_ref(row)[static_cast<size_t>(targets[static_cast<size_t>(r)])]);
  }
  CHECK(plain.item() == doctest::Approx(manual / n).epsilon(1e-12));

  CHECK_THROWS_AS(cross_entropy(logits, {1, 2}, 0.0, 0), UsageError);
  CHECK_THROWS_AS(cross_entropy(logits, std::vector<int>(n, 0), 0.0, 0), UsageError);  // all pad
  CHECK_THROWS_AS(cross_entropy(logits, {1, 0, 9, 0, 4, 2}, 0.0, 0), DataError);
  CHECK_THROWS_AS(cross_entropy(logits, targets, 1.0, 0), UsageError);
}
