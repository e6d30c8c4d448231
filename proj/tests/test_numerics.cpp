#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdint>
#include <vector>

#include "cclab/gradcheck.hpp"
#include "cclab/kernels.hpp"
#include "cclab/ops.hpp"
#include "cclab/rng.hpp"
#include "cclab/tensor.hpp"
#include "support/reference.hpp"

using cclab::Rng;
using cclab::Tensor;
namespace ops = cclab::ops;
namespace kernels = cclab::kernels;

namespace {

template <class T>
Tensor<T> tensor2d(int rows, int cols, std::vector<T> v) {
  return Tensor<T>::from({rows, cols}, std::move(v));
}

std::vector<std::uint8_t> ones_mask(int n) { return std::vector<std::uint8_t>(n, 1); }

std::vector<double> random_weights(std::size_t n, Rng& rng) {
  std::vector<double> w(n);
  for (auto& v : w) {
    v = rng.normal();
  }
  return w;
}

}  // namespace

TEST_CASE("conv1d identity kernel") {
  auto x = tensor2d<double>(3, 1, {1, 2, 3});
  auto w = Tensor<double>::from({1, 1, 1}, {1});
  auto b = Tensor<double>::from({1}, {0});
  auto y = ops::conv1d(x, w, b, 1, 0);
  REQUIRE(y.rows() == 3);
  CHECK(y.values()[0] == doctest::Approx(1));
  CHECK(y.values()[1] == doctest::Approx(2));
  CHECK(y.values()[2] == doctest::Approx(3));
}

TEST_CASE("conv1d sliding dot products") {
  // k=2, s=2, p=0 over [1,2,3,4] with kernel [1,1]: windows (1+2), (3+4).
  auto x = tensor2d<double>(4, 1, {1, 2, 3, 4});
  auto w = Tensor<double>::from({1, 1, 2}, {1, 1});
  auto b = Tensor<double>::from({1}, {0});
  auto y = ops::conv1d(x, w, b, 2, 0);
  REQUIRE(y.rows() == 2);
  CHECK(y.values()[0] == doctest::Approx(3));
  CHECK(y.values()[1] == doctest::Approx(7));
}

TEST_CASE("conv1d halves length 1000 with k=3 s=2 p=1") {
  CHECK(kernels::conv1d_out_len(1000, 3, 2, 1) == 500);
}

TEST_CASE("conv1d shape errors name the offending dimension") {
  auto x = tensor2d<double>(4, 2, std::vector<double>(8, 0.0));
  auto w = Tensor<double>::from({1, 3, 2}, std::vector<double>(6, 0.0));
  auto b = Tensor<double>::from({1}, {0});
  CHECK_THROWS_WITH_AS(ops::conv1d(x, w, b, 1, 0),
                       doctest::Contains("kernel input channels"), std::runtime_error);
  auto w2 = Tensor<double>::from({1, 2, 7}, std::vector<double>(14, 0.0));
  CHECK_THROWS_AS(ops::conv1d(x, w2, b, 1, 0), std::runtime_error);  // len+2p < k
}

TEST_CASE("conv1d exhaustive output-length and value sweep vs brute-force oracle") {
  Rng rng(77);
  const int cin = 2;
  const int cout = 3;
  for (int len = 1; len <= 64; ++len) {
    for (int k = 1; k <= 7; ++k) {
      for (int s = 1; s <= 3; ++s) {
        for (int p = 0; p <= 3; ++p) {
          if (len + 2 * p < k) {
            continue;
          }
          std::vector<double> xv(static_cast<std::size_t>(len) * cin);
          for (auto& v : xv) {
            v = rng.normal();
          }
          std::vector<double> wv(static_cast<std::size_t>(cout) * cin * k);
          for (auto& v : wv) {
            v = rng.normal();
          }
          std::vector<double> bv(cout);
          for (auto& v : bv) {
            v = rng.normal();
          }
          int ref_len = 0;
          auto want = cclab::ref::conv1d(xv, len, cin, wv, cout, k, bv, s, p, &ref_len);
          auto y = ops::conv1d(tensor2d<double>(len, cin, xv),
                               Tensor<double>::from({cout, cin, k}, wv),
                               Tensor<double>::from({cout}, bv), s, p);
          REQUIRE(y.rows() == ref_len);
          REQUIRE(y.rows() == (len + 2 * p - k) / s + 1);
          auto got = y.values();
          for (std::size_t i = 0; i < want.size(); ++i) {
            REQUIRE(got[i] == doctest::Approx(want[i]).epsilon(1e-9));
          }
        }
      }
    }
  }
}

TEST_CASE("group_norm constant input collapses to zero via eps") {
  auto x = tensor2d<double>(3, 4, std::vector<double>(12, 5.0));
  auto gain = Tensor<double>::full({4}, 1.0);
  auto shift = Tensor<double>::zeros({4});
  auto y = ops::group_norm(x, 2, 1e-5, gain, shift);
  for (double v : y.values()) {
    CHECK(std::fabs(v) < 1e-9);
  }
}

TEST_CASE("group_norm normalizes [1,3] to [-1,1] as eps tends to zero") {
  auto x = tensor2d<double>(1, 2, {1, 3});
  auto gain = Tensor<double>::full({2}, 1.0);
  auto shift = Tensor<double>::zeros({2});
  auto y = ops::group_norm(x, 1, 1e-12, gain, shift);
  CHECK(y.values()[0] == doctest::Approx(-1.0).epsilon(1e-5));
  CHECK(y.values()[1] == doctest::Approx(1.0).epsilon(1e-5));
}

TEST_CASE("group_norm affine collapse: gain 0 shift 5") {
  Rng rng(3);
  auto x = Tensor<double>::randn({5, 8}, rng, 1.0);
  auto gain = Tensor<double>::zeros({8});
  auto shift = Tensor<double>::full({8}, 5.0);
  auto y = ops::group_norm(x, 4, 1e-5, gain, shift);
  for (double v : y.values()) {
    CHECK(v == doctest::Approx(5.0));
  }
}

TEST_CASE("group_norm rejects channels not divisible by groups") {
  auto x = tensor2d<double>(2, 6, std::vector<double>(12, 0.0));
  auto gain = Tensor<double>::full({6}, 1.0);
  auto shift = Tensor<double>::zeros({6});
  CHECK_THROWS_WITH_AS(ops::group_norm(x, 4, 1e-5, gain, shift),
                       doctest::Contains("not divisible"), std::runtime_error);
}

TEST_CASE("group_norm per-group statistics are standardized pre-affine") {
  Rng rng(11);
  const int len = 16;
  const int c = 16;
  const int groups = 4;
  auto x = Tensor<double>::randn({len, c}, rng, 3.0);
  auto gain = Tensor<double>::full({c}, 1.0);
  auto shift = Tensor<double>::zeros({c});
  auto y = ops::group_norm(x, groups, 1e-10, gain, shift);
  const int gc = c / groups;
  for (int r = 0; r < len; ++r) {
    for (int g = 0; g < groups; ++g) {
      double mean = 0.0;
      double var = 0.0;
      for (int j = 0; j < gc; ++j) {
        mean += y.values()[static_cast<std::size_t>(r) * c + g * gc + j];
      }
      mean /= gc;
      for (int j = 0; j < gc; ++j) {
        const double d = y.values()[static_cast<std::size_t>(r) * c + g * gc + j] - mean;
        var += d * d;
      }
      var /= gc;
      CHECK(std::fabs(mean) < 1e-5);
      CHECK(std::fabs(var - 1.0) < 1e-3);
    }
  }
}

TEST_CASE("gelu matches the error-function oracle") {
  auto x = tensor2d<double>(1, 3, {0.0, 1.0, -10.0});
  auto y = ops::gelu(x);
  CHECK(y.values()[0] == doctest::Approx(0.0));
  // oracle: x * Phi(x) with Phi from erf
  const double phi1 = 0.5 * (1.0 + std::erf(1.0 / std::sqrt(2.0)));
  CHECK(y.values()[1] == doctest::Approx(1.0 * phi1).epsilon(1e-12));
  CHECK(y.values()[1] == doctest::Approx(0.8413447).epsilon(1e-6));
  CHECK(std::fabs(y.values()[2]) < 1e-6);
}

TEST_CASE("adaptive_avg_pool even split and identity") {
  auto x = tensor2d<double>(4, 1, {1, 2, 3, 4});
  auto y = ops::adaptive_avg_pool(x, 2);
  CHECK(y.values()[0] == doctest::Approx(1.5));
  CHECK(y.values()[1] == doctest::Approx(3.5));
  auto idy = ops::adaptive_avg_pool(x, 4);
  for (int i = 0; i < 4; ++i) {
    CHECK(idy.values()[i] == doctest::Approx(x.values()[i]));
  }
}

TEST_CASE("adaptive_avg_pool odd split matches the slice-bounds oracle") {
  // len=5 -> 2: slices [0,3) and [2,5) per the floor/ceil rule.
  std::vector<double> xv = {1, 2, 3, 4, 5};
  auto want = cclab::ref::adaptive_avg_pool(xv, 5, 1, 2);
  auto y = ops::adaptive_avg_pool(tensor2d<double>(5, 1, xv), 2);
  CHECK(y.values()[0] == doctest::Approx(want[0]));
  CHECK(y.values()[1] == doctest::Approx(want[1]));
  CHECK(want[0] == doctest::Approx(2.0));
  CHECK(want[1] == doctest::Approx(4.0));
}

TEST_CASE("adaptive_avg_pool random sizes match oracle") {
  Rng rng(5);
  for (int iter = 0; iter < 50; ++iter) {
    const int len = 1 + rng.uniform_int(40);
    const int t = 1 + rng.uniform_int(len);
    const int c = 1 + rng.uniform_int(4);
    std::vector<double> xv(static_cast<std::size_t>(len) * c);
    for (auto& v : xv) {
      v = rng.normal();
    }
    auto want = cclab::ref::adaptive_avg_pool(xv, len, c, t);
    auto y = ops::adaptive_avg_pool(tensor2d<double>(len, c, xv), t);
    for (std::size_t i = 0; i < want.size(); ++i) {
      CHECK(y.values()[i] == doctest::Approx(want[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("adaptive_avg_pool preserves per-channel mean when len is a multiple") {
  Rng rng(6);
  const int len = 24;
  const int c = 3;
  auto x = Tensor<double>::randn({len, c}, rng, 1.0);
  for (int t : {1, 2, 3, 4, 6, 8, 12, 24}) {
    auto y = ops::adaptive_avg_pool(x, t);
    for (int j = 0; j < c; ++j) {
      double mx = 0.0;
      double my = 0.0;
      for (int r = 0; r < len; ++r) {
        mx += x.values()[static_cast<std::size_t>(r) * c + j];
      }
      for (int r = 0; r < t; ++r) {
        my += y.values()[static_cast<std::size_t>(r) * c + j];
      }
      CHECK(mx / len == doctest::Approx(my / t).epsilon(1e-10));
    }
  }
}

TEST_CASE("adaptive_avg_pool range errors") {
  auto x = tensor2d<double>(4, 1, {1, 2, 3, 4});
  CHECK_THROWS_AS(ops::adaptive_avg_pool(x, 0), std::runtime_error);
  CHECK_THROWS_AS(ops::adaptive_avg_pool(x, 5), std::runtime_error);
}

TEST_CASE("cross_entropy uniform logits give ln V") {
  auto logits = Tensor<double>::zeros({1, 8});
  std::vector<int> targets = {3};
  auto mask = ones_mask(1);
  auto res = ops::cross_entropy_logits<double>(logits, targets, mask);
  CHECK(res.loss.item() == doctest::Approx(std::log(8.0)).epsilon(1e-12));
}

TEST_CASE("cross_entropy near-delta logit") {
  std::vector<double> lv(4, 0.0);
  lv[2] = 20.0;
  auto logits = tensor2d<double>(1, 4, lv);
  std::vector<int> targets = {2};
  auto mask = ones_mask(1);
  auto res = ops::cross_entropy_logits<double>(logits, targets, mask);
  CHECK(res.loss.item() < 1e-8);  // ln(1 + 3*e^-20)
}

TEST_CASE("cross_entropy respects the mask") {
  Rng rng(8);
  auto logits = Tensor<double>::randn({2, 8}, rng, 2.0);
  std::vector<int> targets = {1, 5};
  std::vector<std::uint8_t> mask = {1, 0};
  auto masked = ops::cross_entropy_logits<double>(logits, targets, mask);
  auto row0 = ops::slice_rows(logits, 0, 1);
  std::vector<int> t0 = {1};
  auto only = ops::cross_entropy_logits<double>(row0, t0, ones_mask(1));
  CHECK(masked.loss.item() == doctest::Approx(only.loss.item()).epsilon(1e-12));
  CHECK(masked.n_scored == 1);
  CHECK(masked.per_token[1] == 0.0);
}

TEST_CASE("cross_entropy errors when everything is masked out") {
  auto logits = Tensor<double>::zeros({2, 4});
  std::vector<int> targets = {0, 1};
  std::vector<std::uint8_t> mask = {0, 0};
  CHECK_THROWS_WITH_AS(ops::cross_entropy_logits<double>(logits, targets, mask),
                       doctest::Contains("masked out"), std::runtime_error);
}

TEST_CASE("cross_entropy is stable for large logits and shift invariant") {
  Rng rng(9);
  std::vector<double> lv(16);
  for (auto& v : lv) {
    v = rng.normal() * 1e4;
  }
  auto logits = tensor2d<double>(2, 8, lv);
  std::vector<int> targets = {0, 7};
  auto mask = ones_mask(2);
  auto a = ops::cross_entropy_logits<double>(logits, targets, mask);
  CHECK(std::isfinite(a.loss.item()));
  for (auto& v : lv) {
    v += 123.456;
  }
  auto b = ops::cross_entropy_logits<double>(tensor2d<double>(2, 8, lv), targets, mask);
  CHECK(std::fabs(a.loss.item() - b.loss.item()) < 1e-6);
}

// ---------------------------------------------------------------------------
// gradient checks
// ---------------------------------------------------------------------------

TEST_CASE("grad_check passes scalar square and catches a corrupted gradient") {
  auto square = [](const std::vector<Tensor<double>>& in) {
    return ops::weighted_sum(ops::mul(in[0], in[0]), std::vector<double>{1.0});
  };
  auto rep = cclab::grad_check("square", square, {Tensor<double>::from({1}, {3.0})}, 1e-4);
  CHECK(rep.pass);
  CHECK(rep.max_rel_err < 1e-4);

  auto corrupted = [](const std::vector<Tensor<double>>& in) {
    // f(x) = x^2 computed honestly, then the recorded backward is poisoned
    // with a 2x over-accumulation.
    auto y = ops::mul(in[0], in[0]);
    auto out = ops::weighted_sum(y, std::vector<double>{1.0});
    auto xi = in[0].impl();
    auto prev = out.impl()->backward;
    auto oi = out.impl().get();
    out.impl()->backward = [prev, xi, oi]() {
      prev();
      if (xi->requires_grad) {
        xi->grad[0] += oi->grad[0] * 2.0 * xi->data[0];
      }
    };
    return out;
  };
  auto rep2 =
      cclab::grad_check("square_corrupted", corrupted, {Tensor<double>::from({1}, {3.0})}, 1e-4);
  CHECK_FALSE(rep2.pass);
}

TEST_CASE("grad_check rejects non-scalar closures") {
  auto identity = [](const std::vector<Tensor<double>>& in) { return in[0]; };
  CHECK_THROWS_WITH_AS(
      cclab::grad_check("identity", identity, {Tensor<double>::zeros({2}, true)}, 1e-4),
      doctest::Contains("scalar"), std::runtime_error);
}

TEST_CASE("gradient checks across ops and seeds") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Rng rng(seed);
    auto w = [&](std::size_t n) {
      Rng wr(seed * 1000 + n);
      return random_weights(n, wr);
    };

    {
      auto x = Tensor<double>::randn({7, 4}, rng, 1.0);
      auto weights = w(7 * 4);
      auto closure = [&](const std::vector<Tensor<double>>& in) {
        return ops::weighted_sum(ops::gelu(in[0]), weights);
      };
      auto rep = cclab::grad_check("gelu", closure, {x}, 1e-4);
      CHECK_MESSAGE(rep.pass, "gelu seed ", seed, " err ", rep.max_rel_err);
    }
    {
      auto x = Tensor<double>::randn({6, 4}, rng, 1.0);
      auto weights = w(6 * 4);
      auto closure = [&](const std::vector<Tensor<double>>& in) {
        return ops::weighted_sum(ops::silu(in[0]), weights);
      };
      CHECK(cclab::grad_check("silu", closure, {x}, 1e-4).pass);
    }
    {
      auto x = Tensor<double>::randn({9, 3}, rng, 1.0);
      auto k = Tensor<double>::randn({2, 3, 3}, rng, 0.5);
      auto b = Tensor<double>::randn({2}, rng, 0.5);
      const int out_len = kernels::conv1d_out_len(9, 3, 2, 1);
      auto weights = w(static_cast<std::size_t>(out_len) * 2);
      auto closure = [&](const std::vector<Tensor<double>>& in) {
        return ops::weighted_sum(ops::conv1d(in[0], in[1], in[2], 2, 1), weights);
      };
      auto rep = cclab::grad_check("conv1d", closure, {x, k, b}, 1e-4);
      CHECK_MESSAGE(rep.pass, "conv1d seed ", seed, " err ", rep.max_rel_err);
    }
    {
      auto x = Tensor<double>::randn({5, 8}, rng, 1.0);
      auto gain = Tensor<double>::randn({8}, rng, 0.5);
      auto shift = Tensor<double>::randn({8}, rng, 0.5);
      auto weights = w(5 * 8);
      auto closure = [&](const std::vector<Tensor<double>>& in) {
        return ops::weighted_sum(ops::group_norm(in[0], 2, 1e-5, in[1], in[2]), weights);
      };
      auto rep = cclab::grad_check("group_norm", closure, {x, gain, shift}, 1e-4);
      CHECK_MESSAGE(rep.pass, "group_norm seed ", seed, " err ", rep.max_rel_err);
    }
    {
      auto x = Tensor<double>::randn({7, 3}, rng, 1.0);
      auto weights = w(3 * 3);
      auto closure = [&](const std::vector<Tensor<double>>& in) {
        return ops::weighted_sum(ops::adaptive_avg_pool(in[0], 3), weights);
      };
      CHECK(cclab::grad_check("adaptive_avg_pool", closure, {x}, 1e-4).pass);
    }
    {
      auto a = Tensor<double>::randn({4, 5}, rng, 1.0);
      auto b = Tensor<double>::randn({5, 3}, rng, 1.0);
      auto weights = w(4 * 3);
      auto closure = [&](const std::vector<Tensor<double>>& in) {
        return ops::weighted_sum(ops::matmul(in[0], in[1]), weights);
      };
      CHECK(cclab::grad_check("matmul", closure, {a, b}, 1e-4).pass);
    }
    {
      auto x = Tensor<double>::randn({4, 6}, rng, 1.0);
      auto wgt = Tensor<double>::randn({6}, rng, 0.5);
      auto weights = w(4 * 6);
      auto closure = [&](const std::vector<Tensor<double>>& in) {
        return ops::weighted_sum(ops::rmsnorm(in[0], in[1], 1e-6), weights);
      };
      auto rep = cclab::grad_check("rmsnorm", closure, {x, wgt}, 1e-4);
      CHECK_MESSAGE(rep.pass, "rmsnorm seed ", seed, " err ", rep.max_rel_err);
    }
    {
      auto x = Tensor<double>::randn({5, 8}, rng, 1.0);
      std::vector<int> pos = {0, 1, 2, 3, 4};
      auto weights = w(5 * 8);
      auto closure = [&](const std::vector<Tensor<double>>& in) {
        return ops::weighted_sum(ops::rope<double>(in[0], 2, pos, 100.0), weights);
      };
      CHECK(cclab::grad_check("rope", closure, {x}, 1e-4).pass);
    }
    {
      auto q = Tensor<double>::randn({5, 8}, rng, 1.0);
      auto k = Tensor<double>::randn({5, 8}, rng, 1.0);
      auto v = Tensor<double>::randn({5, 8}, rng, 1.0);
      auto weights = w(5 * 8);
      auto closure = [&](const std::vector<Tensor<double>>& in) {
        return ops::weighted_sum(ops::attention_causal(in[0], in[1], in[2], 2), weights);
      };
      auto rep = cclab::grad_check("attention", closure, {q, k, v}, 1e-4);
      CHECK_MESSAGE(rep.pass, "attention seed ", seed, " err ", rep.max_rel_err);
    }
    {
      auto table = Tensor<double>::randn({6, 4}, rng, 1.0);
      std::vector<int> ids = {1, 3, 3, 0};
      auto weights = w(4 * 4);
      auto closure = [&](const std::vector<Tensor<double>>& in) {
        return ops::weighted_sum(ops::embedding<double>(in[0], ids), weights);
      };
      CHECK(cclab::grad_check("embedding", closure, {table}, 1e-4).pass);
    }
    {
      auto logits = Tensor<double>::randn({5, 6}, rng, 2.0);
      std::vector<int> targets = {0, 2, 5, 1, 3};
      std::vector<std::uint8_t> mask = {1, 1, 0, 1, 1};
      auto closure = [&](const std::vector<Tensor<double>>& in) {
        return ops::cross_entropy_logits<double>(in[0], targets, mask).loss;
      };
      auto rep = cclab::grad_check("cross_entropy", closure, {logits}, 1e-4);
      CHECK_MESSAGE(rep.pass, "xent seed ", seed, " err ", rep.max_rel_err);
    }
    {
      // composite: conv1d -> gelu -> cross_entropy on a 7x4 input
      auto x = Tensor<double>::randn({7, 4}, rng, 1.0);
      auto k = Tensor<double>::randn({5, 4, 3}, rng, 0.5);
      auto b = Tensor<double>::randn({5}, rng, 0.1);
      std::vector<int> targets = {1, 4, 0, 2, 3, 1, 2};
      auto mask = ones_mask(7);
      auto closure = [&](const std::vector<Tensor<double>>& in) {
        auto h = ops::gelu(ops::conv1d(in[0], in[1], in[2], 1, 1));
        return ops::cross_entropy_logits<double>(h, targets, mask).loss;
      };
      auto rep = cclab::grad_check("conv_gelu_xent", closure, {x, k, b}, 1e-4);
      CHECK_MESSAGE(rep.pass, "composite seed ", seed, " err ", rep.max_rel_err);
    }
  }
}

// ---------------------------------------------------------------------------
// parallel/serial parity and autodiff structure
// ---------------------------------------------------------------------------

TEST_CASE("kernels produce bitwise-identical results with and without threads") {
  auto run = [&](bool parallel) {
    kernels::set_parallel(parallel);
    Rng rng(99);
    const int s = 33;
    const int h = 4;
    const int d = 32;
    auto q = Tensor<float>::randn({s, d}, rng, 1.0f);
    auto k = Tensor<float>::randn({s, d}, rng, 1.0f);
    auto v = Tensor<float>::randn({s, d}, rng, 1.0f);
    auto b = Tensor<float>::randn({d, 16}, rng, 1.0f);
    auto att = ops::attention_causal(q, k, v, h);
    auto mm = ops::matmul(att, b);
    auto g = ops::gelu(mm);
    auto gn = ops::group_norm(g, 4, 1e-5f, Tensor<float>::full({16}, 1.0f),
                              Tensor<float>::zeros({16}));
    auto cv = ops::conv1d(gn, Tensor<float>::randn({8, 16, 3}, rng, 0.3f),
                          Tensor<float>::randn({8}, rng, 0.1f), 2, 1);
    std::vector<float> out(cv.values().begin(), cv.values().end());
    kernels::set_parallel(true);
    return out;
  };
  auto a = run(true);
  auto b = run(false);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    REQUIRE(a[i] == b[i]);  // bitwise
  }
}

TEST_CASE("backward accumulates across shared subgraphs") {
  // f(x) = sum(x*x + x*x) = 2*sum(x^2); df/dx = 4x
  auto x = Tensor<double>::from({3}, {1.0, 2.0, 3.0}, true);
  auto y = ops::mul(x, x);
  auto z = ops::add(y, y);
  auto s = ops::weighted_sum(z, std::vector<double>{1.0, 1.0, 1.0});
  s.backward();
  CHECK(x.grad()[0] == doctest::Approx(4.0));
  CHECK(x.grad()[1] == doctest::Approx(8.0));
  CHECK(x.grad()[2] == doctest::Approx(12.0));
}

TEST_CASE("no-grad mode skips graph construction") {
  auto x = Tensor<double>::from({2}, {1.0, 2.0}, true);
  cclab::NoGradGuard ng;
  auto y = ops::mul(x, x);
  CHECK_FALSE(y.requires_grad());
  CHECK(y.impl()->parents.empty());
}
