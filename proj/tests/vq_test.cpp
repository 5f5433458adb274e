#include <gtest/gtest.h>

#include <cmath>

#include "lp/nn/gradcheck.hpp"
#include "lp/vq.hpp"

namespace lp::vq {
namespace {

using D = double;
using MatD = Mat<D>;

Codebook<D> two_rows() {
  Rng rng(0);
  Codebook<D> cb(2, 2, rng);
  cb.c << 0, 0, 1, 1;
  cb.ema_sums = cb.c;
  return cb;
}

TEST(Quantize, NearestRow) {
  const auto cb = two_rows();
  nn::RowVec<D> e(2);
  e << 0.9, 0.8;
  EXPECT_EQ(quantize(cb, e).first, 1);
  e << 0.5, 0.5;
  EXPECT_EQ(quantize(cb, e).first, 0);
}

TEST(Quantize, ExactRowHasZeroDistance) {
  Rng rng(1);
  Codebook<D> cb(5, 3, rng);
  const auto [k, row] = quantize(cb, nn::RowVec<D>(cb.c.row(3)));
  EXPECT_EQ(k, 3);
  EXPECT_EQ((row - cb.c.row(3)).squaredNorm(), 0.0);
}

TEST(Quantize, OutputsAreCodebookRowsBitwise) {
  Rng rng(2);
  Codebook<D> cb(10, 4, rng);
  MatD e(200, 4);
  for (Index i = 0; i < e.size(); ++i) e.data()[i] = uniform_real(rng, -1, 1);
  const auto [ids, q] = quantize_rows(cb, e);
  for (Index r = 0; r < e.rows(); ++r) {
    EXPECT_EQ(MatD(q.row(r)), MatD(cb.c.row(ids[r])));
    for (Index k = 0; k < cb.size(); ++k) EXPECT_LE((e.row(r) - q.row(r)).squaredNorm(), (e.row(r) - cb.c.row(k)).squaredNorm());
  }
}

TEST(Init, UniformInRange) {
  Rng rng(3);
  Codebook<D> cb(8, 16, rng);
  EXPECT_LE(cb.c.cwiseAbs().maxCoeff(), 1.0 / 8);
  EXPECT_THROW(Codebook<D>(1, 4, rng), ShapeError);
}

TEST(StraightThrough, ForwardIsQuantizedAndCodebookGetsNoGradient) {
  Rng rng(4);
  Codebook<D> cb(4, 3, rng);
  const MatD before = cb.c;
  nn::Tensor<D> e("e", 5, 3);
  for (Index i = 0; i < e.data.size(); ++i) e.data.data()[i] = uniform_real(rng, -1, 1);
  nn::Graph<D> g;
  std::vector<int> ids;
  const auto y = straight_through(cb, g.param(e), &ids);
  EXPECT_EQ(y.value(), lookup(cb, ids));
  g.backward(nn::sum_all(y));
  EXPECT_EQ(e.grad, MatD::Ones(5, 3));
  EXPECT_EQ(cb.c, before);
}

TEST(Commitment, ZeroOnRowsAndBetaTimesSquaredDistance) {
  auto cb = two_rows();
  nn::Graph<D> g;
  EXPECT_EQ(commitment_loss(cb, g.constant(cb.c)).item(), 0.0);
  MatD e(1, 2);
  e << 0.3, -0.4;  // distance 0.5 from row 0
  EXPECT_NEAR(commitment_loss(cb, g.constant(e)).item(), 0.25 * 0.25, 1e-15);
}

TEST(Commitment, MatchesLoopOracle) {
  Rng rng(5);
  Codebook<D> cb(6, 4, rng);
  MatD e(9, 4);
  for (Index i = 0; i < e.size(); ++i) e.data()[i] = uniform_real(rng, -0.3, 0.3);
  double want = 0;
  for (Index r = 0; r < e.rows(); ++r) {
    double best = 1e300;
    for (Index k = 0; k < cb.size(); ++k) {
      double d = 0;
      for (Index j = 0; j < 4; ++j) d += (e(r, j) - cb.c(k, j)) * (e(r, j) - cb.c(k, j));
      best = std::min(best, d);
    }
    want += cb.beta * best / e.rows();
  }
  nn::Graph<D> g;
  EXPECT_NEAR(commitment_loss(cb, g.constant(e)).item(), want, 1e-6);
}

TEST(Ema, ConstantStreamFollowsClosedForm) {
  Rng rng(6);
  Codebook<D> cb(4, 2, rng);
  cb.c << -1, -1, 1, -1, 0.2, 0.3, -1, 1;
  cb.ema_sums = cb.c;
  const MatD c0 = cb.c;
  // Target near row 2 so every update assigns to it.
  MatD v(1, 2);
  v << 0.3, 0.35;
  auto [ids, q] = quantize_rows(cb, v);
  ASSERT_EQ(ids[0], 2);
  for (int step = 0; step < 500; ++step) {
    auto [k, qq] = quantize_rows(cb, v);
    ema_update(cb, v, k);
  }
  const double decay = std::pow(0.99, 500);
  const MatD closed = decay * c0.row(2) + (1 - decay) * v;
  EXPECT_LT((MatD(cb.c.row(2)) - closed).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((MatD(cb.c.row(2)) - v).cwiseAbs().maxCoeff(), 1e-3);
  // Rows that never receive assignments keep their value.
  EXPECT_LT((MatD(cb.c.row(0)) - MatD(c0.row(0))).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Ema, EmptyBatchLeavesCodebook) {
  Rng rng(7);
  Codebook<D> cb(3, 2, rng);
  const auto before = cb.c;
  ema_update(cb, MatD(0, 2), {});
  EXPECT_EQ(cb.c, before);
}

TEST(Ema, TwoClustersConvergeToMeans) {
  Rng rng(8);
  Codebook<D> cb(2, 2, rng);
  cb.c << -0.4, -0.1, 0.4, 0.1;
  cb.ema_sums = cb.c;
  MatD mu(2, 2);
  mu << -0.6, 0.3, 0.5, -0.2;
  // Oracle: replay the same stream with explicit per-cluster running sums.
  MatD counts = MatD::Ones(2, 1), sums = cb.c;
  for (int step = 0; step < 500; ++step) {
    MatD e(64, 2);
    for (Index r = 0; r < 64; ++r) {
      const Index m = r % 2;
      e(r, 0) = mu(m, 0) + normal(rng, 0, 0.05);
      e(r, 1) = mu(m, 1) + normal(rng, 0, 0.05);
    }
    auto [ids, q] = quantize_rows(cb, e);
    ema_update(cb, e, ids);
    MatD n = MatD::Zero(2, 1), s = MatD::Zero(2, 2);
    for (Index r = 0; r < 64; ++r) {
      // Nearest of the two oracle means.
      const Index k = ((e.row(r) - (sums.row(0) / counts(0, 0))).squaredNorm() <=
                       (e.row(r) - (sums.row(1) / counts(1, 0))).squaredNorm())
                          ? 0
                          : 1;
      n(k, 0) += 1;
      s.row(k) += e.row(r);
    }
    counts = 0.99 * counts + 0.01 * n;
    sums = 0.99 * sums + 0.01 * s;
  }
  for (Index k = 0; k < 2; ++k) {
    EXPECT_LT((MatD(cb.c.row(k)) - MatD(sums.row(k) / counts(k, 0))).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_LT((MatD(cb.c.row(k)) - MatD(mu.row(k))).cwiseAbs().maxCoeff(), 1e-2) << "row " << k;
  }
}

TEST(SoftMix, OneHotUniformAndOracle) {
  Rng rng(9);
  Codebook<D> cb(5, 3, rng);
  nn::Graph<D> g;
  MatD onehot = MatD::Zero(2, 5);
  onehot(0, 3) = 1;
  onehot(1, 0) = 1;
  EXPECT_EQ(soft_mix(cb, g.constant(onehot)).value(), lookup(cb, {3, 0}));
  const MatD uniform = MatD::Constant(1, 5, 0.2);
  EXPECT_LT((soft_mix(cb, g.constant(uniform)).value() - cb.c.colwise().mean()).cwiseAbs().maxCoeff(), 1e-12);
  MatD p(3, 5);
  for (Index i = 0; i < p.size(); ++i) p.data()[i] = uniform_real(rng, 0, 1);
  for (Index r = 0; r < 3; ++r) p.row(r) /= p.row(r).sum();
  const MatD got = soft_mix(cb, g.constant(p)).value();
  for (Index r = 0; r < 3; ++r) {
    for (Index j = 0; j < 3; ++j) {
      double s = 0;
      for (Index k = 0; k < 5; ++k) s += p(r, k) * cb.c(k, j);
      EXPECT_NEAR(got(r, j), s, 1e-6);
    }
  }
  EXPECT_THROW(soft_mix(cb, g.constant(MatD::Constant(1, 4, 0.25))), ShapeError);
  EXPECT_THROW(soft_mix(cb, g.constant(MatD::Constant(1, 5, 0.3))), ShapeError);
}

TEST(SoftMix, GradientInProbabilities) {
  Rng rng(10);
  Codebook<D> cb(4, 3, rng);
  nn::Tensor<D> logits("l", 2, 4);
  for (Index i = 0; i < logits.data.size(); ++i) logits.data.data()[i] = uniform_real(rng, -1, 1);
  Mat<D> w(2, 3);
  for (Index i = 0; i < w.size(); ++i) w.data()[i] = uniform_real(rng, -1, 1);
  const auto f = [&](nn::Graph<D>& g) {
    return nn::sum_all(nn::mul(soft_mix(cb, nn::softmax_rows(g.param(logits))), g.constant(w)));
  };
  EXPECT_LT(nn::finite_diff_check<D>(f, {&logits}).max_rel_error, 1e-4);
}

TEST(Usage, Entropy) {
  EXPECT_EQ(usage_entropy({1, 1, 1}, 4), 0.0);
  EXPECT_NEAR(usage_entropy({0, 1, 2, 3}, 4), std::log(4.0), 1e-12);
}

}  // namespace
}  // namespace lp::vq
