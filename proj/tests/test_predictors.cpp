#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "renoise/predictors.hpp"

using namespace renoise;

TEST(ToyPredictor, ConstantInZ) {
  const ToyShiftedGaussian toy(1.0);
  EXPECT_EQ(toy.evaluate(Latent({1}, 2.0), 0.0)[0], -1.0);
  EXPECT_NEAR(toy.evaluate(Latent({1}, 123.0), 0.1)[0], -0.90483742, 1e-8);
  EXPECT_NEAR(toy.evaluate(Latent({1}, -7.0), 0.1)[0], -std::exp(-0.1), 1e-16);
  const Latent out = ToyShiftedGaussian(2.0).evaluate(Latent({3}, 0.0), 0.0);
  EXPECT_EQ(out.values(), (std::vector<double>{-2, -2, -2}));
}

TEST(ToyPredictor, ZeroShiftRejected) {
  EXPECT_THROW(ToyShiftedGaussian(0.0), Error);
  EXPECT_THROW(ToyShiftedGaussian(std::nan("")), Error);
}

TEST(ToyPredictor, ZeroJvp) {
  const ToyShiftedGaussian toy(1.5);
  const Latent z({4}, 1.0);
  const Latent v({4}, std::vector<double>{1, -2, 3, 0.5});
  EXPECT_EQ(predictor_jvp(toy, z, 0.3, {}, v), Latent::zeros_like(z));
}

TEST(LinearPredictor, Examples) {
  EXPECT_EQ(LinearPredictor(Matrix::identity(2)).evaluate(Latent({2}, std::vector<double>{3, 4})).values(),
            (std::vector<double>{3, 4}));
  EXPECT_EQ(LinearPredictor(Matrix::from_rows({{0.5}})).evaluate(Latent({1}, 2.0))[0], 1.0);
  EXPECT_EQ(LinearPredictor(Matrix::from_rows({{0, 1}, {1, 0}})).evaluate(Latent({2}, std::vector<double>{1, 2})).values(),
            (std::vector<double>{2, 1}));
}

TEST(LinearPredictor, RejectsBadMatrices) {
  EXPECT_THROW(Matrix::from_rows({{1, 2}, {3}}), Error);
  EXPECT_THROW(LinearPredictor(Matrix::identity(2)).evaluate(Latent({3}, 0.0)), Error);
}

TEST(LinearPredictor, JvpAndVjpMatchMatrix) {
  const Matrix m = matrix_with_singular_values({2.0, 1.0, 0.5, 0.1}, 9);
  const LinearPredictor pred(m);
  const Eigen::MatrixXd em = oracle::to_eigen(m);
  RngState rng{1, 0};
  const Latent z = sample_gaussian(rng, {4});
  const Latent v = sample_gaussian(rng, {4});
  const Eigen::VectorXd mv = em * oracle::to_eigen(v);
  const Eigen::VectorXd mtv = em.transpose() * oracle::to_eigen(v);
  const Latent jv = predictor_jvp(pred, z, 0.0, {}, v);
  const Latent jtv = pred.vjp(z, 0.0, {}, v);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_NEAR(jv[i], mv(i), 1e-14);
    EXPECT_NEAR(jtv[i], mtv(i), 1e-14);
  }
}

TEST(Matrices, OrthogonalAndPrescribedSpectrum) {
  const Matrix q = random_orthogonal(7, 3);
  const Eigen::MatrixXd eq = oracle::to_eigen(q);
  EXPECT_LT((eq.transpose() * eq - Eigen::MatrixXd::Identity(7, 7)).cwiseAbs().maxCoeff(), 1e-13);

  const std::vector<double> sv{3.0, 1.5, 0.7, 0.2};
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(oracle::to_eigen(matrix_with_singular_values(sv, 4)));
  for (std::size_t i = 0; i < sv.size(); ++i) EXPECT_NEAR(svd.singularValues()(i), sv[i], 1e-12);
}

TEST(SeededNonlinear, DeterministicPerSeed) {
  SeededNonlinearParams p;
  p.seed = 5;
  const SeededNonlinear a(p, 16), b(p, 16);
  p.seed = 6;
  const SeededNonlinear c(p, 16);
  RngState rng{0, 0};
  const Latent z = sample_gaussian(rng, {4, 4});
  EXPECT_EQ(a.evaluate(z, 0.2), b.evaluate(z, 0.2));
  EXPECT_NE(a.evaluate(z, 0.2), c.evaluate(z, 0.2));
  EXPECT_NE(a.evaluate(z, 0.2), a.evaluate(z, 0.9));
  EXPECT_THROW(a.evaluate(Latent({15}, 0.0), 0.0), Error);
}

TEST(SeededNonlinear, MatchesClosedForm) {
  SeededNonlinearParams p;
  p.seed = 2;
  p.width = 5;
  const std::size_t dim = 3;
  const SeededNonlinear pred(p, dim);
  const Latent z({dim}, std::vector<double>{0.3, -1.2, 0.8});
  const double t = 0.4;
  const Latent out = pred.evaluate(z, t);
  const auto& A = pred.output_weights();
  const auto& B = pred.input_weights();
  for (std::size_t o = 0; o < dim; ++o) {
    double expect = 0.0;
    for (std::size_t h = 0; h < p.width; ++h) {
      double pre = pred.bias()[h] + pred.time_bias()[h] * std::cos(t);
      for (std::size_t i = 0; i < dim; ++i) pre += B[h * dim + i] * z[i];
      expect += A[o * p.width + h] * std::tanh(pre);
    }
    EXPECT_NEAR(out[o], expect, 1e-14);
  }
}

TEST(SeededNonlinear, CentralAndForwardDifferenceJvpAgree) {
  SeededNonlinearParams p;
  p.seed = 8;
  const SeededNonlinear pred(p, 16);
  RngState rng{3, 0};
  for (int trial = 0; trial < 10; ++trial) {
    const Latent z = sample_gaussian(rng, {16});
    Latent v = sample_gaussian(rng, {16});
    v *= 1.0 / norm2(v);
    const Latent central = predictor_jvp(pred, z, 0.5, {}, v);
    // Forward difference with a smaller step as the second stencil.
    const double h = 1e-7;
    Latent forward = pred.evaluate(z + h * v, 0.5) - pred.evaluate(z, 0.5);
    forward *= 1.0 / h;
    EXPECT_LT(oracle::relative_error(central, forward), 1e-5);
  }
}

TEST(Predictors, JvpOverflowRaises) {
  const LinearPredictor pred(Matrix::diagonal({1e308, 1e308}));
  EXPECT_THROW(predictor_jvp(pred, Latent({2}, 1.0), 0.0, {}, Latent({2}, 10.0)), Error);
}

TEST(CountingPredictor, CountsEvaluations) {
  const ToyShiftedGaussian toy(1.0);
  CountingPredictor<ToyShiftedGaussian> counted(toy);
  const Latent z({2}, 0.0);
  for (int i = 0; i < 3; ++i) counted.evaluate(z, 0.0, {});
  EXPECT_EQ(counted.calls(), 3u);
  counted.reset();
  EXPECT_EQ(counted.calls(), 0u);
}

TEST(Predictors, ConceptsDescribeCapabilities) {
  static_assert(NoisePredictor<ToyShiftedGaussian>);
  static_assert(NoisePredictor<SeededNonlinear>);
  static_assert(AnalyticJvp<LinearPredictor> && AnalyticVjp<LinearPredictor>);
  static_assert(!AnalyticJvp<SeededNonlinear>);
  static_assert(NoisePredictor<CountingPredictor<LinearPredictor>>);
  SUCCEED();
}
