#include "gesturegen/nn/autograd.hpp"
#include "gesturegen/nn/layers.hpp"
#include "gesturegen/nn/optim.hpp"

#include <gtest/gtest.h>

#include <functional>
#include <random>

using gesturegen::nn::Graph;
using gesturegen::nn::Matrix;
using gesturegen::nn::Parameter;
using gesturegen::nn::ParameterStore;
using gesturegen::nn::Var;
using Mat = Matrix<double>;

namespace {

Mat random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng) {
  std::normal_distribution<double> d(0.0, 1.0);
  Mat m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = d(rng);
  return m;
}

using Builder = std::function<Var(Graph<double>&, const std::vector<Var>&)>;

// Largest relative error between the tape gradient and central differences.
double gradcheck(const std::vector<Mat>& inputs, const Builder& build) {
  Graph<double> g;
  std::vector<Var> vars;
  for (const auto& m : inputs) vars.push_back(g.input(m));
  Var out = build(g, vars);
  g.backward(out);
  double worst = 0.0;
  const double h = 1e-6;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const Mat analytic = g.grad(vars[k]).size() ? g.grad(vars[k]) : Mat::Zero(inputs[k].rows(), inputs[k].cols());
    for (Eigen::Index i = 0; i < inputs[k].size(); ++i) {
      auto eval = [&](double delta) {
        std::vector<Mat> shifted = inputs;
        shifted[k].data()[i] += delta;
        Graph<double> g2(false);
        std::vector<Var> v2;
        for (const auto& m : shifted) v2.push_back(g2.input(m));
        return g2.scalar(build(g2, v2));
      };
      const double numeric = (eval(h) - eval(-h)) / (2 * h);
      const double a = analytic.data()[i];
      const double err = std::abs(a - numeric) / std::max(1.0, std::abs(a) + std::abs(numeric));
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace

TEST(Autograd, MatmulAndTranspose) {
  std::mt19937_64 rng(1);
  EXPECT_LT(gradcheck({random_matrix(3, 4, rng), random_matrix(4, 2, rng)},
                      [](Graph<double>& g, const std::vector<Var>& v) { return g.sum(g.square(g.matmul(v[0], v[1]))); }),
            1e-7);
  EXPECT_LT(gradcheck({random_matrix(3, 4, rng), random_matrix(5, 4, rng)},
                      [](Graph<double>& g, const std::vector<Var>& v) {
                        return g.sum(g.square(g.transpose(g.matmul_nt(v[0], v[1]))));
                      }),
            1e-7);
}

TEST(Autograd, ElementwiseOps) {
  std::mt19937_64 rng(2);
  const auto a = random_matrix(3, 5, rng);
  const auto b = random_matrix(3, 5, rng);
  const auto row = random_matrix(1, 5, rng);
  EXPECT_LT(gradcheck({a, b}, [](Graph<double>& g, const std::vector<Var>& v) {
              return g.sum(g.mul(g.sub(v[0], v[1]), g.exp(g.scale(v[0], 0.3))));
            }),
            1e-7);
  EXPECT_LT(gradcheck({a, row}, [](Graph<double>& g, const std::vector<Var>& v) {
              return g.sum(g.tanh(g.mul_row(g.add_row(v[0], v[1]), v[1])));
            }),
            1e-7);
  EXPECT_LT(gradcheck({a}, [](Graph<double>& g, const std::vector<Var>& v) { return g.sum(g.square(g.gelu(v[0]))); }),
            1e-7);
  EXPECT_LT(gradcheck({a}, [](Graph<double>& g, const std::vector<Var>& v) {
              return g.sum(g.square(g.leaky_relu(g.add_scalar(v[0], 0.1), 0.2)));
            }),
            1e-6);
  EXPECT_LT(gradcheck({a}, [](Graph<double>& g, const std::vector<Var>& v) {
              return g.sum(g.square(g.scale_rows(v[0], {0.5, -1.0, 2.0})));
            }),
            1e-7);
}

TEST(Autograd, RowNormalizersAndLosses) {
  std::mt19937_64 rng(3);
  const auto a = random_matrix(4, 6, rng);
  const auto gamma = random_matrix(1, 6, rng);
  const auto beta = random_matrix(1, 6, rng);
  const auto w = random_matrix(4, 6, rng);
  EXPECT_LT(gradcheck({a, gamma, beta}, [&](Graph<double>& g, const std::vector<Var>& v) {
              return g.sum(g.mul(g.layer_norm(v[0], v[1], v[2]), g.constant(w)));
            }),
            1e-6);
  EXPECT_LT(gradcheck({a}, [&](Graph<double>& g, const std::vector<Var>& v) {
              return g.sum(g.mul(g.softmax_rows(v[0]), g.constant(w)));
            }),
            1e-7);
  EXPECT_LT(gradcheck({a}, [&](Graph<double>& g, const std::vector<Var>& v) {
              return g.sum(g.mul(g.l2_normalize_rows(v[0]), g.constant(w)));
            }),
            1e-7);
  EXPECT_LT(gradcheck({a}, [](Graph<double>& g, const std::vector<Var>& v) {
              return g.cross_entropy_rows(v[0], {0, 3, 5, 1});
            }),
            1e-7);
}

TEST(Autograd, StructuralOps) {
  std::mt19937_64 rng(4);
  const auto a = random_matrix(6, 3, rng);
  const auto b = random_matrix(2, 3, rng);
  const auto w = random_matrix(8, 9, rng);
  EXPECT_LT(gradcheck({a, b}, [&](Graph<double>& g, const std::vector<Var>& v) {
              Var cat = g.concat_rows({v[0], v[1]});
              Var wide = g.concat_cols({cat, g.scale(cat, 2.0), g.slice_cols(cat, 1, 2), g.broadcast_rows(g.mean_rows(cat), 8)});
              return g.sum(g.mul(g.slice_cols(wide, 0, 9), g.constant(w)));
            }),
            1e-7);
  EXPECT_LT(gradcheck({a}, [&](Graph<double>& g, const std::vector<Var>& v) {
              Var u = g.unfold_rows(v[0], 3, 2, 1);
              return g.sum(g.square(g.repeat_rows(g.slice_rows(u, 1, 2), 2)));
            }),
            1e-7);
}

TEST(Autograd, UnfoldShapes) {
  Graph<double> g(false);
  Mat x = Mat::Ones(8, 2);
  Var u = g.unfold_rows(g.constant(x), 4, 2, 1);
  EXPECT_EQ(g.rows(u), 4);
  EXPECT_EQ(g.cols(u), 8);
  // first output row starts one step before the input: first block is zero padding
  EXPECT_DOUBLE_EQ(g.value(u)(0, 0), 0.0);
  EXPECT_DOUBLE_EQ(g.value(u)(0, 2), 1.0);
}

TEST(Autograd, TransformerLayersGradcheck) {
  std::mt19937_64 rng(5);
  ParameterStore<double> store;
  gesturegen::nn::EncoderLayer<double> enc(store, "enc", 8, 2, 12, rng);
  gesturegen::nn::DecoderLayer<double> dec(store, "dec", 8, 2, 12, rng);
  const Mat x = random_matrix(5, 8, rng);
  const Mat mem = random_matrix(3, 8, rng);
  Mat bias = Mat::Zero(1, 5);
  bias(0, 4) = -1e9;

  auto loss = [&](Graph<double>& g) {
    Var h = enc(g, g.constant(x), &bias);
    Var y = dec(g, h, g.constant(mem));
    return g.sum(g.square(y));
  };
  Graph<double> g;
  g.backward(loss(g));
  double worst = 0.0;
  for (auto* p : store.all()) {
    for (Eigen::Index i = 0; i < p->value.size(); i += 7) {
      const double orig = p->value.data()[i];
      auto eval = [&](double v) {
        p->value.data()[i] = v;
        Graph<double> g2(false);
        return g2.scalar(loss(g2));
      };
      const double numeric = (eval(orig + 1e-6) - eval(orig - 1e-6)) / 2e-6;
      p->value.data()[i] = orig;
      const double a = p->grad.data()[i];
      worst = std::max(worst, std::abs(a - numeric) / std::max(1.0, std::abs(a) + std::abs(numeric)));
    }
  }
  EXPECT_LT(worst, 1e-6);
}

TEST(Autograd, MaskedKeysGetNoAttention) {
  std::mt19937_64 rng(6);
  ParameterStore<double> store;
  gesturegen::nn::MultiHeadAttention<double> attn(store, "a", 4, 2, rng);
  Mat q = random_matrix(2, 4, rng);
  Mat kv = random_matrix(3, 4, rng);
  Mat bias = Mat::Zero(1, 3);
  bias(0, 2) = -1e30;
  Graph<double> g(false);
  const Mat full = g.value(attn(g, g.constant(q), g.constant(kv), &bias));
  kv.row(2).setConstant(100.0);
  const Mat changed = g.value(attn(g, g.constant(q), g.constant(kv), &bias));
  EXPECT_LT((full - changed).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Autograd, AdamWDecreasesQuadratic) {
  Parameter<double> p("w", Mat::Constant(1, 3, 5.0));
  gesturegen::nn::AdamW<double> opt({&p}, {.lr = 0.1, .weight_decay = 0.0});
  for (int i = 0; i < 300; ++i) {
    Graph<double> g;
    g.backward(g.sum(g.square(g.param(p))));
    opt.step();
  }
  EXPECT_LT(p.value.cwiseAbs().maxCoeff(), 0.05);
}

TEST(Autograd, RejectsShapeMismatch) {
  Graph<double> g;
  Var a = g.input(Mat::Zero(2, 3));
  Var b = g.input(Mat::Zero(3, 2));
  EXPECT_THROW(g.add(a, b), std::invalid_argument);
  EXPECT_THROW(g.matmul(a, a), std::invalid_argument);
  EXPECT_THROW(g.backward(a), std::invalid_argument);
}
