#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <limits>

#include "ipa/autodiff.hpp"
#include "ipa/errors.hpp"
#include "ipa/grad_check.hpp"
#include "ipa/random.hpp"

namespace ad = ipa::ad;
using ipa::Tensor;

namespace {

Tensor random_tensor(ipa::Rng& rng, std::size_t r, std::size_t c, double lo = -1.0, double hi = 1.0) {
  Tensor t({r, c});
  for (auto& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

// Values bounded away from zero (for relu's kink and log/power domains).
Tensor away_from_zero(ipa::Rng& rng, std::size_t r, std::size_t c) {
  Tensor t({r, c});
  for (auto& v : t.values()) {
    const double mag = rng.uniform(0.2, 1.5);
    v = rng.uniform() < 0.5 ? -mag : mag;
  }
  return t;
}

// Contracts an op output with fixed random weights so every output element
// contributes to a scalar loss, then compares backward against central
// differences.
double op_error(std::vector<ad::Parameter>& params, const std::function<ad::Var()>& op,
                ipa::Rng& rng) {
  Tensor out_shape;
  {
    ad::NoGradGuard g;
    out_shape = op().value();
  }
  const auto weights = ad::constant(random_tensor(rng, out_shape.rows(), out_shape.cols()));
  auto loss = [&] { return ad::sum_all(ad::mul(op(), weights)); };
  return ad::grad_check(loss, params, 1e-5).max_relative_error;
}

std::vector<ad::Parameter> make_params(std::vector<Tensor> values) {
  std::vector<ad::Parameter> out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    out.push_back({"p" + std::to_string(i), ad::parameter(std::move(values[i]))});
  }
  return out;
}

constexpr int kInstances = 20;
constexpr double kOpTolerance = 1e-6;

}  // namespace

TEST(Tensor, ShapeAndFactories) {
  const auto t = Tensor::from_rows({{1, 2, 3}, {4, 5, 6}});
  EXPECT_EQ(t.rows(), 2u);
  EXPECT_EQ(t.cols(), 3u);
  EXPECT_EQ(t(1, 2), 6.0);
  EXPECT_EQ(Tensor::identity(3)(1, 1), 1.0);
  EXPECT_EQ(Tensor::identity(3)(1, 2), 0.0);
  EXPECT_THROW(Tensor({0, 3}), ipa::ShapeError);
  EXPECT_THROW(Tensor({2, 2}, std::vector<double>(3)), ipa::ShapeError);
  EXPECT_THROW(t.reshaped({4, 2}), ipa::ShapeError);
  EXPECT_EQ(t.reshaped({3, 2})(2, 1), 6.0);
}

TEST(Autodiff, MatmulIdentity) {
  ipa::Rng rng(1);
  const auto m = random_tensor(rng, 3, 3);
  EXPECT_EQ(ad::matmul(ad::constant(Tensor::identity(3)), ad::constant(m)).value(), m);
}

TEST(Autodiff, MatmulMatchesTripleLoop) {
  ipa::Rng rng(2);
  const auto a = random_tensor(rng, 4, 5), b = random_tensor(rng, 5, 3);
  const auto c = ad::matmul(ad::constant(a), ad::constant(b)).value();
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < 5; ++k) s += a(i, k) * b(k, j);
      EXPECT_NEAR(c(i, j), s, 1e-12);
    }
  }
}

TEST(Autodiff, ExpOfZeroIsOne) {
  EXPECT_EQ(ad::exp(ad::constant(Tensor::zeros({2, 2}))).value(), Tensor::ones({2, 2}));
}

TEST(Autodiff, SoftmaxOfEqualEntriesIsUniform) {
  const auto s = ad::softmax(ad::constant(Tensor::ones({3, 1})), 0).value();
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(s(i, 0), 1.0 / 3.0, 1e-15);
}

TEST(Autodiff, SoftmaxNormalizedAndShiftInvariant) {
  ipa::Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const auto x = random_tensor(rng, 5, 7, -30.0, 30.0);
    for (std::size_t axis = 0; axis < 2; ++axis) {
      const auto s = ad::softmax(ad::constant(x), axis).value();
      auto shifted = x;
      // One constant per slice along the softmax axis.
      for (std::size_t i = 0; i < 5; ++i) {
        for (std::size_t j = 0; j < 7; ++j) shifted(i, j) += 100.0 + double(axis == 0 ? j : i);
      }
      const auto s2 = ad::softmax(ad::constant(shifted), axis).value();
      const std::size_t outer = axis == 0 ? 7 : 5, inner = axis == 0 ? 5 : 7;
      for (std::size_t o = 0; o < outer; ++o) {
        double total = 0.0;
        for (std::size_t i = 0; i < inner; ++i) {
          const double v = axis == 0 ? s(i, o) : s(o, i);
          const double v2 = axis == 0 ? s2(i, o) : s2(o, i);
          total += v;
          EXPECT_NEAR(v, v2, 1e-12);
        }
        EXPECT_NEAR(total, 1.0, 1e-12);
      }
    }
  }
}

TEST(Autodiff, SoftmaxGivesNegativeInfinityZeroWeight) {
  const double inf = std::numeric_limits<double>::infinity();
  const auto s = ad::softmax(ad::constant(Tensor::from_rows({{0.0, -inf, 1.0}})), 1).value();
  EXPECT_EQ(s(0, 1), 0.0);
  EXPECT_NEAR(s(0, 0) + s(0, 2), 1.0, 1e-15);
  EXPECT_TRUE(s.all_finite());
}

TEST(Autodiff, SumGradientIsOnes) {
  auto p = ad::parameter(Tensor({2, 3}, 0.5));
  ad::backward(ad::sum_all(p));
  EXPECT_EQ(p.grad(), Tensor::ones({2, 3}));
}

TEST(Autodiff, SquareGradientIsTwoX) {
  auto p = ad::parameter(Tensor::from_rows({{1.0, 2.0}}));
  ad::backward(ad::sum_all(ad::mul(p, p)));
  EXPECT_EQ(p.grad(), Tensor::from_rows({{2.0, 4.0}}));
}

TEST(Autodiff, UnreachableParameterHasZeroGradient) {
  auto used = ad::parameter(Tensor({2, 2}, 1.0));
  auto unused = ad::parameter(Tensor({2, 2}, 1.0));
  ad::backward(ad::sum_all(ad::square(used)));
  EXPECT_EQ(unused.grad(), Tensor::zeros({2, 2}));
}

TEST(Autodiff, GradientsAccumulateAcrossUses) {
  auto p = ad::parameter(Tensor({1, 1}, 3.0));
  ad::backward(ad::sum_all(ad::add(ad::scale(p, 2.0), ad::square(p))));
  EXPECT_DOUBLE_EQ(p.grad().item(), 2.0 + 6.0);
  p.zero_grad();
  EXPECT_EQ(p.grad().item(), 0.0);
}

TEST(Autodiff, DiamondGraphVisitsEachNodeOnce) {
  auto p = ad::parameter(Tensor({1, 1}, 2.0));
  auto shared = ad::exp(p);
  auto loss = ad::sum_all(ad::add(ad::mul(shared, shared), shared));
  ad::backward(loss);
  const double e = std::exp(2.0);
  EXPECT_NEAR(p.grad().item(), 2.0 * e * e + e, 1e-9);
}

TEST(Autodiff, BackwardIsLinear) {
  ipa::Rng rng(4);
  auto a = ad::parameter(random_tensor(rng, 3, 4));
  auto b = ad::parameter(random_tensor(rng, 4, 2));
  auto f = [&] { return ad::sum_all(ad::exp(ad::matmul(a, b))); };
  auto g = [&] { return ad::sum_all(ad::square(ad::matmul(a, b))); };
  ad::backward(f());
  const Tensor fa = a.grad(), fb = b.grad();
  a.zero_grad();
  b.zero_grad();
  ad::backward(g());
  const Tensor ga = a.grad(), gb = b.grad();
  a.zero_grad();
  b.zero_grad();
  ad::backward(ad::add(f(), g()));
  for (std::size_t i = 0; i < fa.size(); ++i) EXPECT_NEAR(a.grad()[i], fa[i] + ga[i], 1e-12);
  for (std::size_t i = 0; i < fb.size(); ++i) EXPECT_NEAR(b.grad()[i], fb[i] + gb[i], 1e-12);
}

TEST(Autodiff, ErrorsAreTyped) {
  auto a = ad::parameter(Tensor({2, 3}));
  auto b = ad::parameter(Tensor({2, 3}));
  EXPECT_THROW(ad::matmul(a, b), ipa::ShapeError);
  EXPECT_THROW(ad::add(a, ad::constant(Tensor({3, 2}))), ipa::ShapeError);
  EXPECT_THROW(ad::backward(a), ipa::ContractError);
  EXPECT_THROW(ad::backward(ad::sum_all(ad::constant(Tensor({2, 2})))), ipa::ContractError);
  const std::vector<std::int32_t> bad{0, 2};
  EXPECT_THROW(ad::gather_rows(a, bad), ipa::IndexError);
  const std::vector<std::int32_t> neg{-1};
  EXPECT_THROW(ad::gather_rows(a, neg), ipa::IndexError);
  const std::vector<std::int32_t> targets{0, 5, 1};
  EXPECT_THROW(ad::cross_entropy(a, targets), ipa::IndexError);
  EXPECT_THROW(ad::slice_rows(a, 1, 3), ipa::ShapeError);
  EXPECT_THROW(ad::broadcast(a, 0, 4), ipa::ShapeError);
}

TEST(Autodiff, ShapeErrorNamesKindAndShapes) {
  try {
    ad::matmul(ad::constant(Tensor({2, 3})), ad::constant(Tensor({2, 3})));
    FAIL();
  } catch (const ipa::ShapeError& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find("matmul"), std::string::npos);
    EXPECT_NE(what.find("[2x3]"), std::string::npos) << what;
  }
}

TEST(Autodiff, NoGradGuardRecordsNothing) {
  auto p = ad::parameter(Tensor({2, 2}, 1.0));
  ad::Var out;
  {
    ad::NoGradGuard guard;
    out = ad::exp(p);
  }
  EXPECT_FALSE(out.requires_grad());
  EXPECT_EQ(ad::graph_size(out), 1u);
  EXPECT_TRUE(ad::grad_enabled());
}

TEST(Autodiff, CrossEntropyValues) {
  const std::vector<std::int32_t> t{3, 0};
  const auto uniform = ad::cross_entropy(ad::constant(Tensor({16, 2})), t);
  EXPECT_NEAR(uniform.value().item(), std::log(16.0), 1e-12);
  double previous = std::numeric_limits<double>::infinity();
  for (double margin : {5.0, 10.0, 20.0}) {
    Tensor logits({4, 2});
    logits(3, 0) = margin;
    logits(0, 1) = margin;
    const double l = ad::cross_entropy(ad::constant(logits), t).value().item();
    EXPECT_LT(l, previous);
    previous = l;
  }
  EXPECT_LT(previous, 1e-8);
}

TEST(Autodiff, CrossEntropyMatchesScalarLoop) {
  ipa::Rng rng(5);
  const auto logits = random_tensor(rng, 7, 5, -4.0, 4.0);
  const std::vector<std::int32_t> t{1, 6, 0, 3, 3};
  double expected = 0.0;
  for (std::size_t j = 0; j < 5; ++j) {
    double z = 0.0;
    for (std::size_t v = 0; v < 7; ++v) z += std::exp(logits(v, j));
    expected += std::log(z) - logits(static_cast<std::size_t>(t[j]), j);
  }
  expected /= 5.0;
  EXPECT_NEAR(ad::cross_entropy(ad::constant(logits), t).value().item(), expected, 1e-10);
}

TEST(GradCheck, PolynomialIsExact) {
  ipa::Rng rng(6);
  auto params = make_params({random_tensor(rng, 3, 3)});
  const auto report = ad::grad_check([&] { return ad::sum_all(ad::square(params[0].var)); }, params);
  EXPECT_LT(report.max_relative_error, 1e-9);
  EXPECT_EQ(report.elements_checked, 9u);
  EXPECT_EQ(params[0].var.grad(), Tensor::zeros({3, 3}));
}

TEST(GradCheck, RejectsBadEpsilonAndNaN) {
  auto params = make_params({Tensor({1, 1}, -1.0)});
  auto f = [&] { return ad::sum_all(ad::square(params[0].var)); };
  EXPECT_THROW(ad::grad_check(f, params, 1e-2), ipa::ContractError);
  EXPECT_THROW(ad::grad_check(f, params, 1e-9), ipa::ContractError);
  auto g = [&] { return ad::sum_all(ad::log(params[0].var)); };
  EXPECT_THROW(ad::grad_check(g, params), ipa::NumericError);
}

// Every differentiable op kind against central differences.
class OpGradient : public ::testing::TestWithParam<const char*> {};

TEST_P(OpGradient, MatchesFiniteDifferences) {
  const std::string kind = GetParam();
  ipa::Rng rng(std::hash<std::string>{}(kind) & 0xFFFF);
  double worst = 0.0;
  for (int trial = 0; trial < kInstances; ++trial) {
    const std::size_t r = 1 + rng.below(4), c = 1 + rng.below(4), k = 1 + rng.below(4);
    std::vector<ad::Parameter> p;
    std::function<ad::Var()> op;
    if (kind == "matmul") {
      p = make_params({random_tensor(rng, r, k), random_tensor(rng, k, c)});
      op = [&] { return ad::matmul(p[0].var, p[1].var); };
    } else if (kind == "transpose") {
      p = make_params({random_tensor(rng, r, c)});
      op = [&] { return ad::transpose(p[0].var); };
    } else if (kind == "reshape") {
      p = make_params({random_tensor(rng, r, c * 2)});
      op = [&] { return ad::reshape(p[0].var, {2 * c, r}); };
    } else if (kind == "add" || kind == "sub" || kind == "mul") {
      p = make_params({random_tensor(rng, r, c), random_tensor(rng, r, c)});
      op = [&] {
        if (kind == "add") return ad::add(p[0].var, p[1].var);
        if (kind == "sub") return ad::sub(p[0].var, p[1].var);
        return ad::mul(p[0].var, p[1].var);
      };
    } else if (kind == "scale") {
      p = make_params({random_tensor(rng, r, c)});
      const double s = rng.uniform(-3.0, 3.0);
      op = [&, s] { return ad::scale(ad::add_scalar(p[0].var, 0.3), s); };
    } else if (kind == "exp") {
      p = make_params({random_tensor(rng, r, c, -2.0, 2.0)});
      op = [&] { return ad::exp(p[0].var); };
    } else if (kind == "log") {
      p = make_params({random_tensor(rng, r, c, 0.3, 3.0)});
      op = [&] { return ad::log(p[0].var); };
    } else if (kind == "square") {
      p = make_params({random_tensor(rng, r, c)});
      op = [&] { return ad::square(p[0].var); };
    } else if (kind == "power") {
      p = make_params({random_tensor(rng, r, c, 0.3, 3.0)});
      op = [&] { return ad::power(p[0].var, -0.5); };
    } else if (kind == "relu") {
      p = make_params({away_from_zero(rng, r, c)});
      op = [&] { return ad::relu(p[0].var); };
    } else if (kind == "sum") {
      p = make_params({random_tensor(rng, r, c)});
      const std::size_t axis = rng.below(2);
      op = [&, axis] { return ad::sum(p[0].var, axis); };
    } else if (kind == "broadcast") {
      const std::size_t axis = rng.below(2);
      p = make_params({axis == 0 ? random_tensor(rng, 1, c) : random_tensor(rng, r, 1)});
      op = [&, axis] { return ad::broadcast(p[0].var, axis, axis == 0 ? r : c); };
    } else if (kind == "softmax") {
      p = make_params({random_tensor(rng, r, c, -3.0, 3.0)});
      const std::size_t axis = rng.below(2);
      op = [&, axis] { return ad::softmax(p[0].var, axis); };
    } else if (kind == "sqdist") {
      p = make_params({random_tensor(rng, r, c), random_tensor(rng, r, k)});
      op = [&] { return ad::sqdist(p[0].var, p[1].var); };
    } else if (kind == "slice") {
      p = make_params({random_tensor(rng, r + 1, c + 1)});
      op = [&] { return ad::slice_cols(ad::slice_rows(p[0].var, 1, r + 1), 0, c); };
    } else if (kind == "concat") {
      p = make_params({random_tensor(rng, r, c), random_tensor(rng, k, c), random_tensor(rng, r, k)});
      op = [&] {
        const std::vector<ad::Var> rows{p[0].var, p[1].var};
        const std::vector<ad::Var> cols{p[0].var, p[2].var};
        return ad::add(ad::slice_rows(ad::concat_rows(rows), 0, r),
                       ad::slice_cols(ad::concat_cols(cols), k, k + c));
      };
    } else if (kind == "gather") {
      p = make_params({random_tensor(rng, r + 1, c)});
      std::vector<std::int32_t> ids(k + 2);
      for (auto& id : ids) id = static_cast<std::int32_t>(rng.below(r + 1));  // repeats likely
      op = [&, ids] { return ad::gather_rows(p[0].var, ids); };
    } else if (kind == "masked_fill") {
      p = make_params({random_tensor(rng, r, c)});
      Tensor mask({r, c});
      for (auto& v : mask.values()) v = rng.uniform() < 0.4 ? 1.0 : 0.0;
      op = [&, mask] { return ad::masked_fill(p[0].var, mask, 0.0); };
    } else if (kind == "cross_entropy") {
      p = make_params({random_tensor(rng, r + 1, c, -2.0, 2.0)});
      std::vector<std::int32_t> t(c);
      for (auto& id : t) id = static_cast<std::int32_t>(rng.below(r + 1));
      op = [&, t] { return ad::cross_entropy(p[0].var, t); };
    } else {
      FAIL() << "unknown kind " << kind;
    }
    worst = std::max(worst, op_error(p, op, rng));
  }
  EXPECT_LT(worst, kOpTolerance) << kind;
}

INSTANTIATE_TEST_SUITE_P(AllKinds, OpGradient,
                         ::testing::Values("matmul", "transpose", "reshape", "add", "sub", "mul",
                                           "scale", "exp", "log", "square", "power", "relu", "sum",
                                           "broadcast", "softmax", "sqdist", "slice", "concat",
                                           "gather", "masked_fill", "cross_entropy"),
                         [](const auto& info) { return std::string(info.param); });
