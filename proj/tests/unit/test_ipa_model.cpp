#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "ipa/errors.hpp"
#include "ipa/grad_check.hpp"
#include "ipa/ipa_model.hpp"
#include "oracles.hpp"

namespace ad = ipa::ad;
using ipa::Tensor;

namespace {

ipa::ModelConfig tiny(std::size_t layers = 2) {
  ipa::ModelConfig c;
  c.vocab = 20;
  c.n = 8;
  c.m_max = 6;
  c.layers = layers;
  c.p_col = 2;
  c.p_row = 2;
  c.k = 3;
  return c;
}

ad::Var random_input(ipa::Rng& rng, std::size_t n, std::size_t m) {
  Tensor x({n, m});
  for (auto& v : x.values()) v = rng.normal();
  return ad::constant(std::move(x));
}

}  // namespace

TEST(Piecewise1D, SingleCenterIsItsTaylorLine) {
  const ipa::TaylorPoint tp{1.0, 2.0, -3.0};
  const double bw = 0.5;
  for (double x : {-1.0, 0.0, 1.0, 4.0}) {
    EXPECT_NEAR(ipa::piecewise_affine_1d(x, {&tp, 1}, {&bw, 1}), 2.0 - 3.0 * (x - 1.0), 1e-14);
  }
}

TEST(Piecewise1D, BeatsBestSingleLineOnSine) {
  const double pi = std::numbers::pi;
  const std::vector<double> centers{pi / 6, pi / 2, 5 * pi / 6};
  std::vector<ipa::TaylorPoint> pts;
  for (double c : centers) pts.push_back({c, std::sin(c), std::cos(c)});
  const std::vector<double> bw(3, 0.3);
  double multi = 0.0, best_single = std::numeric_limits<double>::infinity();
  const int grid = 1001;
  for (double c0 = 0.0; c0 <= pi; c0 += pi / 200) {
    double single = 0.0;
    for (int g = 0; g < grid; ++g) {
      const double x = pi * g / (grid - 1);
      single = std::max(single, std::abs(std::sin(c0) + std::cos(c0) * (x - c0) - std::sin(x)));
    }
    best_single = std::min(best_single, single);
  }
  for (int g = 0; g < grid; ++g) {
    const double x = pi * g / (grid - 1);
    multi = std::max(multi, std::abs(ipa::piecewise_affine_1d(x, pts, bw) - std::sin(x)));
  }
  EXPECT_LT(2.0 * multi, best_single) << multi << " vs " << best_single;
}

TEST(Piecewise1D, Errors) {
  const std::vector<ipa::TaylorPoint> pts(2);
  const std::vector<double> one{1.0}, bad{1.0, 0.0};
  EXPECT_THROW(ipa::piecewise_affine_1d(0.0, {}, {}), ipa::ContractError);
  EXPECT_THROW(ipa::piecewise_affine_1d(0.0, pts, one), ipa::ContractError);
  EXPECT_THROW(ipa::piecewise_affine_1d(0.0, pts, bad), ipa::ContractError);
}

TEST(ColumnOp, MatchesNestedLoopOracle) {
  ipa::Rng rng(10);
  for (int trial = 0; trial < 50; ++trial) {
    auto cfg = tiny(1);
    cfg.column_mean = trial % 2 == 1;
    ipa::IPAModel model(cfg, trial);
    oracle::randomize(model, 100 + trial);
    const auto& col = model.layers()[0].column;
    const std::size_t m = 1 + rng.below(cfg.m_max);
    const auto x = random_input(rng, cfg.n, m);
    EXPECT_LT(oracle::max_abs_diff(oracle::column_forward(oracle::from(x), col),
                                   ipa::column_forward(x, col).value()),
              1e-9);
  }
}

TEST(ColumnOp, KernelMatchesOracleAndIsNormalized) {
  ipa::Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    ipa::IPAModel model(tiny(1), trial);
    oracle::randomize(model, 200 + trial);
    const auto& col = model.layers()[0].column;
    const std::size_t m = 6;
    const auto x = random_input(rng, 8, m);
    const auto K = ipa::column_kernel(x, col).value();
    const auto ref = oracle::column_kernel(oracle::from(x), col);
    ASSERT_EQ(K.shape(), (ipa::Shape{2, m, m}));
    for (std::size_t j = 0; j < m; ++j) {
      for (std::size_t l = 0; l < m; ++l) {
        double total = 0.0;
        for (std::size_t p = 0; p < 2; ++p) {
          const double v = K[(p * m + j) * m + l];
          EXPECT_NEAR(v, ref[p][j][l], 1e-12);
          if (l > j) EXPECT_EQ(v, 0.0);
          total += v;
        }
        if (l <= j) EXPECT_NEAR(total, 1.0, 1e-12);
      }
    }
  }
}

TEST(ColumnOp, SingleTokenIsAffine) {
  // m = 1: y = sum_p K^p S^p x + a with the K^p summing to one.
  ipa::IPAModel model(tiny(1), 3);
  oracle::randomize(model, 3);
  const auto& col = model.layers()[0].column;
  ipa::Rng rng(3);
  const auto x = random_input(rng, 8, 1);
  const auto y = ipa::column_forward(x, col).value();
  const auto ref = oracle::column_forward(oracle::from(x), col);
  EXPECT_LT(oracle::max_abs_diff(ref, y), 1e-12);
}

TEST(ColumnOp, RejectsLongSequences) {
  ipa::IPAModel model(tiny(1), 0);
  ipa::Rng rng(0);
  EXPECT_THROW(ipa::column_forward(random_input(rng, 8, 7), model.layers()[0].column),
               ipa::ContractError);
  EXPECT_THROW(ipa::column_forward(random_input(rng, 5, 3), model.layers()[0].column),
               ipa::ShapeError);
}

TEST(ColumnOp, GradientsMatchFiniteDifferences) {
  ipa::IPAModel model(tiny(1), 4);
  oracle::randomize(model, 4);
  ipa::Rng rng(4);
  const auto x = random_input(rng, 8, 5);
  std::vector<ad::Parameter> params;
  for (const auto& p : model.parameters()) {
    if (p.name.find(".column.") != std::string::npos) params.push_back(p);
  }
  const auto report = ad::grad_check(
      [&] { return ad::sum_all(ad::square(ipa::column_forward(x, model.layers()[0].column))); },
      params);
  EXPECT_LT(report.max_relative_error, 1e-5) << report.worst_parameter;
}

TEST(RowOp, MatchesNestedLoopOracle) {
  ipa::Rng rng(12);
  for (int trial = 0; trial < 50; ++trial) {
    ipa::IPAModel model(tiny(1), trial);
    oracle::randomize(model, 300 + trial);
    const auto& row = model.layers()[0].row;
    const std::size_t m = 1 + rng.below(6);
    const auto x = random_input(rng, 8, m);
    EXPECT_LT(oracle::max_abs_diff(oracle::row_forward(oracle::from(x), row),
                                   ipa::row_forward(x, row).value()),
              1e-9);
    const auto kappa = ipa::row_kernel(x, row).value();
    const auto ref = oracle::row_kernel(oracle::from(x), row);
    for (std::size_t j = 0; j < m; ++j) {
      EXPECT_NEAR(kappa(0, j) + kappa(1, j), 1.0, 1e-12);
      for (std::size_t p = 0; p < 2; ++p) EXPECT_NEAR(kappa(p, j), ref[p][j], 1e-12);
    }
  }
}

TEST(RowOp, ActsPerPosition) {
  ipa::IPAModel model(tiny(1), 5);
  oracle::randomize(model, 5);
  const auto& row = model.layers()[0].row;
  ipa::Rng rng(5);
  auto x = random_input(rng, 8, 4);
  const auto y = ipa::row_forward(x, row).value();
  Tensor changed = x.value();
  changed(3, 2) += 1.0;
  const auto y2 = ipa::row_forward(ad::constant(changed), row).value();
  for (std::size_t i = 0; i < 8; ++i) {
    for (std::size_t j : {0u, 1u, 3u}) EXPECT_EQ(y(i, j), y2(i, j));
  }
}

TEST(RowOp, SingleExpertIsPlainAffine) {
  auto cfg = tiny(1);
  cfg.p_row = 1;
  ipa::IPAModel model(cfg, 6);
  oracle::randomize(model, 6);
  const auto& row = model.layers()[0].row;
  ipa::Rng rng(6);
  const auto x = random_input(rng, 8, 3);
  const auto kappa = ipa::row_kernel(x, row).value();
  for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(kappa(0, j), 1.0);
  const auto expect = oracle::add(oracle::matmul(oracle::from(row.mix[0]), oracle::from(x)),
                                  oracle::from(ad::slice_cols(row.position_bias, 0, 3)));
  EXPECT_LT(oracle::max_abs_diff(expect, ipa::row_forward(x, row).value()), 1e-12);
}

TEST(RowOp, GradientsMatchFiniteDifferences) {
  ipa::IPAModel model(tiny(1), 7);
  oracle::randomize(model, 7);
  ipa::Rng rng(7);
  const auto x = random_input(rng, 8, 4);
  std::vector<ad::Parameter> params;
  for (const auto& p : model.parameters()) {
    if (p.name.find(".row.") != std::string::npos) params.push_back(p);
  }
  const auto report = ad::grad_check(
      [&] { return ad::sum_all(ad::square(ipa::row_forward(x, model.layers()[0].row))); }, params);
  EXPECT_LT(report.max_relative_error, 1e-5) << report.worst_parameter;
}

TEST(IPAModel, ForwardMatchesOracleAcrossOptions) {
  ipa::Rng rng(13);
  for (int trial = 0; trial < 24; ++trial) {
    auto cfg = tiny(1 + trial % 2);
    cfg.residual = trial & 2;
    cfg.layernorm = trial & 4;
    cfg.tie_head = !(trial & 8);
    cfg.column_mean = trial & 16;
    ipa::IPAModel model(cfg, trial);
    oracle::randomize(model, 400 + trial);
    const auto ids = oracle::random_ids(rng, 1 + rng.below(6), cfg.vocab);
    EXPECT_LT(oracle::max_abs_diff(oracle::ipa_logits(model, ids), model.forward(ids).value()), 1e-9)
        << "trial " << trial;
  }
}

TEST(IPAModel, OutputShapeAndEmptyStack) {
  auto cfg = tiny(0);
  ipa::IPAModel model(cfg, 1);
  const std::vector<std::int32_t> ids{1, 2, 3};
  const auto logits = model.forward(ids).value();
  EXPECT_EQ(logits.shape(), (ipa::Shape{20, 3}));
  // No layers: logits are E e_t + bias.
  const auto e = model.embedding().value();
  for (std::size_t j = 0; j < 3; ++j) {
    for (std::size_t v = 0; v < 20; ++v) {
      double s = 0.0;
      for (std::size_t i = 0; i < 8; ++i) s += e(v, i) * e(static_cast<std::size_t>(ids[j]), i);
      EXPECT_NEAR(logits(v, j), s, 1e-12);
    }
  }
  EXPECT_THROW(cfg.validate(), ipa::ConfigError);
}

TEST(IPAModel, InputErrors) {
  ipa::IPAModel model(tiny(), 1);
  const std::vector<std::int32_t> bad{1, 20};
  EXPECT_THROW(model.forward(bad), ipa::IndexError);
  const std::vector<std::int32_t> longer(7, 1);
  EXPECT_THROW(model.forward(longer), ipa::ContractError);
  EXPECT_THROW(model.forward({}), ipa::ContractError);
}

TEST(IPAModel, DeterministicGivenSeed) {
  ipa::IPAModel a(tiny(), 42), b(tiny(), 42), c(tiny(), 43);
  const std::vector<std::int32_t> ids{3, 1, 4, 1, 5};
  EXPECT_EQ(a.forward(ids).value(), b.forward(ids).value());
  EXPECT_NE(a.forward(ids).value(), c.forward(ids).value());
}

TEST(IPAModel, InitializationFollowsConvention) {
  ipa::IPAModel model(tiny(), 9);
  EXPECT_EQ(model.parameter("layers.0.column.bias").var.value(), Tensor::zeros({8, 1}));
  EXPECT_EQ(model.parameter("layers.0.row.position_bias").var.value(), Tensor::zeros({8, 6}));
  EXPECT_NEAR(model.parameter("layers.1.row.log_bandwidth").var.value()[0], std::log(std::sqrt(8.0)), 1e-15);
  EXPECT_LE(model.parameter("layers.0.row.mix.0").var.value().max_abs(), 1.0 / std::sqrt(8.0));
}

TEST(IPAModel, CausalUnderFuturePerturbation) {
  ipa::Rng rng(14);
  for (int trial = 0; trial < 30; ++trial) {
    auto cfg = tiny();
    cfg.residual = trial % 2;
    cfg.layernorm = trial % 3 == 0;
    ipa::IPAModel model(cfg, trial);
    oracle::randomize(model, trial);
    auto ids = oracle::random_ids(rng, 6, 20);
    const std::size_t l = 1 + rng.below(5);
    const auto before = model.forward(ids).value();
    ids[l] = static_cast<std::int32_t>((static_cast<std::size_t>(ids[l]) + 1 + rng.below(19)) % 20);
    const auto after = model.forward(ids).value();
    for (std::size_t j = 0; j < l; ++j) {
      for (std::size_t v = 0; v < 20; ++v) ASSERT_EQ(before(v, j), after(v, j));
    }
  }
}

TEST(IPAModel, FullGradientsMatchFiniteDifferences) {
  auto cfg = tiny();
  cfg.residual = true;
  cfg.layernorm = true;
  cfg.tie_head = false;
  ipa::IPAModel model(cfg, 15);
  oracle::randomize(model, 15, 0.3);
  const std::vector<std::int32_t> ids{1, 5, 9, 2, 2, 19}, targets{5, 9, 2, 2, 19, 0};
  const auto report = ad::grad_check(
      [&] { return ad::cross_entropy(model.forward(ids), targets); }, model.parameters());
  EXPECT_LT(report.max_relative_error, 1e-5) << report.worst_parameter;
}

TEST(ParamCount, HandExample) {
  // V=4, n=2, m=3, L=1, P_col=1, P_row=1, k=1, tied:
  // embedding 8 + head bias 4 + column 4*2 + 2 + row (4 + 2 + 1) + 2*3 = 35.
  ipa::ModelConfig c;
  c.vocab = 4;
  c.n = 2;
  c.m_max = 3;
  c.layers = 1;
  c.p_col = 1;
  c.p_row = 1;
  c.k = 1;
  EXPECT_EQ(ipa::param_count_ipa(c, 3), 35u);
  EXPECT_EQ(ipa::IPAModel(c, 0).parameter_count(), 35u);
}

TEST(ParamCount, MatchesRegisteredParameters) {
  for (int flags = 0; flags < 8; ++flags) {
    auto c = tiny();
    c.tie_head = flags & 1;
    c.layernorm = flags & 2;
    c.residual = flags & 4;
    EXPECT_EQ(ipa::param_count_ipa(c, c.m_max), ipa::IPAModel(c, 0).parameter_count());
  }
}

TEST(ParamCount, ReferenceConfigSequenceSlope) {
  ipa::ModelConfig c;  // defaults are the reference configuration
  c.vocab = 32000;
  EXPECT_EQ(ipa::param_count_ipa(c, 500) - ipa::param_count_ipa(c, 100), 192000u);
  EXPECT_EQ(ipa::param_count_ipa(c, 250) - ipa::param_count_ipa(c, 100), 72000u);
}
