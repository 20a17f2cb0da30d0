#include "copulaflow/discrete.hpp"
#include "copulaflow/errors.hpp"
#include "copulaflow/random.hpp"
#include "copulaflow/special.hpp"
#include "copulaflow/stats.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <map>

using namespace copulaflow;

namespace {

CategoryCodec
codec_of(std::vector<std::string> labels, bool ordinal)
{
  return build_codec(labels, ordinal);
}

CategoryCodec
binary_codec()
{
  return CategoryCodec({ "0", "1" }, true);
}

DiscreteConfig
small_config(std::uint64_t seed)
{
  DiscreteConfig c;
  c.epochs = 60;
  c.batch_size = 256;
  c.learning_rate = 1e-2;
  c.seed = seed;
  return c;
}

Eigen::VectorXi
bernoulli_codes(double p, Eigen::Index n, std::uint64_t seed)
{
  Rng rng(seed);
  Eigen::VectorXi c(n);
  for (auto& v : c)
    v = rng.uniform() < p ? 1 : 0;
  return c;
}

struct HyperFit
{
  Eigen::VectorXi codes;
  DiscreteMarginalFlow model;
};

//! Fit on 10,000 draws from the hypergeometric (20, 7, 12) law, support 0..7.
const HyperFit&
hypergeometric_fit()
{
  static const HyperFit fit = [] {
    Rng rng(77);
    Eigen::VectorXi codes(10000);
    for (auto& v : codes)
      v = hypergeometric_quantile(rng.uniform_open(), 20, 7, 12);
    std::vector<std::string> labels;
    for (int k = 0; k <= 7; ++k)
      labels.push_back(std::to_string(k));
    const CategoryCodec codec(labels, true);
    return HyperFit{ codes, fit_discrete(codes, codec, small_config(5), "x2").model };
  }();
  return fit;
}

//! Random latent spline over (-1, n - 1).
DiscreteMarginalFlow
random_model(int n, Rng& rng)
{
  std::vector<std::string> labels;
  for (int k = 0; k < n; ++k)
    labels.push_back("c" + std::to_string(k));
  const Eigen::Index bins = default_discrete_bins(n);
  Eigen::VectorXd flat(RawSplineParamsd::flat_size(bins));
  for (auto& v : flat)
    v = 1.5 * rng.normal();
  return DiscreteMarginalFlow(CategoryCodec(labels, false),
                              RawSplineParamsd::from_flat(flat, -1.0, n - 1.0), "c");
}

} // namespace

TEST(Codec, LexicographicOrder)
{
  const auto c = codec_of({ "b", "a", "c", "a" }, false);
  EXPECT_EQ(c.encode("a"), 0);
  EXPECT_EQ(c.encode("b"), 1);
  EXPECT_EQ(c.encode("c"), 2);
  EXPECT_THROW(c.encode("d"), DataError);
}

TEST(Codec, NumericOrderForOrdinals)
{
  const auto c = codec_of({ "3", "1", "2", "10" }, true);
  EXPECT_EQ(c.encode("1"), 0);
  EXPECT_EQ(c.encode("2"), 1);
  EXPECT_EQ(c.encode("3"), 2);
  EXPECT_EQ(c.encode("10"), 3);
  EXPECT_EQ(c.numeric_value(3), 10.0);
  EXPECT_THROW(codec_of({ "1", "x" }, true), DataError);
}

TEST(Codec, EncodeDecodeRoundTrip)
{
  std::vector<std::string> labels;
  for (int i = 0; i < 26; ++i)
    labels.push_back(std::string(1, static_cast<char>('a' + i)) + std::to_string(i % 3));
  const auto c = codec_of(labels, false);
  Rng rng(3);
  for (int i = 0; i < 1000; ++i) {
    const auto& s = labels[static_cast<std::size_t>(rng.index(26))];
    EXPECT_EQ(c.decode(c.encode(s)), s);
  }
}

TEST(Codec, SingleClassIsDegenerate)
{
  EXPECT_THROW(codec_of({ "a", "a" }, false), DegenerateDataError);
}

TEST(Discrete, UniformLatentExamples)
{
  const auto m = DiscreteMarginalFlow::uniform(binary_codec(), 8);
  EXPECT_NEAR(pmf(m, 0), 0.5, 1e-12);
  EXPECT_NEAR(pmf(m, 1), 0.5, 1e-12);
  EXPECT_THROW(pmf(m, 2), ArgumentError);

  // Latent x = 2u - 1 on (-1, 1).
  EXPECT_EQ(sample_code(m, (-0.3 + 1.0) / 2.0), 0);
  EXPECT_EQ(sample_code(m, (0.4 + 1.0) / 2.0), 1);
  EXPECT_EQ(sample_code(m, 0.5), 0); // x = 0 sits in the cell (-1, 0]
  EXPECT_EQ(sample_code(m, 1.0), 1);
  EXPECT_EQ(sample_code(m, 0.0), 0);

  EXPECT_NEAR(dist_transform(m, 0, 0.6), 0.3, 1e-12);
  EXPECT_EQ(dist_transform(m, 1, 1.0), 1.0);
  EXPECT_THROW(dist_transform(m, 0, 1.5), ArgumentError);
}

TEST(Discrete, BernoulliFits)
{
  for (double p : { 0.5, 0.7 }) {
    const auto fit = fit_discrete(bernoulli_codes(p, 10000, 9), binary_codec(), small_config(1));
    EXPECT_NEAR(pmf(fit.model, 1), p, 0.02) << "p = " << p;
  }
}

TEST(Discrete, ConstantCodesRejected)
{
  EXPECT_THROW(fit_discrete(Eigen::VectorXi::Ones(100), binary_codec(), small_config(1)),
               DegenerateDataError);
  EXPECT_THROW(fit_discrete(Eigen::VectorXi::Constant(10, 5), binary_codec(), small_config(1)), DataError);
}

TEST(Discrete, HypergeometricTotalVariation)
{
  const auto& h = hypergeometric_fit();
  std::vector<double> freq(8, 0.0);
  for (int c : h.codes)
    freq[static_cast<std::size_t>(c)] += 1.0 / static_cast<double>(h.codes.size());
  double tv = 0.0;
  for (int k = 0; k < 8; ++k)
    tv += 0.5 * std::abs(pmf(h.model, k) - freq[static_cast<std::size_t>(k)]);
  EXPECT_LE(tv, 0.02);
}

TEST(Discrete, HypergeometricTransformIsUniform)
{
  const auto& h = hypergeometric_fit();
  Rng rng(12);
  Eigen::VectorXd u(h.codes.size()), ref(h.codes.size());
  for (Eigen::Index i = 0; i < u.size(); ++i)
    u(i) = dist_transform(h.model, h.codes(i), rng.uniform_open());
  for (auto& v : ref)
    v = rng.uniform_open();
  const auto ks = ks_two_sample(u, ref);
  EXPECT_GT(ks.p_value, 0.01) << "D = " << ks.statistic;
}

TEST(Discrete, SampleFrequenciesMatchCellMass)
{
  const auto& m = hypergeometric_fit().model;
  Rng rng(2);
  std::vector<double> freq(8, 0.0);
  constexpr int n = 100000;
  for (int i = 0; i < n; ++i)
    freq[static_cast<std::size_t>(sample_code(m, rng.uniform()))] += 1.0 / n;
  for (int k = 0; k < 8; ++k)
    EXPECT_NEAR(freq[static_cast<std::size_t>(k)], pmf(m, k), 0.01);
}

TEST(Discrete, PmfSumsToOne)
{
  Rng rng(42);
  for (int t = 0; t < 100; ++t) {
    const auto m = random_model(2 + static_cast<int>(rng.index(12)), rng);
    double s = 0.0;
    for (int k = 0; k < m.n_classes(); ++k) {
      EXPECT_GT(pmf(m, k), 0.0);
      s += pmf(m, k);
    }
    EXPECT_NEAR(s, 1.0, 1e-10);
  }
}

TEST(Discrete, GridSweepMatchesCells)
{
  Rng rng(8);
  for (int t = 0; t < 20; ++t) {
    const auto m = random_model(2 + static_cast<int>(rng.index(9)), rng);
    const auto& e = m.edges();
    for (int i = 0; i <= 20000; ++i) {
      const double u = i / 20000.0;
      const int k = sample_code(m, u);
      if (u > 0.0) {
        EXPECT_GT(u, e(k));
      }
      EXPECT_LE(u, e(k + 1));
      // The ceiling rule on the latent value agrees away from cell edges.
      const double x = rq_forward(m.spline(), u).value;
      if (std::abs(x - std::round(x)) > 1e-9)
        EXPECT_EQ(k, std::clamp(static_cast<int>(std::ceil(x)), 0, m.n_classes() - 1));
    }
  }
}

TEST(Discrete, SampleCodeInvertsTransform)
{
  Rng rng(6);
  for (int t = 0; t < 50; ++t) {
    const auto m = random_model(2 + static_cast<int>(rng.index(12)), rng);
    for (int k = 0; k < m.n_classes(); ++k) {
      for (double v : { 1e-300, 1e-12, 0.25, 0.5, 0.999, 1.0 })
        EXPECT_EQ(sample_code(m, dist_transform(m, k, v)), k);
      for (int r = 0; r < 20; ++r)
        EXPECT_EQ(sample_code(m, dist_transform(m, k, rng.uniform_open())), k);
    }
  }
}
