#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "rar/embedding.hpp"
#include "rar/hash.hpp"

using namespace rar;

namespace {

std::string random_text(std::mt19937_64& rng) {
  static const std::string alphabet = "abcdefghijklmnopqrstuvwxyz ABCDEFG0123456789.,?";
  std::uniform_int_distribution<std::size_t> len(1, 80);
  std::uniform_int_distribution<std::size_t> pick(0, alphabet.size() - 1);
  std::string s;
  const std::size_t n = len(rng);
  for (std::size_t i = 0; i < n; ++i) s += alphabet[pick(rng)];
  if (trim(s).empty()) s = "x";
  return s;
}

double norm(const Embedding& v) {
  double sq = 0.0;
  for (double x : v) sq += x * x;
  return std::sqrt(sq);
}

}  // namespace

TEST(Cosine, SpecExamples) {
  EXPECT_EQ(cosine_similarity(std::vector<double>{1, 0}, std::vector<double>{0, 1}), 0.0);
  EXPECT_EQ(cosine_similarity(std::vector<double>{1, 0}, std::vector<double>{1, 0}), 1.0);
  // (3*4 + 4*3) / 25
  const std::vector<double> a{3.0 / 5, 4.0 / 5};
  const std::vector<double> b{4.0 / 5, 3.0 / 5};
  EXPECT_NEAR(cosine_similarity(a, b), 24.0 / 25.0, 1e-12);
}

TEST(Cosine, DimensionMismatchThrows) {
  EXPECT_THROW(cosine_similarity(std::vector<double>{1, 0}, std::vector<double>{1, 0, 0}),
               DimensionMismatch);
}

TEST(Cosine, ZeroVectorScoresZero) {
  EXPECT_EQ(cosine_similarity(std::vector<double>{0, 0}, std::vector<double>{1, 0}), 0.0);
}

TEST(FeatureHash, BucketsUseDocumentedHash) {
  FeatureHashEmbedder e(384);
  for (std::string gram : {"aaa", "zzz", "the", "q? "}) {
    EXPECT_EQ(e.bucket_of(gram), hash64(gram, kEmbedderSeed) % 384);
  }
}

TEST(FeatureHash, DisjointTrigramsByHand) {
  // "aaaa" has the 3-gram "aaa" twice, "zzzz" has "zzz" twice. Each embeds
  // to a single-bucket unit vector, so the cosine is 1 on a bucket collision
  // and 0 otherwise.
  FeatureHashEmbedder e(384);
  const std::size_t ba = hash64("aaa", kEmbedderSeed) % 384;
  const std::size_t bz = hash64("zzz", kEmbedderSeed) % 384;
  const double expected = ba == bz ? 1.0 : 0.0;

  const auto va = e.embed("aaaa");
  const auto vz = e.embed("zzzz");
  EXPECT_EQ(va[ba], 1.0);
  EXPECT_EQ(vz[bz], 1.0);
  EXPECT_EQ(cosine_similarity(va, vz), expected);
}

TEST(FeatureHash, ManualTrigramAccumulation) {
  // "abcab": grams abc, bca, cab.
  FeatureHashEmbedder e(64);
  std::vector<double> manual(64, 0.0);
  for (std::string g : {"abc", "bca", "cab"}) manual[hash64(g, kEmbedderSeed) % 64] += 1.0;
  double sq = 0.0;
  for (double x : manual) sq += x * x;
  for (double& x : manual) x /= std::sqrt(sq);
  const auto v = e.embed("  AbCaB ");
  ASSERT_EQ(v.size(), 64u);
  for (std::size_t i = 0; i < 64; ++i) EXPECT_DOUBLE_EQ(v[i], manual[i]) << i;
}

TEST(FeatureHash, ShortTextUsesWholeString) {
  FeatureHashEmbedder e(384);
  const auto v = e.embed("ok");
  const std::size_t b = hash64("ok", kEmbedderSeed) % 384;
  EXPECT_EQ(v[b], 1.0);
  EXPECT_NEAR(norm(v), 1.0, 1e-12);
}

TEST(FeatureHash, EmptyTextThrows) {
  FeatureHashEmbedder e;
  EXPECT_THROW(e.embed(""), EmptyText);
  EXPECT_THROW(e.embed(" \t\n"), EmptyText);
}

TEST(FeatureHash, CaseInsensitive) {
  FeatureHashEmbedder e;
  EXPECT_EQ(e.embed("Hello World"), e.embed("hello world"));
}

TEST(FeatureHash, PropertySuite) {
  FeatureHashEmbedder e(384);
  std::mt19937_64 rng(12345);
  for (int i = 0; i < 1000; ++i) {
    const auto a = random_text(rng);
    const auto b = random_text(rng);
    const auto va = e.embed(a);
    EXPECT_EQ(va, e.embed(a));
    EXPECT_EQ(va.size(), 384u);
    EXPECT_NEAR(norm(va), 1.0, 1e-6);
    const auto vb = e.embed(b);
    EXPECT_EQ(cosine_similarity(va, vb), cosine_similarity(vb, va));
    EXPECT_NEAR(cosine_similarity(va, va), 1.0, 1e-9);
    EXPECT_NEAR(cosine_similarity(va, vb), oracle::dense_cosine(va, vb), 1e-12);
  }
}

TEST(FeatureHash, SharedTrigramsScoreHigher) {
  FeatureHashEmbedder e;
  const auto base = e.embed("the defendant breached the contract");
  const auto near = e.embed("the defendant breached a lease contract");
  const auto far = e.embed("photosynthesis in green leaves");
  EXPECT_GT(cosine_similarity(base, near), cosine_similarity(base, far));
}

TEST(Normalize, ZeroVectorUntouched) {
  Embedding z{0.0, 0.0};
  EXPECT_FALSE(normalize(z));
  Embedding v{3.0, 4.0};
  EXPECT_TRUE(normalize(v));
  EXPECT_DOUBLE_EQ(v[0], 0.6);
  EXPECT_DOUBLE_EQ(v[1], 0.8);
}

TEST(MakeEmbedder, ExternalNeedsEndpoint) {
  EXPECT_THROW(make_embedder({EmbedderSpec::Kind::ExternalService, std::nullopt}, 8),
               InvariantViolation);
  EXPECT_EQ(make_embedder({}, 16)->dimension(), 16u);
}
