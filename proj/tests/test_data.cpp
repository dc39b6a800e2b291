#include "ngvi/data.hpp"

#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

using namespace ngvi;

namespace {

// Fixture bytes written field by field, independent of serialize_idx_*.
// Three 2x3 images labelled 6, 8, 3.
const unsigned char kImages[] = {
    0x00, 0x00, 0x08, 0x03,  // magic 2051
    0x00, 0x00, 0x00, 0x03,  // n
    0x00, 0x00, 0x00, 0x02,  // rows
    0x00, 0x00, 0x00, 0x03,  // cols
    0, 255, 128, 1, 2, 3,
    10, 20, 30, 40, 50, 60,
    255, 254, 0, 0, 7, 200,
};
const unsigned char kLabels[] = {
    0x00, 0x00, 0x08, 0x01,  // magic 2049
    0x00, 0x00, 0x00, 0x03,
    6, 8, 3,
};

std::string bytes(const unsigned char* p, std::size_t n) { return std::string(reinterpret_cast<const char*>(p), n); }

std::string fixture_images() { return bytes(kImages, sizeof kImages); }
std::string fixture_labels() { return bytes(kLabels, sizeof kLabels); }

IdxError::Kind error_kind(const std::string& img, const std::string& lab) {
  try {
    parse_idx(img, lab);
  } catch (const IdxError& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no IdxError thrown";
  return IdxError::Kind::kIo;
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("ngvi_test_data_" + name);
}

}  // namespace

TEST(Idx, ParsesFixture) {
  const RawImageSet raw = parse_idx(fixture_images(), fixture_labels());
  ASSERT_EQ(raw.n(), 3u);
  EXPECT_EQ(raw.rows, 2u);
  EXPECT_EQ(raw.cols, 3u);
  ASSERT_EQ(raw.images.cols(), 6);
  EXPECT_EQ(raw.labels, (std::vector<std::uint8_t>{6, 8, 3}));
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 6; ++j) EXPECT_EQ(raw.images(i, j), kImages[16 + 6 * i + j] / 255.0);
  }
  EXPECT_EQ(raw.images(0, 1), 1.0);
  EXPECT_EQ(raw.images(0, 0), 0.0);
}

TEST(Idx, RoundTripIsBitExact) {
  const RawImageSet raw = parse_idx(fixture_images(), fixture_labels());
  EXPECT_EQ(serialize_idx_images(raw), fixture_images());
  EXPECT_EQ(serialize_idx_labels(raw), fixture_labels());

  const auto ip = temp_path("img.idx");
  const auto lp = temp_path("lab.idx");
  write_idx(raw, ip, lp);
  const RawImageSet again = load_idx(ip, lp);
  EXPECT_EQ(again.images, raw.images);
  EXPECT_EQ(again.labels, raw.labels);
  std::ifstream in(ip, std::ios::binary);
  std::string on_disk((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  EXPECT_EQ(on_disk, fixture_images());
  std::filesystem::remove(ip);
  std::filesystem::remove(lp);
}

TEST(Idx, DistinctErrors) {
  std::string img = fixture_images();
  img[3] = 0x02;
  EXPECT_EQ(error_kind(img, fixture_labels()), IdxError::Kind::kBadMagic);

  std::string lab = fixture_labels();
  lab[3] = 0x03;
  EXPECT_EQ(error_kind(fixture_images(), lab), IdxError::Kind::kBadMagic);

  // Label file claiming and holding n - 1 entries.
  lab = fixture_labels();
  lab[7] = 0x02;
  lab.pop_back();
  EXPECT_EQ(error_kind(fixture_images(), lab), IdxError::Kind::kCountMismatch);

  img = fixture_images();
  img.pop_back();
  EXPECT_EQ(error_kind(img, fixture_labels()), IdxError::Kind::kTruncated);
  EXPECT_EQ(error_kind(fixture_images().substr(0, 10), fixture_labels()), IdxError::Kind::kTruncated);

  try {
    load_idx(temp_path("does_not_exist"), temp_path("nor_this"));
    FAIL();
  } catch (const IdxError& e) {
    EXPECT_EQ(e.kind(), IdxError::Kind::kIo);
  }
}

TEST(FilterBinary, KeepsOrderAndMapsLabels) {
  const RawImageSet raw = parse_idx(fixture_images(), fixture_labels());
  const Dataset ds = filter_binary(raw, 6, 8);
  ASSERT_EQ(ds.n(), 2u);
  EXPECT_EQ(ds.d(), 6u);
  EXPECT_EQ(ds.y(0), 1.0);
  EXPECT_EQ(ds.y(1), -1.0);
  EXPECT_EQ(ds.x.row(0), raw.images.row(0));
  EXPECT_EQ(ds.x.row(1), raw.images.row(1));

  const Dataset swapped = filter_binary(raw, 3, 6);
  EXPECT_EQ(swapped.y(0), -1.0);
  EXPECT_EQ(swapped.y(1), 1.0);
  EXPECT_EQ(swapped.x.row(1), raw.images.row(2));

  EXPECT_THROW(filter_binary(raw, 1, 2), std::invalid_argument);
  EXPECT_THROW(filter_binary(raw, 6, 6), std::invalid_argument);
}

TEST(Csv, LastColumnIsLabel) {
  const auto path = temp_path("small.csv");
  {
    std::ofstream out(path);
    out << "a,b,label\n1.5,-2,1\n0, 3e-1 ,-1\r\n\n";
  }
  const Dataset ds = load_csv(path);
  ASSERT_EQ(ds.n(), 2u);
  ASSERT_EQ(ds.d(), 2u);
  EXPECT_EQ(ds.x(0, 0), 1.5);
  EXPECT_EQ(ds.x(0, 1), -2.0);
  EXPECT_EQ(ds.x(1, 1), 0.3);
  EXPECT_EQ(ds.y(0), 1.0);
  EXPECT_EQ(ds.y(1), -1.0);

  {
    std::ofstream out(path);
    out << "a,label\n1,2\n1,2,3\n";
  }
  EXPECT_THROW(load_csv(path), std::runtime_error);
  {
    std::ofstream out(path);
    out << "a,label\n1,x\n";
  }
  EXPECT_THROW(load_csv(path), std::runtime_error);
  std::filesystem::remove(path);
}

TEST(Synth, PoissonPoint) {
  const Dataset ds = synth("poisson_point", 7, 3, 99);
  ASSERT_EQ(ds.n(), 1u);
  ASSERT_EQ(ds.d(), 1u);
  EXPECT_EQ(ds.x(0, 0), 0.9);
  EXPECT_EQ(ds.y(0), 24.0);
}

TEST(Synth, DeterministicAndWellFormed) {
  const Dataset a = synth("logistic", 100, 2, 5);
  const Dataset b = synth("logistic", 100, 2, 5);
  EXPECT_EQ(a.x, b.x);
  EXPECT_EQ(a.y, b.y);
  const Dataset c = synth("logistic", 100, 2, 6);
  EXPECT_NE(a.x, c.x);
  for (double y : a.y) EXPECT_TRUE(y == 1.0 || y == -1.0);
  EXPECT_GT((a.y.array() > 0).count(), 0);
  EXPECT_GT((a.y.array() < 0).count(), 0);
  EXPECT_NO_THROW(LikelihoodModel::make(ModelKind::kLogistic, a));

  // Feature scale: E||x||^2 = 1.
  const Dataset big = synth("linear", 4000, 4, 1);
  EXPECT_NEAR(big.x.rowwise().squaredNorm().mean(), 1.0, 0.05);

  EXPECT_THROW(synth("probit", 10, 2, 0), std::invalid_argument);
  EXPECT_THROW(synth("logistic", 0, 2, 0), std::invalid_argument);
}
