#include <gtest/gtest.h>

#include <cmath>
#include <cstdint>
#include <cstring>
#include <optional>
#include <filesystem>
#include <limits>
#include <map>
#include <vector>

#include "fre/feature_store.hpp"
#include "fre/random.hpp"

namespace {

using fre::Errc;
using fre::FeatureMatrix;
using fre::Label;

std::vector<std::uint8_t> header(std::uint64_t rows, std::uint64_t cols, std::uint8_t flags = 0) {
  std::vector<std::uint8_t> b{'F', 'M', 'X', '1', 1, flags, 0, 0};
  for (int i = 0; i < 8; ++i) b.push_back(static_cast<std::uint8_t>(rows >> (8 * i)));
  for (int i = 0; i < 8; ++i) b.push_back(static_cast<std::uint8_t>(cols >> (8 * i)));
  return b;
}

void append_f32(std::vector<std::uint8_t>& b, float v) {
  std::uint32_t u = 0;
  std::memcpy(&u, &v, 4);
  for (int i = 0; i < 4; ++i) b.push_back(static_cast<std::uint8_t>(u >> (8 * i)));
}

Errc decode_error(const std::vector<std::uint8_t>& bytes) {
  try {
    fre::decode_features(bytes);
  } catch (const fre::Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "decode succeeded";
  return Errc::io_failure;
}

FeatureMatrix random_matrix(fre::Rng& rng, std::size_t rows, std::size_t cols, bool labels) {
  std::vector<float> data(rows * cols);
  for (auto& v : data) v = static_cast<float>(rng.normal() * 10.0);
  std::optional<std::vector<Label>> l;
  if (labels) {
    l.emplace(rows);
    for (auto& x : *l) x = static_cast<Label>(rng.below(5));
  }
  return FeatureMatrix(rows, cols, std::move(data), std::move(l));
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("fre_test_fs_" + name);
}

TEST(FeatureMatrix, RejectsNonFiniteAndBadLabels) {
  EXPECT_THROW(FeatureMatrix(1, 2, {1.0f, std::numeric_limits<float>::infinity()}), fre::Error);
  try {
    FeatureMatrix(2, 1, {1.0f, 2.0f}, std::vector<Label>{0});
    FAIL();
  } catch (const fre::Error& e) {
    EXPECT_EQ(e.code(), Errc::label_length_mismatch);
  }
  try {
    FeatureMatrix(1, 1, {1.0f}, std::vector<Label>{-1});
    FAIL();
  } catch (const fre::Error& e) {
    EXPECT_EQ(e.code(), Errc::invalid_label);
  }
}

TEST(FeatureMatrix, ClassCountIsOnePlusMaxLabel) {
  FeatureMatrix m(3, 1, {1, 2, 3}, std::vector<Label>{0, 4, 0});
  EXPECT_EQ(m.class_count(), 5u);
  EXPECT_EQ(m.label_set(), (std::vector<Label>{0, 4}));
}

TEST(Fmx, ReadBackTwoByThree) {
  FeatureMatrix m(2, 3, {1, 2, 3, 4, 5, 6});
  const auto path = temp_path("2x3.fmx");
  fre::write_features(m, path);
  const auto back = fre::read_features(path);
  EXPECT_EQ(back.rows(), 2u);
  EXPECT_EQ(back.cols(), 3u);
  EXPECT_EQ(back, m);
  std::filesystem::remove(path);
}

TEST(Fmx, OneByOneExactBytes) {
  auto expected = header(1, 1);
  append_f32(expected, 0.5f);
  ASSERT_EQ(expected.size(), 28u);
  EXPECT_EQ(fre::encode_features(FeatureMatrix(1, 1, {0.5f})), expected);
  EXPECT_EQ(expected[24], 0x00);
  EXPECT_EQ(expected[27], 0x3F);
}

TEST(Fmx, LabelBlockPresent) {
  FeatureMatrix m(3, 1, {1, 2, 3}, std::vector<Label>{0, 1, 0});
  const auto bytes = fre::encode_features(m);
  ASSERT_EQ(bytes.size(), 24u + 12u + 12u);
  EXPECT_EQ(bytes[5], 0x01);
  EXPECT_EQ(bytes[36], 0);
  EXPECT_EQ(bytes[40], 1);
  EXPECT_EQ(bytes[44], 0);
  EXPECT_EQ(fre::decode_features(bytes), m);
}

TEST(Fmx, EmptyMatrixHeader) {
  EXPECT_EQ(decode_error(header(0, 3)), Errc::empty_matrix);
  EXPECT_EQ(decode_error(header(3, 0)), Errc::empty_matrix);
}

TEST(Fmx, NanPayload) {
  auto b = header(1, 2);
  append_f32(b, 1.0f);
  append_f32(b, std::numeric_limits<float>::quiet_NaN());
  EXPECT_EQ(decode_error(b), Errc::non_finite_value);
}

TEST(Fmx, DistinctErrorsForMalformedFiles) {
  auto good = header(1, 2);
  append_f32(good, 1.0f);
  append_f32(good, 2.0f);

  auto magic = good;
  magic[3] = '2';
  EXPECT_EQ(decode_error(magic), Errc::bad_magic);
  EXPECT_EQ(decode_error({'F', 'M'}), Errc::bad_magic);

  auto truncated = good;
  truncated.pop_back();
  EXPECT_EQ(decode_error(truncated), Errc::truncated_payload);
  EXPECT_EQ(decode_error(header(1, 2)), Errc::truncated_payload);

  auto dtype = good;
  dtype[4] = 2;
  EXPECT_EQ(decode_error(dtype), Errc::bad_header);
  auto reserved = good;
  reserved[7] = 1;
  EXPECT_EQ(decode_error(reserved), Errc::bad_header);

  auto labels_short = good;
  labels_short[5] = 1;
  labels_short.push_back(0);
  EXPECT_EQ(decode_error(labels_short), Errc::label_length_mismatch);

  auto trailing = good;
  trailing.push_back(0);
  EXPECT_EQ(decode_error(trailing), Errc::trailing_data);

  auto negative = good;
  negative[5] = 1;
  for (int i = 0; i < 4; ++i) negative.push_back(0xFF);
  EXPECT_EQ(decode_error(negative), Errc::invalid_label);

  EXPECT_NO_THROW(fre::decode_features(good));
}

TEST(Fmx, MissingFileIsIoFailure) {
  try {
    fre::read_features("/nonexistent/dir/x.fmx");
    FAIL();
  } catch (const fre::Error& e) {
    EXPECT_EQ(e.code(), Errc::io_failure);
  }
}

TEST(Fmx, RoundTripIsBitExactProperty) {
  fre::Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const auto rows = 1 + rng.below(12);
    const auto cols = 1 + rng.below(7);
    const auto m = random_matrix(rng, rows, cols, trial % 2 == 0);
    const auto bytes = fre::encode_features(m);
    const auto back = fre::decode_features(bytes);
    ASSERT_EQ(back, m);
    ASSERT_EQ(fre::encode_features(back), bytes);
  }
}

TEST(Fmx, RandomTenByFourFileRoundTrip) {
  fre::Rng rng(3);
  const auto m = random_matrix(rng, 10, 4, false);
  const auto path = temp_path("10x4.fmx");
  fre::write_features(m, path);
  const auto bytes = fre::detail::read_file_bytes(path);
  EXPECT_EQ(bytes, fre::encode_features(m));
  EXPECT_EQ(fre::read_features(path), m);
  std::filesystem::remove(path);
}

TEST(ScoreCsv, RoundTripsDoublesExactly) {
  fre::Rng rng(5);
  fre::ScoreVector s;
  for (int i = 0; i < 200; ++i) s.scores.push_back(std::abs(rng.normal()) * std::pow(10.0, rng.below(20) - 10.0));
  s.scores.push_back(0.0);
  const auto text = fre::encode_scores(s);
  EXPECT_EQ(text.substr(0, 12), "index,score\n");
  const auto back = fre::decode_scores(text);
  ASSERT_EQ(back.scores.size(), s.scores.size());
  for (std::size_t i = 0; i < s.scores.size(); ++i) EXPECT_EQ(back.scores[i], s.scores[i]);
}

TEST(ScoreCsv, RejectsMalformedText) {
  EXPECT_THROW(fre::decode_scores(""), fre::Error);
  EXPECT_THROW(fre::decode_scores("i,s\n0,1\n"), fre::Error);
  EXPECT_THROW(fre::decode_scores("index,score\n1,0.5\n"), fre::Error);
  EXPECT_THROW(fre::decode_scores("index,score\n0,abc\n"), fre::Error);
  EXPECT_THROW(fre::decode_scores("index,score\n0,nan\n"), fre::Error);
  EXPECT_EQ(fre::decode_scores("index,score\r\n0,0.25\r\n1,1\r\n").scores,
            (std::vector<double>{0.25, 1.0}));
}

TEST(Rng, EngineMatchesStandardSequence) {
  // The standard pins the 10000th output of a default-seeded mt19937_64.
  fre::Rng rng(5489u);
  std::uint64_t v = 0;
  for (int i = 0; i < 10000; ++i) v = rng.next();
  EXPECT_EQ(v, 9981545732273789042ULL);
}

TEST(Rng, BoundedDrawsStayInRange) {
  fre::Rng rng(1);
  std::vector<int> hist(7, 0);
  for (int i = 0; i < 7000; ++i) hist[rng.below(7)]++;
  for (int h : hist) EXPECT_GT(h, 800);
  EXPECT_EQ(rng.below(1), 0u);
}

TEST(Subsample, FullFractionIsIdentity) {
  fre::Rng rng(2);
  const auto m = random_matrix(rng, 20, 3, true);
  EXPECT_EQ(fre::subsample(m, 1.0, 99), m);
}

TEST(Subsample, SingleClassCount) {
  fre::Rng rng(2);
  const auto m = random_matrix(rng, 10, 2, false);
  const auto s = fre::subsample(m, 0.2, 7);
  EXPECT_EQ(s.rows(), 2u);
}

TEST(Subsample, StratifiedExactPerClassCounts) {
  std::vector<float> data(100);
  std::vector<Label> labels(100);
  for (int i = 0; i < 100; ++i) {
    data[i] = static_cast<float>(i);
    labels[i] = i % 2;
  }
  const FeatureMatrix m(100, 1, data, labels);
  const auto s = fre::subsample(m, 0.2, 1);
  std::map<Label, int> counts;
  for (Label l : *s.labels()) counts[l]++;
  EXPECT_EQ(counts[0], 10);
  EXPECT_EQ(counts[1], 10);
  // kept rows keep file order and carry their own labels
  for (std::size_t i = 0; i < s.rows(); ++i) {
    const int original = static_cast<int>(s.row(i)[0]);
    EXPECT_EQ((*s.labels())[i], original % 2);
    if (i) {
      EXPECT_LT(s.row(i - 1)[0], s.row(i)[0]);
    }
  }
}

TEST(Subsample, CeilPerClassProperty) {
  fre::Rng rng(8);
  for (int trial = 0; trial < 30; ++trial) {
    const auto m = random_matrix(rng, 30 + rng.below(40), 2, true);
    const double f = 0.3 + 0.7 * rng.uniform();
    std::map<Label, std::size_t> before, after;
    for (Label l : *m.labels()) before[l]++;
    bool empties = false;
    for (auto [l, n] : before) empties |= f * static_cast<double>(n) < 1.0;
    if (empties) {
      EXPECT_THROW(fre::subsample(m, f, trial), fre::Error);
      continue;
    }
    const auto s = fre::subsample(m, f, trial);
    for (Label l : *s.labels()) after[l]++;
    for (auto [l, n] : before) EXPECT_EQ(after[l], static_cast<std::size_t>(std::ceil(f * n - 1e-9)));
  }
}

TEST(Subsample, DeterministicForSeed) {
  fre::Rng rng(4);
  const auto m = random_matrix(rng, 50, 2, true);
  EXPECT_EQ(fre::subsample(m, 0.5, 42), fre::subsample(m, 0.5, 42));
  EXPECT_NE(fre::subsample(m, 0.5, 42), fre::subsample(m, 0.5, 43));
}

TEST(Subsample, Errors) {
  const FeatureMatrix m(4, 1, {1, 2, 3, 4}, std::vector<Label>{0, 0, 0, 1});
  for (double f : {0.0, -0.1, 1.5}) {
    try {
      fre::subsample(m, f, 0);
      FAIL();
    } catch (const fre::Error& e) {
      EXPECT_EQ(e.code(), Errc::fraction_out_of_range);
    }
  }
  try {
    fre::subsample(m, 0.5, 0);
    FAIL();
  } catch (const fre::Error& e) {
    EXPECT_EQ(e.code(), Errc::class_emptied);
  }
}

}  // namespace
