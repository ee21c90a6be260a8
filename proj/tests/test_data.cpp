#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>

#include <gtest/gtest.h>

#include "cdm/data.hpp"

using namespace cdm;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("cdm_test_data_" + name)).string();
}

Dataset toy() {
  Dataset d;
  d.x.resize(4, 2);
  d.y.resize(4, 1);
  d.x << 1, 5, 2, 5, 3, 5, 4, 5;
  d.y << 10, 20, 30, 40;
  return d;
}

}  // namespace

TEST(Standardizer, ZeroMeanUnitVariance) {
  const Dataset d = toy();
  const Standardizer s = Standardizer::fit(d);
  const Dataset t = s.transform(d);
  EXPECT_NEAR(t.x.col(0).mean(), 0.0, 1e-15);
  EXPECT_NEAR(t.x.col(0).squaredNorm() / 4.0, 1.0, 1e-14);
  EXPECT_NEAR(s.std_y[0], std::sqrt(125.0), 1e-12);
}

TEST(Standardizer, ConstantFeaturePassesThrough) {
  const Standardizer s = Standardizer::fit(toy());
  EXPECT_EQ(s.std_x[1], 1.0);
  EXPECT_EQ(s.transform_x(toy().x).col(1).squaredNorm(), 0.0);
}

TEST(Standardizer, InverseRoundTrip) {
  const Dataset d = toy();
  const Standardizer s = Standardizer::fit(d);
  const Matrix back = s.inverse_y(s.transform_y(d.y));
  EXPECT_LT((back - d.y).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Standardizer, EmptySplitIsAnError) {
  EXPECT_THROW(Standardizer::fit(Dataset{}), DataError);
}

TEST(Split, DefaultCountsFor3000) {
  const SplitIndices s = make_split(3000, {}, 0);
  EXPECT_EQ(s.train.size(), 2550u);
  EXPECT_EQ(s.test.size(), 315u);
  EXPECT_EQ(s.val.size(), 135u);
}

TEST(Split, PartitionIsDisjointAndComplete) {
  const SplitIndices s = make_split(1000, {}, 42);
  std::set<std::size_t> all;
  for (const auto* part : {&s.train, &s.test, &s.val}) all.insert(part->begin(), part->end());
  EXPECT_EQ(all.size(), 1000u);
  EXPECT_EQ(*all.rbegin(), 999u);
}

TEST(Split, SeedControlsAssignment) {
  EXPECT_EQ(make_split(500, {}, 3).train, make_split(500, {}, 3).train);
  EXPECT_NE(make_split(500, {}, 3).train, make_split(500, {}, 4).train);
  EXPECT_THROW(make_split(10, {0.5, 0.5, 0.5}, 0), ConfigError);
}

TEST(Csv, DoublesRoundTripExactly) {
  Dataset d;
  d.x.resize(3, 1);
  d.y.resize(3, 2);
  d.x << 0.1, 1.0 / 3.0, 6.02214076e23;
  d.y << std::numeric_limits<double>::denorm_min(), -2.5e-300, 1e-17, 123456789.123456789, -0.0,
      std::nextafter(1.0, 2.0);
  const std::string path = temp_path("roundtrip.csv");
  write_dataset_csv(path, d);
  const Dataset r = read_dataset_csv(path);
  ASSERT_EQ(r.size(), 3);
  for (Eigen::Index i = 0; i < 3; ++i) {
    EXPECT_EQ(r.x(i, 0), d.x(i, 0));
    for (int k = 0; k < 2; ++k) EXPECT_EQ(r.y(i, k), d.y(i, k));
  }
  std::remove(path.c_str());
}

TEST(Csv, HeaderNamesColumns) {
  const std::string path = temp_path("header.csv");
  write_dataset_csv(path, toy());
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "x_1,x_2,y_1");
  std::remove(path.c_str());
}

TEST(Csv, ConditionsOnlyFile) {
  const std::string path = temp_path("xonly.csv");
  std::ofstream(path) << "x_1,x_2\n1,2\n3,4\n";
  const Dataset d = read_dataset_csv(path);
  EXPECT_EQ(d.size(), 2);
  EXPECT_EQ(d.dim_y(), 0);
  std::remove(path.c_str());
}

TEST(Csv, MalformedInputsAreDataErrors) {
  const std::string path = temp_path("bad.csv");
  std::ofstream(path) << "x_1,y_1\n1,abc\n";
  EXPECT_THROW(read_dataset_csv(path), DataError);
  std::ofstream(path) << "x_1,y_1\n1\n";
  EXPECT_THROW(read_dataset_csv(path), DataError);
  std::ofstream(path) << "x_1,z_1\n1,2\n";
  EXPECT_THROW(read_dataset_csv(path), DataError);
  std::remove(path.c_str());
  EXPECT_THROW(read_dataset_csv(temp_path("missing.csv")), DataError);
}

TEST(Csv, ParseDouble) {
  EXPECT_EQ(parse_double(" 1.5e-3 "), 1.5e-3);
  EXPECT_EQ(parse_double("+2"), 2.0);
  EXPECT_THROW(parse_double("1.0x"), DataError);
  EXPECT_THROW(parse_double(""), DataError);
}
