#include <gtest/gtest.h>

#include "cmmi/csv.hpp"
#include "support/tempdir.hpp"

using namespace cmmi;

TEST(Csv, ReadsValuesAndMissingCells) {
  TempDir dir;
  const auto p = dir.write("m.csv", "1,2.5,NA\n-3, 4e2 ,5\n");
  const auto t = csv::read_table(p);
  ASSERT_EQ(t.values.rows(), 2);
  ASSERT_EQ(t.values.cols(), 3);
  EXPECT_EQ(t.values(0, 1), 2.5);
  EXPECT_EQ(t.values(1, 1), 400.0);
  EXPECT_FALSE(t.observed(0, 2));
  EXPECT_EQ(t.observed.count(), 5);
}

TEST(Csv, MissingTokenIsCaseSensitive) {
  TempDir dir;
  EXPECT_THROW(csv::read_table(dir.write("m.csv", "1,na\n")), DataError);
}

TEST(Csv, RaggedRowsAreRejected) {
  TempDir dir;
  EXPECT_THROW(csv::read_table(dir.write("m.csv", "1,2\n3\n")), DataError);
}

TEST(Csv, MissingFileIsDataError) { EXPECT_THROW(csv::read_table("/nonexistent/x.csv"), DataError); }

TEST(Csv, FormatRoundTripsDoublesExactly) {
  Matrix m(2, 2);
  m << 0.1, 1.0 / 3.0, -2e-300, 12345.678;
  Mask obs = Mask::Constant(2, 2, true);
  obs(1, 0) = false;
  TempDir dir;
  const auto p = dir.write("m.csv", csv::format_matrix(m, &obs));
  const auto t = csv::read_table(p);
  EXPECT_EQ(t.values(0, 0), m(0, 0));
  EXPECT_EQ(t.values(0, 1), m(0, 1));
  EXPECT_EQ(t.values(1, 1), m(1, 1));
  EXPECT_FALSE(t.observed(1, 0));
}

TEST(Csv, LabeledFormatHasHeaderAndRowIds) {
  Matrix m(2, 1);
  m << 1.5, 2;
  const std::vector<Index> rows{3, 7}, cols{9};
  EXPECT_EQ(csv::format_labeled(m, rows, cols), ",9\n3,1.5\n7,2\n");
}

TEST(Csv, AtomicWriteLeavesNoTempFile) {
  TempDir dir;
  const auto p = dir / "out.csv";
  csv::write_atomic(p, "a\n");
  csv::write_atomic(p, "b\n");
  EXPECT_EQ(read_file(p), "b\n");
  EXPECT_FALSE(std::filesystem::exists(dir / "out.csv.tmp"));
}
