#include "dmgrad/io.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>

using namespace dmgrad;
namespace fs = std::filesystem;

namespace {

class TempDir : public ::testing::Test
{
protected:
  void SetUp() override
  {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / (std::string("dmgrad_io_") + info->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path write(const std::string& name, const std::string& text) const
  {
    const auto path = dir_ / name;
    std::ofstream(path) << text;
    return path;
  }

  static std::string slurp(const fs::path& path)
  {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  }

  fs::path dir_;
};

} // namespace

TEST(Fmt, RoundTripsExactly)
{
  for (double v : {0.0, 1.0, -2.5, 0.1, 1.0 / 3.0, 6.02214076e23, 5e-324, std::numeric_limits<double>::max()})
    EXPECT_EQ(std::strtod(io::fmt(v).c_str(), nullptr), v) << io::fmt(v);
  EXPECT_EQ(io::fmt(0.5), "0.5");
}

TEST(MatrixJson, RowMajorLayout)
{
  Matrix m(2, 3);
  m << 1, 2, 3, 4, 5, 6;
  const auto j = io::matrix_json(m);
  EXPECT_EQ(j["rows"], 2);
  EXPECT_EQ(j["cols"], 3);
  EXPECT_EQ(j["data"].get<std::vector<double>>(), (std::vector<double>{1, 2, 3, 4, 5, 6}));
}

TEST_F(TempDir, CsvWriterAndReaderAgree)
{
  {
    io::CsvWriter w(dir_ / "sub" / "pts.csv", {"x", "y"});
    w.row({io::fmt(0.1), io::fmt(-3.0)});
    w.row({io::fmt(1.0 / 7.0), io::fmt(2e-8)});
  }
  EXPECT_EQ(slurp(dir_ / "sub" / "pts.csv").substr(0, 4), "x,y\n");
  const Matrix m = io::read_points_csv(dir_ / "sub" / "pts.csv");
  ASSERT_EQ(m.rows(), 2);
  ASSERT_EQ(m.cols(), 2);
  EXPECT_EQ(m(1, 0), 1.0 / 7.0);
  EXPECT_EQ(m(1, 1), 2e-8);
}

TEST_F(TempDir, ReaderAcceptsHeaderlessAndCrlf)
{
  const Matrix m = io::read_points_csv(write("a.csv", "1,2\r\n3, 4\r\n\r\n5,6\n"));
  EXPECT_EQ(m.rows(), 3);
  EXPECT_EQ(m(1, 1), 4.0);
}

TEST_F(TempDir, ReaderNamesMalformedLine)
{
  const auto path = write("bad.csv", "x,y\n1,2\n3,abc\n");
  try {
    io::read_points_csv(path);
    FAIL() << "expected invalid_argument";
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("bad.csv:3: malformed numeric row"), std::string::npos) << e.what();
  }
}

TEST_F(TempDir, ReaderRejectsRaggedRowsAndEmptyFiles)
{
  EXPECT_THROW(io::read_points_csv(write("ragged.csv", "1,2\n3\n")), std::invalid_argument);
  EXPECT_THROW(io::read_points_csv(write("empty.csv", "x,y\n")), std::invalid_argument);
  EXPECT_THROW(io::read_points_csv(dir_ / "missing.csv"), std::invalid_argument);
  EXPECT_THROW(io::read_points_csv(write("trail.csv", "1,2x\n")), std::invalid_argument);
}

TEST_F(TempDir, PgmAndFloatSidecar)
{
  Matrix px(2, 3);
  px << 0, 1, 2, 3, 4, 8;
  io::write_pgm(dir_ / "img.pgm", px);
  const auto pgm = slurp(dir_ / "img.pgm");
  const std::string header = "P5\n3 2\n255\n";
  ASSERT_EQ(pgm.size(), header.size() + 6);
  EXPECT_EQ(pgm.substr(0, header.size()), header);
  EXPECT_EQ(static_cast<unsigned char>(pgm[header.size()]), 0);
  EXPECT_EQ(static_cast<unsigned char>(pgm.back()), 255);
  EXPECT_EQ(static_cast<unsigned char>(pgm[header.size() + 3]), 96);  // 3/8 of 255, rounded

  const auto raw = slurp(dir_ / "img.pgm.f32");
  ASSERT_EQ(raw.size(), 6 * sizeof(float));
  float last = 0.0F;
  std::memcpy(&last, raw.data() + 5 * sizeof(float), sizeof last);
  EXPECT_EQ(last, 8.0F);
}

TEST_F(TempDir, JsonIsStable)
{
  nlohmann::ordered_json doc;
  doc["b"] = 1;
  doc["a"] = io::matrix_json(Matrix::Identity(2, 2));
  io::write_json(dir_ / "one.json", doc);
  io::write_json(dir_ / "two.json", doc);
  EXPECT_EQ(slurp(dir_ / "one.json"), slurp(dir_ / "two.json"));
  EXPECT_LT(slurp(dir_ / "one.json").find("\"b\""), slurp(dir_ / "one.json").find("\"a\""));
}
