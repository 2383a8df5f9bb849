#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <limits>

#include "../support/oracles.hpp"
#include "attnvpr/error.hpp"
#include "attnvpr/file_util.hpp"
#include "attnvpr/tensor_io.hpp"

using namespace attnvpr;
using attnvpr::testing::Rng;
using attnvpr::testing::TempDir;

namespace {

template <typename Fn>
ErrorCode code_of(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an attnvpr::Error";
  return ErrorCode::InvalidArgument;
}

std::string header(std::string_view magic, std::initializer_list<std::uint32_t> dims) {
  ByteWriter w;
  w.magic(magic);
  for (auto d : dims) w.u32(d);
  return w.bytes();
}

}  // namespace

TEST(FeatureMapIo, RoundTripIsBitwise) {
  TempDir dir("fmap");
  Rng rng(1);
  FeatureMap fm = attnvpr::testing::random_feature_map(rng, 5, 3, 4);
  fm.data[0] = -0.0f;
  fm.data[1] = std::numeric_limits<float>::denorm_min();
  write_feature_map(fm, dir / "a.fmap");
  const FeatureMap back = read_feature_map(dir / "a.fmap");
  EXPECT_EQ(back.channels, 5u);
  EXPECT_EQ(back.height, 3u);
  EXPECT_EQ(back.width, 4u);
  ASSERT_EQ(back.data.size(), fm.data.size());
  EXPECT_EQ(std::memcmp(back.data.data(), fm.data.data(), fm.data.size() * 4), 0);
}

TEST(FeatureMapIo, SingleCellFileIs21Bytes) {
  TempDir dir("fmap");
  write_feature_map(FeatureMap{"x", 1, 1, 1, {0.0f}}, dir / "one.fmap");
  EXPECT_EQ(fs::file_size(dir / "one.fmap"), 21u);
  const std::string bytes = read_file(dir / "one.fmap");
  EXPECT_EQ(bytes.substr(0, 5), "FMAP1");
}

TEST(FeatureMapIo, PayloadSizeForBackboneShape) {
  TempDir dir("fmap");
  FeatureMap fm{"x", 512, 7, 7, std::vector<float>(512 * 49, 0.5f)};
  write_feature_map(fm, dir / "big.fmap");
  EXPECT_EQ(fs::file_size(dir / "big.fmap"), 5u + 12u + 512u * 49u * 4u);
}

TEST(FeatureMapIo, BadMagic) {
  TempDir dir("fmap");
  std::string bytes = header("XXXX1", {1, 1, 1});
  bytes.append(4, '\0');
  atomic_write(dir / "bad.fmap", bytes);
  EXPECT_EQ(code_of([&] { read_feature_map(dir / "bad.fmap"); }), ErrorCode::BadMagic);
}

TEST(FeatureMapIo, TruncatedPayloadIsShapeMismatch) {
  TempDir dir("fmap");
  std::string bytes = header("FMAP1", {2, 2, 2});
  bytes.append(7 * 4, '\0');
  atomic_write(dir / "short.fmap", bytes);
  EXPECT_EQ(code_of([&] { read_feature_map(dir / "short.fmap"); }), ErrorCode::ShapeMismatch);
  bytes.append(2 * 4, '\0');
  atomic_write(dir / "long.fmap", bytes);
  EXPECT_EQ(code_of([&] { read_feature_map(dir / "long.fmap"); }), ErrorCode::ShapeMismatch);
}

TEST(FeatureMapIo, HugeHeaderDoesNotAllocate) {
  TempDir dir("fmap");
  atomic_write(dir / "huge.fmap", header("FMAP1", {0xFFFFFFFFu, 0xFFFFFFFFu, 0xFFFFFFFFu}));
  EXPECT_EQ(code_of([&] { read_feature_map(dir / "huge.fmap"); }), ErrorCode::ShapeMismatch);
}

TEST(FeatureMapIo, NonFiniteRejectedOnWriteAndRead) {
  TempDir dir("fmap");
  FeatureMap fm{"x", 1, 1, 2, {1.0f, std::numeric_limits<float>::quiet_NaN()}};
  EXPECT_EQ(code_of([&] { write_feature_map(fm, dir / "nan.fmap"); }), ErrorCode::NonFinite);
  EXPECT_FALSE(fs::exists(dir / "nan.fmap"));

  ByteWriter w;
  w.magic("FMAP1");
  w.u32(1);
  w.u32(1);
  w.u32(1);
  const float inf = std::numeric_limits<float>::infinity();
  w.f32(std::span<const float>(&inf, 1));
  atomic_write(dir / "inf.fmap", w.bytes());
  EXPECT_EQ(code_of([&] { read_feature_map(dir / "inf.fmap"); }), ErrorCode::NonFinite);
}

TEST(FeatureMapIo, MissingFileIsIoFailure) {
  EXPECT_EQ(code_of([] { read_feature_map("/nonexistent/dir/x.fmap"); }), ErrorCode::IoFailure);
}

TEST(AssignmentIo, RoundTripAndColumnNormalisation) {
  TempDir dir("amat");
  Rng rng(2);
  const AssignmentMatrix am = attnvpr::testing::random_assignment(rng, 4, 9);
  write_assignment(am, dir / "a.amat");
  const AssignmentMatrix back = read_assignment(dir / "a.amat");
  EXPECT_EQ(back.probs, am.probs);

  AssignmentMatrix bad = am;
  bad.probs[0] += 0.1f;
  EXPECT_EQ(code_of([&] { bad.validate(); }), ErrorCode::NormViolation);
}

TEST(LocalFeaturesIo, RoundTrip) {
  TempDir dir("lft");
  Rng rng(3);
  const LocalFeatures lf = attnvpr::testing::random_local(rng, 6, 5);
  write_local_features(lf, dir / "a.lfeat");
  EXPECT_EQ(read_local_features(dir / "a.lfeat").values, lf.values);
}

TEST(Manifest, ParsesSanFranciscoRow) {
  const Manifest m = parse_manifest("id,path,lat,lon\nq1,imgs/q1.fmap,37.7749,-122.4194\n");
  ASSERT_EQ(m.size(), 1u);
  EXPECT_EQ(m.entries()[0].id, "q1");
  EXPECT_EQ(m.entries()[0].path, "imgs/q1.fmap");
  EXPECT_DOUBLE_EQ(m.entries()[0].geo.lat, 37.7749);
  EXPECT_DOUBLE_EQ(m.entries()[0].geo.lon, -122.4194);
  EXPECT_NE(m.find("q1"), nullptr);
  EXPECT_EQ(m.find("q2"), nullptr);
}

TEST(Manifest, Errors) {
  EXPECT_EQ(code_of([] { parse_manifest("id,path,lat,lon\nq1,a,1,2\nq1,b,3,4\n"); }), ErrorCode::DuplicateId);
  EXPECT_EQ(code_of([] { parse_manifest("id,path,lat,lon\nq1,a,95.0,2\n"); }), ErrorCode::CoordinateOutOfRange);
  EXPECT_EQ(code_of([] { parse_manifest("id,path,lat,lon\nq1,a,1,181\n"); }), ErrorCode::CoordinateOutOfRange);
  EXPECT_EQ(code_of([] { parse_manifest("id,path,lat,lon\nq1,a,1\n"); }), ErrorCode::MalformedRow);
  EXPECT_EQ(code_of([] { parse_manifest("id,path,lat,lon\nq1,a,north,2\n"); }), ErrorCode::MalformedRow);
  EXPECT_EQ(code_of([] { parse_manifest("name,lat\n"); }), ErrorCode::MalformedRow);
}

TEST(Manifest, SaveLoadRoundTripPreservesOrderAndDoubles) {
  TempDir dir("manifest");
  Manifest m;
  m.add({"z", "p/z", {37.77490000000001, -122.4194}});
  m.add({"a", "", {-33.5, 151.25}});
  save_manifest(m, dir / "m.csv");
  const Manifest back = load_manifest(dir / "m.csv");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back.entries()[0].id, "z");
  EXPECT_EQ(back.entries()[0].geo.lat, 37.77490000000001);
  EXPECT_EQ(back.entries()[1].path, "");
}

TEST(Manifest, ToleratesCrlf) {
  const Manifest m = parse_manifest("id,path,lat,lon\r\nq1,a,1.5,2.5\r\n");
  EXPECT_DOUBLE_EQ(m.entries()[0].geo.lon, 2.5);
}

TEST(DescriptorDbIo, RoundTrip3x4) {
  TempDir dir("vdb");
  Rng rng(4);
  DescriptorDb db;
  db.dim = 4;
  for (int i = 0; i < 3; ++i) {
    db.append("db" + std::to_string(i), {1.0 * i, 2.0 * i}, attnvpr::testing::random_unit(rng, 4));
  }
  write_db(db, dir / "d.vdb");
  const DescriptorDb back = read_db(dir / "d.vdb");
  EXPECT_EQ(back.dim, 4u);
  EXPECT_EQ(back.ids, db.ids);
  EXPECT_EQ(std::memcmp(back.rows.data(), db.rows.data(), db.rows.size() * 4), 0);
  EXPECT_EQ(back.geotags[2].lat, 2.0);
  EXPECT_TRUE(fs::exists(db_meta_path(dir / "d.vdb")));
}

TEST(DescriptorDbIo, NormViolationOnWrite) {
  TempDir dir("vdb");
  DescriptorDb db;
  db.dim = 2;
  db.append("a", {}, std::vector<float>{0.5f, 0.0f});
  EXPECT_EQ(code_of([&] { write_db(db, dir / "d.vdb"); }), ErrorCode::NormViolation);
  EXPECT_FALSE(fs::exists(dir / "d.vdb"));
}

TEST(DescriptorDbIo, EmptyDbIsValid) {
  TempDir dir("vdb");
  DescriptorDb db;
  db.dim = 8;
  write_db(db, dir / "e.vdb");
  const DescriptorDb back = read_db(dir / "e.vdb");
  EXPECT_EQ(back.size(), 0u);
  EXPECT_EQ(back.dim, 8u);
}

TEST(DescriptorDbIo, BadMagicAndDimMismatch) {
  TempDir dir("vdb");
  DescriptorDb db;
  db.dim = 2;
  EXPECT_EQ(code_of([&] { db.append("a", {}, std::vector<float>{1.0f, 0.0f, 0.0f}); }), ErrorCode::DimMismatch);
  db.append("a", {}, std::vector<float>{1.0f, 0.0f});
  write_db(db, dir / "d.vdb");
  std::string bytes = read_file(dir / "d.vdb");
  bytes[0] = 'X';
  atomic_write(dir / "x.vdb", bytes);
  fs::copy_file(db_meta_path(dir / "d.vdb"), db_meta_path(dir / "x.vdb"));
  EXPECT_EQ(code_of([&] { read_db(dir / "x.vdb"); }), ErrorCode::BadMagic);

  bytes = read_file(dir / "d.vdb");
  bytes.resize(bytes.size() - 4);
  atomic_write(dir / "t.vdb", bytes);
  fs::copy_file(db_meta_path(dir / "d.vdb"), db_meta_path(dir / "t.vdb"));
  EXPECT_EQ(code_of([&] { read_db(dir / "t.vdb"); }), ErrorCode::DimMismatch);
}

TEST(AtomicWrite, LeavesNoTempFiles) {
  TempDir dir("atomic");
  atomic_write(dir / "sub" / "f.txt", "hello");
  atomic_write(dir / "sub" / "f.txt", "world");
  EXPECT_EQ(read_file(dir / "sub" / "f.txt"), "world");
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(dir / "sub")) {
    (void)e;
    ++files;
  }
  EXPECT_EQ(files, 1u);
}

// Property: any shape round-trips bitwise and the file size follows the layout.
TEST(FeatureMapIo, PropertyRandomShapesRoundTrip) {
  TempDir dir("fmap");
  Rng rng(99);
  for (int t = 0; t < 50; ++t) {
    const auto fm = attnvpr::testing::random_feature_map(rng, rng.range(1, 9), rng.range(1, 8), rng.range(1, 8));
    write_feature_map(fm, dir / "p.fmap");
    EXPECT_EQ(fs::file_size(dir / "p.fmap"), 17u + fm.data.size() * 4);
    EXPECT_EQ(read_feature_map(dir / "p.fmap").data, fm.data);
  }
}
