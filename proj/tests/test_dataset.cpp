#include "doctest.h"
#include "hayama/dataset.hpp"
#include "hayama/error.hpp"
#include "hayama/scanner.hpp"
#include "support.hpp"

using namespace hayama;
using namespace hayama::data;

namespace {

const char* kManifest =
    "key,path,label,split\n"
    "a,files/a.bin,1,train\n"
    "b,files/b.bin,0,TEST\n"
    "c,/abs/c.bin,1,train\n"
    "d,files/d.bin,0,test\n";

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::Io;
}

}  // namespace

TEST_CASE("manifest parsing") {
  auto m = parse_manifest(kManifest, false, "/base");
  REQUIRE(m.size() == 4);
  CHECK(m.records[0].path == std::filesystem::path("/base/files/a.bin"));
  CHECK(m.records[2].path == std::filesystem::path("/abs/c.bin"));
  CHECK(m.records[1].split == Split::Test);
  CHECK(m.labels() == std::vector<std::uint8_t>{1, 0, 1, 0});

  auto j = parse_manifest(
      "{\"key\":\"a\",\"path\":\"a.bin\",\"label\":1,\"split\":\"TRAIN\"}\n"
      "{\"key\":\"b\",\"path\":\"b.bin\",\"label\":\"0\",\"split\":\"valid\"}\n",
      true);
  CHECK(j.size() == 2);
  CHECK(j.records[1].split == Split::Valid);

  CHECK(code_of([] { parse_manifest("key,path,label,split\na,x,1,train\na,y,0,test\n", false); }) ==
        ErrorCode::Validation);
  try {
    parse_manifest("key,path,label,split\ndupe,x,1,train\ndupe,y,0,test\n", false);
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("dupe") != std::string::npos);
  }
  CHECK(code_of([] { parse_manifest("key,path,label,split\na,x,2,train\n", false); }) == ErrorCode::Validation);
  CHECK(code_of([] { parse_manifest("key,path,split\na,x,train\n", false); }) == ErrorCode::Validation);
  CHECK(code_of([] { parse_manifest("key,path,label,split\na,x,1,holdout\n", false); }) == ErrorCode::Validation);
}

TEST_CASE("side features reorder, impute and detect gaps") {
  auto m = parse_manifest(kManifest, false);
  auto t = parse_side_features("key,f1,f2\nd,4,40\nb,2,nan\na,1,10\nc,3,inf\n", false, m);
  CHECK(t.keys == std::vector<std::string>{"a", "b", "c", "d"});
  CHECK(t.dim == 2);
  CHECK(t.at(0, 0) == 1);
  CHECK(t.at(3, 1) == 40);
  CHECK(t.at(1, 1) == 0);
  CHECK(t.imputed == 2);

  auto one = parse_side_features("key,f1\na,1\nb,nan\nc,3\nd,4\n", false, m);
  CHECK(one.imputed == 1);

  try {
    parse_side_features("key,f1\na,1\nb,2\nc,3\n", false, m);
    FAIL("expected missing key");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::MissingKey);
    CHECK(std::string(e.what()).find(" d") != std::string::npos);
  }
  CHECK(code_of([&] { parse_side_features("key,f1\na,1\nb,x\nc,3\nd,4\n", false, m); }) == ErrorCode::Validation);

  auto jt = parse_side_features("{\"key\":\"c\",\"f\":3}\n{\"key\":\"a\",\"f\":1}\n{\"key\":\"b\",\"f\":null}\n"
                                "{\"key\":\"d\",\"f\":4.5}\n",
                                true, m);
  CHECK(jt.at(3, 0) == 4.5);
  CHECK(jt.imputed == 1);
  auto round = parse_side_features(side_features_to_csv(t), false, m);
  CHECK(round.values == t.values);
}

TEST_CASE("align splits views and rejects mismatched ids") {
  auto man = parse_manifest("key,path,label,split\na,a,1,train\nb,b,0,test\nc,c,0,train\n", false);
  scan::OccurrenceMatrix mat;
  mat.n_cols = 2;
  for (int i = 0; i < 3; ++i) mat.append_row({});
  mat.row_ids = {"a", "b", "c"};
  mat.col_ids = {"x", "y"};
  auto ds = align(mat, man);
  CHECK(ds.train.rows == std::vector<std::size_t>{0, 2});
  CHECK(ds.test.rows == std::vector<std::size_t>{1});
  CHECK(ds.train.labels == std::vector<std::uint8_t>{1, 0});
  CHECK_FALSE(ds.train.has_side());
  CHECK(ds.train.matrix == &mat);

  mat.row_ids = {"a", "z", "c"};
  try {
    align(mat, man);
    FAIL("expected mismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Alignment);
    CHECK(std::string(e.what()).find("index 1") != std::string::npos);
  }
}

TEST_CASE("load_manifest resolves relative to its directory") {
  testing::TempDir tmp;
  write_file(tmp / "sub" / "m.csv", kManifest);
  auto m = load_manifest(tmp / "sub" / "m.csv");
  CHECK(m.records[0].path == tmp / "sub" / "files/a.bin");
  CHECK(parse_manifest(manifest_to_csv(m, tmp / "sub"), false, tmp / "sub").records[0].path == m.records[0].path);
}
