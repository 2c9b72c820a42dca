#include <set>
#include <random>

#include "doctest.h"
#include "hayama/error.hpp"
#include "hayama/yara.hpp"
#include "support.hpp"

using namespace hayama;
using namespace hayama::yara;
using hayama::testing::TempDir;

namespace {

std::string anubi_text() {
  Bytes b = read_file(testing::fixture_dir() / "anubi" / "crime_win_ransom_anubi.yara");
  return {b.begin(), b.end()};
}

std::string to_str(const Bytes& b) { return {b.begin(), b.end()}; }

}  // namespace

TEST_CASE("anubi rule yields twenty strings") {
  auto parsed = parse_rule_file("anubi.yara", anubi_text());
  REQUIRE(parsed.rules.size() == 1);
  CHECK(parsed.diagnostics.empty());
  const RawRule& r = parsed.rules[0];
  CHECK(r.rule_name == "anubi");
  REQUIRE(r.strings_block.size() == 20);
  CHECK(r.strings_block.front().first == "$av0");
  CHECK(r.strings_block.back().first == "$ransom6");
  CHECK(r.condition_text.find("uint16(0) == 0x5A4D") != std::string::npos);

  auto d = decode_sub_signature(r.strings_block[0].first, r.strings_block[0].second);
  REQUIRE(d.signature);
  CHECK(d.signature->kind == StringKind::Text);
  CHECK(to_str(d.signature->pattern) ==
        "/c \"wmic product where name=\"ESET NOD32 Antivirus\" call uninstall /nointeractive \"");

  auto reg = decode_sub_signature(r.strings_block[4].first, r.strings_block[4].second);
  CHECK(to_str(reg.signature->pattern) == "SOFTWARE\\Microsoft\\Windows Defender\\Reporting");
}

TEST_CASE("rule without strings") {
  auto parsed = parse_rule_file("e.yar", "rule empty { condition: true }");
  REQUIRE(parsed.rules.size() == 1);
  CHECK(parsed.rules[0].strings_block.empty());
  CHECK(parsed.rules[0].condition_text == "true");
}

TEST_CASE("malformed rule is skipped with one diagnostic") {
  const char* text = R"(
rule good {
  strings:
    $a = "alpha"
  condition:
    $a
}

rule broken {
  strings:
    $b = "beta"
  condition:
    $b and (
)";
  auto parsed = parse_rule_file("two.yar", text);
  REQUIRE(parsed.rules.size() == 1);
  CHECK(parsed.rules[0].rule_name == "good");
  CHECK(parsed.diagnostics.size() == 1);
}

TEST_CASE("unterminated rule followed by a valid one resynchronizes") {
  const char* text = R"(rule first {
  strings:
    $a = "one"
  condition:
    $a
rule second {
  strings:
    $b = "two"
  condition:
    $b
}
)";
  auto parsed = parse_rule_file("resync.yar", text);
  REQUIRE(parsed.rules.size() == 1);
  CHECK(parsed.rules[0].rule_name == "second");
  CHECK(parsed.diagnostics.size() == 1);
}

TEST_CASE("comments, imports, meta, tags and hex braces") {
  const char* text = R"(import "pe"
include "other.yar"
// line comment with rule keyword
/* block
   rule fake { } */
private rule tagged : family apt
{
  meta:
    author = "someone"
    score = -5
    active = true
  strings:
    $h = { 4D 5A ?? 00 } // trailing
    $t = "x}y" wide ascii
    $r = /ab{2}c/i
    $x = "zz" xor(0x01-0xff)
  condition:
    pe.is_pe and $h and $r matches /}/
}
)";
  auto parsed = parse_rule_file("misc.yar", text);
  REQUIRE(parsed.rules.size() == 1);
  CHECK(parsed.diagnostics.empty());
  const auto& sb = parsed.rules[0].strings_block;
  REQUIRE(sb.size() == 4);
  CHECK(sb[0].second == "{ 4D 5A ?? 00 }");
  CHECK(sb[1].second == "\"x}y\" wide ascii");
  CHECK(sb[2].second == "/ab{2}c/i");
  CHECK(sb[3].second == "\"zz\" xor(0x01-0xff)");
}

TEST_CASE("non-UTF-8 rule file is read byte for byte") {
  std::string text = "rule latin { strings: $a = \"caf\xe9\" condition: $a }";
  auto parsed = parse_rule_file("l.yar", text);
  REQUIRE(parsed.rules.size() == 1);
  CHECK(parsed.diagnostics.size() == 1);
  auto d = decode_sub_signature("$a", parsed.rules[0].strings_block[0].second);
  REQUIRE(d.signature);
  CHECK(d.signature->pattern.back() == 0xE9);
}

TEST_CASE("decode_sub_signature kinds") {
  SUBCASE("fixed hex") {
    auto d = decode_sub_signature("$h", "{ 4D 5A 90 00 }");
    REQUIRE(d.signature);
    CHECK(d.signature->kind == StringKind::HexFixed);
    CHECK(d.signature->pattern == Bytes{0x4D, 0x5A, 0x90, 0x00});
    CHECK_FALSE(d.signature->mask);
  }
  SUBCASE("wildcard hex") {
    auto d = decode_sub_signature("$h", "{ 4D ?? 5A }");
    REQUIRE(d.signature);
    CHECK(d.signature->kind == StringKind::HexWild);
    CHECK(d.signature->pattern == Bytes{0x4D, 0x00, 0x5A});
    CHECK(*d.signature->mask == Bytes{0xFF, 0x00, 0xFF});
  }
  SUBCASE("nibble wildcard") {
    auto d = decode_sub_signature("$h", "{ 4? 5A }");
    REQUIRE(d.signature);
    CHECK(d.signature->pattern == Bytes{0x40, 0x5A});
    CHECK(*d.signature->mask == Bytes{0xF0, 0xFF});
  }
  SUBCASE("modifiers") {
    auto d = decode_sub_signature("$t", "\"abc\" wide nocase");
    REQUIRE(d.signature);
    CHECK(to_str(d.signature->pattern) == "abc");
    CHECK(d.signature->modifiers.has(kWide));
    CHECK(d.signature->modifiers.has(kNoCase));
    CHECK_FALSE(d.signature->modifiers.has(kAscii));
  }
  SUBCASE("escapes") {
    auto d = decode_sub_signature("$t", R"("a\tb\n\r\x41\\\"")");
    REQUIRE(d.signature);
    CHECK(to_str(d.signature->pattern) == "a\tb\n\rA\\\"");
  }
  SUBCASE("skips") {
    CHECK(decode_sub_signature("$r", "/abc/").skip->reason == SkipReason::Regex);
    CHECK(decode_sub_signature("$j", "{ 4D [2-4] 5A }").skip->reason == SkipReason::HexJump);
    CHECK(decode_sub_signature("$a", "{ 4D ( 5A | 90 ) }").skip->reason == SkipReason::HexAlternation);
    CHECK(decode_sub_signature("$x", "\"abc\" xor").skip->reason == SkipReason::UnknownModifier);
    CHECK(decode_sub_signature("$x", "\"abc\" base64").skip->reason == SkipReason::UnknownModifier);
    CHECK(decode_sub_signature("$e", R"("a\qb")").skip->reason == SkipReason::BadEscape);
    CHECK(decode_sub_signature("$e", R"("a\x4")").skip->reason == SkipReason::BadEscape);
    CHECK(decode_sub_signature("$o", "{ 4D 5 }").skip->reason == SkipReason::BadHex);
    CHECK(decode_sub_signature("$w", "{ ?? ?? }").skip->reason == SkipReason::NoFixedByte);
    CHECK(decode_sub_signature("$z", "\"\"").skip->reason == SkipReason::Empty);
  }
  SUBCASE("private is accepted and not recorded") {
    auto d = decode_sub_signature("$p", "\"abc\" private");
    REQUIRE(d.signature);
    CHECK(d.signature->modifiers.bits == 0);
  }
}

TEST_CASE("text literal escaping round-trips random bytes") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 500; ++trial) {
    Bytes b = testing::random_bytes(rng, 1 + rng() % 40);
    auto d = decode_sub_signature("$r", encode_text_literal(b));
    REQUIRE(d.signature);
    CHECK(d.signature->pattern == b);
  }
}

TEST_CASE("harvest anubi and dedup across roots") {
  auto root = testing::fixture_dir() / "anubi";
  HarvestReport report;
  auto cat = harvest({root}, &report);
  CHECK(cat.size() == 20);
  CHECK(report.rules == 1);
  CHECK(report.kept == 20);
  for (std::size_t i = 1; i < cat.entries.size(); ++i) CHECK(cat.entries[i - 1].id < cat.entries[i].id);

  TempDir tmp;
  std::filesystem::create_directories(tmp / "a");
  std::filesystem::create_directories(tmp / "b");
  std::filesystem::copy_file(root / "crime_win_ransom_anubi.yara", tmp / "a" / "r.yar");
  std::filesystem::copy_file(root / "crime_win_ransom_anubi.yara", tmp / "b" / "r.yar");
  auto two = harvest({tmp / "a", tmp / "b"});
  auto one = harvest({tmp / "a"});
  CHECK(two.entries == one.entries);
}

TEST_CASE("shared string collects provenance from three rules") {
  TempDir tmp;
  write_file(tmp / "s.yar", R"(
rule r1 { strings: $s = "shared" $u1 = "one" condition: any of them }
rule r2 { strings: $s = "shared" $u2 = "two" condition: any of them }
rule r3 { strings: $k = "shared" condition: $k }
)");
  auto cat = harvest({tmp.path()});
  CHECK(cat.size() == 3);
  Bytes shared{'s', 'h', 'a', 'r', 'e', 'd'};
  auto id = content_id(StringKind::Text, shared, std::nullopt, {});
  auto idx = cat.find(id);
  REQUIRE(idx != SignatureCatalog::npos);
  CHECK(cat.entries[idx].provenance.size() == 3);
}

TEST_CASE("harvest edge cases") {
  TempDir tmp;
  write_file(tmp / "notes.txt", "just notes, nothing to see");
  write_file(tmp / "r.yar", "rule only_regex { strings: $r = /abc/ condition: $r }");
  HarvestReport report;
  CHECK_THROWS_AS(harvest({tmp.path()}, &report), Error);
  CHECK(report.skipped_regex == 1);
  CHECK(report.files == 1);
  CHECK_THROWS_AS(harvest({tmp / "missing"}), Error);
}

TEST_CASE("condition blindness") {
  std::string text = anubi_text();
  auto base = build_catalog(parse_rule_file("a.yara", text).rules);
  std::mt19937_64 rng(11);
  const std::vector<std::string> conditions = {"true", "all of them", "$av0 and not $cmd1",
                                               "filesize < 10KB and #ransom0 > 2", "for any of ($anti*) : ( $ )"};
  auto start = text.find("condition:");
  auto end = text.rfind('}');
  for (const auto& c : conditions) {
    std::string mutated = text.substr(0, start) + "condition:\n        " + c + "\n" + text.substr(end);
    auto cat = build_catalog(parse_rule_file("a.yara", mutated).rules);
    CHECK(cat.entries == base.entries);
  }
}

TEST_CASE("dedup soundness on random definitions") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    std::string text = "rule t {\n strings:\n";
    std::size_t n = 1 + rng() % 30;
    std::set<std::string> distinct;
    for (std::size_t i = 0; i < n; ++i) {
      std::string lit = encode_text_literal(Bytes{static_cast<std::uint8_t>('a' + rng() % 3),
                                                  static_cast<std::uint8_t>('a' + rng() % 3)});
      std::string mods = (rng() % 2) ? " nocase" : "";
      distinct.insert(lit + mods);
      text += "  $s" + std::to_string(i) + " = " + lit + mods + "\n";
    }
    text += " condition: true\n}\n";
    HarvestReport report;
    auto cat = build_catalog(parse_rule_file("t.yar", text).rules, &report);
    CHECK(cat.size() <= report.definitions);
    CHECK(cat.size() == distinct.size());
  }
}

TEST_CASE("catalog serialization") {
  auto cat = harvest({testing::fixture_dir() / "anubi"});
  std::string saved = save_catalog(cat);
  CHECK(load_catalog(saved) == cat);
  CHECK(save_catalog(load_catalog(saved)) == saved);
  CHECK(save_catalog(harvest({testing::fixture_dir() / "anubi"})) == saved);

  SUBCASE("empty catalog") {
    SignatureCatalog empty;
    auto text = save_catalog(empty);
    CHECK(load_catalog(text) == empty);
  }
  SUBCASE("flipped byte") {
    std::string bad = saved;
    bad[bad.find("pattern_hex") + 20] ^= 0x01;
    try {
      load_catalog(bad);
      FAIL("expected failure");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::ChecksumMismatch);
    }
  }
  SUBCASE("truncated") {
    std::string bad = saved.substr(0, saved.size() / 2);
    try {
      load_catalog(bad);
      FAIL("expected failure");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::Truncated);
    }
  }
  SUBCASE("version mismatch") {
    std::string bad = saved;
    bad.replace(bad.find("\"version\":1"), 11, "\"version\":2");
    try {
      load_catalog(bad);
      FAIL("expected failure");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::VersionMismatch);
    }
  }
}
