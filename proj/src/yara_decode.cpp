#include <cctype>
#include <cstring>

#include "hayama/yara.hpp"

namespace hayama::yara {

std::string_view to_string(StringKind kind) {
  switch (kind) {
    case StringKind::Text: return "text";
    case StringKind::HexFixed: return "hex_fixed";
    case StringKind::HexWild: return "hex_wild";
    case StringKind::Regex: return "regex";
  }
  return "?";
}

std::optional<StringKind> kind_from_string(std::string_view s) {
  if (s == "text") return StringKind::Text;
  if (s == "hex_fixed") return StringKind::HexFixed;
  if (s == "hex_wild") return StringKind::HexWild;
  if (s == "regex") return StringKind::Regex;
  return std::nullopt;
}

std::vector<std::string> modifier_names(ModifierSet set) {
  std::vector<std::string> out;
  if (set.has(kNoCase)) out.emplace_back("nocase");
  if (set.has(kWide)) out.emplace_back("wide");
  if (set.has(kAscii)) out.emplace_back("ascii");
  if (set.has(kFullword)) out.emplace_back("fullword");
  return out;
}

std::optional<Modifier> modifier_from_string(std::string_view name) {
  if (name == "nocase") return kNoCase;
  if (name == "wide") return kWide;
  if (name == "ascii") return kAscii;
  if (name == "fullword") return kFullword;
  return std::nullopt;
}

std::string_view to_string(SkipReason reason) {
  switch (reason) {
    case SkipReason::Regex: return "regex";
    case SkipReason::HexJump: return "hex-jump";
    case SkipReason::HexAlternation: return "hex-alternation";
    case SkipReason::UnknownModifier: return "unknown-modifier";
    case SkipReason::BadEscape: return "bad-escape";
    case SkipReason::BadHex: return "bad-hex";
    case SkipReason::Empty: return "empty";
    case SkipReason::NoFixedByte: return "no-fixed-byte";
  }
  return "?";
}

std::uint64_t content_id(StringKind kind, std::span<const std::uint8_t> pattern,
                         const std::optional<Bytes>& mask, ModifierSet modifiers) {
  Bytes buf;
  buf.reserve(pattern.size() * 2 + 24);
  auto put_len = [&](std::uint64_t n) {
    for (int i = 0; i < 8; ++i) buf.push_back(static_cast<std::uint8_t>(n >> (8 * i)));
  };
  buf.push_back(static_cast<std::uint8_t>(kind));
  buf.push_back(modifiers.bits);
  put_len(pattern.size());
  buf.insert(buf.end(), pattern.begin(), pattern.end());
  buf.push_back(mask ? 1 : 0);
  if (mask) {
    put_len(mask->size());
    buf.insert(buf.end(), mask->begin(), mask->end());
  }
  return fnv1a64(buf);
}

namespace {

int hex_digit(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}

Decoded skip(SkipReason reason, std::string detail) {
  return Decoded{std::nullopt, Skip{reason, std::move(detail)}};
}

// Splits the trailing modifier text into words, keeping parenthesized
// arguments attached (e.g. "xor(0x01-0xff)").
std::vector<std::string> modifier_words(std::string_view rest) {
  std::vector<std::string> words;
  std::size_t i = 0;
  while (i < rest.size()) {
    while (i < rest.size() && std::isspace(static_cast<unsigned char>(rest[i]))) ++i;
    if (i >= rest.size()) break;
    std::size_t start = i;
    int depth = 0;
    while (i < rest.size() && (depth > 0 || !std::isspace(static_cast<unsigned char>(rest[i])))) {
      if (rest[i] == '(') ++depth;
      else if (rest[i] == ')') --depth;
      ++i;
    }
    words.emplace_back(rest.substr(start, i - start));
  }
  return words;
}

std::optional<Skip> parse_modifiers(std::string_view rest, bool allow_text_modifiers,
                                    ModifierSet& out) {
  for (const auto& word : modifier_words(rest)) {
    if (word == "private") continue;
    auto m = modifier_from_string(word);
    if (!m || !allow_text_modifiers) return Skip{SkipReason::UnknownModifier, word};
    out.add(*m);
  }
  return std::nullopt;
}

Decoded decode_text(std::string_view ident, std::string_view def) {
  Bytes bytes;
  std::size_t i = 1;
  bool closed = false;
  while (i < def.size()) {
    char c = def[i++];
    if (c == '"') {
      closed = true;
      break;
    }
    if (c != '\\') {
      bytes.push_back(static_cast<std::uint8_t>(c));
      continue;
    }
    if (i >= def.size()) return skip(SkipReason::BadEscape, std::string(ident) + ": dangling backslash");
    char e = def[i++];
    switch (e) {
      case '"': bytes.push_back('"'); break;
      case '\\': bytes.push_back('\\'); break;
      case 't': bytes.push_back('\t'); break;
      case 'n': bytes.push_back('\n'); break;
      case 'r': bytes.push_back('\r'); break;
      case 'x': {
        int hi = i < def.size() ? hex_digit(def[i]) : -1;
        int lo = i + 1 < def.size() ? hex_digit(def[i + 1]) : -1;
        if (hi < 0 || lo < 0) return skip(SkipReason::BadEscape, std::string(ident) + ": bad \\x escape");
        bytes.push_back(static_cast<std::uint8_t>(hi << 4 | lo));
        i += 2;
        break;
      }
      default:
        return skip(SkipReason::BadEscape,
                    std::string(ident) + ": unsupported escape \\" + std::string(1, e));
    }
  }
  if (!closed) return skip(SkipReason::BadEscape, std::string(ident) + ": unterminated literal");
  if (bytes.empty()) return skip(SkipReason::Empty, std::string(ident) + ": empty literal");

  SubSignature sig;
  sig.kind = StringKind::Text;
  sig.pattern = std::move(bytes);
  if (auto bad = parse_modifiers(def.substr(i), true, sig.modifiers)) return Decoded{std::nullopt, bad};
  sig.id = content_id(sig.kind, sig.pattern, sig.mask, sig.modifiers);
  return Decoded{std::move(sig), std::nullopt};
}

Decoded decode_hex(std::string_view ident, std::string_view def) {
  std::size_t close = def.find('}');
  if (close == std::string_view::npos) return skip(SkipReason::BadHex, std::string(ident) + ": unterminated");
  std::string_view body = def.substr(1, close - 1);

  std::vector<int> nibbles;  // -1 for wildcard
  for (std::size_t i = 0; i < body.size(); ++i) {
    char c = body[i];
    if (std::isspace(static_cast<unsigned char>(c))) continue;
    if (c == '/' && i + 1 < body.size() && body[i + 1] == '/') {
      while (i < body.size() && body[i] != '\n') ++i;
      continue;
    }
    if (c == '/' && i + 1 < body.size() && body[i + 1] == '*') {
      std::size_t end = body.find("*/", i + 2);
      if (end == std::string_view::npos) return skip(SkipReason::BadHex, std::string(ident) + ": comment");
      i = end + 1;
      continue;
    }
    if (c == '[') return skip(SkipReason::HexJump, std::string(ident));
    if (c == '(' || c == '|' || c == ')') return skip(SkipReason::HexAlternation, std::string(ident));
    if (c == '?') {
      nibbles.push_back(-1);
      continue;
    }
    int v = hex_digit(c);
    if (v < 0) return skip(SkipReason::BadHex, std::string(ident) + ": unexpected '" + std::string(1, c) + "'");
    nibbles.push_back(v);
  }
  if (nibbles.empty()) return skip(SkipReason::Empty, std::string(ident) + ": empty hex string");
  if (nibbles.size() % 2 != 0) return skip(SkipReason::BadHex, std::string(ident) + ": odd digit count");

  SubSignature sig;
  Bytes pattern(nibbles.size() / 2);
  Bytes mask(pattern.size());
  bool wild = false;
  bool any_fixed = false;
  for (std::size_t b = 0; b < pattern.size(); ++b) {
    int hi = nibbles[2 * b];
    int lo = nibbles[2 * b + 1];
    std::uint8_t m = static_cast<std::uint8_t>((hi >= 0 ? 0xF0 : 0) | (lo >= 0 ? 0x0F : 0));
    pattern[b] = static_cast<std::uint8_t>(((hi >= 0 ? hi : 0) << 4) | (lo >= 0 ? lo : 0));
    mask[b] = m;
    wild |= m != 0xFF;
    any_fixed |= m == 0xFF;
  }
  if (wild && !any_fixed) return skip(SkipReason::NoFixedByte, std::string(ident));

  sig.kind = wild ? StringKind::HexWild : StringKind::HexFixed;
  sig.pattern = std::move(pattern);
  if (wild) sig.mask = std::move(mask);
  if (auto bad = parse_modifiers(def.substr(close + 1), false, sig.modifiers))
    return Decoded{std::nullopt, bad};
  sig.id = content_id(sig.kind, sig.pattern, sig.mask, sig.modifiers);
  return Decoded{std::move(sig), std::nullopt};
}

}  // namespace

Decoded decode_sub_signature(std::string_view identifier, std::string_view raw_definition) {
  std::string_view def = raw_definition;
  while (!def.empty() && std::isspace(static_cast<unsigned char>(def.front()))) def.remove_prefix(1);
  if (def.empty()) return skip(SkipReason::Empty, std::string(identifier));
  switch (def.front()) {
    case '"': return decode_text(identifier, def);
    case '{': return decode_hex(identifier, def);
    case '/': return skip(SkipReason::Regex, std::string(identifier));
    default: return skip(SkipReason::BadEscape, std::string(identifier) + ": unrecognized value");
  }
}

std::string encode_text_literal(std::span<const std::uint8_t> bytes) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out = "\"";
  for (std::uint8_t b : bytes) {
    switch (b) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\t': out += "\\t"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      default:
        if (b >= 0x20 && b < 0x7f) {
          out.push_back(static_cast<char>(b));
        } else {
          out += "\\x";
          out.push_back(kDigits[b >> 4]);
          out.push_back(kDigits[b & 0xF]);
        }
    }
  }
  out.push_back('"');
  return out;
}

}  // namespace hayama::yara
