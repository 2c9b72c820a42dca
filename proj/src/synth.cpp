#include "hayama/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <nlohmann/json.hpp>

#include "hayama/error.hpp"
#include "hayama/yara.hpp"

namespace hayama::synth {
namespace {

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}
  std::uint64_t next() { return gen_(); }
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }
  std::size_t below(std::size_t n) { return static_cast<std::size_t>(uniform() * static_cast<double>(n)); }
  bool chance(double p) { return uniform() < p; }
  // Box-Muller; the standard distributions are not portable across libraries.
  double gauss() {
    double u1 = uniform(), u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.141592653589793 * u2);
  }
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[below(i)]);
  }

 private:
  std::mt19937_64 gen_;
};

enum class Form { Hex, Text, HexWild };

struct Pattern {
  Form form;
  Bytes bytes;
  std::size_t wild = 0;  // HexWild: index of the ?? byte
  std::string ident;
  std::string raw;       // definition as written in the rule
  std::string id;
};

std::string hex_definition(const Pattern& p) {
  static const char* digits = "0123456789ABCDEF";
  std::string s = "{";
  for (std::size_t i = 0; i < p.bytes.size(); ++i) {
    s += ' ';
    if (p.form == Form::HexWild && i == p.wild) {
      s += "??";
    } else {
      s += digits[p.bytes[i] >> 4];
      s += digits[p.bytes[i] & 15];
    }
  }
  return s + " }";
}

Pattern make_pattern(Rng& rng, const SyntheticSpec& spec, std::size_t index) {
  static const char alnum[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789";
  Pattern p;
  std::size_t len = spec.pattern_len_min + rng.below(spec.pattern_len_max - spec.pattern_len_min + 1);
  double f = rng.uniform();
  p.form = f < 0.6 ? Form::Hex : (f < 0.9 ? Form::Text : Form::HexWild);
  p.bytes.resize(len);
  for (auto& b : p.bytes) b = p.form == Form::Text ? alnum[rng.below(62)] : static_cast<std::uint8_t>(rng.next());
  if (p.form == Form::HexWild) p.wild = 1 + rng.below(len - 2);
  p.ident = "$p" + std::to_string(index);
  p.raw = p.form == Form::Text ? "\"" + std::string(p.bytes.begin(), p.bytes.end()) + "\"" : hex_definition(p);
  auto decoded = yara::decode_sub_signature(p.ident, p.raw);
  if (!decoded.signature) throw Error(ErrorCode::Integrity, "synth: generated definition did not decode");
  p.id = u64_hex(decoded.signature->id);
  return p;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace

void SyntheticSpec::validate() const {
  auto fail = [](const std::string& m) { throw Error(ErrorCode::Validation, "synthetic spec: " + m); };
  if (n_benign == 0 || n_malware == 0) fail("class counts must be positive");
  if (file_size_min == 0 || file_size_max < file_size_min) fail("file size range is empty");
  if (n_planted_patterns == 0) fail("n_planted_patterns must be positive");
  if (!(plant_rate_malware > plant_rate_benign)) fail("plant_rate_malware must exceed plant_rate_benign");
  if (plant_rate_benign < 0 || plant_rate_malware > 1) fail("plant rates must lie in [0, 1]");
  if (group_copies == 0) fail("group_copies must be positive");
  if (pattern_len_min < 6 || pattern_len_max < pattern_len_min) fail("patterns must be at least 6 bytes");
  if (!(test_fraction > 0 && test_fraction < 1)) fail("test_fraction must lie in (0, 1)");
  if (interaction_share < 0 || interaction_share > 1) fail("interaction_share must lie in [0, 1]");
  if (interaction_rate_benign < 0 || interaction_rate_benign > 1 || interaction_rate_malware < 0 ||
      interaction_rate_malware > 1)
    fail("interaction rates must lie in [0, 1]");
  if (noise_pattern_share < 0 || noise_pattern_share > 1 || noise_rate < 0 || noise_rate > 1 || copy_keep <= 0 ||
      copy_keep > 1)
    fail("rates must lie in [0, 1]");
}

SyntheticCorpus generate_synthetic(const SyntheticSpec& spec, const std::filesystem::path& out_dir) {
  spec.validate();
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir / "files", ec);
  fs::create_directories(out_dir / "rules", ec);
  if (ec) throw Error(ErrorCode::Io, "synth: cannot create " + out_dir.string() + ": " + ec.message());

  Rng rng(spec.seed);
  const std::size_t n_pat = spec.n_planted_patterns;
  std::vector<Pattern> patterns;
  for (std::size_t i = 0; i < n_pat; ++i) patterns.push_back(make_pattern(rng, spec, i));

  // Pattern roles: groups of two sides x copies, the rest label-independent.
  const std::size_t per_group = 2 * spec.group_copies;
  std::size_t n_noise = static_cast<std::size_t>(std::llround(spec.noise_pattern_share * n_pat));
  const std::size_t n_groups = (n_pat - std::min(n_noise, n_pat)) / per_group;
  n_noise = n_pat - n_groups * per_group;
  std::vector<double> weight(n_groups);
  double wsum = 0;
  for (std::size_t g = 0; g < n_groups; ++g) wsum += weight[g] = 1.0 / std::pow(g + 1.0, 0.7);
  for (auto& w : weight) w *= static_cast<double>(n_groups) / wsum;
  // Interaction groups are spread evenly over the weight ranking, starting
  // with the heaviest.
  std::vector<std::uint8_t> interaction(n_groups, 0);
  for (std::size_t g = 0; g < n_groups; ++g)
    interaction[g] = std::ceil((g + 1) * spec.interaction_share) > std::ceil(g * spec.interaction_share);

  // Rules: one per group, noise patterns in blocks of ten.
  auto write_rule = [&](const std::string& name, std::size_t begin, std::size_t end) {
    std::string text = "rule " + name + "\n{\n  meta:\n    generator = \"hayama synth\"\n  strings:\n";
    for (std::size_t i = begin; i < end; ++i) text += "    " + patterns[i].ident + " = " + patterns[i].raw + "\n";
    text += "  condition:\n    any of them\n}\n";
    write_file(out_dir / "rules" / (name + ".yar"), text);
  };
  for (std::size_t g = 0; g < n_groups; ++g) write_rule("synth_group_" + std::to_string(g), g * per_group, (g + 1) * per_group);
  for (std::size_t b = n_groups * per_group, k = 0; b < n_pat; b += 10, ++k)
    write_rule("synth_noise_" + std::to_string(k), b, std::min(b + 10, n_pat));

  // Sample order: shuffled, then a stratified train/test split.
  const std::size_t n = spec.n_benign + spec.n_malware;
  std::vector<std::uint8_t> labels(n, 0);
  std::fill(labels.begin(), labels.begin() + spec.n_malware, 1);
  rng.shuffle(labels);
  std::vector<std::uint8_t> is_test(n, 0);
  for (std::uint8_t cls : {0, 1}) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < n; ++i)
      if (labels[i] == cls) idx.push_back(i);
    rng.shuffle(idx);
    auto n_test = static_cast<std::size_t>(std::llround(spec.test_fraction * idx.size()));
    for (std::size_t i = 0; i < n_test; ++i) is_test[idx[i]] = 1;
  }

  SyntheticCorpus out;
  out.root = out_dir;
  out.rules_dir = out_dir / "rules";
  out.manifest = out_dir / "manifest.csv";
  out.side_features = out_dir / "side.csv";
  out.plant_log = out_dir / "plants.jsonl";
  for (const auto& p : patterns) out.pattern_ids.push_back(p.id);

  std::string manifest = "key,path,label,split\n";
  std::string side = "key";
  const std::size_t n_side = spec.n_signal_side_features + spec.n_noise_side_features;
  for (std::size_t k = 0; k < spec.n_signal_side_features; ++k) side += ",signal_" + std::to_string(k);
  for (std::size_t k = 0; k < spec.n_noise_side_features; ++k) side += ",noise_" + std::to_string(k);
  side += "\n";
  std::string plants;
  std::vector<std::string> digests;

  for (std::size_t i = 0; i < n; ++i) {
    char key[32];
    std::snprintf(key, sizeof key, "s%05zu", i);
    const bool mal = labels[i] == 1;

    std::vector<std::uint32_t> chosen;
    for (std::size_t g = 0; g < n_groups; ++g) {
      const bool both = interaction[g] && mal;
      double rate = interaction[g] ? (mal ? spec.interaction_rate_malware : spec.interaction_rate_benign)
                                   : (mal ? spec.plant_rate_malware : spec.plant_rate_benign);
      if (!rng.chance(std::min(1.0, rate * weight[g]))) continue;
      bool side_a = rng.chance(0.5);
      for (int s = 0; s < 2; ++s) {
        if (!both && (s == 0) != side_a) continue;
        for (std::size_t c = 0; c < spec.group_copies; ++c)
          if (rng.chance(spec.copy_keep))
            chosen.push_back(static_cast<std::uint32_t>(g * per_group + s * spec.group_copies + c));
      }
    }
    for (std::size_t j = n_groups * per_group; j < n_pat; ++j)
      if (rng.chance(spec.noise_rate)) chosen.push_back(static_cast<std::uint32_t>(j));
    rng.shuffle(chosen);

    std::size_t planted_len = 0;
    for (auto j : chosen) planted_len += patterns[j].bytes.size();
    std::size_t size = spec.file_size_min + rng.below(spec.file_size_max - spec.file_size_min + 1);
    size = std::max(size, planted_len);
    // Filler split into chosen.size() + 1 random gaps.
    std::vector<std::size_t> cuts(chosen.size());
    for (auto& c : cuts) c = rng.below(size - planted_len + 1);
    std::sort(cuts.begin(), cuts.end());
    Bytes file;
    file.reserve(size);
    std::size_t prev = 0;
    for (std::size_t k = 0; k < chosen.size(); ++k) {
      for (std::size_t f = prev; f < cuts[k]; ++f) file.push_back(static_cast<std::uint8_t>(rng.next()));
      prev = cuts[k];
      const auto& p = patterns[chosen[k]];
      out.plants.push_back({key, chosen[k], file.size()});
      for (std::size_t b = 0; b < p.bytes.size(); ++b)
        file.push_back(p.form == Form::HexWild && b == p.wild ? static_cast<std::uint8_t>(rng.next()) : p.bytes[b]);
    }
    for (std::size_t f = prev; f < size - planted_len; ++f) file.push_back(static_cast<std::uint8_t>(rng.next()));

    std::string rel = std::string("files/") + key + ".bin";
    write_file(out_dir / rel, file);
    digests.push_back(sha256_hex(file));
    manifest += std::string(key) + "," + rel + "," + (mal ? "1" : "0") + "," + (is_test[i] ? "test" : "train") + "\n";

    side += key;
    for (std::size_t k = 0; k < n_side; ++k) {
      double v = rng.gauss();
      if (k < spec.n_signal_side_features) v += (mal ? 0.5 : -0.5) * spec.side_shift;
      side += "," + fmt(v);
    }
    side += "\n";
  }
  for (const auto& pl : out.plants) {
    nlohmann::json j = {{"key", pl.key}, {"pattern", pl.pattern}, {"id", out.pattern_ids[pl.pattern]}, {"offset", pl.offset}};
    plants += j.dump() + "\n";
  }
  write_file(out.manifest, manifest);
  write_file(out.side_features, side);
  write_file(out.plant_log, plants);

  std::string all;
  for (const auto& d : digests) all += d;
  all += sha256_hex(as_bytes(manifest)) + sha256_hex(as_bytes(side)) + sha256_hex(as_bytes(plants));
  out.digest = sha256_hex(as_bytes(all));

  nlohmann::json meta = {{"format", "hayama-synth"},
                         {"version", 1},
                         {"spec",
                          {{"n_benign", spec.n_benign},
                           {"n_malware", spec.n_malware},
                           {"file_size_min", spec.file_size_min},
                           {"file_size_max", spec.file_size_max},
                           {"n_planted_patterns", spec.n_planted_patterns},
                           {"plant_rate_malware", spec.plant_rate_malware},
                           {"plant_rate_benign", spec.plant_rate_benign},
                           {"n_noise_side_features", spec.n_noise_side_features},
                           {"n_signal_side_features", spec.n_signal_side_features},
                           {"side_shift", spec.side_shift},
                           {"group_copies", spec.group_copies},
                           {"copy_keep", spec.copy_keep},
                           {"interaction_share", spec.interaction_share},
                           {"interaction_rate_benign", spec.interaction_rate_benign},
                           {"interaction_rate_malware", spec.interaction_rate_malware},
                           {"noise_pattern_share", spec.noise_pattern_share},
                           {"noise_rate", spec.noise_rate},
                           {"test_fraction", spec.test_fraction},
                           {"pattern_len_min", spec.pattern_len_min},
                           {"pattern_len_max", spec.pattern_len_max},
                           {"seed", spec.seed}}},
                         {"groups", n_groups},
                         {"interaction_groups", std::count(interaction.begin(), interaction.end(), 1)},
                         {"noise_patterns", n_noise},
                         {"pattern_ids", out.pattern_ids},
                         {"digest", out.digest}};
  write_file(out_dir / "synth.json", meta.dump(1) + "\n");
  return out;
}

}  // namespace hayama::synth
