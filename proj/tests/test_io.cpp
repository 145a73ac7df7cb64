#include <unistd.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <queue>
#include <random>
#include <set>
#include <sstream>

#include "doctest.h"
#include "retisynth/builders.hpp"
#include "retisynth/checkpoint.hpp"
#include "retisynth/cli.hpp"
#include "retisynth/config.hpp"
#include "retisynth/dataset.hpp"
#include "retisynth/image_io.hpp"
#include "retisynth/synth.hpp"

using namespace retisynth;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag)
      : path(fs::temp_directory_path() / ("retisynth_io_" + tag + "_" + std::to_string(::getpid()))) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::vector<std::uint8_t> bytes_of(const std::string& s) { return {s.begin(), s.end()}; }

std::vector<std::uint8_t> random_pnm(bool color, std::size_t w, std::size_t h, const std::string& header_extra,
                                     std::uint64_t seed) {
  std::string header = std::string(color ? "P6" : "P5") + "\n" + header_extra + std::to_string(w) + " " +
                       std::to_string(h) + "\n255\n";
  auto out = bytes_of(header);
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < (color ? 3 : 1) * w * h; ++i) out.push_back(static_cast<std::uint8_t>(rng() & 0xff));
  return out;
}

std::size_t error_offset(const std::vector<std::uint8_t>& bytes) {
  try {
    decode_pnm(bytes);
  } catch (const FormatError& e) {
    const std::string msg = e.what();
    const auto at = msg.rfind("at byte ");
    REQUIRE(at != std::string::npos);
    return std::stoul(msg.substr(at + 8));
  }
  FAIL("expected a format error");
  return 0;
}

int run_cli(const std::vector<std::string>& args, std::string* out_text = nullptr, std::string* err_text = nullptr) {
  std::ostringstream out, err;
  const int rc = cli_dispatch(args, out, err);
  if (out_text) *out_text = out.str();
  if (err_text) *err_text = err.str();
  return rc;
}

// 4-connected components of pixels above `threshold` inside the disk.
std::size_t bright_components(const Tensor& img, const RenderInfo& info, float threshold) {
  const auto& s = img.shape();
  const std::size_t c = s[0], h = s[1], w = s[2];
  const auto d = img.data();
  std::vector<char> on(h * w, 0), seen(h * w, 0);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const double dx = static_cast<double>(x) + 0.5 - info.disk_cx, dy = static_cast<double>(y) + 0.5 - info.disk_cy;
      if (dx * dx + dy * dy > info.disk_r * info.disk_r) continue;
      float mean = 0;
      for (std::size_t k = 0; k < c; ++k) mean += d[(k * h + y) * w + x];
      on[y * w + x] = mean / static_cast<float>(c) > threshold;
    }
  std::size_t count = 0;
  for (std::size_t i = 0; i < h * w; ++i) {
    if (!on[i] || seen[i]) continue;
    ++count;
    std::queue<std::size_t> q;
    q.push(i);
    seen[i] = 1;
    while (!q.empty()) {
      const auto p = q.front();
      q.pop();
      const std::size_t y = p / w, x = p % w;
      const std::size_t nb[4] = {y > 0 ? p - w : p, y + 1 < h ? p + w : p, x > 0 ? p - 1 : p, x + 1 < w ? p + 1 : p};
      for (auto n : nb)
        if (on[n] && !seen[n]) {
          seen[n] = 1;
          q.push(n);
        }
    }
  }
  return count;
}

double disk_mean(const Tensor& img, const RenderInfo& info) {
  const auto& s = img.shape();
  const auto d = img.data();
  double sum = 0;
  std::size_t n = 0;
  for (std::size_t k = 0; k < s[0]; ++k)
    for (std::size_t y = 0; y < s[1]; ++y)
      for (std::size_t x = 0; x < s[2]; ++x) {
        const double dx = static_cast<double>(x) + 0.5 - info.disk_cx, dy = static_cast<double>(y) + 0.5 - info.disk_cy;
        if (dx * dx + dy * dy > info.disk_r * info.disk_r) continue;
        sum += d[(k * s[1] + y) * s[2] + x];
        ++n;
      }
  return sum / static_cast<double>(n);
}

DatasetManifest labeled_manifest(const std::vector<std::pair<std::string, std::size_t>>& classes) {
  DatasetManifest m;
  for (const auto& [label, n] : classes)
    for (std::size_t i = 0; i < n; ++i)
      m.entries.push_back({label + "_" + std::to_string(i) + ".pnm", label, Modality::cfp, Split::none, Provenance::real});
  return m;
}

std::map<std::string, std::array<std::size_t, 3>> per_class_counts(const DatasetManifest& m) {
  std::map<std::string, std::array<std::size_t, 3>> out;
  for (const auto& e : m.entries) {
    REQUIRE(e.split != Split::none);
    ++out[e.label][static_cast<std::size_t>(e.split) - 1];
  }
  return out;
}

}  // namespace

TEST_CASE("pixel mapping") {
  PnmImage img;
  img.header = "P5\n3 1\n255\n";
  img.channels = 1;
  img.width = 3;
  img.height = 1;
  img.pixels = {0, 255, 128};
  const auto t = pnm_to_tensor(img);
  CHECK(t.shape() == Shape{1, 1, 3});
  CHECK(t.data()[0] == -1.0f);
  CHECK(t.data()[1] == 1.0f);
  CHECK(t.data()[2] == doctest::Approx(0.0039215686).epsilon(1e-6));
}

TEST_CASE("minimal P6 header parses as 2x2 rgb") {
  auto b = bytes_of("P6\n2 2\n255\n");
  for (int i = 0; i < 12; ++i) b.push_back(static_cast<std::uint8_t>(i * 20));
  const auto img = decode_pnm(b);
  CHECK(img.channels == 3);
  CHECK(img.width == 2);
  CHECK(img.height == 2);
  CHECK(img.pixels.size() == 12);
  const auto t = pnm_to_tensor(img);
  CHECK(t.shape() == Shape{3, 2, 2});
  // channel 1 of pixel (0,1) is byte 4
  CHECK(t.data()[1 * 4 + 1] == doctest::Approx(2.0 * 80 / 255 - 1));
}

TEST_CASE("codec round trip is byte-identical") {
  TempDir dir("codec");
  std::mt19937_64 rng(11);
  const std::vector<std::string> extras{"", "# comment\n", "#a\n# b c\n", "  "};
  for (int trial = 0; trial < 24; ++trial) {
    const bool color = trial % 2 == 0;
    const std::size_t w = 1 + rng() % 70, h = 1 + rng() % 70;
    const auto bytes = random_pnm(color, w, h, extras[static_cast<std::size_t>(trial) % extras.size()], rng());
    CHECK(encode_pnm(decode_pnm(bytes)) == bytes);
    const auto p = dir.path / ("f" + std::to_string(trial) + ".pnm");
    write_file_atomic(p, bytes);
    write_pnm(read_pnm(p), dir.path / "copy.pnm");
    CHECK(read_file(dir.path / "copy.pnm") == bytes);
  }
  for (bool color : {false, true}) {
    const auto big = random_pnm(color, 1024, 1024, "", 5);
    CHECK(encode_pnm(decode_pnm(big)) == big);
  }
}

TEST_CASE("tensor path round trip for canonical files covers every byte value") {
  TempDir dir("tensor");
  for (bool color : {false, true}) {
    auto bytes = bytes_of(std::string(color ? "P6" : "P5") + "\n16 16\n255\n");
    for (std::size_t i = 0; i < (color ? 3u : 1u) * 256; ++i) bytes.push_back(static_cast<std::uint8_t>((i * 37) & 0xff));
    const auto p = dir.path / "in.pnm";
    write_file_atomic(p, bytes);
    save_image(load_image(p), dir.path / "out.pnm");
    CHECK(read_file(dir.path / "out.pnm") == bytes);
  }
}

TEST_CASE("save rounds half up and clamps") {
  std::vector<float> v{-1.5f, -1.0f, 1.0f, 2.0f, 2.0f * 127.5f / 255.0f - 1.0f};
  const auto img = tensor_to_pnm(Tensor(Shape{1, 1, 5}, std::move(v)));
  CHECK(img.pixels == std::vector<std::uint8_t>{0, 0, 255, 255, 128});
}

TEST_CASE("codec errors carry byte offsets") {
  CHECK(error_offset(bytes_of("P3\n1 1\n255\n\x01")) == 0);
  CHECK(error_offset(bytes_of("Q5\n1 1\n255\n\x01")) == 0);
  CHECK(error_offset(bytes_of("P6\n2 2\n65535\n")) == 7);
  CHECK(error_offset(bytes_of("P5\n2 2\n# note\n  16\n")) == 16);
  auto truncated = bytes_of("P6\n2 2\n255\n");
  truncated.resize(truncated.size() + 11, 9);
  CHECK(error_offset(truncated) == truncated.size());
  auto trailing = bytes_of("P5\n1 1\n255\n");
  trailing.push_back(1);
  trailing.push_back(2);
  CHECK(error_offset(trailing) == trailing.size() - 1);
  CHECK(error_offset(bytes_of("P5\n1025 1\n255\n")) == 3);
  CHECK(error_offset(bytes_of("P5\n0 1\n255\n")) == 3);
  CHECK(error_offset(bytes_of("P5\n4")) == 4);
  CHECK_THROWS_AS(load_image("/nonexistent/retisynth.pnm"), LoadError);
}

TEST_CASE("synthetic corpus is deterministic per seed") {
  TempDir dir("corpus");
  const auto a = synth_corpus(SymptomKind::drusen, Modality::cfp, 10, 64, 7, dir.path / "a");
  const auto b = synth_corpus(SymptomKind::drusen, Modality::cfp, 10, 64, 7, dir.path / "b");
  const auto c = synth_corpus(SymptomKind::drusen, Modality::cfp, 10, 64, 8, dir.path / "c");
  REQUIRE(a.entries.size() == 10);
  std::size_t differ = 0;
  for (std::size_t i = 0; i < 10; ++i) {
    CHECK(a.entries[i].path == b.entries[i].path);
    CHECK(read_file(dir.path / "a" / a.entries[i].path) == read_file(dir.path / "b" / b.entries[i].path));
    differ += read_file(dir.path / "a" / a.entries[i].path) != read_file(dir.path / "c" / c.entries[i].path);
  }
  CHECK(differ == 10);
  CHECK_NOTHROW(validate_manifest(a, dir.path / "a"));
  CHECK_THROWS_AS(synth_corpus(SymptomKind::ga, Modality::fa, 0, 64, 1, dir.path / "z"), ConfigError);
  CHECK_THROWS_AS(synth_corpus(SymptomKind::ga, Modality::fa, 1, 48, 1, dir.path / "z"), ConfigError);
}

TEST_CASE("drusen images show at least five bright components inside the disk") {
  for (auto mod : {Modality::cfp, Modality::fa})
    for (std::size_t size : {32u, 64u})
      for (std::size_t i = 0; i < 20; ++i) {
        RenderInfo info;
        const auto img = render_fundus(SymptomKind::drusen, mod, size, 7, i, {}, &info);
        CAPTURE(i);
        CAPTURE(size);
        CHECK(bright_components(img, info, 0.5f) >= 5);
      }
}

TEST_CASE("healthy and drusen disks differ in mean intensity") {
  for (auto mod : {Modality::cfp, Modality::fa}) {
    double healthy = 0, drusen = 0;
    for (std::size_t i = 0; i < 50; ++i) {
      RenderInfo hi, di;
      const auto h = render_fundus(SymptomKind::healthy, mod, 64, 3, i, {}, &hi);
      const auto d = render_fundus(SymptomKind::drusen, mod, 64, 3, i, {}, &di);
      healthy += disk_mean(h, hi) / 50;
      drusen += disk_mean(d, di) / 50;
    }
    CHECK(std::abs(drusen - healthy) > 0.02);
  }
}

TEST_CASE("split counts follow the ratios") {
  const std::array<double, 3> r{0.7, 0.1, 0.2};
  CHECK(split_counts(100, r) == std::array<std::size_t, 3>{70, 10, 20});
  CHECK(split_counts(30, r) == std::array<std::size_t, 3>{21, 3, 6});
  CHECK(split_counts(10, r) == std::array<std::size_t, 3>{7, 1, 2});
  CHECK(split_counts(7, {1.0, 0.0, 0.0}) == std::array<std::size_t, 3>{7, 0, 0});
  for (std::size_t n = 0; n < 200; ++n) {
    const auto c = split_counts(n, r);
    CHECK(c[0] + c[1] + c[2] == n);
    for (std::size_t s = 0; s < 3; ++s) CHECK(std::abs(static_cast<double>(c[s]) - r[s] * static_cast<double>(n)) <= 1.0);
  }
}

TEST_CASE("split_dataset stratifies per class") {
  const auto m = labeled_manifest({{"drusen", 100}, {"ga", 100}, {"healthy", 37}});
  std::vector<std::string> warnings;
  const auto a = split_dataset(m, {0.7, 0.1, 0.2}, 5, &warnings);
  CHECK(warnings.empty());
  CHECK(a.split_seed == 5);
  const auto counts = per_class_counts(a);
  CHECK(counts.at("drusen") == std::array<std::size_t, 3>{70, 10, 20});
  CHECK(counts.at("ga") == std::array<std::size_t, 3>{70, 10, 20});
  const auto h = counts.at("healthy");
  CHECK(h[0] + h[1] + h[2] == 37);
  for (std::size_t s = 0; s < 3; ++s) CHECK(std::abs(static_cast<double>(h[s]) - std::array{0.7, 0.1, 0.2}[s] * 37) <= 1.0);

  const auto again = split_dataset(m, {0.7, 0.1, 0.2}, 5);
  const auto other = split_dataset(m, {0.7, 0.1, 0.2}, 6);
  std::size_t moved = 0;
  for (std::size_t i = 0; i < m.entries.size(); ++i) {
    CHECK(again.entries[i].split == a.entries[i].split);
    moved += other.entries[i].split != a.entries[i].split;
  }
  CHECK(moved > 0);
  CHECK(per_class_counts(other) == counts);

  const auto all_train = split_dataset(m, {1.0, 0.0, 0.0}, 1);
  CHECK(all_train.count(Split::train) == m.entries.size());
}

TEST_CASE("split_dataset falls back to a global split for tiny classes") {
  const auto m = labeled_manifest({{"drusen", 20}, {"ga", 2}});
  std::vector<std::string> warnings;
  const auto s = split_dataset(m, {0.7, 0.1, 0.2}, 1, &warnings);
  REQUIRE(warnings.size() == 1);
  CHECK(warnings[0].find("ga") != std::string::npos);
  CHECK(s.count(Split::train) == split_counts(22, {0.7, 0.1, 0.2})[0]);
  CHECK(s.count(Split::val) + s.count(Split::test) + s.count(Split::train) == 22);
  CHECK_THROWS_AS(split_dataset(m, {0.7, 0.1, 0.3}, 1), ConfigError);
  CHECK_THROWS_AS(split_dataset(m, {1.1, -0.1, 0.0}, 1), ConfigError);
  CHECK_NOTHROW(split_dataset(m, {0.7, 0.1, 0.2 + 5e-10}, 1));
}

TEST_CASE("manifest csv round trip and validation") {
  TempDir dir("manifest");
  auto m = synth_corpus(SymptomKind::healthy, Modality::fa, 4, 32, 2, dir.path);
  m = split_dataset(m, {0.5, 0.25, 0.25}, 9);
  m.entries[0].provenance = Provenance::wgan;
  write_manifest(m, dir.path / "manifest.csv");
  const auto back = read_manifest(dir.path / "manifest.csv");
  CHECK(manifest_csv(back) == manifest_csv(m));
  CHECK(back.split_seed == 9);
  CHECK(back.entries[0].provenance == Provenance::wgan);
  CHECK(back.entries[1].modality == Modality::fa);
  CHECK_NOTHROW(validate_manifest(back, dir.path));
  const auto split = load_split(back, dir.path, Split::train);
  CHECK(split.images.size() == 2);
  CHECK(split.labels == std::vector<int>{2, 2});
  fs::remove(dir.path / back.entries[3].path);
  CHECK_THROWS_AS(validate_manifest(back, dir.path), LoadError);
  CHECK_THROWS_AS(parse_manifest("a,b\n"), FormatError);
  CHECK_THROWS_AS(parse_manifest("path,label,modality,split,provenance\nx.pnm,drusen,XR,train,real\n"), FormatError);
  CHECK_THROWS_AS(parse_manifest("path,label,modality,split,provenance\nx.pnm,drusen,CFP,train,fake\n"), FormatError);
}

TEST_CASE("checkpoint round trip is bit-exact") {
  TempDir dir("ckpt");
  auto g = build_dcgan_generator<float>({16, 32, 3, 8}, 4);
  auto d = build_discriminator<float>({32, 3, 8, DiscriminatorHead::linear}, 5);
  float fill = 0.25f;
  for (auto& b : d.buffers())
    for (auto& v : *b.values) v = fill += 0.125f;
  save_checkpoint({{"generator", &g}, {"critic", &d}}, {123, 4, 99}, dir.path / "x.ckpt");
  const auto ck = load_checkpoint(dir.path / "x.ckpt");
  CHECK(ck.counters.step == 123);
  CHECK(ck.counters.epoch == 4);
  CHECK(ck.counters.seed == 99);
  REQUIRE(ck.networks.size() == 2);
  CHECK(ck.networks[0].name == "generator");
  CHECK(ck.networks[1].name == "critic");

  auto g2 = instantiate(ck.get("generator"));
  auto d2 = instantiate(ck.get("critic"));
  CHECK(g2.checksum() == g.checksum());
  CHECK(d2.checksum() == d.checksum());
  const auto p = g.parameters();
  const auto p2 = g2.parameters();
  REQUIRE(p.size() == p2.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    CHECK(p[i].name == p2[i].name);
    CHECK(p[i].tensor.shape() == p2[i].tensor.shape());
    CHECK(std::memcmp(p[i].tensor.data().data(), p2[i].tensor.data().data(), p[i].tensor.numel() * sizeof(float)) == 0);
  }
  const auto b = d.buffers();
  const auto b2 = d2.buffers();
  REQUIRE(b.size() == b2.size());
  for (std::size_t i = 0; i < b.size(); ++i) CHECK(*b[i].values == *b2[i].values);
  CHECK(ck.get("generator").tensors.size() == p.size() + g.buffers().size());

  const auto bytes = read_file(dir.path / "x.ckpt");
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "SYNR");
  CHECK(bytes[4] == kCheckpointVersion);
  CHECK(encode_checkpoint({{"generator", &g}, {"critic", &d}}, {123, 4, 99}) == bytes);
}

TEST_CASE("bad checkpoints are rejected without touching the target") {
  TempDir dir("badckpt");
  auto g = build_dcgan_generator<float>({16, 32, 1, 8}, 1);
  save_checkpoint({{"generator", &g}}, {}, dir.path / "g.ckpt");
  const auto bytes = read_file(dir.path / "g.ckpt");
  auto target = build_dcgan_generator<float>({16, 32, 1, 8}, 2);
  const auto before = target.checksum();
  REQUIRE(before != g.checksum());

  auto try_load = [&](const std::vector<std::uint8_t>& b) {
    write_file_atomic(dir.path / "bad.ckpt", b);
    restore(target, load_checkpoint(dir.path / "bad.ckpt").get("generator"));
  };
  for (std::size_t cut : {std::size_t{0}, std::size_t{3}, std::size_t{11}, bytes.size() / 2, bytes.size() - 1}) {
    CAPTURE(cut);
    CHECK_THROWS_AS(try_load({bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(cut)}), LoadError);
    CHECK(target.checksum() == before);
  }
  auto flipped = bytes;
  flipped[bytes.size() / 2] ^= 0x40;
  CHECK_THROWS_AS(try_load(flipped), LoadError);
  auto version = bytes;
  version[4] = 2;
  CHECK_THROWS_WITH_AS(try_load(version), doctest::Contains("version"), LoadError);
  auto magic = bytes;
  magic[0] = 'X';
  CHECK_THROWS_AS(try_load(magic), LoadError);
  CHECK(target.checksum() == before);

  auto clf = build_classifier<float>({3, 32, 1, 8}, 3);
  const auto clf_before = clf.checksum();
  CHECK_THROWS_WITH_AS(restore(clf, load_checkpoint(dir.path / "g.ckpt").get("generator")), doctest::Contains("dcgan_generator"),
                       LoadError);
  CHECK(clf.checksum() == clf_before);
  auto wider = build_dcgan_generator<float>({16, 32, 1, 16}, 2);
  CHECK_THROWS_AS(restore(wider, load_checkpoint(dir.path / "g.ckpt").get("generator")), LoadError);
  CHECK_THROWS_AS(load_checkpoint(dir.path / "g.ckpt").get("critic"), LoadError);
  CHECK_THROWS_AS(load_checkpoint(dir.path / "missing.ckpt"), LoadError);

  restore(target, load_checkpoint(dir.path / "g.ckpt").get("generator"));
  CHECK(target.checksum() == g.checksum());
}

TEST_CASE("run config parsing") {
  const auto cfg = RunConfig::parse(
      "# top comment\n"
      "[wgan]\n"
      "clip = 0.02   # tighter\n"
      "n_critic=3\n"
      "[classifier]\n"
      "epochs = 4\n"
      "gan.saturating = yes\n"
      "sweep.sizes = 5, 10,20\n");
  CHECK(cfg.get_double("wgan.clip") == 0.02);
  CHECK(cfg.get_int("wgan.n_critic") == 3);
  CHECK(cfg.get_int("classifier.epochs") == 4);
  CHECK(cfg.get_bool("gan.saturating"));
  CHECK(cfg.get_list("sweep.sizes") == std::vector<double>{5, 10, 20});
  CHECK(cfg.get_double("wgan.lr") == 5e-5);
  CHECK(cfg.is_default("wgan.lr"));
  CHECK_FALSE(cfg.is_default("wgan.clip"));

  CHECK_THROWS_WITH_AS(RunConfig::parse("[wgan]\nclipp = 1\n"), doctest::Contains("wgan.clipp"), ConfigError);
  CHECK_THROWS_WITH_AS(RunConfig::parse("\n\nwgan.n_critic = many\n"), doctest::Contains("line 3"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse("no equals sign\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse("[wgan\n"), ConfigError);
  CHECK_THROWS_AS(cfg.get_int("nope.key"), ConfigError);

  const auto echoed = RunConfig::parse(cfg.echo());
  CHECK(echoed.values() == cfg.values());
  for (const auto& k : config_schema()) {
    CHECK_FALSE(k.doc.empty());
    CHECK_NOTHROW(RunConfig{}.set(k.key, k.default_value));
  }
}

TEST_CASE("cli synth-data writes images, manifest and provenance") {
  TempDir dir("cli_synth");
  const auto d = dir.path / "d";
  REQUIRE(run_cli({"synth-data", "--kind", "drusen", "--n", "10", "--out", d.string()}) == 0);
  const auto m = read_manifest(d / "manifest.csv");
  REQUIRE(m.entries.size() == 10);
  std::size_t images = 0;
  for (const auto& e : fs::directory_iterator(d)) images += e.path().extension() == ".pnm";
  CHECK(images == 10);
  CHECK_NOTHROW(validate_manifest(m, d));
  CHECK(fs::exists(d / "config.ini"));
  CHECK(RunConfig::load(d / "config.ini").get_int("data.n") == 10);

  std::ifstream prov(d / "provenance.json");
  const std::string text((std::istreambuf_iterator<char>(prov)), std::istreambuf_iterator<char>());
  CHECK(text.find("\"seed\": 0") != std::string::npos);
  CHECK(text.find("drusen_CFP_00009.pnm") != std::string::npos);
  CHECK(text.find("crc32") != std::string::npos);

  REQUIRE(run_cli({"synth-data", "--kind", "drusen", "--n", "10", "--seed", "0", "--out", (dir.path / "e").string()}) == 0);
  for (const auto& e : m.entries) CHECK(read_file(d / e.path) == read_file(dir.path / "e" / e.path));
}

TEST_CASE("cli exit codes") {
  TempDir dir("cli_codes");
  std::string out, err;
  CHECK(run_cli({}, &out, &err) == 1);
  CHECK(err.find("Usage") != std::string::npos);
  CHECK(run_cli({"frobnicate"}, &out, &err) == 1);
  CHECK(err.find("Usage") != std::string::npos);
  CHECK(run_cli({"synth-data", "--bogus"}, &out, &err) == 1);
  CHECK(err.find("Usage") != std::string::npos);
  CHECK(run_cli({"synth-data", "--kind", "cataract", "--out", dir.path.string()}, &out, &err) == 2);
  CHECK(err.find("cataract") != std::string::npos);
  write_text_atomic(dir.path / "typo.ini", "[wgan]\nclp = 1\n");
  CHECK(run_cli({"synth-data", "--config", (dir.path / "typo.ini").string(), "--out", dir.path.string()}, &out, &err) == 2);
  CHECK(err.find("clp") != std::string::npos);
  CHECK(run_cli({"--help"}, &out, &err) == 0);
  CHECK(out.find("train-wgan") != std::string::npos);
}

TEST_CASE("cli verify and generate examples") {
  TempDir dir("cli_verify");
  auto clf = build_classifier<float>({3, 32, 3, 8}, 1);
  save_checkpoint({{"classifier", &clf}}, {}, dir.path / "clf.ckpt");
  auto g = build_dcgan_generator<float>({100, 32, 3, 8}, 2);
  save_checkpoint({{"generator", &g}}, {}, dir.path / "g.bin");
  REQUIRE(run_cli({"synth-data", "--kind", "drusen", "--n", "6", "--size", "32", "--out", (dir.path / "d").string()}) == 0);

  std::string out, err;
  REQUIRE(run_cli({"verify", "--classifier", (dir.path / "clf.ckpt").string(), "--images", (dir.path / "d").string(),
                   "--true-class", "drusen", "--out", (dir.path / "v").string()},
                  &out, &err) == 0);
  const auto bytes = read_file(dir.path / "v" / "verification.csv");
  std::istringstream csv(std::string(bytes.begin(), bytes.end()));
  std::string header, row, extra;
  std::getline(csv, header);
  std::getline(csv, row);
  CHECK_FALSE(std::getline(csv, extra));
  std::vector<std::string> f;
  std::stringstream ss(row);
  for (std::string c; std::getline(ss, c, ',');) f.push_back(c);
  REQUIRE(f.size() >= 4);
  const double value = std::stod(f[3]);
  CHECK(value >= 0.0);
  CHECK(value <= 1.0);

  const auto gen_dir = dir.path / "gen";
  REQUIRE(run_cli({"generate", "--ckpt", (dir.path / "g.bin").string(), "--n", "4", "--out", gen_dir.string()}) == 0);
  std::size_t n = 0;
  for (const auto& e : fs::directory_iterator(gen_dir)) {
    if (e.path().extension() != ".pnm") continue;
    ++n;
    const auto t = load_image(e.path());
    CHECK(t.shape() == Shape{3, 32, 32});
    for (float v : t.data()) {
      CHECK(v >= -1.0f);
      CHECK(v <= 1.0f);
    }
  }
  CHECK(n == 4);
  const auto m = read_manifest(gen_dir / "manifest.csv");
  CHECK(m.entries.size() == 4);
  CHECK(m.entries[0].provenance == Provenance::wgan);

  CHECK(run_cli({"verify", "--classifier", (dir.path / "g.bin").string(), "--images", (dir.path / "d").string(),
                 "--true-class", "drusen", "--out", (dir.path / "v2").string()},
                &out, &err) == 2);
  CHECK(run_cli({"verify", "--classifier", (dir.path / "clf.ckpt").string(), "--images", (dir.path / "d").string(),
                 "--true-class", "cataract", "--out", (dir.path / "v3").string()},
                &out, &err) == 2);
}
