#include "retisynth/cli.hpp"

#include <zlib.h>

#include <CLI11.hpp>
#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <json.hpp>
#include <map>
#include <optional>

#include "retisynth/builders.hpp"
#include "retisynth/checkpoint.hpp"
#include "retisynth/config.hpp"
#include "retisynth/dataset.hpp"
#include "retisynth/image_io.hpp"
#include "retisynth/interpret.hpp"
#include "retisynth/style.hpp"
#include "retisynth/synth.hpp"
#include "retisynth/training.hpp"

namespace retisynth {

namespace fs = std::filesystem;

namespace {

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out = ".";
};

struct Options {
  std::string kind, modality, manifest, images, ckpt, classifier, true_class, source = "real", group, class_name,
      pairing, label;
  std::vector<std::string> content, style;
  std::optional<long> n, size, ga_quadrant, top_n;
  std::optional<double> alpha;
  std::optional<std::string> sizes;
};

struct Context {
  RunConfig cfg;
  std::uint64_t seed = 0;
  fs::path out;
  std::ostream& log;
};

bool is_image_file(const fs::path& p) {
  const auto ext = p.extension().string();
  return ext == ".pnm" || ext == ".ppm" || ext == ".pgm";
}

// A directory of images, a manifest CSV, or a single image file.
std::vector<NamedImage> load_named(const std::string& arg) {
  std::vector<NamedImage> out;
  const fs::path p(arg);
  if (fs::is_directory(p)) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(p))
      if (e.is_regular_file() && is_image_file(e.path())) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) out.push_back({f.string(), load_image(f)});
  } else if (p.extension() == ".csv") {
    const auto m = read_manifest(p);
    for (const auto& e : m.entries) out.push_back({e.path, load_image(p.parent_path() / e.path)});
  } else {
    out.push_back({p.string(), load_image(p)});
  }
  if (out.empty()) throw LoadError("no images found at " + arg);
  return out;
}

ImageList load_list(const std::string& arg) {
  ImageList out;
  for (auto& n : load_named(arg)) out.push_back(std::move(n.image));
  return out;
}

std::string images_arg(const Options& o) {
  if (!o.images.empty()) return o.images;
  if (!o.manifest.empty()) return o.manifest;
  throw ConfigError("an image source is required (--images or --manifest)");
}

std::size_t checked_size(const ImageList& images) {
  const auto& s = images.front().shape();
  if (s.size() != 3 || s[1] != s[2]) throw DimensionError("expected square C×H×W images, got " + shape_str(s));
  for (const auto& im : images)
    if (im.shape() != s) throw DimensionError("images differ in shape: " + shape_str(im.shape()) + " vs " + shape_str(s));
  return s[1];
}

void write_report(const TrainReport& r, const fs::path& path) { write_text_atomic(path, r.to_csv()); }

Network<float> load_net(const std::string& path, const std::string& name) {
  if (path.empty()) throw ConfigError("checkpoint path required");
  auto net = instantiate(load_checkpoint(path).get(name));
  net.set_mode(NormMode::eval);
  return net;
}

std::vector<std::string> class_names(std::size_t n) {
  std::vector<std::string> names = symptom_names();
  names.resize(std::max(names.size(), n));
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i].empty()) names[i] = "class_" + std::to_string(i);
  names.resize(n);
  return names;
}

int class_index(const std::string& name, std::size_t n) {
  const auto names = class_names(n);
  const auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) throw LabelError("unknown class '" + name + "'");
  return static_cast<int>(it - names.begin());
}

std::size_t num_classes(const Network<float>& clf) { return clf.output_shape().at(0); }

WganConfig wgan_config(const RunConfig& c, std::uint64_t seed) {
  WganConfig w;
  w.clip_c = c.get_double("wgan.clip");
  w.n_critic = static_cast<std::size_t>(c.get_int("wgan.n_critic"));
  w.lr = c.get_double("wgan.lr");
  w.batch_size = static_cast<std::size_t>(c.get_int("wgan.batch_size"));
  w.latent_dim = static_cast<std::size_t>(c.get_int("wgan.latent_dim"));
  w.steps = static_cast<std::size_t>(c.get_int("wgan.steps"));
  w.seed = seed;
  validate(w);
  return w;
}

std::pair<Network<float>, Network<float>> build_gan_pair(const RunConfig& c, const char* sec, std::size_t channels,
                                                         std::size_t size, DiscriminatorHead head,
                                                         std::uint64_t seed) {
  const std::string s = sec;
  const auto base = static_cast<std::size_t>(c.get_int(s + ".base_ch"));
  const auto latent = static_cast<std::size_t>(c.get_int(s + ".latent_dim"));
  auto g = build_dcgan_generator<float>({latent, size, channels, base}, seed);
  auto d = build_discriminator<float>({size, channels, base, head}, seed + 1);
  return {std::move(g), std::move(d)};
}

void cmd_synth(Context& ctx, const Options&) {
  const auto kind_name = ctx.cfg.get_string("data.kind");
  const auto mod = parse_modality(ctx.cfg.get_string("data.modality"));
  const auto n = ctx.cfg.get_int("data.n");
  if (n < 1) throw ConfigError("data.n must be >= 1");
  RenderOptions ro;
  ro.ga_quadrant = static_cast<int>(ctx.cfg.get_int("data.ga_quadrant"));
  std::vector<SymptomKind> kinds;
  if (kind_name == "all")
    for (const auto& k : symptom_names()) kinds.push_back(parse_symptom(k));
  else
    kinds.push_back(parse_symptom(kind_name));
  DatasetManifest m;
  for (const auto kind : kinds) {
    const auto part = synth_corpus(kind, mod, static_cast<std::size_t>(n),
                                   static_cast<std::size_t>(ctx.cfg.get_int("data.img_size")), ctx.seed, ctx.out, ro);
    m.entries.insert(m.entries.end(), part.entries.begin(), part.entries.end());
  }
  write_manifest(m, ctx.out / "manifest.csv");
  ctx.log << "wrote " << m.entries.size() << " images to " << ctx.out.string() << '\n';
}

void cmd_split(Context& ctx, const Options& o) {
  if (o.manifest.empty()) throw ConfigError("split requires --manifest");
  const fs::path src(o.manifest);
  auto m = read_manifest(src);
  const fs::path base = src.parent_path();
  validate_manifest(m, base);
  std::vector<std::string> warnings;
  m = split_dataset(m, {ctx.cfg.get_double("split.train"), ctx.cfg.get_double("split.val"), ctx.cfg.get_double("split.test")},
                    ctx.seed, &warnings);
  for (const auto& w : warnings) ctx.log << "warning: " << w << '\n';
  for (auto& e : m.entries)
    if (fs::path(e.path).is_relative())
      e.path = fs::relative(fs::absolute(base / e.path), fs::absolute(ctx.out)).generic_string();
  write_manifest(m, ctx.out / "manifest.csv");
  std::string csv = "label,train,val,test\n";
  for (const auto& label : m.classes) {
    std::array<std::size_t, 3> c{};
    for (const auto& e : m.entries)
      if (e.label == label && e.split != Split::none) ++c[static_cast<std::size_t>(e.split) - 1];
    if (c[0] + c[1] + c[2] == 0) continue;
    csv += label + "," + std::to_string(c[0]) + "," + std::to_string(c[1]) + "," + std::to_string(c[2]) + "\n";
  }
  write_text_atomic(ctx.out / "split_counts.csv", csv);
}

void cmd_train_ae(Context& ctx, const Options& o) {
  auto images = load_list(images_arg(o));
  const auto size = checked_size(images);
  const double frac = ctx.cfg.get_double("ae.heldout_fraction");
  if (!(frac >= 0 && frac < 1)) throw ConfigError("ae.heldout_fraction must lie in [0,1)");
  auto n_held = static_cast<std::size_t>(frac * static_cast<double>(images.size()));
  if (images.size() > 1) n_held = std::clamp<std::size_t>(n_held, 1, images.size() - 1);
  ImageList held(images.end() - static_cast<std::ptrdiff_t>(n_held), images.end());
  images.resize(images.size() - n_held);
  if (held.empty()) held = images;

  AutoencoderConfig ac;
  ac.steps = static_cast<std::size_t>(ctx.cfg.get_int("ae.steps"));
  ac.batch_size = static_cast<std::size_t>(ctx.cfg.get_int("ae.batch_size"));
  ac.lr = ctx.cfg.get_double("ae.lr");
  ac.seed = ctx.seed;
  auto stack = build_stack(images.front().shape()[0], ctx.seed, size);
  const auto reports = train_stack(stack, images, held, ac);
  std::string summary = "level,heldout_psnr\n";
  for (std::size_t k = 0; k < reports.size(); ++k) {
    write_report(reports[k], ctx.out / ("metrics_level" + std::to_string(k + 1) + ".csv"));
    char line[64];
    std::snprintf(line, sizeof line, "%zu,%.6f\n", k + 1, reports[k].summary.at("heldout_psnr"));
    summary += line;
  }
  write_text_atomic(ctx.out / "summary.csv", summary);
  std::vector<NamedNetwork> nets;
  for (std::size_t k = 0; k < stack.levels(); ++k) {
    nets.push_back({"enc" + std::to_string(k + 1), &stack.encoders[k]});
    nets.push_back({"dec" + std::to_string(k + 1), &stack.decoders[k]});
  }
  save_checkpoint(nets, {ac.steps, 0, ctx.seed}, ctx.out / "stack.ckpt");
  ctx.log << summary;
}

void cmd_train_gan(Context& ctx, const Options& o) {
  const auto images = load_list(images_arg(o));
  const auto size = checked_size(images);
  auto [g, d] = build_gan_pair(ctx.cfg, "gan", images.front().shape()[0], size, DiscriminatorHead::sigmoid, ctx.seed);
  GanConfig gc;
  gc.batch_size = static_cast<std::size_t>(ctx.cfg.get_int("gan.batch_size"));
  gc.latent_dim = static_cast<std::size_t>(ctx.cfg.get_int("gan.latent_dim"));
  gc.lr_g = ctx.cfg.get_double("gan.lr_g");
  gc.lr_d = ctx.cfg.get_double("gan.lr_d");
  gc.beta1 = ctx.cfg.get_double("gan.beta1");
  gc.steps = static_cast<std::size_t>(ctx.cfg.get_int("gan.steps"));
  gc.saturating = ctx.cfg.get_bool("gan.saturating");
  gc.seed = ctx.seed;
  write_report(train_gan(g, d, images, gc), ctx.out / "metrics.csv");
  save_checkpoint({{"generator", &g}, {"discriminator", &d}}, {gc.steps, 0, ctx.seed}, ctx.out / "gan.ckpt");
}

void cmd_train_wgan(Context& ctx, const Options& o) {
  const auto images = load_list(images_arg(o));
  const auto size = checked_size(images);
  auto [g, c] = build_gan_pair(ctx.cfg, "wgan", images.front().shape()[0], size, DiscriminatorHead::linear, ctx.seed);
  const auto wc = wgan_config(ctx.cfg, ctx.seed);
  write_report(train_wgan(g, c, images, wc), ctx.out / "metrics.csv");
  save_checkpoint({{"generator", &g}, {"critic", &c}}, {wc.steps, 0, ctx.seed}, ctx.out / "wgan.ckpt");
}

void cmd_train_classifier(Context& ctx, const Options& o) {
  if (o.manifest.empty()) throw ConfigError("train-classifier requires --manifest");
  const fs::path src(o.manifest);
  auto m = read_manifest(src);
  if (m.count(Split::train) == 0) {
    std::vector<std::string> warnings;
    m = split_dataset(m, {ctx.cfg.get_double("split.train"), ctx.cfg.get_double("split.val"), ctx.cfg.get_double("split.test")},
                      ctx.seed, &warnings);
    for (const auto& w : warnings) ctx.log << "warning: " << w << '\n';
  }
  ClassifierData data{load_split(m, src.parent_path(), Split::train), load_split(m, src.parent_path(), Split::val),
                      load_split(m, src.parent_path(), Split::test)};
  const auto size = checked_size(data.train.images);
  ClassifierConfig cc;
  cc.num_classes = m.classes.size();
  cc.img_size = size;
  cc.img_channels = data.train.images.front().shape()[0];
  cc.base_ch = static_cast<std::size_t>(ctx.cfg.get_int("classifier.base_ch"));
  auto net = build_classifier<float>(cc, ctx.seed);
  ClassifierTrainConfig tc;
  tc.epochs = static_cast<std::size_t>(ctx.cfg.get_int("classifier.epochs"));
  tc.batch_size = static_cast<std::size_t>(ctx.cfg.get_int("classifier.batch_size"));
  tc.lr_high = ctx.cfg.get_double("classifier.lr_high");
  tc.lr_low = ctx.cfg.get_double("classifier.lr_low");
  tc.augment_prob = ctx.cfg.get_double("classifier.augment_prob");
  tc.augment = {ctx.cfg.get_double("classifier.rotation_deg"), ctx.cfg.get_double("classifier.translate"),
                ctx.cfg.get_double("classifier.flip_prob")};
  tc.seed = ctx.seed;
  const auto report = train_classifier(net, data, tc);
  write_report(report, ctx.out / "metrics.csv");
  std::string summary = "key,value\n";
  for (const auto& [k, v] : report.summary) {
    char line[96];
    std::snprintf(line, sizeof line, "%s,%.6f\n", k.c_str(), v);
    summary += line;
  }
  write_text_atomic(ctx.out / "summary.csv", summary);
  save_checkpoint({{"classifier", &net}}, {0, tc.epochs, ctx.seed}, ctx.out / "classifier.ckpt");
  ctx.log << summary;
}

void cmd_generate(Context& ctx, const Options& o) {
  auto g = load_net(o.ckpt, "generator");
  const auto n = ctx.cfg.get_int("generate.n");
  if (n < 1) throw ConfigError("generate.n must be >= 1");
  const auto images = generate_images(g, static_cast<std::size_t>(n), ctx.seed);
  DatasetManifest m;
  const auto mod = images.front().shape()[0] == 1 ? Modality::fa : Modality::cfp;
  const std::string label = o.label.empty() ? ctx.cfg.get_string("data.kind") : o.label;
  for (std::size_t i = 0; i < images.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "sample_%04zu.pnm", i);
    save_image(images[i], ctx.out / name);
    m.entries.push_back({name, label, mod, Split::none, Provenance::wgan});
  }
  write_manifest(m, ctx.out / "manifest.csv");
}

void cmd_stylize(Context& ctx, const Options& o) {
  if (o.content.empty() || o.style.empty()) throw ConfigError("stylize requires --content and --style");
  const auto ck = load_checkpoint(o.ckpt.empty() ? throw ConfigError("stylize requires --ckpt") : o.ckpt);
  StylizerStack stack;
  for (int k = 1; ck.has("enc" + std::to_string(k)); ++k) {
    stack.encoders.push_back(instantiate(ck.get("enc" + std::to_string(k))));
    stack.decoders.push_back(instantiate(ck.get("dec" + std::to_string(k))));
  }
  for (auto& n : stack.encoders) n.set_mode(NormMode::eval);
  for (auto& n : stack.decoders) n.set_mode(NormMode::eval);
  stack.alpha = ctx.cfg.get_double("style.alpha");
  stack.wct = {ctx.cfg.get_double("style.eps_reg"), ctx.cfg.get_double("style.eig_floor")};
  stack.validate();
  std::vector<NamedImage> contents, styles;
  for (const auto& c : o.content)
    for (auto& n : load_named(c)) contents.push_back(std::move(n));
  for (const auto& s : o.style)
    for (auto& n : load_named(s)) styles.push_back(std::move(n));
  const auto records = batch_stylize(contents, styles, parse_pairing(ctx.cfg.get_string("style.pairing")), stack, ctx.out);
  ctx.log << "wrote " << records.size() << " stylized images\n";
}

void cmd_verify(Context& ctx, const Options& o) {
  auto clf = load_net(o.classifier, "classifier");
  const auto images = load_list(images_arg(o));
  if (o.true_class.empty()) throw ConfigError("verify requires --true-class");
  const int cls = class_index(o.true_class, num_classes(clf));
  const auto row = verify_images(clf, images, cls, o.source, o.group.empty() ? o.true_class : o.group);
  const auto csv = verification_csv({row});
  write_text_atomic(ctx.out / "verification.csv", csv);
  ctx.log << csv;
}

void cmd_cam(Context& ctx, const Options& o) {
  auto clf = load_net(o.classifier, "classifier");
  const auto named = load_named(images_arg(o));
  if (o.class_name.empty()) throw ConfigError("cam requires --class");
  const int cls = class_index(o.class_name, num_classes(clf));
  std::string csv = "image,class,argmax_y,argmax_x,quadrant\n";
  for (std::size_t i = 0; i < named.size(); ++i) {
    const auto cam = compute_cam(clf, named[i].image, cls, named[i].id);
    char name[48];
    std::snprintf(name, sizeof name, "cam_%04zu.pgm", i);
    save_image(cam_to_image(cam), ctx.out / name);
    std::snprintf(name, sizeof name, "overlay_%04zu.ppm", i);
    save_image(cam_overlay(named[i].image, cam), ctx.out / name);
    const auto [y, x] = cam.argmax();
    csv += named[i].id + "," + o.class_name + "," + std::to_string(y) + "," + std::to_string(x) + "," +
           std::to_string(quadrant_of(y, x, cam.height, cam.width)) + "\n";
  }
  write_text_atomic(ctx.out / "cam.csv", csv);
}

void cmd_sweep(Context& ctx, const Options& o) {
  auto clf = load_net(o.classifier, "classifier");
  const auto corpus = load_list(images_arg(o));
  const auto size = checked_size(corpus);
  std::vector<std::size_t> sizes;
  for (double v : ctx.cfg.get_list("sweep.sizes")) {
    if (!(v >= 1) || v != static_cast<double>(static_cast<std::size_t>(v)))
      throw ConfigError("sweep.sizes must be positive integers");
    sizes.push_back(static_cast<std::size_t>(v));
  }
  SweepConfig sc;
  sc.true_class = class_index(o.true_class.empty() ? ctx.cfg.get_string("data.kind") : o.true_class, num_classes(clf));
  sc.samples = static_cast<std::size_t>(ctx.cfg.get_int("sweep.samples"));
  sc.seed = ctx.seed;
  const auto channels = corpus.front().shape()[0];
  const RunConfig& cfg = ctx.cfg;
  const GanTrainer trainer = [&](const ImageList& subset, std::uint64_t seed) {
    auto [g, c] = build_gan_pair(cfg, "wgan", channels, size, DiscriminatorHead::linear, seed);
    train_wgan(g, c, subset, wgan_config(cfg, seed));
    return std::move(g);
  };
  const auto csv = sweep_csv(sample_size_sweep(sizes, corpus, trainer, clf, sc));
  write_text_atomic(ctx.out / "sweep.csv", csv);
  ctx.log << csv;
}

void cmd_report(Context& ctx, const Options& o) {
  auto clf = load_net(o.classifier, "classifier");
  const auto images = load_list(images_arg(o));
  const auto top_n = ctx.cfg.get_int("report.top_n");
  if (top_n < 1) throw ConfigError("report.top_n must be >= 1");
  const auto csv = relation_csv(
      relation_report(clf, images, static_cast<std::size_t>(top_n), class_names(num_classes(clf))));
  write_text_atomic(ctx.out / "relations.csv", csv);
  ctx.log << csv;
}

std::string crc_hex(const fs::path& p) {
  const auto bytes = read_file(p);
  const auto crc = crc32(crc32(0L, Z_NULL, 0), bytes.data(), static_cast<uInt>(bytes.size()));
  char buf[16];
  std::snprintf(buf, sizeof buf, "%08lx", static_cast<unsigned long>(crc));
  return buf;
}

using Snapshot = std::map<fs::path, fs::file_time_type>;

Snapshot snapshot(const fs::path& dir) {
  Snapshot s;
  if (!fs::is_directory(dir)) return s;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) s[e.path()] = e.last_write_time();
  return s;
}

void write_provenance(const Context& ctx, const std::string& command, const std::vector<std::string>& args,
                      const Snapshot& before) {
  const fs::path echo = ctx.out / "config.ini";
  const fs::path prov = ctx.out / "provenance.json";
  write_text_atomic(echo, ctx.cfg.echo());
  nlohmann::ordered_json j;
  j["command"] = command;
  j["args"] = args;
  j["seed"] = ctx.seed;
  j["config"] = ctx.cfg.values();
  auto artifacts = nlohmann::ordered_json::array();
  for (const auto& [path, mtime] : snapshot(ctx.out)) {
    if (path == echo || path == prov) continue;
    const auto it = before.find(path);
    if (it != before.end() && it->second == mtime) continue;
    artifacts.push_back({{"path", fs::relative(path, ctx.out).generic_string()},
                         {"bytes", fs::file_size(path)},
                         {"crc32", crc_hex(path)}});
  }
  j["artifacts"] = std::move(artifacts);
  write_text_atomic(prov, j.dump(2) + "\n");
}

}  // namespace

int cli_dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Synthetic retinal image pipeline", "retisynth"};
  app.require_subcommand(1);
  Common common;
  Options o;

  using Handler = std::function<void(Context&, const Options&)>;
  std::map<std::string, Handler> handlers;
  std::map<std::string, std::function<void(RunConfig&)>> overrides;

  auto add = [&](const std::string& name, const std::string& desc, Handler h) {
    auto* sub = app.add_subcommand(name, desc);
    sub->add_option("--config", common.config_path, "INI config file");
    sub->add_option("--seed", common.seed, "seed (overrides run.seed)");
    sub->add_option("--out", common.out, "output directory")->capture_default_str();
    handlers[name] = std::move(h);
    return sub;
  };

  auto* synth = add("synth-data", "render a synthetic fundus corpus", cmd_synth);
  synth->add_option("--kind", o.kind, "drusen, ga, healthy or all");
  synth->add_option("--modality", o.modality, "CFP or FA");
  synth->add_option("--n", o.n, "number of images");
  synth->add_option("--size", o.size, "image side (32 or 64)");
  synth->add_option("--ga-quadrant", o.ga_quadrant, "GA patch quadrant 0-3");

  add("split", "assign train/val/test splits", cmd_split)->add_option("--manifest", o.manifest, "manifest CSV")->required();

  for (const auto& [name, desc, h] :
       std::vector<std::tuple<std::string, std::string, Handler>>{{"train-ae", "pretrain the style autoencoders", cmd_train_ae},
                                                                  {"train-gan", "train a DCGAN", cmd_train_gan},
                                                                  {"train-wgan", "train a weight-clipped WGAN", cmd_train_wgan}}) {
    auto* sub = add(name, desc, h);
    sub->add_option("--images", o.images, "image directory, file or manifest");
    sub->add_option("--manifest", o.manifest, "manifest CSV");
  }

  add("train-classifier", "train the verification classifier", cmd_train_classifier)
      ->add_option("--manifest", o.manifest, "manifest CSV with splits")
      ->required();

  auto* gen = add("generate", "sample a trained generator", cmd_generate);
  gen->add_option("--ckpt", o.ckpt, "GAN or WGAN checkpoint")->required();
  gen->add_option("--n", o.n, "number of images");
  gen->add_option("--label", o.label, "label recorded in the manifest");

  auto* sty = add("stylize", "multi-level whitening-coloring style transfer", cmd_stylize);
  sty->add_option("--ckpt", o.ckpt, "autoencoder stack checkpoint")->required();
  sty->add_option("--content", o.content, "content images or directories")->required();
  sty->add_option("--style", o.style, "style images or directories")->required();
  sty->add_option("--pairing", o.pairing, "all_pairs or zip");
  sty->add_option("--alpha", o.alpha, "stylization strength in [0,1]");

  auto* ver = add("verify", "classifier probability of the true class", cmd_verify);
  ver->add_option("--classifier", o.classifier, "classifier checkpoint")->required();
  ver->add_option("--images", o.images, "image directory, file or manifest")->required();
  ver->add_option("--true-class", o.true_class, "expected class name")->required();
  ver->add_option("--source", o.source, "real, wgan or styletransfer");
  ver->add_option("--group", o.group, "class group label for the row");

  auto* cam = add("cam", "class activation maps", cmd_cam);
  cam->add_option("--classifier", o.classifier, "classifier checkpoint")->required();
  cam->add_option("--images", o.images, "image directory, file or manifest")->required();
  cam->add_option("--class", o.class_name, "class to explain")->required();

  auto* sw = add("sweep", "generator training-set size sweep", cmd_sweep);
  sw->add_option("--classifier", o.classifier, "classifier checkpoint")->required();
  sw->add_option("--images", o.images, "training corpus")->required();
  sw->add_option("--true-class", o.true_class, "class the corpus belongs to");
  sw->add_option("--sizes", o.sizes, "comma-separated sizes");

  auto* rep = add("report", "mean class probabilities over a set", cmd_report);
  rep->add_option("--classifier", o.classifier, "classifier checkpoint")->required();
  rep->add_option("--images", o.images, "image directory, file or manifest")->required();
  rep->add_option("--top-n", o.top_n, "classes listed");

  std::vector<std::string> argv_store{"retisynth"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : argv_store) argv.push_back(a.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  }

  const auto* sub = app.get_subcommands().front();
  const std::string command = sub->get_name();
  try {
    Context ctx{common.config_path.empty() ? RunConfig{} : RunConfig::load(common.config_path), 0, common.out, err};
    if (!o.kind.empty()) ctx.cfg.set("data.kind", o.kind);
    if (!o.modality.empty()) ctx.cfg.set("data.modality", o.modality);
    if (o.n) ctx.cfg.set(command == "generate" ? "generate.n" : "data.n", std::to_string(*o.n));
    if (o.size) ctx.cfg.set("data.img_size", std::to_string(*o.size));
    if (o.ga_quadrant) ctx.cfg.set("data.ga_quadrant", std::to_string(*o.ga_quadrant));
    if (!o.pairing.empty()) ctx.cfg.set("style.pairing", o.pairing);
    if (o.alpha) ctx.cfg.set("style.alpha", std::to_string(*o.alpha));
    if (o.sizes) ctx.cfg.set("sweep.sizes", *o.sizes);
    if (o.top_n) ctx.cfg.set("report.top_n", std::to_string(*o.top_n));
    if (common.seed) ctx.cfg.set("run.seed", std::to_string(*common.seed));
    ctx.seed = static_cast<std::uint64_t>(ctx.cfg.get_int("run.seed"));
    fs::create_directories(ctx.out);
    const auto before = snapshot(ctx.out);
    const auto t0 = std::chrono::steady_clock::now();
    handlers.at(command)(ctx, o);
    write_provenance(ctx, command, args, before);
    const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - t0;
    err << command << " done in " << dt.count() << " s\n";
    return 0;
  } catch (const std::exception& e) {
    err << "retisynth " << command << ": " << e.what() << '\n';
    return 2;
  }
}

}  // namespace retisynth
