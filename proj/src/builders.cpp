#include "retisynth/builders.hpp"

#include <sstream>

namespace retisynth {

namespace {

std::size_t log2_exact(std::size_t v) {
  std::size_t k = 0;
  while ((std::size_t{1} << k) < v) ++k;
  return k;
}

void require_img_size(std::size_t size, const char* who) {
  if (size != 32 && size != 64)
    throw ConfigError(std::string(who) + ": img_size must be 32 or 64 (DCGAN resolution cap), got " +
                      std::to_string(size));
}

// GAN nets additionally admit 8 and 16 px for gradient checking.
void require_gan_size(std::size_t size, const char* who) {
  if (size != 8 && size != 16 && size != 32 && size != 64)
    throw ConfigError(std::string(who) + ": img_size must be 32 or 64 (8/16 for checks); the DCGAN cap is 64, got " +
                      std::to_string(size));
}

void require_channels(std::size_t c, const char* who) {
  if (c != 1 && c != 3) throw ConfigError(std::string(who) + ": img_channels must be 1 or 3");
}

template <typename T>
void finish(Network<T>& net, std::uint64_t seed, InitScheme scheme) {
  net.initialize(seed, scheme);
  net.smoke_test();
}

}  // namespace

template <typename T>
Network<T> build_dcgan_generator(const GeneratorConfig& cfg, std::uint64_t seed) {
  require_gan_size(cfg.img_size, "build_dcgan_generator");
  require_channels(cfg.img_channels, "build_dcgan_generator");
  if (cfg.base_ch < 8) throw ConfigError("build_dcgan_generator: base_ch must be >= 8");
  if (cfg.latent_dim < 1) throw ConfigError("build_dcgan_generator: latent_dim must be >= 1");

  NetSpec spec{"dcgan_generator",
               {{"latent_dim", std::to_string(cfg.latent_dim)},
                {"img_size", std::to_string(cfg.img_size)},
                {"img_channels", std::to_string(cfg.img_channels)},
                {"base_ch", std::to_string(cfg.base_ch)}}};
  Network<T> net(spec, {cfg.latent_dim});
  std::size_t ch = 8 * cfg.base_ch;
  net.add("project", std::make_unique<LinearLayer<T>>(cfg.latent_dim, ch * 16));
  net.add("project_reshape", std::make_unique<ReshapeLayer<T>>(Shape{ch, 4, 4}));
  net.add("project_bn", std::make_unique<BatchNormLayer<T>>(ch));
  net.add("project_relu", std::make_unique<ActivationLayer<T>>(Activation{ActivationKind::relu}));

  const std::size_t blocks = log2_exact(cfg.img_size / 4);
  for (std::size_t b = 1; b <= blocks; ++b) {
    const std::string name = "up" + std::to_string(b);
    const bool last = b == blocks;
    const std::size_t out = last ? cfg.img_channels : ch / 2;
    net.add(name, std::make_unique<ConvTranspose2dLayer<T>>(ch, out, 4, 2, 1));
    if (last) {
      net.add(name + "_tanh", std::make_unique<ActivationLayer<T>>(Activation{ActivationKind::tanh}));
    } else {
      net.add(name + "_bn", std::make_unique<BatchNormLayer<T>>(out));
      net.add(name + "_relu", std::make_unique<ActivationLayer<T>>(Activation{ActivationKind::relu}));
    }
    ch = out;
  }
  finish(net, seed, InitScheme::dcgan);
  return net;
}

template <typename T>
Network<T> build_discriminator(const DiscriminatorConfig& cfg, std::uint64_t seed) {
  require_gan_size(cfg.img_size, "build_discriminator");
  require_channels(cfg.img_channels, "build_discriminator");
  if (cfg.base_ch < 8) throw ConfigError("build_discriminator: base_ch must be >= 8");

  NetSpec spec{"discriminator",
               {{"img_size", std::to_string(cfg.img_size)},
                {"img_channels", std::to_string(cfg.img_channels)},
                {"base_ch", std::to_string(cfg.base_ch)},
                {"head", cfg.head == DiscriminatorHead::sigmoid ? "sigmoid" : "linear"}}};
  Network<T> net(spec, {cfg.img_channels, cfg.img_size, cfg.img_size});
  const std::size_t blocks = log2_exact(cfg.img_size / 4);
  std::size_t in = cfg.img_channels, out = cfg.base_ch;
  for (std::size_t b = 1; b <= blocks; ++b) {
    const std::string name = "down" + std::to_string(b);
    net.add(name, std::make_unique<Conv2dLayer<T>>(in, out, 4, 2, 1));
    if (b > 1) net.add(name + "_bn", std::make_unique<BatchNormLayer<T>>(out));
    net.add(name + "_lrelu", std::make_unique<ActivationLayer<T>>(Activation{ActivationKind::leaky_relu, 0.2}));
    in = out;
    out *= 2;
  }
  net.add("score", std::make_unique<Conv2dLayer<T>>(in, 1, 4, 1, 0));
  net.add("score_flatten", std::make_unique<ReshapeLayer<T>>(Shape{1}));
  if (cfg.head == DiscriminatorHead::sigmoid)
    net.add("score_sigmoid", std::make_unique<ActivationLayer<T>>(Activation{ActivationKind::sigmoid}));
  finish(net, seed, InitScheme::dcgan);
  return net;
}

template <typename T>
Network<T> build_encoder(int level, std::size_t img_channels, std::uint64_t seed, std::size_t nominal_size) {
  if (level < 1 || level > 4) throw ConfigError("build_encoder: level must be 1..4, got " + std::to_string(level));
  require_channels(img_channels, "build_encoder");
  NetSpec spec{"encoder",
               {{"level", std::to_string(level)},
                {"img_channels", std::to_string(img_channels)},
                {"nominal_size", std::to_string(nominal_size)}}};
  Network<T> net(spec, {img_channels, nominal_size, nominal_size});
  net.set_spatially_flexible(true);
  std::size_t in = img_channels;
  for (int l = 1; l <= level; ++l) {
    const std::string name = "enc" + std::to_string(l);
    if (l > 1) net.add(name + "_pool", std::make_unique<PoolLayer<T>>(PoolKind::avg_pool2));
    const std::size_t out = kEncoderWidths[static_cast<std::size_t>(l - 1)];
    net.add(name + "_conv", std::make_unique<Conv2dLayer<T>>(in, out, 3, 1, 1));
    net.add(name + "_relu", std::make_unique<ActivationLayer<T>>(Activation{ActivationKind::relu}));
    net.add_tap("enc_level_" + std::to_string(l));
    in = out;
  }
  finish(net, seed, InitScheme::he);
  return net;
}

template <typename T>
Network<T> build_decoder(int level, std::size_t img_channels, std::uint64_t seed, std::size_t nominal_size) {
  if (level < 1 || level > 4) throw ConfigError("build_decoder: level must be 1..4, got " + std::to_string(level));
  require_channels(img_channels, "build_decoder");
  NetSpec spec{"decoder",
               {{"level", std::to_string(level)},
                {"img_channels", std::to_string(img_channels)},
                {"nominal_size", std::to_string(nominal_size)}}};
  const std::size_t feat = nominal_size >> (level - 1);
  Network<T> net(spec, {kEncoderWidths[static_cast<std::size_t>(level - 1)], feat, feat});
  net.set_spatially_flexible(true);
  for (int l = level; l >= 2; --l) {
    const std::string name = "dec" + std::to_string(l);
    const std::size_t in = kEncoderWidths[static_cast<std::size_t>(l - 1)];
    const std::size_t out = kEncoderWidths[static_cast<std::size_t>(l - 2)];
    net.add(name + "_conv", std::make_unique<Conv2dLayer<T>>(in, out, 3, 1, 1));
    net.add(name + "_relu", std::make_unique<ActivationLayer<T>>(Activation{ActivationKind::relu}));
    net.add(name + "_up", std::make_unique<PoolLayer<T>>(PoolKind::nearest_upsample2));
    net.add(name + "_refine", std::make_unique<Conv2dLayer<T>>(out, out, 3, 1, 1));
    net.add(name + "_refine_relu", std::make_unique<ActivationLayer<T>>(Activation{ActivationKind::relu}));
  }
  net.add("dec1_conv", std::make_unique<Conv2dLayer<T>>(kEncoderWidths[0], img_channels, 3, 1, 1));
  finish(net, seed, InitScheme::he);
  return net;
}

template <typename T>
Network<T> build_classifier(const ClassifierConfig& cfg, std::uint64_t seed) {
  if (cfg.num_classes < 2) throw ConfigError("build_classifier: num_classes must be >= 2");
  require_img_size(cfg.img_size, "build_classifier");
  require_channels(cfg.img_channels, "build_classifier");
  if (cfg.base_ch < 4) throw ConfigError("build_classifier: base_ch must be >= 4");
  NetSpec spec{"classifier",
               {{"num_classes", std::to_string(cfg.num_classes)},
                {"img_size", std::to_string(cfg.img_size)},
                {"img_channels", std::to_string(cfg.img_channels)},
                {"base_ch", std::to_string(cfg.base_ch)}}};
  Network<T> net(spec, {cfg.img_channels, cfg.img_size, cfg.img_size});
  std::size_t in = cfg.img_channels, out = cfg.base_ch;
  for (int b = 1; b <= 3; ++b) {
    const std::string name = "block" + std::to_string(b);
    net.add(name + "_conv", std::make_unique<Conv2dLayer<T>>(in, out, 4, 2, 1));
    net.add(name + "_bn", std::make_unique<BatchNormLayer<T>>(out));
    net.add(name + "_relu", std::make_unique<ActivationLayer<T>>(Activation{ActivationKind::relu}));
    in = out;
    out *= 2;
  }
  net.add("final_conv", std::make_unique<Conv2dLayer<T>>(in, in, 3, 1, 1));
  net.add("final_relu", std::make_unique<ActivationLayer<T>>(Activation{ActivationKind::relu}));
  net.add_tap("final_conv");
  net.add("gap", std::make_unique<PoolLayer<T>>(PoolKind::global_avg));
  net.add("logits", std::make_unique<LinearLayer<T>>(in, cfg.num_classes));
  finish(net, seed, InitScheme::he);
  return net;
}

template <typename T>
Network<T> build_mlp(const std::vector<std::size_t>& widths, Activation hidden, std::uint64_t seed,
                     InitScheme init) {
  if (widths.size() < 2) throw ConfigError("build_mlp: need at least input and output widths");
  std::ostringstream w;
  for (std::size_t i = 0; i < widths.size(); ++i) w << (i ? "," : "") << widths[i];
  std::ostringstream slope;
  slope << hidden.slope;
  NetSpec spec{"mlp",
               {{"widths", w.str()},
                {"activation", std::to_string(static_cast<int>(hidden.kind))},
                {"slope", slope.str()},
                {"init", init == InitScheme::dcgan ? "dcgan" : "he"}}};
  Network<T> net(spec, {widths.front()});
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    const std::string name = "fc" + std::to_string(i + 1);
    net.add(name, std::make_unique<LinearLayer<T>>(widths[i], widths[i + 1]));
    if (i + 2 < widths.size()) net.add(name + "_act", std::make_unique<ActivationLayer<T>>(hidden));
  }
  finish(net, seed, init);
  return net;
}

template <typename T>
Network<T> build_network(const NetSpec& spec, std::uint64_t seed) {
  auto sz = [&](const char* key) { return static_cast<std::size_t>(spec.get_int(key)); };
  if (spec.kind == "dcgan_generator")
    return build_dcgan_generator<T>({sz("latent_dim"), sz("img_size"), sz("img_channels"), sz("base_ch")}, seed);
  if (spec.kind == "discriminator") {
    const auto head = spec.get("head");
    if (head != "sigmoid" && head != "linear") throw ConfigError("unknown discriminator head '" + head + "'");
    return build_discriminator<T>({sz("img_size"), sz("img_channels"), sz("base_ch"),
                                   head == "sigmoid" ? DiscriminatorHead::sigmoid : DiscriminatorHead::linear},
                                  seed);
  }
  if (spec.kind == "encoder")
    return build_encoder<T>(static_cast<int>(spec.get_int("level")), sz("img_channels"), seed, sz("nominal_size"));
  if (spec.kind == "decoder")
    return build_decoder<T>(static_cast<int>(spec.get_int("level")), sz("img_channels"), seed, sz("nominal_size"));
  if (spec.kind == "classifier")
    return build_classifier<T>({sz("num_classes"), sz("img_size"), sz("img_channels"), sz("base_ch")}, seed);
  if (spec.kind == "mlp") {
    std::vector<std::size_t> widths;
    std::stringstream ss(spec.get("widths"));
    for (std::string item; std::getline(ss, item, ',');) widths.push_back(std::stoul(item));
    const long kind = spec.get_int("activation");
    if (kind < 0 || kind > 3) throw ConfigError("mlp: unknown activation code");
    Activation act{static_cast<ActivationKind>(kind), std::stod(spec.get("slope"))};
    return build_mlp<T>(widths, act, seed, spec.get("init") == "dcgan" ? InitScheme::dcgan : InitScheme::he);
  }
  throw ConfigError("unknown network kind '" + spec.kind + "'");
}

template <typename T>
bool is_cam_compatible(const Network<T>& net) {
  if (!net.has_tap("final_conv")) return false;
  const std::size_t tap = net.tap_index("final_conv");
  if (net.size() != tap + 3) return false;
  const auto* pool = dynamic_cast<const PoolLayer<T>*>(&net.layer(tap + 1));
  const auto* head = dynamic_cast<const LinearLayer<T>*>(&net.layer(tap + 2));
  return pool != nullptr && pool->pool == PoolKind::global_avg && head != nullptr;
}

#define RETISYNTH_INSTANTIATE_BUILDERS(T)                                                                   \
  template Network<T> build_dcgan_generator<T>(const GeneratorConfig&, std::uint64_t);                      \
  template Network<T> build_discriminator<T>(const DiscriminatorConfig&, std::uint64_t);                    \
  template Network<T> build_encoder<T>(int, std::size_t, std::uint64_t, std::size_t);                       \
  template Network<T> build_decoder<T>(int, std::size_t, std::uint64_t, std::size_t);                       \
  template Network<T> build_classifier<T>(const ClassifierConfig&, std::uint64_t);                          \
  template Network<T> build_mlp<T>(const std::vector<std::size_t>&, Activation, std::uint64_t, InitScheme); \
  template Network<T> build_network<T>(const NetSpec&, std::uint64_t);                                     \
  template bool is_cam_compatible<T>(const Network<T>&);

RETISYNTH_INSTANTIATE_BUILDERS(float)
RETISYNTH_INSTANTIATE_BUILDERS(double)

}  // namespace retisynth
