#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "retisynth/network.hpp"

namespace retisynth {

struct GeneratorConfig {
  std::size_t latent_dim = 100;
  std::size_t img_size = 64;  // 32 or 64
  std::size_t img_channels = 3;
  std::size_t base_ch = 64;
};

enum class DiscriminatorHead { sigmoid, linear };

struct DiscriminatorConfig {
  std::size_t img_size = 64;
  std::size_t img_channels = 3;
  std::size_t base_ch = 64;
  DiscriminatorHead head = DiscriminatorHead::sigmoid;
};

struct ClassifierConfig {
  std::size_t num_classes = 3;
  std::size_t img_size = 64;
  std::size_t img_channels = 3;
  std::size_t base_ch = 16;
};

/// Channel widths of encoder levels 1..4.
inline constexpr std::array<std::size_t, 4> kEncoderWidths{16, 32, 64, 128};

/// z (N×latent) → linear to (8·base)×4×4 → stride-2 transposed-conv blocks
/// with batchnorm+relu, halving channels and doubling resolution; the last
/// block emits img_channels through tanh.
template <typename T>
Network<T> build_dcgan_generator(const GeneratorConfig& cfg, std::uint64_t seed);

/// Stride-2 conv blocks with leaky_relu(0.2) and batchnorm on all but the
/// first, down to 4×4, then a 4×4 valid conv to one scalar per sample.
template <typename T>
Network<T> build_discriminator(const DiscriminatorConfig& cfg, std::uint64_t seed);

/// Level k: conv block, then (k-1) × [avg_pool2, conv block]. Taps
/// "enc_level_1".."enc_level_k". Accepts any input whose sides divide by
/// 2^(k-1).
template <typename T>
Network<T> build_encoder(int level, std::size_t img_channels, std::uint64_t seed, std::size_t nominal_size = 64);

/// Mirror of build_encoder(level) with nearest upsampling + conv.
template <typename T>
Network<T> build_decoder(int level, std::size_t img_channels, std::uint64_t seed, std::size_t nominal_size = 64);

/// Conv blocks to a tap "final_conv", then global average pooling and one
/// linear layer to logits.
template <typename T>
Network<T> build_classifier(const ClassifierConfig& cfg, std::uint64_t seed);

/// Fully connected stack; `widths` includes input and output sizes.
template <typename T>
Network<T> build_mlp(const std::vector<std::size_t>& widths, Activation hidden, std::uint64_t seed,
                     InitScheme init = InitScheme::he);

/// Rebuilds any of the above from its recorded spec.
template <typename T>
Network<T> build_network(const NetSpec& spec, std::uint64_t seed);

/// True when the only mapping from the "final_conv" tap to the output is
/// global average pooling followed by a single linear layer.
template <typename T>
bool is_cam_compatible(const Network<T>& net);

}  // namespace retisynth
