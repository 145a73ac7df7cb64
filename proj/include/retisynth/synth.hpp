#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "retisynth/training.hpp"

namespace retisynth {

enum class SymptomKind { drusen, ga, healthy };
enum class Modality { cfp, fa };

/// Class vocabulary in label order.
inline const std::vector<std::string>& symptom_names() {
  static const std::vector<std::string> names{"drusen", "ga", "healthy"};
  return names;
}

std::string to_string(SymptomKind k);
std::string to_string(Modality m);
SymptomKind parse_symptom(const std::string& s);
Modality parse_modality(const std::string& s);
std::size_t modality_channels(Modality m);

struct RenderOptions {
  int ga_quadrant = -1;  // 0 top-left, 1 top-right, 2 bottom-left, 3 bottom-right; -1 random
};

struct RenderInfo {
  double disk_cx = 0, disk_cy = 0, disk_r = 0;
  std::vector<std::array<double, 3>> drusen;  // x, y, radius
  int ga_quadrant = -1;
  std::array<double, 3> ga{};  // x, y, radius
};

/// Dark fundus disk with an optic disc and vessel curves. Drusen adds 5–15
/// small bright non-touching dots, GA one large demarcated pale patch inside
/// a single quadrant. Pure function of its arguments. Returns C×S×S in [-1,1].
Tensor render_fundus(SymptomKind kind, Modality modality, std::size_t img_size, std::uint64_t seed,
                     std::size_t index, const RenderOptions& opts = {}, RenderInfo* info = nullptr);

/// render_fundus for indices 0..n-1.
ImageList synth_images(SymptomKind kind, Modality modality, std::size_t n, std::size_t img_size,
                       std::uint64_t seed, const RenderOptions& opts = {});

/// Balanced labelled set over all three kinds, labels in symptom_names() order.
LabeledImages synth_labeled(std::size_t per_class, Modality modality, std::size_t img_size, std::uint64_t seed);

}  // namespace retisynth
