#include "retisynth/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace retisynth {

std::string to_string(SymptomKind k) { return symptom_names().at(static_cast<std::size_t>(k)); }

std::string to_string(Modality m) { return m == Modality::cfp ? "CFP" : "FA"; }

SymptomKind parse_symptom(const std::string& s) {
  const auto& names = symptom_names();
  const auto it = std::find(names.begin(), names.end(), s);
  if (it == names.end()) throw LabelError("unknown symptom kind '" + s + "'");
  return static_cast<SymptomKind>(it - names.begin());
}

Modality parse_modality(const std::string& s) {
  if (s == "CFP" || s == "cfp") return Modality::cfp;
  if (s == "FA" || s == "fa") return Modality::fa;
  throw ConfigError("unknown modality '" + s + "' (CFP or FA)");
}

std::size_t modality_channels(Modality m) { return m == Modality::cfp ? 3 : 1; }

namespace {

using Rgb = std::array<double, 3>;

struct Canvas {
  std::size_t s;
  std::vector<Rgb> px;
  Rgb& at(std::size_t y, std::size_t x) { return px[y * s + x]; }
};

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

}  // namespace

Tensor render_fundus(SymptomKind kind, Modality modality, std::size_t img_size, std::uint64_t seed,
                     std::size_t index, const RenderOptions& opts, RenderInfo* info) {
  if (img_size != 32 && img_size != 64) throw ConfigError("render_fundus: img_size must be 32 or 64");
  if (opts.ga_quadrant < -1 || opts.ga_quadrant > 3) throw ConfigError("render_fundus: ga_quadrant must be -1..3");
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32),
                    static_cast<std::uint32_t>(kind), static_cast<std::uint32_t>(modality)};
  std::mt19937_64 rng(seq);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto uni = [&](double a, double b) { return a + (b - a) * u(rng); };

  const double S = static_cast<double>(img_size);
  const double unit = S / 64.0;
  const bool fa = modality == Modality::fa;
  const double cx = S / 2 + uni(-1.0, 1.0) * unit, cy = S / 2 + uni(-1.0, 1.0) * unit;
  const double R = 0.46 * S;
  const double gain = uni(0.85, 1.15);

  const Rgb base = fa ? Rgb{0.26, 0.26, 0.26} : Rgb{0.50, 0.22, 0.10};
  const Rgb vessel = fa ? Rgb{0.62, 0.62, 0.62} : Rgb{0.30, 0.06, 0.04};
  const Rgb disc = fa ? Rgb{0.60, 0.60, 0.60} : Rgb{0.78, 0.52, 0.30};
  const Rgb drusen_c = fa ? Rgb{0.97, 0.97, 0.97} : Rgb{1.00, 0.95, 0.55};
  const Rgb ga_c = fa ? Rgb{0.80, 0.80, 0.80} : Rgb{0.88, 0.72, 0.50};

  Canvas cv{img_size, std::vector<Rgb>(img_size * img_size, Rgb{0, 0, 0})};
  auto inside = [&](double x, double y) { return std::hypot(x - cx, y - cy) <= R; };

  for (std::size_t y = 0; y < img_size; ++y)
    for (std::size_t x = 0; x < img_size; ++x) {
      const double d = std::hypot(x - cx, y - cy) / R;
      if (d > 1) continue;
      const double shade = gain * (1.0 - 0.35 * d * d);
      for (int c = 0; c < 3; ++c) cv.at(y, x)[c] = base[c] * shade;
    }

  // optic disc on a random side, level with the centre
  const double od_side = u(rng) < 0.5 ? -1.0 : 1.0;
  const double odx = cx + od_side * 0.30 * S, ody = cy + uni(-2.0, 2.0) * unit, odr = 0.06 * S;

  // vessels: quadratic curves fanning out from the optic disc
  std::vector<double> alpha(img_size * img_size, 0.0);
  const int n_vessels = 4 + static_cast<int>(u(rng) * 3);
  const double width = 0.9 * unit;
  for (int v = 0; v < n_vessels; ++v) {
    const double ang = uni(0, 2 * std::numbers::pi);
    const double ex = cx + 0.95 * R * std::cos(ang), ey = cy + 0.95 * R * std::sin(ang);
    const double mx = (odx + ex) / 2 + uni(-0.15, 0.15) * S, my = (ody + ey) / 2 + uni(-0.15, 0.15) * S;
    for (int k = 0; k <= 160; ++k) {
      const double t = k / 160.0;
      const double px = (1 - t) * (1 - t) * odx + 2 * t * (1 - t) * mx + t * t * ex;
      const double py = (1 - t) * (1 - t) * ody + 2 * t * (1 - t) * my + t * t * ey;
      const double w = width * (1.0 - 0.5 * t);
      const long x0 = static_cast<long>(std::floor(px - 2)), y0 = static_cast<long>(std::floor(py - 2));
      for (long yy = y0; yy <= y0 + 4; ++yy)
        for (long xx = x0; xx <= x0 + 4; ++xx) {
          if (xx < 0 || yy < 0 || xx >= static_cast<long>(img_size) || yy >= static_cast<long>(img_size)) continue;
          const double a = clamp01(1.0 - std::hypot(xx - px, yy - py) / (w + 0.5));
          auto& slot = alpha[static_cast<std::size_t>(yy) * img_size + static_cast<std::size_t>(xx)];
          slot = std::max(slot, a);
        }
    }
  }
  for (std::size_t y = 0; y < img_size; ++y)
    for (std::size_t x = 0; x < img_size; ++x) {
      if (!inside(x, y)) continue;
      const double a = 0.8 * alpha[y * img_size + x];
      for (int c = 0; c < 3; ++c) cv.at(y, x)[c] = (1 - a) * cv.at(y, x)[c] + a * vessel[c] * gain;
    }

  auto stamp = [&](double px, double py, double r, const Rgb& col, double soft) {
    for (std::size_t y = 0; y < img_size; ++y)
      for (std::size_t x = 0; x < img_size; ++x) {
        const double d = std::hypot(x - px, y - py);
        if (d > r + soft || !inside(x, y)) continue;
        const double a = soft > 0 ? clamp01((r + soft - d) / soft) : 1.0;
        for (int c = 0; c < 3; ++c) cv.at(y, x)[c] = (1 - a) * cv.at(y, x)[c] + a * col[c];
      }
  };
  stamp(odx, ody, odr, disc, 1.0);

  RenderInfo local;
  local.disk_cx = cx;
  local.disk_cy = cy;
  local.disk_r = R;
  if (kind == SymptomKind::drusen) {
    const int count = 5 + static_cast<int>(u(rng) * 11);
    for (int attempt = 0; static_cast<int>(local.drusen.size()) < count && attempt < 2000; ++attempt) {
      const double r = uni(1.8, 2.6) * unit;
      const double ang = uni(0, 2 * std::numbers::pi), rad = 0.75 * R * std::sqrt(u(rng));
      const double px = cx + rad * std::cos(ang), py = cy + rad * std::sin(ang);
      if (std::hypot(px - odx, py - ody) < odr + r + 3 * unit) continue;
      bool clear = true;
      for (const auto& d : local.drusen)
        if (std::hypot(px - d[0], py - d[1]) < r + d[2] + 2.5) clear = false;
      if (!clear) continue;
      local.drusen.push_back({px, py, r});
    }
    for (const auto& d : local.drusen) stamp(d[0], d[1], d[2], drusen_c, 0.0);
  } else if (kind == SymptomKind::ga) {
    const int q = opts.ga_quadrant >= 0 ? opts.ga_quadrant : static_cast<int>(u(rng) * 4);
    const double sx = (q % 2 == 0) ? -1.0 : 1.0, sy = (q < 2) ? -1.0 : 1.0;
    const double r = uni(0.10, 0.14) * S;
    const double px = cx + sx * uni(0.19, 0.24) * S, py = cy + sy * uni(0.19, 0.24) * S;
    stamp(px, py, r, ga_c, 0.0);
    local.ga_quadrant = q;
    local.ga = {px, py, r};
  }

  std::normal_distribution<double> noise(0.0, 0.015);
  const std::size_t channels = modality_channels(modality);
  std::vector<float> out(channels * img_size * img_size);
  for (std::size_t y = 0; y < img_size; ++y)
    for (std::size_t x = 0; x < img_size; ++x) {
      const bool in = inside(x, y);
      const double n = in ? noise(rng) : 0.0;
      for (std::size_t c = 0; c < channels; ++c) {
        const double v = in ? clamp01(cv.at(y, x)[c] + n) : 0.0;
        out[(c * img_size + y) * img_size + x] = static_cast<float>(2.0 * v - 1.0);
      }
    }
  if (info) *info = std::move(local);
  return Tensor(Shape{channels, img_size, img_size}, std::move(out));
}

ImageList synth_images(SymptomKind kind, Modality modality, std::size_t n, std::size_t img_size, std::uint64_t seed,
                       const RenderOptions& opts) {
  if (n < 1) throw ConfigError("synth_images: n must be >= 1");
  ImageList out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(render_fundus(kind, modality, img_size, seed, i, opts));
  return out;
}

LabeledImages synth_labeled(std::size_t per_class, Modality modality, std::size_t img_size, std::uint64_t seed) {
  LabeledImages out;
  for (int k = 0; k < 3; ++k) {
    auto imgs = synth_images(static_cast<SymptomKind>(k), modality, per_class, img_size, seed);
    for (auto& img : imgs) {
      out.images.push_back(std::move(img));
      out.labels.push_back(k);
    }
  }
  return out;
}

}  // namespace retisynth
