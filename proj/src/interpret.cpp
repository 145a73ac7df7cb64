#include "retisynth/interpret.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <random>
#include <sstream>

#include "retisynth/builders.hpp"

namespace retisynth {

namespace {

std::string fixed(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::size_t num_classes(const Network<float>& net) { return net.output_shape().at(0); }

void require_class(const Network<float>& net, int c) {
  if (c < 0 || static_cast<std::size_t>(c) >= num_classes(net))
    throw LabelError("class index " + std::to_string(c) + " unknown to a " + std::to_string(num_classes(net)) +
                     "-class classifier");
}

std::vector<double> mean_probs(Network<float>& net, const ImageList& images) {
  const auto probs = predict_proba(net, images);
  std::vector<double> m(num_classes(net), 0.0);
  for (const auto& p : probs)
    for (std::size_t k = 0; k < m.size(); ++k) m[k] += p[k];
  for (auto& v : m) v /= static_cast<double>(probs.size());
  return m;
}

}  // namespace

std::pair<std::size_t, std::size_t> CamMap::argmax() const {
  const auto it = std::max_element(values.begin(), values.end());
  const auto i = static_cast<std::size_t>(it - values.begin());
  return {i / width, i % width};
}

CamMap compute_cam(Network<float>& classifier, const Tensor& image, int class_idx, std::string source_id) {
  if (!is_cam_compatible(classifier))
    throw ContractError("compute_cam: network lacks the final_conv -> global_avg -> linear head");
  require_class(classifier, class_idx);
  Tensor x = image;
  if (x.rank() == 3) {
    Shape s{1};
    s.insert(s.end(), image.shape().begin(), image.shape().end());
    x = reshape(image, s);
  }
  if (x.rank() != 4 || x.dim(0) != 1) throw DimensionError("compute_cam: expected one C×H×W image");

  const NormMode saved = classifier.mode();
  classifier.set_mode(NormMode::eval);
  Tensor f;
  {
    NoGradGuard guard;
    const std::vector<std::string> want{"final_conv"};
    f = classifier.forward(x, want).taps.at("final_conv");
  }
  classifier.set_mode(saved);

  const auto& head = dynamic_cast<const LinearLayer<float>&>(classifier.layer(classifier.size() - 1));
  const std::size_t k = f.dim(1), h = f.dim(2), w = f.dim(3);
  const auto wrow = head.weight.data().subspan(static_cast<std::size_t>(class_idx) * k, k);
  std::vector<double> raw(h * w, 0.0);
  for (std::size_t c = 0; c < k; ++c)
    for (std::size_t i = 0; i < h * w; ++i) raw[i] += static_cast<double>(wrow[c]) * f.data()[c * h * w + i];
  const auto [lo, hi] = std::minmax_element(raw.begin(), raw.end());
  const double mn = *lo, range = *hi - *lo;

  CamMap cam;
  cam.height = x.dim(2);
  cam.width = x.dim(3);
  cam.class_idx = class_idx;
  cam.source_id = std::move(source_id);
  cam.values.assign(cam.height * cam.width, 0.0f);
  if (range > 0) {
    for (std::size_t y = 0; y < cam.height; ++y)
      for (std::size_t xx = 0; xx < cam.width; ++xx) {
        const std::size_t sy = y * h / cam.height, sx = xx * w / cam.width;
        cam.values[y * cam.width + xx] = static_cast<float>((raw[sy * w + sx] - mn) / range);
      }
  }
  return cam;
}

int quadrant_of(std::size_t y, std::size_t x, std::size_t height, std::size_t width) {
  return (2 * y >= height ? 2 : 0) + (2 * x >= width ? 1 : 0);
}

Tensor cam_to_image(const CamMap& cam) {
  std::vector<float> v(cam.values.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = 2.0f * cam.values[i] - 1.0f;
  return Tensor(Shape{1, cam.height, cam.width}, std::move(v));
}

Tensor cam_overlay(const Tensor& image, const CamMap& cam) {
  if (image.rank() != 3 || image.dim(1) != cam.height || image.dim(2) != cam.width)
    throw DimensionError("cam_overlay: image does not match the map");
  const std::size_t c = image.dim(0), n = cam.height * cam.width;
  std::vector<float> out(3 * n);
  for (std::size_t ch = 0; ch < 3; ++ch)
    for (std::size_t i = 0; i < n; ++i) {
      const float base = image.data()[(c == 3 ? ch : 0) * n + i];
      const float ramp = ch == 0 ? 2.0f * cam.values[i] - 1.0f : -1.0f;
      out[ch * n + i] = 0.55f * base + 0.45f * ramp;
    }
  return Tensor(Shape{3, cam.height, cam.width}, std::move(out));
}

VerificationRow verify_images(Network<float>& classifier, const ImageList& images, int true_class,
                              std::string source, std::string class_group) {
  require_class(classifier, true_class);
  if (images.empty()) throw ConfigError("verify_images: empty image set");
  const auto probs = predict_proba(classifier, images);
  VerificationRow row;
  row.source = std::move(source);
  row.class_group = std::move(class_group);
  row.true_class = true_class;
  row.count = probs.size();
  row.top1_hist.assign(num_classes(classifier), 0);
  double sum = 0;
  std::size_t hit = 0;
  for (const auto& p : probs) {
    sum += p[static_cast<std::size_t>(true_class)];
    const auto top = static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
    ++row.top1_hist[top];
    hit += top == static_cast<std::size_t>(true_class);
  }
  row.mean_prob = sum / static_cast<double>(probs.size());
  row.top1_acc = static_cast<double>(hit) / static_cast<double>(probs.size());
  return row;
}

std::string verification_csv(const std::vector<VerificationRow>& rows) {
  std::ostringstream os;
  os << "source,class_group,true_class,mean_prob,top1_acc,count\n";
  for (const auto& r : rows)
    os << r.source << ',' << r.class_group << ',' << r.true_class << ',' << fixed(r.mean_prob) << ','
       << fixed(r.top1_acc) << ',' << r.count << '\n';
  return os.str();
}

std::vector<RelationEntry> relation_report(Network<float>& classifier, const ImageList& images, std::size_t top_n,
                                           const std::vector<std::string>& class_names) {
  if (images.empty()) throw ConfigError("relation_report: empty image set");
  if (top_n == 0) throw ConfigError("relation_report: top_n must be >= 1");
  const auto m = mean_probs(classifier, images);
  std::vector<RelationEntry> out;
  for (std::size_t k = 0; k < m.size(); ++k)
    out.push_back({static_cast<int>(k), k < class_names.size() ? class_names[k] : "class" + std::to_string(k), m[k]});
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.mean_prob > b.mean_prob; });
  if (out.size() > top_n) out.resize(top_n);
  return out;
}

std::string relation_csv(const std::vector<RelationEntry>& entries) {
  std::ostringstream os;
  os << "rank,class,name,mean_prob\n";
  for (std::size_t i = 0; i < entries.size(); ++i)
    os << i + 1 << ',' << entries[i].class_idx << ',' << entries[i].name << ',' << fixed(entries[i].mean_prob) << '\n';
  return os.str();
}

std::vector<SweepRow> sample_size_sweep(const std::vector<std::size_t>& sizes, const ImageList& corpus,
                                        const GanTrainer& train_gan_fn, Network<float>& classifier,
                                        const SweepConfig& cfg) {
  if (sizes.empty()) throw ConfigError("sample_size_sweep: no sizes");
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    if (sizes[i] == 0 || sizes[i] > corpus.size())
      throw ConfigError("sample_size_sweep: size " + std::to_string(sizes[i]) + " exceeds corpus of " +
                        std::to_string(corpus.size()));
    if (i && sizes[i] <= sizes[i - 1]) throw ConfigError("sample_size_sweep: sizes must be ascending");
  }
  require_class(classifier, cfg.true_class);
  std::vector<SweepRow> rows;
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    const std::uint64_t seed = cfg.seed + 1000 * (i + 1);
    std::vector<std::size_t> idx(corpus.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    std::shuffle(idx.begin(), idx.end(), rng);
    ImageList subset;
    for (std::size_t j = 0; j < sizes[i]; ++j) subset.push_back(corpus[idx[j]]);

    Network<float> g = train_gan_fn(subset, seed);
    const ImageList samples = generate_images(g, cfg.samples, seed + 1);
    const auto row = verify_images(classifier, samples, cfg.true_class);
    auto m = mean_probs(classifier, samples);
    m.erase(m.begin() + cfg.true_class);
    std::sort(m.begin(), m.end(), std::greater<>());
    const double other = std::accumulate(m.begin(), m.begin() + static_cast<long>(std::min<std::size_t>(3, m.size())), 0.0);
    rows.push_back({sizes[i], row.mean_prob, other});
  }
  return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream os;
  os << "size,value,top3_other_mass\n";
  for (const auto& r : rows) os << r.size << ',' << fixed(r.value) << ',' << fixed(r.top3_other_mass) << '\n';
  return os.str();
}

}  // namespace retisynth
