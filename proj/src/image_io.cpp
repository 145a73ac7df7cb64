#include "retisynth/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>

namespace retisynth {

namespace {

[[noreturn]] void fail(const std::string& what, std::size_t offset) {
  throw FormatError("pnm: " + what + " at byte " + std::to_string(offset));
}

bool is_space(std::uint8_t c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f'; }

// Skips whitespace and '#' comments, then reads an unsigned decimal.
std::size_t read_field(const std::vector<std::uint8_t>& b, std::size_t& pos, const char* name,
                       std::size_t* start = nullptr) {
  for (;;) {
    if (pos >= b.size()) fail(std::string("truncated header before ") + name, pos);
    if (is_space(b[pos])) {
      ++pos;
    } else if (b[pos] == '#') {
      while (pos < b.size() && b[pos] != '\n' && b[pos] != '\r') ++pos;
    } else {
      break;
    }
  }
  if (b[pos] < '0' || b[pos] > '9') fail(std::string("expected ") + name, pos);
  if (start) *start = pos;
  std::size_t v = 0;
  while (pos < b.size() && b[pos] >= '0' && b[pos] <= '9') {
    v = v * 10 + (b[pos] - '0');
    if (v > 1'000'000) fail(std::string(name) + " too large", pos);
    ++pos;
  }
  return v;
}

}  // namespace

PnmImage decode_pnm(const std::vector<std::uint8_t>& b) {
  if (b.size() < 2) fail("truncated magic", b.size());
  if (b[0] != 'P' || (b[1] != '5' && b[1] != '6')) fail("bad magic (expected P5 or P6)", 0);
  PnmImage img;
  img.channels = b[1] == '6' ? 3 : 1;
  std::size_t pos = 2;
  std::size_t w_at = 0;
  img.width = read_field(b, pos, "width", &w_at);
  img.height = read_field(b, pos, "height");
  if (img.width == 0 || img.height == 0 || img.width > kMaxImageSide || img.height > kMaxImageSide)
    fail("dimensions " + std::to_string(img.width) + "x" + std::to_string(img.height) + " outside 1.." +
             std::to_string(kMaxImageSide),
         w_at);
  std::size_t maxval_at = 0;
  const std::size_t maxval = read_field(b, pos, "maxval", &maxval_at);
  if (maxval != 255) fail("maxval " + std::to_string(maxval) + " unsupported (need 255)", maxval_at);
  if (pos >= b.size() || !is_space(b[pos])) fail("missing whitespace after maxval", pos);
  ++pos;
  img.header.assign(b.begin(), b.begin() + static_cast<long>(pos));
  const std::size_t need = img.channels * img.width * img.height;
  if (b.size() - pos < need)
    fail("truncated payload: " + std::to_string(b.size() - pos) + " of " + std::to_string(need) + " bytes",
         b.size());
  if (b.size() - pos > need) fail("trailing bytes after payload", pos + need);
  img.pixels.assign(b.begin() + static_cast<long>(pos), b.end());
  return img;
}

std::vector<std::uint8_t> encode_pnm(const PnmImage& img) {
  if (img.pixels.size() != img.channels * img.width * img.height)
    throw ContractError("encode_pnm: pixel count does not match dimensions");
  std::vector<std::uint8_t> out(img.header.begin(), img.header.end());
  out.insert(out.end(), img.pixels.begin(), img.pixels.end());
  return out;
}

PnmImage read_pnm(const std::filesystem::path& path) {
  try {
    return decode_pnm(read_file(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_pnm(const PnmImage& img, const std::filesystem::path& path) { write_file_atomic(path, encode_pnm(img)); }

Tensor pnm_to_tensor(const PnmImage& img) {
  const std::size_t c = img.channels, h = img.height, w = img.width;
  std::vector<float> v(c * h * w);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t k = 0; k < c; ++k)
        v[(k * h + y) * w + x] = static_cast<float>(2.0 * (img.pixels[(y * w + x) * c + k] / 255.0) - 1.0);
  return Tensor(Shape{c, h, w}, std::move(v));
}

PnmImage tensor_to_pnm(const Tensor& image) {
  Shape s = image.shape();
  if (s.size() == 4 && s[0] == 1) s.erase(s.begin());
  if (s.size() != 3 || (s[0] != 1 && s[0] != 3))
    throw DimensionError("save_image: expected C×H×W with C in {1,3}, got " + shape_str(image.shape()));
  const std::size_t c = s[0], h = s[1], w = s[2];
  if (h > kMaxImageSide || w > kMaxImageSide) throw DimensionError("save_image: image larger than 1024");
  PnmImage img;
  img.channels = c;
  img.height = h;
  img.width = w;
  img.header = std::string(c == 3 ? "P6" : "P5") + "\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  img.pixels.resize(c * h * w);
  const auto d = image.data();
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t k = 0; k < c; ++k) {
        const double v = (static_cast<double>(d[(k * h + y) * w + x]) + 1.0) * 127.5;
        img.pixels[(y * w + x) * c + k] = static_cast<std::uint8_t>(std::clamp(std::floor(v + 0.5), 0.0, 255.0));
      }
  return img;
}

Tensor load_image(const std::filesystem::path& path) { return pnm_to_tensor(read_pnm(path)); }

void save_image(const Tensor& image, const std::filesystem::path& path) { write_pnm(tensor_to_pnm(image), path); }

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void write_file_atomic(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw LoadError("cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw LoadError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  write_file_atomic(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

}  // namespace retisynth
