#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "retisynth/tensor.hpp"

namespace retisynth {

inline constexpr std::size_t kMaxImageSide = 1024;

/// Decoded P5/P6 file. `header` holds the header bytes exactly as read
/// (comments included) so the file can be written back unchanged.
struct PnmImage {
  std::string header;
  std::size_t channels = 0, width = 0, height = 0;
  std::vector<std::uint8_t> pixels;  // interleaved, row-major
};

PnmImage decode_pnm(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> encode_pnm(const PnmImage& img);
PnmImage read_pnm(const std::filesystem::path& path);
void write_pnm(const PnmImage& img, const std::filesystem::path& path);

/// u8 v -> 2 v / 255 - 1, as C×H×W.
Tensor pnm_to_tensor(const PnmImage& img);
/// Inverse with round-half-up and clamping; canonical header "P6\nW H\n255\n".
PnmImage tensor_to_pnm(const Tensor& image);

Tensor load_image(const std::filesystem::path& path);
/// Accepts C×H×W or 1×C×H×W with C in {1, 3}.
void save_image(const Tensor& image, const std::filesystem::path& path);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
/// Writes to a sibling temp file, then renames over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);
void write_text_atomic(const std::filesystem::path& path, const std::string& text);

}  // namespace retisynth
