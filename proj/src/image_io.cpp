#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <vector>

#include "bvsrik/degradation.hpp"
#include "bvsrik/error.hpp"

namespace bvsrik {

namespace fs = std::filesystem;

namespace {

std::uint8_t quantize(Real v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

void write_png(const fs::path& file, int width, int height, std::uint32_t format,
               const std::vector<std::uint8_t>& pixels) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(width);
  image.height = static_cast<png_uint_32>(height);
  image.format = format;
  if (!png_image_write_to_file(&image, file.c_str(), 0, pixels.data(), 0, nullptr)) {
    throw IoError("cannot write " + file.string() + ": " + image.message);
  }
}

}  // namespace

Tensor load_png(const fs::path& file) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, file.c_str())) {
    throw IoError("not a readable PNG: " + file.string() + " (" + image.message + ")");
  }
  image.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
    png_image_free(&image);
    throw IoError("cannot decode " + file.string() + ": " + image.message);
  }
  const int h = static_cast<int>(image.height), w = static_cast<int>(image.width);
  Tensor out({3, h, w});
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j)
      for (int c = 0; c < 3; ++c)
        out.at(c, i, j) = buffer[(static_cast<std::size_t>(i) * w + j) * 3 + c] / 255.0;
  return out;
}

void save_png(const Tensor& image, const fs::path& file) {
  if (image.rank() != 3 || image.dim(0) != 3) {
    throw ValidationError("save_png: expected (3,H,W), got " + shape_str(image.shape()));
  }
  const int h = image.dim(1), w = image.dim(2);
  std::vector<std::uint8_t> pixels(static_cast<std::size_t>(h) * w * 3);
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j)
      for (int c = 0; c < 3; ++c) pixels[(static_cast<std::size_t>(i) * w + j) * 3 + c] = quantize(image.at(c, i, j));
  write_png(file, w, h, PNG_FORMAT_RGB, pixels);
}

void save_gray_png(const Tensor& image, const fs::path& file) {
  if (!(image.rank() == 2 || (image.rank() == 3 && image.dim(0) == 1))) {
    throw ValidationError("save_gray_png: expected (1,H,W) or (H,W), got " + shape_str(image.shape()));
  }
  const int h = image.dim(image.rank() - 2), w = image.dim(image.rank() - 1);
  std::vector<std::uint8_t> pixels(image.size());
  for (std::size_t p = 0; p < image.size(); ++p) pixels[p] = quantize(image[p]);
  write_png(file, w, h, PNG_FORMAT_GRAY, pixels);
}

std::vector<Tensor> load_sequence(const fs::path& dir) {
  if (!fs::exists(dir)) throw IoError("missing directory: " + dir.string());
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_directory()) continue;
    files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw IoError("no frames in " + dir.string());
  std::vector<Tensor> frames;
  for (const fs::path& file : files) {
    std::string ext = file.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext != ".png") throw IoError("non-image file in frame directory: " + file.string());
    Tensor frame = load_png(file);
    if (!frames.empty() && !frame.same_shape(frames.front())) {
      throw IoError("frame " + file.string() + " has size " + shape_str(frame.shape()) + ", expected " +
                    shape_str(frames.front().shape()));
    }
    frames.push_back(std::move(frame));
  }
  return frames;
}

void save_sequence(const std::vector<Tensor>& frames, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  for (std::size_t t = 0; t < frames.size(); ++t) {
    char name[32];
    std::snprintf(name, sizeof name, "%08zu.png", t);
    save_png(frames[t], dir / name);
  }
}

}  // namespace bvsrik
