#include "pointfuse/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "pointfuse/io_util.hpp"

namespace pointfuse {

RgbImage RgbImage::filled(int width, int height, double r, double g, double b) {
  if (width <= 0 || height <= 0) throw std::invalid_argument("image size must be positive");
  RgbImage img;
  img.width = width;
  img.height = height;
  img.pixels.resize(static_cast<size_t>(width) * height * 3);
  for (size_t i = 0; i < img.pixels.size(); i += 3) {
    img.pixels[i] = r;
    img.pixels[i + 1] = g;
    img.pixels[i + 2] = b;
  }
  return img;
}

RgbImage load_ppm(const std::string& path) {
  std::ifstream in = open_in_binary(path);
  std::string magic;
  in >> magic;
  if (magic != "P6") throw std::runtime_error("not a binary PPM file: " + path);
  // Header tokens may be separated by whitespace and '#' comment lines.
  auto next_int = [&]() {
    for (;;) {
      int c = in.peek();
      if (c == '#') {
        std::string comment;
        std::getline(in, comment);
      } else if (std::isspace(c)) {
        in.get();
      } else {
        break;
      }
    }
    int v;
    if (!(in >> v)) throw std::runtime_error("malformed PPM header: " + path);
    return v;
  };
  const int width = next_int();
  const int height = next_int();
  const int maxval = next_int();
  if (width <= 0 || height <= 0 || maxval != 255)
    throw std::runtime_error("unsupported PPM geometry (need maxval 255): " + path);
  in.get();  // single whitespace after maxval

  RgbImage img;
  img.width = width;
  img.height = height;
  img.pixels.resize(static_cast<size_t>(width) * height * 3);
  std::vector<unsigned char> raw(img.pixels.size());
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (in.gcount() != static_cast<std::streamsize>(raw.size()))
    throw std::runtime_error("truncated PPM pixel data: " + path);
  for (size_t i = 0; i < raw.size(); ++i) img.pixels[i] = raw[i] / 255.0;
  return img;
}

void save_ppm(const RgbImage& image, const std::string& path) {
  std::ofstream out = open_out_binary(path);
  out << "P6\n" << image.width << " " << image.height << "\n255\n";
  std::vector<unsigned char> raw(image.pixels.size());
  for (size_t i = 0; i < raw.size(); ++i) {
    const double v = std::clamp(image.pixels[i], 0.0, 1.0);
    raw[i] = static_cast<unsigned char>(std::lround(v * 255.0));
  }
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!out) throw std::runtime_error("failed writing PPM file: " + path);
}

}  // namespace pointfuse
