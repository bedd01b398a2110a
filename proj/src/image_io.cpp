#include "mtvssl/image_io.hpp"

#include <png.h>

#include <cstring>
#include <stdexcept>

namespace mtvssl {

Image8 read_png(const std::filesystem::path& path, std::size_t channels) {
  if (channels != 1 && channels != 3) throw std::invalid_argument("read_png: channels must be 1 or 3");
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    throw std::runtime_error("read_png: " + path.string() + ": " + image.message);
  }
  image.format = channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  Image8 out;
  out.width = image.width;
  out.height = image.height;
  out.channels = channels;
  out.pixels.resize(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, out.pixels.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw std::runtime_error("read_png: " + path.string() + ": " + msg);
  }
  return out;
}

void write_png(const std::filesystem::path& path, const Image8& img) {
  if (img.pixels.size() != img.width * img.height * img.channels) {
    throw std::invalid_argument("write_png: pixel buffer does not match dimensions");
  }
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width);
  image.height = static_cast<png_uint_32>(img.height);
  image.format = img.channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&image, path.c_str(), 0, img.pixels.data(), 0, nullptr)) {
    throw std::runtime_error("write_png: " + path.string() + ": " + image.message);
  }
}

}  // namespace mtvssl
