#include "optithreat/imageio.hpp"

#include <fmt/format.h>
#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <regex>

namespace optithreat::io {
namespace {

struct FileCloser {
  void operator()(std::FILE* f) const noexcept {
    if (f) std::fclose(f);
  }
};
using File = std::unique_ptr<std::FILE, FileCloser>;

File open_file(const std::string& path, const char* mode) {
  File f(std::fopen(path.c_str(), mode));
  if (!f) throw DataError(fmt::format("cannot open '{}'", path));
  return f;
}

// Raw PNG samples, no gamma or colour conversion.
struct RawPng {
  std::uint32_t width = 0, height = 0;
  int channels = 0;
  int bit_depth = 0;
  std::vector<std::uint16_t> samples;
};

RawPng read_raw_png(const std::string& path) {
  File file = open_file(path, "rb");
  png_byte sig[8];
  if (std::fread(sig, 1, 8, file.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    throw DataError(fmt::format("'{}' is not a PNG file", path));
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("libpng initialisation failed");
  }
  RawPng out;
  std::vector<png_bytep> rows;
  std::vector<png_byte> buffer;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError(fmt::format("corrupt PNG '{}'", path));
  }
  png_init_io(png, file.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  const auto color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (depth == 16) png_set_swap(png);  // host little-endian
  png_read_update_info(png, info);

  out.width = png_get_image_width(png, info);
  out.height = png_get_image_height(png, info);
  out.channels = png_get_channels(png, info);
  out.bit_depth = png_get_bit_depth(png, info);
  const auto rowbytes = png_get_rowbytes(png, info);
  buffer.resize(rowbytes * out.height);
  rows.resize(out.height);
  for (std::uint32_t r = 0; r < out.height; ++r) rows[r] = buffer.data() + r * rowbytes;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  const std::size_t n = static_cast<std::size_t>(out.width) * out.height * out.channels;
  out.samples.resize(n);
  if (out.bit_depth == 16) {
    std::memcpy(out.samples.data(), buffer.data(), n * 2);
  } else {
    std::copy(buffer.begin(), buffer.begin() + static_cast<long>(n), out.samples.begin());
  }
  return out;
}

void write_raw_png(const std::string& path, std::uint32_t width, std::uint32_t height,
                   int channels, int bit_depth, const std::vector<std::uint16_t>& samples) {
  if (channels != 1 && channels != 3) {
    throw DimensionError(fmt::format("PNG export supports 1 or 3 channels, got {}", channels));
  }
  if (bit_depth != 8 && bit_depth != 16) {
    throw ConfigError(fmt::format("PNG bit depth must be 8 or 16, got {}", bit_depth));
  }
  File file = open_file(path, "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw DataError("libpng initialisation failed");
  }
  const std::size_t bytes = bit_depth / 8;
  const std::size_t rowbytes = static_cast<std::size_t>(width) * channels * bytes;
  std::vector<png_byte> buffer(rowbytes * height);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (bytes == 1) {
      buffer[i] = static_cast<png_byte>(samples[i]);
    } else {
      buffer[2 * i] = static_cast<png_byte>(samples[i] >> 8);  // PNG is big-endian
      buffer[2 * i + 1] = static_cast<png_byte>(samples[i] & 0xff);
    }
  }
  std::vector<png_bytep> rows(height);
  for (std::uint32_t r = 0; r < height; ++r) rows[r] = buffer.data() + r * rowbytes;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw DataError(fmt::format("failed writing PNG '{}'", path));
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, width, height, bit_depth,
               channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace

Image read_png(const std::string& path) {
  const auto raw = read_raw_png(path);
  const int keep = (raw.channels == 2 || raw.channels == 4) ? raw.channels - 1 : raw.channels;
  const double scale = 1.0 / ((1u << raw.bit_depth) - 1);
  Image img(static_cast<int>(raw.height), static_cast<int>(raw.width), keep, 0.0,
            std::filesystem::path(path).stem().string());
  for (std::size_t p = 0; p < static_cast<std::size_t>(raw.width) * raw.height; ++p)
    for (int c = 0; c < keep; ++c) img.data[p * keep + c] = raw.samples[p * raw.channels + c] * scale;
  return img;
}

void write_png(const std::string& path, const Image& image, int bit_depth) {
  image.validate();
  const double maxv = bit_depth == 16 ? 65535.0 : 255.0;
  std::vector<std::uint16_t> samples(image.data.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    samples[i] = static_cast<std::uint16_t>(std::lround(std::clamp(image.data[i], 0.0, 1.0) * maxv));
  }
  write_raw_png(path, static_cast<std::uint32_t>(image.width),
                static_cast<std::uint32_t>(image.height), image.channels, bit_depth, samples);
}

Array2D<std::uint8_t> read_label_png(const std::string& path) {
  const auto raw = read_raw_png(path);
  if (raw.channels != 1 || raw.bit_depth != 8) {
    throw DataError(fmt::format("label map '{}' must be 8-bit single-channel", path));
  }
  Array2D<std::uint8_t> labels(raw.height, raw.width);
  for (std::size_t i = 0; i < labels.size(); ++i)
    labels.data()[i] = static_cast<std::uint8_t>(raw.samples[i]);
  return labels;
}

void write_label_png(const std::string& path, const Array2D<std::uint8_t>& labels) {
  std::vector<std::uint16_t> samples(labels.data().begin(), labels.data().end());
  write_raw_png(path, static_cast<std::uint32_t>(labels.cols()),
                static_cast<std::uint32_t>(labels.rows()), 1, 8, samples);
}

// --- NPY ---------------------------------------------------------------------

NpyArray read_npy(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(fmt::format("cannot open '{}'", path));
  char magic[6];
  in.read(magic, 6);
  if (!in || std::memcmp(magic, "\x93NUMPY", 6) != 0) {
    throw DataError(fmt::format("'{}' is not an NPY file", path));
  }
  unsigned char ver[2];
  in.read(reinterpret_cast<char*>(ver), 2);
  std::uint32_t header_len = 0;
  if (ver[0] == 1) {
    unsigned char b[2];
    in.read(reinterpret_cast<char*>(b), 2);
    header_len = b[0] | (b[1] << 8);
  } else {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    header_len = b[0] | (b[1] << 8) | (b[2] << 16) | (std::uint32_t(b[3]) << 24);
  }
  std::string header(header_len, '\0');
  in.read(header.data(), header_len);
  if (!in) throw DataError(fmt::format("truncated NPY header in '{}'", path));

  std::smatch m;
  if (!std::regex_search(header, m, std::regex("'descr'\\s*:\\s*'([<>|=]?)([a-z])(\\d+)'"))) {
    throw DataError(fmt::format("NPY '{}' lacks a dtype", path));
  }
  const std::string endian = m[1], kind = m[2];
  const int width = std::stoi(m[3]);
  if (endian == ">") throw DataError(fmt::format("big-endian NPY '{}' not supported", path));
  if (std::regex_search(header, std::regex("'fortran_order'\\s*:\\s*True"))) {
    throw DataError(fmt::format("Fortran-ordered NPY '{}' not supported", path));
  }
  if (!std::regex_search(header, m, std::regex("'shape'\\s*:\\s*\\(([^)]*)\\)"))) {
    throw DataError(fmt::format("NPY '{}' lacks a shape", path));
  }
  NpyArray arr;
  const std::string dims = m[1];
  const std::regex num("\\d+");
  for (auto it = std::sregex_iterator(dims.begin(), dims.end(), num); it != std::sregex_iterator(); ++it)
    arr.shape.push_back(std::stoul(it->str()));
  std::size_t count = 1;
  for (auto d : arr.shape) count *= d;

  std::vector<char> raw(count * static_cast<std::size_t>(width));
  in.read(raw.data(), static_cast<std::streamsize>(raw.size()));
  if (!in) throw DataError(fmt::format("truncated NPY payload in '{}'", path));
  arr.values.resize(count);
  auto convert = [&]<typename T>() {
    for (std::size_t i = 0; i < count; ++i) {
      T v;
      std::memcpy(&v, raw.data() + i * sizeof(T), sizeof(T));
      arr.values[i] = static_cast<double>(v);
    }
  };
  if (kind == "f" && width == 4) convert.operator()<float>();
  else if (kind == "f" && width == 8) convert.operator()<double>();
  else if (kind == "u" && width == 1) convert.operator()<std::uint8_t>();
  else if (kind == "u" && width == 2) convert.operator()<std::uint16_t>();
  else if (kind == "i" && width == 4) convert.operator()<std::int32_t>();
  else if (kind == "i" && width == 8) convert.operator()<std::int64_t>();
  else throw DataError(fmt::format("NPY dtype {}{} in '{}' not supported", kind, width, path));
  return arr;
}

void write_npy(const std::string& path, const NpyArray& array, bool float32) {
  std::size_t count = 1;
  for (auto d : array.shape) count *= d;
  if (count != array.values.size()) throw DimensionError("NPY shape does not match value count");
  std::string shape = "(";
  for (std::size_t i = 0; i < array.shape.size(); ++i) {
    shape += std::to_string(array.shape[i]);
    if (array.shape.size() == 1 || i + 1 < array.shape.size()) shape += ", ";
  }
  shape += ")";
  std::string header = fmt::format("{{'descr': '{}', 'fortran_order': False, 'shape': {}, }}",
                                   float32 ? "<f4" : "<f8", shape);
  const std::size_t total = 10 + header.size() + 1;
  header.append((64 - total % 64) % 64, ' ');
  header.push_back('\n');

  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError(fmt::format("cannot write '{}'", path));
  out.write("\x93NUMPY\x01\x00", 8);
  const auto len = static_cast<std::uint16_t>(header.size());
  const char lb[2] = {static_cast<char>(len & 0xff), static_cast<char>(len >> 8)};
  out.write(lb, 2);
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  for (double v : array.values) {
    if (float32) {
      const float f = static_cast<float>(v);
      out.write(reinterpret_cast<const char*>(&f), sizeof f);
    } else {
      out.write(reinterpret_cast<const char*>(&v), sizeof v);
    }
  }
}

Image read_npy_image(const std::string& path) {
  auto arr = read_npy(path);
  if (arr.shape.size() != 2 && arr.shape.size() != 3) {
    throw DataError(fmt::format("image NPY '{}' must be (H, W) or (H, W, C)", path));
  }
  const int c = arr.shape.size() == 3 ? static_cast<int>(arr.shape[2]) : 1;
  Image img(static_cast<int>(arr.shape[0]), static_cast<int>(arr.shape[1]), c, 0.0,
            std::filesystem::path(path).stem().string());
  img.data = std::move(arr.values);
  img.validate();
  return img;
}

void write_npy_image(const std::string& path, const Image& image) {
  NpyArray arr;
  arr.shape = {static_cast<std::size_t>(image.height), static_cast<std::size_t>(image.width)};
  if (image.channels > 1) arr.shape.push_back(static_cast<std::size_t>(image.channels));
  arr.values = image.data;
  write_npy(path, arr, true);
}

Image read_image(const std::string& path) {
  const auto ext = std::filesystem::path(path).extension().string();
  if (ext == ".png" || ext == ".PNG") return read_png(path);
  if (ext == ".npy") return read_npy_image(path);
  throw DataError(fmt::format("unsupported image format '{}'", path));
}

// --- exports -----------------------------------------------------------------

void write_mtf_csv(const std::string& path, const MtfCurve& curve) {
  std::ofstream out(path);
  if (!out) throw DataError(fmt::format("cannot write '{}'", path));
  out << "frequency,value\n";
  for (std::size_t i = 0; i < curve.frequency.size(); ++i) {
    out << fmt::format("{:.17g},{:.17g}\n", curve.frequency[i], curve.value[i]);
  }
}

void write_psf_csv(const std::string& path, const Psf& psf, std::size_t radius) {
  std::ofstream out(path);
  if (!out) throw DataError(fmt::format("cannot write '{}'", path));
  const auto c = psf.center();
  radius = std::min(radius, c - 1);
  out << "x_um,y_um,value\n";
  for (std::size_t r = c - radius; r <= c + radius; ++r)
    for (std::size_t k = c - radius; k <= c + radius; ++k) {
      const double x = (double(k) - double(c)) * psf.sample_pitch_um;
      const double y = (double(r) - double(c)) * psf.sample_pitch_um;
      out << fmt::format("{:.17g},{:.17g},{:.17g}\n", x, y, psf.samples(r, k));
    }
}

void write_psf_png(const std::string& path, const Psf& psf, double decades) {
  const double peak = *std::max_element(psf.samples.data().begin(), psf.samples.data().end());
  if (!(peak > 0.0)) throw NumericError("PSF is identically zero");
  Image img(static_cast<int>(psf.samples.rows()), static_cast<int>(psf.samples.cols()), 1);
  for (std::size_t i = 0; i < psf.samples.size(); ++i) {
    const double v = psf.samples.data()[i] / peak;
    img.data[i] = v > 0.0 ? std::clamp(1.0 + std::log10(v) / decades, 0.0, 1.0) : 0.0;
  }
  write_png(path, img, 8);
}

}  // namespace optithreat::io
