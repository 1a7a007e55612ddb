#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <random>

#include "durn/data_io.hpp"
#include "durn/error.hpp"
#include "durn/params.hpp"

namespace durn {

namespace fs = std::filesystem;

namespace {

std::vector<std::uint8_t> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

bool is_png(const std::vector<std::uint8_t>& bytes) {
  return bytes.size() >= 8 && png_sig_cmp(bytes.data(), 0, 8) == 0;
}

ImageBuffer decode_png(const std::vector<std::uint8_t>& bytes, const fs::path& path) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&img, bytes.data(), bytes.size()))
    throw FormatError(path.string() + ": " + img.message);
  const bool color = (img.format & PNG_FORMAT_FLAG_COLOR) != 0;
  img.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  ImageBuffer out;
  out.width = static_cast<int>(img.width);
  out.height = static_cast<int>(img.height);
  out.channels = color ? 3 : 1;
  out.samples.resize(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, out.samples.data(), 0, nullptr)) {
    std::string msg = img.message;
    png_image_free(&img);
    throw FormatError(path.string() + ": " + msg);
  }
  return out;
}

void encode_png(const ImageBuffer& image, const fs::path& path) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.width);
  img.height = static_cast<png_uint_32>(image.height);
  img.format = image.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&img, path.string().c_str(), 0, image.samples.data(), 0, nullptr))
    throw Error("writing " + path.string() + ": " + img.message);
}

// Header tokens of a binary PNM, skipping whitespace and '#' comments.
class PnmReader {
 public:
  PnmReader(const std::vector<std::uint8_t>& bytes, const fs::path& path) : b_(bytes), path_(path) {}

  long next_int() {
    skip();
    long v = 0;
    bool any = false;
    while (pos_ < b_.size() && b_[pos_] >= '0' && b_[pos_] <= '9') {
      v = v * 10 + (b_[pos_++] - '0');
      any = true;
      if (v > (1L << 30)) fail("header value too large");
    }
    if (!any) fail("malformed header");
    return v;
  }
  std::size_t data_start() {
    if (pos_ >= b_.size()) fail("missing pixel data");
    return pos_ + 1;  // single whitespace after maxval
  }
  [[noreturn]] void fail(const std::string& what) const {
    throw FormatError(path_.string() + ": " + what);
  }

 private:
  void skip() {
    while (pos_ < b_.size()) {
      if (b_[pos_] == '#') {
        while (pos_ < b_.size() && b_[pos_] != '\n') ++pos_;
      } else if (std::isspace(b_[pos_])) {
        ++pos_;
      } else {
        break;
      }
    }
  }
  const std::vector<std::uint8_t>& b_;
  const fs::path& path_;
  std::size_t pos_ = 2;
};

ImageBuffer decode_pnm(const std::vector<std::uint8_t>& bytes, const fs::path& path) {
  PnmReader r(bytes, path);
  ImageBuffer out;
  out.channels = bytes[1] == '5' ? 1 : 3;
  out.width = static_cast<int>(r.next_int());
  out.height = static_cast<int>(r.next_int());
  const long maxval = r.next_int();
  if (maxval != 255) r.fail("only 8-bit (maxval 255) images are supported");
  if (out.width <= 0 || out.height <= 0) r.fail("empty image");
  const std::size_t start = r.data_start();
  const std::size_t n = static_cast<std::size_t>(out.width) * out.height * out.channels;
  if (bytes.size() < start + n) r.fail("truncated pixel data");
  out.samples.assign(bytes.begin() + static_cast<std::ptrdiff_t>(start),
                     bytes.begin() + static_cast<std::ptrdiff_t>(start + n));
  return out;
}

void encode_pnm(const ImageBuffer& image, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << (image.channels == 1 ? "P5" : "P6") << '\n'
      << image.width << ' ' << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.samples.data()),
            static_cast<std::streamsize>(image.samples.size()));
  if (!out) throw Error("short write to " + path.string());
}

std::string lower_ext(const fs::path& path) {
  std::string e = path.extension().string();
  std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return std::tolower(c); });
  return e;
}

}  // namespace

void ImageBuffer::validate() const {
  if (channels != 1 && channels != 3)
    throw FormatError("images must have 1 or 3 channels, got " + std::to_string(channels));
  if (width <= 0 || height <= 0) throw FormatError("image has no pixels");
  if (samples.size() != static_cast<std::size_t>(width) * height * channels)
    throw FormatError("sample count does not match width * height * channels");
}

bool is_image_path(const fs::path& path) {
  const auto e = lower_ext(path);
  return e == ".png" || e == ".pgm" || e == ".ppm" || e == ".pnm";
}

ImageBuffer load_image(const fs::path& path) {
  const auto bytes = read_file(path);
  if (is_png(bytes)) return decode_png(bytes, path);
  if (bytes.size() >= 2 && bytes[0] == 'P' && (bytes[1] == '5' || bytes[1] == '6'))
    return decode_pnm(bytes, path);
  throw FormatError(path.string() + ": not a PNG or binary PGM/PPM file");
}

void save_image(const ImageBuffer& image, const fs::path& path) {
  image.validate();
  const auto e = lower_ext(path);
  if (e == ".png") return encode_png(image, path);
  if (e == ".pgm" || e == ".ppm" || e == ".pnm") return encode_pnm(image, path);
  throw FormatError("unsupported image extension '" + e + "' for " + path.string());
}

Tensor image_to_tensor(const ImageBuffer& image, DType dtype) {
  image.validate();
  const std::int64_t c = image.channels, h = image.height, w = image.width;
  Tensor t({1, c, h, w}, dtype);
  dispatch(dtype, [&](auto tag) {
    using T = decltype(tag);
    T* p = t.data<T>();
    for (std::int64_t y = 0; y < h; ++y)
      for (std::int64_t x = 0; x < w; ++x)
        for (std::int64_t ch = 0; ch < c; ++ch)
          p[(ch * h + y) * w + x] = static_cast<T>(image.samples[static_cast<std::size_t>((y * w + x) * c + ch)]) / T(255);
  });
  return t;
}

ImageBuffer tensor_to_image(const Tensor& t) {
  std::int64_t c, h, w;
  if (t.rank() == 4) {
    c = t.dim(1), h = t.dim(2), w = t.dim(3);
  } else if (t.rank() == 3) {
    c = t.dim(0), h = t.dim(1), w = t.dim(2);
  } else if (t.rank() == 2) {
    c = 1, h = t.dim(0), w = t.dim(1);
  } else {
    throw DimensionError("cannot convert tensor of shape " + to_string(t.shape()) + " to an image");
  }
  ImageBuffer img;
  img.width = static_cast<int>(w);
  img.height = static_cast<int>(h);
  img.channels = static_cast<int>(c);
  img.samples.resize(static_cast<std::size_t>(c * h * w));
  for (std::int64_t y = 0; y < h; ++y)
    for (std::int64_t x = 0; x < w; ++x)
      for (std::int64_t ch = 0; ch < c; ++ch) {
        const double v = std::clamp(t.at((ch * h + y) * w + x), 0.0, 1.0);
        img.samples[static_cast<std::size_t>((y * w + x) * c + ch)] =
            static_cast<std::uint8_t>(std::lround(v * 255.0));
      }
  img.validate();
  return img;
}

Tensor add_gaussian_noise(const Tensor& image, double sigma_8bit, std::uint64_t seed, bool clamp) {
  if (!(sigma_8bit >= 0.0)) throw ConfigError("noise sigma must be non-negative");
  Tensor out = image.detach().clone();
  if (sigma_8bit == 0.0) return out;
  std::mt19937_64 rng(stream_seed(seed, "gaussian_noise"));
  std::normal_distribution<double> normal(0.0, sigma_8bit / 255.0);
  for (std::int64_t i = 0, n = out.numel(); i < n; ++i) {
    double v = out.at(i) + normal(rng);
    if (clamp) v = std::clamp(v, 0.0, 1.0);
    out.set(i, v);
  }
  return out;
}

}  // namespace durn
