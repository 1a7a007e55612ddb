#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "durn/data_io.hpp"
#include "durn/error.hpp"
#include "durn/params.hpp"

namespace durn {

namespace fs = std::filesystem;

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> cols;
  std::size_t start = 0;
  while (true) {
    const auto tab = line.find('\t', start);
    cols.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return cols;
}

std::string strip(const std::string& s) {
  const auto b = s.find_first_not_of(" \r\n");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \r\n") - b + 1);
}

}  // namespace

std::vector<PatchOffset> patch_offsets(std::int64_t h, std::int64_t w, std::int64_t size, int count,
                                       std::uint64_t seed) {
  if (size <= 0) throw ConfigError("patch size must be positive");
  if (size > h || size > w)
    throw ConfigError("patch size " + std::to_string(size) + " exceeds image " + std::to_string(h) +
                      "x" + std::to_string(w));
  if (count < 0) throw ConfigError("patch count must be non-negative");
  std::mt19937_64 rng(stream_seed(seed, "patch_offsets"));
  std::uniform_int_distribution<std::int64_t> dy(0, h - size), dx(0, w - size);
  std::vector<PatchOffset> out(static_cast<std::size_t>(count));
  for (auto& o : out) {
    o.y = dy(rng);
    o.x = dx(rng);
  }
  return out;
}

Tensor crop(const Tensor& image, std::int64_t y, std::int64_t x, std::int64_t h, std::int64_t w) {
  if (image.rank() != 4) throw DimensionError("crop expects NCHW, got " + to_string(image.shape()));
  const std::int64_t n = image.dim(0), c = image.dim(1), ih = image.dim(2), iw = image.dim(3);
  if (y < 0 || x < 0 || y + h > ih || x + w > iw)
    throw DimensionError("crop window out of bounds");
  Tensor out({n, c, h, w}, image.dtype());
  dispatch(image.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T* src = image.data<T>();
    T* dst = out.data<T>();
    for (std::int64_t p = 0; p < n * c; ++p)
      for (std::int64_t r = 0; r < h; ++r)
        std::copy_n(src + (p * ih + y + r) * iw + x, w, dst + (p * h + r) * w);
  });
  return out;
}

Tensor stack_batch(const std::vector<Tensor>& items) {
  if (items.empty()) throw ContractError("stack_batch of nothing");
  const Shape& s = items.front().shape();
  if (s.size() != 4 || s[0] != 1) throw DimensionError("stack_batch expects (1, C, H, W) items");
  Tensor out({static_cast<std::int64_t>(items.size()), s[1], s[2], s[3]}, items.front().dtype());
  const std::int64_t per = shape_numel(s);
  dispatch(out.dtype(), [&](auto tag) {
    using T = decltype(tag);
    for (std::size_t i = 0; i < items.size(); ++i) {
      if (items[i].shape() != s || items[i].dtype() != out.dtype())
        throw DimensionError("stack_batch items differ in shape or dtype");
      std::copy_n(items[i].data<T>(), per, out.data<T>() + static_cast<std::int64_t>(i) * per);
    }
  });
  return out;
}

std::vector<std::pair<Tensor, Tensor>> sample_patches(const ImagePair& pair, std::int64_t size,
                                                      int count, std::uint64_t seed) {
  if (pair.degraded.shape() != pair.clean.shape())
    throw DimensionError("degraded and clean images differ in shape");
  const auto offsets = patch_offsets(pair.clean.dim(2), pair.clean.dim(3), size, count, seed);
  std::vector<std::pair<Tensor, Tensor>> out;
  out.reserve(offsets.size());
  for (const auto& o : offsets)
    out.emplace_back(crop(pair.degraded, o.y, o.x, size, size), crop(pair.clean, o.y, o.x, size, size));
  return out;
}

DatasetManifest load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open manifest " + path.string());
  DatasetManifest m;
  m.root = path.parent_path();
  std::vector<std::string> missing;
  std::string line;
  int lineno = 0;
  auto resolve = [&](const std::string& p) {
    fs::path fp(p);
    return fp.is_absolute() ? fp : m.root / fp;
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::string trimmed = strip(line);
    if (trimmed.empty()) continue;
    if (trimmed[0] == '#') {
      const std::string body = strip(trimmed.substr(1));
      if (body.rfind("task:", 0) == 0) m.task = strip(body.substr(5));
      continue;
    }
    const auto cols = split_tabs(line);
    if (cols.size() < 2 || cols.size() > 3)
      throw ConfigError(path.string() + ":" + std::to_string(lineno) +
                        ": expected 2 or 3 tab-separated columns, got " + std::to_string(cols.size()));
    ManifestRecord r;
    r.line = lineno;
    const std::string deg = strip(cols[0]), clean = strip(cols[1]);
    if (deg.empty() || clean.empty())
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": empty path column");
    if (deg != "-") r.degraded = resolve(deg);
    r.clean = resolve(clean);
    if (cols.size() == 3) r.tags = strip(cols[2]);
    for (const auto* p : {&r.degraded, &r.clean})
      if (!p->empty() && !fs::exists(*p))
        missing.push_back("line " + std::to_string(lineno) + ": " + p->string());
    m.records.push_back(std::move(r));
  }
  if (!missing.empty()) {
    std::string msg = path.string() + ": " + std::to_string(missing.size()) + " missing file(s)";
    for (const auto& s : missing) msg += "\n  " + s;
    throw ConfigError(msg);
  }
  return m;
}

void save_manifest(const DatasetManifest& manifest, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  if (!manifest.task.empty()) out << "# task: " << manifest.task << '\n';
  const fs::path base = path.parent_path();
  // Relative record paths are kept as given; absolute ones are made relative when possible.
  auto rel = [&](const fs::path& p) {
    if (p.empty()) return std::string("-");
    if (p.is_relative()) return p.generic_string();
    const fs::path r = fs::relative(p, base);
    return r.empty() ? p.generic_string() : r.generic_string();
  };
  for (const auto& r : manifest.records) {
    out << rel(r.degraded) << '\t' << rel(r.clean);
    if (!r.tags.empty()) out << '\t' << r.tags;
    out << '\n';
  }
}

std::vector<ImagePair> load_dataset(const DatasetManifest& manifest, std::optional<double> noise_sigma,
                                    std::uint64_t seed) {
  std::vector<ImagePair> pairs;
  pairs.reserve(manifest.records.size());
  for (std::size_t i = 0; i < manifest.records.size(); ++i) {
    const auto& r = manifest.records[i];
    ImagePair p;
    p.name = r.clean.filename().string();
    p.clean = image_to_tensor(load_image(r.clean));
    if (r.degraded.empty()) {
      if (!noise_sigma)
        throw ConfigError("manifest line " + std::to_string(r.line) +
                          " has no degraded image and no noise sigma was given");
      p.degraded = add_gaussian_noise(p.clean, *noise_sigma, stream_seed(seed, "record." + std::to_string(i)));
    } else {
      p.degraded = image_to_tensor(load_image(r.degraded));
    }
    if (p.degraded.shape() != p.clean.shape())
      throw ConfigError("manifest line " + std::to_string(r.line) + ": degraded " +
                        to_string(p.degraded.shape()) + " and clean " + to_string(p.clean.shape()) +
                        " differ");
    pairs.push_back(std::move(p));
  }
  return pairs;
}

}  // namespace durn

namespace durn {

ImageBuffer synthetic_image(int width, int height, int channels, std::uint64_t seed) {
  if (width <= 0 || height <= 0) throw ConfigError("synthetic image needs a positive size");
  if (channels != 1 && channels != 3) throw ConfigError("synthetic image needs 1 or 3 channels");
  std::mt19937_64 rng(stream_seed(seed, "synthetic_image"));
  std::uniform_real_distribution<double> u(0.0, 1.0);

  struct Disc { double cx, cy, radius, value[3]; };
  std::vector<Disc> discs(4);
  for (auto& d : discs) {
    d.cx = u(rng) * width;
    d.cy = u(rng) * height;
    d.radius = (0.1 + 0.2 * u(rng)) * std::min(width, height);
    for (double& v : d.value) v = u(rng);
  }
  double base[3][3];  // per channel: offset, x slope, y slope
  for (auto& b : base) {
    b[0] = 0.3 + 0.4 * u(rng);
    b[1] = 0.4 * (u(rng) - 0.5);
    b[2] = 0.4 * (u(rng) - 0.5);
  }
  const double bar_y = u(rng) * height, bar_h = 0.08 * height;

  ImageBuffer img;
  img.width = width;
  img.height = height;
  img.channels = channels;
  img.samples.resize(static_cast<std::size_t>(width) * height * channels);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      for (int c = 0; c < channels; ++c) {
        const double fx = static_cast<double>(x) / width - 0.5, fy = static_cast<double>(y) / height - 0.5;
        double v = base[c][0] + base[c][1] * fx + base[c][2] * fy;
        for (const auto& d : discs) {
          const double dist = std::hypot(x - d.cx, y - d.cy);
          const double a = 1.0 / (1.0 + std::exp((dist - d.radius) / 1.5));
          v = (1.0 - a) * v + a * d.value[c];
        }
        if (std::abs(y - bar_y) < bar_h) v = 0.5 * v + 0.25;
        v = 0.1 + 0.8 * std::clamp(v, 0.0, 1.0);
        img.samples[(static_cast<std::size_t>(y) * width + x) * channels + c] =
            static_cast<std::uint8_t>(std::lround(v * 255.0));
      }
  return img;
}

}  // namespace durn
