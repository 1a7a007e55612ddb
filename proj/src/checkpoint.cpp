#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>

#include "json.hpp"

#include "durn/error.hpp"
#include "durn/optim.hpp"

namespace durn {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'D', 'U', 'R', 'N'};
constexpr std::size_t kPreamble = 4 + 4 + 8;

template <typename U>
void put_le(std::string& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

template <typename U>
U get_le(const std::uint8_t* p) {
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(p[i]) << (8 * i);
  return v;
}

std::string hex_bytes(const std::uint8_t* p, std::size_t n) {
  static const char* digits = "0123456789abcdef";
  std::string s;
  for (std::size_t i = 0; i < n; ++i) {
    if (i) s += ' ';
    s += digits[p[i] >> 4];
    s += digits[p[i] & 15];
  }
  return s;
}

struct Record {
  std::string name;
  std::string kind;  // param, buffer, adam_m, adam_v
  const Tensor* tensor;
};

void append_f32(std::string& data, const Tensor& t) {
  for (std::int64_t i = 0, n = t.numel(); i < n; ++i)
    put_le<std::uint32_t>(data, std::bit_cast<std::uint32_t>(static_cast<float>(t.at(i))));
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const fs::path& path) {
  std::vector<Record> records;
  for (const auto& e : ckpt.params.entries())
    records.push_back({e.name, e.trainable ? "param" : "buffer", &e.tensor});
  if (ckpt.adam) {
    for (const auto& [name, t] : ckpt.adam->m) records.push_back({name, "adam_m", &t});
    for (const auto& [name, t] : ckpt.adam->v) records.push_back({name, "adam_v", &t});
  }

  json header;
  header["spec"] = spec_to_config(ckpt.spec);
  header["step"] = ckpt.step;
  header["rng_state"] = ckpt.rng_state;
  header["has_adam"] = ckpt.adam.has_value();
  header["adam_t"] = ckpt.adam ? ckpt.adam->t : 0;
  header["tensors"] = json::array();
  std::string data;
  for (const auto& r : records) {
    header["tensors"].push_back({{"name", r.name},
                                 {"kind", r.kind},
                                 {"shape", r.tensor->shape()},
                                 {"frozen", r.kind == "param" && ckpt.params.entry(r.name).frozen},
                                 {"offset", data.size()}});
    append_f32(data, *r.tensor);
  }
  const std::string text = header.dump();

  std::string bytes(kMagic, 4);
  put_le<std::uint32_t>(bytes, kCheckpointVersion);
  put_le<std::uint64_t>(bytes, text.size());
  bytes += text;
  bytes += data;

  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("short write to " + tmp.string());
  }
  fs::rename(tmp, path);
}

Checkpoint load_checkpoint(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint " + path.string());
  const std::vector<std::uint8_t> b{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  const std::string where = path.string() + ": ";

  if (b.size() < 4 || std::memcmp(b.data(), kMagic, 4) != 0)
    throw FormatError(where + "bad magic [" + hex_bytes(b.data(), std::min<std::size_t>(4, b.size())) +
                      "], expected [44 55 52 4e]");
  if (b.size() < kPreamble) throw FormatError(where + "truncated preamble");
  const auto version = get_le<std::uint32_t>(b.data() + 4);
  if (version != kCheckpointVersion)
    throw FormatError(where + "unsupported version " + std::to_string(version) + " (bytes [" +
                      hex_bytes(b.data() + 4, 4) + "]), expected " + std::to_string(kCheckpointVersion));
  const auto header_len = get_le<std::uint64_t>(b.data() + 8);
  if (header_len > b.size() - kPreamble) throw FormatError(where + "truncated header");

  json header;
  try {
    header = json::parse(b.begin() + kPreamble, b.begin() + static_cast<std::ptrdiff_t>(kPreamble + header_len));
  } catch (const json::exception& e) {
    throw FormatError(where + "corrupt header: " + e.what());
  }
  const std::uint8_t* data = b.data() + kPreamble + header_len;
  const std::size_t data_len = b.size() - kPreamble - header_len;

  Checkpoint c;
  try {
    c.spec = spec_from_config(header.at("spec").get<std::string>());
    c.params = init_params(c.spec, 0);
    c.step = header.at("step").get<std::int64_t>();
    c.rng_state = header.at("rng_state").get<std::string>();
    if (header.at("has_adam").get<bool>()) {
      c.adam = AdamState{};
      c.adam->t = header.at("adam_t").get<std::int64_t>();
    }

    std::set<std::string> seen;
    std::size_t expected_offset = 0;
    for (const auto& rec : header.at("tensors")) {
      const auto name = rec.at("name").get<std::string>();
      const auto kind = rec.at("kind").get<std::string>();
      const auto shape = rec.at("shape").get<Shape>();
      const auto offset = rec.at("offset").get<std::size_t>();
      if (offset != expected_offset) throw FormatError(where + "non-contiguous data for " + name);
      const std::size_t count = static_cast<std::size_t>(shape_numel(shape));
      if (offset + 4 * count > data_len) throw FormatError(where + "truncated data for " + name);
      expected_offset += 4 * count;

      Tensor target;
      if (kind == "param" || kind == "buffer") {
        if (!c.params.contains(name)) throw FormatError(where + "unknown tensor '" + name + "'");
        const auto& entry = c.params.entry(name);
        if (entry.trainable != (kind == "param"))
          throw FormatError(where + "'" + name + "' stored as " + kind);
        if (!seen.insert(name).second) throw FormatError(where + "duplicate tensor '" + name + "'");
        target = entry.tensor;
        if (rec.value("frozen", false)) c.params.set_frozen(name, true);
      } else if ((kind == "adam_m" || kind == "adam_v") && c.adam) {
        if (!c.params.contains(name) || !c.params.entry(name).trainable)
          throw FormatError(where + "optimiser state for unknown parameter '" + name + "'");
        auto& slot = kind == "adam_m" ? c.adam->m[name] : c.adam->v[name];
        if (slot.defined()) throw FormatError(where + "duplicate " + kind + " for '" + name + "'");
        slot = Tensor(shape, DType::f32);
        target = slot;
      } else {
        throw FormatError(where + "unknown tensor kind '" + kind + "'");
      }
      if (target.shape() != shape)
        throw FormatError(where + "'" + name + "' has shape " + to_string(shape) + ", spec expects " +
                          to_string(target.shape()));
      float* dst = target.data<float>();
      for (std::size_t i = 0; i < count; ++i)
        dst[i] = std::bit_cast<float>(get_le<std::uint32_t>(data + offset + 4 * i));
    }
    if (expected_offset != data_len)
      throw FormatError(where + std::to_string(data_len - expected_offset) + " trailing bytes");
    for (const auto& e : c.params.entries())
      if (!seen.count(e.name)) throw FormatError(where + "missing tensor '" + e.name + "'");
  } catch (const json::exception& e) {
    throw FormatError(where + "malformed header: " + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(where + "invalid network spec: " + e.what());
  }
  return c;
}

}  // namespace durn
