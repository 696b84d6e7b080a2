#include "fred/data_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "fred/errors.hpp"
#include "fred/frequency.hpp"
#include "fred/rng.hpp"

namespace fred::data {

namespace {

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ull;
constexpr std::uint64_t kFnvPrime = 0x100000001b3ull;

void fnv(std::uint64_t& h, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) {
    h ^= (v >> (8 * i)) & 0xff;
    h *= kFnvPrime;
  }
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InvalidInput("cannot open " + path.string() + " for writing");
  return out;
}

std::uint32_t be32(const std::vector<std::uint8_t>& b, std::size_t off, const std::string& file) {
  if (off + 4 > b.size()) throw FormatError(file + ": truncated header", b.size());
  return std::uint32_t(b[off]) << 24 | std::uint32_t(b[off + 1]) << 16 |
         std::uint32_t(b[off + 2]) << 8 | std::uint32_t(b[off + 3]);
}

void put_be32(std::ofstream& out, std::uint32_t v) {
  const char bytes[4] = {char(v >> 24), char(v >> 16), char(v >> 8), char(v)};
  out.write(bytes, 4);
}

std::uint8_t to_byte(double v) {
  return std::uint8_t(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

}  // namespace

std::vector<std::size_t> LabeledDataset::class_counts() const {
  std::vector<std::size_t> counts(std::size_t(std::max(class_count, 0)), 0);
  for (int l : labels) ++counts.at(std::size_t(l));
  return counts;
}

std::uint64_t LabeledDataset::content_hash() const {
  std::uint64_t h = kFnvOffset;
  const auto& s = images.shape();
  for (auto v : {s.n, s.c, s.h, s.w}) fnv(h, v);
  fnv(h, std::uint64_t(class_count));
  for (int l : labels) fnv(h, std::uint64_t(std::uint32_t(l)));
  for (double v : images.data()) fnv(h, std::bit_cast<std::uint64_t>(v));
  return h;
}

std::string LabeledDataset::hash_hex() const {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << content_hash();
  return os.str();
}

LabeledDataset LabeledDataset::subset(std::span<const std::size_t> indices) const {
  LabeledDataset out;
  out.images = images.gather(indices);
  for (auto i : indices) out.labels.push_back(labels.at(i));
  out.class_count = class_count;
  out.name = name;
  return out;
}

LabeledDataset LabeledDataset::first_per_class(std::size_t per_class) const {
  std::vector<std::size_t> taken(std::size_t(class_count), 0), picked;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto& t = taken[std::size_t(labels[i])];
    if (t < per_class) {
      ++t;
      picked.push_back(i);
    }
  }
  return subset(picked);
}

void LabeledDataset::validate() const {
  if (labels.size() != images.shape().n) throw InvalidInput("label count does not match image count");
  for (int l : labels)
    if (l < 0 || l >= class_count) throw InvalidInput("label " + std::to_string(l) + " out of range");
  if (!images.all_finite()) throw InvalidInput("non-finite pixel");
}

LabeledDataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path) {
  const auto img = read_file(images_path);
  const auto lab = read_file(labels_path);
  const std::string in = images_path.filename().string(), ln = labels_path.filename().string();

  if (be32(img, 0, in) != 0x00000803) throw FormatError(in + ": bad image magic", 0);
  if (be32(lab, 0, ln) != 0x00000801) throw FormatError(ln + ": bad label magic", 0);
  const std::size_t n = be32(img, 4, in), rows = be32(img, 8, in), cols = be32(img, 12, in);
  const std::size_t nl = be32(lab, 4, ln);
  if (rows == 0 || cols == 0) throw FormatError(in + ": zero image extent", rows == 0 ? 8 : 12);
  if (nl != n) throw FormatError(ln + ": label count " + std::to_string(nl) + " != image count " + std::to_string(n), 4);
  if (img.size() < 16 + n * rows * cols) throw FormatError(in + ": truncated pixel data", img.size());
  if (img.size() > 16 + n * rows * cols) throw FormatError(in + ": trailing bytes", 16 + n * rows * cols);
  if (lab.size() < 8 + n) throw FormatError(ln + ": truncated label data", lab.size());
  if (lab.size() > 8 + n) throw FormatError(ln + ": trailing bytes", 8 + n);

  LabeledDataset set;
  set.name = in;
  set.images = Tensor4({n, 1, rows, cols});
  auto px = set.images.data();
  for (std::size_t i = 0; i < px.size(); ++i) px[i] = double(img[16 + i]) / 255.0;
  set.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    set.labels[i] = lab[8 + i];
    set.class_count = std::max(set.class_count, set.labels[i] + 1);
  }
  return set;
}

void save_idx(const LabeledDataset& set, const std::filesystem::path& images_path,
              const std::filesystem::path& labels_path) {
  const auto& s = set.images.shape();
  if (s.c != 1) throw InvalidInput("IDX export needs single-channel images");
  auto img = open_out(images_path);
  put_be32(img, 0x00000803);
  put_be32(img, std::uint32_t(s.n));
  put_be32(img, std::uint32_t(s.h));
  put_be32(img, std::uint32_t(s.w));
  for (double v : set.images.data()) img.put(char(to_byte(v)));
  auto lab = open_out(labels_path);
  put_be32(lab, 0x00000801);
  put_be32(lab, std::uint32_t(s.n));
  for (int l : set.labels) lab.put(char(std::uint8_t(l)));
  if (!img || !lab) throw InvalidInput("write failed for " + images_path.string());
}

PlantedDataset gen_planted(int classes, std::size_t per_class, std::size_t h, std::size_t w,
                           std::size_t planted_dims_per_class, double noise_sigma, std::uint64_t seed) {
  const std::size_t d = h * w;
  if (classes < 1 || per_class < 1 || planted_dims_per_class < 1 || planted_dims_per_class > d)
    throw InvalidInput("planted dims must fit in H*W and counts must be positive");
  PlantedDataset out;
  auto& set = out.set;
  set.class_count = classes;
  set.name = "planted";
  Tensor4 spectra({std::size_t(classes) * per_class, 1, h, w});
  for (int c = 0; c < classes; ++c) {
    Rng rng(derive_seed(seed, std::uint64_t(c)));
    std::vector<std::uint32_t> dims;
    for (auto i : rng.sample_without_replacement(d, planted_dims_per_class)) dims.push_back(std::uint32_t(i));
    std::sort(dims.begin(), dims.end());
    std::vector<double> mean(dims.size());
    for (auto& m : mean) m = rng.normal();
    for (std::size_t j = 0; j < per_class; ++j) {
      auto plane = spectra.plane(std::size_t(c) * per_class + j, 0);
      for (std::size_t t = 0; t < dims.size(); ++t) plane[dims[t]] = mean[t] + rng.normal();
      set.labels.push_back(c);
    }
    out.planted.push_back(std::move(dims));
  }
  set.images = freq::inverse(spectra, freq::TransformKind::dct());
  if (noise_sigma > 0.0) {
    Rng noise(derive_seed(seed, 0x6e6f697365ull));
    for (auto& v : set.images.data()) v += noise_sigma * noise.normal();
  }
  return out;
}

void export_grid(const Tensor4& images, const std::filesystem::path& path, std::size_t cols) {
  const auto& s = images.shape();
  if (s.c != 1 && s.c != 3) throw InvalidInput("grid export needs 1 or 3 channels, got " + std::to_string(s.c));
  if (s.n == 0) throw InvalidInput("grid export of an empty batch");
  if (cols == 0) cols = std::size_t(std::ceil(std::sqrt(double(s.n))));
  cols = std::min(cols, s.n);
  const std::size_t rows = (s.n + cols - 1) / cols;
  const std::size_t gw = cols * s.w, gh = rows * s.h;
  std::vector<std::uint8_t> pixels(gw * gh * s.c, 0);
  for (std::size_t n = 0; n < s.n; ++n) {
    const std::size_t r0 = (n / cols) * s.h, c0 = (n % cols) * s.w;
    for (std::size_t y = 0; y < s.h; ++y)
      for (std::size_t x = 0; x < s.w; ++x)
        for (std::size_t ch = 0; ch < s.c; ++ch)
          pixels[((r0 + y) * gw + c0 + x) * s.c + ch] = to_byte(images(n, ch, y, x));
  }
  auto out = open_out(path);
  out << (s.c == 1 ? "P5" : "P6") << '\n' << gw << ' ' << gh << "\n255\n";
  out.write(reinterpret_cast<const char*>(pixels.data()), std::streamsize(pixels.size()));
  if (!out) throw InvalidInput("write failed: " + path.string());
}

void write_evr_grid(const stats::EvrMap& evr, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "EVR " << evr.h << ' ' << evr.w << ' ' << evr.class_id << '\n';
  char buf[32];
  for (std::size_t u = 0; u < evr.h; ++u) {
    for (std::size_t v = 0; v < evr.w; ++v) {
      std::snprintf(buf, sizeof buf, "%.9e", evr.eta[u * evr.w + v]);
      out << (v ? " " : "") << buf;
    }
    out << '\n';
  }
  if (!out) throw InvalidInput("write failed: " + path.string());
}

stats::EvrMap read_evr_grid(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open " + path.string());
  std::string tag;
  stats::EvrMap evr;
  if (!(in >> tag >> evr.h >> evr.w >> evr.class_id) || tag != "EVR")
    throw FormatError(path.string() + ": bad EVR header", 0);
  evr.eta.resize(evr.h * evr.w);
  for (auto& v : evr.eta)
    if (!(in >> v)) {
      in.clear();
      throw FormatError(path.string() + ": truncated EVR grid", std::uint64_t(std::max<std::streamoff>(in.tellg(), 0)));
    }
  return evr;
}

}  // namespace fred::data
