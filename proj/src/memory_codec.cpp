#include "fred/memory_codec.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <limits>

#include "fred/errors.hpp"
#include "fred/rng.hpp"

namespace fred::codec {

std::size_t BudgetSpec::coefficient_cost() const noexcept {
  return transform.tag == freq::TransformTag::DFT ? 2 : 1;
}

std::size_t BudgetSpec::stored_scalars_per_class() const noexcept {
  return decoded_per_class * channels * k * coefficient_cost();
}

double BudgetSpec::nominal_increment() const noexcept {
  return double(spatial_dim()) / double(k * coefficient_cost());
}

double BudgetSpec::increment() const noexcept { return double(decoded_per_class) / double(ipc); }

BudgetSpec plan_budget(std::size_t ipc, std::size_t height, std::size_t width, std::size_t channels,
                       std::size_t k, freq::TransformKind transform) {
  if (ipc == 0 || height == 0 || width == 0 || channels == 0 || k == 0)
    throw InvalidBudget("budget arguments must be positive");
  const std::size_t d = height * width;
  if (k > d) throw InvalidBudget("k = " + std::to_string(k) + " exceeds H*W = " + std::to_string(d));
  if (transform.tag != freq::TransformTag::DWT) transform.dwt_levels = 1;
  BudgetSpec b{ipc, height, width, channels, k, transform, 0};
  b.decoded_per_class = ipc * d / (k * b.coefficient_cost());
  if (b.decoded_per_class == 0)
    throw InvalidBudget("budget too small for one instance at k = " + std::to_string(k));
  return b;
}

void SyntheticMemory::validate() const {
  const auto& b = budget;
  if (masks.h != b.height || masks.w != b.width || masks.k != b.k)
    throw CorruptMemory("mask set does not match the budget extents");
  try {
    masks.validate();
  } catch (const ShapeError& e) {
    throw CorruptMemory(e.what());
  }
  if (labels.size() != classes() * b.decoded_per_class)
    throw CorruptMemory("instance count " + std::to_string(labels.size()) + " != classes * decoded_per_class");
  if (coefficients.size() != labels.size() * row_size())
    throw CorruptMemory("coefficient count does not match instances * channels * k");
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] != int(i / b.decoded_per_class)) throw CorruptMemory("labels are not class-major");
  for (double v : coefficients)
    if (!std::isfinite(v)) throw CorruptMemory("non-finite coefficient");
}

SyntheticMemory SyntheticMemory::quantized() const {
  SyntheticMemory m = *this;
  for (auto& v : m.coefficients) v = double(float(v));
  return m;
}

bool SyntheticMemory::operator==(const SyntheticMemory& o) const {
  return budget == o.budget && masks.strategy == o.masks.strategy &&
         masks.index_lists == o.masks.index_lists && coefficients == o.coefficients &&
         labels == o.labels && seed == o.seed;
}

SyntheticMemory empty_memory(const stats::MaskSet& masks, const BudgetSpec& budget, std::uint32_t seed) {
  SyntheticMemory m;
  m.budget = budget;
  m.masks = masks;
  m.seed = seed;
  const std::size_t n = masks.classes() * budget.decoded_per_class;
  m.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) m.labels[i] = int(i / budget.decoded_per_class);
  m.coefficients.assign(n * m.row_size(), 0.0);
  m.validate();
  return m;
}

SyntheticMemory init_memory(const Tensor4& images, std::span<const int> labels,
                            const stats::MaskSet& masks, const BudgetSpec& budget,
                            std::uint32_t seed) {
  const auto& s = images.shape();
  if (labels.size() != s.n) throw ShapeError("label count does not match image count");
  if (s.c != budget.channels || s.h != budget.height || s.w != budget.width)
    throw ShapeError("images " + s.str() + " do not match the budget");
  SyntheticMemory m = empty_memory(masks, budget, seed);

  std::vector<std::size_t> picked;
  for (std::size_t c = 0; c < masks.classes(); ++c) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == int(c)) members.push_back(i);
    if (members.size() < budget.decoded_per_class)
      throw InsufficientData("class " + std::to_string(c) + " has " + std::to_string(members.size()) +
                             " images; the budget decodes " + std::to_string(budget.decoded_per_class));
    Rng rng(derive_seed(seed, c));
    for (auto j : rng.sample_without_replacement(members.size(), budget.decoded_per_class))
      picked.push_back(members[j]);
  }
  const Tensor4 spectra = freq::forward(images.gather(picked), budget.transform);
  m.coefficients = gather(m, spectra);
  return m;
}

Tensor4 scatter(const SyntheticMemory& memory) {
  const auto& b = memory.budget;
  Tensor4 spectra({memory.instances(), b.channels, b.height, b.width});
  for (std::size_t i = 0; i < memory.instances(); ++i) {
    const auto& list = memory.masks.index_lists.at(std::size_t(memory.labels[i]));
    if (list.size() != b.k) throw CorruptMemory("index list length differs from k");
    auto row = memory.row(i);
    for (std::size_t ch = 0; ch < b.channels; ++ch) {
      auto plane = spectra.plane(i, ch);
      for (std::size_t j = 0; j < b.k; ++j) plane[list[j]] = row[ch * b.k + j];
    }
  }
  return spectra;
}

std::vector<double> gather(const SyntheticMemory& memory, const Tensor4& spectra) {
  const auto& b = memory.budget;
  if (spectra.shape() != Shape4{memory.instances(), b.channels, b.height, b.width})
    throw ShapeError("spectra " + spectra.shape().str() + " do not match the memory layout");
  std::vector<double> out(memory.instances() * memory.row_size());
  for (std::size_t i = 0; i < memory.instances(); ++i) {
    const auto& list = memory.masks.index_lists.at(std::size_t(memory.labels[i]));
    for (std::size_t ch = 0; ch < b.channels; ++ch) {
      auto plane = spectra.plane(i, ch);
      for (std::size_t j = 0; j < b.k; ++j) out[(i * b.channels + ch) * b.k + j] = plane[list[j]];
    }
  }
  return out;
}

DecodedSet decode(const SyntheticMemory& memory) {
  if (memory.coefficients.size() != memory.instances() * memory.row_size())
    throw CorruptMemory("coefficient count does not match the mask layout");
  return {freq::inverse(scatter(memory), memory.budget.transform), memory.labels};
}

namespace {

constexpr std::uint8_t kMagic[6] = {0x46, 0x52, 0x45, 0x44, 0x31, 0x00};
constexpr std::uint64_t kMaxPlane = std::uint64_t{1} << 24;
constexpr std::uint64_t kMaxMaskBytes = std::uint64_t{1} << 30;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(std::uint8_t(v >> (8 * i)));
}

std::uint32_t checked_u32(std::size_t v, const char* what) {
  if (v > std::numeric_limits<std::uint32_t>::max())
    throw InvalidInput(std::string(what) + " does not fit the container");
  return std::uint32_t(v);
}

class Reader {
 public:
  Reader(std::span<const std::uint8_t> bytes, std::uint64_t start) : bytes_(bytes), pos_(start) {}

  std::uint64_t offset() const { return pos_; }
  std::uint64_t remaining() const { return bytes_.size() - pos_; }

  std::uint32_t u32(const char* what) {
    if (remaining() < 4) throw FormatError(std::string("truncated ") + what, pos_);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }

  float f32() { return std::bit_cast<float>(u32("coefficient")); }

 private:
  std::span<const std::uint8_t> bytes_;
  std::uint64_t pos_;
};

}  // namespace

std::vector<std::uint8_t> serialize(const SyntheticMemory& memory) {
  memory.validate();
  const auto& b = memory.budget;
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  out.reserve(kHeaderBytes + 4 * (memory.classes() * b.k + memory.coefficients.size()));
  const std::uint32_t tag = std::uint32_t(b.transform.tag) |
                            (std::uint32_t(b.transform.dwt_levels & 0xff) << 8) |
                            (std::uint32_t(memory.masks.strategy) << 16);
  put_u32(out, checked_u32(memory.classes(), "class count"));
  put_u32(out, checked_u32(b.decoded_per_class, "decoded_per_class"));
  put_u32(out, checked_u32(b.channels, "channels"));
  put_u32(out, checked_u32(b.height, "height"));
  put_u32(out, checked_u32(b.width, "width"));
  put_u32(out, checked_u32(b.k, "k"));
  put_u32(out, tag);
  put_u32(out, memory.seed);
  put_u32(out, checked_u32(b.ipc, "ipc"));
  for (const auto& list : memory.masks.index_lists)
    for (auto idx : list) put_u32(out, idx);
  for (double v : memory.coefficients) put_u32(out, std::bit_cast<std::uint32_t>(float(v)));
  return out;
}

SyntheticMemory deserialize(std::span<const std::uint8_t> bytes) {
  for (std::size_t i = 0; i < 6; ++i) {
    if (i >= bytes.size()) throw FormatError("truncated magic", bytes.size());
    if (bytes[i] != kMagic[i])
      throw FormatError(i == 4 ? "unsupported container version" : "bad magic", i < 4 ? 0 : i);
  }
  Reader r(bytes, 6);
  auto at = [&] { return r.offset(); };

  // Header fields in file order, with the offset each one starts at.
  enum Field { Classes, Decoded, Channels, Height, Width, K, Tag, Seed, Ipc, FieldCount };
  static constexpr const char* kNames[FieldCount] = {
      "class count", "decoded_per_class", "channel count", "height", "width",
      "k", "transform tag", "seed", "ipc"};
  std::uint32_t value[FieldCount];
  std::uint64_t where[FieldCount];
  for (int f = 0; f < FieldCount; ++f) {
    where[f] = at();
    value[f] = r.u32(kNames[f]);
    if (f != Tag && f != Seed && value[f] == 0)
      throw FormatError(std::string(kNames[f]) + " must be positive", where[f]);
  }
  const std::uint32_t classes = value[Classes], decoded = value[Decoded], channels = value[Channels],
                      height = value[Height], width = value[Width], k = value[K], tag = value[Tag];

  const std::uint64_t d = std::uint64_t(height) * width;
  if (d > kMaxPlane || std::uint64_t(classes) * d > kMaxMaskBytes)
    throw FormatError("extents too large", where[Height]);
  if (k > d) throw FormatError("k exceeds H*W", where[K]);

  freq::TransformKind kind;
  const std::uint32_t kind_bits = tag & 0xff, levels = (tag >> 8) & 0xff, strategy = (tag >> 16) & 0xff;
  if (kind_bits > 2 || (tag >> 24) != 0 || strategy > std::uint32_t(stats::MaskStrategy::Subband))
    throw FormatError("unknown transform tag", where[Tag]);
  kind.tag = freq::TransformTag(kind_bits);
  kind.dwt_levels = int(levels);
  if (kind.tag != freq::TransformTag::DWT && levels != 1)
    throw FormatError("level count set for a non-wavelet transform", where[Tag]);
  try {
    freq::validate_kind({1, 1, height, width}, kind);
  } catch (const Error&) {
    throw FormatError("wavelet levels do not fit the extents", where[Tag]);
  }

  BudgetSpec budget;
  try {
    budget = plan_budget(value[Ipc], height, width, channels, k, kind);
  } catch (const InvalidBudget&) {
    throw FormatError("inconsistent budget", where[Ipc]);
  }
  if (budget.decoded_per_class != decoded)
    throw FormatError("decoded_per_class disagrees with the budget", where[Decoded]);

  // Check the exact size before allocating anything large.
  const unsigned __int128 body =
      (unsigned __int128)classes * k * 4 + (unsigned __int128)classes * decoded * channels * k * 4;
  if ((unsigned __int128)r.remaining() < body) throw FormatError("truncated body", bytes.size());
  if ((unsigned __int128)r.remaining() > body)
    throw FormatError("trailing bytes after coefficients", at() + std::uint64_t(body));

  std::vector<std::vector<std::uint32_t>> lists(classes);
  for (auto& list : lists) {
    list.reserve(k);
    for (std::uint32_t j = 0; j < k; ++j) {
      const std::uint64_t pos = at();
      const std::uint32_t idx = r.u32("index list");
      if (idx >= d || (!list.empty() && idx <= list.back()))
        throw FormatError("index list not strictly increasing within H*W", pos);
      list.push_back(idx);
    }
  }

  SyntheticMemory m;
  m.budget = budget;
  m.seed = value[Seed];
  m.masks = stats::MaskSet::from_index_lists(height, width, std::move(lists), stats::MaskStrategy(strategy));
  const std::size_t n = std::size_t(classes) * decoded;
  m.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) m.labels[i] = int(i / decoded);
  m.coefficients.resize(n * std::size_t(channels) * k);
  for (auto& v : m.coefficients) {
    const std::uint64_t pos = at();
    const float f = r.f32();
    if (!std::isfinite(f)) throw FormatError("non-finite coefficient", pos);
    v = f;
  }
  return m;
}

void save(const SyntheticMemory& memory, const std::filesystem::path& path) {
  const auto bytes = serialize(memory);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InvalidInput("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  if (!out) throw InvalidInput("write failed: " + path.string());
}

SyntheticMemory load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

}  // namespace fred::codec
