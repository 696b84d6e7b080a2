#include "fred/spectral_stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <tuple>

#include "fred/errors.hpp"
#include "fred/rng.hpp"

namespace fred::stats {

namespace {

void check_labels(const Tensor4& spectra, std::span<const int> labels) {
  if (labels.size() != spectra.shape().n)
    throw ShapeError("label count " + std::to_string(labels.size()) + " does not match " +
                     std::to_string(spectra.shape().n) + " instances");
}

// Channel-averaged population variance and mean |value| over `members`.
EvrMap evr_from_members(const Tensor4& spectra, std::span<const std::size_t> members,
                        int class_id) {
  const auto& s = spectra.shape();
  const std::size_t d = s.plane();
  EvrMap out;
  out.class_id = class_id;
  out.h = s.h;
  out.w = s.w;
  out.sample_count = members.size();
  out.variance.assign(d, 0.0);
  out.mean_amplitude.assign(d, 0.0);
  const double inv_n = 1.0 / double(members.size());
  std::vector<double> mean(d);
  for (std::size_t c = 0; c < s.c; ++c) {
    std::fill(mean.begin(), mean.end(), 0.0);
    for (std::size_t m : members) {
      auto p = spectra.plane(m, c);
      for (std::size_t i = 0; i < d; ++i) {
        mean[i] += p[i];
        out.mean_amplitude[i] += std::abs(p[i]);
      }
    }
    for (auto& v : mean) v *= inv_n;
    for (std::size_t m : members) {
      auto p = spectra.plane(m, c);
      for (std::size_t i = 0; i < d; ++i) {
        const double dev = p[i] - mean[i];
        out.variance[i] += dev * dev;
      }
    }
  }
  const double norm = inv_n / double(s.c);
  for (std::size_t i = 0; i < d; ++i) {
    out.variance[i] *= norm;
    out.mean_amplitude[i] *= norm;
  }
  const double total = std::accumulate(out.variance.begin(), out.variance.end(), 0.0);
  out.eta.resize(d);
  if (!(total > 0.0)) {
    out.degenerate = true;
    std::fill(out.eta.begin(), out.eta.end(), 1.0 / double(d));
  } else {
    for (std::size_t i = 0; i < d; ++i) out.eta[i] = out.variance[i] / total;
  }
  return out;
}

// Key ordering frequencies by (u+v, u, v).
std::tuple<std::size_t, std::size_t, std::size_t> radial_key(std::size_t i, std::size_t w) {
  const std::size_t u = i / w, v = i % w;
  return {u + v, u, v};
}

std::vector<std::uint32_t> take_sorted(std::vector<std::uint32_t> order, std::size_t k) {
  order.resize(k);
  std::sort(order.begin(), order.end());
  return order;
}

std::vector<std::uint32_t> all_indices(std::size_t d) {
  std::vector<std::uint32_t> idx(d);
  std::iota(idx.begin(), idx.end(), 0u);
  return idx;
}

}  // namespace

std::string strategy_name(MaskStrategy s) {
  switch (s) {
    case MaskStrategy::EVR:
      return "evr";
    case MaskStrategy::LowPass:
      return "low";
    case MaskStrategy::HighPass:
      return "high";
    case MaskStrategy::BandStop:
      return "band";
    case MaskStrategy::Random:
      return "random";
    case MaskStrategy::Amplitude:
      return "amplitude";
    case MaskStrategy::Subband:
      return "subband";
  }
  return "?";
}

MaskStrategy parse_strategy(const std::string& text) {
  for (auto s : {MaskStrategy::EVR, MaskStrategy::LowPass, MaskStrategy::HighPass,
                 MaskStrategy::BandStop, MaskStrategy::Random, MaskStrategy::Amplitude,
                 MaskStrategy::Subband})
    if (strategy_name(s) == text) return s;
  throw ConfigError("unknown mask strategy '" + text + "'");
}

double EvrMap::total_variance() const {
  return std::accumulate(variance.begin(), variance.end(), 0.0);
}

MaskSet MaskSet::from_index_lists(std::size_t h, std::size_t w,
                                  std::vector<std::vector<std::uint32_t>> lists,
                                  MaskStrategy strategy) {
  MaskSet set;
  set.h = h;
  set.w = w;
  set.strategy = strategy;
  set.k = lists.empty() ? 0 : lists.front().size();
  for (auto& l : lists) {
    std::sort(l.begin(), l.end());
    set.masks.push_back(BinaryMask::from_indices(h, w, l));
  }
  set.index_lists = std::move(lists);
  set.validate();
  return set;
}

void MaskSet::validate() const {
  if (masks.size() != index_lists.size()) throw ShapeError("mask and index list counts differ");
  for (std::size_t c = 0; c < masks.size(); ++c) {
    const auto& m = masks[c];
    if (m.h() != h || m.w() != w) throw ShapeError("mask extent mismatch in class " + std::to_string(c));
    if (m.count() != k || index_lists[c].size() != k)
      throw ShapeError("class " + std::to_string(c) + " mask does not hold exactly k ones");
    if (m.indices() != index_lists[c])
      throw ShapeError("class " + std::to_string(c) + " index list disagrees with its mask");
  }
}

EvrMap compute_evr(const Tensor4& spectra, std::span<const int> labels, int class_id) {
  check_labels(spectra, labels);
  std::vector<std::size_t> members;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] == class_id) members.push_back(i);
  if (members.size() < 2)
    throw InsufficientData("class " + std::to_string(class_id) + " has " +
                           std::to_string(members.size()) + " instances; EVR needs at least 2");
  return evr_from_members(spectra, members, class_id);
}

EvrMap compute_evr_pooled(const Tensor4& spectra) {
  if (spectra.shape().n < 2) throw InsufficientData("EVR needs at least 2 instances");
  std::vector<std::size_t> members(spectra.shape().n);
  std::iota(members.begin(), members.end(), std::size_t{0});
  return evr_from_members(spectra, members, -1);
}

std::vector<std::uint32_t> top_k_indices(std::span<const double> score, std::size_t h,
                                         std::size_t w, std::size_t k) {
  const std::size_t d = h * w;
  if (score.size() != d) throw ShapeError("score map size mismatch");
  if (k < 1 || k > d) throw InvalidBudget("k = " + std::to_string(k) + " outside [1, " + std::to_string(d) + "]");
  auto order = all_indices(d);
  std::partial_sort(order.begin(), order.begin() + k, order.end(),
                    [&](std::uint32_t a, std::uint32_t b) {
                      if (score[a] != score[b]) return score[a] > score[b];
                      return radial_key(a, w) < radial_key(b, w);
                    });
  return take_sorted(std::move(order), k);
}

BinaryMask build_mask(const EvrMap& evr, std::size_t k, MaskStrategy strategy, std::uint64_t seed) {
  const std::size_t h = evr.h, w = evr.w, d = h * w;
  if (k < 1 || k > d)
    throw InvalidBudget("k = " + std::to_string(k) + " outside [1, " + std::to_string(d) + "]");
  std::vector<std::uint32_t> chosen;
  switch (strategy) {
    case MaskStrategy::EVR:
      chosen = top_k_indices(evr.eta, h, w, k);
      break;
    case MaskStrategy::Amplitude:
      chosen = top_k_indices(evr.mean_amplitude, h, w, k);
      break;
    case MaskStrategy::LowPass: {
      auto order = all_indices(d);
      std::sort(order.begin(), order.end(),
                [&](auto a, auto b) { return radial_key(a, w) < radial_key(b, w); });
      chosen = take_sorted(std::move(order), k);
      break;
    }
    case MaskStrategy::HighPass: {
      auto order = all_indices(d);
      std::sort(order.begin(), order.end(), [&](auto a, auto b) {
        auto [ra, ua, va] = radial_key(a, w);
        auto [rb, ub, vb] = radial_key(b, w);
        if (ra != rb) return ra > rb;
        return std::tie(ua, va) < std::tie(ub, vb);
      });
      chosen = take_sorted(std::move(order), k);
      break;
    }
    case MaskStrategy::BandStop: {
      // Stop band: H/4 <= u+v < 3H/4. Outside dims are taken first, low radius first.
      const std::size_t lo = h / 4, hi = 3 * h / 4;
      auto order = all_indices(d);
      std::sort(order.begin(), order.end(), [&](auto a, auto b) {
        const auto ka = radial_key(a, w), kb = radial_key(b, w);
        const bool sa = std::get<0>(ka) >= lo && std::get<0>(ka) < hi;
        const bool sb = std::get<0>(kb) >= lo && std::get<0>(kb) < hi;
        if (sa != sb) return !sa;
        return ka < kb;
      });
      chosen = take_sorted(std::move(order), k);
      break;
    }
    case MaskStrategy::Random: {
      Rng rng(seed);
      auto picks = rng.sample_without_replacement(d, k);
      chosen.assign(picks.begin(), picks.end());
      std::sort(chosen.begin(), chosen.end());
      break;
    }
    case MaskStrategy::Subband: {
      int level = 0;
      while (level < 31 && ((h >> level) * (w >> level)) > k) ++level;
      if ((h >> level) * (w >> level) != k || (h % (std::size_t{1} << level)) != 0 ||
          (w % (std::size_t{1} << level)) != 0)
        throw InvalidBudget("subband mask needs k = (H >> L) * (W >> L) for some level L");
      for (std::size_t u = 0; u < (h >> level); ++u)
        for (std::size_t v = 0; v < (w >> level); ++v)
          chosen.push_back(static_cast<std::uint32_t>(u * w + v));
      break;
    }
  }
  return BinaryMask::from_indices(h, w, chosen);
}

MaskSet build_mask_set(const Tensor4& spectra, std::span<const int> labels, int class_count,
                       const MaskSetOptions& opts) {
  check_labels(spectra, labels);
  const auto& s = spectra.shape();
  std::vector<std::vector<std::uint32_t>> lists;
  EvrMap pooled;
  const bool needs_stats = opts.strategy == MaskStrategy::EVR ||
                           opts.strategy == MaskStrategy::Amplitude;
  if (opts.pooled_eta && needs_stats) pooled = compute_evr_pooled(spectra);
  for (int c = 0; c < class_count; ++c) {
    EvrMap evr;
    if (!needs_stats) {
      evr.h = s.h;
      evr.w = s.w;
      evr.class_id = c;
    } else if (opts.pooled_eta) {
      evr = pooled;
    } else {
      evr = compute_evr(spectra, labels, c);
    }
    const auto mask = build_mask(evr, opts.k, opts.strategy, derive_seed(opts.seed, std::uint64_t(c)));
    lists.push_back(mask.indices());
  }
  return MaskSet::from_index_lists(s.h, s.w, std::move(lists), opts.strategy);
}

MaskSet subband_mask_set(int class_count, std::size_t h, std::size_t w, int levels) {
  freq::validate_kind({1, 1, h, w}, freq::TransformKind::dwt(levels));
  EvrMap shape_only;
  shape_only.h = h;
  shape_only.w = w;
  const std::size_t k = (h >> levels) * (w >> levels);
  const auto mask = build_mask(shape_only, k, MaskStrategy::Subband, 0);
  std::vector<std::vector<std::uint32_t>> lists(class_count, mask.indices());
  return MaskSet::from_index_lists(h, w, std::move(lists), MaskStrategy::Subband);
}

double masked_variance_sum(const EvrMap& evr, const BinaryMask& mask) {
  if (mask.h() != evr.h || mask.w() != evr.w) throw ShapeError("mask extent does not match EVR map");
  double s = 0.0;
  for (std::size_t i = 0; i < evr.eta.size(); ++i)
    if (mask[i]) s += evr.eta[i];
  return s;
}

namespace {

// Sum over every (c, u, v) of the population variance across instances.
double summed_variance(const Tensor4& t, const BinaryMask* mask) {
  const auto& s = t.shape();
  double total = 0.0;
  std::vector<double> mean(s.plane());
  for (std::size_t c = 0; c < s.c; ++c) {
    std::fill(mean.begin(), mean.end(), 0.0);
    for (std::size_t n = 0; n < s.n; ++n) {
      auto p = t.plane(n, c);
      for (std::size_t i = 0; i < p.size(); ++i) mean[i] += p[i];
    }
    for (auto& m : mean) m /= double(s.n);
    for (std::size_t n = 0; n < s.n; ++n) {
      auto p = t.plane(n, c);
      for (std::size_t i = 0; i < p.size(); ++i) {
        if (mask && !(*mask)[i]) continue;
        const double dev = p[i] - mean[i];
        total += dev * dev;
      }
    }
  }
  return total / double(s.n);
}

}  // namespace

Prop1Report check_prop1(const Tensor4& images, const BinaryMask& mask, freq::TransformKind kind) {
  if (images.shape().n < 2) throw InsufficientData("check_prop1 needs at least 2 images");
  if (mask.h() != images.shape().h || mask.w() != images.shape().w)
    throw ShapeError("mask extent does not match images");
  Tensor4 spectra = freq::forward(images, kind);
  Prop1Report r;
  r.total_variance = summed_variance(images, nullptr);
  r.freq_side = summed_variance(spectra, &mask);
  freq::apply_mask(spectra, mask);
  r.spatial_side = summed_variance(freq::inverse(spectra, kind), nullptr);
  r.abs_diff = std::abs(r.freq_side - r.spatial_side);
  return r;
}

std::vector<double> cumulative_top_k(const EvrMap& evr) {
  std::vector<double> sorted = evr.eta;
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  std::partial_sum(sorted.begin(), sorted.end(), sorted.begin());
  return sorted;
}

Corollary1Report check_corollary1(const Tensor4& images, std::size_t k, freq::TransformKind kind) {
  if (images.shape().n < 2) throw InsufficientData("check_corollary1 needs at least 2 images");
  const std::size_t d = images.shape().plane();
  if (k < 1 || k > d) throw InvalidBudget("k outside [1, H*W]");
  const auto spatial = cumulative_top_k(compute_evr_pooled(images));
  const auto frequency = cumulative_top_k(compute_evr_pooled(freq::forward(images, kind)));
  return {frequency[k - 1], spatial[k - 1]};
}

}  // namespace fred::stats
