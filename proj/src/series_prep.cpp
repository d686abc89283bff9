#include "captime/series_prep.hpp"

#include <cmath>
#include <stdexcept>

namespace captime {

ChannelStats channel_stats(std::span<const double> values) {
  if (values.size() < 2) throw std::invalid_argument("instance_normalize: window needs at least 2 values");
  ChannelStats s;
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(values.size());
  double var = 0.0;
  for (double v : values) var += (v - s.mean) * (v - s.mean);
  var /= static_cast<double>(values.size());
  s.std = std::sqrt(var);
  if (s.std < kStdFloor) {
    s.std = kStdFloor;
    s.clamped = true;
  }
  return s;
}

std::vector<double> normalize_channel(std::span<const double> values, const ChannelStats& s) {
  std::vector<double> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = (values[i] - s.mean) / s.std;
  return out;
}

std::vector<double> denormalize_channel(std::span<const double> values, const ChannelStats& s) {
  std::vector<double> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = values[i] * s.std + s.mean;
  return out;
}

std::pair<SeriesWindow, NormStats> instance_normalize(const SeriesWindow& w) {
  SeriesWindow out;
  out.timestamps = w.timestamps;
  out.channel_names = w.channel_names;
  NormStats stats;
  for (const auto& ch : w.channels) {
    ChannelStats s = channel_stats(ch);
    out.channels.push_back(normalize_channel(ch, s));
    stats.channels.push_back(s);
  }
  return {std::move(out), std::move(stats)};
}

SeriesWindow denormalize(const SeriesWindow& w, const NormStats& stats) {
  if (stats.channels.size() != w.channels.size()) throw std::invalid_argument("denormalize: channel count mismatch");
  SeriesWindow out;
  out.timestamps = w.timestamps;
  out.channel_names = w.channel_names;
  for (std::size_t c = 0; c < w.channels.size(); ++c) {
    out.channels.push_back(denormalize_channel(w.channels[c], stats.channels[c]));
  }
  return out;
}

PatchDistParams denormalize_dist(const PatchDistParams& p, const ChannelStats& s) {
  PatchDistParams out = p;
  for (std::size_t i = 0; i < out.mu.size(); ++i) out.mu[i] = s.std * p.mu[i] + s.mean;
  for (std::size_t i = 0; i < out.sigma.size(); ++i) {
    if (!(p.sigma[i] > 0.0)) throw DomainError("denormalize_dist: sigma must be > 0");
    out.sigma[i] = s.std * p.sigma[i];
  }
  return out;
}

std::size_t patch_count(std::size_t length, std::size_t patch_len) {
  return (length + patch_len - 1) / patch_len + 1;
}

PatchSet patchify(std::span<const double> channel, std::size_t patch_len, std::size_t origin) {
  if (patch_len == 0) throw std::invalid_argument("patchify: patch length must be >= 1");
  if (channel.empty()) throw std::invalid_argument("patchify: empty input");
  const std::size_t n = patch_count(channel.size(), patch_len);
  Tensor patches = Tensor::matrix(n, patch_len, channel.back());
  std::copy(channel.begin(), channel.end(), patches.data().begin());
  return PatchSet{std::move(patches), origin};
}

std::vector<double> unpatchify(const PatchSet& p, std::size_t length) {
  const std::size_t full = length / p.patch_len();
  return {p.patches.data().begin(), p.patches.data().begin() + full * p.patch_len()};
}

}  // namespace captime
