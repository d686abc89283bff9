#pragma once

// Channel-independent windowing helpers: instance normalization and
// non-overlapping patching.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "captime/diffnum.hpp"
#include "captime/student_t.hpp"

namespace captime {

inline constexpr double kStdFloor = 1e-5;

/// Lookback values stored channel-major: channels[c][t].
struct SeriesWindow {
  std::vector<std::vector<double>> channels;
  std::vector<double> timestamps;
  std::vector<std::string> channel_names;

  std::size_t length() const { return channels.empty() ? 0 : channels.front().size(); }
  std::size_t num_channels() const { return channels.size(); }
};

struct ChannelStats {
  double mean = 0.0;
  double std = 1.0;
  bool clamped = false;  // population std fell below kStdFloor
};

struct NormStats {
  std::vector<ChannelStats> channels;
};

struct PatchSet {
  Tensor patches;  // N_p x L_p
  std::size_t origin = 0;

  std::size_t count() const { return patches.rows(); }
  std::size_t patch_len() const { return patches.cols(); }
};

ChannelStats channel_stats(std::span<const double> values);
std::vector<double> normalize_channel(std::span<const double> values, const ChannelStats& s);
std::vector<double> denormalize_channel(std::span<const double> values, const ChannelStats& s);

std::pair<SeriesWindow, NormStats> instance_normalize(const SeriesWindow& w);
SeriesWindow denormalize(const SeriesWindow& w, const NormStats& stats);

/// Affine map of a normalized-space distribution back to data units; nu is
/// unchanged.
PatchDistParams denormalize_dist(const PatchDistParams& p, const ChannelStats& s);

/// ceil(H / L_p) + 1
std::size_t patch_count(std::size_t length, std::size_t patch_len);

/// Splits one channel into ceil(H/L_p)+1 patches. The tail is padded by
/// repeating the last value to a multiple of L_p, then one more
/// all-last-value patch is appended.
PatchSet patchify(std::span<const double> channel, std::size_t patch_len, std::size_t origin = 0);

/// Concatenates the first floor(H/L_p) patches back into a series.
std::vector<double> unpatchify(const PatchSet& p, std::size_t length);

}  // namespace captime
