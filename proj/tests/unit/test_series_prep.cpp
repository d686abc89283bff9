#include <cmath>
#include <random>

#include "captime/series_prep.hpp"
#include "doctest.h"

using namespace captime;

namespace {

std::vector<double> row(const Tensor& t, std::size_t r) {
  return {t.data().begin() + static_cast<std::ptrdiff_t>(r * t.cols()),
          t.data().begin() + static_cast<std::ptrdiff_t>((r + 1) * t.cols())};
}

}  // namespace

TEST_CASE("instance normalization of [1,2,3,4]") {
  const std::vector<double> x{1, 2, 3, 4};
  const ChannelStats s = channel_stats(x);
  CHECK(s.mean == doctest::Approx(2.5));
  CHECK(s.std == doctest::Approx(std::sqrt(1.25)).epsilon(1e-15));
  CHECK(s.std == doctest::Approx(1.1180).epsilon(1e-4));
  const auto z = normalize_channel(x, s);
  const double expect[] = {-1.3416407864998738, -0.4472135954999579, 0.4472135954999579, 1.3416407864998738};
  for (int i = 0; i < 4; ++i) CHECK(z[i] == doctest::Approx(expect[i]).epsilon(1e-12));
  CHECK(!s.clamped);
}

TEST_CASE("constant channel is clamped") {
  const std::vector<double> x{5, 5, 5};
  const ChannelStats s = channel_stats(x);
  CHECK(s.clamped);
  CHECK(s.std == kStdFloor);
  for (double v : normalize_channel(x, s)) CHECK(v == 0.0);
}

TEST_CASE("normalization round trip and output moments") {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g(3.0, 7.0);
  SeriesWindow w;
  w.channels.resize(3);
  for (auto& c : w.channels) {
    for (int t = 0; t < 50; ++t) c.push_back(g(rng));
  }
  const auto [norm, stats] = instance_normalize(w);
  for (const auto& c : norm.channels) {
    double m = 0, v = 0;
    for (double x : c) m += x;
    m /= c.size();
    for (double x : c) v += (x - m) * (x - m);
    CHECK(std::abs(m) < 1e-9);
    CHECK(std::abs(std::sqrt(v / c.size()) - 1.0) < 1e-9);
  }
  const SeriesWindow back = denormalize(norm, stats);
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t t = 0; t < 50; ++t) CHECK(std::abs(back.channels[c][t] - w.channels[c][t]) < 1e-9);
  }
}

TEST_CASE("channel independence") {
  SeriesWindow both;
  both.channels = {{1, 4, 2, 8, 5}, {10, 10, 11, 9, 30}};
  const auto [n2, s2] = instance_normalize(both);
  for (std::size_t c = 0; c < 2; ++c) {
    SeriesWindow single;
    single.channels = {both.channels[c]};
    const auto [n1, s1] = instance_normalize(single);
    CHECK(n1.channels[0] == n2.channels[c]);
    CHECK(s1.channels[0].mean == s2.channels[c].mean);
    CHECK(s1.channels[0].std == s2.channels[c].std);
  }
}

TEST_CASE("denormalize_dist is the affine rule") {
  PatchDistParams p{Tensor::matrix(1, 1, 0.0), Tensor::matrix(1, 1, 1.0), Tensor::matrix(1, 1, 3.0)};
  const auto d = denormalize_dist(p, ChannelStats{10.0, 2.0});
  CHECK(d.mu[0] == 10.0);
  CHECK(d.sigma[0] == 2.0);
  CHECK(d.nu[0] == 3.0);
  const auto id = denormalize_dist(p, ChannelStats{0.0, 1.0});
  CHECK(id.mu == p.mu);
  CHECK(id.sigma == p.sigma);
  CHECK(id.nu == p.nu);
  // Quantiles map through the same affine transform.
  PatchDistParams q{Tensor::matrix(1, 1, 0.3), Tensor::matrix(1, 1, 0.8), Tensor::matrix(1, 1, 4.5)};
  const auto qd = denormalize_dist(q, ChannelStats{-5.0, 3.0});
  for (double level : {0.05, 0.25, 0.9}) {
    const double a = student_t::quantile(level, qd.mu[0], qd.sigma[0], qd.nu[0]);
    const double b = -5.0 + 3.0 * student_t::quantile(level, 0.3, 0.8, 4.5);
    CHECK(a == doctest::Approx(b).epsilon(1e-7));
  }
}

TEST_CASE("patchify examples") {
  {
    const std::vector<double> x{1, 2, 3, 4, 5, 6, 7, 8};
    const PatchSet p = patchify(x, 4);
    REQUIRE(p.count() == 3);
    CHECK(row(p.patches, 0) == std::vector<double>{1, 2, 3, 4});
    CHECK(row(p.patches, 1) == std::vector<double>{5, 6, 7, 8});
    CHECK(row(p.patches, 2) == std::vector<double>{8, 8, 8, 8});
  }
  {
    const std::vector<double> x{1, 2, 3, 4, 5};
    const PatchSet p = patchify(x, 4);
    REQUIRE(p.count() == 3);
    CHECK(row(p.patches, 0) == std::vector<double>{1, 2, 3, 4});
    CHECK(row(p.patches, 1) == std::vector<double>{5, 5, 5, 5});
    CHECK(row(p.patches, 2) == std::vector<double>{5, 5, 5, 5});
  }
  {
    const std::vector<double> x{1, 2};
    const PatchSet p = patchify(x, 1);
    CHECK(p.count() == 3);
    CHECK(p.patch_len() == 1);
  }
  CHECK_THROWS(patchify(std::vector<double>{}, 4));
  CHECK(patch_count(8, 4) == 3);
  CHECK(patch_count(9, 4) == 4);
}

TEST_CASE("unpatchify reconstructs the verbatim patches") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-1, 1);
  for (std::size_t h : {4u, 7u, 12u, 13u}) {
    std::vector<double> x(h);
    for (auto& v : x) v = u(rng);
    const PatchSet p = patchify(x, 4);
    const std::size_t full = (h / 4) * 4;
    const auto back = unpatchify(p, full);
    CHECK(back == std::vector<double>(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(full)));
  }
}
