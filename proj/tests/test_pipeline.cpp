#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numbers>

#include "hsrecon/pipeline.hpp"
#include "hsrecon/synthetic.hpp"

using namespace hsrecon;

namespace {

Cube random_hsi(int h, int w, Rng& rng) {
  Cube c = Cube::make(h, w, kHsiBands, hsi_wavelengths());
  for (auto& v : c.values) v = rng.next_unit();
  return c;
}

}  // namespace

TEST_CASE("parity label map") {
  CHECK(ParityScheme::band_of_label(30) == 30);
  CHECK(ParityScheme::band_of_label(31) == 30);  // same 700 nm channel
  CHECK(ParityScheme::band_of_label(61) == 60);

  const auto& even = ParityScheme::even_bands();
  const auto& odd = ParityScheme::odd_bands();
  CHECK(even.size() == 31);
  CHECK(odd.size() == 31);

  std::vector<int> seen(kHsiBands, 0);
  for (int b : even) ++seen[b];
  for (int b : odd) ++seen[b];
  for (int b = 0; b < kHsiBands; ++b) CHECK(seen[b] == (b == 30 ? 2 : 1));  // union + overlap
}

TEST_CASE("parity split places the shared band in both stacks") {
  Rng rng(1);
  Cube hsi = random_hsi(4, 4, rng);
  // band b constant b, to pin the ordering
  for (int b = 0; b < kHsiBands; ++b)
    for (auto& v : hsi.band(b)) v = b;
  // keep the file-range invariant irrelevant here; values exceed 1 on purpose
  auto [even, odd] = parity_split(hsi);
  CHECK(even.bands == 31);
  CHECK(odd.bands == 31);
  CHECK(even.band(0)[0] == 0.0);
  CHECK(odd.band(0)[0] == 1.0);
  CHECK(even.wavelengths[15] == 700.0);
  CHECK(odd.wavelengths[15] == 700.0);
  CHECK(even.band(15)[0] == 30.0);
  CHECK(odd.band(15)[0] == 30.0);

  Cube short_cube = Cube::make(4, 4, 60, std::vector<double>(60, 0.0));
  CHECK_THROWS_AS(parity_split(short_cube), DataError);
}

TEST_CASE("parity merge round trip is exact on random cubes") {
  Rng rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    Cube hsi = random_hsi(6, 5, rng);
    auto [even, odd] = parity_split(hsi);
    Cube merged = parity_merge(even, odd);
    CHECK(merged.values == hsi.values);
  }
}

TEST_CASE("parity merge averages the shared 700 nm band") {
  Rng rng(3);
  Cube hsi = random_hsi(4, 4, rng);
  auto [even, odd] = parity_split(hsi);
  for (auto& v : even.band(15)) v = 0.2;
  for (auto& v : odd.band(15)) v = 0.4;
  Cube merged = parity_merge(even, odd);
  for (double v : merged.band(30)) CHECK(v == doctest::Approx(0.3).epsilon(1e-15));
  // every other band passes through unchanged
  for (int b = 0; b < kHsiBands; ++b) {
    if (b == 30) continue;
    auto src = hsi.band(b);
    auto dst = merged.band(b);
    for (std::size_t i = 0; i < src.size(); ++i) CHECK(dst[i] == src[i]);
  }

  CHECK_THROWS_AS(parity_merge(odd, even), DataError);  // swapped stacks
}

TEST_CASE("reflectance and feature normalization invert exactly") {
  CHECK(reflect_to_unit(0.5) == 0.0);
  CHECK(unit_to_reflect(reflect_to_unit(0.73)) == doctest::Approx(0.73).epsilon(1e-15));

  FeatureStats stats;
  stats.mean = {1.0, -2.0};
  stats.stdev = {0.5, 3.0};
  Rng rng(4);
  std::vector<double> maps(2 * 10);
  for (auto& v : maps) v = rng.next_uniform(-2, 2);
  auto original = maps;
  standardize_features(maps, stats, 10);
  standardize_features(maps, stats, 10, /*inverse=*/true);
  for (std::size_t i = 0; i < maps.size(); ++i)
    CHECK(maps[i] == doctest::Approx(original[i]).epsilon(1e-12));
}

TEST_CASE("standardized training features have zero mean and unit variance") {
  Rng rng(5);
  const std::size_t features = 6, pixels = 40;
  std::vector<double> a(features * pixels), b(features * pixels);
  for (auto& v : a) v = rng.next_uniform(-3, 7);
  for (auto& v : b) v = rng.next_uniform(-3, 7);

  // fit on both stacks the way train_all does, via the public surface:
  // standardize and verify the pooled moments
  FeatureStats stats;
  stats.mean.assign(features, 0.0);
  stats.stdev.assign(features, 0.0);
  for (std::size_t f = 0; f < features; ++f) {
    double sum = 0, sq = 0;
    for (const auto* s : {&a, &b})
      for (std::size_t i = 0; i < pixels; ++i) {
        const double v = (*s)[f * pixels + i];
        sum += v;
        sq += v * v;
      }
    const double n = 2.0 * pixels;
    stats.mean[f] = sum / n;
    stats.stdev[f] = std::sqrt(std::max(0.0, sq / n - stats.mean[f] * stats.mean[f]));
  }
  standardize_features(a, stats, pixels);
  standardize_features(b, stats, pixels);
  for (std::size_t f = 0; f < features; ++f) {
    double sum = 0, sq = 0;
    for (const auto* s : {&a, &b})
      for (std::size_t i = 0; i < pixels; ++i) {
        sum += (*s)[f * pixels + i];
        sq += (*s)[f * pixels + i] * (*s)[f * pixels + i];
      }
    const double n = 2.0 * pixels;
    CHECK(std::abs(sum / n) < 1e-10);
    CHECK(std::abs(std::sqrt(sq / n) - 1.0) < 1e-6);
  }
}

TEST_CASE("spectral angle mapper") {
  std::vector<double> u = {1, 0, 0}, v = {0, 1, 0};
  CHECK(sam(u, u) == 0.0);
  CHECK(sam(u, v) == doctest::Approx(std::numbers::pi / 2).epsilon(1e-12));

  std::vector<double> a = {1, 1}, b = {1, 0};
  CHECK(sam(a, b) == doctest::Approx(std::numbers::pi / 4).epsilon(1e-12));

  std::vector<double> scaled = {3, 3};
  CHECK(sam(a, scaled) == 0.0);  // scale invariance

  std::vector<double> zero = {0, 0};
  CHECK_THROWS_AS(sam(a, zero), Error);
  std::vector<double> mismatched = {1, 2, 3};
  CHECK_THROWS_AS(sam(a, mismatched), ShapeError);
}

TEST_CASE("evaluate reports per-image means and skips empty masks") {
  Rng rng(6);
  Cube truth = random_hsi(4, 4, rng);
  Cube pred = truth;  // identical -> SAM 0

  Mask full;
  full.h = full.w = 4;
  full.on.assign(16, 1);
  Mask empty;
  empty.h = empty.w = 4;
  empty.on.assign(16, 0);

  EvalReport report = evaluate({pred, pred}, {truth, truth}, {full, empty}, {"a", "b"});
  REQUIRE(report.images.size() == 1);
  CHECK(report.images[0].name == "a");
  CHECK(report.images[0].mean_sam == 0.0);
  CHECK(report.images[0].pixels == 16);
  CHECK(report.images[0].skipped == 0);
  REQUIRE(report.skipped_images.size() == 1);
  CHECK(report.skipped_images[0] == "b");
  CHECK(report.mean == 0.0);

  // zero-norm prediction pixels are excluded from the count
  Cube holed = pred;
  for (int b = 0; b < kHsiBands; ++b) holed.band(b)[5] = 0.0;
  EvalReport r2 = evaluate({holed}, {truth}, {full}, {"c"});
  CHECK(r2.images[0].pixels == 15);
  CHECK(r2.images[0].skipped == 1);
}

TEST_CASE("report formatting matches the mean-std presentation") {
  CHECK(format_mean_std(0.1179, 0.0129) == "0.1179 ± 0.0129");
  EvalReport report;
  report.images = {{"x.hsc", 0.25, 10, 0}};
  report.mean = 0.25;
  report.stddev = 0.0;
  const std::string csv = report_csv(report);
  CHECK(csv.find("image,mean_sam,skin_pixels,skipped_pixels\n") == 0);
  CHECK(csv.find("x.hsc,0.25,10,0\n") != std::string::npos);
  CHECK(csv.find("summary,0.2500 ± 0.0000\n") != std::string::npos);
}

TEST_CASE("default config mirrors the training recipe") {
  const PipelineConfig cfg = default_config();
  CHECK(cfg.J == 2);
  CHECK(cfg.L == 4);
  CHECK(cfg.lr == 0.001);
  CHECK(cfg.matching_epochs == 100);
  CHECK(cfg.inverse_epochs == 150);
  CHECK((cfg.misr_epochs == 30 || cfg.misr_epochs == 60));
  CHECK(cfg.morlet.sigma0 == 0.8);
  CHECK(cfg.morlet.xi0 == doctest::Approx(3.0 * std::numbers::pi / 4.0).epsilon(1e-15));
}

TEST_CASE("cubic spectral baseline interpolates through the capture samples") {
  // flat spectrum: the spline of constant data is constant
  Cube msi = Cube::make(2, 2, 4, {620, 540, 460, 850});
  for (auto& v : msi.values) v = 0.4;
  Cube base = cubic_spectral_baseline(msi);
  CHECK(base.bands == kHsiBands);
  for (double v : base.values) CHECK(v == doctest::Approx(0.4).epsilon(1e-12));

  // linear-in-wavelength data reproduces the line inside the knot range
  Cube ramp = Cube::make(1, 1, 4, {620, 540, 460, 850});
  const double slope = 1e-3, base_v = 0.1;
  const SrfConfig srf;
  for (int c = 0; c < 4; ++c)
    ramp.at(c, 0, 0) = base_v + slope * (srf.centers_nm[c] - 460.0);
  Cube interp = cubic_spectral_baseline(ramp);
  const auto wl = hsi_wavelengths();
  for (int b = 0; b < kHsiBands; ++b) {
    if (wl[b] < 460.0 || wl[b] > 850.0) continue;
    CHECK(interp.at(b, 0, 0) ==
          doctest::Approx(base_v + slope * (wl[b] - 460.0)).epsilon(1e-9));
  }
}

TEST_CASE("otsu fallback separates a bimodal NIR plane") {
  Cube msi = Cube::make(4, 4, 4, {620, 540, 460, 850});
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) {
      const bool bright = x >= 2;
      msi.at(3, y, x) = bright ? 0.8 : 0.1;
    }
  Mask m = otsu_mask(msi);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) CHECK(m.at(y, x) == (x >= 2));

  // flat NIR -> nothing selected
  Cube flat = Cube::make(4, 4, 4, {620, 540, 460, 850});
  CHECK(otsu_mask(flat).count() == 0);
}

// A miniature end-to-end run exercising train_all plumbing, checkpointing and
// inference contracts. The real quality bar lives in the acceptance suite.
TEST_CASE("tiny train/infer round trip") {
  auto scenes_raw = gen_synthetic(3, 16, 11);
  std::vector<PairedScene> scenes;
  for (auto& s : scenes_raw)
    scenes.push_back({std::move(s.hsi), std::move(s.msi), std::move(s.mask)});

  PipelineConfig cfg = default_config();
  cfg.matching_hidden = 8;
  cfg.misr_hidden = 8;
  cfg.inverse_c1 = 4;
  cfg.inverse_c2 = 4;
  cfg.matching_epochs = 2;
  cfg.inverse_epochs = 2;
  cfg.misr_epochs = 30;
  cfg.seed = 77;

  TrainOutputs out = train_all(scenes, cfg);
  CHECK(out.matching_even_log.epoch_mean_loss.size() == 2);
  CHECK(out.inverse_odd_log.epoch_mean_loss.size() == 2);
  CHECK(out.misr_log.epoch_mean_loss.size() == 30);

  Cube pred = infer(out.bundle, scenes[0].msi, scenes[0].mask, /*use_misr=*/true);
  CHECK(pred.bands == kHsiBands);
  CHECK(pred.h == 16);
  CHECK(pred.w == 16);
  for (double v : pred.values) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }

  // non-skin pixels are identical with and without MISR
  Cube plain = infer(out.bundle, scenes[0].msi, scenes[0].mask, /*use_misr=*/false);
  const auto& mask = scenes[0].mask;
  for (int b = 0; b < kHsiBands; ++b)
    for (std::size_t i = 0; i < mask.on.size(); ++i)
      if (!mask.on[i]) CHECK(pred.band(b)[i] == plain.band(b)[i]);

  // bundle round trip through disk preserves inference output exactly
  namespace fs = std::filesystem;
  const auto dir = (fs::temp_directory_path() / "hsrecon_bundle_test").string();
  save_model_bundle(out.bundle, dir);
  ModelBundle loaded = load_model_bundle(dir, /*need_misr=*/true);
  Cube pred2 = infer(loaded, scenes[0].msi, scenes[0].mask, true);
  CHECK(pred2.values == pred.values);

  // a 61-band "capture" is rejected, as is a wrong-size mask
  CHECK_THROWS_AS(infer(loaded, scenes[0].hsi, scenes[0].mask, true), DataError);
  Mask bad;
  bad.h = bad.w = 8;
  bad.on.assign(64, 1);
  CHECK_THROWS_AS(infer(loaded, scenes[0].msi, bad, true), DataError);

  fs::remove_all(dir);
}
