#include "hsrecon/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

namespace hsrecon {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// parity

int ParityScheme::band_of_label(int label) {
  if (label < 0 || label >= kLabels) throw DataError("parity label out of range");
  return label <= 30 ? label : label - 1;
}

const std::vector<int>& ParityScheme::even_bands() {
  static const std::vector<int> bands = [] {
    std::vector<int> b;
    for (int label = 0; label < kLabels; label += 2) b.push_back(band_of_label(label));
    return b;
  }();
  return bands;
}

const std::vector<int>& ParityScheme::odd_bands() {
  static const std::vector<int> bands = [] {
    std::vector<int> b;
    for (int label = 1; label < kLabels; label += 2) b.push_back(band_of_label(label));
    return b;
  }();
  return bands;
}

namespace {

Cube take_bands(const Cube& hsi, const std::vector<int>& bands) {
  std::vector<double> wl(bands.size());
  for (std::size_t i = 0; i < bands.size(); ++i) wl[i] = hsi.wavelengths[bands[i]];
  Cube out = Cube::make(hsi.h, hsi.w, static_cast<int>(bands.size()), std::move(wl));
  for (std::size_t i = 0; i < bands.size(); ++i) {
    auto src = hsi.band(bands[i]);
    std::copy(src.begin(), src.end(), out.band(static_cast<int>(i)).begin());
  }
  return out;
}

void check_parity_stack(const Cube& stack, const std::vector<int>& bands, const char* which) {
  if (stack.bands != static_cast<int>(bands.size()))
    throw DataError(std::string("parity_merge: ") + which + " stack must have 31 bands, got " +
                    std::to_string(stack.bands));
  const auto wl = hsi_wavelengths();
  for (std::size_t i = 0; i < bands.size(); ++i)
    if (stack.wavelengths[i] != wl[bands[i]])
      throw DataError(std::string("parity_merge: ") + which +
                      " stack wavelengths do not match the parity scheme");
}

}  // namespace

std::pair<Cube, Cube> parity_split(const Cube& hsi) {
  require_hsi_layout(hsi, "parity_split");
  return {take_bands(hsi, ParityScheme::even_bands()), take_bands(hsi, ParityScheme::odd_bands())};
}

Cube parity_merge(const Cube& even, const Cube& odd) {
  check_parity_stack(even, ParityScheme::even_bands(), "even");
  check_parity_stack(odd, ParityScheme::odd_bands(), "odd");
  if (even.h != odd.h || even.w != odd.w)
    throw DataError("parity_merge: stacks differ in spatial size");

  Cube out = Cube::make(even.h, even.w, kHsiBands, hsi_wavelengths());
  const auto& eb = ParityScheme::even_bands();
  const auto& ob = ParityScheme::odd_bands();
  for (std::size_t i = 0; i < eb.size(); ++i) {
    auto src = even.band(static_cast<int>(i));
    std::copy(src.begin(), src.end(), out.band(eb[i]).begin());
  }
  for (std::size_t i = 0; i < ob.size(); ++i) {
    if (ob[i] == ParityScheme::kSharedBand) continue;
    auto src = odd.band(static_cast<int>(i));
    std::copy(src.begin(), src.end(), out.band(ob[i]).begin());
  }
  // shared 700 nm band: average of the two predictions
  const int ei = static_cast<int>(std::find(eb.begin(), eb.end(), ParityScheme::kSharedBand) -
                                  eb.begin());
  const int oi = static_cast<int>(std::find(ob.begin(), ob.end(), ParityScheme::kSharedBand) -
                                  ob.begin());
  auto e700 = even.band(ei);
  auto o700 = odd.band(oi);
  auto dst = out.band(ParityScheme::kSharedBand);
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = (e700[i] + o700[i]) / 2.0;
  return out;
}

// ---------------------------------------------------------------------------
// normalization

void standardize_features(std::span<double> maps, const FeatureStats& stats, std::size_t pixels,
                          bool inverse) {
  if (maps.size() != stats.features() * pixels)
    throw ShapeError("standardize_features: buffer does not match stats layout");
  for (std::size_t f = 0; f < stats.features(); ++f) {
    double* p = maps.data() + f * pixels;
    const double m = stats.mean[f], s = stats.stdev[f];
    if (inverse)
      for (std::size_t i = 0; i < pixels; ++i) p[i] = p[i] * s + m;
    else
      for (std::size_t i = 0; i < pixels; ++i) p[i] = (p[i] - m) / s;
  }
}

namespace {

constexpr double kStdFloor = 1e-8;

FeatureStats fit_feature_stats(const std::vector<const std::vector<double>*>& stacks,
                               std::size_t features, std::size_t pixels) {
  FeatureStats stats;
  stats.mean.assign(features, 0.0);
  stats.stdev.assign(features, 0.0);
  const double n = static_cast<double>(stacks.size() * pixels);
  for (std::size_t f = 0; f < features; ++f) {
    double sum = 0.0, sumsq = 0.0;
    for (const auto* stack : stacks) {
      const double* p = stack->data() + f * pixels;
      for (std::size_t i = 0; i < pixels; ++i) {
        sum += p[i];
        sumsq += p[i] * p[i];
      }
    }
    const double mean = sum / n;
    const double var = std::max(0.0, sumsq / n - mean * mean);
    stats.mean[f] = mean;
    stats.stdev[f] = std::max(std::sqrt(var), kStdFloor);
  }
  return stats;
}

ordered_json stats_to_json(const FeatureStats& s) {
  return ordered_json{{"mean", s.mean}, {"std", s.stdev}};
}

FeatureStats stats_from_json(const ordered_json& j) {
  FeatureStats s;
  s.mean = j.at("mean").get<std::vector<double>>();
  s.stdev = j.at("std").get<std::vector<double>>();
  if (s.mean.size() != s.stdev.size()) throw DataError("norm stats mean/std length mismatch");
  return s;
}

}  // namespace

void save_norm_stats(const NormStats& stats, const std::string& path) {
  if (!stats.fitted) throw DataError("save_norm_stats: stats not fitted");
  ordered_json j;
  j["msi"] = stats_to_json(stats.msi);
  j["even"] = stats_to_json(stats.even);
  j["odd"] = stats_to_json(stats.odd);
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write norm stats: " + path);
  out << j.dump(2) << '\n';
}

NormStats load_norm_stats(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open norm stats: " + path);
  ordered_json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw DataError("unparseable norm stats " + path + ": " + e.what());
  }
  NormStats stats;
  stats.msi = stats_from_json(j.at("msi"));
  stats.even = stats_from_json(j.at("even"));
  stats.odd = stats_from_json(j.at("odd"));
  stats.fitted = true;
  return stats;
}

// ---------------------------------------------------------------------------
// reconstruction core (stages 1+2 in eval mode)

namespace {

void validate_capture(const Cube& msi, const PipelineConfig& cfg) {
  if (cfg.J != 2)
    throw DataError("pipeline requires J=2 (the inverse networks upsample exactly 4x)");
  if (msi.bands != kMsiChannels)
    throw DataError("capture must have " + std::to_string(kMsiChannels) + " channels, got " +
                    std::to_string(msi.bands));
  if (msi.h % 4 != 0 || msi.w % 4 != 0)
    throw DataError("capture dimensions must be divisible by 4, got " + std::to_string(msi.h) +
                    "x" + std::to_string(msi.w));
}

// Scatter, standardize, match and invert one capture; merged cube before
// any MISR refinement. Values land in (0,1) through the tanh heads.
Cube reconstruct_pre_misr(ModelBundle& bundle, const FilterBank& bank, const Cube& msi) {
  ScatteringCoeffs coeffs = scatter_multichannel(
      std::span<const double>(msi.values), static_cast<std::size_t>(msi.bands), bank);
  standardize_features(coeffs.maps, bundle.stats.msi, coeffs.map_size());

  Cube parity_cubes[2];
  const std::vector<int>* band_lists[2] = {&ParityScheme::even_bands(),
                                           &ParityScheme::odd_bands()};
  MatchingNet* match[2] = {&bundle.matching_even, &bundle.matching_odd};
  InverseNet* inverse[2] = {&bundle.inverse_even, &bundle.inverse_odd};
  for (int p = 0; p < 2; ++p) {
    ScatteringCoeffs matched = matching_forward(*match[p], coeffs, 31);
    std::vector<double> bands = inverse_forward(*inverse[p], matched);
    std::vector<double> wl(band_lists[p]->size());
    const auto hsi_wl = hsi_wavelengths();
    for (std::size_t i = 0; i < wl.size(); ++i) wl[i] = hsi_wl[(*band_lists[p])[i]];
    const int n_bands = static_cast<int>(wl.size());
    Cube stack = Cube::make(msi.h, msi.w, n_bands, std::move(wl));
    for (std::size_t i = 0; i < bands.size(); ++i) stack.values[i] = unit_to_reflect(bands[i]);
    parity_cubes[p] = std::move(stack);
  }
  return parity_merge(parity_cubes[0], parity_cubes[1]);
}

std::size_t expected_matching_inputs(const PipelineConfig& cfg) {
  return path_count(cfg.J, cfg.L) * kMsiChannels;
}

}  // namespace

Cube infer(ModelBundle& bundle, const Cube& msi, const Mask& mask, bool use_misr) {
  validate_capture(msi, bundle.cfg);
  if (mask.h != msi.h || mask.w != msi.w)
    throw DataError("mask dimensions do not match the capture");
  if (use_misr && !bundle.has_misr)
    throw DataError("MISR refinement requested but no misr checkpoint is loaded");
  if (static_cast<std::size_t>(bundle.matching_even.d_in) != expected_matching_inputs(bundle.cfg))
    throw DataError("matching network input width does not match the configured transform");

  FilterBank bank = build_filter_bank(bundle.cfg.J, bundle.cfg.L,
                                      static_cast<std::size_t>(msi.h),
                                      static_cast<std::size_t>(msi.w), bundle.cfg.morlet);
  Cube out = reconstruct_pre_misr(bundle, bank, msi);

  if (use_misr && mask.count() > 0) {
    const std::size_t rows = mask.count();
    std::vector<double> spectra(rows * kHsiBands);
    std::vector<std::size_t> pixel_of_row(rows);
    std::size_t r = 0;
    for (std::size_t i = 0; i < mask.on.size(); ++i) {
      if (!mask.on[i]) continue;
      pixel_of_row[r] = i;
      for (int b = 0; b < kHsiBands; ++b)
        spectra[r * kHsiBands + b] = reflect_to_unit(out.values[b * out.plane_size() + i]);
      ++r;
    }
    std::vector<double> refined = misr_forward(bundle.misr, spectra, rows);
    for (r = 0; r < rows; ++r) {
      const std::size_t i = pixel_of_row[r];
      for (int b = 0; b < kHsiBands; ++b)
        out.values[b * out.plane_size() + i] = unit_to_reflect(refined[r * kHsiBands + b]);
    }
  }

  for (double& v : out.values) v = std::clamp(v, 0.0, 1.0);
  return out;
}

// ---------------------------------------------------------------------------
// training

namespace {

struct PreparedScene {
  std::vector<double> msi_feats;    // feature-major, standardized after fitting
  std::vector<double> even_feats;   // feature-major
  std::vector<double> odd_feats;
  std::vector<double> even_target;  // [-1,1] band stacks
  std::vector<double> odd_target;
};

// Pixel-major [pixels, features] matrix for the row-wise networks.
std::vector<double> to_rows(const std::vector<double>& feats, std::size_t features,
                            std::size_t pixels) {
  std::vector<double> rows(feats.size());
  for (std::size_t f = 0; f < features; ++f)
    for (std::size_t p = 0; p < pixels; ++p) rows[p * features + f] = feats[f * pixels + p];
  return rows;
}

TrainLog run_stage(const char* stage_name, std::vector<Tensor*> params, std::size_t items,
                   const std::function<Tensor(std::span<const std::size_t>)>& forward,
                   const TrainConfig& config, const StageProgress& progress) {
  const std::string prefix = "stage " + std::string(stage_name) + ": ";
  EpochCallback on_epoch;
  if (progress) {
    std::string name = stage_name;
    on_epoch = [progress, name](int epoch, int total, double loss) {
      progress(name, epoch, total, loss);
    };
  }
  try {
    return train(std::move(params), items, forward, config, on_epoch);
  } catch (const NumericError& e) {
    throw NumericError(prefix + e.what());
  } catch (const DataError& e) {
    throw DataError(prefix + e.what());
  } catch (const Error& e) {
    throw Error(prefix + e.what());
  }
}

}  // namespace

TrainOutputs train_all(const std::vector<PairedScene>& scenes, const PipelineConfig& cfg,
                       const StageProgress& progress) {
  if (scenes.empty()) throw DataError("train_all: no training scenes");
  const Cube& first = scenes.front().msi;
  validate_capture(first, cfg);
  for (const auto& s : scenes) {
    require_hsi_layout(s.hsi, "train_all");
    if (s.msi.h != first.h || s.msi.w != first.w || s.hsi.h != first.h || s.hsi.w != first.w)
      throw DataError("train_all: scenes must share one spatial size");
    if (s.msi.bands != kMsiChannels) throw DataError("train_all: capture must have 4 channels");
    if (s.mask.h != first.h || s.mask.w != first.w)
      throw DataError("train_all: mask size mismatch");
  }

  const std::size_t h = static_cast<std::size_t>(first.h), w = static_cast<std::size_t>(first.w);
  FilterBank bank = build_filter_bank(cfg.J, cfg.L, h, w, cfg.morlet);
  const std::size_t pixels = (h >> cfg.J) * (w >> cfg.J);
  const std::size_t paths = path_count(cfg.J, cfg.L);
  const std::size_t msi_features = paths * kMsiChannels;
  const std::size_t parity_features = paths * 31;
  const std::size_t plane = h * w;

  // Scattering features and normalized targets for every scene.
  std::vector<PreparedScene> prep(scenes.size());
  parallel_for(scenes.size(), [&](std::size_t i) {
    const auto& scene = scenes[i];
    auto msi_coeffs = scatter_multichannel(std::span<const double>(scene.msi.values),
                                           kMsiChannels, bank);
    auto [even, odd] = parity_split(scene.hsi);
    auto even_coeffs =
        scatter_multichannel(std::span<const double>(even.values), 31, bank);
    auto odd_coeffs = scatter_multichannel(std::span<const double>(odd.values), 31, bank);
    prep[i].msi_feats = std::move(msi_coeffs.maps);
    prep[i].even_feats = std::move(even_coeffs.maps);
    prep[i].odd_feats = std::move(odd_coeffs.maps);
    prep[i].even_target.resize(even.values.size());
    for (std::size_t k = 0; k < even.values.size(); ++k)
      prep[i].even_target[k] = reflect_to_unit(even.values[k]);
    prep[i].odd_target.resize(odd.values.size());
    for (std::size_t k = 0; k < odd.values.size(); ++k)
      prep[i].odd_target[k] = reflect_to_unit(odd.values[k]);
  });

  TrainOutputs out;
  out.bundle.cfg = cfg;

  // Per-path statistics over the training set, then standardize in place.
  auto collect = [&](auto member) {
    std::vector<const std::vector<double>*> ptrs;
    ptrs.reserve(prep.size());
    for (const auto& p : prep) ptrs.push_back(&(p.*member));
    return ptrs;
  };
  out.bundle.stats.msi = fit_feature_stats(collect(&PreparedScene::msi_feats), msi_features, pixels);
  out.bundle.stats.even =
      fit_feature_stats(collect(&PreparedScene::even_feats), parity_features, pixels);
  out.bundle.stats.odd =
      fit_feature_stats(collect(&PreparedScene::odd_feats), parity_features, pixels);
  out.bundle.stats.fitted = true;
  for (auto& p : prep) {
    standardize_features(p.msi_feats, out.bundle.stats.msi, pixels);
    standardize_features(p.even_feats, out.bundle.stats.even, pixels);
    standardize_features(p.odd_feats, out.bundle.stats.odd, pixels);
  }

  // Stage 1: matching networks, MSI coefficients -> parity coefficients.
  out.bundle.matching_even = make_matching_net(static_cast<int>(msi_features), cfg.matching_hidden,
                                               static_cast<int>(parity_features),
                                               Rng::derive(cfg.seed, 1));
  out.bundle.matching_odd = make_matching_net(static_cast<int>(msi_features), cfg.matching_hidden,
                                              static_cast<int>(parity_features),
                                              Rng::derive(cfg.seed, 2));
  for (int p = 0; p < 2; ++p) {
    MatchingNet& net = p == 0 ? out.bundle.matching_even : out.bundle.matching_odd;
    auto member = p == 0 ? &PreparedScene::even_feats : &PreparedScene::odd_feats;
    auto forward = [&, member](std::span<const std::size_t> batch) {
      const std::size_t rows = batch.size() * pixels;
      std::vector<double> x(rows * msi_features), y(rows * parity_features);
      for (std::size_t b = 0; b < batch.size(); ++b) {
        auto xr = to_rows(prep[batch[b]].msi_feats, msi_features, pixels);
        auto yr = to_rows(prep[batch[b]].*member, parity_features, pixels);
        std::copy(xr.begin(), xr.end(), x.begin() + b * pixels * msi_features);
        std::copy(yr.begin(), yr.end(), y.begin() + b * pixels * parity_features);
      }
      Tensor tx = Tensor::from(std::move(x), {rows, msi_features});
      Tensor ty = Tensor::from(std::move(y), {rows, parity_features});
      return loss_l2(matching_apply(net, tx), ty);
    };
    TrainConfig tc = default_train_config(Stage::Matching, p == 0 ? Parity::Even : Parity::Odd);
    tc.epochs = cfg.matching_epochs;
    tc.batch_size = cfg.batch_size;
    tc.lr = cfg.lr;
    tc.seed = Rng::derive(cfg.seed, 11 + static_cast<std::uint64_t>(p));
    auto& log = p == 0 ? out.matching_even_log : out.matching_odd_log;
    log = run_stage(p == 0 ? "matching-even" : "matching-odd", parameters(net), scenes.size(),
                    forward, tc, progress);
  }

  // Stage 2: inverse networks, ground-truth parity coefficients -> bands.
  out.bundle.inverse_even =
      make_inverse_net(static_cast<int>(parity_features), cfg.inverse_c1, cfg.inverse_c2, 31,
                       cfg.conv_kernel, Rng::derive(cfg.seed, 3));
  out.bundle.inverse_odd =
      make_inverse_net(static_cast<int>(parity_features), cfg.inverse_c1, cfg.inverse_c2, 31,
                       cfg.conv_kernel, Rng::derive(cfg.seed, 4));
  const std::size_t map_h = h >> cfg.J, map_w = w >> cfg.J;
  for (int p = 0; p < 2; ++p) {
    InverseNet& net = p == 0 ? out.bundle.inverse_even : out.bundle.inverse_odd;
    net.train_h = static_cast<int>(map_h);
    net.train_w = static_cast<int>(map_w);
    auto feats = p == 0 ? &PreparedScene::even_feats : &PreparedScene::odd_feats;
    auto target = p == 0 ? &PreparedScene::even_target : &PreparedScene::odd_target;
    auto forward = [&, feats, target](std::span<const std::size_t> batch) {
      const std::size_t n = batch.size();
      std::vector<double> x(n * parity_features * pixels), t(n * 31 * plane);
      for (std::size_t b = 0; b < n; ++b) {
        const auto& f = prep[batch[b]].*feats;
        const auto& tg = prep[batch[b]].*target;
        std::copy(f.begin(), f.end(), x.begin() + b * parity_features * pixels);
        std::copy(tg.begin(), tg.end(), t.begin() + b * 31 * plane);
      }
      Tensor tx = Tensor::from(std::move(x), {n, parity_features, map_h, map_w});
      Tensor tt = Tensor::from(std::move(t), {n, 31, h, w});
      return loss_l1(inverse_apply(net, tx, /*training=*/true), tt);
    };
    TrainConfig tc = default_train_config(Stage::Inverse, p == 0 ? Parity::Even : Parity::Odd);
    tc.epochs = cfg.inverse_epochs;
    tc.batch_size = cfg.batch_size;
    tc.lr = cfg.lr;
    tc.seed = Rng::derive(cfg.seed, 13 + static_cast<std::uint64_t>(p));
    auto& log = p == 0 ? out.inverse_even_log : out.inverse_odd_log;
    log = run_stage(p == 0 ? "inverse-even" : "inverse-odd", parameters(net), scenes.size(),
                    forward, tc, progress);
  }

  // Stage 3: MISR on the skin spectra of the stage-1+2 predictions, so it
  // corrects the error the pipeline actually makes on the training set.
  out.bundle.misr = make_misr_net(kHsiBands, cfg.misr_hidden, Rng::derive(cfg.seed, 5));
  out.bundle.has_misr = true;
  {
    std::vector<std::vector<double>> pred_rows(scenes.size()), truth_rows(scenes.size());
    parallel_for(scenes.size(), [&](std::size_t i) {
      Cube pred = reconstruct_pre_misr(out.bundle, bank, scenes[i].msi);
      const Mask& mask = scenes[i].mask;
      const std::size_t rows = mask.count();
      pred_rows[i].resize(rows * kHsiBands);
      truth_rows[i].resize(rows * kHsiBands);
      std::size_t r = 0;
      for (std::size_t px = 0; px < mask.on.size(); ++px) {
        if (!mask.on[px]) continue;
        for (int b = 0; b < kHsiBands; ++b) {
          pred_rows[i][r * kHsiBands + b] =
              reflect_to_unit(pred.values[b * pred.plane_size() + px]);
          truth_rows[i][r * kHsiBands + b] =
              reflect_to_unit(scenes[i].hsi.values[b * scenes[i].hsi.plane_size() + px]);
        }
        ++r;
      }
    });
    std::vector<std::size_t> usable;
    for (std::size_t i = 0; i < scenes.size(); ++i)
      if (!pred_rows[i].empty()) usable.push_back(i);
    if (usable.empty()) throw DataError("stage misr: no skin pixels in the training set");

    auto forward = [&](std::span<const std::size_t> batch) {
      std::size_t rows = 0;
      for (auto b : batch) rows += pred_rows[usable[b]].size() / kHsiBands;
      std::vector<double> x(rows * kHsiBands), y(rows * kHsiBands);
      std::size_t off = 0;
      for (auto b : batch) {
        const auto& pr = pred_rows[usable[b]];
        const auto& tr = truth_rows[usable[b]];
        std::copy(pr.begin(), pr.end(), x.begin() + off);
        std::copy(tr.begin(), tr.end(), y.begin() + off);
        off += pr.size();
      }
      Tensor tx = Tensor::from(std::move(x), {rows, static_cast<std::size_t>(kHsiBands)});
      Tensor ty = Tensor::from(std::move(y), {rows, static_cast<std::size_t>(kHsiBands)});
      return loss_l2(misr_apply(out.bundle.misr, tx), ty);
    };

    TrainConfig tc = default_train_config(Stage::Misr, Parity::None, cfg.misr_epochs);
    tc.batch_size = cfg.batch_size;
    tc.lr = cfg.lr;
    tc.seed = Rng::derive(cfg.seed, 15);
    out.misr_log =
        run_stage("misr", parameters(out.bundle.misr), usable.size(), forward, tc, progress);
  }

  return out;
}

// ---------------------------------------------------------------------------
// bundle I/O

void save_model_bundle(const ModelBundle& bundle, const std::string& dir) {
  fs::create_directories(dir);
  const auto p = [&](const char* name) { return (fs::path(dir) / name).string(); };
  std::ofstream cfg_out(p("config.json"), std::ios::trunc);
  if (!cfg_out) throw DataError("cannot write config under " + dir);
  cfg_out << config_to_json(bundle.cfg);
  save_norm_stats(bundle.stats, p("norm_stats.json"));
  save_checkpoint(bundle.matching_even, p("matching_even.ckpt"), bundle.cfg.seed,
                  bundle.cfg.matching_epochs);
  save_checkpoint(bundle.matching_odd, p("matching_odd.ckpt"), bundle.cfg.seed,
                  bundle.cfg.matching_epochs);
  save_checkpoint(bundle.inverse_even, p("inverse_even.ckpt"), bundle.cfg.seed,
                  bundle.cfg.inverse_epochs);
  save_checkpoint(bundle.inverse_odd, p("inverse_odd.ckpt"), bundle.cfg.seed,
                  bundle.cfg.inverse_epochs);
  if (bundle.has_misr)
    save_checkpoint(bundle.misr, p("misr.ckpt"), bundle.cfg.seed, bundle.cfg.misr_epochs);
}

ModelBundle load_model_bundle(const std::string& dir, bool need_misr) {
  const auto p = [&](const char* name) { return (fs::path(dir) / name).string(); };
  ModelBundle bundle;
  bundle.cfg = config_from_json_file(p("config.json"));
  bundle.stats = load_norm_stats(p("norm_stats.json"));
  bundle.matching_even = load_matching_checkpoint(p("matching_even.ckpt"));
  bundle.matching_odd = load_matching_checkpoint(p("matching_odd.ckpt"));
  bundle.inverse_even = load_inverse_checkpoint(p("inverse_even.ckpt"));
  bundle.inverse_odd = load_inverse_checkpoint(p("inverse_odd.ckpt"));
  if (fs::exists(p("misr.ckpt"))) {
    bundle.misr = load_misr_checkpoint(p("misr.ckpt"));
    bundle.has_misr = true;
  } else if (need_misr) {
    throw DataError("missing misr checkpoint " + p("misr.ckpt") +
                    " (train it or pass --no-misr)");
  }
  return bundle;
}

// ---------------------------------------------------------------------------
// spline baseline

namespace {

// Natural cubic spline through a handful of knots, linear beyond the ends.
struct CubicSpline {
  std::vector<double> x, y, m;  // m: second derivatives at the knots

  static CubicSpline fit(std::vector<double> xs, std::vector<double> ys) {
    const std::size_t n = xs.size();
    CubicSpline s{std::move(xs), std::move(ys), std::vector<double>(n, 0.0)};
    if (n < 3) return s;
    std::vector<double> diag(n, 0.0), off(n, 0.0), rhs(n, 0.0);
    for (std::size_t i = 1; i + 1 < n; ++i) {
      const double h0 = s.x[i] - s.x[i - 1], h1 = s.x[i + 1] - s.x[i];
      diag[i] = 2.0 * (h0 + h1);
      off[i] = h1;
      rhs[i] = 6.0 * ((s.y[i + 1] - s.y[i]) / h1 - (s.y[i] - s.y[i - 1]) / h0);
    }
    // Thomas algorithm over the interior unknowns (natural ends stay 0).
    for (std::size_t i = 2; i + 1 < n; ++i) {
      const double h0 = s.x[i] - s.x[i - 1];
      const double f = h0 / diag[i - 1];
      diag[i] -= f * off[i - 1];
      rhs[i] -= f * rhs[i - 1];
    }
    for (std::size_t i = n - 2; i >= 1; --i) {
      s.m[i] = (rhs[i] - off[i] * s.m[i + 1]) / diag[i];
      if (i == 1) break;
    }
    return s;
  }

  double eval(double t) const {
    const std::size_t n = x.size();
    if (t <= x.front()) {
      const double h = x[1] - x[0];
      const double d = (y[1] - y[0]) / h - h * (2.0 * m[0] + m[1]) / 6.0;
      return y[0] + d * (t - x[0]);
    }
    if (t >= x.back()) {
      const double h = x[n - 1] - x[n - 2];
      const double d = (y[n - 1] - y[n - 2]) / h + h * (2.0 * m[n - 1] + m[n - 2]) / 6.0;
      return y[n - 1] + d * (t - x[n - 1]);
    }
    std::size_t i = 0;
    while (i + 2 < n && t > x[i + 1]) ++i;
    const double h = x[i + 1] - x[i];
    const double a = (x[i + 1] - t) / h, b = (t - x[i]) / h;
    return a * y[i] + b * y[i + 1] +
           ((a * a * a - a) * m[i] + (b * b * b - b) * m[i + 1]) * h * h / 6.0;
  }
};

}  // namespace

Cube cubic_spectral_baseline(const Cube& msi, const SrfConfig& srf) {
  if (msi.bands != kMsiChannels)
    throw DataError("cubic_spectral_baseline: capture must have 4 channels");
  std::vector<int> order(kMsiChannels);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](int a, int b) { return srf.centers_nm[a] < srf.centers_nm[b]; });
  std::vector<double> knots_x(kMsiChannels);
  for (int i = 0; i < kMsiChannels; ++i) knots_x[i] = srf.centers_nm[order[i]];

  const auto wl = hsi_wavelengths();
  Cube out = Cube::make(msi.h, msi.w, kHsiBands, wl);
  const std::size_t plane = msi.plane_size();
  std::vector<double> knots_y(kMsiChannels);
  for (std::size_t px = 0; px < plane; ++px) {
    for (int i = 0; i < kMsiChannels; ++i) knots_y[i] = msi.values[order[i] * plane + px];
    const CubicSpline spline = CubicSpline::fit(knots_x, knots_y);
    for (int b = 0; b < kHsiBands; ++b)
      out.values[b * plane + px] = std::clamp(spline.eval(wl[b]), 0.0, 1.0);
  }
  return out;
}

Mask otsu_mask(const Cube& msi) {
  if (msi.bands != kMsiChannels) throw DataError("otsu_mask: capture must have 4 channels");
  const std::size_t plane = msi.plane_size();
  const double* nir = msi.values.data() + 3 * plane;  // channel order R,G,B,NIR
  const auto [mn_it, mx_it] = std::minmax_element(nir, nir + plane);
  Mask mask;
  mask.h = msi.h;
  mask.w = msi.w;
  mask.on.assign(plane, 0);
  const double mn = *mn_it, mx = *mx_it;
  if (mx - mn < 1e-12) return mask;

  constexpr int kBins = 256;
  std::vector<std::size_t> hist(kBins, 0);
  const double scale = (kBins - 1) / (mx - mn);
  for (std::size_t i = 0; i < plane; ++i)
    ++hist[static_cast<int>((nir[i] - mn) * scale)];

  double total_sum = 0.0;
  for (int b = 0; b < kBins; ++b) total_sum += static_cast<double>(hist[b]) * b;
  double w0 = 0.0, sum0 = 0.0, best = -1.0;
  int best_bin = 0;
  for (int b = 0; b + 1 < kBins; ++b) {
    w0 += static_cast<double>(hist[b]);
    if (w0 == 0.0) continue;
    const double w1 = static_cast<double>(plane) - w0;
    if (w1 == 0.0) break;
    sum0 += static_cast<double>(hist[b]) * b;
    const double mu0 = sum0 / w0, mu1 = (total_sum - sum0) / w1;
    const double between = w0 * w1 * (mu0 - mu1) * (mu0 - mu1);
    if (between > best) {
      best = between;
      best_bin = b;
    }
  }
  const double threshold = mn + (best_bin + 1) / scale;
  for (std::size_t i = 0; i < plane; ++i) mask.on[i] = nir[i] > threshold ? 1 : 0;
  return mask;
}

// ---------------------------------------------------------------------------
// evaluation

double sam(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size() || u.empty())
    throw ShapeError("sam: spectra must be non-empty and equally sized");
  double nu = 0.0, nv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    nu += u[i] * u[i];
    nv += v[i] * v[i];
  }
  if (nu == 0.0 || nv == 0.0) throw Error("sam: zero-norm spectrum");
  // Chord form of arccos(<u,v>/(|u||v|)). Equivalent on the clamped domain
  // but exact at angle 0 and stable near both ends, where acos of a rounded
  // cosine loses digits.
  const double inv_u = 1.0 / std::sqrt(nu), inv_v = 1.0 / std::sqrt(nv);
  double chord = 0.0, anti = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double a = u[i] * inv_u, b = v[i] * inv_v;
    chord += (a - b) * (a - b);
    anti += (a + b) * (a + b);
  }
  return 2.0 * std::atan2(std::sqrt(chord), std::sqrt(anti));
}

EvalReport evaluate(const std::vector<Cube>& preds, const std::vector<Cube>& truths,
                    const std::vector<Mask>& masks, const std::vector<std::string>& names) {
  if (preds.size() != truths.size() || preds.size() != masks.size() ||
      preds.size() != names.size())
    throw DataError("evaluate: preds, truths, masks and names must align");
  if (preds.empty()) throw DataError("evaluate: nothing to evaluate");

  EvalReport report;
  std::vector<double> u(kHsiBands), v(kHsiBands);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const Cube& pred = preds[i];
    const Cube& truth = truths[i];
    const Mask& mask = masks[i];
    require_hsi_layout(pred, "evaluate(pred " + names[i] + ")");
    require_hsi_layout(truth, "evaluate(truth " + names[i] + ")");
    if (pred.h != truth.h || pred.w != truth.w || mask.h != pred.h || mask.w != pred.w)
      throw DataError("evaluate: size mismatch for " + names[i]);
    if (mask.count() == 0) {
      std::fprintf(stderr, "[hsrecon] warning: empty mask, skipping %s\n", names[i].c_str());
      report.skipped_images.push_back(names[i]);
      continue;
    }
    const std::size_t plane = pred.plane_size();
    double acc = 0.0;
    std::size_t used = 0, skipped = 0;
    for (std::size_t px = 0; px < mask.on.size(); ++px) {
      if (!mask.on[px]) continue;
      double nu = 0.0, nv = 0.0;
      for (int b = 0; b < kHsiBands; ++b) {
        u[b] = pred.values[b * plane + px];
        v[b] = truth.values[b * plane + px];
        nu += u[b] * u[b];
        nv += v[b] * v[b];
      }
      if (nu == 0.0 || nv == 0.0) {
        ++skipped;
        continue;
      }
      acc += sam(u, v);
      ++used;
    }
    if (used == 0) {
      std::fprintf(stderr, "[hsrecon] warning: no usable skin spectra, skipping %s\n",
                   names[i].c_str());
      report.skipped_images.push_back(names[i]);
      continue;
    }
    if (skipped > 0)
      std::fprintf(stderr, "[hsrecon] warning: skipped %zu zero-norm spectra in %s\n", skipped,
                   names[i].c_str());
    report.images.push_back({names[i], acc / static_cast<double>(used), used, skipped});
  }
  if (report.images.empty()) throw DataError("evaluate: no evaluable images");

  double sum = 0.0;
  for (const auto& img : report.images) sum += img.mean_sam;
  report.mean = sum / static_cast<double>(report.images.size());
  double var = 0.0;
  for (const auto& img : report.images) {
    const double d = img.mean_sam - report.mean;
    var += d * d;
  }
  report.stddev = std::sqrt(var / static_cast<double>(report.images.size()));
  return report;
}

std::string format_mean_std(double mean, double stddev) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.4f ± %.4f", mean, stddev);
  return buf;
}

std::string report_csv(const EvalReport& report) {
  std::ostringstream os;
  os.precision(17);
  os << "image,mean_sam,skin_pixels,skipped_pixels\n";
  for (const auto& img : report.images)
    os << img.name << ',' << img.mean_sam << ',' << img.pixels << ',' << img.skipped << '\n';
  os << "summary," << format_mean_std(report.mean, report.stddev) << '\n';
  return os.str();
}

}  // namespace hsrecon
