#pragma once

// End-to-end orchestration: parity split/merge of the 61-band cube,
// coefficient/reflectance normalization, the three training stages,
// inference, and spectral-angle evaluation.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "hsrecon/config.hpp"
#include "hsrecon/cube.hpp"
#include "hsrecon/networks.hpp"
#include "hsrecon/optim.hpp"
#include "hsrecon/scattering.hpp"

namespace hsrecon {

// 62 channel labels over 61 bands: label k names band k for k <= 30 and band
// k-1 for k >= 31, so labels 30 and 31 both name the 700 nm band. Even/odd
// label sets each cover 31 bands and overlap exactly at 700 nm.
struct ParityScheme {
  static constexpr int kLabels = 62;
  static constexpr int kSharedBand = 30;  // 700 nm
  static int band_of_label(int label);
  static const std::vector<int>& even_bands();  // in even-label order
  static const std::vector<int>& odd_bands();   // in odd-label order
};

/// 61-band cube -> (even stack, odd stack), both 31-band cubes.
std::pair<Cube, Cube> parity_split(const Cube& hsi);

/// Inverse of parity_split; the shared 700 nm band is the average of the two
/// copies. Exact round trip: parity_merge(parity_split(c)) == c.
Cube parity_merge(const Cube& even, const Cube& odd);

/// Per-feature mean/std of scattering coefficient stacks, fitted on the
/// training set. Standard deviations are floored at 1e-8.
struct FeatureStats {
  std::vector<double> mean, stdev;
  std::size_t features() const { return mean.size(); }
};

struct NormStats {
  FeatureStats msi, even, odd;
  bool fitted = false;
};

/// Reflectance [0,1] <-> network range [-1,1].
inline double reflect_to_unit(double x) { return x * 2.0 - 1.0; }
inline double unit_to_reflect(double y) { return (y + 1.0) * 0.5; }

/// In-place z-scoring of a feature-major coefficient stack (`maps` layout of
/// ScatteringCoeffs); `inverse` undoes it exactly.
void standardize_features(std::span<double> maps, const FeatureStats& stats, std::size_t pixels,
                          bool inverse = false);

void save_norm_stats(const NormStats& stats, const std::string& path);
NormStats load_norm_stats(const std::string& path);

/// One training example: ground-truth cube, its 4-channel capture, skin mask.
struct PairedScene {
  Cube hsi;
  Cube msi;
  Mask mask;
};

struct ModelBundle {
  PipelineConfig cfg;
  NormStats stats;
  MatchingNet matching_even, matching_odd;
  InverseNet inverse_even, inverse_odd;
  MisrNet misr;
  bool has_misr = false;
};

struct TrainOutputs {
  ModelBundle bundle;
  TrainLog matching_even_log, matching_odd_log;
  TrainLog inverse_even_log, inverse_odd_log;
  TrainLog misr_log;
};

using StageProgress =
    std::function<void(const std::string& stage, int epoch, int total_epochs, double loss)>;

/// Runs the three stages: matching networks on MSI->parity coefficients
/// (L2), inverse networks on ground-truth parity coefficients -> band stacks
/// (L1), then MISR on the skin spectra of the stage-1+2 predictions over the
/// training set (L2). Misr epoch count comes from cfg.misr_epochs (30 or 60).
/// Any stage failure rethrows with the stage name.
TrainOutputs train_all(const std::vector<PairedScene>& scenes, const PipelineConfig& cfg,
                       const StageProgress& progress = {});

/// Checkpoints (matching_even/odd, inverse_even/odd, misr), norm_stats.json
/// and config.json under `dir`.
void save_model_bundle(const ModelBundle& bundle, const std::string& dir);
/// `need_misr` makes a missing misr checkpoint an error instead of
/// has_misr = false.
ModelBundle load_model_bundle(const std::string& dir, bool need_misr);

/// Full reconstruction of one capture. Steps: scatter, standardize, match,
/// invert, denormalize, parity-merge, then (optionally) MISR refinement of
/// the masked pixels; the result is clamped to [0,1]. MSI dimensions must be
/// divisible by 4.
Cube infer(ModelBundle& bundle, const Cube& msi, const Mask& mask, bool use_misr);

/// Non-learned comparison: per-pixel natural cubic interpolation of the four
/// capture samples (at their response center wavelengths) to all 61 bands.
Cube cubic_spectral_baseline(const Cube& msi, const SrfConfig& srf = {});

/// Threshold on the NIR channel at its Otsu split; fallback when no mask is
/// provided.
Mask otsu_mask(const Cube& msi);

/// Spectral angle in radians: arccos of the normalized inner product,
/// evaluated in a chord form that never leaves the arccos domain and is
/// exact for identical spectra. Throws on zero-norm input.
double sam(std::span<const double> u, std::span<const double> v);

struct ImageSam {
  std::string name;
  double mean_sam = 0.0;
  std::size_t pixels = 0;   // skin pixels that entered the mean
  std::size_t skipped = 0;  // zero-norm spectra excluded
};

struct EvalReport {
  std::vector<ImageSam> images;
  std::vector<std::string> skipped_images;  // empty-mask inputs
  double mean = 0.0;
  double stddev = 0.0;  // population std over image means
};

/// Mean SAM over skin pixels per image, then mean +- std across images.
EvalReport evaluate(const std::vector<Cube>& preds, const std::vector<Cube>& truths,
                    const std::vector<Mask>& masks, const std::vector<std::string>& names);

/// "0.1179 ± 0.0129"-style summary.
std::string format_mean_std(double mean, double stddev);
/// Per-image CSV plus a trailing summary row.
std::string report_csv(const EvalReport& report);

}  // namespace hsrecon
