// Command-line front end: synthetic data generation, training, inference,
// evaluation and filter inspection.
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "hsrecon/common.hpp"
#include "hsrecon/config.hpp"
#include "hsrecon/cube.hpp"
#include "hsrecon/pipeline.hpp"
#include "hsrecon/scattering.hpp"
#include "hsrecon/synthetic.hpp"
#include "hsrecon/tensor.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

std::string scene_stem(int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "scene_%03d", index);
  return buf;
}

void log_line(const std::string& msg) { std::fprintf(stderr, "[hsrecon] %s\n", msg.c_str()); }

struct GenArgs {
  std::string out;
  int count = 8;
  int size = 64;
  std::uint64_t seed = 0;
  int offset = 0;
  double noise = 0.01;
};

int run_gen(const GenArgs& a) {
  hsrecon::SyntheticParams params;
  params.noise_amp = a.noise;
  auto scenes = hsrecon::gen_synthetic(a.count, a.size, a.seed, a.offset, params);
  fs::create_directories(a.out);

  ordered_json manifest;
  manifest["seed"] = a.seed;
  manifest["count"] = a.count;
  manifest["size"] = a.size;
  manifest["offset"] = a.offset;
  manifest["scenes"] = ordered_json::array();
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    const std::string stem = scene_stem(a.offset + static_cast<int>(i));
    const std::string hsi = stem + "_hsi.hsc";
    const std::string msi = stem + "_msi.hsc";
    const std::string mask = stem + "_mask.hsc";
    hsrecon::write_cube(scenes[i].hsi, (fs::path(a.out) / hsi).string());
    hsrecon::write_cube(scenes[i].msi, (fs::path(a.out) / msi).string());
    hsrecon::write_mask(scenes[i].mask, (fs::path(a.out) / mask).string());
    manifest["scenes"].push_back({{"index", a.offset + static_cast<int>(i)},
                                  {"scene_seed", scenes[i].scene_seed},
                                  {"hsi", hsi},
                                  {"msi", msi},
                                  {"mask", mask}});
  }
  std::ofstream mf((fs::path(a.out) / "manifest.json").string(), std::ios::trunc);
  if (!mf) throw hsrecon::DataError("cannot write manifest under " + a.out);
  mf << manifest.dump(2) << '\n';
  log_line("wrote " + std::to_string(3 * scenes.size()) + " data files + manifest to " + a.out);
  return kExitOk;
}

std::vector<hsrecon::PairedScene> load_dataset(const std::string& dir) {
  const std::string manifest_path = (fs::path(dir) / "manifest.json").string();
  std::ifstream in(manifest_path);
  if (!in) throw hsrecon::DataError("cannot open " + manifest_path);
  ordered_json manifest;
  try {
    in >> manifest;
  } catch (const std::exception& e) {
    throw hsrecon::DataError("unparseable manifest " + manifest_path + ": " + e.what());
  }
  std::vector<hsrecon::PairedScene> scenes;
  for (const auto& entry : manifest.at("scenes")) {
    hsrecon::PairedScene s;
    s.hsi = hsrecon::read_cube((fs::path(dir) / entry.at("hsi").get<std::string>()).string());
    s.msi = hsrecon::read_cube((fs::path(dir) / entry.at("msi").get<std::string>()).string());
    s.mask = hsrecon::read_mask((fs::path(dir) / entry.at("mask").get<std::string>()).string());
    scenes.push_back(std::move(s));
  }
  if (scenes.empty()) throw hsrecon::DataError("manifest lists no scenes: " + manifest_path);
  return scenes;
}

struct TrainArgs {
  std::string data, out, config_file;
  int misr_epochs = 0;        // 0 = keep config value
  std::uint64_t seed = 0;
  bool seed_set = false;
  int matching_epochs = -1;   // <0 = keep config value
  int inverse_epochs = -1;
  int L = 0;
  int J = 0;
};

int run_train(const TrainArgs& a) {
  hsrecon::PipelineConfig cfg = a.config_file.empty()
                                    ? hsrecon::default_config()
                                    : hsrecon::config_from_json_file(a.config_file);
  if (a.misr_epochs > 0) cfg.misr_epochs = a.misr_epochs;
  if (a.seed_set) cfg.seed = a.seed;
  if (a.matching_epochs >= 0) cfg.matching_epochs = a.matching_epochs;
  if (a.inverse_epochs >= 0) cfg.inverse_epochs = a.inverse_epochs;
  if (a.J > 0) cfg.J = a.J;
  if (a.L > 0) cfg.L = a.L;

  auto scenes = load_dataset(a.data);
  log_line("training on " + std::to_string(scenes.size()) + " scenes (misr_epochs=" +
           std::to_string(cfg.misr_epochs) + ", seed=" + std::to_string(cfg.seed) + ")");
  auto progress = [](const std::string& stage, int epoch, int total, double loss) {
    if (epoch == total || epoch % 10 == 0)
      std::fprintf(stderr, "[hsrecon] %s epoch %d/%d mean_loss=%.6g\n", stage.c_str(), epoch,
                   total, loss);
  };
  hsrecon::TrainOutputs outputs = hsrecon::train_all(scenes, cfg, progress);

  hsrecon::save_model_bundle(outputs.bundle, a.out);
  const auto write_log = [&](const char* name, const hsrecon::TrainLog& log) {
    std::ofstream f((fs::path(a.out) / name).string(), std::ios::trunc);
    if (!f) throw hsrecon::DataError(std::string("cannot write ") + name + " under " + a.out);
    f << hsrecon::train_log_csv(log);
  };
  write_log("loss_matching_even.csv", outputs.matching_even_log);
  write_log("loss_matching_odd.csv", outputs.matching_odd_log);
  write_log("loss_inverse_even.csv", outputs.inverse_even_log);
  write_log("loss_inverse_odd.csv", outputs.inverse_odd_log);
  write_log("loss_misr.csv", outputs.misr_log);
  log_line("wrote checkpoints and loss logs to " + a.out);
  return kExitOk;
}

struct InferArgs {
  std::string models, msi, mask, out;
  bool no_misr = false;
};

int run_infer(const InferArgs& a) {
  hsrecon::ModelBundle bundle = hsrecon::load_model_bundle(a.models, /*need_misr=*/!a.no_misr);
  hsrecon::Cube msi = hsrecon::read_cube(a.msi);
  hsrecon::Mask mask;
  if (!a.mask.empty()) {
    mask = hsrecon::read_mask(a.mask);
  } else {
    log_line("no mask given, falling back to an Otsu threshold on the NIR channel");
    mask = hsrecon::otsu_mask(msi);
  }
  hsrecon::Cube cube = hsrecon::infer(bundle, msi, mask, /*use_misr=*/!a.no_misr);
  hsrecon::write_cube(cube, a.out);
  log_line("wrote " + std::to_string(cube.bands) + "-band cube to " + a.out);
  return kExitOk;
}

struct EvalArgs {
  std::string pred, truth, masks, out;
};

int run_evaluate(const EvalArgs& a) {
  std::vector<std::string> names;
  for (const auto& entry : fs::directory_iterator(a.pred))
    if (entry.is_regular_file() && entry.path().extension() == ".hsc")
      names.push_back(entry.path().filename().string());
  std::sort(names.begin(), names.end());
  if (names.empty()) throw hsrecon::DataError("no .hsc predictions in " + a.pred);

  std::vector<hsrecon::Cube> preds, truths;
  std::vector<hsrecon::Mask> masks;
  for (const auto& name : names) {
    const fs::path truth_path = fs::path(a.truth) / name;
    if (!fs::exists(truth_path))
      throw hsrecon::DataError("unpaired prediction " + name + ": no ground truth at " +
                               truth_path.string());
    // masks are named like the prediction with a _mask suffix
    std::string mask_name = name;
    if (auto pos = mask_name.rfind("_hsi"); pos != std::string::npos)
      mask_name.replace(pos, 4, "_mask");
    fs::path mask_path = fs::path(a.masks) / mask_name;
    if (!fs::exists(mask_path)) mask_path = fs::path(a.masks) / name;
    if (!fs::exists(mask_path))
      throw hsrecon::DataError("unpaired prediction " + name + ": no mask in " + a.masks);
    preds.push_back(hsrecon::read_cube((fs::path(a.pred) / name).string()));
    truths.push_back(hsrecon::read_cube(truth_path.string()));
    masks.push_back(hsrecon::read_mask(mask_path.string()));
  }

  hsrecon::EvalReport report = hsrecon::evaluate(preds, truths, masks, names);
  std::ofstream f(a.out, std::ios::trunc);
  if (!f) throw hsrecon::DataError("cannot write report: " + a.out);
  f << hsrecon::report_csv(report);
  std::printf("SAM: %s (%zu images)\n",
              hsrecon::format_mean_std(report.mean, report.stddev).c_str(),
              report.images.size());
  return kExitOk;
}

struct InspectArgs {
  int J = 2, L = 4, size = 64;
  std::string out;
};

int run_inspect(const InspectArgs& a) {
  hsrecon::FilterBank bank = hsrecon::build_filter_bank(
      a.J, a.L, static_cast<std::size_t>(a.size), static_cast<std::size_t>(a.size));
  fs::create_directories(a.out);
  const auto write_filter = [&](const std::string& name, const std::vector<double>& hat) {
    hsrecon::Cube cube = hsrecon::Cube::make(a.size, a.size, 2, {0.0, 1.0}, 0.0, 1e9);
    auto spatial = hsrecon::filter_spatial_magnitude(bank, hat);
    std::copy(spatial.begin(), spatial.end(), cube.band(0).begin());
    for (std::size_t i = 0; i < hat.size(); ++i) cube.band(1)[i] = std::abs(hat[i]);
    hsrecon::write_cube(cube, (fs::path(a.out) / (name + ".hsc")).string());
  };
  for (int j = 0; j < a.J; ++j)
    for (int q = 0; q < a.L; ++q)
      write_filter("filter_psi_j" + std::to_string(j) + "_q" + std::to_string(q),
                   bank.psi(j, q));
  write_filter("filter_phi", bank.phi_hat);

  hsrecon::FrameBounds lp = hsrecon::littlewood_paley(bank);
  std::printf("filters: %d bandpass + 1 lowpass\n", a.J * a.L);
  std::printf("littlewood_paley_min=%.12g\nlittlewood_paley_max=%.12g\n", lp.min, lp.max);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multispectral-to-hyperspectral reconstruction via scattering features"};
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads, "cap worker threads (0 = hardware)");

  GenArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-synthetic", "generate paired synthetic scenes");
  gen_cmd->add_option("--out", gen.out, "output directory")->required();
  gen_cmd->add_option("--count", gen.count, "number of scenes")->check(CLI::PositiveNumber);
  gen_cmd->add_option("--size", gen.size, "square scene size (divisible by 4)");
  gen_cmd->add_option("--seed", gen.seed, "dataset seed");
  gen_cmd->add_option("--offset", gen.offset, "scene index offset (same seed, disjoint scenes)");
  gen_cmd->add_option("--noise", gen.noise, "per-pixel noise amplitude");

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "train all pipeline stages");
  train_cmd->add_option("--data", tr.data, "dataset directory (with manifest.json)")->required();
  train_cmd->add_option("--out", tr.out, "output directory for checkpoints")->required();
  train_cmd->add_option("--misr-epochs", tr.misr_epochs, "MISR training epochs")
      ->check(CLI::IsMember({30, 60}));
  auto* seed_opt = train_cmd->add_option("--seed", tr.seed, "training seed");
  train_cmd->add_option("--config", tr.config_file, "JSON config file");
  train_cmd->add_option("--matching-epochs", tr.matching_epochs, "override matching epochs");
  train_cmd->add_option("--inverse-epochs", tr.inverse_epochs, "override inverse epochs");
  train_cmd->add_option("--J", tr.J, "scattering scales override");
  train_cmd->add_option("--L", tr.L, "scattering orientations override");

  InferArgs inf;
  auto* infer_cmd = app.add_subcommand("infer", "reconstruct a 61-band cube from a capture");
  infer_cmd->add_option("--models", inf.models, "checkpoint directory")->required();
  infer_cmd->add_option("--msi", inf.msi, "input 4-channel capture cube")->required();
  infer_cmd->add_option("--mask", inf.mask, "skin mask cube (omit for Otsu fallback)");
  infer_cmd->add_option("--out", inf.out, "output cube path")->required();
  infer_cmd->add_flag("--no-misr", inf.no_misr, "skip MISR refinement (Model 1)");

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("evaluate", "SAM evaluation of predictions");
  eval_cmd->add_option("--pred", ev.pred, "directory of predicted cubes")->required();
  eval_cmd->add_option("--truth", ev.truth, "directory of ground-truth cubes")->required();
  eval_cmd->add_option("--masks", ev.masks, "directory of skin masks")->required();
  eval_cmd->add_option("--out", ev.out, "report CSV path")->required();

  InspectArgs ins;
  auto* inspect_cmd = app.add_subcommand("inspect-filters", "dump the filter bank");
  inspect_cmd->add_option("--J", ins.J, "scattering scales");
  inspect_cmd->add_option("--L", ins.L, "orientations");
  inspect_cmd->add_option("--size", ins.size, "grid size");
  inspect_cmd->add_option("--out", ins.out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }
  tr.seed_set = seed_opt->count() > 0;

  hsrecon::set_worker_threads(threads);
  hsrecon::set_blas_threads(threads > 0 ? threads : 1);

  try {
    if (gen_cmd->parsed()) return run_gen(gen);
    if (train_cmd->parsed()) return run_train(tr);
    if (infer_cmd->parsed()) return run_infer(inf);
    if (eval_cmd->parsed()) return run_evaluate(ev);
    if (inspect_cmd->parsed()) return run_inspect(ins);
  } catch (const hsrecon::NumericError& e) {
    std::fprintf(stderr, "hsrecon: numerical failure: %s\n", e.what());
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "hsrecon: error: %s\n", e.what());
    return kExitData;
  }
  return kExitUsage;
}
