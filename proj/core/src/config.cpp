#include "hsrecon/config.hpp"

#include <fstream>

#include <nlohmann/json.hpp>

namespace hsrecon {

PipelineConfig default_config() { return PipelineConfig{}; }

namespace {

using nlohmann::ordered_json;

}  // namespace

std::string config_to_json(const PipelineConfig& cfg) {
  ordered_json j;
  j["J"] = cfg.J;
  j["L"] = cfg.L;
  j["morlet_sigma0"] = cfg.morlet.sigma0;
  j["morlet_xi0"] = cfg.morlet.xi0;
  j["morlet_slant_numerator"] = cfg.morlet.slant_numerator;
  j["matching_hidden"] = cfg.matching_hidden;
  j["misr_hidden"] = cfg.misr_hidden;
  j["inverse_c1"] = cfg.inverse_c1;
  j["inverse_c2"] = cfg.inverse_c2;
  j["conv_kernel"] = cfg.conv_kernel;
  j["lr"] = cfg.lr;
  j["batch_size"] = cfg.batch_size;
  j["matching_epochs"] = cfg.matching_epochs;
  j["inverse_epochs"] = cfg.inverse_epochs;
  j["misr_epochs"] = cfg.misr_epochs;
  j["srf_centers_nm"] = cfg.srf.centers_nm;
  j["srf_sigma_nm"] = cfg.srf.sigma_nm;
  j["seed"] = cfg.seed;
  return j.dump(2) + "\n";
}

PipelineConfig config_from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config: " + path);
  ordered_json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw DataError("unparseable config " + path + ": " + e.what());
  }

  PipelineConfig cfg;
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& k = it.key();
    try {
      if (k == "J") cfg.J = it->get<int>();
      else if (k == "L") cfg.L = it->get<int>();
      else if (k == "morlet_sigma0") cfg.morlet.sigma0 = it->get<double>();
      else if (k == "morlet_xi0") cfg.morlet.xi0 = it->get<double>();
      else if (k == "morlet_slant_numerator") cfg.morlet.slant_numerator = it->get<double>();
      else if (k == "matching_hidden") cfg.matching_hidden = it->get<int>();
      else if (k == "misr_hidden") cfg.misr_hidden = it->get<int>();
      else if (k == "inverse_c1") cfg.inverse_c1 = it->get<int>();
      else if (k == "inverse_c2") cfg.inverse_c2 = it->get<int>();
      else if (k == "conv_kernel") cfg.conv_kernel = it->get<int>();
      else if (k == "lr") cfg.lr = it->get<double>();
      else if (k == "batch_size") cfg.batch_size = it->get<int>();
      else if (k == "matching_epochs") cfg.matching_epochs = it->get<int>();
      else if (k == "inverse_epochs") cfg.inverse_epochs = it->get<int>();
      else if (k == "misr_epochs") cfg.misr_epochs = it->get<int>();
      else if (k == "srf_centers_nm") cfg.srf.centers_nm = it->get<std::array<double, 4>>();
      else if (k == "srf_sigma_nm") cfg.srf.sigma_nm = it->get<double>();
      else if (k == "seed") cfg.seed = it->get<std::uint64_t>();
      else throw DataError("unknown config key '" + k + "' in " + path);
    } catch (const DataError&) {
      throw;
    } catch (const std::exception& e) {
      throw DataError("bad value for config key '" + k + "' in " + path + ": " + e.what());
    }
  }
  return cfg;
}

}  // namespace hsrecon
