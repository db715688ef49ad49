#include "hsrecon/cube.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

namespace hsrecon {

namespace {

using ordered_json = nlohmann::ordered_json;

static_assert(std::endian::native == std::endian::little,
              "cube and checkpoint writers assume a little-endian host");

constexpr char kMagic[4] = {'H', 'S', 'C', '1'};

}  // namespace

Cube Cube::make(int h, int w, int bands, std::vector<double> wavelengths, double range_lo,
                double range_hi) {
  if (h <= 0 || w <= 0 || bands <= 0)
    throw DataError("cube dimensions must be positive");
  if (wavelengths.size() != static_cast<std::size_t>(bands))
    throw DataError("wavelength list length " + std::to_string(wavelengths.size()) +
                    " does not match band count " + std::to_string(bands));
  Cube c;
  c.h = h;
  c.w = w;
  c.bands = bands;
  c.wavelengths = std::move(wavelengths);
  c.range_lo = range_lo;
  c.range_hi = range_hi;
  c.values.assign(static_cast<std::size_t>(h) * w * bands, 0.0);
  return c;
}

std::vector<double> Cube::spectrum(int y, int x) const {
  std::vector<double> s(bands);
  for (int b = 0; b < bands; ++b) s[b] = at(b, y, x);
  return s;
}

std::vector<double> hsi_wavelengths() {
  std::vector<double> w(kHsiBands);
  for (int b = 0; b < kHsiBands; ++b) w[b] = kHsiStartNm + kHsiStepNm * b;
  return w;
}

bool is_hsi_layout(const Cube& cube) {
  if (cube.bands != kHsiBands) return false;
  for (int b = 0; b < kHsiBands; ++b)
    if (cube.wavelengths[b] != kHsiStartNm + kHsiStepNm * b) return false;
  return true;
}

void require_hsi_layout(const Cube& cube, const std::string& what) {
  if (!is_hsi_layout(cube))
    throw DataError(what + ": expected a 61-band 400..1000 nm cube, got " +
                    std::to_string(cube.bands) + " bands");
}

void write_cube(const Cube& cube, const std::string& path) {
  if (cube.values.size() != cube.plane_size() * cube.bands)
    throw DataError("cube value buffer does not match dimensions");

  ordered_json header;
  header["h"] = cube.h;
  header["w"] = cube.w;
  header["bands"] = cube.bands;
  header["wavelengths"] = cube.wavelengths;
  header["range"] = {cube.range_lo, cube.range_hi};
  header["meta"] = {{"writer", "hsrecon"}, {"version", 1}};
  const std::string hdr = header.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open for writing: " + path);
  out.write(kMagic, 4);
  const std::uint32_t hlen = static_cast<std::uint32_t>(hdr.size());
  out.write(reinterpret_cast<const char*>(&hlen), 4);
  out.write(hdr.data(), static_cast<std::streamsize>(hdr.size()));

  std::vector<float> payload(cube.values.size());
  for (std::size_t i = 0; i < payload.size(); ++i)
    payload[i] = static_cast<float>(cube.values[i]);
  out.write(reinterpret_cast<const char*>(payload.data()),
            static_cast<std::streamsize>(payload.size() * sizeof(float)));
  if (!out) throw DataError("short write: " + path);
}

Cube read_cube(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open: " + path);

  char magic[4];
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, kMagic, 4) != 0)
    throw DataError("bad magic (not an HSC1 cube): " + path);

  std::uint32_t hlen = 0;
  in.read(reinterpret_cast<char*>(&hlen), 4);
  if (in.gcount() != 4) throw DataError("truncated header length: " + path);
  std::string hdr(hlen, '\0');
  in.read(hdr.data(), hlen);
  if (static_cast<std::uint32_t>(in.gcount()) != hlen)
    throw DataError("truncated header: " + path);

  ordered_json header;
  try {
    header = ordered_json::parse(hdr);
  } catch (const std::exception& e) {
    throw DataError("unparseable header in " + path + ": " + e.what());
  }

  Cube cube;
  try {
    cube.h = header.at("h").get<int>();
    cube.w = header.at("w").get<int>();
    cube.bands = header.at("bands").get<int>();
    cube.wavelengths = header.at("wavelengths").get<std::vector<double>>();
    cube.range_lo = header.at("range").at(0).get<double>();
    cube.range_hi = header.at("range").at(1).get<double>();
  } catch (const std::exception& e) {
    throw DataError("invalid header fields in " + path + ": " + e.what());
  }
  if (cube.h <= 0 || cube.w <= 0 || cube.bands <= 0 ||
      cube.wavelengths.size() != static_cast<std::size_t>(cube.bands))
    throw DataError("inconsistent header dimensions in " + path);

  const std::size_t count = cube.plane_size() * cube.bands;
  std::vector<float> payload(count);
  in.read(reinterpret_cast<char*>(payload.data()),
          static_cast<std::streamsize>(count * sizeof(float)));
  if (static_cast<std::size_t>(in.gcount()) != count * sizeof(float))
    throw DataError("truncated payload: " + path);
  // anything left over means the header disagrees with the payload
  in.peek();
  if (!in.eof()) throw DataError("header/payload size disagreement: " + path);

  cube.values.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    const double v = payload[i];
    if (std::isnan(v)) throw DataError("non-finite value in payload: " + path);
    cube.values[i] = std::clamp(v, cube.range_lo, cube.range_hi);
  }
  return cube;
}

std::size_t Mask::count() const {
  std::size_t n = 0;
  for (auto v : on) n += v != 0;
  return n;
}

Mask mask_from_cube(const Cube& cube) {
  if (cube.bands != 1) throw DataError("mask cube must have exactly 1 band");
  Mask m;
  m.h = cube.h;
  m.w = cube.w;
  m.on.resize(cube.plane_size());
  for (std::size_t i = 0; i < m.on.size(); ++i) m.on[i] = cube.values[i] > 0.5 ? 1 : 0;
  return m;
}

Cube cube_from_mask(const Mask& mask) {
  Cube c = Cube::make(mask.h, mask.w, 1, {0.0});
  for (std::size_t i = 0; i < mask.on.size(); ++i) c.values[i] = mask.on[i] ? 1.0 : 0.0;
  return c;
}

Mask read_mask(const std::string& path) { return mask_from_cube(read_cube(path)); }

void write_mask(const Mask& mask, const std::string& path) {
  write_cube(cube_from_mask(mask), path);
}

}  // namespace hsrecon
