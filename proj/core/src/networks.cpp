#include "hsrecon/networks.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>

#include <nlohmann/json.hpp>

namespace hsrecon {

namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint writer assumes a little-endian host");

Tensor uniform_init(Shape shape, std::size_t fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::vector<double> data(shape_numel(shape));
  for (double& v : data) v = rng.next_uniform(-bound, bound);
  return Tensor::from(std::move(data), std::move(shape), /*requires_grad=*/true);
}

Linear make_linear(int d_in, int d_out, Rng& rng) {
  Linear l;
  l.weight = uniform_init({static_cast<std::size_t>(d_in), static_cast<std::size_t>(d_out)},
                          static_cast<std::size_t>(d_in), rng);
  l.bias = Tensor::zeros({static_cast<std::size_t>(d_out)}, /*requires_grad=*/true);
  return l;
}

Conv2dLayer make_conv(int c_in, int c_out, int k, Rng& rng) {
  Conv2dLayer c;
  const std::size_t fan_in = static_cast<std::size_t>(c_in) * k * k;
  c.weight = uniform_init({static_cast<std::size_t>(c_out), static_cast<std::size_t>(c_in),
                           static_cast<std::size_t>(k), static_cast<std::size_t>(k)},
                          fan_in, rng);
  c.bias = Tensor::zeros({static_cast<std::size_t>(c_out)}, /*requires_grad=*/true);
  return c;
}

BatchNorm2dLayer make_bn(int channels) {
  BatchNorm2dLayer bn;
  bn.gamma = Tensor::full({static_cast<std::size_t>(channels)}, 1.0, /*requires_grad=*/true);
  bn.beta = Tensor::zeros({static_cast<std::size_t>(channels)}, /*requires_grad=*/true);
  bn.running_mean.assign(channels, 0.0);
  bn.running_var.assign(channels, 1.0);
  return bn;
}

}  // namespace

MatchingNet make_matching_net(int d_in, int d_hidden, int d_out, std::uint64_t seed) {
  Rng rng(seed);
  MatchingNet net;
  net.d_in = d_in;
  net.d_hidden = d_hidden;
  net.d_out = d_out;
  net.l1 = make_linear(d_in, d_hidden, rng);
  net.l2 = make_linear(d_hidden, d_out, rng);
  return net;
}

InverseNet make_inverse_net(int c_in, int c1, int c2, int c_out, int kernel, std::uint64_t seed) {
  Rng rng(seed);
  InverseNet net;
  net.c_in = c_in;
  net.c1 = c1;
  net.c2 = c2;
  net.c_out = c_out;
  net.kernel = kernel;
  net.conv1 = make_conv(c_in, c1, kernel, rng);
  net.bn1 = make_bn(c1);
  net.conv2 = make_conv(c1, c2, kernel, rng);
  net.bn2 = make_bn(c2);
  net.head = make_conv(c2, c_out, kernel, rng);
  net.bn_head = make_bn(c_out);
  return net;
}

MisrNet make_misr_net(int bands, int d_hidden, std::uint64_t seed) {
  MisrNet net;
  net.bands = bands;
  net.d_hidden = d_hidden;
  net.core = make_matching_net(bands, d_hidden, bands, seed);
  return net;
}

std::vector<Tensor*> parameters(MatchingNet& net) {
  return {&net.l1.weight, &net.l1.bias, &net.l2.weight, &net.l2.bias};
}

std::vector<Tensor*> parameters(InverseNet& net) {
  return {&net.conv1.weight, &net.conv1.bias, &net.bn1.gamma, &net.bn1.beta,
          &net.conv2.weight, &net.conv2.bias, &net.bn2.gamma, &net.bn2.beta,
          &net.head.weight,  &net.head.bias,  &net.bn_head.gamma, &net.bn_head.beta};
}

std::vector<Tensor*> parameters(MisrNet& net) { return parameters(net.core); }

Tensor matching_apply(const MatchingNet& net, const Tensor& rows) {
  if (rows.ndim() != 2 || rows.dim(1) != static_cast<std::size_t>(net.d_in))
    throw ShapeError("matching_apply: expected [n," + std::to_string(net.d_in) + "], got " +
                     shape_str(rows.shape()));
  Tensor h = relu(add_row_vector(matmul(rows, net.l1.weight), net.l1.bias));
  return tanh(add_row_vector(matmul(h, net.l2.weight), net.l2.bias));
}

ScatteringCoeffs matching_forward(const MatchingNet& net, const ScatteringCoeffs& coeffs,
                                  std::size_t out_channels) {
  const std::size_t features = coeffs.total_maps();
  if (features != static_cast<std::size_t>(net.d_in))
    throw ShapeError("matching_forward: coefficient stack has " + std::to_string(features) +
                     " maps, network expects " + std::to_string(net.d_in));
  if (out_channels * coeffs.maps_per_channel() != static_cast<std::size_t>(net.d_out))
    throw ShapeError("matching_forward: network output width " + std::to_string(net.d_out) +
                     " is not " + std::to_string(out_channels) + " channels of " +
                     std::to_string(coeffs.maps_per_channel()) + " paths");

  const std::size_t pixels = coeffs.map_size();
  std::vector<double> rows(pixels * features);
  for (std::size_t f = 0; f < features; ++f)
    for (std::size_t p = 0; p < pixels; ++p)
      rows[p * features + f] = coeffs.maps[f * pixels + p];

  Tensor out = matching_apply(net, Tensor::from(std::move(rows), {pixels, features}));

  ScatteringCoeffs result;
  result.J = coeffs.J;
  result.L = coeffs.L;
  result.map_h = coeffs.map_h;
  result.map_w = coeffs.map_w;
  result.source_channels = out_channels;
  result.paths = coeffs.paths;
  result.maps.resize(static_cast<std::size_t>(net.d_out) * pixels);
  auto ov = out.data();
  for (std::size_t f = 0; f < static_cast<std::size_t>(net.d_out); ++f)
    for (std::size_t p = 0; p < pixels; ++p) result.maps[f * pixels + p] = ov[p * net.d_out + f];
  return result;
}

Tensor inverse_apply(InverseNet& net, const Tensor& x, bool training) {
  if (x.ndim() != 4 || x.dim(1) != static_cast<std::size_t>(net.c_in))
    throw ShapeError("inverse_apply: expected [n," + std::to_string(net.c_in) +
                     ",h,w], got " + shape_str(x.shape()));
  Tensor y = upsample_nearest2(x);
  y = conv2d_same(y, net.conv1.weight, net.conv1.bias);
  y = batchnorm2d(y, net.bn1.gamma, net.bn1.beta, net.bn1.running_mean, net.bn1.running_var,
                  training, net.bn1.momentum, net.bn1.eps);
  y = relu(y);
  y = upsample_nearest2(y);
  y = conv2d_same(y, net.conv2.weight, net.conv2.bias);
  y = batchnorm2d(y, net.bn2.gamma, net.bn2.beta, net.bn2.running_mean, net.bn2.running_var,
                  training, net.bn2.momentum, net.bn2.eps);
  y = relu(y);
  y = conv2d_same(y, net.head.weight, net.head.bias);
  y = batchnorm2d(y, net.bn_head.gamma, net.bn_head.beta, net.bn_head.running_mean,
                  net.bn_head.running_var, training, net.bn_head.momentum, net.bn_head.eps);
  return tanh(y);
}

std::vector<double> inverse_forward(InverseNet& net, const ScatteringCoeffs& coeffs) {
  const std::size_t features = coeffs.total_maps();
  if (features != static_cast<std::size_t>(net.c_in))
    throw ShapeError("inverse_forward: stack has " + std::to_string(features) +
                     " maps, network expects " + std::to_string(net.c_in));
  if (net.train_h > 0 && (coeffs.map_h != static_cast<std::size_t>(net.train_h) ||
                          coeffs.map_w != static_cast<std::size_t>(net.train_w)))
    std::fprintf(stderr,
                 "[hsrecon] note: inverse network trained on %dx%d maps applied to %zux%zu maps\n",
                 net.train_h, net.train_w, coeffs.map_h, coeffs.map_w);

  Tensor x = Tensor::from(coeffs.maps, {1, features, coeffs.map_h, coeffs.map_w});
  Tensor y = inverse_apply(net, x, /*training=*/false);
  return {y.data().begin(), y.data().end()};
}

Tensor misr_apply(const MisrNet& net, const Tensor& spectra) {
  if (spectra.ndim() != 2 || spectra.dim(1) != static_cast<std::size_t>(net.bands))
    throw ShapeError("misr_apply: expected [n," + std::to_string(net.bands) + "], got " +
                     shape_str(spectra.shape()));
  return matching_apply(net.core, spectra);
}

std::vector<double> misr_forward(const MisrNet& net, const std::vector<double>& spectra,
                                 std::size_t rows) {
  if (rows == 0) return {};
  if (spectra.size() != rows * static_cast<std::size_t>(net.bands))
    throw ShapeError("misr_forward: spectra buffer does not match row count");
  Tensor out = misr_apply(net, Tensor::from(spectra, {rows, static_cast<std::size_t>(net.bands)}));
  return {out.data().begin(), out.data().end()};
}

// ---------------------------------------------------------------------------
// checkpoints

namespace {

using nlohmann::ordered_json;

std::vector<const std::vector<double>*> buffer_list(const InverseNet& net) {
  return {&net.bn1.running_mean, &net.bn1.running_var, &net.bn2.running_mean,
          &net.bn2.running_var, &net.bn_head.running_mean, &net.bn_head.running_var};
}

void write_payload(std::ofstream& out, const std::vector<Tensor*>& params,
                   const std::vector<const std::vector<double>*>& buffers) {
  for (Tensor* p : params) {
    auto d = p->data();
    out.write(reinterpret_cast<const char*>(d.data()),
              static_cast<std::streamsize>(d.size() * sizeof(double)));
  }
  for (const auto* b : buffers)
    out.write(reinterpret_cast<const char*>(b->data()),
              static_cast<std::streamsize>(b->size() * sizeof(double)));
}

void save_impl(const std::string& path, const ordered_json& header,
               const std::vector<Tensor*>& params,
               const std::vector<const std::vector<double>*>& buffers) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open checkpoint for writing: " + path);
  const std::string hdr = header.dump();
  out.write(hdr.data(), static_cast<std::streamsize>(hdr.size()));
  out.put('\n');
  write_payload(out, params, buffers);
  if (!out) throw DataError("short checkpoint write: " + path);
}

ordered_json base_header(const char* kind, std::uint64_t seed, int epoch,
                         const std::vector<Tensor*>& params,
                         const std::vector<const std::vector<double>*>& buffers) {
  std::size_t param_count = 0, buffer_count = 0;
  for (Tensor* p : params) param_count += p->numel();
  for (const auto* b : buffers) buffer_count += b->size();
  ordered_json j;
  j["format"] = "hsrec-ckpt-1";
  j["kind"] = kind;
  j["seed"] = seed;
  j["epoch"] = epoch;
  j["param_count"] = param_count;
  j["buffer_count"] = buffer_count;
  return j;
}

struct Loaded {
  ordered_json header;
  std::vector<double> payload;
};

Loaded load_impl(const std::string& path, const std::string& expected_kind) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path);
  std::string hdr;
  if (!std::getline(in, hdr)) throw DataError("missing checkpoint header: " + path);
  Loaded l;
  try {
    l.header = ordered_json::parse(hdr);
  } catch (const std::exception& e) {
    throw DataError("unparseable checkpoint header in " + path + ": " + e.what());
  }
  if (l.header.value("format", "") != "hsrec-ckpt-1")
    throw DataError("unknown checkpoint format in " + path);
  if (l.header.value("kind", "") != expected_kind)
    throw DataError("checkpoint " + path + " holds a '" + l.header.value("kind", "?") +
                    "' network, expected '" + expected_kind + "'");
  const std::size_t total = l.header.value("param_count", std::size_t{0}) +
                            l.header.value("buffer_count", std::size_t{0});
  l.payload.resize(total);
  in.read(reinterpret_cast<char*>(l.payload.data()),
          static_cast<std::streamsize>(total * sizeof(double)));
  if (static_cast<std::size_t>(in.gcount()) != total * sizeof(double))
    throw DataError("truncated checkpoint payload: " + path);
  return l;
}

void fill_params(const std::vector<double>& payload, const std::vector<Tensor*>& params,
                 const std::vector<std::vector<double>*>& buffers, const std::string& path) {
  std::size_t off = 0;
  for (Tensor* p : params) {
    auto d = p->data();
    if (off + d.size() > payload.size()) throw DataError("checkpoint payload too short: " + path);
    std::copy(payload.begin() + off, payload.begin() + off + d.size(), d.begin());
    off += d.size();
  }
  for (auto* b : buffers) {
    if (off + b->size() > payload.size()) throw DataError("checkpoint payload too short: " + path);
    std::copy(payload.begin() + off, payload.begin() + off + b->size(), b->begin());
    off += b->size();
  }
  if (off != payload.size()) throw DataError("checkpoint payload size disagreement: " + path);
}

void take_meta(const ordered_json& header, CheckpointMeta* meta) {
  if (!meta) return;
  meta->kind = header.value("kind", "");
  meta->seed = header.value("seed", std::uint64_t{0});
  meta->epoch = header.value("epoch", 0);
}

}  // namespace

void save_checkpoint(const MatchingNet& net, const std::string& path, std::uint64_t seed,
                     int epoch) {
  auto& mut = const_cast<MatchingNet&>(net);
  auto params = parameters(mut);
  auto header = base_header("matching", seed, epoch, params, {});
  header["d_in"] = net.d_in;
  header["d_hidden"] = net.d_hidden;
  header["d_out"] = net.d_out;
  save_impl(path, header, params, {});
}

void save_checkpoint(const InverseNet& net, const std::string& path, std::uint64_t seed,
                     int epoch) {
  auto& mut = const_cast<InverseNet&>(net);
  auto params = parameters(mut);
  auto buffers = buffer_list(net);
  auto header = base_header("inverse", seed, epoch, params, buffers);
  header["c_in"] = net.c_in;
  header["c1"] = net.c1;
  header["c2"] = net.c2;
  header["c_out"] = net.c_out;
  header["kernel"] = net.kernel;
  header["train_h"] = net.train_h;
  header["train_w"] = net.train_w;
  save_impl(path, header, params, buffers);
}

void save_checkpoint(const MisrNet& net, const std::string& path, std::uint64_t seed, int epoch) {
  auto& mut = const_cast<MisrNet&>(net);
  auto params = parameters(mut);
  auto header = base_header("misr", seed, epoch, params, {});
  header["bands"] = net.bands;
  header["d_hidden"] = net.d_hidden;
  save_impl(path, header, params, {});
}

MatchingNet load_matching_checkpoint(const std::string& path, CheckpointMeta* meta) {
  Loaded l = load_impl(path, "matching");
  MatchingNet net = make_matching_net(l.header.at("d_in").get<int>(),
                                      l.header.at("d_hidden").get<int>(),
                                      l.header.at("d_out").get<int>(), 0);
  fill_params(l.payload, parameters(net), {}, path);
  take_meta(l.header, meta);
  return net;
}

InverseNet load_inverse_checkpoint(const std::string& path, CheckpointMeta* meta) {
  Loaded l = load_impl(path, "inverse");
  InverseNet net = make_inverse_net(l.header.at("c_in").get<int>(), l.header.at("c1").get<int>(),
                                    l.header.at("c2").get<int>(), l.header.at("c_out").get<int>(),
                                    l.header.at("kernel").get<int>(), 0);
  net.train_h = l.header.value("train_h", 0);
  net.train_w = l.header.value("train_w", 0);
  fill_params(l.payload, parameters(net),
              {&net.bn1.running_mean, &net.bn1.running_var, &net.bn2.running_mean,
               &net.bn2.running_var, &net.bn_head.running_mean, &net.bn_head.running_var},
              path);
  take_meta(l.header, meta);
  return net;
}

MisrNet load_misr_checkpoint(const std::string& path, CheckpointMeta* meta) {
  Loaded l = load_impl(path, "misr");
  MisrNet net = make_misr_net(l.header.at("bands").get<int>(),
                              l.header.at("d_hidden").get<int>(), 0);
  fill_params(l.payload, parameters(net), {}, path);
  take_meta(l.header, meta);
  return net;
}

}  // namespace hsrecon
