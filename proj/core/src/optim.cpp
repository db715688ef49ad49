#include "hsrecon/optim.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

namespace hsrecon {

std::string to_string(Stage s) {
  switch (s) {
    case Stage::Matching: return "matching";
    case Stage::Inverse: return "inverse";
    case Stage::Misr: return "misr";
  }
  return "?";
}

std::string to_string(Parity p) {
  switch (p) {
    case Parity::Even: return "even";
    case Parity::Odd: return "odd";
    case Parity::None: return "none";
  }
  return "?";
}

Tensor apply_loss(LossKind kind, const Tensor& pred, const Tensor& target) {
  return kind == LossKind::L2 ? loss_l2(pred, target) : loss_l1(pred, target);
}

Adam::Adam(std::vector<Tensor*> params, AdamConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (Tensor* p : params_) {
    m_.emplace_back(p->numel(), 0.0);
    v_.emplace_back(p->numel(), 0.0);
  }
}

void Adam::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Tensor* p = params_[k];
    if (!p->has_grad())
      throw Error("adam: parameter " + std::to_string(k) + " has no gradient");
    auto g = p->grad();
    auto x = p->data();
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < x.size(); ++i) {
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      x[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

void Adam::zero_grad() {
  for (Tensor* p : params_) p->zero_grad();
}

TrainConfig default_train_config(Stage stage, Parity parity, int misr_epochs) {
  TrainConfig c;
  c.stage = stage;
  c.parity = parity;
  switch (stage) {
    case Stage::Matching:
      c.epochs = 100;
      c.loss = LossKind::L2;
      break;
    case Stage::Inverse:
      c.epochs = 150;
      c.loss = LossKind::L1;
      break;
    case Stage::Misr:
      c.epochs = misr_epochs;
      c.loss = LossKind::L2;
      break;
  }
  return c;
}

TrainLog train(std::vector<Tensor*> params, std::size_t item_count,
               const std::function<Tensor(std::span<const std::size_t>)>& forward,
               const TrainConfig& config, const EpochCallback& on_epoch) {
  if (item_count == 0) throw DataError("train: empty dataset");
  if (config.batch_size <= 0) throw DataError("train: batch size must be positive");

  Adam adam(params, AdamConfig{.lr = config.lr});
  Rng rng(config.seed);
  std::vector<std::size_t> order(item_count);
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainLog log;
  log.epoch_mean_loss.reserve(static_cast<std::size_t>(std::max(config.epochs, 0)));
  const std::size_t bs = static_cast<std::size_t>(config.batch_size);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    shuffle(order, rng);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < item_count; start += bs) {
      const std::size_t len = std::min(bs, item_count - start);
      adam.zero_grad();
      Tensor loss = forward(std::span<const std::size_t>(order.data() + start, len));
      const double value = loss.item();
      if (!std::isfinite(value))
        throw NumericError("train: non-finite loss at " + to_string(config.stage) + "/" +
                           to_string(config.parity) + " epoch " + std::to_string(epoch + 1));
      loss.backward();
      adam.step();
      loss_sum += value;
      ++batches;
    }
    const double epoch_loss = loss_sum / static_cast<double>(batches);
    log.epoch_mean_loss.push_back(epoch_loss);
    if (on_epoch) on_epoch(epoch + 1, config.epochs, epoch_loss);
  }
  return log;
}

std::string train_log_csv(const TrainLog& log) {
  std::ostringstream os;
  os.precision(17);
  os << "epoch,mean_loss\n";
  for (std::size_t i = 0; i < log.epoch_mean_loss.size(); ++i)
    os << (i + 1) << ',' << log.epoch_mean_loss[i] << '\n';
  return os.str();
}

}  // namespace hsrecon
