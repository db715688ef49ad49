#pragma once

// Adam optimizer, the two training losses, and the epoch-driven loop shared
// by all three training stages.

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "hsrecon/tensor.hpp"

namespace hsrecon {

enum class LossKind { L2, L1 };
enum class Stage { Matching, Inverse, Misr };
enum class Parity { Even, Odd, None };

std::string to_string(Stage s);
std::string to_string(Parity p);

inline Tensor loss_l2(const Tensor& pred, const Tensor& target) { return mse_loss(pred, target); }
inline Tensor loss_l1(const Tensor& pred, const Tensor& target) { return l1_loss(pred, target); }
Tensor apply_loss(LossKind kind, const Tensor& pred, const Tensor& target);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias correction. Moment buffers mirror each parameter; the step
/// counter increases by one per step() call.
class Adam {
 public:
  Adam(std::vector<Tensor*> params, AdamConfig cfg = {});

  /// Applies one update from the gradients currently stored on the
  /// parameters. Throws when a parameter has no populated gradient.
  void step();

  void zero_grad();
  long step_count() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  std::vector<Tensor*> params_;
  AdamConfig cfg_;
  long t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

struct TrainConfig {
  Stage stage = Stage::Matching;
  Parity parity = Parity::None;
  int epochs = 100;
  int batch_size = 4;
  std::uint64_t seed = 0;
  LossKind loss = LossKind::L2;
  double lr = 1e-3;
};

/// Stage defaults: matching 100 epochs / L2, inverse 150 epochs / L1,
/// MISR 30 or 60 epochs / L2; learning rate 0.001 everywhere.
TrainConfig default_train_config(Stage stage, Parity parity = Parity::None,
                                 int misr_epochs = 30);

struct TrainLog {
  std::vector<double> epoch_mean_loss;
};

using EpochCallback = std::function<void(int epoch, int total_epochs, double mean_loss)>;

/// Runs `epochs` passes over `item_count` items in seeded-shuffled batches.
/// `forward` receives the item indices of one batch and returns the scalar
/// loss tensor for it. Throws NumericError on a non-finite loss and
/// DataError on an empty dataset. epochs == 0 leaves parameters untouched.
TrainLog train(std::vector<Tensor*> params, std::size_t item_count,
               const std::function<Tensor(std::span<const std::size_t>)>& forward,
               const TrainConfig& config, const EpochCallback& on_epoch = {});

/// Loss log serialized as "epoch,mean_loss" CSV rows.
std::string train_log_csv(const TrainLog& log);

}  // namespace hsrecon
