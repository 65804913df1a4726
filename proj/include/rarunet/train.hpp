#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "rarunet/arch.hpp"
#include "rarunet/mask.hpp"
#include "rarunet/params.hpp"

namespace rarunet {

struct TrainConfig {
  int epochs = 50;
  int batch_size = 8;
  double learning_rate = 1e-5;
  /// Noise level and corrupted proportion assumed by the exclusion schedule.
  double alpha = 1.0;
  double beta = 0.0;
  double h1 = 0.1;
  double h2 = 0.5;
  bool adl_enabled = false;
  bool augment = false;
  std::uint64_t seed = 0;
  OptimizerConfig optimizer{};

  void validate() const;
};

/// The three branches of the exclusion schedule evaluated at real-valued t,
/// before flooring: {early plateau, linear ramp, late plateau}.
std::array<double, 3> schedule_branches(double t, double alpha, double beta, int x, int y,
                                        double h1, double h2);

/// Value of the branch selected for t, before flooring.
double schedule_raw(double t, double alpha, double beta, int x, int y, double h1, double h2);

/// Number of samples to exclude in epoch t (1-based) out of y, with x epochs.
int schedule_n(int t, double alpha, double beta, int x, int y, double h1 = 0.1, double h2 = 0.5);

/// One square training example. Pixels are intensities scaled to [0, 1].
struct Sample {
  int id = 0;
  int size = 0;
  std::vector<float> image;
  BinaryMask mask;
};

struct LedgerRow {
  int epoch;
  int sample_id;
  double loss;
  bool excluded;
};

/// Per-epoch, per-sample losses. Rows are kept ordered by (epoch, sample id).
class LossLedger {
 public:
  explicit LossLedger(int total_samples = 0) : total_(total_samples) {}

  int total_samples() const { return total_; }
  void record(int epoch, int sample_id, double loss, bool excluded);
  const std::vector<LedgerRow>& rows() const { return rows_; }
  /// Losses of one epoch keyed by sample id.
  std::map<int, double> losses(int epoch) const;
  std::size_t excluded_count(int epoch) const;

  /// CSV with header "epoch,sample_id,loss,excluded", losses to 6 decimals.
  std::string to_csv() const;

 private:
  int total_;
  std::vector<LedgerRow> rows_;
};

/// The n highest-loss sample ids of epoch t - 1, ties by ascending id,
/// returned in ascending id order. Epoch 1 has no history and must have n = 0.
std::vector<int> rank_and_exclude(const LossLedger& ledger, int t, int n);

/// Quarter turns of a square row-major plane; +1 is a clockwise 90 degree turn.
template <typename P>
std::vector<P> rotate_quarter(const std::vector<P>& plane, int size, int quarter_turns);

BinaryMask rotate_quarter(const BinaryMask& mask, int quarter_turns);

/// The sample and its +90 and -90 degree rotations, image and mask turned together.
std::vector<Sample> augment_pair(const Sample& sample);

/// Soft Dice loss of a 1 x 1 x H x W prediction against a mask, as a
/// one-element tensor (smoothing 1).
template <typename T>
Tensor<T> dice_loss(Tape<T>& tape, const Tensor<T>& pred, const BinaryMask& gt);

struct SampleLoss {
  int sample_id;
  double loss;
  bool excluded;
};

/// One pass: non-excluded samples are shuffled, batched, and trained on;
/// excluded samples get a forward-only loss. Losses are appended to the
/// ledger in sample id order and returned in the same order.
std::vector<SampleLoss> train_epoch(Model<float>& model, const std::vector<Sample>& data,
                                    const std::vector<int>& excluded, const TrainConfig& config,
                                    int epoch, LossLedger& ledger);

/// Mean soft Dice (1 - loss) over a sample set.
double soft_dice(const Model<float>& model, const std::vector<Sample>& data, int batch_size = 8);

/// Thresholded (p > 0.5) prediction for each sample.
std::vector<BinaryMask> predict_masks(const Model<float>& model, const std::vector<Sample>& data,
                                      int batch_size = 8);

struct EpochSummary {
  int epoch;
  int excluded;
  double mean_train_loss;
  double val_dice;
};

struct TrainResult {
  Model<float> best;
  int best_epoch = 0;
  double best_val_dice = 0.0;
  LossLedger ledger;
  std::vector<EpochSummary> epochs;
};

/// Full run: exclusion schedule, per-epoch training, best-validation model.
TrainResult train(const TrainConfig& config, const ArchConfig& arch,
                  const std::vector<Sample>& train_set, const std::vector<Sample>& val_set,
                  const std::function<void(const EpochSummary&)>& on_epoch = {});

}  // namespace rarunet
