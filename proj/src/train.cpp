#include "rarunet/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "rarunet/ops.hpp"
#include "rarunet/rng.hpp"

namespace rarunet {

void TrainConfig::validate() const {
  RARUNET_CHECK(epochs >= 1, ErrorCode::kConfig, "epochs must be >= 1");
  RARUNET_CHECK(batch_size >= 1, ErrorCode::kConfig, "batch_size must be >= 1");
  RARUNET_CHECK(learning_rate > 0.0, ErrorCode::kConfig, "learning_rate must be positive");
  RARUNET_CHECK(alpha >= 0.0 && alpha <= 1.0, ErrorCode::kConfig, "alpha must lie in [0, 1]");
  RARUNET_CHECK(beta >= 0.0 && beta <= 1.0, ErrorCode::kConfig, "beta must lie in [0, 1]");
  RARUNET_CHECK(h1 > 0.0 && h1 < h2 && h2 < 1.0, ErrorCode::kConfig,
                "schedule hyperparameters need 0 < h1 < h2 < 1");
}

std::array<double, 3> schedule_branches(double t, double alpha, double beta, int x, int y,
                                        double h1, double h2) {
  const double k = (1.0 - alpha) * beta;
  return {h2 * k * y, -static_cast<double>(y) / x * t + (h1 + h2) * k * y, h1 * k * y};
}

double schedule_raw(double t, double alpha, double beta, int x, int y, double h1, double h2) {
  const double k = (1.0 - alpha) * beta;
  const auto b = schedule_branches(t, alpha, beta, x, y, h1, h2);
  if (t < h1 * k * x) return b[0];
  if (t <= h2 * k * x) return b[1];
  return b[2];
}

int schedule_n(int t, double alpha, double beta, int x, int y, double h1, double h2) {
  RARUNET_CHECK(x >= 1 && y >= 1, ErrorCode::kInvalidArgument, "schedule_n: x and y must be >= 1");
  RARUNET_CHECK(t >= 1 && t <= x, ErrorCode::kInvalidArgument,
                "schedule_n: epoch " + std::to_string(t) + " outside [1, " + std::to_string(x) + "]");
  RARUNET_CHECK(alpha >= 0.0 && alpha <= 1.0 && beta >= 0.0 && beta <= 1.0,
                ErrorCode::kInvalidArgument, "schedule_n: alpha and beta must lie in [0, 1]");
  if ((1.0 - alpha) * beta == 0.0) return 0;
  // The small offset keeps products such as 0.5 * 0.24 * 900 from flooring
  // one below their exact value.
  const double v = std::floor(schedule_raw(t, alpha, beta, x, y, h1, h2) + 1e-9);
  return static_cast<int>(std::clamp(v, 0.0, static_cast<double>(y - 1)));
}

void LossLedger::record(int epoch, int sample_id, double loss, bool excluded) {
  LedgerRow row{epoch, sample_id, loss, excluded};
  auto key = [](const LedgerRow& r) { return std::pair(r.epoch, r.sample_id); };
  auto pos = std::upper_bound(rows_.begin(), rows_.end(), row,
                              [&](const LedgerRow& a, const LedgerRow& b) { return key(a) < key(b); });
  rows_.insert(pos, row);
}

std::map<int, double> LossLedger::losses(int epoch) const {
  std::map<int, double> out;
  for (const auto& r : rows_) {
    if (r.epoch == epoch) out[r.sample_id] = r.loss;
  }
  return out;
}

std::size_t LossLedger::excluded_count(int epoch) const {
  std::size_t n = 0;
  for (const auto& r : rows_) n += r.epoch == epoch && r.excluded;
  return n;
}

std::string LossLedger::to_csv() const {
  std::string out = "epoch,sample_id,loss,excluded\n";
  char buf[96];
  for (const auto& r : rows_) {
    std::snprintf(buf, sizeof buf, "%d,%d,%.6f,%d\n", r.epoch, r.sample_id, r.loss, r.excluded ? 1 : 0);
    out += buf;
  }
  return out;
}

std::vector<int> rank_and_exclude(const LossLedger& ledger, int t, int n) {
  RARUNET_CHECK(n >= 0, ErrorCode::kInvalidArgument, "rank_and_exclude: n must be >= 0");
  RARUNET_CHECK(n < ledger.total_samples(), ErrorCode::kInvalidArgument,
                "rank_and_exclude: cannot exclude " + std::to_string(n) + " of " +
                    std::to_string(ledger.total_samples()) + " samples");
  if (n == 0) return {};
  RARUNET_CHECK(t >= 2, ErrorCode::kInvalidArgument, "rank_and_exclude: epoch 1 has no loss history");
  const auto previous = ledger.losses(t - 1);
  RARUNET_CHECK(static_cast<int>(previous.size()) == ledger.total_samples(), ErrorCode::kInvalidArgument,
                "rank_and_exclude: epoch " + std::to_string(t - 1) + " has " +
                    std::to_string(previous.size()) + " recorded losses, expected " +
                    std::to_string(ledger.total_samples()));
  std::vector<std::pair<double, int>> ranked;
  for (auto [id, loss] : previous) ranked.emplace_back(loss, id);
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  std::vector<int> out;
  for (int i = 0; i < n; ++i) out.push_back(ranked[i].second);
  std::sort(out.begin(), out.end());
  return out;
}

template <typename P>
std::vector<P> rotate_quarter(const std::vector<P>& plane, int size, int quarter_turns) {
  RARUNET_CHECK(static_cast<std::size_t>(size) * size == plane.size(), ErrorCode::kShapeMismatch,
                "rotate_quarter: plane is not square with side " + std::to_string(size));
  const int turns = ((quarter_turns % 4) + 4) % 4;
  std::vector<P> cur = plane, next(plane.size());
  for (int r = 0; r < turns; ++r) {
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        next[static_cast<std::size_t>(y) * size + x] = cur[static_cast<std::size_t>(size - 1 - x) * size + y];
      }
    }
    std::swap(cur, next);
  }
  return cur;
}

template std::vector<float> rotate_quarter(const std::vector<float>&, int, int);
template std::vector<std::uint8_t> rotate_quarter(const std::vector<std::uint8_t>&, int, int);

BinaryMask rotate_quarter(const BinaryMask& mask, int quarter_turns) {
  RARUNET_CHECK(mask.height == mask.width, ErrorCode::kShapeMismatch,
                "rotate_quarter: mask must be square");
  BinaryMask out = mask;
  out.bits = rotate_quarter(mask.bits, mask.width, quarter_turns);
  return out;
}

namespace {

void check_square(const Sample& s) {
  RARUNET_CHECK(s.mask.height == s.mask.width && s.mask.height == s.size &&
                    s.image.size() == s.mask.size(),
                ErrorCode::kShapeMismatch,
                "sample " + std::to_string(s.id) + " is not a square image/mask pair");
}

Sample rotated(const Sample& s, int turns) {
  Sample out;
  out.id = s.id;
  out.size = s.size;
  out.image = rotate_quarter(s.image, s.size, turns);
  out.mask = rotate_quarter(s.mask, turns);
  return out;
}

struct Batch {
  Tensor<float> images;
  Tensor<float> targets;
};

Batch make_batch(const std::vector<const Sample*>& items) {
  const int n = static_cast<int>(items.size());
  const int size = items.front()->size;
  Batch b{Tensor<float>::zeros({n, 1, size, size}), Tensor<float>::zeros({n, 1, size, size})};
  const std::size_t plane = static_cast<std::size_t>(size) * size;
  auto xi = b.images.data();
  auto ti = b.targets.data();
  for (int i = 0; i < n; ++i) {
    RARUNET_CHECK(items[i]->size == size, ErrorCode::kShapeMismatch,
                  "batch mixes image sizes " + std::to_string(size) + " and " +
                      std::to_string(items[i]->size));
    std::copy(items[i]->image.begin(), items[i]->image.end(), xi.begin() + i * plane);
    for (std::size_t p = 0; p < plane; ++p) ti[i * plane + p] = items[i]->mask.bits[p];
  }
  return b;
}

/// Per-sample losses without recording, in the order of `items`.
std::vector<double> forward_losses(const Model<float>& model, const std::vector<const Sample*>& items,
                                   int batch_size) {
  std::vector<double> out;
  for (std::size_t start = 0; start < items.size(); start += batch_size) {
    const std::vector<const Sample*> chunk(
        items.begin() + start, items.begin() + std::min(items.size(), start + batch_size));
    Batch b = make_batch(chunk);
    Tape<float> tape(false);
    Tensor<float> losses = ops::dice_loss(tape, model.forward(tape, b.images), b.targets);
    for (float v : losses.values()) out.push_back(v);
  }
  return out;
}

Model<float> snapshot(const Model<float>& model) {
  ParamSet<float> copy;
  for (const auto& [name, entry] : model.params()) {
    Tensor<float>& t = copy.add(name, entry.value.shape());
    std::copy(entry.value.values().begin(), entry.value.values().end(), t.data().begin());
  }
  return Model<float>(model.config(), std::move(copy));
}

}  // namespace

std::vector<Sample> augment_pair(const Sample& sample) {
  check_square(sample);
  return {sample, rotated(sample, 1), rotated(sample, -1)};
}

template <typename T>
Tensor<T> dice_loss(Tape<T>& tape, const Tensor<T>& pred, const BinaryMask& gt) {
  RARUNET_CHECK(pred.rank() == 4 && pred.dim(0) == 1 && pred.dim(1) == 1 && pred.dim(2) == gt.height &&
                    pred.dim(3) == gt.width,
                ErrorCode::kShapeMismatch,
                "dice_loss: prediction " + shape_string(pred.shape()) + " does not match a " +
                    std::to_string(gt.height) + "x" + std::to_string(gt.width) + " mask");
  Tensor<T> target = Tensor<T>::zeros(pred.shape());
  auto t = target.data();
  for (std::size_t i = 0; i < gt.size(); ++i) t[i] = gt.bits[i];
  return ops::dice_loss(tape, pred, target);
}

template Tensor<float> dice_loss(Tape<float>&, const Tensor<float>&, const BinaryMask&);
template Tensor<double> dice_loss(Tape<double>&, const Tensor<double>&, const BinaryMask&);

std::vector<SampleLoss> train_epoch(Model<float>& model, const std::vector<Sample>& data,
                                    const std::vector<int>& excluded, const TrainConfig& config,
                                    int epoch, LossLedger& ledger) {
  std::vector<const Sample*> active, held_out;
  for (const auto& s : data) {
    const bool skip = std::binary_search(excluded.begin(), excluded.end(), s.id);
    (skip ? held_out : active).push_back(&s);
  }
  RARUNET_CHECK(!active.empty(), ErrorCode::kInvalidArgument,
                "train_epoch: every sample of epoch " + std::to_string(epoch) + " is excluded");
  std::sort(active.begin(), active.end(), [](auto a, auto b) { return a->id < b->id; });

  Rng shuffle(derive_seed(derive_seed(config.seed, "shuffle"), static_cast<std::uint64_t>(epoch)));
  for (std::size_t i = active.size(); i > 1; --i) std::swap(active[i - 1], active[shuffle.below(i)]);

  // Augmented variants live here so the batch can point at them.
  std::vector<Sample> variants;
  if (config.augment) {
    variants.reserve(active.size());
    for (auto*& s : active) {
      Rng pick(derive_seed(derive_seed(config.seed, "augment"),
                           static_cast<std::uint64_t>(epoch) * 1000003u + static_cast<std::uint64_t>(s->id)));
      const int turn = static_cast<int>(pick.below(3)) - 1;
      if (turn == 0) continue;
      variants.push_back(rotated(*s, turn));
      s = &variants.back();
    }
  }

  std::map<int, SampleLoss> losses;
  for (std::size_t start = 0; start < active.size(); start += config.batch_size) {
    const std::vector<const Sample*> chunk(
        active.begin() + start,
        active.begin() + std::min(active.size(), start + static_cast<std::size_t>(config.batch_size)));
    Batch b = make_batch(chunk);
    Tape<float> tape;
    model.params().zero_grad();
    Tensor<float> per_sample = ops::dice_loss(tape, model.forward(tape, b.images), b.targets);
    Tensor<float> loss = ops::mean(tape, per_sample);
    tape.backward(loss);
    optimizer_step(model.params(), config.learning_rate, config.optimizer);
    for (std::size_t i = 0; i < chunk.size(); ++i) {
      losses[chunk[i]->id] = {chunk[i]->id, per_sample.values()[i], false};
    }
  }
  const auto held = forward_losses(model, held_out, config.batch_size);
  for (std::size_t i = 0; i < held_out.size(); ++i) {
    losses[held_out[i]->id] = {held_out[i]->id, held[i], true};
  }

  std::vector<SampleLoss> out;
  for (auto& [id, l] : losses) {
    ledger.record(epoch, id, l.loss, l.excluded);
    out.push_back(l);
  }
  return out;
}

double soft_dice(const Model<float>& model, const std::vector<Sample>& data, int batch_size) {
  RARUNET_CHECK(!data.empty(), ErrorCode::kInvalidArgument, "soft_dice: empty sample set");
  std::vector<const Sample*> items;
  for (const auto& s : data) items.push_back(&s);
  double total = 0.0;
  for (double l : forward_losses(model, items, batch_size)) total += 1.0 - l;
  return total / static_cast<double>(data.size());
}

std::vector<BinaryMask> predict_masks(const Model<float>& model, const std::vector<Sample>& data,
                                      int batch_size) {
  std::vector<BinaryMask> out;
  std::vector<const Sample*> items;
  for (const auto& s : data) items.push_back(&s);
  for (std::size_t start = 0; start < items.size(); start += batch_size) {
    const std::vector<const Sample*> chunk(
        items.begin() + start, items.begin() + std::min(items.size(), start + batch_size));
    Batch b = make_batch(chunk);
    Tensor<float> probs = model.predict(b.images);
    const int size = chunk.front()->size;
    const std::size_t plane = static_cast<std::size_t>(size) * size;
    for (std::size_t i = 0; i < chunk.size(); ++i) {
      BinaryMask m(size, size);
      for (std::size_t p = 0; p < plane; ++p) m.bits[p] = probs.values()[i * plane + p] > 0.5f;
      out.push_back(std::move(m));
    }
  }
  return out;
}

TrainResult train(const TrainConfig& config, const ArchConfig& arch,
                  const std::vector<Sample>& train_set, const std::vector<Sample>& val_set,
                  const std::function<void(const EpochSummary&)>& on_epoch) {
  config.validate();
  RARUNET_CHECK(!train_set.empty(), ErrorCode::kInvalidArgument, "train: no training samples");
  RARUNET_CHECK(!val_set.empty(), ErrorCode::kInvalidArgument, "train: no validation samples");
  for (const auto& s : train_set) check_square(s);
  for (const auto& s : val_set) check_square(s);

  Model<float> model = build_model<float>(arch, config.seed);
  const int y = static_cast<int>(train_set.size());
  TrainResult result{snapshot(model), 0, -1.0, LossLedger(y), {}};
  for (int t = 1; t <= config.epochs; ++t) {
    int n = 0;
    if (config.adl_enabled && t > 1) {
      n = schedule_n(t, config.alpha, config.beta, config.epochs, y, config.h1, config.h2);
    }
    const auto excluded = rank_and_exclude(result.ledger, t, n);
    const auto losses = train_epoch(model, train_set, excluded, config, t, result.ledger);
    double mean = 0.0;
    for (const auto& l : losses) mean += l.loss;
    mean /= static_cast<double>(losses.size());
    const double val = soft_dice(model, val_set, config.batch_size);
    if (val > result.best_val_dice) {
      result.best = snapshot(model);
      result.best_epoch = t;
      result.best_val_dice = val;
    }
    EpochSummary summary{t, n, mean, val};
    result.epochs.push_back(summary);
    if (on_epoch) on_epoch(summary);
  }
  return result;
}

}  // namespace rarunet
