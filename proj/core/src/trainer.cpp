// SPDX-License-Identifier: Apache-2.0
#include "shufflenas/trainer.hpp"

#include <algorithm>
#include <cstdio>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "shufflenas/ops.hpp"
#include "shufflenas/tape.hpp"

namespace shufflenas {

namespace {

std::string one_line(const Genotype& g) {
  return encode(g.normal) + " ; " + encode(g.reduction);
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep)) out.push_back(item);
  return out;
}

void shuffle_indices(std::vector<std::int64_t>& idx, Rng& rng) {
  for (std::size_t i = idx.size(); i > 1; --i)
    std::swap(idx[i - 1], idx[static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(i)))]);
}

}  // namespace

DataBundle make_bundle(Dataset train, Dataset val, Dataset test) {
  if (train.num_classes != val.num_classes || train.num_classes != test.num_classes)
    throw std::invalid_argument("make_bundle: splits disagree on the number of classes");
  DataBundle b{std::move(train), std::move(val), std::move(test), {}};
  b.normalizer = Normalizer::fit(b.train);
  return b;
}

DataBundle make_synthetic_bundle(SyntheticKind kind, std::int64_t train_size,
                                 std::int64_t val_size, std::int64_t test_size,
                                 std::uint64_t seed) {
  Rng train_rng(derive_seed(seed, "synthetic/train"));
  Rng val_rng(derive_seed(seed, "synthetic/val"));
  Rng test_rng(derive_seed(seed, "synthetic/test"));
  return make_bundle(synthetic_dataset(kind, train_size, train_rng, Split::train),
                     synthetic_dataset(kind, val_size, val_rng, Split::val),
                     synthetic_dataset(kind, test_size, test_rng, Split::test));
}

double accuracy(const Tensor& logits, std::span<const int> labels) {
  if (logits.rank() != 2 || logits.dim(0) != static_cast<std::int64_t>(labels.size()))
    throw std::invalid_argument("accuracy: logits " + shape_str(logits.shape()) + " vs " +
                                std::to_string(labels.size()) + " labels");
  if (labels.empty()) throw std::invalid_argument("accuracy: empty batch");
  const auto values = logits.to_vector();
  const auto classes = static_cast<std::size_t>(logits.dim(1));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto row = values.begin() + static_cast<std::ptrdiff_t>(i * classes);
    const auto best = std::max_element(row, row + static_cast<std::ptrdiff_t>(classes)) - row;
    if (best == labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

double reward_of(Network& net, const Genotype& genotype, const Batch& batch) {
  if (batch.labels.empty()) throw std::invalid_argument("reward_of: empty batch");
  NoGradScope no_grad;
  return accuracy(net.forward(genotype, batch.images, {}), batch.labels);
}

double evaluate_error(Network& net, const Genotype& genotype, const Dataset& data,
                      const Normalizer& normalizer, std::int64_t batch_size,
                      std::int64_t max_batches) {
  if (data.size() == 0) throw std::invalid_argument("evaluate_error: empty dataset");
  NoGradScope no_grad;
  std::int64_t correct = 0, seen = 0, batches = 0;
  std::vector<std::int64_t> idx;
  for (std::int64_t start = 0; start < data.size(); start += batch_size) {
    if (max_batches > 0 && batches++ >= max_batches) break;
    idx.resize(static_cast<std::size_t>(std::min(batch_size, data.size() - start)));
    std::iota(idx.begin(), idx.end(), start);
    Batch batch = make_batch(data, idx, normalizer, net.config().dtype);
    const double acc = accuracy(net.forward(genotype, batch.images, {}), batch.labels);
    correct += std::llround(acc * static_cast<double>(idx.size()));
    seen += static_cast<std::int64_t>(idx.size());
  }
  return 1.0 - static_cast<double>(correct) / static_cast<double>(seen);
}

EpochStats train_epoch(Network& net, const Genotype& genotype, const DataBundle& data, Sgd& sgd,
                       const TrainerConfig& config, int epoch, Rng& data_rng, Rng& path_rng) {
  const std::int64_t n = data.train.size();
  if (n == 0) throw std::invalid_argument("train_epoch: empty train split");
  const std::int64_t bs = config.schedule.batch_size;
  std::vector<std::int64_t> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  shuffle_indices(order, data_rng);
  std::int64_t batches = (n + bs - 1) / bs;
  if (config.max_train_batches > 0) batches = std::min(batches, config.max_train_batches);

  const AugmentOptions augment{config.augment, config.cutout};
  EpochStats stats;
  auto& reg = net.parameters();
  for (std::int64_t b = 0; b < batches; ++b) {
    const auto first = order.begin() + b * bs;
    const auto last = order.begin() + std::min(n, (b + 1) * bs);
    std::vector<std::int64_t> idx(first, last);
    Batch batch = make_batch(data.train, idx, data.normalizer, net.config().dtype, augment, &data_rng);
    const double lr = cosine_lr(epoch + static_cast<double>(b) / static_cast<double>(batches),
                                config.schedule);
    reg.zero_grad();
    Tape tape;
    Tensor loss, logits;
    {
      TapeScope scope(tape);
      logits = net.forward(genotype, batch.images, {true, &path_rng});
      loss = ops::softmax_cross_entropy(logits, batch.labels);
    }
    tape.backward(loss);
    sgd.step(reg, lr);
    reg.zero_grad();
    stats.mean_loss += loss.item();
    stats.train_accuracy += accuracy(logits, batch.labels);
    stats.last_lr = lr;
  }
  stats.batches = batches;
  stats.mean_loss /= static_cast<double>(batches);
  stats.train_accuracy /= static_cast<double>(batches);
  return stats;
}

std::string search_history_csv(const std::vector<SearchRecord>& history) {
  std::string out = "epoch,mean_reward,max_reward,baseline,entropy,train_loss,lr,genotype\n";
  for (const auto& r : history)
    out += std::to_string(r.epoch) + "," + fmt(r.mean_reward) + "," + fmt(r.max_reward) + "," +
           fmt(r.baseline) + "," + fmt(r.entropy) + "," + fmt(r.train_loss) + "," + fmt(r.lr) +
           "," + r.genotype + "\n";
  return out;
}

SearchState::SearchState(const ModelConfig& model, const TrainerConfig& cfg)
    : supernet(build_supernet(model)),
      controller([&] {
        ControllerConfig c = cfg.controller;
        c.seed = derive_seed(cfg.seed, "controller/init");
        return c;
      }()),
      sgd(cfg.sgd),
      config(cfg),
      controller_rng(derive_seed(cfg.seed, "controller/sample")),
      data_rng(derive_seed(cfg.seed, "data")),
      path_rng(derive_seed(cfg.seed, "drop_path")) {
  config.schedule.validate();
  if (config.controller_samples < 1)
    throw ConfigError("controller samples must be >= 1");
}

Checkpoint SearchState::to_checkpoint() const {
  Checkpoint ck;
  ck.add_registry(supernet.parameters(), "net/");
  sgd.save(ck, "sgd/");
  controller.save(ck, "ctrl/");
  ck.meta["model"] = supernet.describe();
  ck.meta["epoch"] = std::to_string(epoch);
  ck.meta["val_cursor"] = std::to_string(val_cursor);
  ck.meta["rng/controller"] = controller_rng.state();
  ck.meta["rng/data"] = data_rng.state();
  ck.meta["rng/path"] = path_rng.state();
  std::string rows;
  for (const auto& r : history)
    rows += std::to_string(r.epoch) + "," + exact_double(r.mean_reward) + "," +
            exact_double(r.max_reward) + "," + exact_double(r.baseline) + "," +
            exact_double(r.entropy) + "," + exact_double(r.train_loss) + "," +
            exact_double(r.lr) + "," + r.genotype + "\n";
  ck.meta["history"] = rows;
  return ck;
}

void SearchState::restore(const Checkpoint& ck) {
  if (ck.meta_at("model") != supernet.describe())
    throw std::runtime_error("checkpoint was written for a different model configuration");
  ck.restore_registry(supernet.parameters(), "net/");
  sgd.load(ck, "sgd/");
  controller.load(ck, "ctrl/");
  epoch = std::stoi(ck.meta_at("epoch"));
  val_cursor = std::stoll(ck.meta_at("val_cursor"));
  controller_rng.restore(ck.meta_at("rng/controller"));
  data_rng.restore(ck.meta_at("rng/data"));
  path_rng.restore(ck.meta_at("rng/path"));
  history.clear();
  for (const auto& line : split(ck.meta_at("history"), '\n')) {
    auto f = split(line, ',');
    if (f.size() != 8) throw std::runtime_error("malformed search history in checkpoint");
    history.push_back({std::stoi(f[0]), parse_exact_double(f[1]), parse_exact_double(f[2]),
                       parse_exact_double(f[3]), parse_exact_double(f[4]),
                       parse_exact_double(f[5]), parse_exact_double(f[6]), f[7]});
  }
}

const SearchRecord& search_epoch(SearchState& state, const DataBundle& data) {
  const int B = state.supernet.config().blocks;
  const std::int64_t bs = std::min<std::int64_t>(state.config.schedule.batch_size, data.val.size());
  if (bs == 0) throw std::invalid_argument("search: empty validation split");

  std::vector<SampleTrace> traces;
  Genotype best;
  double best_reward = -1;
  std::vector<std::int64_t> idx(static_cast<std::size_t>(bs));
  for (int s = 0; s < state.config.controller_samples; ++s) {
    auto [g, trace] = state.controller.sample(B, state.controller_rng);
    for (auto& i : idx) {
      i = state.val_cursor;
      state.val_cursor = (state.val_cursor + 1) % data.val.size();
    }
    trace.reward = reward_of(state.supernet, g, make_batch(data.val, idx, data.normalizer,
                                                           state.supernet.config().dtype));
    if (*trace.reward > best_reward) {
      best_reward = *trace.reward;
      best = g;
    }
    traces.push_back(std::move(trace));
  }
  const UpdateStats update = state.controller.reinforce_update(traces);

  const Genotype weight_genotype =
      state.config.weight_genotype == WeightPhaseGenotype::fresh_sample
          ? state.controller.sample(B, state.controller_rng).first
          : best;
  const EpochStats es = train_epoch(state.supernet, weight_genotype, data, state.sgd, state.config,
                                    state.epoch, state.data_rng, state.path_rng);

  SearchRecord rec;
  rec.epoch = state.epoch;
  rec.mean_reward = update.mean_reward;
  rec.max_reward = best_reward;
  rec.baseline = update.baseline_after;
  rec.entropy = update.mean_entropy;
  rec.train_loss = es.mean_loss;
  rec.lr = es.last_lr;
  rec.genotype = one_line(weight_genotype);
  state.history.push_back(rec);
  ++state.epoch;
  return state.history.back();
}

Genotype derive_best(Controller& controller, int blocks, int k, Rng& rng,
                     const std::function<double(const Genotype&)>& score) {
  if (k <= 0) throw std::invalid_argument("derive_best: k must be positive");
  Genotype best;
  double best_score = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < k; ++i) {
    Genotype g = controller.sample(blocks, rng).first;
    const double s = score(g);
    if (i == 0 || s > best_score) {
      best_score = s;
      best = std::move(g);
    }
  }
  return best;
}

Genotype derive_best(SearchState& state, const DataBundle& data, int k, int batches) {
  if (k <= 0) throw std::invalid_argument("derive_best: k must be positive");
  if (batches <= 0) throw std::invalid_argument("derive_best: batches must be positive");
  const std::int64_t bs = state.config.schedule.batch_size;
  return derive_best(state.controller, state.supernet.config().blocks, k, state.controller_rng,
                     [&](const Genotype& g) {
                       return 1.0 - evaluate_error(state.supernet, g, data.val, data.normalizer, bs,
                                                   batches);
                     });
}

std::string final_history_csv(const std::vector<FinalRecord>& history) {
  std::string out = "epoch,train_loss,train_error,val_error,test_error,lr\n";
  for (const auto& r : history)
    out += std::to_string(r.epoch) + "," + fmt(r.train_loss) + "," + fmt(r.train_error) + "," +
           fmt(r.val_error) + "," + fmt(r.test_error) + "," + fmt(r.lr) + "\n";
  return out;
}

FinalResult train_final(Network& model, const DataBundle& data, const TrainerConfig& config,
                        int epochs, const std::function<void(const FinalRecord&)>& on_epoch) {
  if (model.is_supernet()) throw std::invalid_argument("train_final: expected a final model");
  if (epochs < 1) throw std::invalid_argument("train_final: epochs must be >= 1");
  if (epochs > config.schedule.total_epochs())
    throw ConfigError("train_final: " + std::to_string(epochs) +
                      " epochs exceed the schedule length");
  Sgd sgd(config.sgd);
  Rng data_rng(derive_seed(config.seed, "final/data"));
  Rng path_rng(derive_seed(config.seed, "final/drop_path"));
  const std::int64_t bs = config.schedule.batch_size;
  FinalResult result;
  for (int e = 0; e < epochs; ++e) {
    const EpochStats es = train_epoch(model, model.genotype(), data, sgd, config, e, data_rng, path_rng);
    FinalRecord rec;
    rec.epoch = e;
    rec.train_loss = es.mean_loss;
    rec.train_error = 1.0 - es.train_accuracy;
    rec.val_error = data.val.size() ? evaluate_error(model, model.genotype(), data.val, data.normalizer, bs) : 0.0;
    rec.test_error = evaluate_error(model, model.genotype(), data.test, data.normalizer, bs);
    rec.lr = es.last_lr;
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  const std::size_t tail = std::min<std::size_t>(5, result.history.size());
  for (std::size_t i = result.history.size() - tail; i < result.history.size(); ++i)
    result.final_test_error += result.history[i].test_error / static_cast<double>(tail);
  return result;
}

}  // namespace shufflenas
