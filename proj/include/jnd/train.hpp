#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "jnd/dataset.hpp"
#include "jnd/model.hpp"

namespace jnd {

struct TrainSchedule {
  std::size_t epochs = 5;
  std::size_t batch_size = 32;
  double learning_rate = 0.01;
  std::uint64_t seed = 1;
};

struct EpochLog {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  double train_accuracy = 0.0;
  std::optional<double> eval_accuracy;
};

struct TrainResult {
  Parameters parameters;
  std::vector<EpochLog> log;
};

// Mini-batch SGD on mean cross-entropy, starting from the model's current
// parameters. The shuffle order comes from schedule.seed, so a run is
// reproducible bit for bit. Accuracy is measured after each epoch.
TrainResult train(const Model& initial, const Dataset& data, const TrainSchedule& schedule,
                  const Dataset* eval = nullptr);

double accuracy(const Model& model, const Dataset& data);

}  // namespace jnd
