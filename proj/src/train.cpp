#include "jnd/train.hpp"

#include <numeric>

#include "jnd/error.hpp"
#include "jnd/random.hpp"
#include "jnd/simd/kernels.hpp"

namespace jnd {

double accuracy(const Model& model, const Dataset& data) {
  if (data.empty()) throw InputError("accuracy: empty dataset");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < data.size(); ++i) hits += model.predict(data.images[i]).label == data.labels[i];
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

TrainResult train(const Model& initial, const Dataset& data, const TrainSchedule& schedule, const Dataset* eval) {
  if (data.empty()) throw InputError("train: empty dataset");
  data.validate();
  if (data.class_names.size() > initial.num_classes()) {
    throw InputError("train: dataset has " + std::to_string(data.class_names.size()) + " classes, model only " +
                     std::to_string(initial.num_classes()));
  }
  if (schedule.batch_size == 0) throw ConfigError("train: batch size must be positive");
  if (!(schedule.learning_rate > 0.0)) throw ConfigError("train: learning rate must be positive");

  Model model = initial;
  TrainResult result;
  Rng rng(schedule.seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (std::size_t epoch = 0; epoch < schedule.epochs; ++epoch) {
    rng.shuffle(order.begin(), order.end());
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += schedule.batch_size) {
      const std::size_t stop = std::min(order.size(), start + schedule.batch_size);
      Parameters grad = zero_parameters(model.spec());
      for (std::size_t i = start; i < stop; ++i) {
        const std::size_t idx = order[i];
        Tape tape;
        std::vector<Var> pvars;
        const Var logits = model.forward(tape, data.images[idx], false, true, &pvars);
        const Var loss = tape.cross_entropy(logits, data.labels[idx]);
        loss_sum += tape.value(loss)[0];
        Gradients g = tape.backward(loss, Tensor({1}, {1.0}));
        std::size_t k = 0;
        for (std::size_t l = 0; l < grad.size(); ++l) {
          if (!model.spec().layers[l].parametric()) continue;
          const Tensor gw = g.take(pvars[k++]);
          const Tensor gb = g.take(pvars[k++]);
          simd::axpy(1.0, gw.data().data(), grad[l].weight.data().data(), gw.size());
          simd::axpy(1.0, gb.data().data(), grad[l].bias.data().data(), gb.size());
        }
      }
      const double step = -schedule.learning_rate / static_cast<double>(stop - start);
      Parameters& p = model.mutable_parameters();
      for (std::size_t l = 0; l < p.size(); ++l) {
        if (p[l].weight.empty()) continue;
        simd::axpy(step, grad[l].weight.data().data(), p[l].weight.data().data(), p[l].weight.size());
        simd::axpy(step, grad[l].bias.data().data(), p[l].bias.data().data(), p[l].bias.size());
      }
    }
    for (const auto& lp : model.parameters()) {
      if (!lp.weight.all_finite() || !lp.bias.all_finite()) {
        throw NumericalError("train: parameters diverged in epoch " + std::to_string(epoch + 1) +
                             "; lower the learning rate");
      }
    }
    EpochLog entry;
    entry.epoch = epoch + 1;
    entry.mean_loss = loss_sum / static_cast<double>(data.size());
    entry.train_accuracy = accuracy(model, data);
    if (eval && !eval->empty()) entry.eval_accuracy = accuracy(model, *eval);
    result.log.push_back(entry);
  }
  result.parameters = model.parameters();
  return result;
}

}  // namespace jnd
