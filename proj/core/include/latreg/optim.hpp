#ifndef LATREG_OPTIM_HPP
#define LATREG_OPTIM_HPP

#include <string>
#include <vector>

#include <Eigen/Core>

namespace latreg {

// AdamW with decoupled weight decay: parameters shrink multiplicatively by
// (1 - lr * decay) before the moment-based update; decay never flows through
// the gradient moments.
class AdamW {
 public:
  struct Config {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-2;
  };

  explicit AdamW(Config config) : config_(config) {}

  // Registers a parameter slot; `decayed` controls whether weight decay
  // applies to it. Returns the slot index.
  int add_param(std::string name, Eigen::Index rows, Eigen::Index cols,
                bool decayed = true);

  // One update for every registered slot. `params[i]` is updated in place
  // from `grads[i]`. Throws if a gradient is non-finite, naming the slot.
  void step(std::vector<Eigen::MatrixXd*> params,
            const std::vector<const Eigen::MatrixXd*>& grads);

  double lr() const { return config_.lr; }
  void set_lr(double lr) { config_.lr = lr; }
  long step_count() const { return step_; }

 private:
  struct Slot {
    std::string name;
    Eigen::MatrixXd m, v;
    bool decayed = true;
  };

  Config config_;
  std::vector<Slot> slots_;
  long step_ = 0;
};

// Tracks the best loss seen. After `patience_lr` consecutive non-improving
// observations the learning rate is divided by `factor` and the reduction
// counter resets; after `patience_stop` consecutive non-improving
// observations a stop is signalled. An improvement is a strictly lower loss.
class PlateauSchedule {
 public:
  struct Config {
    double factor = 10.0;
    int patience_lr = 10;
    int patience_stop = 100;
  };

  PlateauSchedule(double initial_lr, Config config)
      : lr_(initial_lr), config_(config) {}

  struct Outcome {
    double lr = 0.0;
    bool reduced = false;
    bool stop = false;
    bool improved = false;
  };

  Outcome observe(double loss);

  double lr() const { return lr_; }
  double best_loss() const { return best_; }

 private:
  double lr_;
  Config config_;
  double best_ = std::numeric_limits<double>::infinity();
  int idle_lr_ = 0;
  int idle_stop_ = 0;
};

}  // namespace latreg

#endif  // LATREG_OPTIM_HPP
