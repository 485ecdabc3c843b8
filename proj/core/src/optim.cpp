#include "latreg/optim.hpp"

#include <cmath>

#include "latreg/error.hpp"

namespace latreg {

int AdamW::add_param(std::string name, Eigen::Index rows, Eigen::Index cols,
                     bool decayed) {
  Slot slot;
  slot.name = std::move(name);
  slot.m = Eigen::MatrixXd::Zero(rows, cols);
  slot.v = Eigen::MatrixXd::Zero(rows, cols);
  slot.decayed = decayed;
  slots_.push_back(std::move(slot));
  return static_cast<int>(slots_.size()) - 1;
}

void AdamW::step(std::vector<Eigen::MatrixXd*> params,
                 const std::vector<const Eigen::MatrixXd*>& grads) {
  if (params.size() != slots_.size() || grads.size() != slots_.size()) {
    throw runtime_error("AdamW::step: parameter count mismatch");
  }
  ++step_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_));
  for (size_t i = 0; i < slots_.size(); ++i) {
    Slot& s = slots_[i];
    Eigen::MatrixXd& p = *params[i];
    const Eigen::MatrixXd& g = *grads[i];
    if (p.rows() != s.m.rows() || p.cols() != s.m.cols() ||
        g.rows() != s.m.rows() || g.cols() != s.m.cols()) {
      throw runtime_error("AdamW::step: shape mismatch for parameter '" + s.name + "'");
    }
    if (!g.allFinite()) {
      throw runtime_error("AdamW::step: non-finite gradient for parameter '" + s.name + "'");
    }
    if (s.decayed && config_.weight_decay != 0.0) {
      p *= (1.0 - config_.lr * config_.weight_decay);
    }
    s.m = config_.beta1 * s.m + (1.0 - config_.beta1) * g;
    s.v = config_.beta2 * s.v.array().matrix() +
          (1.0 - config_.beta2) * g.array().square().matrix();
    const Eigen::ArrayXXd m_hat = s.m.array() / bc1;
    const Eigen::ArrayXXd v_hat = s.v.array() / bc2;
    p.array() -= config_.lr * m_hat / (v_hat.sqrt() + config_.eps);
  }
}

PlateauSchedule::Outcome PlateauSchedule::observe(double loss) {
  Outcome out;
  if (loss < best_) {
    best_ = loss;
    idle_lr_ = 0;
    idle_stop_ = 0;
    out.improved = true;
  } else {
    ++idle_lr_;
    ++idle_stop_;
    if (idle_lr_ >= config_.patience_lr) {
      lr_ /= config_.factor;
      idle_lr_ = 0;
      out.reduced = true;
    }
    if (idle_stop_ >= config_.patience_stop) {
      out.stop = true;
    }
  }
  out.lr = lr_;
  return out;
}

}  // namespace latreg
