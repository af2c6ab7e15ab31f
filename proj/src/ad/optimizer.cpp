#include "dtune/ad/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "dtune/errors.hpp"

namespace dtune::ad {

OptimizerKind parse_optimizer(const std::string& name) {
  if (name == "adam") return OptimizerKind::kAdam;
  if (name == "lamb") return OptimizerKind::kLamb;
  throw std::invalid_argument("unknown optimizer: " + name);
}

std::string to_string(OptimizerKind k) {
  return k == OptimizerKind::kLamb ? "lamb" : "adam";
}

Optimizer::Optimizer(OptimizerConfig cfg, const ParamSet& params) : cfg_(cfg) {
  if (!(cfg_.lr >= 0.0)) throw std::invalid_argument("learning rate must be >= 0");
  if (cfg_.weight_decay < 0.0) throw std::invalid_argument("weight_decay must be >= 0");
  for (const auto& p : params) {
    m_.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
    v_.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
  }
}

double Optimizer::current_lr() const {
  if (cfg_.warmup_steps <= 0) return cfg_.lr;
  const double frac = std::min(1.0, static_cast<double>(step_ + 1) /
                                        static_cast<double>(cfg_.warmup_steps));
  return cfg_.lr * frac;
}

void Optimizer::step(ParamSet& params) {
  if (params.size() != m_.size()) {
    throw DimensionError("optimizer was built for a different parameter set");
  }
  for (const auto& p : params) {
    if (!p.grad.allFinite()) {
      throw NumericError("non-finite gradient in parameter " + p.name);
    }
  }
  const double lr = current_lr();
  ++step_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Param& p = params[i];
    Matrix& m = m_[i];
    Matrix& v = v_[i];
    m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * p.grad;
    v = cfg_.beta2 * v + (1.0 - cfg_.beta2) * p.grad.cwiseAbs2();
    Matrix update =
        ((m.array() / bc1) / ((v.array() / bc2).sqrt() + cfg_.eps)).matrix();
    if (cfg_.kind == OptimizerKind::kAdam) {
      if (cfg_.weight_decay > 0.0) p.value -= lr * cfg_.weight_decay * p.value;
      p.value -= lr * update;
    } else {
      if (cfg_.weight_decay > 0.0) update += cfg_.weight_decay * p.value;
      const double wn = p.value.norm();
      const double un = update.norm();
      const double trust = (wn > 0.0 && un > 0.0) ? wn / un : 1.0;
      p.value -= lr * trust * update;
    }
  }
}

}  // namespace dtune::ad
