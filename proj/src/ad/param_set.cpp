#include "dtune/ad/param_set.hpp"

#include "dtune/errors.hpp"

namespace dtune::ad {

std::size_t ParamSet::add(std::string name, Matrix init) {
  if (index_.count(name) != 0) {
    throw std::invalid_argument("duplicate parameter name: " + name);
  }
  const std::size_t idx = params_.size();
  Matrix grad = Matrix::Zero(init.rows(), init.cols());
  index_.emplace(name, idx);
  params_.push_back(Param{std::move(name), std::move(init), std::move(grad)});
  return idx;
}

std::size_t ParamSet::num_scalars() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
  return n;
}

bool ParamSet::contains(std::string_view name) const {
  return index_.find(name) != index_.end();
}

std::size_t ParamSet::index(std::string_view name) const {
  auto it = index_.find(name);
  if (it == index_.end()) {
    throw std::out_of_range("no parameter named " + std::string(name));
  }
  return it->second;
}

void ParamSet::zero_grads() {
  for (auto& p : params_) p.grad.setZero();
}

void ParamSet::set_all(double v) {
  for (auto& p : params_) p.value.setConstant(v);
}

bool ParamSet::same_layout(const ParamSet& other) const {
  if (other.size() != size()) return false;
  for (std::size_t i = 0; i < size(); ++i) {
    const auto& a = params_[i];
    const auto& b = other.params_[i];
    if (a.name != b.name || a.value.rows() != b.value.rows() ||
        a.value.cols() != b.value.cols()) {
      return false;
    }
  }
  return true;
}

std::vector<double> ParamSet::flat_values() const {
  std::vector<double> out;
  out.reserve(num_scalars());
  for (const auto& p : params_) {
    out.insert(out.end(), p.value.data(), p.value.data() + p.value.size());
  }
  return out;
}

std::vector<double> ParamSet::flat_grads() const {
  std::vector<double> out;
  out.reserve(num_scalars());
  for (const auto& p : params_) {
    out.insert(out.end(), p.grad.data(), p.grad.data() + p.grad.size());
  }
  return out;
}

}  // namespace dtune::ad
