#ifndef DTUNE_AD_PARAM_SET_HPP_
#define DTUNE_AD_PARAM_SET_HPP_

#include <Eigen/Dense>

#include <cstddef>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace dtune::ad {

using Matrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

// One named trainable tensor and its gradient accumulator.
struct Param {
  std::string name;
  Matrix value;
  Matrix grad;
};

// Ordered collection of named parameters. Every parameter owns exactly one
// gradient slot of the same shape as its value.
class ParamSet {
 public:
  std::size_t add(std::string name, Matrix init);

  std::size_t size() const { return params_.size(); }
  std::size_t num_scalars() const;
  bool contains(std::string_view name) const;
  std::size_t index(std::string_view name) const;

  Param& operator[](std::size_t i) { return params_[i]; }
  const Param& operator[](std::size_t i) const { return params_[i]; }
  Param& at(std::string_view name) { return params_[index(name)]; }
  const Param& at(std::string_view name) const { return params_[index(name)]; }

  std::vector<Param>::iterator begin() { return params_.begin(); }
  std::vector<Param>::iterator end() { return params_.end(); }
  std::vector<Param>::const_iterator begin() const { return params_.begin(); }
  std::vector<Param>::const_iterator end() const { return params_.end(); }

  void zero_grads();
  void set_all(double v);

  // Same names and shapes, in the same order.
  bool same_layout(const ParamSet& other) const;

  // Flattened views, used by finite differences and serialization.
  std::vector<double> flat_values() const;
  std::vector<double> flat_grads() const;

 private:
  std::vector<Param> params_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

}  // namespace dtune::ad

#endif  // DTUNE_AD_PARAM_SET_HPP_
