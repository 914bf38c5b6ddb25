#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace idprior {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// A named trainable tensor. `trainable` selects whether backward passes
// accumulate into `grad`; the optimizer only touches trainable parameters.
struct Parameter {
    std::string name;
    Mat value;
    Mat grad;
    bool trainable = false;

    void zero_grad() { grad.setZero(value.rows(), value.cols()); }
    std::int64_t size() const { return value.size(); }
};

// Ordered name -> parameter map. Iteration order is lexicographic, which
// fixes the order of checkpoints, digests and optimizer updates.
class ParameterStore {
public:
    Parameter& add(const std::string& name, Mat value);
    bool contains(const std::string& name) const { return params_.count(name) != 0; }
    Parameter& at(const std::string& name);
    const Parameter& at(const std::string& name) const;
    void erase(const std::string& name) { params_.erase(name); }

    std::vector<Parameter*> with_prefix(const std::string& prefix);
    std::vector<const Parameter*> with_prefix(const std::string& prefix) const;
    std::vector<Parameter*> all();
    std::vector<const Parameter*> all() const;

    void set_trainable(bool trainable);
    std::int64_t scalar_count() const;
    std::size_t size() const { return params_.size(); }

private:
    std::map<std::string, Parameter> params_;
};

}  // namespace idprior
