#include "idprior/core/tensor.hpp"

#include "idprior/core/errors.hpp"

namespace idprior {

Parameter& ParameterStore::add(const std::string& name, Mat value) {
    if (contains(name)) throw ArgumentError("duplicate parameter '" + name + "'");
    Parameter p;
    p.name = name;
    p.grad = Mat::Zero(value.rows(), value.cols());
    p.value = std::move(value);
    return params_.emplace(name, std::move(p)).first->second;
}

Parameter& ParameterStore::at(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw ArgumentError("unknown parameter '" + name + "'");
    return it->second;
}

const Parameter& ParameterStore::at(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw ArgumentError("unknown parameter '" + name + "'");
    return it->second;
}

std::vector<Parameter*> ParameterStore::with_prefix(const std::string& prefix) {
    std::vector<Parameter*> out;
    for (auto it = params_.lower_bound(prefix); it != params_.end(); ++it) {
        if (it->first.compare(0, prefix.size(), prefix) != 0) break;
        out.push_back(&it->second);
    }
    return out;
}

std::vector<const Parameter*> ParameterStore::with_prefix(const std::string& prefix) const {
    std::vector<const Parameter*> out;
    for (auto it = params_.lower_bound(prefix); it != params_.end(); ++it) {
        if (it->first.compare(0, prefix.size(), prefix) != 0) break;
        out.push_back(&it->second);
    }
    return out;
}

std::vector<Parameter*> ParameterStore::all() { return with_prefix(""); }
std::vector<const Parameter*> ParameterStore::all() const { return with_prefix(""); }

void ParameterStore::set_trainable(bool trainable) {
    for (auto& [name, p] : params_) p.trainable = trainable;
}

std::int64_t ParameterStore::scalar_count() const {
    std::int64_t n = 0;
    for (const auto& [name, p] : params_) n += p.size();
    return n;
}

}  // namespace idprior
