#pragma once

#include <map>
#include <string>
#include <vector>

#include "earthgan/autodiff.hpp"

namespace earthgan::model {

template <typename T>
struct Parameter {
  std::string name;  // slash path, e.g. "gen/stage1/conv0/kernel"
  ad::Var<T> var;
  bool trainable = true;
};

// Named learned tensors in insertion order. Names are unique.
template <typename T>
class ParamStore {
 public:
  ad::Var<T>& add(const std::string& name, Tensor<T> value, bool trainable = true) {
    if (index_.count(name)) {
      throw ValidationError("duplicate parameter name '" + name + "'");
    }
    index_[name] = entries_.size();
    entries_.push_back({name, ad::Var<T>::leaf(std::move(value), trainable), trainable});
    return entries_.back().var;
  }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  const ad::Var<T>& get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ValidationError("unknown parameter '" + name + "'");
    return entries_[it->second].var;
  }

  std::size_t size() const { return entries_.size(); }
  const std::vector<Parameter<T>>& entries() const { return entries_; }
  std::vector<Parameter<T>>& entries() { return entries_; }

  // Trainable parameters whose name starts with `prefix`.
  std::vector<ad::Var<T>> vars(const std::string& prefix = "") const {
    std::vector<ad::Var<T>> out;
    for (const auto& p : entries_) {
      if (p.trainable && p.name.compare(0, prefix.size(), prefix) == 0) {
        out.push_back(p.var);
      }
    }
    return out;
  }

  // Deep copy with fresh leaves.
  ParamStore clone() const { return cast<T>(); }

  template <typename U>
  ParamStore<U> cast() const {
    ParamStore<U> out;
    for (const auto& p : entries_) {
      out.add(p.name, p.var.value().template cast<U>(), p.trainable);
    }
    return out;
  }

  // Adds every entry of `other` under its own name.
  void merge(const ParamStore& other) {
    for (const auto& p : other.entries()) add(p.name, p.var.value(), p.trainable);
  }

 private:
  std::vector<Parameter<T>> entries_;
  std::map<std::string, std::size_t> index_;
};

template <typename T>
std::size_t count_params(const ParamStore<T>& store) {
  std::size_t n = 0;
  for (const auto& p : store.entries()) n += p.var.value().size();
  return n;
}

}  // namespace earthgan::model
