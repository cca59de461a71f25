#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "p3o/tensor.hpp"

namespace p3o {

enum class Component { encoder, prompt, policy, action, value, classifier };

enum class Stage { pretrain, step1, step2, finetune };

const char* component_name(Component c);
Component component_from_name(const std::string& s);
const char* stage_name(Stage s);
Stage stage_from_name(const std::string& s);

template <class T>
struct ParamEntryT {
  std::string name;
  Component tag = Component::encoder;
  bool trainable = true;
  TensorT<T> tensor;
};

// Named parameter collection. Entry order is fixed at insertion and defines
// the checkpoint payload layout; the trainable flag is the freeze mask.
template <class T>
class ParamStoreT {
 public:
  ParamEntryT<T>& add(const std::string& name, Component tag, TensorT<T> t) {
    require(!has(name), "duplicate parameter name: " + name);
    index_[name] = entries_.size();
    entries_.push_back(ParamEntryT<T>{name, tag, true, std::move(t)});
    entries_.back().tensor.zero_grad();
    return entries_.back();
  }

  bool has(const std::string& name) const { return index_.count(name) > 0; }

  ParamEntryT<T>& at(const std::string& name) {
    auto it = index_.find(name);
    require(it != index_.end(), "unknown parameter: " + name);
    return entries_[it->second];
  }
  const ParamEntryT<T>& at(const std::string& name) const {
    auto it = index_.find(name);
    require(it != index_.end(), "unknown parameter: " + name);
    return entries_[it->second];
  }

  std::vector<ParamEntryT<T>>& entries() { return entries_; }
  const std::vector<ParamEntryT<T>>& entries() const { return entries_; }

  bool has_component(Component tag) const {
    for (const auto& e : entries_)
      if (e.tag == tag) return true;
    return false;
  }

  void remove_component(Component tag) {
    std::vector<ParamEntryT<T>> kept;
    kept.reserve(entries_.size());
    for (auto& e : entries_)
      if (e.tag != tag) kept.push_back(std::move(e));
    entries_ = std::move(kept);
    index_.clear();
    for (size_t i = 0; i < entries_.size(); ++i) index_[entries_[i].name] = i;
  }

  void zero_grad() {
    for (auto& e : entries_) e.tensor.zero_grad();
  }

  int64_t parameter_count() const {
    int64_t n = 0;
    for (const auto& e : entries_) n += e.tensor.size();
    return n;
  }

  std::vector<std::string> trainable_names() const {
    std::vector<std::string> out;
    for (const auto& e : entries_)
      if (e.trainable) out.push_back(e.name);
    return out;
  }

  template <class U>
  ParamStoreT<U> cast() const {
    ParamStoreT<U> out;
    for (const auto& e : entries_) {
      auto& ne = out.add(e.name, e.tag, e.tensor.template cast<U>());
      ne.trainable = e.trainable;
    }
    return out;
  }

 private:
  std::vector<ParamEntryT<T>> entries_;
  std::unordered_map<std::string, size_t> index_;
};

using ParamStore = ParamStoreT<float>;

// Stage freeze table:
//   pretrain -> encoder/policy/action/value trainable
//   step1    -> prompt/classifier trainable, everything else frozen
//   step2    -> prompt only
//   finetune -> every present entry trainable
template <class T>
void set_trainable(ParamStoreT<T>& params, Stage stage) {
  auto stage_allows = [stage](Component c) {
    switch (stage) {
      case Stage::pretrain:
        return c == Component::encoder || c == Component::policy || c == Component::action ||
               c == Component::value;
      case Stage::step1:
        return c == Component::prompt || c == Component::classifier;
      case Stage::step2:
        return c == Component::prompt;
      case Stage::finetune:
        return true;
    }
    return false;
  };
  if (stage == Stage::step1)
    require(params.has_component(Component::prompt) && params.has_component(Component::classifier),
            "step1 requires prompt and classifier entries");
  if (stage == Stage::step2)
    require(params.has_component(Component::prompt), "step2 requires prompt entries");
  for (auto& e : params.entries()) e.trainable = stage_allows(e.tag);
}

}  // namespace p3o
