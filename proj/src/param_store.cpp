#include "p3o/param_store.hpp"

#include "p3o/tensor.hpp"

namespace p3o {

const char* component_name(Component c) {
  switch (c) {
    case Component::encoder:
      return "encoder";
    case Component::prompt:
      return "prompt";
    case Component::policy:
      return "policy";
    case Component::action:
      return "action";
    case Component::value:
      return "value";
    case Component::classifier:
      return "classifier";
  }
  require(false, "component_name: invalid component");
  return "";
}

Component component_from_name(const std::string& s) {
  if (s == "encoder") return Component::encoder;
  if (s == "prompt") return Component::prompt;
  if (s == "policy") return Component::policy;
  if (s == "action") return Component::action;
  if (s == "value") return Component::value;
  if (s == "classifier") return Component::classifier;
  require(false, "unknown component name: " + s);
  return Component::encoder;
}

const char* stage_name(Stage s) {
  switch (s) {
    case Stage::pretrain:
      return "pretrain";
    case Stage::step1:
      return "step1";
    case Stage::step2:
      return "step2";
    case Stage::finetune:
      return "finetune";
  }
  require(false, "stage_name: invalid stage");
  return "";
}

Stage stage_from_name(const std::string& s) {
  if (s == "pretrain") return Stage::pretrain;
  if (s == "step1") return Stage::step1;
  if (s == "step2") return Stage::step2;
  if (s == "finetune") return Stage::finetune;
  require(false, "unknown stage name: " + s);
  return Stage::pretrain;
}

}  // namespace p3o
