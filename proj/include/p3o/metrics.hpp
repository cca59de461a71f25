#pragma once

#include <fstream>
#include <string>

#include "p3o/ppo.hpp"

namespace p3o {

// Shortest round-trip decimal form (std::to_chars), so repeated runs emit
// byte-identical files.
std::string format_double(double v);

// metrics.csv writer. One row per PPO update, flushed immediately. The header
// is written when the file is created; append mode lets several stages share
// one file.
class MetricsSink {
 public:
  static constexpr const char* kHeader =
      "stage,seed,env_steps,update,mean_return,policy_loss,value_loss,entropy,clip_fraction,"
      "wall_seconds";

  MetricsSink() = default;
  MetricsSink(const std::string& path, bool append);

  void write_row(const UpdateRow& row);
  bool is_open() const { return file_.is_open(); }

 private:
  std::ofstream file_;
};

// evals.csv writer (stage,seed,env_steps,eval_return), same conventions.
class EvalSink {
 public:
  static constexpr const char* kHeader = "stage,seed,env_steps,eval_return";

  EvalSink() = default;
  EvalSink(const std::string& path, bool append);

  void write_row(const std::string& stage, uint64_t seed, int64_t env_steps, double eval_return);
  bool is_open() const { return file_.is_open(); }

 private:
  std::ofstream file_;
};

}  // namespace p3o
