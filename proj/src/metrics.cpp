#include "p3o/metrics.hpp"

#include <charconv>
#include <filesystem>

#include "p3o/tensor.hpp"

namespace p3o {

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  require(res.ec == std::errc{}, "format_double: to_chars failed");
  return std::string(buf, res.ptr);
}

namespace {

std::ofstream open_sink(const std::string& path, bool append, const char* header) {
  const bool fresh = !append || !std::filesystem::exists(path);
  std::ofstream f(path, append ? (std::ios::out | std::ios::app) : std::ios::out);
  require(f.good(), "cannot open csv for writing: " + path);
  if (fresh) {
    f << header << '\n';
    f.flush();
  }
  return f;
}

}  // namespace

MetricsSink::MetricsSink(const std::string& path, bool append)
    : file_(open_sink(path, append, kHeader)) {}

void MetricsSink::write_row(const UpdateRow& row) {
  if (!file_.is_open()) return;
  file_ << row.stage << ',' << row.seed << ',' << row.env_steps << ',' << row.update << ','
        << format_double(row.mean_return) << ',' << format_double(row.policy_loss) << ','
        << format_double(row.value_loss) << ',' << format_double(row.entropy) << ','
        << format_double(row.clip_fraction) << ',' << format_double(row.wall_seconds) << '\n';
  file_.flush();
  require(file_.good(), "csv write failed");
}

EvalSink::EvalSink(const std::string& path, bool append)
    : file_(open_sink(path, append, kHeader)) {}

void EvalSink::write_row(const std::string& stage, uint64_t seed, int64_t env_steps,
                         double eval_return) {
  if (!file_.is_open()) return;
  file_ << stage << ',' << seed << ',' << env_steps << ',' << format_double(eval_return) << '\n';
  file_.flush();
  require(file_.good(), "csv write failed");
}

}  // namespace p3o
