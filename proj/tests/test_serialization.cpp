#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "p3o/agent.hpp"
#include "p3o/checkpoint.hpp"
#include "p3o/config.hpp"
#include "p3o/imitation.hpp"
#include "p3o/metrics.hpp"
#include "p3o/rng.hpp"

using namespace p3o;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir() {
  const fs::path p = fs::temp_directory_path() / "p3o_serialization_tests";
  fs::create_directories(p);
  return p;
}

std::vector<char> read_bytes(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  REQUIRE(f.good());
  return std::vector<char>(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

void write_bytes(const fs::path& p, const std::vector<char>& bytes) {
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  f.write(bytes.data(), std::streamsize(bytes.size()));
  REQUIRE(f.good());
}

ArchConfig tiny_arch() {
  ArchConfig a;
  a.resolution = 46;
  a.conv_channels = {2, 3, 4, 5};
  a.latent_dim = 8;
  a.policy_hidden = 8;
  return a;
}

bool stores_equal(const ParamStore& a, const ParamStore& b) {
  if (a.entries().size() != b.entries().size()) return false;
  for (size_t i = 0; i < a.entries().size(); ++i) {
    const auto& ea = a.entries()[i];
    const auto& eb = b.entries()[i];
    if (ea.name != eb.name || ea.tag != eb.tag || ea.trainable != eb.trainable)
      return false;
    if (ea.tensor.shape != eb.tensor.shape) return false;
    if (std::memcmp(ea.tensor.data.data(), eb.tensor.data.data(),
                    ea.tensor.data.size() * sizeof(float)) != 0)
      return false;
  }
  return true;
}

}  // namespace

TEST_CASE("action grid anchors and round trip") {
  CHECK(ActionGrid::kClasses == 15);
  // class = steer_idx * 3 + throttle_idx with steer {-1,-.5,0,.5,1}, throttle {0,.5,1}.
  CHECK(discretize_action(0.9f, 0.9f) == 14);
  auto a = undiscretize_action(14);
  CHECK(a[0] == 1.0f);
  CHECK(a[1] == 1.0f);
  CHECK(discretize_action(0.0f, 0.0f) == 6);
  a = undiscretize_action(6);
  CHECK(a[0] == 0.0f);
  CHECK(a[1] == 0.0f);

  // Out-of-range inputs clamp to the boundary cells.
  CHECK(discretize_action(-5.0f, 7.0f) == 2);
  CHECK(discretize_action(2.0f, -1.0f) == 12);

  // Exact midpoints resolve to the lower index on both axes.
  CHECK(discretize_action(-0.75f, 0.25f) == 0);
  // Just past the midpoint snaps to the next level.
  CHECK(discretize_action(-0.74f, 0.26f) == 4);

  for (int k = 0; k < ActionGrid::kClasses; ++k) {
    const auto g = undiscretize_action(k);
    CHECK(discretize_action(g[0], g[1]) == k);
  }
  CHECK_THROWS(undiscretize_action(-1));
  CHECK_THROWS(undiscretize_action(15));
}

TEST_CASE("dataset save/load round trip and rejection") {
  const fs::path dir = scratch_dir();
  const fs::path path = dir / "tiny.ds";

  // Hand-built dataset: random images, actions snapped to their own class.
  ExpertDataset data;
  data.preset = "env3";
  data.seed = 99;
  data.resolution = 8;
  const int n = 6;
  Rng rng(4);
  data.obs.resize(size_t(n) * 3 * 8 * 8);
  for (auto& b : data.obs) b = uint8_t(rng.uniform_int(256));
  for (int i = 0; i < n; ++i) {
    const int cls = rng.uniform_int(ActionGrid::kClasses);
    const auto g = undiscretize_action(cls);
    data.actions.push_back(g[0]);
    data.actions.push_back(g[1]);
    data.classes.push_back(cls);
  }

  save_dataset(data, path.string());
  const ExpertDataset back = load_dataset(path.string());
  CHECK(back.preset == data.preset);
  CHECK(back.seed == data.seed);
  CHECK(back.resolution == data.resolution);
  CHECK(back.obs == data.obs);
  CHECK(back.actions == data.actions);
  CHECK(back.classes == data.classes);

  const std::vector<char> bytes = read_bytes(path);

  // Truncation, trailing garbage, and a broken magic are all rejected.
  const fs::path bad = dir / "bad.ds";
  std::vector<char> mod(bytes.begin(), bytes.end() - 7);
  write_bytes(bad, mod);
  CHECK_THROWS(load_dataset(bad.string()));

  mod = bytes;
  mod.push_back('x');
  write_bytes(bad, mod);
  CHECK_THROWS(load_dataset(bad.string()));

  mod = bytes;
  mod[0] = 'Q';
  write_bytes(bad, mod);
  CHECK_THROWS(load_dataset(bad.string()));

  // Flipping an action byte breaks the stored class/action consistency check.
  mod = bytes;
  const size_t action_off = bytes.size() - size_t(n) * (2 * 4 + 4) + 1;
  mod[action_off] = char(mod[action_off] ^ 0x7f);
  write_bytes(bad, mod);
  CHECK_THROWS(load_dataset(bad.string()));

  CHECK_THROWS(load_dataset((dir / "missing.ds").string()));
}

TEST_CASE("checkpoint round trip is byte-identical") {
  const fs::path dir = scratch_dir();
  const fs::path p1 = dir / "a.p3o";
  const fs::path p2 = dir / "b.p3o";

  const ArchConfig arch = tiny_arch();
  ParamStore params = build_agent(arch, 21);
  add_prompt(params, arch, 22, false);
  add_classifier(params, arch, 23);
  set_trainable(params, Stage::step1);

  CheckpointMeta meta;
  meta.stage = Stage::step1;
  meta.preset = "env3";
  meta.seed = 9;
  meta.arch = arch;
  save_checkpoint(p1.string(), params, meta);

  ParamStore loaded;
  const CheckpointMeta m = load_checkpoint(p1.string(), loaded);
  CHECK(m.stage == Stage::step1);
  CHECK(m.preset == "env3");
  CHECK(m.seed == 9);
  CHECK(m.arch.resolution == 46);
  CHECK(m.arch.latent_dim == 8);
  CHECK(stores_equal(params, loaded));

  // save -> load -> save reproduces the file bytes exactly.
  save_checkpoint(p2.string(), loaded, m);
  CHECK(read_bytes(p1) == read_bytes(p2));

  const CheckpointMeta peeked = peek_checkpoint(p1.string());
  CHECK(peeked.preset == "env3");
  CHECK(peeked.seed == 9);
}

TEST_CASE("checkpoint corruption and truncation are rejected") {
  const fs::path dir = scratch_dir();
  const fs::path good = dir / "good.p3o";
  const fs::path bad = dir / "tampered.p3o";

  const ArchConfig arch = tiny_arch();
  ParamStore params = build_agent(arch, 5);
  CheckpointMeta meta;
  meta.arch = arch;
  save_checkpoint(good.string(), params, meta);
  const std::vector<char> bytes = read_bytes(good);

  auto rejects = [&](std::vector<char> mod) {
    write_bytes(bad, mod);
    ParamStore out;
    CHECK_THROWS_AS(load_checkpoint(bad.string(), out), std::invalid_argument);
  };

  // Bad magic.
  {
    auto mod = bytes;
    mod[2] = 'x';
    rejects(mod);
  }
  // Unsupported format version (u32 after the 8-byte magic).
  {
    auto mod = bytes;
    mod[8] = char(mod[8] + 1);
    rejects(mod);
  }
  // Manifest corruption (bytes after the u64 length at offset 12).
  {
    auto mod = bytes;
    mod[24] = char(mod[24] ^ 0x40);
    rejects(mod);
  }
  // Payload corruption breaks the trailing checksum.
  {
    auto mod = bytes;
    mod[bytes.size() / 2] = char(mod[bytes.size() / 2] ^ 0x01);
    rejects(mod);
  }
  // Checksum corruption.
  {
    auto mod = bytes;
    mod.back() = char(mod.back() ^ 0x01);
    rejects(mod);
  }
  // Truncation, including dropping only the checksum tail.
  rejects(std::vector<char>(bytes.begin(), bytes.end() - 3));
  rejects(std::vector<char>(bytes.begin(), bytes.begin() + 16));

  ParamStore out;
  CHECK_THROWS(load_checkpoint((dir / "absent.p3o").string(), out));

  // The original file still loads after all that.
  CHECK_NOTHROW(load_checkpoint(good.string(), out));
  CHECK(stores_equal(out, params));
}

TEST_CASE("format_double round trips") {
  CHECK(format_double(0.5) == "0.5");
  CHECK(format_double(0.0) == "0");
  CHECK(format_double(-1.25) == "-1.25");

  Rng rng(8);
  for (int i = 0; i < 1000; ++i) {
    double v;
    if (i % 3 == 0) {
      v = rng.uniform(-1e6, 1e6);
    } else if (i % 3 == 1) {
      v = rng.normal() * 1e-8;
    } else {
      v = rng.normal() * 1e12;
    }
    const std::string s = format_double(v);
    CHECK(std::stod(s) == v);
  }
}

TEST_CASE("metrics and eval sinks write headers once") {
  const fs::path dir = scratch_dir();
  const fs::path mp = dir / "metrics.csv";
  fs::remove(mp);

  UpdateRow row;
  row.stage = "pretrain";
  row.seed = 3;
  row.env_steps = 1024;
  row.update = 1;
  row.mean_return = -12.5;
  row.policy_loss = 0.25;
  {
    MetricsSink sink(mp.string(), false);
    REQUIRE(sink.is_open());
    sink.write_row(row);
  }
  {
    MetricsSink sink(mp.string(), true);  // append: no second header
    row.update = 2;
    row.env_steps = 2048;
    sink.write_row(row);
  }
  std::ifstream f(mp);
  std::string line;
  std::getline(f, line);
  CHECK(line == MetricsSink::kHeader);
  std::getline(f, line);
  CHECK(line.rfind("pretrain,3,1024,1,-12.5,0.25,", 0) == 0);
  std::getline(f, line);
  CHECK(line.rfind("pretrain,3,2048,2,", 0) == 0);
  CHECK(!std::getline(f, line));

  const fs::path ep = dir / "evals.csv";
  fs::remove(ep);
  {
    EvalSink sink(ep.string(), false);
    sink.write_row("step2", 7, 4096, 812.125);
  }
  std::ifstream ef(ep);
  std::getline(ef, line);
  CHECK(line == EvalSink::kHeader);
  std::getline(ef, line);
  CHECK(line == "step2,7,4096,812.125");
}

TEST_CASE("run config parses, echoes, and rejects") {
  const RunConfig defaults = parse_run_config("{}");
  CHECK(defaults.arch.resolution == 48);
  CHECK(defaults.ppo.clip_eps == 0.2);
  CHECK(defaults.pretrain.budget == 500000);
  CHECK(defaults.step2.lr == 2e-4);
  CHECK(defaults.imitation.prompt_init == "random");
  CHECK(defaults.strict_repro == false);

  // The echo is fully resolved and parses back to the same echo.
  const std::string echo = run_config_to_json(defaults);
  CHECK(run_config_to_json(parse_run_config(echo)) == echo);

  // Overrides land where addressed.
  const RunConfig over = parse_run_config(R"({"ppo": {"clip_eps": 0.1}, "track_seed": 11})");
  CHECK(over.ppo.clip_eps == 0.1);
  CHECK(over.track_seed == 11);

  // Unknown keys are reported with their dotted path.
  try {
    parse_run_config(R"({"ppo": {"clip_epsx": 1}})");
    FAIL("expected unknown-key rejection");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("ppo.clip_epsx") != std::string::npos);
  }

  CHECK_THROWS(parse_run_config("not json"));
  CHECK_THROWS(parse_run_config(R"({"ppo": {"clip_eps": 1.5}})"));
  // Observation pipeline must agree between env and network.
  CHECK_THROWS(parse_run_config(R"({"env": {"resolution": 46}})"));

  // strict_repro zeroes the wall clock through the stage-config helper.
  RunConfig strict = parse_run_config(R"({"strict_repro": true})");
  const PPOConfig sp = ppo_with_lr(strict, 5e-4);
  CHECK(sp.lr == 5e-4);
  CHECK(sp.record_wall_time == false);
  const PPOConfig loose = ppo_with_lr(defaults, 5e-4);
  CHECK(loose.record_wall_time == true);
}
