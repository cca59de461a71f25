#include "p3o/imitation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numeric>

#include "json.hpp"
#include "p3o/adam.hpp"
#include "p3o/agent.hpp"
#include "p3o/kernels.hpp"

namespace p3o {

const std::array<float, ActionGrid::kSteerLevels> ActionGrid::steer_levels = {-1.0f, -0.5f, 0.0f,
                                                                             0.5f, 1.0f};
const std::array<float, ActionGrid::kThrottleLevels> ActionGrid::throttle_levels = {0.0f, 0.5f,
                                                                                   1.0f};

int discretize_action(float steer, float throttle) {
  const double sn = (std::clamp(double(steer), -1.0, 1.0) + 1.0) / 2.0;
  const double tn = std::clamp(double(throttle), 0.0, 1.0);
  int si = 0, ti = 0;
  double best = 1e9;
  for (int i = 0; i < ActionGrid::kSteerLevels; ++i) {
    const double d = std::fabs(sn - (double(ActionGrid::steer_levels[size_t(i)]) + 1.0) / 2.0);
    if (d < best) {
      best = d;
      si = i;
    }
  }
  best = 1e9;
  for (int i = 0; i < ActionGrid::kThrottleLevels; ++i) {
    const double d = std::fabs(tn - double(ActionGrid::throttle_levels[size_t(i)]));
    if (d < best) {
      best = d;
      ti = i;
    }
  }
  return si * ActionGrid::kThrottleLevels + ti;
}

std::array<float, 2> undiscretize_action(int cls) {
  require(cls >= 0 && cls < ActionGrid::kClasses,
          "action class must be in [0," + std::to_string(ActionGrid::kClasses) + ")");
  return {ActionGrid::steer_levels[size_t(cls / ActionGrid::kThrottleLevels)],
          ActionGrid::throttle_levels[size_t(cls % ActionGrid::kThrottleLevels)]};
}

void ExpertDataset::write_obs_float(int index, float* dst) const {
  require(index >= 0 && index < size(), "dataset index out of range");
  const size_t sz = size_t(3) * resolution * resolution;
  const uint8_t* src = obs.data() + size_t(index) * sz;
  for (size_t i = 0; i < sz; ++i) dst[i] = float(src[i]) * (1.0f / 255.0f);
}

ExpertDataset collect_expert_dataset(std::shared_ptr<const Track> track, const std::string& preset,
                                     int sets, int pairs_per_set, uint64_t seed,
                                     const EnvConfig& env_cfg, const ExpertConfig& expert_cfg) {
  require(sets >= 1 && pairs_per_set >= 1, "dataset sizes must be positive");
  const VariantSpec variant = variant_preset(preset);
  Env env(track, variant, mix_seed(seed, 0xe87), env_cfg);

  ExpertDataset data;
  data.preset = preset;
  data.seed = seed;
  data.resolution = env_cfg.resolution;
  const size_t obs_sz = size_t(3) * env_cfg.resolution * env_cfg.resolution;
  const int total = sets * pairs_per_set;
  data.obs.reserve(size_t(total) * obs_sz);
  data.actions.reserve(size_t(total) * 2);
  data.classes.reserve(size_t(total));

  bool first = true;
  while (data.size() < total) {
    if (first)
      env.reset();
    else
      env.reset_random();
    first = false;
    while (!env.done()) {
      const std::array<float, 2> a = expert_action(env.car(), *track, env_cfg, expert_cfg);
      if (data.size() < total) {
        const uint8_t* u8 = env.observation().u8.data();
        data.obs.insert(data.obs.end(), u8, u8 + obs_sz);
        data.actions.push_back(a[0]);
        data.actions.push_back(a[1]);
        data.classes.push_back(int32_t(discretize_action(a[0], a[1])));
      }
      env.step(a[0], a[1]);
    }
    require(env.lap_complete(), "expert failed to finish a lap while collecting demonstrations");
    if (data.size() >= total) break;
  }
  return data;
}

// ---------------------------------------------------------------------------
// dataset file IO: magic | u32 version | u64 header_len | JSON header |
// u8 images | f32 actions | i32 classes (little-endian)
// ---------------------------------------------------------------------------

namespace {
constexpr char kDataMagic[8] = {'P', '3', 'O', 'D', 'A', 'T', 'A', '\0'};
constexpr uint32_t kDataVersion = 1;
}  // namespace

void save_dataset(const ExpertDataset& data, const std::string& path) {
  nlohmann::json header;
  header["version"] = kDataVersion;
  header["preset"] = data.preset;
  header["seed"] = data.seed;
  header["resolution"] = data.resolution;
  header["count"] = data.size();
  header["grid"]["steer_levels"] = ActionGrid::steer_levels;
  header["grid"]["throttle_levels"] = ActionGrid::throttle_levels;
  const std::string hs = header.dump();

  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    require(f.good(), "cannot open for writing: " + tmp);
    f.write(kDataMagic, 8);
    const uint32_t ver = kDataVersion;
    f.write(reinterpret_cast<const char*>(&ver), 4);
    const uint64_t hlen = hs.size();
    f.write(reinterpret_cast<const char*>(&hlen), 8);
    f.write(hs.data(), std::streamsize(hs.size()));
    f.write(reinterpret_cast<const char*>(data.obs.data()), std::streamsize(data.obs.size()));
    f.write(reinterpret_cast<const char*>(data.actions.data()),
            std::streamsize(data.actions.size() * sizeof(float)));
    f.write(reinterpret_cast<const char*>(data.classes.data()),
            std::streamsize(data.classes.size() * sizeof(int32_t)));
    require(f.good(), "write failed: " + tmp);
  }
  require(std::rename(tmp.c_str(), path.c_str()) == 0, "atomic rename failed for " + path);
}

ExpertDataset load_dataset(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  require(f.good(), "cannot open dataset: " + path);
  char magic[8];
  f.read(magic, 8);
  require(f.good() && std::memcmp(magic, kDataMagic, 8) == 0, "not a dataset file: " + path);
  uint32_t ver = 0;
  f.read(reinterpret_cast<char*>(&ver), 4);
  require(f.good() && ver == kDataVersion,
          "unsupported dataset version " + std::to_string(ver) + " in " + path);
  uint64_t hlen = 0;
  f.read(reinterpret_cast<char*>(&hlen), 8);
  require(f.good() && hlen > 0 && hlen < (1u << 20), "corrupt dataset header length");
  std::string hs(hlen, '\0');
  f.read(hs.data(), std::streamsize(hlen));
  require(f.good(), "truncated dataset header");
  const nlohmann::json header = nlohmann::json::parse(hs, nullptr, false);
  require(!header.is_discarded(), "dataset header is not valid JSON");

  ExpertDataset data;
  data.preset = header.at("preset").get<std::string>();
  data.seed = header.at("seed").get<uint64_t>();
  data.resolution = header.at("resolution").get<int>();
  const int count = header.at("count").get<int>();
  require(count > 0 && data.resolution > 0, "corrupt dataset header");
  const auto steer = header.at("grid").at("steer_levels").get<std::vector<float>>();
  const auto thr = header.at("grid").at("throttle_levels").get<std::vector<float>>();
  require(std::equal(steer.begin(), steer.end(), ActionGrid::steer_levels.begin(),
                     ActionGrid::steer_levels.end()) &&
              std::equal(thr.begin(), thr.end(), ActionGrid::throttle_levels.begin(),
                         ActionGrid::throttle_levels.end()),
          "dataset action grid does not match this build");

  const size_t obs_sz = size_t(3) * data.resolution * data.resolution;
  data.obs.resize(size_t(count) * obs_sz);
  data.actions.resize(size_t(count) * 2);
  data.classes.resize(size_t(count));
  f.read(reinterpret_cast<char*>(data.obs.data()), std::streamsize(data.obs.size()));
  f.read(reinterpret_cast<char*>(data.actions.data()),
         std::streamsize(data.actions.size() * sizeof(float)));
  f.read(reinterpret_cast<char*>(data.classes.data()),
         std::streamsize(data.classes.size() * sizeof(int32_t)));
  require(f.good(), "truncated dataset payload in " + path);
  f.peek();
  require(f.eof(), "trailing bytes after dataset payload in " + path);
  for (int i = 0; i < count; ++i)
    require(data.classes[size_t(i)] ==
                discretize_action(data.actions[size_t(i) * 2], data.actions[size_t(i) * 2 + 1]),
            "dataset class/action mismatch at sample " + std::to_string(i));
  return data;
}

// ---------------------------------------------------------------------------
// step-1 behavior cloning
// ---------------------------------------------------------------------------

namespace {

// Mean CE and accuracy over `count` rows of logits.
void score_logits(const TensorF& logits, const ExpertDataset& data,
                  const std::vector<int>& indices, size_t start, int count, double& ce_sum,
                  int& correct) {
  const int K = logits.dim(1);
  for (int k = 0; k < count; ++k) {
    const int i = indices[start + size_t(k)];
    const float* row = logits.data.data() + size_t(k) * size_t(K);
    ce_sum += softmax_cross_entropy(row, K, data.classes[size_t(i)]);
    int arg = 0;
    for (int j = 1; j < K; ++j)
      if (row[j] > row[arg]) arg = j;
    if (arg == data.classes[size_t(i)]) ++correct;
  }
}

}  // namespace

std::pair<double, double> bc_eval(const ExpertDataset& data, const std::vector<int>& indices,
                                  const ParamStore& params) {
  require(!indices.empty(), "bc_eval: empty split");
  const int R = data.resolution;
  const size_t obs_sz = size_t(3) * R * R;
  const int B = 256;
  ClassifierCacheT<float> cache;
  double ce = 0;
  int correct = 0;
  for (size_t start = 0; start < indices.size(); start += size_t(B)) {
    const int count = int(std::min(size_t(B), indices.size() - start));
    TensorF x({count, 3, R, R});
    for (int k = 0; k < count; ++k)
      data.write_obs_float(indices[start + size_t(k)], x.data.data() + size_t(k) * obs_sz);
    classifier_forward_t(params, x, cache);
    score_logits(cache.logits, data, indices, start, count, ce, correct);
  }
  return {ce / double(indices.size()), double(correct) / double(indices.size())};
}

void init_classifier_prototype(ParamStore& params) {
  auto& w = params.at("classifier.fc.w").tensor;
  auto& b = params.at("classifier.fc.b").tensor;
  require(w.shape == std::vector<int>({ActionGrid::kClasses, 2}),
          "classifier shape does not match the action grid");
  const float inv_tau = 1.0f / 0.1f;
  for (int k = 0; k < ActionGrid::kClasses; ++k) {
    const std::array<float, 2> g = undiscretize_action(k);
    w.data[size_t(k) * 2 + 0] = 2.0f * g[0] * inv_tau;
    w.data[size_t(k) * 2 + 1] = 2.0f * g[1] * inv_tau;
    b.data[size_t(k)] = -(g[0] * g[0] + g[1] * g[1]) * inv_tau;
  }
}

Step1Stats train_step1(const ExpertDataset& data, ParamStore& params, const Step1Config& cfg,
                       uint64_t seed) {
  require(cfg.epochs >= 1 && cfg.batch >= 1, "step1 epochs and batch must be positive");
  require(cfg.lr > 0, "step1 lr must be positive");
  require(cfg.holdout >= 0 && cfg.holdout < 0.5, "step1 holdout fraction must be in [0,0.5)");
  require(cfg.target_accuracy >= 0 && cfg.target_accuracy <= 1,
          "step1 target_accuracy must be in [0,1]");
  require(data.size() >= 2, "step1 requires at least 2 samples");
  init_classifier_prototype(params);
  set_trainable(params, Stage::step1);
  AdamState adam = AdamState::init(params);

  std::vector<int> order(static_cast<size_t>(data.size()));
  std::iota(order.begin(), order.end(), 0);
  Rng rng(mix_seed(seed, 0x737031));
  rng.shuffle(order);
  const int n_hold = int(std::lround(cfg.holdout * data.size()));
  std::vector<int> hold(order.end() - n_hold, order.end());
  std::vector<int> train(order.begin(), order.end() - n_hold);
  require(!train.empty(), "step1 training split is empty");

  const int R = data.resolution;
  const int K = ActionGrid::kClasses;
  const size_t obs_sz = size_t(3) * R * R;
  ClassifierCacheT<float> cache;
  TensorF dlogits;
  Step1Stats stats;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(train);
    double ce_sum = 0;
    int correct = 0;
    for (size_t start = 0; start < train.size(); start += size_t(cfg.batch)) {
      const int B = int(std::min(size_t(cfg.batch), train.size() - start));
      TensorF x({B, 3, R, R});
      for (int k = 0; k < B; ++k)
        data.write_obs_float(train[start + size_t(k)], x.data.data() + size_t(k) * obs_sz);
      params.zero_grad();
      classifier_forward_t(params, x, cache);
      require(cache.logits.dim(1) == K, "classifier width does not match the action grid");
      score_logits(cache.logits, data, train, start, B, ce_sum, correct);

      dlogits.shape = cache.logits.shape;
      dlogits.data.resize(cache.logits.data.size());
      for (int k = 0; k < B; ++k) {
        const int target = data.classes[size_t(train[start + size_t(k)])];
        softmax_cross_entropy_backward(cache.logits.data.data() + size_t(k) * size_t(K), K, target,
                                       1.0f / float(B), dlogits.data.data() + size_t(k) * size_t(K));
      }
      classifier_backward_t(params, x, cache, dlogits);
      adam_step(params, adam, cfg.lr);
    }
    const double epoch_ce = ce_sum / double(train.size());
    if (!std::isfinite(epoch_ce))
      throw std::runtime_error("train_step1: non-finite loss in epoch " + std::to_string(epoch));
    stats.epoch_loss.push_back(epoch_ce);
    stats.epoch_accuracy.push_back(double(correct) / double(train.size()));
    if (cfg.target_accuracy > 0 && stats.epoch_accuracy.back() >= cfg.target_accuracy) break;
  }
  if (!hold.empty()) {
    const auto [hce, hacc] = bc_eval(data, hold, params);
    stats.holdout_ce = hce;
    stats.holdout_accuracy = hacc;
  }
  return stats;
}

}  // namespace p3o
