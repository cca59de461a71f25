#include "p3o/agent.hpp"

#include <cmath>
#include <utility>

#include "p3o/rng.hpp"

namespace p3o {

// ---------------------------------------------------------------------------
// shapes
// ---------------------------------------------------------------------------

int min_resolution() {
  int r = 1;
  for (int l = 0; l < 4; ++l) r = (r - 1) * kConvStride + kConvKernel;
  return r;
}

ArchShapes compute_arch_shapes(const ArchConfig& arch) {
  require(arch.in_channels > 0 && arch.latent_dim > 0 && arch.policy_hidden > 0 &&
              arch.action_dim > 0 && arch.num_classes > 0,
          "arch widths must be positive");
  for (int c : arch.conv_channels) require(c > 0, "conv channel counts must be positive");
  require(arch.resolution >= min_resolution(),
          "resolution " + std::to_string(arch.resolution) +
              " is too small: the conv stack requires at least " +
              std::to_string(min_resolution()));
  ArchShapes s;
  int r = arch.resolution;
  for (int l = 0; l < 4; ++l) {
    r = conv_out_extent(r);
    s.spatial[l] = r;
  }
  s.flat_features = arch.conv_channels[3] * s.spatial[3] * s.spatial[3];
  return s;
}

// ---------------------------------------------------------------------------
// construction
// ---------------------------------------------------------------------------

namespace {

template <class T>
void fill_normal(TensorT<T>& t, Rng& rng, double stddev) {
  for (auto& v : t.data) v = T(rng.normal() * stddev);
}

// 4x conv + fc observation tower under `prefix`, He-initialized.
template <class T>
void add_tower(ParamStoreT<T>& params, const ArchConfig& arch, const std::string& prefix,
               Component tag, Rng& rng) {
  const ArchShapes shapes = compute_arch_shapes(arch);
  int cin = arch.in_channels;
  for (int l = 0; l < 4; ++l) {
    const int cout = arch.conv_channels[size_t(l)];
    TensorT<T> w({cout, cin, kConvKernel, kConvKernel});
    fill_normal(w, rng, std::sqrt(2.0 / (double(cin) * kConvKernel * kConvKernel)));
    params.add(prefix + ".conv" + std::to_string(l + 1) + ".w", tag, std::move(w));
    params.add(prefix + ".conv" + std::to_string(l + 1) + ".b", tag, TensorT<T>({cout}));
    cin = cout;
  }
  TensorT<T> fw({arch.latent_dim, shapes.flat_features});
  fill_normal(fw, rng, std::sqrt(2.0 / double(shapes.flat_features)));
  params.add(prefix + ".fc.w", tag, std::move(fw));
  params.add(prefix + ".fc.b", tag, TensorT<T>({arch.latent_dim}));
}

const char* const kTowerSuffixes[] = {"conv1.w", "conv1.b", "conv2.w", "conv2.b", "conv3.w",
                                      "conv3.b", "conv4.w", "conv4.b", "fc.w",    "fc.b"};

}  // namespace

template <class T>
ParamStoreT<T> build_agent_t(const ArchConfig& arch, uint64_t seed) {
  ParamStoreT<T> params;
  Rng rng(mix_seed(seed, 0x61726368));
  add_tower(params, arch, "encoder", Component::encoder, rng);

  TensorT<T> w1({arch.policy_hidden, arch.latent_dim});
  fill_normal(w1, rng, std::sqrt(2.0 / double(arch.latent_dim)));
  params.add("policy.fc1.w", Component::policy, std::move(w1));
  params.add("policy.fc1.b", Component::policy, TensorT<T>({arch.policy_hidden}));
  TensorT<T> w2({arch.policy_hidden, arch.policy_hidden});
  fill_normal(w2, rng, std::sqrt(2.0 / double(arch.policy_hidden)));
  params.add("policy.fc2.w", Component::policy, std::move(w2));
  params.add("policy.fc2.b", Component::policy, TensorT<T>({arch.policy_hidden}));

  TensorT<T> aw({arch.action_dim, arch.policy_hidden});
  fill_normal(aw, rng, 0.01);  // small head init keeps early actions near the mean prior
  params.add("action.mean.w", Component::action, std::move(aw));
  params.add("action.mean.b", Component::action, TensorT<T>({arch.action_dim}));
  params.add("action.log_std", Component::action,
             TensorT<T>::full({arch.action_dim}, T(std::log(0.5))));

  TensorT<T> vw({1, arch.policy_hidden});
  fill_normal(vw, rng, 1.0 / std::sqrt(double(arch.policy_hidden)));
  params.add("value.fc.w", Component::value, std::move(vw));
  params.add("value.fc.b", Component::value, TensorT<T>({1}));
  return params;
}

template <class T>
void add_prompt_t(ParamStoreT<T>& params, const ArchConfig& arch, uint64_t seed,
                  bool copy_encoder) {
  require(!params.has_component(Component::prompt), "prompt entries already present");
  if (copy_encoder) {
    for (const char* suffix : kTowerSuffixes) {
      const auto& src = params.at(std::string("encoder.") + suffix);
      params.add(std::string("prompt.") + suffix, Component::prompt, src.tensor);
    }
  } else {
    Rng rng(mix_seed(seed, 0x70726f6d7074));
    add_tower(params, arch, "prompt", Component::prompt, rng);
  }
}

template <class T>
void add_classifier_t(ParamStoreT<T>& params, const ArchConfig& arch, uint64_t seed) {
  require(!params.has_component(Component::classifier), "classifier entries already present");
  Rng rng(mix_seed(seed, 0x636c617373));
  TensorT<T> w({arch.num_classes, arch.action_dim});
  fill_normal(w, rng, 1.0 / std::sqrt(double(arch.action_dim)));
  params.add("classifier.fc.w", Component::classifier, std::move(w));
  params.add("classifier.fc.b", Component::classifier, TensorT<T>({arch.num_classes}));
}

// ---------------------------------------------------------------------------
// encoder tower
// ---------------------------------------------------------------------------

template <class T>
const TensorT<T>& encoder_forward_t(const ParamStoreT<T>& params, const std::string& prefix,
                                    const TensorT<T>& obs, EncoderCacheT<T>& cache) {
  require(obs.ndim() == 4, "encoder input must be [B,C,H,W], got " + shape_str(obs.shape));
  const TensorT<T>* x = &obs;
  for (int l = 0; l < 4; ++l) {
    const std::string layer = prefix + ".conv" + std::to_string(l + 1);
    conv2d_forward(*x, params.at(layer + ".w").tensor, params.at(layer + ".b").tensor,
                   cache.pre[l], cache.conv[l]);
    relu_forward(cache.pre[l], cache.act[l]);
    x = &cache.act[l];
  }
  const auto& a3 = cache.act[3];
  cache.flat.shape = {a3.dim(0), a3.dim(1) * a3.dim(2) * a3.dim(3)};
  cache.flat.data = a3.data;  // row-major [B,C,H,W] flattens per sample as-is
  linear_forward(cache.flat, params.at(prefix + ".fc.w").tensor,
                 params.at(prefix + ".fc.b").tensor, cache.fc_pre);
  relu_forward(cache.fc_pre, cache.latent);
  return cache.latent;
}

template <class T>
void encoder_backward_t(ParamStoreT<T>& params, const std::string& prefix, const TensorT<T>& obs,
                        EncoderCacheT<T>& cache, const TensorT<T>& dlatent, TensorT<T>* dobs) {
  require(dlatent.shape == cache.latent.shape, "encoder backward dlatent shape mismatch");
  TensorT<T> dfc_pre;
  relu_backward(cache.fc_pre, dlatent, dfc_pre);
  auto& fw = params.at(prefix + ".fc.w");
  auto& fb = params.at(prefix + ".fc.b");
  TensorT<T> dflat;
  linear_backward(cache.flat, fw.tensor, dfc_pre, &dflat,
                  fw.trainable ? &fw.tensor.grad : nullptr,
                  fb.trainable ? &fb.tensor.grad : nullptr);
  TensorT<T> dact;
  dact.shape = cache.act[3].shape;
  dact.data = std::move(dflat.data);
  for (int l = 3; l >= 0; --l) {
    TensorT<T> dpre;
    relu_backward(cache.pre[l], dact, dpre);
    auto& w = params.at(prefix + ".conv" + std::to_string(l + 1) + ".w");
    auto& b = params.at(prefix + ".conv" + std::to_string(l + 1) + ".b");
    TensorT<T> dx;
    TensorT<T>* dxp = (l > 0) ? &dx : dobs;
    conv2d_backward(dpre, w.tensor, cache.conv[l], dxp,
                    w.trainable ? &w.tensor.grad : nullptr,
                    b.trainable ? &b.tensor.grad : nullptr);
    if (l > 0) dact = std::move(dx);
  }
  (void)obs;
}

// ---------------------------------------------------------------------------
// policy trunk
// ---------------------------------------------------------------------------

namespace {

template <class T>
const TensorT<T>& trunk_forward(const ParamStoreT<T>& params, const TensorT<T>& latent,
                                TrunkCacheT<T>& cache) {
  linear_forward(latent, params.at("policy.fc1.w").tensor, params.at("policy.fc1.b").tensor,
                 cache.pre1);
  relu_forward(cache.pre1, cache.act1);
  linear_forward(cache.act1, params.at("policy.fc2.w").tensor, params.at("policy.fc2.b").tensor,
                 cache.pre2);
  relu_forward(cache.pre2, cache.act2);
  return cache.act2;
}

template <class T>
void trunk_backward(ParamStoreT<T>& params, const TensorT<T>& latent, TrunkCacheT<T>& cache,
                    const TensorT<T>& dt, TensorT<T>& dlatent) {
  TensorT<T> dpre2;
  relu_backward(cache.pre2, dt, dpre2);
  auto& w2 = params.at("policy.fc2.w");
  auto& b2 = params.at("policy.fc2.b");
  TensorT<T> dact1;
  linear_backward(cache.act1, w2.tensor, dpre2, &dact1,
                  w2.trainable ? &w2.tensor.grad : nullptr,
                  b2.trainable ? &b2.tensor.grad : nullptr);
  TensorT<T> dpre1;
  relu_backward(cache.pre1, dact1, dpre1);
  auto& w1 = params.at("policy.fc1.w");
  auto& b1 = params.at("policy.fc1.b");
  linear_backward(latent, w1.tensor, dpre1, &dlatent,
                  w1.trainable ? &w1.tensor.grad : nullptr,
                  b1.trainable ? &b1.tensor.grad : nullptr);
}

}  // namespace

// ---------------------------------------------------------------------------
// actor-critic
// ---------------------------------------------------------------------------

template <class T>
void actor_critic_forward_t(const ParamStoreT<T>& params, const TensorT<T>& obs,
                            AgentCacheT<T>& cache, bool use_prompt) {
  if (use_prompt)
    require(params.has_component(Component::prompt), "prompt entries not present in store");
  const std::string prefix = use_prompt ? "prompt" : "encoder";
  const auto& latent = encoder_forward_t(params, prefix, obs, cache.enc);
  const auto& t = trunk_forward(params, latent, cache.trunk);
  linear_forward(t, params.at("action.mean.w").tensor, params.at("action.mean.b").tensor,
                 cache.mean);
  TensorT<T> v2;
  linear_forward(t, params.at("value.fc.w").tensor, params.at("value.fc.b").tensor, v2);
  cache.value.shape = {t.dim(0)};
  cache.value.data = std::move(v2.data);
}

template <class T>
void actor_critic_backward_t(ParamStoreT<T>& params, const TensorT<T>& obs, AgentCacheT<T>& cache,
                             const TensorT<T>& dmean, const std::vector<T>& dvalue,
                             bool use_prompt) {
  const int B = cache.mean.dim(0);
  require(dmean.shape == cache.mean.shape, "actor-critic backward dmean shape mismatch");
  require(int(dvalue.size()) == B, "actor-critic backward dvalue size mismatch");
  const auto& t = cache.trunk.act2;

  auto& aw = params.at("action.mean.w");
  auto& ab = params.at("action.mean.b");
  TensorT<T> dt;
  linear_backward(t, aw.tensor, dmean, &dt, aw.trainable ? &aw.tensor.grad : nullptr,
                  ab.trainable ? &ab.tensor.grad : nullptr);

  auto& vw = params.at("value.fc.w");
  auto& vb = params.at("value.fc.b");
  TensorT<T> dv({B, 1}, dvalue);
  TensorT<T> dt_v;
  linear_backward(t, vw.tensor, dv, &dt_v, vw.trainable ? &vw.tensor.grad : nullptr,
                  vb.trainable ? &vb.tensor.grad : nullptr);
  for (size_t i = 0; i < dt.data.size(); ++i) dt.data[i] += dt_v.data[i];

  TensorT<T> dlatent;
  trunk_backward(params, cache.enc.latent, cache.trunk, dt, dlatent);
  encoder_backward_t<T>(params, use_prompt ? "prompt" : "encoder", obs, cache.enc, dlatent,
                        nullptr);
}

// ---------------------------------------------------------------------------
// step-1 classifier tower
// ---------------------------------------------------------------------------

template <class T>
void classifier_forward_t(const ParamStoreT<T>& params, const TensorT<T>& obs,
                          ClassifierCacheT<T>& cache) {
  require(params.has_component(Component::prompt), "classifier tower requires prompt entries");
  require(params.has_component(Component::classifier), "classifier entries not present in store");
  const auto& latent = encoder_forward_t(params, "prompt", obs, cache.enc);
  const auto& t = trunk_forward(params, latent, cache.trunk);
  linear_forward(t, params.at("action.mean.w").tensor, params.at("action.mean.b").tensor,
                 cache.mean);
  linear_forward(cache.mean, params.at("classifier.fc.w").tensor,
                 params.at("classifier.fc.b").tensor, cache.logits);
}

template <class T>
void classifier_backward_t(ParamStoreT<T>& params, const TensorT<T>& obs,
                           ClassifierCacheT<T>& cache, const TensorT<T>& dlogits) {
  require(dlogits.shape == cache.logits.shape, "classifier backward dlogits shape mismatch");
  auto& cw = params.at("classifier.fc.w");
  auto& cb = params.at("classifier.fc.b");
  TensorT<T> dmean;
  linear_backward(cache.mean, cw.tensor, dlogits, &dmean,
                  cw.trainable ? &cw.tensor.grad : nullptr,
                  cb.trainable ? &cb.tensor.grad : nullptr);
  auto& aw = params.at("action.mean.w");
  auto& ab = params.at("action.mean.b");
  TensorT<T> dt;
  linear_backward(cache.trunk.act2, aw.tensor, dmean, &dt,
                  aw.trainable ? &aw.tensor.grad : nullptr,
                  ab.trainable ? &ab.tensor.grad : nullptr);
  TensorT<T> dlatent;
  trunk_backward(params, cache.enc.latent, cache.trunk, dt, dlatent);
  encoder_backward_t<T>(params, "prompt", obs, cache.enc, dlatent, nullptr);
}

// ---------------------------------------------------------------------------
// single-observation helpers
// ---------------------------------------------------------------------------

namespace {

TensorF ensure_batched(const TensorF& obs) {
  if (obs.ndim() == 4) {
    require(obs.dim(0) == 1, "single-observation helper expects batch size 1");
    return obs;
  }
  require(obs.ndim() == 3, "observation must be [C,H,W] or [1,C,H,W], got " + shape_str(obs.shape));
  TensorF x({1, obs.dim(0), obs.dim(1), obs.dim(2)}, obs.data);
  return x;
}

}  // namespace

std::vector<float> current_log_std(const ParamStore& params) {
  const auto& t = params.at("action.log_std").tensor;
  std::vector<float> out(t.data.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = clamp_log_std(t.data[i]);
  return out;
}

PolicyEval policy_eval(const ParamStore& params, const TensorF& obs, bool use_prompt) {
  const TensorF x = ensure_batched(obs);
  AgentCacheT<float> cache;
  actor_critic_forward_t(params, x, cache, use_prompt);
  PolicyEval ev;
  ev.mean = cache.mean.data;
  ev.log_std = current_log_std(params);
  ev.value = cache.value.data[0];
  ev.latent = cache.enc.latent.data;
  return ev;
}

std::vector<float> classifier_logits(const ParamStore& params, const TensorF& obs) {
  const TensorF x = ensure_batched(obs);
  ClassifierCacheT<float> cache;
  classifier_forward_t(params, x, cache);
  return cache.logits.data;
}

ParamStore build_agent(const ArchConfig& arch, uint64_t seed) {
  return build_agent_t<float>(arch, seed);
}
void add_prompt(ParamStore& params, const ArchConfig& arch, uint64_t seed, bool copy_encoder) {
  add_prompt_t<float>(params, arch, seed, copy_encoder);
}
void add_classifier(ParamStore& params, const ArchConfig& arch, uint64_t seed) {
  add_classifier_t<float>(params, arch, seed);
}

// ---------------------------------------------------------------------------
// explicit instantiations (float for training, double for gradcheck)
// ---------------------------------------------------------------------------

#define P3O_INSTANTIATE_AGENT(T)                                                               \
  template ParamStoreT<T> build_agent_t<T>(const ArchConfig&, uint64_t);                       \
  template void add_prompt_t<T>(ParamStoreT<T>&, const ArchConfig&, uint64_t, bool);           \
  template void add_classifier_t<T>(ParamStoreT<T>&, const ArchConfig&, uint64_t);             \
  template const TensorT<T>& encoder_forward_t<T>(const ParamStoreT<T>&, const std::string&,   \
                                                  const TensorT<T>&, EncoderCacheT<T>&);       \
  template void encoder_backward_t<T>(ParamStoreT<T>&, const std::string&, const TensorT<T>&,  \
                                      EncoderCacheT<T>&, const TensorT<T>&, TensorT<T>*);      \
  template void actor_critic_forward_t<T>(const ParamStoreT<T>&, const TensorT<T>&,            \
                                          AgentCacheT<T>&, bool);                              \
  template void actor_critic_backward_t<T>(ParamStoreT<T>&, const TensorT<T>&, AgentCacheT<T>&, \
                                           const TensorT<T>&, const std::vector<T>&, bool);    \
  template void classifier_forward_t<T>(const ParamStoreT<T>&, const TensorT<T>&,              \
                                        ClassifierCacheT<T>&);                                 \
  template void classifier_backward_t<T>(ParamStoreT<T>&, const TensorT<T>&,                   \
                                         ClassifierCacheT<T>&, const TensorT<T>&);

P3O_INSTANTIATE_AGENT(float)
P3O_INSTANTIATE_AGENT(double)

#undef P3O_INSTANTIATE_AGENT

}  // namespace p3o
