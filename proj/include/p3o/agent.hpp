#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "p3o/kernels.hpp"
#include "p3o/param_store.hpp"
#include "p3o/tensor.hpp"

namespace p3o {

// ---------------------------------------------------------------------------
// architecture description
//
// Observation tower: 4x [conv 4x4 stride 2 + relu] -> flatten -> fc + relu.
// Policy trunk: two relu fc layers. Heads: linear action mean + a
// state-independent log_std vector, linear value, and (for step 1) a linear
// classifier on top of the frozen action mean.
// ---------------------------------------------------------------------------

struct ArchConfig {
  int resolution = 48;  // square observation side length
  int in_channels = 3;
  std::array<int, 4> conv_channels{8, 16, 32, 64};
  int latent_dim = 128;
  int policy_hidden = 128;
  int action_dim = 2;
  int num_classes = 15;
};

struct ArchShapes {
  std::array<int, 4> spatial{};  // side length after each conv layer
  int flat_features = 0;
};

// Smallest square input the 4-layer conv stack accepts (every layer needs at
// least one full 4x4 window).
int min_resolution();

// Throws std::invalid_argument with the required minimum when the resolution
// is too small, and on non-positive widths.
ArchShapes compute_arch_shapes(const ArchConfig& arch);

// ---------------------------------------------------------------------------
// construction
// ---------------------------------------------------------------------------

template <class T>
ParamStoreT<T> build_agent_t(const ArchConfig& arch, uint64_t seed);
ParamStore build_agent(const ArchConfig& arch, uint64_t seed);

// Adds prompt.* entries shaped like the encoder tower. copy_encoder=true
// clones the encoder values (warm start); false draws a fresh init.
template <class T>
void add_prompt_t(ParamStoreT<T>& params, const ArchConfig& arch, uint64_t seed, bool copy_encoder);
void add_prompt(ParamStore& params, const ArchConfig& arch, uint64_t seed, bool copy_encoder);

template <class T>
void add_classifier_t(ParamStoreT<T>& params, const ArchConfig& arch, uint64_t seed);
void add_classifier(ParamStore& params, const ArchConfig& arch, uint64_t seed);

// ---------------------------------------------------------------------------
// forward/backward caches
// ---------------------------------------------------------------------------

template <class T>
struct EncoderCacheT {
  Conv2dCache<T> conv[4];
  TensorT<T> pre[4];   // conv pre-activations
  TensorT<T> act[4];   // post-relu
  TensorT<T> flat;     // [B, flat_features]
  TensorT<T> fc_pre;   // [B, D]
  TensorT<T> latent;   // [B, D] post-relu
};

template <class T>
struct TrunkCacheT {
  TensorT<T> pre1, act1, pre2, act2;  // act2 is the trunk output [B, H]
};

template <class T>
struct AgentCacheT {
  EncoderCacheT<T> enc;
  TrunkCacheT<T> trunk;
  TensorT<T> mean;   // [B, A]
  TensorT<T> value;  // [B]
};

template <class T>
struct ClassifierCacheT {
  EncoderCacheT<T> enc;
  TrunkCacheT<T> trunk;
  TensorT<T> mean;    // [B, A]
  TensorT<T> logits;  // [B, K]
};

// ---------------------------------------------------------------------------
// passes
//
// Backward passes accumulate into entry.tensor.grad for trainable entries
// only; frozen entries are passed through (their grads stay untouched).
// ---------------------------------------------------------------------------

// prefix is "encoder" or "prompt".
template <class T>
const TensorT<T>& encoder_forward_t(const ParamStoreT<T>& params, const std::string& prefix,
                                    const TensorT<T>& obs, EncoderCacheT<T>& cache);
template <class T>
void encoder_backward_t(ParamStoreT<T>& params, const std::string& prefix, const TensorT<T>& obs,
                        EncoderCacheT<T>& cache, const TensorT<T>& dlatent, TensorT<T>* dobs);

// obs [B, C, R, R] -> cache.mean [B, A], cache.value [B].
template <class T>
void actor_critic_forward_t(const ParamStoreT<T>& params, const TensorT<T>& obs,
                            AgentCacheT<T>& cache, bool use_prompt);
template <class T>
void actor_critic_backward_t(ParamStoreT<T>& params, const TensorT<T>& obs, AgentCacheT<T>& cache,
                             const TensorT<T>& dmean, const std::vector<T>& dvalue,
                             bool use_prompt);

// Step-1 tower: prompt encoder -> trunk -> action mean -> classifier logits.
template <class T>
void classifier_forward_t(const ParamStoreT<T>& params, const TensorT<T>& obs,
                          ClassifierCacheT<T>& cache);
template <class T>
void classifier_backward_t(ParamStoreT<T>& params, const TensorT<T>& obs,
                           ClassifierCacheT<T>& cache, const TensorT<T>& dlogits);

// ---------------------------------------------------------------------------
// single-observation helpers (float)
// ---------------------------------------------------------------------------

struct PolicyEval {
  std::vector<float> mean;     // [A]
  std::vector<float> log_std;  // [A], clamped
  float value = 0.0f;
  std::vector<float> latent;   // [D]
};

// obs [C,R,R] or [1,C,R,R].
PolicyEval policy_eval(const ParamStore& params, const TensorF& obs, bool use_prompt);
std::vector<float> classifier_logits(const ParamStore& params, const TensorF& obs);

// Clamped log_std values as stored in action.log_std.
std::vector<float> current_log_std(const ParamStore& params);

}  // namespace p3o
