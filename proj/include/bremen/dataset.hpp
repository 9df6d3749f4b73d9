#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "bremen/env.hpp"
#include "bremen/tensor.hpp"

namespace bremen {

struct GaussianMlpPolicy;

struct Transition {
  Vector s;
  Vector a;  // executed (clipped) action
  double r = 0.0;
  Vector s_next;
  bool done = false;
  std::uint32_t deployment_index = 0;
};

/// A contiguous run of transitions produced by one collector (e.g. the
/// epsilon-greedy 40% of an eps1 dataset).
struct Segment {
  std::string label;
  std::size_t begin = 0;
  std::size_t end = 0;
};

struct DatasetMeta {
  std::uint64_t seed = 0;
  std::uint64_t policy_hash = 0;
  std::string noise_scheme = "none";
  std::vector<Segment> segments;
};

struct Dataset {
  std::string env_id;
  std::size_t state_dim = 0;
  std::size_t action_dim = 0;
  std::vector<Transition> transitions;
  DatasetMeta meta;

  std::size_t size() const { return transitions.size(); }
  bool empty() const { return transitions.empty(); }

  Matrix states() const;
  Matrix actions() const;
  Matrix next_states() const;

  bool operator==(const Dataset& other) const;
};

Dataset make_empty_dataset(const EnvSpec& spec);

/// Appends `batch` to `d_all` and replaces `latest` with it (D_all and D of the
/// deployment loop). Throws ShapeError on dimension mismatch.
void append_batch(Dataset& d_all, Dataset& latest, const Dataset& batch);

struct SplitRatio {
  std::size_t train = 2;
  std::size_t val = 1;
};

/// Seeded Fisher-Yates split; the training part gets ceil(n * train / (train + val)) items.
std::pair<Dataset, Dataset> split_train_val(const Dataset& d, SplitRatio ratio, std::uint64_t seed);

/// Columnar binary file: "BRDS", u32 version, header strings and dims, then each
/// column as little-endian f64 (flags as u8, deployment indices as u32).
void save_dataset(const Dataset& d, const std::string& path);
Dataset load_dataset(const std::string& path);
void export_jsonl(const Dataset& d, const std::string& path);

/// Rolls out `policy` (with its stationary noise) in the real env for `count` steps.
Dataset collect_transitions(Env& env, const GaussianMlpPolicy& policy, std::size_t count,
                            std::uint64_t seed, std::uint32_t deployment_index);

enum class NoiseScheme { Eps1, Eps3, Gaussian1, Gaussian3, Random };

NoiseScheme parse_noise_scheme(const std::string& name);
std::string to_string(NoiseScheme scheme);

/// Offline dataset with the composition of the corrupted benchmarks: 40% behavior
/// policy, 40% perturbed behavior policy (epsilon-greedy or Gaussian action noise),
/// 20% uniform random; or 100% uniform random. Segments are contiguous.
Dataset synthesize_noisy_dataset(Env& env, const GaussianMlpPolicy& behavior, NoiseScheme scheme,
                                 std::size_t size, std::uint64_t seed);

}  // namespace bremen
