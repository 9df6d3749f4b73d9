#include "bremen/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "bremen/binary_io.hpp"
#include "bremen/policy.hpp"
#include "bremen/rng.hpp"

namespace bremen {

namespace {

constexpr std::uint32_t kDatasetVersion = 1;

Matrix stack(const std::vector<Transition>& ts, std::size_t dim, const Vector Transition::*field) {
  Matrix m(static_cast<Eigen::Index>(ts.size()), static_cast<Eigen::Index>(dim));
  for (std::size_t i = 0; i < ts.size(); ++i) {
    m.row(static_cast<Eigen::Index>(i)) = (ts[i].*field).transpose();
  }
  return m;
}

void check_dims(const Dataset& d, const Transition& t) {
  if (static_cast<std::size_t>(t.s.size()) != d.state_dim ||
      static_cast<std::size_t>(t.s_next.size()) != d.state_dim ||
      static_cast<std::size_t>(t.a.size()) != d.action_dim) {
    throw ShapeError("transition dims do not match dataset (" + std::to_string(d.state_dim) + ", " +
                     std::to_string(d.action_dim) + ")");
  }
}

// Runs fresh episodes, choosing actions with `choose`, until `count` transitions exist.
template <typename Chooser>
void run_episodes(Env& env, std::size_t count, std::uint64_t seed, std::uint32_t deployment_index,
                  Dataset& out, Chooser&& choose) {
  std::size_t collected = 0;
  std::uint64_t episode = 0;
  while (collected < count) {
    EnvState st = env.reset(derive_seed(seed, "episode", episode++));
    bool done = false;
    while (!done && collected < count) {
      const Vector a = choose(st.state);
      StepResult r = env.step(st, a);
      out.transitions.push_back(
          {st.state, clip_action(a), r.reward, r.next.state, r.terminated, deployment_index});
      ++collected;
      done = r.done;
      st = std::move(r.next);
    }
  }
}

}  // namespace

Matrix Dataset::states() const { return stack(transitions, state_dim, &Transition::s); }
Matrix Dataset::actions() const { return stack(transitions, action_dim, &Transition::a); }
Matrix Dataset::next_states() const { return stack(transitions, state_dim, &Transition::s_next); }

bool Dataset::operator==(const Dataset& o) const {
  if (env_id != o.env_id || state_dim != o.state_dim || action_dim != o.action_dim ||
      transitions.size() != o.transitions.size() || meta.seed != o.meta.seed ||
      meta.policy_hash != o.meta.policy_hash || meta.noise_scheme != o.meta.noise_scheme ||
      meta.segments.size() != o.meta.segments.size()) {
    return false;
  }
  for (std::size_t i = 0; i < meta.segments.size(); ++i) {
    const auto& a = meta.segments[i];
    const auto& b = o.meta.segments[i];
    if (a.label != b.label || a.begin != b.begin || a.end != b.end) return false;
  }
  for (std::size_t i = 0; i < transitions.size(); ++i) {
    const auto& a = transitions[i];
    const auto& b = o.transitions[i];
    if (a.s != b.s || a.a != b.a || a.s_next != b.s_next || a.done != b.done ||
        a.deployment_index != b.deployment_index ||
        std::memcmp(&a.r, &b.r, sizeof(double)) != 0) {
      return false;
    }
  }
  return true;
}

Dataset make_empty_dataset(const EnvSpec& spec) {
  Dataset d;
  d.env_id = spec.name();
  d.state_dim = spec.state_dim;
  d.action_dim = spec.action_dim;
  return d;
}

void append_batch(Dataset& d_all, Dataset& latest, const Dataset& batch) {
  if (batch.empty()) throw std::invalid_argument("append_batch: empty batch");
  if (d_all.state_dim == 0 && d_all.empty()) {
    d_all.env_id = batch.env_id;
    d_all.state_dim = batch.state_dim;
    d_all.action_dim = batch.action_dim;
  }
  if (batch.state_dim != d_all.state_dim || batch.action_dim != d_all.action_dim) {
    throw ShapeError("append_batch: batch dims (" + std::to_string(batch.state_dim) + ", " +
                     std::to_string(batch.action_dim) + ") differ from D_all (" +
                     std::to_string(d_all.state_dim) + ", " + std::to_string(d_all.action_dim) + ")");
  }
  for (const auto& t : batch.transitions) check_dims(d_all, t);
  d_all.transitions.insert(d_all.transitions.end(), batch.transitions.begin(),
                           batch.transitions.end());
  latest = batch;
}

std::pair<Dataset, Dataset> split_train_val(const Dataset& d, SplitRatio ratio, std::uint64_t seed) {
  if (d.size() < 3) throw std::invalid_argument("split_train_val: need at least 3 transitions");
  if (ratio.train == 0 || ratio.val == 0) throw std::invalid_argument("split ratio parts must be > 0");
  const std::size_t n = d.size();
  std::size_t n_train = (n * ratio.train + ratio.train + ratio.val - 1) / (ratio.train + ratio.val);
  n_train = std::clamp<std::size_t>(n_train, 1, n - 1);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(order);

  Dataset train;
  Dataset val;
  for (Dataset* part : {&train, &val}) {
    part->env_id = d.env_id;
    part->state_dim = d.state_dim;
    part->action_dim = d.action_dim;
    part->meta = d.meta;
    part->meta.segments.clear();
  }
  train.transitions.reserve(n_train);
  val.transitions.reserve(n - n_train);
  for (std::size_t i = 0; i < n; ++i) {
    (i < n_train ? train : val).transitions.push_back(d.transitions[order[i]]);
  }
  return {std::move(train), std::move(val)};
}

void save_dataset(const Dataset& d, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  io::put_magic(out, "BRDS");
  io::put<std::uint32_t>(out, kDatasetVersion);
  io::put_string(out, d.env_id);
  io::put<std::uint64_t>(out, d.state_dim);
  io::put<std::uint64_t>(out, d.action_dim);
  io::put<std::uint64_t>(out, d.size());
  io::put<std::uint64_t>(out, d.meta.seed);
  io::put<std::uint64_t>(out, d.meta.policy_hash);
  io::put_string(out, d.meta.noise_scheme);
  io::put<std::uint32_t>(out, static_cast<std::uint32_t>(d.meta.segments.size()));
  for (const auto& seg : d.meta.segments) {
    io::put_string(out, seg.label);
    io::put<std::uint64_t>(out, seg.begin);
    io::put<std::uint64_t>(out, seg.end);
  }
  const Matrix s = d.states();
  const Matrix a = d.actions();
  const Matrix sn = d.next_states();
  io::put_doubles(out, s.data(), static_cast<std::size_t>(s.size()));
  io::put_doubles(out, a.data(), static_cast<std::size_t>(a.size()));
  for (const auto& t : d.transitions) io::put<double>(out, t.r);
  io::put_doubles(out, sn.data(), static_cast<std::size_t>(sn.size()));
  for (const auto& t : d.transitions) io::put<std::uint8_t>(out, t.done ? 1 : 0);
  for (const auto& t : d.transitions) io::put<std::uint32_t>(out, t.deployment_index);
  io::put_magic(out, "DEND");
  if (!out) throw std::runtime_error("write failed for " + path);
}

Dataset load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  io::expect_magic(in, "BRDS");
  const auto version = io::get<std::uint32_t>(in, "dataset version");
  if (version != kDatasetVersion) {
    throw FormatError("unsupported dataset version " + std::to_string(version));
  }
  Dataset d;
  d.env_id = io::get_string(in, "env id");
  d.state_dim = io::get<std::uint64_t>(in, "state dim");
  d.action_dim = io::get<std::uint64_t>(in, "action dim");
  const auto n = io::get<std::uint64_t>(in, "transition count");
  if (d.state_dim == 0 || d.action_dim == 0 || d.state_dim > 4096 || d.action_dim > 4096 ||
      n > (1ull << 32)) {
    throw FormatError("implausible dataset header");
  }
  d.meta.seed = io::get<std::uint64_t>(in, "seed");
  d.meta.policy_hash = io::get<std::uint64_t>(in, "policy hash");
  d.meta.noise_scheme = io::get_string(in, "noise scheme");
  const auto n_seg = io::get<std::uint32_t>(in, "segment count");
  if (n_seg > 1024) throw FormatError("implausible segment count");
  for (std::uint32_t i = 0; i < n_seg; ++i) {
    Segment seg;
    seg.label = io::get_string(in, "segment label");
    seg.begin = io::get<std::uint64_t>(in, "segment begin");
    seg.end = io::get<std::uint64_t>(in, "segment end");
    d.meta.segments.push_back(std::move(seg));
  }
  const auto rows = static_cast<Eigen::Index>(n);
  Matrix s(rows, static_cast<Eigen::Index>(d.state_dim));
  Matrix a(rows, static_cast<Eigen::Index>(d.action_dim));
  Vector r(rows);
  Matrix sn(rows, static_cast<Eigen::Index>(d.state_dim));
  io::get_doubles(in, s.data(), static_cast<std::size_t>(s.size()), "states");
  io::get_doubles(in, a.data(), static_cast<std::size_t>(a.size()), "actions");
  io::get_doubles(in, r.data(), static_cast<std::size_t>(r.size()), "rewards");
  io::get_doubles(in, sn.data(), static_cast<std::size_t>(sn.size()), "next states");
  std::vector<std::uint8_t> done(n);
  std::vector<std::uint32_t> dep(n);
  for (auto& x : done) x = io::get<std::uint8_t>(in, "done flags");
  for (auto& x : dep) x = io::get<std::uint32_t>(in, "deployment indices");
  io::expect_magic(in, "DEND");

  d.transitions.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& t = d.transitions[i];
    const auto k = static_cast<Eigen::Index>(i);
    t.s = s.row(k).transpose();
    t.a = a.row(k).transpose();
    t.r = r[k];
    t.s_next = sn.row(k).transpose();
    t.done = done[i] != 0;
    t.deployment_index = dep[i];
  }
  return d;
}

void export_jsonl(const Dataset& d, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  auto vec = [](const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  for (const auto& t : d.transitions) {
    nlohmann::json row = {{"s", vec(t.s)},          {"a", vec(t.a)},       {"r", t.r},
                          {"s_next", vec(t.s_next)}, {"done", t.done},
                          {"deployment", t.deployment_index}};
    out << row.dump() << '\n';
  }
}

Dataset collect_transitions(Env& env, const GaussianMlpPolicy& policy, std::size_t count,
                            std::uint64_t seed, std::uint32_t deployment_index) {
  if (policy.state_dim() != env.spec().state_dim || policy.action_dim() != env.spec().action_dim) {
    throw ShapeError("collect: policy dims do not match env " + env.spec().name());
  }
  Dataset d = make_empty_dataset(env.spec());
  d.meta.seed = seed;
  d.meta.policy_hash = policy.hash();
  d.transitions.reserve(count);
  Rng rng(derive_seed(seed, "collect_actions"));
  run_episodes(env, count, seed, deployment_index, d,
               [&](const Vector& s) { return act(policy, s, rng).action; });
  d.meta.segments.push_back({"policy", 0, d.size()});
  return d;
}

NoiseScheme parse_noise_scheme(const std::string& name) {
  if (name == "eps1") return NoiseScheme::Eps1;
  if (name == "eps3") return NoiseScheme::Eps3;
  if (name == "gaussian1") return NoiseScheme::Gaussian1;
  if (name == "gaussian3") return NoiseScheme::Gaussian3;
  if (name == "random") return NoiseScheme::Random;
  throw std::invalid_argument("unknown noise scheme '" + name +
                              "' (eps1, eps3, gaussian1, gaussian3, random)");
}

std::string to_string(NoiseScheme scheme) {
  switch (scheme) {
    case NoiseScheme::Eps1: return "eps1";
    case NoiseScheme::Eps3: return "eps3";
    case NoiseScheme::Gaussian1: return "gaussian1";
    case NoiseScheme::Gaussian3: return "gaussian3";
    case NoiseScheme::Random: return "random";
  }
  return "unknown";
}

Dataset synthesize_noisy_dataset(Env& env, const GaussianMlpPolicy& behavior, NoiseScheme scheme,
                                 std::size_t size, std::uint64_t seed) {
  const auto& spec = env.spec();
  if (behavior.state_dim() != spec.state_dim || behavior.action_dim() != spec.action_dim) {
    throw ShapeError("synthesize: behavior policy dims do not match env " + spec.name());
  }
  Dataset d = make_empty_dataset(spec);
  d.meta.seed = seed;
  d.meta.policy_hash = behavior.hash();
  d.meta.noise_scheme = to_string(scheme);
  d.transitions.reserve(size);
  const auto action_dim = static_cast<Eigen::Index>(spec.action_dim);

  Rng rng(derive_seed(seed, "synth_actions"));
  auto uniform = [&](const Vector&) { return rng.uniform_vector(action_dim, -1.0, 1.0); };
  auto add_segment = [&](const std::string& label, std::size_t count, std::uint64_t index,
                         auto&& chooser) {
    const std::size_t begin = d.size();
    run_episodes(env, count, derive_seed(seed, "segment", index), 0, d, chooser);
    d.meta.segments.push_back({label, begin, d.size()});
  };

  if (scheme == NoiseScheme::Random) {
    add_segment("uniform", size, 0, uniform);
    return d;
  }

  const auto n_behavior = static_cast<std::size_t>(std::llround(0.4 * static_cast<double>(size)));
  const auto n_noisy = static_cast<std::size_t>(std::llround(0.4 * static_cast<double>(size)));
  const std::size_t n_uniform = size - n_behavior - n_noisy;

  add_segment("behavior", n_behavior, 0,
              [&](const Vector& s) { return act(behavior, s, rng).action; });
  if (scheme == NoiseScheme::Eps1 || scheme == NoiseScheme::Eps3) {
    const double eps = scheme == NoiseScheme::Eps1 ? 0.1 : 0.3;
    add_segment("epsilon_greedy", n_noisy, 1, [&](const Vector& s) -> Vector {
      if (rng.uniform() < eps) return rng.uniform_vector(action_dim, -1.0, 1.0);
      return act(behavior, s, rng).action;
    });
  } else {
    const double std_dev = scheme == NoiseScheme::Gaussian1 ? 0.1 : 0.3;
    add_segment("gaussian_noise", n_noisy, 1, [&](const Vector& s) -> Vector {
      Vector a = act(behavior, s, rng).raw;
      for (Eigen::Index k = 0; k < a.size(); ++k) a[k] += std_dev * rng.normal();
      return a;
    });
  }
  add_segment("uniform", n_uniform, 2, uniform);
  return d;
}

}  // namespace bremen
