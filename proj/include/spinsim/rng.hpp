#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

namespace spinsim {

// SplitMix64 finalizer. Used to whiten seeds and to derive independent
// per-trajectory streams from (master_seed, trajectory_index).
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Seed for trajectory `index` under `master`. Depends only on the pair, never
// on which worker thread picks the trajectory up, so any worker count
// reproduces the same streams.
inline std::uint64_t trajectory_seed(std::uint64_t master, std::uint64_t index) {
  return splitmix64(splitmix64(master) ^ splitmix64(index + 0x632be59bd9b4e019ull));
}

// mt19937_64 supplies raw bits; uniform / normal / categorical draws are done
// by hand because the std <random> distributions are not bit-identical across
// standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  // Standard complex normal, E|z|^2 = 1, via Box-Muller.
  std::complex<double> normal_complex() {
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-std::log1p(-u1));
    const double phi = 6.283185307179586476925286766559 * u2;
    return {r * std::cos(phi), r * std::sin(phi)};
  }

  std::uint64_t raw() { return gen_(); }

 private:
  std::mt19937_64 gen_;
};

// Selects a measurement branch given outcome probabilities. The production
// chooser samples the Born rule; enumeration injects a scripted chooser to
// force every branch in turn.
class OutcomeChooser {
 public:
  virtual ~OutcomeChooser() = default;
  virtual std::size_t choose(const std::vector<double>& probs) = 0;
};

// Born sampling with the cumulative rule: pick the smallest k such that
// sum_{i<k} p_i < R <= sum_{i<=k} p_i for R uniform in [0, 1). Zero-probability
// outcomes can never be selected.
class BornChooser final : public OutcomeChooser {
 public:
  explicit BornChooser(std::uint64_t seed) : rng_(seed) {}

  std::size_t choose(const std::vector<double>& probs) override {
    if (probs.empty()) throw std::invalid_argument("choose: empty probability list");
    const double r = rng_.uniform();
    double cum = 0.0;
    for (std::size_t k = 0; k < probs.size(); ++k) {
      const double next = cum + probs[k];
      if (cum < r && r <= next) return k;
      cum = next;
    }
    // R == 0 exactly, or the probabilities sum to slightly less than R due to
    // rounding: fall back to the nearest outcome with nonzero weight.
    if (r <= 0.0) {
      for (std::size_t k = 0; k < probs.size(); ++k)
        if (probs[k] > 0.0) return k;
    }
    for (std::size_t k = probs.size(); k-- > 0;)
      if (probs[k] > 0.0) return k;
    throw std::domain_error("choose: all outcome probabilities are zero");
  }

  Rng& rng() { return rng_; }

 private:
  Rng rng_;
};

// Replays a fixed outcome script and records the probability list it was shown
// at every step. Branch enumeration drives trajectories through this.
class ScriptedChooser final : public OutcomeChooser {
 public:
  explicit ScriptedChooser(std::vector<std::size_t> script) : script_(std::move(script)) {}

  std::size_t choose(const std::vector<double>& probs) override {
    if (cursor_ >= script_.size()) throw std::logic_error("scripted chooser: script exhausted");
    seen_.push_back(probs);
    return script_[cursor_++];
  }

  std::size_t steps_taken() const { return cursor_; }
  const std::vector<std::vector<double>>& seen() const { return seen_; }

 private:
  std::vector<std::size_t> script_;
  std::size_t cursor_ = 0;
  std::vector<std::vector<double>> seen_;
};

}  // namespace spinsim
