#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "engine.hpp"
#include "errors.hpp"
#include "rng.hpp"

namespace spinsim {

// Replays a fixed choice prefix, then extends with the first outcome of
// nonzero weight, recording every probability list it is shown. Drives the
// production trajectory code through all measurement branches.
class PrefixChooser final : public OutcomeChooser {
 public:
  static constexpr double kCut = 1e-14;

  explicit PrefixChooser(std::vector<std::size_t> prefix) : prefix_(std::move(prefix)) {}

  std::size_t choose(const std::vector<double>& probs) override {
    std::size_t k;
    if (step_ < prefix_.size()) {
      k = prefix_[step_];
      if (k >= probs.size()) throw std::logic_error("PrefixChooser: scripted outcome out of range");
    } else {
      k = probs.size();
      for (std::size_t i = 0; i < probs.size(); ++i)
        if (probs[i] > kCut) {
          k = i;
          break;
        }
      if (k == probs.size()) throw ZeroProbabilityError(0.0);
    }
    probs_.push_back(probs);
    choices_.push_back(k);
    ++step_;
    return k;
  }

  const std::vector<std::vector<double>>& probs() const { return probs_; }
  const std::vector<std::size_t>& choices() const { return choices_; }

 private:
  std::vector<std::size_t> prefix_;
  std::size_t step_ = 0;
  std::vector<std::vector<double>> probs_;
  std::vector<std::size_t> choices_;
};

struct Branch {
  std::vector<std::size_t> outcomes;
  double probability = 0.0;  // product of the Born probabilities along the branch
  TrajectoryRecord record;
};

struct EnumerationResult {
  std::vector<Branch> branches;
  double total_probability = 0.0;
  std::size_t n_events = 0;
};

using TrajectoryFn = std::function<TrajectoryRecord(OutcomeChooser&)>;

// Exhaustive depth-first walk over measurement outcomes. Zero-probability
// outcomes are pruned at spawn time, so only reachable branches run; the
// branch weights must sum to one. The event count is capped because the
// branch count is exponential in it.
inline EnumerationResult enumerate_branches(const TrajectoryFn& run_trajectory,
                                            std::size_t max_events = 16) {
  EnumerationResult out;
  std::vector<std::vector<std::size_t>> stack;
  stack.push_back({});
  bool first = true;

  while (!stack.empty()) {
    std::vector<std::size_t> prefix = std::move(stack.back());
    stack.pop_back();

    PrefixChooser chooser(prefix);
    TrajectoryRecord rec = run_trajectory(chooser);
    const std::vector<std::vector<double>>& probs = chooser.probs();
    const std::vector<std::size_t>& choices = chooser.choices();

    if (first) {
      out.n_events = choices.size();
      if (out.n_events > max_events)
        throw CapacityError("enumerate_branches: " + std::to_string(choices.size()) +
                            " measurement events exceed the budget of " +
                            std::to_string(max_events));
      first = false;
    }

    double w = 1.0;
    for (std::size_t i = 0; i < choices.size(); ++i) w *= probs[i][choices[i]];
    out.total_probability += w;

    for (std::size_t i = prefix.size(); i < choices.size(); ++i)
      for (std::size_t k = 0; k < probs[i].size(); ++k)
        if (k != choices[i] && probs[i][k] > PrefixChooser::kCut) {
          std::vector<std::size_t> next(choices.begin(),
                                        choices.begin() + static_cast<std::ptrdiff_t>(i));
          next.push_back(k);
          stack.push_back(std::move(next));
        }

    Branch b;
    b.outcomes = choices;
    b.probability = w;
    b.record = std::move(rec);
    out.branches.push_back(std::move(b));
  }
  return out;
}

}  // namespace spinsim
