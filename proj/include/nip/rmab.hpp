#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nip/rng.hpp"
#include "nip/text_format.hpp"

namespace nip {

// Action 0 is the passive (no-op) action. Its budget is the padding
// b_0 = N - sum_{a>=1} b_a, so budgets always sum to N.
inline constexpr int kPassiveAction = 0;

struct StateVector {
  std::vector<int> states;
  bool operator==(const StateVector&) const = default;
};

struct ActionVector {
  std::vector<int> actions;
  bool operator==(const ActionVector&) const = default;
};

/// A multi-action restless bandit with per-action budgets. Transitions are
/// stored flat as [arm][state][action][next_state], rewards as
/// [arm][state][action]. Immutable after construction; the constructor only
/// checks shapes, use validate_instance() for the probabilistic invariants.
class RmabInstance {
 public:
  RmabInstance(int n_arms, int n_states, int n_actions, std::vector<double> transitions,
               std::vector<double> rewards, std::vector<int> budgets, std::uint64_t seed = 0);

  int n_arms() const { return n_arms_; }
  int n_states() const { return n_states_; }
  int n_actions() const { return n_actions_; }
  std::uint64_t seed() const { return seed_; }

  std::span<const double> transition_row(int arm, int state, int action) const {
    const std::size_t off =
        ((static_cast<std::size_t>(arm) * n_states_ + state) * n_actions_ + action) * n_states_;
    return {transitions_.data() + off, static_cast<std::size_t>(n_states_)};
  }
  double transition(int arm, int state, int action, int next) const {
    return transition_row(arm, state, action)[next];
  }
  // Rewards r_n(s, .) for every action, length A.
  std::span<const double> rewards_at(int arm, int state) const {
    const std::size_t off = (static_cast<std::size_t>(arm) * n_states_ + state) * n_actions_;
    return {rewards_.data() + off, static_cast<std::size_t>(n_actions_)};
  }
  double reward(int arm, int state, int action) const { return rewards_at(arm, state)[action]; }

  const std::vector<double>& transitions() const { return transitions_; }
  const std::vector<double>& rewards() const { return rewards_; }
  const std::vector<int>& budgets() const { return budgets_; }

  bool operator==(const RmabInstance&) const = default;

 private:
  int n_arms_;
  int n_states_;
  int n_actions_;
  std::vector<double> transitions_;
  std::vector<double> rewards_;
  std::vector<int> budgets_;
  std::uint64_t seed_;
};

// Probability mass spread uniformly over every transition row at generation.
inline constexpr double kTransitionSmoothing = 1e-3;

/// Synthetic instance generator (our own construction). States are ordered
/// by health, 0 worst. Passive rows drift toward lower states; an active
/// action a mixes in an upward-moving row with weight rho_n * a/(A-1), where
/// rho_n is the arm's responsiveness, so higher actions stochastically move
/// the arm toward better states. Rewards grow with the state and carry an
/// immediate, arm-specific action benefit that is largest in poor states.
/// `budget_fractions` covers the active actions 1..A-1.
RmabInstance generate_instance(int n_arms, int n_states, int n_actions,
                               std::span<const double> budget_fractions, std::uint64_t seed);

// Empty iff every invariant holds; each entry names the offending index.
std::vector<std::string> validate_instance(const RmabInstance& inst);

// First active action whose count exceeds its budget. The passive action is
// exempt: it absorbs arms whenever active budget goes unused.
std::optional<int> budget_violation(std::span<const int> budgets, const ActionVector& acts);
bool is_budget_feasible(std::span<const int> budgets, const ActionVector& acts);

struct StepResult {
  StateVector next;
  std::vector<double> rewards;  // per arm
  double total_reward = 0.0;
};

// Advances every arm one epoch. Throws std::invalid_argument naming the
// offending action if `acts` breaks a budget (unless check_budgets is false,
// which only the unbudgeted random baseline uses).
StepResult step(const RmabInstance& inst, const StateVector& s, const ActionVector& acts,
                Rng& rng, bool check_budgets = true);

// i.i.d. uniform initial state per arm.
StateVector sample_uniform_states(const RmabInstance& inst, Rng& rng);

KvDocument instance_to_document(const RmabInstance& inst);
RmabInstance instance_from_document(const KvDocument& doc);
void write_instance(const RmabInstance& inst, const std::filesystem::path& path);
RmabInstance read_instance(const std::filesystem::path& path);

}  // namespace nip
