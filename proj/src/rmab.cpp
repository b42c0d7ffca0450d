#include "nip/rmab.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "nip/errors.hpp"

namespace nip {

RmabInstance::RmabInstance(int n_arms, int n_states, int n_actions,
                           std::vector<double> transitions, std::vector<double> rewards,
                           std::vector<int> budgets, std::uint64_t seed)
    : n_arms_(n_arms),
      n_states_(n_states),
      n_actions_(n_actions),
      transitions_(std::move(transitions)),
      rewards_(std::move(rewards)),
      budgets_(std::move(budgets)),
      seed_(seed) {
  if (n_arms < 1 || n_states < 1 || n_actions < 1) {
    throw DataError("instance dimensions must be positive");
  }
  const std::size_t nsa = static_cast<std::size_t>(n_arms) * n_states * n_actions;
  if (transitions_.size() != nsa * n_states) {
    throw DataError("transitions: expected " + std::to_string(nsa * n_states) + " values, got " +
                    std::to_string(transitions_.size()));
  }
  if (rewards_.size() != nsa) {
    throw DataError("rewards: expected " + std::to_string(nsa) + " values, got " +
                    std::to_string(rewards_.size()));
  }
  if (budgets_.size() != static_cast<std::size_t>(n_actions)) {
    throw DataError("budgets: expected " + std::to_string(n_actions) + " values");
  }
}

namespace {

// Dirichlet(1, ..., 1) draw over the index range [lo, hi], written into row.
void dirichlet_segment(std::span<double> row, int lo, int hi, Rng& rng) {
  std::gamma_distribution<double> gamma(1.0, 1.0);
  double total = 0.0;
  for (int i = lo; i <= hi; ++i) {
    row[i] = gamma(rng);
    total += row[i];
  }
  for (int i = lo; i <= hi; ++i) row[i] /= total;
}

}  // namespace

RmabInstance generate_instance(int n_arms, int n_states, int n_actions,
                               std::span<const double> budget_fractions, std::uint64_t seed) {
  if (n_arms < 1) throw std::invalid_argument("n_arms must be >= 1");
  if (n_states < 2) throw std::invalid_argument("n_states must be >= 2");
  if (n_actions < 2) throw std::invalid_argument("n_actions must be >= 2");
  if (budget_fractions.size() != static_cast<std::size_t>(n_actions - 1)) {
    throw std::invalid_argument("budget_fractions must have n_actions - 1 entries");
  }
  double fraction_sum = 0.0;
  for (double f : budget_fractions) {
    if (!(f >= 0.0 && f <= 1.0)) throw std::invalid_argument("budget fractions must lie in [0, 1]");
    fraction_sum += f;
  }
  if (fraction_sum > 1.0 + 1e-12) throw std::invalid_argument("budget fractions sum above 1");

  std::vector<int> budgets(n_actions, 0);
  int active_total = 0;
  for (int a = 1; a < n_actions; ++a) {
    budgets[a] = static_cast<int>(std::floor(budget_fractions[a - 1] * n_arms + 1e-9));
    active_total += budgets[a];
  }
  budgets[kPassiveAction] = n_arms - active_total;

  Rng rng = make_stream(seed, {0x9e3779b9});
  const int S = n_states;
  const int A = n_actions;
  std::vector<double> transitions(static_cast<std::size_t>(n_arms) * S * A * S);
  std::vector<double> rewards(static_cast<std::size_t>(n_arms) * S * A);

  std::vector<double> down(S), up(S);
  for (int n = 0; n < n_arms; ++n) {
    // Skewed draws: most arms respond weakly, a minority strongly.
    const double u1 = uniform01(rng);
    const double u2 = uniform01(rng);
    const double responsiveness = u1 * u1;
    const double action_benefit = 1.5 * u2 * u2;
    const double scale = 0.5 + uniform01(rng);
    for (int s = 0; s < S; ++s) {
      std::fill(down.begin(), down.end(), 0.0);
      std::fill(up.begin(), up.end(), 0.0);
      dirichlet_segment(down, 0, s, rng);
      dirichlet_segment(up, s, S - 1, rng);
      for (int a = 0; a < A; ++a) {
        const double strength = static_cast<double>(a) / (A - 1);
        const double mix = responsiveness * strength;
        double* row = &transitions[((static_cast<std::size_t>(n) * S + s) * A + a) * S];
        for (int k = 0; k < S; ++k) {
          const double p = (1.0 - mix) * down[k] + mix * up[k];
          row[k] = (1.0 - kTransitionSmoothing) * p + kTransitionSmoothing / S;
        }
        const double health = static_cast<double>(s) / (S - 1);
        const double sickness = static_cast<double>(S - s) / S;
        rewards[(static_cast<std::size_t>(n) * S + s) * A + a] =
            scale * (health + action_benefit * strength * sickness);
      }
    }
  }
  return RmabInstance(n_arms, S, A, std::move(transitions), std::move(rewards),
                      std::move(budgets), seed);
}

std::vector<std::string> validate_instance(const RmabInstance& inst) {
  std::vector<std::string> issues;
  const int N = inst.n_arms(), S = inst.n_states(), A = inst.n_actions();
  for (int n = 0; n < N; ++n) {
    for (int s = 0; s < S; ++s) {
      for (int a = 0; a < A; ++a) {
        const auto row = inst.transition_row(n, s, a);
        double total = 0.0;
        bool nonpositive = false;
        for (double p : row) {
          total += p;
          if (!(p > 0.0)) nonpositive = true;
        }
        std::ostringstream where;
        where << "(arm " << n << ", state " << s << ", action " << a << ")";
        if (!(std::abs(total - 1.0) <= 1e-9)) {
          issues.push_back("transition row " + where.str() + " sums to " + format_real(total));
        }
        if (nonpositive) {
          issues.push_back("transition row " + where.str() + " lacks full support");
        }
        const double r = inst.reward(n, s, a);
        if (!(r >= 0.0) || !std::isfinite(r)) {
          issues.push_back("reward " + where.str() + " is negative or non-finite");
        }
      }
    }
  }
  long total_budget = 0;
  for (int a = 0; a < A; ++a) {
    if (inst.budgets()[a] < 0) {
      issues.push_back("budget for action " + std::to_string(a) + " is negative");
    }
    total_budget += inst.budgets()[a];
  }
  if (total_budget != N) {
    issues.push_back("budgets sum to " + std::to_string(total_budget) + " but n_arms is " +
                     std::to_string(N) + " (passive padding broken)");
  }
  return issues;
}

std::optional<int> budget_violation(std::span<const int> budgets, const ActionVector& acts) {
  std::vector<int> counts(budgets.size(), 0);
  for (int a : acts.actions) {
    if (a < 0 || a >= static_cast<int>(budgets.size())) return a;
    ++counts[a];
  }
  for (std::size_t a = 1; a < budgets.size(); ++a) {
    if (counts[a] > budgets[a]) return static_cast<int>(a);
  }
  return std::nullopt;
}

bool is_budget_feasible(std::span<const int> budgets, const ActionVector& acts) {
  return !budget_violation(budgets, acts).has_value();
}

StepResult step(const RmabInstance& inst, const StateVector& s, const ActionVector& acts,
                Rng& rng, bool check_budgets) {
  const int N = inst.n_arms();
  if (s.states.size() != static_cast<std::size_t>(N) ||
      acts.actions.size() != static_cast<std::size_t>(N)) {
    throw std::invalid_argument("state/action vector length does not match n_arms");
  }
  if (auto bad = budget_violation(inst.budgets(), acts)) {
    if (check_budgets || *bad < 0 || *bad >= inst.n_actions()) {
      throw std::invalid_argument("budget exceeded for action " + std::to_string(*bad));
    }
  }
  StepResult out;
  out.next.states.resize(N);
  out.rewards.resize(N);
  for (int n = 0; n < N; ++n) {
    const int state = s.states[n];
    const int action = acts.actions[n];
    if (state < 0 || state >= inst.n_states()) {
      throw std::invalid_argument("state out of range for arm " + std::to_string(n));
    }
    out.rewards[n] = inst.reward(n, state, action);
    out.total_reward += out.rewards[n];
    out.next.states[n] = sample_categorical(inst.transition_row(n, state, action), rng);
  }
  return out;
}

StateVector sample_uniform_states(const RmabInstance& inst, Rng& rng) {
  StateVector s;
  s.states.resize(inst.n_arms());
  for (int& v : s.states) v = uniform_int(rng, inst.n_states());
  return s;
}

KvDocument instance_to_document(const RmabInstance& inst) {
  KvDocument doc;
  doc.set("n_arms", inst.n_arms());
  doc.set("n_states", inst.n_states());
  doc.set("n_actions", inst.n_actions());
  doc.set("seed", inst.seed());
  doc.set("budgets", std::span<const int>(inst.budgets()));
  doc.set("transitions", std::span<const double>(inst.transitions()));
  doc.set("rewards", std::span<const double>(inst.rewards()));
  return doc;
}

RmabInstance instance_from_document(const KvDocument& doc) {
  const auto to_int = [](std::int64_t v, const char* what) {
    if (v < 1 || v > 1'000'000) throw DataError(std::string(what) + " out of range");
    return static_cast<int>(v);
  };
  const int N = to_int(doc.get_int("n_arms"), "n_arms");
  const int S = to_int(doc.get_int("n_states"), "n_states");
  const int A = to_int(doc.get_int("n_actions"), "n_actions");
  std::vector<int> budgets;
  for (auto b : doc.get_ints("budgets")) budgets.push_back(static_cast<int>(b));
  const std::uint64_t seed = doc.has("seed") ? doc.get_uint("seed") : 0;
  return RmabInstance(N, S, A, doc.get_reals("transitions"), doc.get_reals("rewards"),
                      std::move(budgets), seed);
}

void write_instance(const RmabInstance& inst, const std::filesystem::path& path) {
  instance_to_document(inst).write_file(path);
}

RmabInstance read_instance(const std::filesystem::path& path) {
  return instance_from_document(KvDocument::read_file(path));
}

}  // namespace nip
