#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

#include "nip/errors.hpp"
#include "nip/eval.hpp"
#include "nip/gradcheck.hpp"
#include "nip/index_net.hpp"
#include "nip/occupancy.hpp"
#include "nip/rmab.hpp"
#include "nip/trainer.hpp"

namespace nip::cli {
namespace fs = std::filesystem;

namespace {

struct Globals {
  std::string output_dir = ".";
  bool omit_timing = false;
  int jobs = 1;
  bool verbose = false;
};

struct GenerateArgs {
  int arms = 0, states = 0, actions = 0;
  std::vector<double> fractions;
  std::uint64_t seed = 0;
  std::string output = "instance.txt";
};

struct TrainArgs {
  std::string instance, oracle, resume;
  std::string loss = "kl";
  std::string activation = "tanh";
  std::string output = "checkpoint.txt";
  int hidden = 64;
  int eval_batches = 10, eval_horizon = 50;
  bool serial = false;
  TrainConfig config;
};

struct EvalArgs {
  std::string instance, oracle, checkpoint;
  std::string mode = "round";
  bool serial = false;
  EvalConfig config;
};

struct SweepArgs {
  std::string mode = "round";
  bool serial = false;
  SweepConfig config;
};

struct GradcheckArgs {
  GradCheckSuiteConfig config;
};

fs::path output_path(const Globals& g, const std::string& name) {
  fs::path p(name);
  if (p.is_relative()) p = fs::path(g.output_dir) / p;
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  return p;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write " + path.string());
  f << text;
  if (!f) throw DataError("failed writing " + path.string());
}

std::string fmt(const char* format, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, format, v);
  return buf;
}

PlanMode plan_mode_from_string(const std::string& s) {
  if (s == "round") return PlanMode::Round;
  if (s == "sample") return PlanMode::Sample;
  throw std::invalid_argument("unknown mode: " + s);
}

void require_file(const std::string& path, const std::string& what) {
  if (!fs::exists(path)) throw DataError(what + " not found: " + path);
}

RmabInstance load_valid_instance(const std::string& path) {
  require_file(path, "instance");
  RmabInstance inst = read_instance(path);
  const auto problems = validate_instance(inst);
  if (!problems.empty()) throw DataError("invalid instance: " + problems.front());
  return inst;
}

void check_network_shape(const IndexNetwork& net, const RmabInstance& inst) {
  if (net.input_dim() != inst.n_arms() + inst.n_states() || net.n_actions() != inst.n_actions()) {
    throw DataError("checkpoint shape (input " + std::to_string(net.input_dim()) + ", actions " +
                    std::to_string(net.n_actions()) + ") does not match instance (N=" +
                    std::to_string(inst.n_arms()) + ", S=" + std::to_string(inst.n_states()) +
                    ", A=" + std::to_string(inst.n_actions()) + ")");
  }
}

int cmd_generate(const Globals& g, const GenerateArgs& a, std::ostream& out) {
  const RmabInstance inst = generate_instance(a.arms, a.states, a.actions, a.fractions, a.seed);
  const fs::path path = output_path(g, a.output);
  write_instance(inst, path);
  out << "wrote " << path.string() << "\nbudgets:";
  for (int b : inst.budgets()) out << ' ' << b;
  out << '\n';
  return kOk;
}

int cmd_validate(const std::vector<std::string>& paths, std::ostream& out, std::ostream& err) {
  int rc = kOk;
  for (const auto& p : paths) {
    try {
      require_file(p, "instance");
      const auto problems = validate_instance(read_instance(p));
      if (problems.empty()) {
        out << p << ": ok\n";
      } else {
        for (const auto& m : problems) err << p << ": " << m << '\n';
        rc = kDataError;
      }
    } catch (const std::exception& e) {
      err << p << ": " << e.what() << '\n';
      rc = kDataError;
    }
  }
  return rc;
}

int cmd_oracle(const Globals& g, const std::string& instance_path, std::ostream& out) {
  const RmabInstance inst = load_valid_instance(instance_path);
  const OccupancyMeasure om = solve_occupancy(inst);
  const fs::path occ = output_path(g, "occupancy.txt");
  write_occupancy(om, occ);
  const fs::path pol = output_path(g, "policy.txt");
  policy_to_document(extract_policy(om)).write_file(pol);
  out << "oracle bound: " << format_real(om.objective_value) << '\n'
      << "wrote " << occ.string() << " and " << pol.string() << '\n';
  return kOk;
}

void dump_divergence(const Globals& g, const TrainingDiverged& e) {
  KvDocument doc;
  doc.set("message", std::string(e.what()));
  doc.set("gamma_rows", static_cast<int>(e.gamma.rows()));
  doc.set("gamma", std::span<const double>(e.gamma.data()));
  doc.set("index_rows", static_cast<int>(e.index.rows()));
  doc.set("index", std::span<const double>(e.index.data()));
  doc.set("parameters", std::span<const double>(e.parameters));
  doc.write_file(output_path(g, "diverged_dump.txt"));
}

int cmd_train(const Globals& g, TrainArgs a, std::ostream& out, std::ostream& err) {
  const RmabInstance inst = load_valid_instance(a.instance);
  a.config.loss = loss_kind_from_string(a.loss);
  a.config.parallel = !a.serial;
  const bool needs_oracle = a.config.loss == LossKind::Kl || a.config.eval_every > 0;
  if (a.config.loss == LossKind::Kl && a.oracle.empty()) {
    throw std::invalid_argument("the kl loss needs an oracle occupancy file (--oracle)");
  }
  validate_config(a.config, !a.oracle.empty());

  std::optional<OccupancyMeasure> om;
  if (!a.oracle.empty()) {
    require_file(a.oracle, "oracle");
    om = read_occupancy(a.oracle);
    if (om->n_arms != inst.n_arms() || om->n_states != inst.n_states() ||
        om->n_actions != inst.n_actions()) {
      throw DataError("oracle shape does not match the instance");
    }
  } else if (needs_oracle) {
    om = solve_occupancy(inst);
  }

  IndexNetwork net;
  if (!a.resume.empty()) {
    require_file(a.resume, "checkpoint");
    net = IndexNetwork::load(a.resume);
    check_network_shape(net, inst);
  } else {
    net = make_index_network(inst, a.config.seed, a.hidden, activation_from_string(a.activation));
  }

  TrainHooks hooks;
  if (a.config.eval_every > 0) {
    EvalConfig ec;
    ec.batches = a.eval_batches;
    ec.horizon = a.eval_horizon;
    ec.seed = a.config.seed;
    ec.epsilon = a.config.epsilon;
    ec.parallel = !a.serial;
    hooks.reward_gap = [&inst, &om, ec](const IndexNetwork& n, int) {
      return evaluate(inst, *om, n, ec).gap_pct;
    };
  }
  if (a.config.checkpoint_every > 0) {
    hooks.checkpoint = [&](const IndexNetwork& n, int epoch) {
      n.save(output_path(g, "checkpoint_epoch_" + std::to_string(epoch) + ".txt"));
    };
  }

  TrainLog log;
  try {
    log = train(inst, om ? &*om : nullptr, net, a.config, hooks);
  } catch (const TrainingDiverged& e) {
    dump_divergence(g, e);
    err << "training diverged: " << e.what() << " (dump written to diverged_dump.txt)\n";
    return kNumericalFailure;
  }

  const fs::path ckpt = output_path(g, a.output);
  net.save(ckpt);
  std::ostringstream csv;
  write_train_log_csv(log, csv, !g.omit_timing);
  write_text(output_path(g, "train_log.csv"), csv.str());
  if (!log.records.empty()) {
    out << "epochs " << log.records.front().epoch << ".." << log.records.back().epoch
        << ", train loss " << format_real(log.records.front().train_loss) << " -> "
        << format_real(log.records.back().train_loss) << '\n';
  }
  out << "wrote " << ckpt.string() << '\n';
  return kOk;
}

int cmd_eval(const Globals& g, EvalArgs a, std::ostream& out) {
  const RmabInstance inst = load_valid_instance(a.instance);
  require_file(a.checkpoint, "checkpoint");
  const IndexNetwork net = IndexNetwork::load(a.checkpoint);
  check_network_shape(net, inst);
  OccupancyMeasure om;
  if (!a.oracle.empty()) {
    require_file(a.oracle, "oracle");
    om = read_occupancy(a.oracle);
  } else {
    om = solve_occupancy(inst);
  }
  a.config.mode = plan_mode_from_string(a.mode);
  a.config.parallel = !a.serial;

  const auto start = std::chrono::steady_clock::now();
  const EvalReport rep = evaluate(inst, om, net, a.config);
  const double runtime =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  std::ostringstream series, dat, summary;
  write_series_csv(rep, series);
  write_series_dat(rep, dat);
  SweepCell cell = summarize(rep, runtime);
  cell.epsilon = a.config.epsilon;
  const SweepCell cells[] = {cell};
  write_summary_csv(cells, summary, !g.omit_timing);
  write_text(output_path(g, "eval_series.csv"), series.str());
  write_text(output_path(g, "eval_series.dat"), dat.str());
  write_text(output_path(g, "eval_summary.csv"), summary.str());
  out << "gap_pct " << fmt("%.4f", rep.gap_pct) << ", random_gap_pct "
      << fmt("%.4f", rep.random_gap_pct) << ", oracle_bound " << fmt("%.6g", rep.oracle_bound)
      << '\n';
  return kOk;
}

int cmd_sweep(const Globals& g, SweepArgs a, std::ostream& out) {
  a.config.jobs = std::max(1, g.jobs);
  a.config.eval.mode = plan_mode_from_string(a.mode);
  a.config.eval.parallel = !a.serial && a.config.jobs == 1;
  a.config.train.parallel = !a.serial && a.config.jobs == 1;
  validate_config(a.config.train, true);
  const auto cells = run_sweep(a.config);

  std::ostringstream summary, heat;
  write_summary_csv(cells, summary, !g.omit_timing);
  write_heatmap_dat(a.config, cells, heat);
  write_text(output_path(g, "sweep_summary.csv"), summary.str());
  write_text(output_path(g, "heatmap.dat"), heat.str());
  int failed = 0;
  for (const auto& c : cells) failed += !c.error.empty();
  out << cells.size() << " cells, " << failed << " failed\n";
  return failed ? kNumericalFailure : kOk;
}

int cmd_gradcheck(const Globals& g, const GradcheckArgs& a, std::ostream& out) {
  const auto results = run_gradcheck_suite(a.config);
  std::ostringstream csv;
  csv << "check,entries,max_rel_error,max_abs_error,worst_analytic,worst_numeric,tolerance,status\n";
  bool ok = true;
  for (const auto& r : results) {
    char line[320];
    std::snprintf(line, sizeof line, "%s,%zu,%.3e,%.3e,%.6e,%.6e,%.0e,%s\n", r.name.c_str(),
                  r.checked, r.max_rel_error, r.max_abs_error, r.worst_analytic, r.worst_numeric,
                  r.tolerance, r.passed() ? "pass" : "fail");
    csv << line;
    out << line;
    ok = ok && r.passed();
  }
  write_text(output_path(g, "gradcheck.csv"), csv.str());
  return ok ? kOk : kNumericalFailure;
}

void add_train_options(CLI::App* sub, TrainConfig& c) {
  sub->add_option("--epsilon", c.epsilon, "Sinkhorn regularization")->check(CLI::PositiveNumber);
  sub->add_option("--epochs", c.epochs, "training epochs")->check(CLI::NonNegativeNumber);
  sub->add_option("--batch", c.batch_size, "state vectors per batch")->check(CLI::PositiveNumber);
  sub->add_option("--batches-per-epoch", c.batches_per_epoch)->check(CLI::PositiveNumber);
  sub->add_option("--lr", c.learning_rate, "learning rate")->check(CLI::NonNegativeNumber);
  sub->add_option("--momentum", c.momentum, "0 for plain gradient descent")
      ->check(CLI::Range(0.0, 1.0));
  sub->add_option("--lambda-kl", c.lambda_kl, "KL loss weight")->check(CLI::NonNegativeNumber);
  sub->add_flag("--add-reward-loss", c.add_reward_loss, "add the reward loss to the KL loss");
  sub->add_option("--rollout-horizon", c.rollout_horizon)->check(CLI::PositiveNumber);
  sub->add_option("--validation-samples", c.validation_samples)->check(CLI::PositiveNumber);
  sub->add_option("--sinkhorn-iters", c.sinkhorn_max_iter)->check(CLI::PositiveNumber);
  sub->add_option("--sinkhorn-tol", c.sinkhorn_tol)->check(CLI::NonNegativeNumber);
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Neural index policies for multi-action restless bandits", "nip"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_config("--config", "", "TOML config file; command-line flags take precedence");

  Globals g;
  app.add_option("--output-dir", g.output_dir, "directory for every file written");
  app.add_flag("--omit-timing", g.omit_timing, "write 0 in wall-clock columns");
  app.add_option("--jobs", g.jobs, "parallel sweep cells")->check(CLI::PositiveNumber);
  app.add_flag("-v,--verbose", g.verbose);

  GenerateArgs gen;
  auto* s_gen = app.add_subcommand("generate", "generate a synthetic instance");
  s_gen->add_option("--arms", gen.arms)->required()->check(CLI::PositiveNumber);
  s_gen->add_option("--states", gen.states)->required()->check(CLI::PositiveNumber);
  s_gen->add_option("--actions", gen.actions)->required()->check(CLI::Range(2, 1 << 20));
  s_gen->add_option("--budget-frac", gen.fractions, "fractions for actions 1..A-1")
      ->required()
      ->delimiter(',');
  s_gen->add_option("--seed", gen.seed);
  s_gen->add_option("-o,--output", gen.output);

  std::vector<std::string> validate_paths;
  auto* s_val = app.add_subcommand("validate", "check instance files");
  s_val->add_option("instances", validate_paths)->required();

  std::string oracle_instance;
  auto* s_orc = app.add_subcommand("oracle", "solve the occupancy LP");
  s_orc->add_option("--instance", oracle_instance)->required();

  TrainArgs tr;
  auto* s_tr = app.add_subcommand("train", "train an index network");
  s_tr->add_option("--instance", tr.instance)->required();
  s_tr->add_option("--oracle", tr.oracle, "occupancy file from the oracle command");
  s_tr->add_option("--loss", tr.loss)->check(CLI::IsMember({"kl", "reward"}));
  s_tr->add_option("--seed", tr.config.seed);
  s_tr->add_option("--resume", tr.resume, "checkpoint to continue from");
  s_tr->add_option("--hidden", tr.hidden)->check(CLI::PositiveNumber);
  s_tr->add_option("--activation", tr.activation)->check(CLI::IsMember({"tanh", "softplus"}));
  s_tr->add_option("--checkpoint-every", tr.config.checkpoint_every)->check(CLI::NonNegativeNumber);
  s_tr->add_option("--eval-every", tr.config.eval_every)->check(CLI::NonNegativeNumber);
  s_tr->add_option("--eval-batches", tr.eval_batches)->check(CLI::PositiveNumber);
  s_tr->add_option("--eval-horizon", tr.eval_horizon)->check(CLI::PositiveNumber);
  s_tr->add_option("-o,--output", tr.output);
  s_tr->add_flag("--serial", tr.serial, "disable OpenMP batch parallelism");
  add_train_options(s_tr, tr.config);

  EvalArgs ev;
  auto* s_ev = app.add_subcommand("eval", "simulate oracle, trained and random policies");
  s_ev->add_option("--instance", ev.instance)->required();
  s_ev->add_option("--checkpoint", ev.checkpoint)->required();
  s_ev->add_option("--oracle", ev.oracle, "occupancy file (solved if omitted)");
  s_ev->add_option("--mode", ev.mode)->check(CLI::IsMember({"round", "sample"}));
  s_ev->add_option("--epsilon", ev.config.epsilon)->check(CLI::PositiveNumber);
  s_ev->add_option("--batches", ev.config.batches)->check(CLI::PositiveNumber);
  s_ev->add_option("--horizon", ev.config.horizon)->check(CLI::NonNegativeNumber);
  s_ev->add_option("--seed", ev.config.seed);
  s_ev->add_flag("--serial", ev.serial);

  SweepArgs sw;
  auto* s_sw = app.add_subcommand("sweep", "train and evaluate over a grid of N, epsilon, seed");
  s_sw->add_option("--arms", sw.config.arms)->delimiter(',');
  s_sw->add_option("--epsilons", sw.config.epsilons)->delimiter(',');
  s_sw->add_option("--seeds", sw.config.seeds)->delimiter(',');
  s_sw->add_option("--states", sw.config.n_states)->check(CLI::PositiveNumber);
  s_sw->add_option("--actions", sw.config.n_actions)->check(CLI::Range(2, 1 << 20));
  s_sw->add_option("--budget-frac", sw.config.budget_fractions)->delimiter(',');
  s_sw->add_option("--hidden", sw.config.hidden)->check(CLI::PositiveNumber);
  s_sw->add_option("--mode", sw.mode)->check(CLI::IsMember({"round", "sample"}));
  s_sw->add_option("--batches", sw.config.eval.batches)->check(CLI::PositiveNumber);
  s_sw->add_option("--horizon", sw.config.eval.horizon)->check(CLI::NonNegativeNumber);
  s_sw->add_flag("--serial", sw.serial);
  add_train_options(s_sw, sw.config.train);

  GradcheckArgs gc;
  auto* s_gc = app.add_subcommand("gradcheck", "finite-difference gradient checks");
  s_gc->add_option("--seed", gc.config.seed);
  s_gc->add_option("--sinkhorn-problems", gc.config.sinkhorn_problems)
      ->check(CLI::PositiveNumber);
  s_gc->add_option("--train-steps", gc.config.train_steps)->check(CLI::NonNegativeNumber);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n";
    err << "run with --help for usage\n";
    return kUsage;
  }

  try {
    if (*s_gen) return cmd_generate(g, gen, out);
    if (*s_val) return cmd_validate(validate_paths, out, err);
    if (*s_orc) return cmd_oracle(g, oracle_instance, out);
    if (*s_tr) return cmd_train(g, tr, out, err);
    if (*s_ev) return cmd_eval(g, ev, out);
    if (*s_sw) return cmd_sweep(g, sw, out);
    if (*s_gc) return cmd_gradcheck(g, gc, out);
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kDataError;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << '\n';
    return kNumericalFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kDataError;
  }
  return kUsage;
}

}  // namespace nip::cli
