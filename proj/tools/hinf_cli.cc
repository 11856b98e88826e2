// hinf: train, evaluate, attack and compare H-infinity locomotion policies.

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "hinf/checkpoint.h"
#include "hinf/config.h"
#include "hinf/evalkit.h"
#include "hinf/oracle.h"
#include "hinf/trainer.h"

namespace fs = std::filesystem;
using namespace hinf;

namespace {

constexpr int kExitConfig = 3;
constexpr int kExitCheckpoint = 4;
constexpr int kExitRuntime = 5;

struct Common {
  std::string config;
  std::vector<std::string> sets;
  std::string out;
  std::int64_t seed = -1;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "config file (flat dotted keys)")->check(CLI::ExistingFile);
  app->add_option("--set", c.sets, "override a config key, key=value (repeatable)");
  app->add_option("--out", c.out, "output directory (overrides HINF_OUT_DIR and out_dir)");
  app->add_option("--seed", c.seed, "run seed")->check(CLI::NonNegativeNumber);
}

RunConfig resolve(const Common& c, const std::string* base_text = nullptr) {
  RunConfig cfg = base_text ? parse_config(*base_text, "checkpoint config")
                  : c.config.empty() ? RunConfig{}
                                     : load_config(c.config);
  for (const auto& s : c.sets) apply_override(cfg, s);
  if (c.seed >= 0) cfg.seed = static_cast<std::uint64_t>(c.seed);
  if (!c.out.empty()) {
    cfg.out_dir = c.out;
  } else if (const char* env = std::getenv("HINF_OUT_DIR"); env && *env) {
    cfg.out_dir = env;
  }
  cfg.validate();
  return cfg;
}

fs::path prepare_out(const RunConfig& cfg) {
  fs::path dir(cfg.out_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create output directory '" + dir.string() + "'");
  return dir;
}

std::ofstream open_out(const fs::path& p, std::ios::openmode mode = std::ios::trunc) {
  std::ofstream f(p, std::ios::out | mode);
  if (!f) throw std::runtime_error("cannot write '" + p.string() + "'");
  return f;
}

void write_file(const fs::path& p, const std::string& text) { open_out(p) << text; }

const char* kMetricsHeader =
    "iter,eta,lambda,l_hinf_mean,sat_frac,actor_loss,disturber_loss,mean_task_reward,mean_cost,"
    "mean_force_norm,sum_cost,sum_force_norm,eta_before,lambda_before,eta_skipped,value_loss,"
    "cost_value_loss,entropy,actor_clip,falls,samples";

std::string metrics_row(const LossReport& r) {
  char buf[1024];
  std::snprintf(buf, sizeof buf,
                "%lld,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,"
                "%.17g,%d,%.17g,%.17g,%.17g,%.17g,%d,%d",
                static_cast<long long>(r.iteration), r.eta_after, r.lambda_after, r.l_hinf_mean,
                r.sat_frac, r.actor_loss, r.disturber_loss, r.mean_task_reward, r.mean_cost,
                r.mean_force_norm, r.sum_cost, r.sum_force_norm, r.eta_before, r.lambda_before,
                r.eta_skipped ? 1 : 0, r.value_loss, r.cost_value_loss, r.entropy, r.actor_clip,
                r.falls, r.samples);
  return buf;
}

// Keeps the header and rows up to iteration `keep` of an existing metrics file.
void truncate_metrics(const fs::path& p, std::int64_t keep) {
  std::ifstream in(p);
  std::string line, out;
  bool header = true;
  while (std::getline(in, line)) {
    if (header) {
      header = false;
      out += line + "\n";
      continue;
    }
    if (!line.empty() && std::stoll(line.substr(0, line.find(','))) <= keep) out += line + "\n";
  }
  write_file(p, out);
}

std::string ckpt_name(std::int64_t it) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "ckpt_%06lld.ckpt", static_cast<long long>(it));
  return buf;
}

int run_train(const Common& c, std::int64_t iters, const std::string& resume, int every) {
  CheckpointBundle bundle;
  if (!resume.empty()) bundle = load_checkpoint(resume);
  RunConfig cfg = resolve(c, resume.empty() ? nullptr : &bundle.config_text);
  if (iters >= 0) cfg.iterations = static_cast<int>(iters);
  if (every >= 0) cfg.checkpoint_every = every;
  cfg.validate();
  const fs::path dir = prepare_out(cfg);
  const std::string text = write_config(cfg);
  write_file(dir / "config.cfg", text);

  Trainer tr(make_model(cfg), cfg.trainer, cfg.seed);
  const fs::path metrics = dir / "metrics.csv";
  std::ofstream out;
  if (!resume.empty()) {
    restore(tr, bundle);
    if (fs::exists(metrics)) {
      truncate_metrics(metrics, tr.iteration());
      out = open_out(metrics, std::ios::app);
    }
  }
  if (!out.is_open()) {
    out = open_out(metrics);
    out << kMetricsHeader << "\n";
  }
  out.flush();
  while (tr.iteration() < cfg.iterations) {
    const LossReport r = tr.train_iteration();
    out << metrics_row(r) << "\n";
    out.flush();
    if (cfg.checkpoint_every > 0 && tr.iteration() % cfg.checkpoint_every == 0) {
      save_checkpoint(capture(tr, text), (dir / ckpt_name(tr.iteration())).string());
    }
  }
  save_checkpoint(capture(tr, text), (dir / "final.ckpt").string());
  std::cout << "trained " << tr.iteration() << " iterations; eta=" << tr.state().eta
            << " lambda=" << tr.state().lambda << "; outputs in " << dir.string() << "\n";
  return 0;
}

eval::DisturbanceRegime regime_from(const RunConfig& cfg, const std::string& name) {
  if (name == "none") return eval::no_disturbance();
  if (name == "continuous") return cfg.continuous;
  if (name == "pulse") return cfg.pulse;
  if (name == "adversary") return cfg.adversary;
  if (name == "fall_x" || name == "fall_y") {
    eval::DisturbanceRegime r = cfg.fall;
    r.pulse_axis = name == "fall_x" ? eval::PulseAxis::kX : eval::PulseAxis::kY;
    return r;
  }
  throw ConfigError("unknown regime '" + name + "'");
}

void write_eval(const fs::path& dir, const eval::EvalReport& rep) {
  auto f = open_out(dir / "report.csv");
  eval::write_report({rep}, f);
  auto g = open_out(dir / ("tracking_curve_" + rep.tag + ".csv"));
  eval::write_curve(rep, g);
}

int run_eval(const Common& c, const std::string& ckpt, const std::string& regime_name,
             const std::string& adversary_path, int episodes) {
  const CheckpointBundle b = load_checkpoint(ckpt);
  RunConfig cfg = resolve(c, &b.config_text);
  if (episodes > 0) cfg.eval_episodes = episodes;
  const eval::DisturbanceRegime regime = regime_from(cfg, regime_name);
  nn::GaussianPolicy adversary;
  if (regime.kind == eval::RegimeKind::kTrainedAdversary) {
    if (adversary_path.empty()) {
      throw ConfigError("regime 'adversary' needs --adversary <checkpoint from attack>");
    }
    adversary = load_checkpoint(adversary_path).nets.disturber;
  }
  const fs::path dir = prepare_out(cfg);
  eval::EvalOptions eo = cfg.eval;
  eo.tag = fs::path(ckpt).stem().string() + "_" + regime_name;
  const auto rep = eval::evaluate(make_model(cfg), b.nets.actor,
                                  regime.kind == eval::RegimeKind::kTrainedAdversary ? &adversary
                                                                                     : nullptr,
                                  regime, cfg.eval_episodes, cfg.seed, eo);
  write_eval(dir, rep);
  std::cout << "regime " << rep.regime << ": mean tracking error " << rep.mean_tracking_error
            << ", falls " << rep.falls << "/" << rep.pulses << "\n";
  return 0;
}

int run_attack(const Common& c, const std::string& ckpt, int epochs) {
  CheckpointBundle b = load_checkpoint(ckpt);
  RunConfig cfg = resolve(c, &b.config_text);
  if (epochs >= 0) cfg.attack.epochs = epochs;
  cfg.attack.force_limit = cfg.adversary.max_force;
  const fs::path dir = prepare_out(cfg);
  const env::EnvModel model = make_model(cfg);
  const auto res = eval::train_attack_disturber(model, b.nets, b.state.eta, cfg.trainer,
                                                cfg.attack, cfg.seed);
  {
    auto f = open_out(dir / "attack.csv");
    f << "epoch,mean_cost,mean_force_norm,max_force_norm\n";
    char buf[256];
    for (std::size_t k = 0; k < res.mean_cost.size(); ++k) {
      std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g\n", k + 1, res.mean_cost[k],
                    res.mean_force_norm[k], res.max_force_norm[k]);
      f << buf;
    }
  }
  CheckpointBundle adv = b;
  adv.nets.disturber = res.disturber;
  save_checkpoint(adv, (dir / "adversary.ckpt").string());
  eval::EvalOptions eo = cfg.eval;
  eo.tag = fs::path(ckpt).stem().string() + "_adversary";
  const auto rep = eval::evaluate(model, b.nets.actor, &res.disturber, cfg.adversary,
                                  cfg.eval_episodes, cfg.seed, eo);
  write_eval(dir, rep);
  std::cout << "attack: " << res.mean_cost.size() << " epochs; mean tracking error under attack "
            << rep.mean_tracking_error << "\n";
  return 0;
}

int run_oracle(const std::string& kind, const oracle::ScalarLqGrid& g, double gamma_att,
               double discount, const TabularSpec& t, double eta, double gamma2) {
  if (kind == "riccati" || kind == "threshold") {
    const auto s = [](double v) { return Eigen::MatrixXd::Constant(1, 1, v); };
    const env::LqModel m{s(g.a), s(g.b), s(g.e), s(g.q), s(g.r)};
    oracle::RiccatiOptions opts;
    opts.discount = discount;
    if (kind == "threshold") {
      std::printf("gamma_star\n%.17g\n", oracle::feasibility_threshold(m, 1e-3, 1e3, 1e-9, opts));
      return 0;
    }
    oracle::write_csv(oracle::solve_lq_hinf(m, gamma_att, opts), std::cout);
    return 0;
  }
  if (kind == "vi") {
    const auto game = env::TabularGame::random(t.states, t.actions, t.disturbances, t.game_seed);
    oracle::write_csv(oracle::minmax_value_iteration(game, eta, gamma2), std::cout);
    return 0;
  }
  if (kind == "lq_grid") {
    const auto game = oracle::discretize_scalar_lq(g);
    oracle::write_csv(oracle::minmax_value_iteration(game, gamma_att * gamma_att, gamma2),
                      std::cout);
    return 0;
  }
  throw ConfigError("unknown oracle kind '" + kind + "'");
}

int run_ablate(const Common& c, std::int64_t iters) {
  RunConfig cfg = resolve(c);
  if (iters >= 0) cfg.ablate_iterations = static_cast<int>(iters);
  cfg.validate();
  const fs::path dir = prepare_out(cfg);
  const std::string text = write_config(cfg);
  write_file(dir / "config.cfg", text);
  eval::AblationConfig ac;
  ac.base = cfg.trainer;
  ac.model = make_model(cfg);
  ac.iterations = cfg.ablate_iterations;
  ac.ramp_fraction = cfg.ablate_ramp_fraction;
  ac.seeds = cfg.ablate_seeds;
  ac.variants = cfg.ablate_variants;
  ac.regimes = {cfg.continuous, cfg.pulse, cfg.adversary};
  ac.eval_episodes = cfg.eval_episodes;
  ac.eval = cfg.eval;
  ac.attack = cfg.attack;
  const auto res = eval::ablation_suite(
      ac, [&](const std::string& tag, std::uint64_t seed, const Trainer& tr) {
        save_checkpoint(capture(tr, text),
                        (dir / (tag + "_s" + std::to_string(seed) + ".ckpt")).string());
      });
  {
    auto f = open_out(dir / "ablation.csv");
    eval::write_table(res.rows, f);
  }
  {
    auto f = open_out(dir / "report.csv");
    eval::write_report(res.reports, f);
  }
  for (const auto& rep : res.reports) {
    auto f = open_out(dir / ("tracking_curve_" + rep.tag + ".csv"));
    eval::write_curve(rep, f);
  }
  std::cout << "ablation: " << res.rows.size() << " rows written to "
            << (dir / "ablation.csv").string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"H-infinity adversarial locomotion training and evaluation"};
  app.require_subcommand(1);

  Common train_c, eval_c, attack_c, ablate_c;
  std::int64_t train_iters = -1, ablate_iters = -1;
  std::string resume, ckpt, attack_ckpt, regime = "pulse", adversary;
  int every = -1, episodes = 0, epochs = -1;

  auto* train = app.add_subcommand("train", "train a policy");
  add_common(train, train_c);
  train->add_option("--iters", train_iters, "iterations (total, including resumed ones)")
      ->check(CLI::NonNegativeNumber);
  train->add_option("--resume", resume, "resume from a checkpoint")->check(CLI::ExistingFile);
  train->add_option("--checkpoint-every", every, "checkpoint period in iterations")
      ->check(CLI::NonNegativeNumber);

  auto* evalc = app.add_subcommand("eval", "evaluate a checkpoint under a disturbance regime");
  add_common(evalc, eval_c);
  evalc->add_option("--ckpt", ckpt, "policy checkpoint")->required()->check(CLI::ExistingFile);
  evalc->add_option("--regime", regime, "none|continuous|pulse|adversary|fall_x|fall_y");
  evalc->add_option("--adversary", adversary, "adversary checkpoint written by attack")
      ->check(CLI::ExistingFile);
  evalc->add_option("--episodes", episodes, "evaluation episodes")->check(CLI::PositiveNumber);

  auto* attack = app.add_subcommand("attack", "train a fresh disturber against a frozen policy");
  add_common(attack, attack_c);
  attack->add_option("--ckpt", attack_ckpt, "policy checkpoint")
      ->required()
      ->check(CLI::ExistingFile);
  attack->add_option("--epochs", epochs, "attack epochs")->check(CLI::NonNegativeNumber);

  std::string oracle_kind = "riccati";
  oracle::ScalarLqGrid grid;
  double gamma_att = 2.0, discount = 1.0, eta = 0.1, gamma2 = 0.8;
  TabularSpec tab;
  auto* orc = app.add_subcommand("oracle", "print an oracle solution as CSV");
  orc->add_option("--kind", oracle_kind, "riccati|threshold|vi|lq_grid");
  orc->add_option("--a", grid.a);
  orc->add_option("--b", grid.b);
  orc->add_option("--e", grid.e);
  orc->add_option("--q", grid.q);
  orc->add_option("--r", grid.r);
  orc->add_option("--gamma-att", gamma_att)->check(CLI::PositiveNumber);
  orc->add_option("--discount", discount);
  orc->add_option("--states", tab.states);
  orc->add_option("--actions", tab.actions);
  orc->add_option("--disturbances", tab.disturbances);
  orc->add_option("--game-seed", tab.game_seed);
  orc->add_option("--eta", eta);
  orc->add_option("--gamma2", gamma2);
  orc->add_option("--x-max", grid.x_max);
  orc->add_option("--u-max", grid.u_max);
  orc->add_option("--w-max", grid.w_max);
  orc->add_option("--grid-states", grid.n_states);

  auto* ablate = app.add_subcommand("ablate", "train and compare the four ablation variants");
  add_common(ablate, ablate_c);
  ablate->add_option("--iters", ablate_iters, "training iterations per variant and seed")
      ->check(CLI::NonNegativeNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*train) return run_train(train_c, train_iters, resume, every);
    if (*evalc) return run_eval(eval_c, ckpt, regime, adversary, episodes);
    if (*attack) return run_attack(attack_c, attack_ckpt, epochs);
    if (*orc) return run_oracle(oracle_kind, grid, gamma_att, discount, tab, eta, gamma2);
    if (*ablate) return run_ablate(ablate_c, ablate_iters);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const CheckpointError& e) {
    std::cerr << "checkpoint error: " << e.what() << "\n";
    return kExitCheckpoint;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return 0;
}
