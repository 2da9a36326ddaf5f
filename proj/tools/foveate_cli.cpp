// Copyright 2026 The Foveate Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// foveate: simulate | invert | sweep | render | atlas | validate-weights
//
// Every subcommand accepts --config FILE (INI/TOML); flags given on the
// command line override the file.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <set>

#include "CLI11.hpp"
#include "foveate/harness.hpp"
#include "foveate/render.hpp"
#include "json.hpp"

namespace fv = foveate;

namespace {

constexpr int kExitUsage = 64;
constexpr int kExitMissingInput = 2;

const std::set<std::string> kCommands = {"simulate", "invert", "sweep", "render", "atlas", "validate-weights"};

void add_agent_options(CLI::App* sub, fv::RunConfig& cfg, std::string& mode) {
  sub->add_option("--weights", cfg.weights_path, "VAEW weight file")->capture_default_str();
  sub->add_option("--atlas", cfg.atlas_path, "PATL priority atlas")->capture_default_str();
  sub->add_option("--data", cfg.data_dir, "directory with IDX files (default: $FOVEATE_DATA_DIR or fixtures)");
  sub->add_option("--split", cfg.split, "dataset split prefix")->capture_default_str();
  sub->add_option("--log-pi-e", cfg.log_pi_e, "exteroceptive log-precision")->capture_default_str();
  sub->add_option("--feature-epsilon", cfg.feature_epsilon, "feature likelihood smoothing")->capture_default_str();
  sub->add_option("--digit-confusion", cfg.digit_confusion_log_precision,
                  "log-precision of the decoder-derived digit likelihood (<0: identity)")
      ->capture_default_str();
  sub->add_option("--mode", mode, "action selection")->check(CLI::IsMember({"sample", "argmax"}))->capture_default_str();
}

void apply_mode(fv::RunConfig& cfg, const std::string& mode) {
  cfg.mode = mode == "argmax" ? fv::SelectionMode::kArgmax : fv::SelectionMode::kSample;
}

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    size_t used = 0;
    const double v = std::stod(item, &used);
    if (used != item.size()) throw fv::Error(fv::ErrorKind::kInvalidArgument, "bad number '" + item + "'");
    out.push_back(v);
  }
  if (out.empty()) throw fv::Error(fv::ErrorKind::kInvalidArgument, "empty list");
  return out;
}

int cmd_simulate(const fv::RunConfig& cfg) {
  const fv::RunOutput out = fv::run_trials(cfg);
  std::printf("%s\n%s\n", fv::kMetricsHeader, fv::metrics_row(cfg.params, out.metrics).c_str());
  std::printf("wrote %s and %s (%zu trials)\n", out.trace_path.c_str(), out.metrics_path.c_str(), out.traces.size());
  return 0;
}

int cmd_invert(const fv::RunConfig& cfg, const std::string& traces_path, const fv::InversionPriors& priors) {
  const auto traces = fv::read_traces_file(traces_path);
  const fv::LoadedAgent la = fv::load_agent(cfg);
  const fv::Dataset data = fv::load_split(cfg);
  const auto replays = fv::replay_all(la.agent, traces, data);
  const fv::InversionResult r = fv::invert(replays, priors);
  const auto p = r.params();
  std::printf("c_pref %.4f  (sd %.4f)\nbeta   %.4f  (ln beta sd %.4f)\niterations %zu  F %.4f%s\n", p.c_pref,
              std::sqrt(r.covariance[0][0]), p.beta, std::sqrt(r.covariance[1][1]), r.iterations,
              r.free_energy.back(), r.covariance_reliable ? "" : "  [covariance unreliable]");
  nlohmann::json j;
  j["traces"] = traces.size();
  j["mean"] = {{"c_pref", r.mean[0]}, {"log_beta", r.mean[1]}};
  j["beta"] = p.beta;
  j["covariance"] = {{r.covariance[0][0], r.covariance[0][1]}, {r.covariance[1][0], r.covariance[1][1]}};
  j["covariance_reliable"] = r.covariance_reliable;
  j["free_energy"] = r.free_energy;
  j["iterations"] = r.iterations;
  j["log_evidence"] = r.log_evidence;
  std::filesystem::create_directories(cfg.out_dir);
  const auto path = std::filesystem::path(cfg.out_dir) / "inversion.json";
  fv::write_atomic(path, j.dump(2) + "\n");
  std::printf("wrote %s\n", path.c_str());
  return 0;
}

int cmd_sweep(const fv::RunConfig& cfg, const std::string& cs, const std::string& betas) {
  const fv::LoadedAgent la = fv::load_agent(cfg);
  const fv::Dataset data = fv::load_split(cfg);
  const auto ids = fv::trial_stimuli(data, cfg.trials);
  std::vector<fv::SubjectiveParams> grid;
  for (double c : parse_list(cs))
    for (double b : parse_list(betas)) grid.push_back({c, b});
  const auto points = fv::sweep(la.agent, grid, data, ids, cfg.seed);
  const std::string csv = fv::sweep_csv(points);
  std::fputs(csv.c_str(), stdout);
  std::filesystem::create_directories(cfg.out_dir);
  const auto path = std::filesystem::path(cfg.out_dir) / "sweep.csv";
  fv::write_atomic(path, csv);
  std::printf("wrote %s\n", path.c_str());
  return 0;
}

int cmd_render(const fv::RunConfig& cfg, const std::string& traces_path, size_t trial, int step,
               const std::string& out_path) {
  const auto traces = fv::read_traces_file(traces_path);
  const fv::BehaviorTrace* t = nullptr;
  for (const auto& x : traces)
    if (x.trial_id == trial) t = &x;
  if (!t) throw fv::Error(fv::ErrorKind::kOutOfRange, "trial " + std::to_string(trial) + " not in " + traces_path);
  const fv::LoadedAgent la = fv::load_agent(cfg);
  const fv::Dataset data = fv::load_split(cfg);
  const auto img = fv::render_trace(la.agent, *t, data,
                                    step < 0 ? std::nullopt : std::optional<size_t>(static_cast<size_t>(step)));
  fv::write_atomic(out_path, fv::encode_pgm(img));
  std::printf("wrote %s (%zux%zu)\n", out_path.c_str(), img.width, img.height);
  return 0;
}

int cmd_atlas(const fv::RunConfig& cfg, const std::string& out_path) {
  const fv::Dataset data = fv::load_split(cfg);
  std::vector<fv::Image> images;
  for (size_t i = 0; i < data.size(); ++i) images.push_back(data.image(i));
  fv::save_atlas(out_path, fv::build_atlas(images, data.labels));
  std::printf("wrote %s from %zu images\n", out_path.c_str(), data.size());
  return 0;
}

int cmd_validate_weights(const std::string& weights, const std::string& parity, double tol) {
  const fv::VaeWeights w = fv::load_weights(weights);
  std::printf("%s: ok (n_c=%zu n_d=%zu, %zu encoder / %zu decoder layers)\n", weights.c_str(), w.n_c, w.n_d,
              w.encoder.size(), w.decoder.size());
  if (parity.empty()) return 0;
  const auto cases = fv::parse_parity(fv::detail::read_file(parity));
  const double err = fv::parity_error(w, cases);
  std::printf("parity: %zu codes, max abs error %.3g (tolerance %.1g)\n", cases.size(), err, tol);
  return err <= tol ? 0 : 1;
}

/// Keys outside any [section] apply to the subcommand being run; CLI11 only
/// reads config files on the top-level app.
class SubcommandConfig : public CLI::ConfigTOML {
 public:
  explicit SubcommandConfig(std::string sub) : sub_(std::move(sub)) {}
  std::vector<CLI::ConfigItem> from_config(std::istream& is) const override {
    auto items = CLI::ConfigTOML::from_config(is);
    for (auto& item : items)
      if (item.parents.empty()) item.parents = {sub_};
    return items;
  }

 private:
  std::string sub_;
};

void usage(std::ostream& os) {
  os << "usage: foveate <simulate|invert|sweep|render|atlas|validate-weights> [options]\n"
        "       foveate <subcommand> --help\n";
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2 || (argv[1][0] != '-' && !kCommands.count(argv[1]))) {
    if (argc >= 2) std::cerr << "unknown subcommand '" << argv[1] << "'\n";
    usage(std::cerr);
    return kExitUsage;
  }

  CLI::App app{"Gaze-contingent digit classification by active inference"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_config("--config", "", "INI/TOML file; command-line flags take precedence");
  if (argv[1][0] != '-') app.config_formatter(std::make_shared<SubcommandConfig>(argv[1]));
  fv::RunConfig cfg;
  std::string mode = "sample";

  auto* sim = app.add_subcommand("simulate", "run trials and write traces.tsv + metrics.csv");
  add_agent_options(sim, cfg, mode);
  sim->add_option("--trials", cfg.trials, "number of trials (balanced over classes)")->capture_default_str();
  sim->add_option("--seed", cfg.seed, "master seed")->capture_default_str();
  sim->add_option("--c", cfg.params.c_pref, "preference for correct feedback (nats)")->capture_default_str();
  sim->add_option("--beta", cfg.params.beta, "inverse policy precision")->check(CLI::PositiveNumber)->capture_default_str();
  sim->add_option("--out", cfg.out_dir, "output directory")->capture_default_str();

  std::string traces_path;
  fv::InversionPriors priors;
  auto* inv = app.add_subcommand("invert", "recover (c, beta) from a trace file");
  add_agent_options(inv, cfg, mode);
  inv->add_option("--traces", traces_path, "trace TSV")->required();
  inv->add_option("--out", cfg.out_dir, "output directory")->capture_default_str();
  inv->add_option("--prior-c", priors.c_mean, "prior mean of c")->capture_default_str();
  inv->add_option("--prior-c-sd", priors.c_sd, "prior sd of c")->capture_default_str();
  inv->add_option("--prior-log-beta", priors.log_beta_mean, "prior mean of ln beta")->capture_default_str();
  inv->add_option("--prior-log-beta-sd", priors.log_beta_sd, "prior sd of ln beta")->capture_default_str();

  std::string cs = "6", betas = "1";
  auto* sw = app.add_subcommand("sweep", "behavioural metrics over a (c, beta) grid");
  add_agent_options(sw, cfg, mode);
  sw->add_option("--c", cs, "comma-separated c values")->capture_default_str();
  sw->add_option("--beta", betas, "comma-separated beta values")->capture_default_str();
  sw->add_option("--trials", cfg.trials, "trials per grid point")->capture_default_str();
  sw->add_option("--seed", cfg.seed, "master seed")->capture_default_str();
  sw->add_option("--out", cfg.out_dir, "output directory")->capture_default_str();

  size_t trial = 0;
  int step = -1;
  std::string image_out = "trial.pgm";
  auto* ren = app.add_subcommand("render", "six-panel PGM of one trial");
  add_agent_options(ren, cfg, mode);
  ren->add_option("--traces", traces_path, "trace TSV")->required();
  ren->add_option("--trial", trial, "trial id to render")->capture_default_str();
  ren->add_option("--step", step, "step to show (default: last fixation)");
  ren->add_option("--out", image_out, "output PGM")->capture_default_str();

  std::string atlas_out = "atlas.patl", atlas_split = "train";
  auto* atl = app.add_subcommand("atlas", "build the class priority atlas from a split");
  atl->add_option("--data", cfg.data_dir, "directory with IDX files");
  atl->add_option("--split", atlas_split, "dataset split prefix")->capture_default_str();
  atl->add_option("--out", atlas_out, "output PATL file")->capture_default_str();

  std::string parity = fv::fixture_path("vae_parity.bin");
  double tol = 1e-5;
  auto* val = app.add_subcommand("validate-weights", "check a weight file (and decoder parity)");
  val->add_option("--weights", cfg.weights_path, "VAEW weight file")->capture_default_str();
  val->add_option("--parity", parity, "parity golden ('' to skip)")->capture_default_str();
  val->add_option("--tolerance", tol, "max abs decode error")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::FileError& e) {
    app.exit(e);
    return kExitMissingInput;
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }
  apply_mode(cfg, mode);

  try {
    if (*sim) return cmd_simulate(cfg);
    if (*inv) return cmd_invert(cfg, traces_path, priors);
    if (*sw) return cmd_sweep(cfg, cs, betas);
    if (*ren) return cmd_render(cfg, traces_path, trial, step, image_out);
    if (*atl) {
      cfg.split = atlas_split;
      return cmd_atlas(cfg, atlas_out);
    }
    if (*val) return cmd_validate_weights(cfg.weights_path, parity, tol);
  } catch (const fv::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.kind() == fv::ErrorKind::kIo ? kExitMissingInput : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  usage(std::cerr);
  return kExitUsage;
}
