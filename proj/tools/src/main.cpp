// qcube: quantile-cube pipeline driver.
//
// Every subcommand accepts --config FILE with key=value lines naming its long
// options; flags given on the command line win over the file.

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "qcube/cube.hpp"
#include "qcube/dataset.hpp"
#include "qcube/dmr.hpp"
#include "qcube/error.hpp"
#include "qcube/hellinger.hpp"
#include "qcube/ingest.hpp"
#include "qcube/kinematics.hpp"
#include "qcube/pca.hpp"
#include "qcube/pipeline.hpp"
#include "qcube/simulate.hpp"
#include "qcube/text.hpp"

namespace fs = std::filesystem;
using namespace qcube;

namespace {

BinLayout parse_layout(const std::string& text) {
  std::vector<int> dims;
  std::stringstream in(text);
  std::string part;
  while (std::getline(in, part, ',')) {
    const auto v = text::to_int(part);
    if (!v || *v < 1) fail(ErrorKind::kInvalidArgument, "layout '" + text + "' must be three positive integers");
    dims.push_back(static_cast<int>(*v));
  }
  if (dims.size() != 3) fail(ErrorKind::kInvalidArgument, "layout '" + text + "' must be three positive integers");
  return {dims[0], dims[1], dims[2]};
}

void report(const fs::path& path) { std::cout << "wrote " << path.string() << "\n"; }

void write_output(const fs::path& path, const std::string& content) {
  text::write_file(path, content);
  report(path);
}

std::vector<QuantileCube> read_cubes(const fs::path& path, const BinLayout& layout) {
  auto cubes = parse_cubes(text::read_file(path));
  for (const auto& c : cubes) {
    if (static_cast<int>(c.counts.size()) != layout.size()) {
      fail(ErrorKind::kConsistency, path.string() + ": cube width " + std::to_string(c.counts.size()) +
                                        " does not match layout size " + std::to_string(layout.size()));
    }
  }
  return cubes;
}

int emit_error(const std::string& stage, const std::string& kind, const std::string& message) {
  nlohmann::ordered_json j;
  j["error"] = kind;
  j["stage"] = stage;
  j["message"] = message;
  std::cerr << j.dump() << "\n";
  return 1;
}

CLI::App* subcommand(CLI::App& app, const char* name, const char* description) {
  CLI::App* sub = app.add_subcommand(name, description);
  sub->add_option("--config", "key=value file of option defaults");
  return sub;
}

bool given_on_command_line(const std::vector<std::string>& args, const std::string& flag) {
  return std::any_of(args.begin(), args.end(), [&](const std::string& a) {
    return a == flag || a.rfind(flag + "=", 0) == 0;
  });
}

// Expands `--config FILE` into the options it names. Options already on the
// command line are left alone so that flags override the file.
std::vector<std::string> expand_config(const CLI::App& app, std::vector<std::string> args) {
  const CLI::App* sub = nullptr;
  std::size_t sub_at = 0;
  for (std::size_t i = 0; i < args.size() && sub == nullptr; ++i) {
    for (const CLI::App* candidate : app.get_subcommands({})) {
      if (candidate->get_name() == args[i]) {
        sub = candidate;
        sub_at = i;
      }
    }
  }
  if (sub == nullptr) return args;

  std::string file;
  for (std::size_t i = sub_at + 1; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      file = args[i + 1];
    } else if (args[i].rfind("--config=", 0) == 0) {
      file = args[i].substr(9);
    }
  }
  if (file.empty()) return args;

  std::vector<std::string> extra;
  for (const auto& [key, value] : text::parse_key_values(text::read_file(file))) {
    const std::string flag = "--" + key;
    const CLI::Option* opt = sub->get_option_no_throw(flag);
    if (opt == nullptr) opt = app.get_option_no_throw(flag);
    if (opt == nullptr || key == "config") {
      fail(ErrorKind::kInvalidArgument, file + ": unknown key '" + key + "' for " + sub->get_name());
    }
    if (given_on_command_line(args, flag)) continue;
    if (opt->get_type_size() == 0) {
      if (value == "true" || value == "1") extra.push_back(flag);
      continue;
    }
    if (opt->get_items_expected_max() > 1) {
      for (const auto item : text::split_csv(value)) {
        extra.push_back(flag);
        extra.push_back(std::string(item));
      }
      continue;
    }
    extra.push_back(flag);
    extra.push_back(value);
  }
  args.insert(args.end(), extra.begin(), extra.end());
  return args;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Quantile-cube movement analysis: ingest GPS halves, build cubes, test and model them"};
  app.require_subcommand(1);
  app.fallthrough();
  unsigned threads = 0;
  app.add_option("--threads", threads, "Worker threads (0 = all cores)")->capture_default_str();

  // simulate
  SeasonSpec season;
  fs::path sim_out;
  bool no_reserve = false;
  CLI::App* sim = subcommand(app, "simulate", "Write a synthetic season of traces and covariates");
  sim->add_option("--out", sim_out, "Output directory")->required();
  sim->add_option("--athletes", season.athletes, "Athletes in the squad")->capture_default_str();
  sim->add_option("--matches", season.matches, "Matches in the season")->capture_default_str();
  sim->add_option("--seed", season.seed, "Random seed")->capture_default_str();
  sim->add_option("--rate", season.rate_hz, "Resample rate used for playing_time (Hz)")->capture_default_str();
  sim->add_option("--half-minutes", season.half_minutes, "Regulation half length")->capture_default_str();
  sim->add_flag("--no-reserve", no_reserve, "Omit the reserve athlete who plays too few matches");

  // ingest
  fs::path ingest_in, ingest_out;
  EligibilityRule rule;
  CLI::App* ingest = subcommand(app, "ingest", "Filter eligible halves and project them to meters");
  ingest->add_option("--input", ingest_in, "Directory of trace CSVs")->required();
  ingest->add_option("--out", ingest_out, "Directory for planar traces and eligibility.csv")->required();
  ingest->add_option("--min-half-minutes", rule.min_half_minutes, "Minimum minutes in each half")->capture_default_str();
  ingest->add_option("--min-matches", rule.min_matches_exclusive, "Athletes need more retained matches than this")->capture_default_str();

  // kinematics
  fs::path kin_in, kin_out;
  double rate = 10.0;
  KinematicThresholds thresholds;
  CLI::App* kin = subcommand(app, "kinematics", "Spline-resample planar traces and derive v, a, angle");
  kin->add_option("--input", kin_in, "Directory of planar traces")->required();
  kin->add_option("--out", kin_out, "Directory for kinematic series")->required();
  kin->add_option("--rate", rate, "Resample rate (Hz)")->capture_default_str();
  kin->add_option("--v-threshold", thresholds.velocity, "Velocities below this become 0 (m/s)")->capture_default_str();
  kin->add_option("--a-threshold", thresholds.acceleration, "Accelerations below this become 0 (m/s^2)")->capture_default_str();

  // cube
  fs::path cube_in, cube_out, boundaries_out, boundaries_in;
  std::string layout_text = "5,5,4";
  double baseline = kDefaultAngleBaseline;
  CLI::App* cube = subcommand(app, "cube", "Compute global quantile cuts and per-half cubes");
  cube->add_option("--input", cube_in, "Directory of kinematic series")->required();
  cube->add_option("--out", cube_out, "Directory for cubes.csv")->required();
  auto* b_out = cube->add_option("--boundaries-out", boundaries_out, "Where to save computed cuts (default <out>/boundaries.json)");
  cube->add_option("--boundaries-in", boundaries_in, "Reuse saved cuts instead of computing them")->excludes(b_out);
  cube->add_option("--layout", layout_text, "Velocity,acceleration,angle bin counts")->capture_default_str();
  cube->add_option("--angle-baseline", baseline, "First angle cut in degrees")->capture_default_str();

  // test-halves
  fs::path th_cubes, th_out;
  HellingerOptions hopt;
  CLI::App* th = subcommand(app, "test-halves", "Hellinger resampling test of first vs second half");
  th->add_option("--cubes", th_cubes, "cubes.csv")->required();
  th->add_option("--out", th_out, "Output CSV path")->required();
  th->add_option("--reps", hopt.reps, "Null replicates per pair")->capture_default_str();
  th->add_option("--seed", hopt.seed, "Random seed")->capture_default_str();
  th->add_option("--alpha-base", hopt.alpha_base, "Family-wise level before division by g_a")->capture_default_str();

  // pca
  fs::path pca_cubes, pca_out;
  double cutoff = 0.9;
  std::string pca_input = "proportions";
  std::string pca_layout = "5,5,4";
  CLI::App* pca = subcommand(app, "pca", "Principal components of the cube matrix");
  pca->add_option("--cubes", pca_cubes, "cubes.csv")->required();
  pca->add_option("--out", pca_out, "Output directory")->required();
  pca->add_option("--cutoff", cutoff, "Cumulative explained variance to retain")->capture_default_str();
  pca->add_option("--pca-input", pca_input, "proportions or counts")->capture_default_str();
  pca->add_option("--layout", pca_layout, "Velocity,acceleration,angle bin counts")->capture_default_str();

  // dmr
  fs::path dmr_cubes, dmr_cov, dmr_out;
  std::string design = "half+position+logtime";
  std::vector<std::string> compare;
  double zcut = 3.0;
  std::string dmr_layout = "5,5,4";
  CLI::App* dmr = subcommand(app, "dmr", "Dirichlet-multinomial regression of cubes on covariates");
  dmr->add_option("--cubes", dmr_cubes, "cubes.csv")->required();
  dmr->add_option("--covariates", dmr_cov, "covariates.csv")->required();
  dmr->add_option("--out", dmr_out, "Output directory")->required();
  dmr->add_option("--design", design, "Design terms joined by '+'")->capture_default_str();
  dmr->add_option("--compare", compare, "Additional designs to rank against --design by BIC");
  dmr->add_option("--zcut", zcut, "|z| above which a coefficient is significant")->capture_default_str();
  dmr->add_option("--layout", dmr_layout, "Velocity,acceleration,angle bin counts")->capture_default_str();

  // run
  RunConfig cfg;
  std::string run_layout = "5,5,4";
  std::string run_pca_input = "proportions";
  fs::path run_boundaries;
  CLI::App* run = subcommand(app, "run", "Full pipeline with a manifest of output hashes");
  run->add_option("--input", cfg.input_dir, "Directory of trace CSVs and covariates.csv")->required();
  run->add_option("--out", cfg.output_dir, "Output directory")->required();
  run->add_option("--layout", run_layout, "Velocity,acceleration,angle bin counts")->capture_default_str();
  run->add_option("--rate", cfg.rate_hz, "Resample rate (Hz)")->capture_default_str();
  run->add_option("--v-threshold", cfg.thresholds.velocity, "Velocity threshold (m/s)")->capture_default_str();
  run->add_option("--a-threshold", cfg.thresholds.acceleration, "Acceleration threshold (m/s^2)")->capture_default_str();
  run->add_option("--angle-baseline", cfg.angle_baseline_deg, "First angle cut in degrees")->capture_default_str();
  run->add_option("--boundaries-in", run_boundaries, "Reuse saved cuts instead of computing them");
  run->add_option("--min-half-minutes", cfg.eligibility.min_half_minutes, "Minimum minutes in each half")->capture_default_str();
  run->add_option("--min-matches", cfg.eligibility.min_matches_exclusive, "Athletes need more retained matches than this")->capture_default_str();
  run->add_option("--reps", cfg.reps, "Null replicates per pair")->capture_default_str();
  run->add_option("--seed", cfg.seed, "Random seed")->capture_default_str();
  run->add_option("--alpha-base", cfg.alpha_base, "Family-wise level before division by g_a")->capture_default_str();
  run->add_option("--cutoff", cfg.variance_cutoff, "PCA cumulative explained variance to retain")->capture_default_str();
  run->add_option("--pca-input", run_pca_input, "proportions or counts")->capture_default_str();
  run->add_option("--design", cfg.design, "DMR design terms joined by '+'")->capture_default_str();
  run->add_option("--compare", cfg.compare_designs, "Additional designs to rank by BIC");
  run->add_option("--zcut", cfg.z_cut, "|z| above which a coefficient is significant")->capture_default_str();

  std::vector<std::string> args(argv + 1, argv + argc);
  try {
    args = expand_config(app, std::move(args));
  } catch (const Error& e) {
    return emit_error("config", std::string(to_string(e.kind())), e.what());
  }
  std::reverse(args.begin(), args.end());
  try {
    app.parse(std::move(args));
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  std::string stage = app.get_subcommands().front()->get_name();
  try {
    if (sim->parsed()) {
      season.include_reserve = !no_reserve;
      for (const auto& p : write_season(sim_out, simulate_season(season))) {
        if (p.extension() != ".meta") report(p);
      }
    } else if (ingest->parsed()) {
      const IngestOutput out = ingest_directory(ingest_in, rule, threads);
      write_output(ingest_out / "eligibility.csv", serialize_eligibility(out.report));
      write_planar_directory(ingest_out, out.traces);
      std::cout << "wrote " << out.traces.size() << " planar traces to " << ingest_out.string() << "\n";
    } else if (kin->parsed()) {
      const auto traces = load_planar_directory(kin_in);
      const auto series = compute_kinematics(traces, rate, thresholds, threads);
      write_kinematics_directory(kin_out, series);
      std::cout << "wrote " << series.size() << " kinematic series to " << kin_out.string() << "\n";
    } else if (cube->parsed()) {
      const BinLayout layout = parse_layout(layout_text);
      const auto series = load_kinematics_directory(cube_in);
      QuantileBoundaries b;
      if (!boundaries_in.empty()) {
        b = parse_boundaries(text::read_file(boundaries_in));
        if (b.layout() != layout) fail(ErrorKind::kInvalidArgument, "saved boundaries do not match --layout");
      } else {
        b = compute_boundaries(series, layout, baseline);
        write_output(boundaries_out.empty() ? cube_out / "boundaries.json" : boundaries_out,
                     serialize_boundaries(b));
      }
      write_output(cube_out / "cubes.csv", serialize_cubes(compute_cubes(series, b, threads)));
    } else if (th->parsed()) {
      hopt.threads = threads;
      const auto cubes = parse_cubes(text::read_file(th_cubes));
      write_output(th_out, serialize_hellinger(test_all_halves(cubes, hopt)));
    } else if (pca->parsed()) {
      const BinLayout layout = parse_layout(pca_layout);
      std::vector<QuantileCube> cubes = read_cubes(pca_cubes, layout);
      std::sort(cubes.begin(), cubes.end(),
                [](const auto& a, const auto& b) { return dataset_order(a.key, b.key); });
      CubeDataset ds;
      ds.layout = layout;
      ds.cubes = std::move(cubes);
      const PcaResult result = fit_pca(parse_pca_input(pca_input) == PcaInput::kCounts
                                           ? ds.counts_matrix()
                                           : ds.proportions_matrix(),
                                       cutoff);
      write_output(pca_out / "pca_explained.csv", serialize_pca_explained(result));
      write_output(pca_out / "pca_loadings.csv", serialize_pca_loadings(result, layout));
      write_output(pca_out / "pca_scores.csv", serialize_pca_scores(result, ds.row_keys()));
    } else if (dmr->parsed()) {
      const BinLayout layout = parse_layout(dmr_layout);
      const CubeDataset ds =
          assemble_dataset(read_cubes(dmr_cubes, layout), load_covariates(dmr_cov), layout);
      DmrOptions options;
      options.z_cut = zcut;
      const DesignSpec spec = DesignSpec::parse(design);
      const DmrFit fit = fit_dmr(ds, spec, options);
      write_output(dmr_out / "dmr_coefficients.csv", serialize_coefficients(fit, layout));
      if (!compare.empty()) {
        std::vector<DesignSpec> specs{spec};
        for (const auto& d : compare) specs.push_back(DesignSpec::parse(d));
        write_output(dmr_out / "dmr_model_comparison.csv",
                     serialize_comparison(compare_models(ds, specs, options)));
      }
    } else if (run->parsed()) {
      cfg.layout = parse_layout(run_layout);
      cfg.pca_input = parse_pca_input(run_pca_input);
      cfg.threads = threads;
      if (!run_boundaries.empty()) cfg.boundaries_in = run_boundaries;
      const Manifest manifest = run_pipeline(cfg);
      for (const auto& e : manifest.entries) report(cfg.output_dir / e.path);
      report(cfg.output_dir / "manifest.json");
    }
  } catch (const StageError& e) {
    return emit_error(e.stage(), std::string(to_string(e.kind())), e.what());
  } catch (const Error& e) {
    return emit_error(stage, std::string(to_string(e.kind())), e.what());
  } catch (const std::exception& e) {
    return emit_error(stage, "internal_error", e.what());
  }
  return 0;
}
