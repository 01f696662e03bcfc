#include "qcube/pipeline.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "qcube/digest.hpp"
#include "qcube/dmr.hpp"
#include "qcube/hellinger.hpp"
#include "qcube/parallel.hpp"
#include "qcube/text.hpp"

namespace qcube {
namespace fs = std::filesystem;

namespace {

template <typename Fn>
auto in_stage(const char* stage, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const StageError&) {
    throw;
  } catch (const Error& e) {
    throw StageError(stage, e);
  } catch (const fs::filesystem_error& e) {
    throw StageError(stage, Error(ErrorKind::kIo, e.what()));
  }
}

std::int64_t data_rows(const fs::path& rel, std::string_view content) {
  if (rel.extension() == ".json") return 1;
  const auto n = static_cast<std::int64_t>(std::count(content.begin(), content.end(), '\n'));
  return std::max<std::int64_t>(0, n - 1);
}

// Writes outputs, records them in the manifest and deletes them again if the
// run does not complete.
class OutputWriter {
 public:
  explicit OutputWriter(fs::path root) : root_(std::move(root)) {}

  void write(const std::string& stage, const std::string& rel, const std::string& content) {
    const fs::path path = root_ / rel;
    written_.push_back(path);
    text::write_file(path, content);
    manifest_.entries.push_back({stage, rel, sha256_hex(content), data_rows(rel, content)});
  }

  void write_unlisted(const std::string& rel, const std::string& content) {
    const fs::path path = root_ / rel;
    written_.push_back(path);
    text::write_file(path, content);
  }

  void rollback() noexcept {
    for (const fs::path& p : written_) {
      std::error_code ec;
      fs::remove(p, ec);
    }
    written_.clear();
  }

  const Manifest& manifest() const { return manifest_; }

 private:
  fs::path root_;
  Manifest manifest_;
  std::vector<fs::path> written_;
};

std::vector<fs::path> sorted_csv_files(const fs::path& dir, std::string_view skip) {
  if (!fs::is_directory(dir)) fail(ErrorKind::kIo, dir.string() + " is not a directory");
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".csv") continue;
    if (entry.path().filename() == skip) continue;
    files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

fs::path sidecar_of(const fs::path& csv) {
  fs::path meta = csv;
  meta.replace_extension(".meta");
  if (!fs::exists(meta)) fail(ErrorKind::kIo, csv.string() + ": missing .meta sidecar");
  return meta;
}

}  // namespace

void RunConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) fail(ErrorKind::kInvalidArgument, std::string("config: ") + what);
  };
  require(layout.velocity >= 1 && layout.acceleration >= 1 && layout.angle >= 1,
          "layout dimensions must be positive");
  require(thresholds.velocity > 0.0 && thresholds.acceleration > 0.0,
          "thresholds must be positive");
  require(rate_hz > 0.0, "rate must be positive");
  require(reps >= 1, "reps must be >= 1");
  require(alpha_base > 0.0 && alpha_base < 1.0, "alpha base must lie in (0, 1)");
  require(variance_cutoff > 0.0 && variance_cutoff <= 1.0, "variance cutoff must lie in (0, 1]");
  require(z_cut > 0.0, "z cut must be positive");
  require(eligibility.min_half_minutes > 0.0, "minimum half minutes must be positive");
  require(std::isfinite(angle_baseline_deg), "angle baseline must be finite");
}

std::string Manifest::to_json() const {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const ManifestEntry& e : entries) {
    arr.push_back({{"stage", e.stage}, {"path", e.path}, {"sha256", e.sha256}, {"rows", e.rows}});
  }
  return arr.dump(2) + "\n";
}

std::string trace_stem(const TraceMetadata& meta) {
  return meta.athlete_id + "__" + meta.match_id + "__h" + std::to_string(half_number(meta.half));
}

IngestOutput ingest_directory(const fs::path& input_dir, const EligibilityRule& rule,
                              unsigned threads) {
  FilterResult filtered = filter_sessions(load_trace_directory(input_dir), rule);
  IngestOutput out;
  out.report = std::move(filtered.report);
  out.traces.resize(filtered.retained.size());
  parallel_for(filtered.retained.size(), threads,
               [&](std::size_t i) { out.traces[i] = project_to_meters(filtered.retained[i]); });
  return out;
}

std::vector<KinematicSeries> compute_kinematics(std::span<const PlanarTrace> traces,
                                                double rate_hz, const KinematicThresholds& thresholds,
                                                unsigned threads) {
  std::vector<KinematicSeries> out(traces.size());
  parallel_for(traces.size(), threads, [&](std::size_t i) {
    out[i] = trace_kinematics(traces[i], rate_hz, thresholds);
  });
  return out;
}

std::vector<QuantileCube> compute_cubes(std::span<const KinematicSeries> series,
                                        const QuantileBoundaries& boundaries, unsigned threads) {
  std::vector<QuantileCube> cubes(series.size());
  parallel_for(series.size(), threads,
               [&](std::size_t i) { cubes[i] = build_cube(series[i], boundaries); });
  std::sort(cubes.begin(), cubes.end(),
            [](const QuantileCube& a, const QuantileCube& b) { return dataset_order(a.key, b.key); });
  return cubes;
}

std::vector<fs::path> write_planar_directory(const fs::path& dir,
                                             std::span<const PlanarTrace> traces) {
  std::vector<fs::path> written;
  for (const PlanarTrace& t : traces) {
    const fs::path csv = dir / (trace_stem(t.meta) + ".csv");
    const fs::path meta = dir / (trace_stem(t.meta) + ".meta");
    text::write_file(csv, serialize_planar(t));
    text::write_file(meta, serialize_metadata(t.meta) +
                               "origin_lon_deg=" + text::format_double(t.origin.lon_deg) + "\n" +
                               "origin_lat_deg=" + text::format_double(t.origin.lat_deg) + "\n");
    written.push_back(csv);
    written.push_back(meta);
  }
  return written;
}

std::vector<PlanarTrace> load_planar_directory(const fs::path& dir) {
  std::vector<PlanarTrace> traces;
  for (const fs::path& csv : sorted_csv_files(dir, "eligibility.csv")) {
    const std::string meta_text = text::read_file(sidecar_of(csv));
    const auto kv = text::parse_key_values(meta_text);
    GeoOrigin origin;
    const auto lon = kv.find("origin_lon_deg");
    const auto lat = kv.find("origin_lat_deg");
    const auto lon_v = lon == kv.end() ? std::nullopt : text::to_double(lon->second);
    const auto lat_v = lat == kv.end() ? std::nullopt : text::to_double(lat->second);
    if (!lon_v || !lat_v) fail(ErrorKind::kParse, csv.string() + ": sidecar lacks the projection origin");
    origin = {*lon_v, *lat_v};
    traces.push_back(parse_planar_text(text::read_file(csv), parse_metadata_text(meta_text), origin));
  }
  return traces;
}

std::vector<fs::path> write_kinematics_directory(const fs::path& dir,
                                                 std::span<const KinematicSeries> series) {
  std::vector<fs::path> written;
  for (const KinematicSeries& s : series) {
    const fs::path csv = dir / (trace_stem(s.meta) + ".csv");
    const fs::path meta = dir / (trace_stem(s.meta) + ".meta");
    text::write_file(csv, serialize_kinematics(s));
    text::write_file(meta, serialize_metadata(s.meta));
    written.push_back(csv);
    written.push_back(meta);
  }
  return written;
}

std::vector<KinematicSeries> load_kinematics_directory(const fs::path& dir) {
  std::vector<KinematicSeries> series;
  for (const fs::path& csv : sorted_csv_files(dir, "")) {
    const TraceMetadata meta = parse_metadata_text(text::read_file(sidecar_of(csv)));
    series.push_back(parse_kinematics_text(text::read_file(csv), meta));
  }
  return series;
}

std::vector<CovariateRecord> load_covariates(const fs::path& path) {
  if (!fs::exists(path)) fail(ErrorKind::kJoin, "covariate file " + path.string() + " not found");
  return parse_covariates(text::read_file(path));
}

Manifest run_pipeline(const RunConfig& config) {
  in_stage("config", [&] { config.validate(); });
  in_stage("output", [&] { fs::create_directories(config.output_dir); });
  OutputWriter out(config.output_dir);
  try {
    const IngestOutput ingested =
        in_stage("ingest", [&] { return ingest_directory(config.input_dir, config.eligibility, config.threads); });
    in_stage("ingest", [&] { out.write("ingest", "eligibility.csv", serialize_eligibility(ingested.report)); });

    const auto series = in_stage("kinematics", [&] {
      return compute_kinematics(ingested.traces, config.rate_hz, config.thresholds, config.threads);
    });

    const auto cubes = in_stage("cube", [&] {
      const QuantileBoundaries boundaries =
          config.boundaries_in ? parse_boundaries(text::read_file(*config.boundaries_in))
                               : compute_boundaries(series, config.layout, config.angle_baseline_deg);
      if (boundaries.layout() != config.layout) {
        fail(ErrorKind::kInvalidArgument, "boundaries layout does not match the configured layout");
      }
      out.write("cube", "boundaries.json", serialize_boundaries(boundaries));
      auto built = compute_cubes(series, boundaries, config.threads);
      out.write("cube", "cubes.csv", serialize_cubes(built));
      return built;
    });

    const CubeDataset dataset = in_stage("assemble", [&] {
      const auto covariates = load_covariates(config.input_dir / "covariates.csv");
      return assemble_dataset(cubes, covariates, config.layout);
    });

    in_stage("hellinger", [&] {
      HellingerOptions options;
      options.reps = config.reps;
      options.seed = config.seed;
      options.alpha_base = config.alpha_base;
      options.threads = config.threads;
      const auto results = test_all_halves(dataset.cubes, options);
      out.write("hellinger", "hellinger.csv", serialize_hellinger(results));
    });

    in_stage("pca", [&] {
      const Eigen::MatrixXd rows = config.pca_input == PcaInput::kCounts
                                       ? dataset.counts_matrix()
                                       : dataset.proportions_matrix();
      const PcaResult pca = fit_pca(rows, config.variance_cutoff);
      const auto keys = dataset.row_keys();
      out.write("pca", "pca_explained.csv", serialize_pca_explained(pca));
      out.write("pca", "pca_loadings.csv", serialize_pca_loadings(pca, config.layout));
      out.write("pca", "pca_scores.csv", serialize_pca_scores(pca, keys));
    });

    in_stage("dmr", [&] {
      DmrOptions options;
      options.z_cut = config.z_cut;
      const DesignSpec spec = DesignSpec::parse(config.design);
      const DmrFit fit = fit_dmr(dataset, spec, options);
      out.write("dmr", "dmr_coefficients.csv", serialize_coefficients(fit, config.layout));
      if (!config.compare_designs.empty()) {
        std::vector<DesignSpec> specs{spec};
        for (const auto& d : config.compare_designs) specs.push_back(DesignSpec::parse(d));
        out.write("dmr", "dmr_model_comparison.csv",
                  serialize_comparison(compare_models(dataset, specs, options)));
      }
    });

    in_stage("manifest", [&] { out.write_unlisted("manifest.json", out.manifest().to_json()); });
  } catch (...) {
    out.rollback();
    throw;
  }
  return out.manifest();
}

}  // namespace qcube
