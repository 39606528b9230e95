#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "geodurbin/autocorr.hpp"
#include "geodurbin/ingest.hpp"
#include "geodurbin/pca.hpp"
#include "geodurbin/sdm.hpp"
#include "geodurbin/weights.hpp"

namespace geodurbin {

// Settings shared by every CLI subcommand. A config file is a flat
// `key = value` list; `#` starts a comment. Keys:
//   regions, counts, attributes, covariates   input paths
//   outcomes, covariate_names                 comma-separated column lists
//   k (7), nsim (999), seed (1), alpha (0.05)
//   standardize_covariates (true), lisa_tail (directed), fdr (false)
//   maps (true), map_width (800), out (out)
// Relative paths are resolved against the config file's directory.
struct PipelineConfig {
  std::filesystem::path regions;
  std::optional<std::filesystem::path> counts;
  std::optional<std::filesystem::path> attributes;
  std::optional<std::filesystem::path> covariates;
  std::vector<std::string> outcomes;
  std::vector<std::string> covariate_names;
  std::size_t k = 7;
  std::size_t nsim = 999;
  std::uint64_t seed = 1;
  double alpha = 0.05;
  bool standardize_covariates = true;
  LisaTail lisa_tail = LisaTail::Directed;
  bool fdr = false;
  bool maps = true;
  double map_width = 800.0;
  std::filesystem::path out = "out";
};

PipelineConfig load_config(const std::filesystem::path& path);
PipelineConfig parse_config(std::string_view text, const std::filesystem::path& base_dir = {});
// Applies one `key = value` setting; throws ValidationError on unknown keys
// or malformed values.
void apply_setting(PipelineConfig& config, std::string_view key, std::string_view value,
                   const std::filesystem::path& base_dir = {});
// Canonical key=value rendering of every field, in fixed key order.
std::string canonical(const PipelineConfig& config);
// FNV-1a 64 of canonical(config), as 16 hex digits.
std::string config_hash(const PipelineConfig& config);
// Range checks: k >= 1, nsim >= 99, 0 < alpha < 1, an outcome source.
void validate(const PipelineConfig& config);

struct PipelineInputs {
  RegionSet regions;
  std::optional<ChapterCounts> counts;
  AttributeTable outcomes;    // selected outcome columns, config order
  AttributeTable covariates;  // selected covariates, standardized if requested
};

// Loads and joins inputs, then checks every referenced column exists before
// any analysis runs (ValidationError naming the first missing column).
PipelineInputs load_inputs(const PipelineConfig& config);

// --- Table rows and writers ---------------------------------------------

struct SdmSummaryRow {
  std::string column;
  double rho = 0.0;
  double p_rho = 1.0;
  std::string direct;    // ';'-joined name+/name- tokens
  std::string indirect;
  double aic = 0.0;
  double lm_p = 1.0;
};

// Significant (p < alpha) beta and theta terms as sign-suffixed covariate
// names, sorted case-insensitively.
std::pair<std::string, std::string> significant_effects(const SdmFit& fit, double alpha);

void write_moran_global(const std::filesystem::path& path,
                        const std::vector<std::pair<std::string, GlobalMoranResult>>& rows);
void write_lisa(const std::filesystem::path& path, const RegionSet& regions,
                const LocalMoranResult& lisa);
void write_population_ratio(const std::filesystem::path& path,
                            const std::vector<std::pair<std::string, double>>& ratios);
void write_sdm_summary(const std::filesystem::path& path, const std::vector<SdmSummaryRow>& rows);
void write_sdm_full(const std::filesystem::path& path, const SdmFit& fit);
void write_model_compare(const std::filesystem::path& path,
                         const std::vector<std::pair<std::string, ModelComparison>>& rows);
void write_pca(const std::filesystem::path& dir, const RegionSet& regions, const PcaResult& pca,
               std::vector<std::string>* written = nullptr);

// Safe file stem for a column name.
std::string file_stem(std::string_view column);

// --- Stages -------------------------------------------------------------

// Files written by a stage, relative to the output directory.
struct Artifacts {
  std::vector<std::string> files;
  void add(std::string name) { files.push_back(std::move(name)); }
};

Artifacts run_weights_stage(const PipelineConfig& config, const PipelineInputs& inputs,
                            const SpatialWeights& w);
Artifacts run_moran_stage(const PipelineConfig& config, const PipelineInputs& inputs,
                          const SpatialWeights& w);
Artifacts run_lisa_stage(const PipelineConfig& config, const PipelineInputs& inputs,
                         const SpatialWeights& w);
Artifacts run_sdm_stage(const PipelineConfig& config, const PipelineInputs& inputs,
                        const SpatialWeights& w);
Artifacts run_pca_stage(const PipelineConfig& config, const PipelineInputs& inputs,
                        const SpatialWeights& w);

struct Manifest {
  std::string config_hash;
  std::uint64_t seed = 0;
  std::vector<std::string> artifacts;
};

// Full workflow: weights, population ratios, global Moran, LISA with maps,
// SDM against OLS, PCA with LISA on PC1, then manifest.txt. On failure
// every file written so far is removed and the error is rethrown with the
// stage name prepended.
Manifest run_pipeline(const PipelineConfig& config);

}  // namespace geodurbin
