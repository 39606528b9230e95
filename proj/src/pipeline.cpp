#include "geodurbin/pipeline.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "geodurbin/csv.hpp"
#include "geodurbin/error.hpp"
#include "geodurbin/render.hpp"

namespace geodurbin {

namespace fs = std::filesystem;

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::vector<std::string> split_list(std::string_view text) {
  std::vector<std::string> out;
  while (!text.empty()) {
    const auto comma = text.find(',');
    const auto item = trim(text.substr(0, comma));
    if (!item.empty()) out.emplace_back(item);
    if (comma == std::string_view::npos) break;
    text.remove_prefix(comma + 1);
  }
  return out;
}

std::string join(const std::vector<std::string>& items, char sep) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += sep;
    out += items[i];
  }
  return out;
}

bool parse_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "on" || v == "yes" || v == "1") return true;
  if (v == "false" || v == "off" || v == "no" || v == "0") return false;
  throw Error(ErrorCode::ValidationError, std::string(key), "expected a boolean");
}

std::size_t parse_count(std::string_view key, std::string_view v) {
  const auto n = csv::parse_int(v);
  if (!n || *n < 0) throw Error(ErrorCode::ValidationError, std::string(key), "expected a count");
  return static_cast<std::size_t>(*n);
}

double parse_real(std::string_view key, std::string_view v) {
  const auto x = csv::parse_double(v);
  if (!x) throw Error(ErrorCode::ValidationError, std::string(key), "expected a number");
  return *x;
}

fs::path resolve(const fs::path& base, std::string_view v) {
  fs::path p{std::string(v)};
  return p.is_absolute() || base.empty() ? p : base / p;
}

std::string fmt(double v) { return csv::format_double(v); }

std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

}  // namespace

void apply_setting(PipelineConfig& c, std::string_view key, std::string_view value,
                   const fs::path& base) {
  key = trim(key);
  value = trim(value);
  if (key == "regions") c.regions = resolve(base, value);
  else if (key == "counts") c.counts = resolve(base, value);
  else if (key == "attributes") c.attributes = resolve(base, value);
  else if (key == "covariates") c.covariates = resolve(base, value);
  else if (key == "outcomes") c.outcomes = split_list(value);
  else if (key == "covariate_names") c.covariate_names = split_list(value);
  else if (key == "k") c.k = parse_count(key, value);
  else if (key == "nsim") c.nsim = parse_count(key, value);
  else if (key == "seed") {
    unsigned long long s = 0;
    std::istringstream in{std::string(value)};
    if (!(in >> s) || !in.eof()) throw Error(ErrorCode::ValidationError, "seed", "expected an integer");
    c.seed = s;
  } else if (key == "alpha") c.alpha = parse_real(key, value);
  else if (key == "standardize_covariates") c.standardize_covariates = parse_bool(key, value);
  else if (key == "lisa_tail") {
    try {
      c.lisa_tail = parse_lisa_tail(value);
    } catch (const Error&) {
      throw Error(ErrorCode::ValidationError, "lisa_tail", "greater, two-sided or directed");
    }
  } else if (key == "fdr") c.fdr = parse_bool(key, value);
  else if (key == "maps") c.maps = parse_bool(key, value);
  else if (key == "map_width") c.map_width = parse_real(key, value);
  else if (key == "out") c.out = resolve(base, value);
  else throw Error(ErrorCode::ValidationError, std::string(key), "unknown config key");
}

PipelineConfig parse_config(std::string_view text, const fs::path& base) {
  PipelineConfig config;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw Error(ErrorCode::ParseError, "config line " + std::to_string(line_no),
                  "expected key = value");
    }
    apply_setting(config, line.substr(0, eq), line.substr(eq + 1), base);
  }
  return config;
}

PipelineConfig load_config(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, path.string(), "cannot open config");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.parent_path());
}

std::string canonical(const PipelineConfig& c) {
  auto opt = [](const std::optional<fs::path>& p) { return p ? p->generic_string() : ""; };
  std::string out;
  out += "regions=" + c.regions.generic_string() + "\n";
  out += "counts=" + opt(c.counts) + "\n";
  out += "attributes=" + opt(c.attributes) + "\n";
  out += "covariates=" + opt(c.covariates) + "\n";
  out += "outcomes=" + join(c.outcomes, ',') + "\n";
  out += "covariate_names=" + join(c.covariate_names, ',') + "\n";
  out += "k=" + std::to_string(c.k) + "\n";
  out += "nsim=" + std::to_string(c.nsim) + "\n";
  out += "seed=" + std::to_string(c.seed) + "\n";
  out += "alpha=" + fmt(c.alpha) + "\n";
  out += "standardize_covariates=" + std::string(c.standardize_covariates ? "true" : "false") + "\n";
  out += "lisa_tail=" + std::string(to_string(c.lisa_tail)) + "\n";
  out += "fdr=" + std::string(c.fdr ? "true" : "false") + "\n";
  out += "maps=" + std::string(c.maps ? "true" : "false") + "\n";
  out += "map_width=" + fmt(c.map_width) + "\n";
  out += "out=" + c.out.generic_string() + "\n";
  return out;
}

std::string config_hash(const PipelineConfig& config) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : canonical(config)) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void validate(const PipelineConfig& c) {
  if (c.k < 1) throw Error(ErrorCode::ValidationError, "k", "must be at least 1");
  if (c.nsim < kMinSimulations) {
    throw Error(ErrorCode::ValidationError, "nsim", "must be at least 99");
  }
  if (!(c.alpha > 0.0 && c.alpha < 1.0)) {
    throw Error(ErrorCode::ValidationError, "alpha", "must lie in (0, 1)");
  }
  if (c.regions.empty()) throw Error(ErrorCode::ValidationError, "regions", "no regions file");
  if (!c.counts && !c.attributes) {
    throw Error(ErrorCode::ValidationError, "counts", "need counts or attributes");
  }
  if (!(c.map_width > 50.0)) throw Error(ErrorCode::ValidationError, "map_width", "too small");
}

PipelineInputs load_inputs(const PipelineConfig& config) {
  validate(config);
  PipelineInputs in;
  in.regions = load_regions(config.regions);

  AttributeTable source(in.regions.size());
  std::optional<AttributeTable> attributes;
  if (config.attributes) attributes = load_attributes(*config.attributes, in.regions);
  if (config.counts) {
    in.counts = load_counts(*config.counts, in.regions);
    source = compute_ratios(*in.counts);
  } else {
    source = *attributes;
  }

  std::optional<AttributeTable> covariate_source;
  if (config.covariates) covariate_source = load_attributes(*config.covariates, in.regions);
  else if (!config.covariate_names.empty()) covariate_source = attributes;

  // Every referenced column is checked before anything is computed.
  const auto outcome_names = config.outcomes.empty() ? source.names() : config.outcomes;
  for (const auto& name : outcome_names) {
    if (!source.find(name)) {
      throw Error(ErrorCode::ValidationError, name, "outcome column not found");
    }
  }
  std::vector<std::string> covariate_names = config.covariate_names;
  if (covariate_names.empty() && covariate_source) covariate_names = covariate_source->names();
  for (const auto& name : covariate_names) {
    if (!covariate_source || !covariate_source->find(name)) {
      throw Error(ErrorCode::ValidationError, name, "covariate column not found");
    }
  }

  in.outcomes = AttributeTable(in.regions.size());
  for (const auto& name : outcome_names) in.outcomes.add(source.at(name));
  in.covariates = AttributeTable(in.regions.size());
  for (const auto& name : covariate_names) in.covariates.add(covariate_source->at(name));
  if (config.standardize_covariates && in.covariates.cols() > 0) {
    in.covariates = zscore_columns(in.covariates);
  }
  return in;
}

std::pair<std::string, std::string> significant_effects(const SdmFit& fit, double alpha) {
  auto tokens = [&](std::size_t offset) {
    std::vector<std::pair<std::string, char>> items;
    for (std::size_t j = 0; j < fit.p; ++j) {
      const auto idx = static_cast<Eigen::Index>(offset + j);
      if (fit.p_value[idx] < alpha) {
        items.emplace_back(fit.names[1 + j], fit.coefficients[idx] > 0.0 ? '+' : '-');
      }
    }
    std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
      const auto la = lower(a.first), lb = lower(b.first);
      return la != lb ? la < lb : a < b;
    });
    std::vector<std::string> out;
    for (const auto& [name, sign] : items) out.push_back(name + sign);
    return join(out, ';');
  };
  return {tokens(1), fit.durbin ? tokens(1 + fit.p) : std::string{}};
}

void write_moran_global(const fs::path& path,
                        const std::vector<std::pair<std::string, GlobalMoranResult>>& rows) {
  csv::Writer w({"column", "I", "p_value", "nsim", "seed"});
  for (const auto& [column, r] : rows) {
    w.row({column, fmt(r.statistic), fmt(r.p_value), std::to_string(r.nsim),
           std::to_string(r.seed)});
  }
  w.save(path);
}

void write_lisa(const fs::path& path, const RegionSet& regions, const LocalMoranResult& lisa) {
  csv::Writer w({"region_id", "local_I", "p_value", "z", "z_lag", "label"});
  for (std::size_t i = 0; i < regions.size(); ++i) {
    w.row({regions[i].id, fmt(lisa.statistic[i]), fmt(lisa.p_value[i]), fmt(lisa.z[i]),
           fmt(lisa.z_lag[i]), std::string(to_string(lisa.labels[i]))});
  }
  w.save(path);
}

void write_population_ratio(const fs::path& path,
                            const std::vector<std::pair<std::string, double>>& ratios) {
  csv::Writer w({"column", "ratio"});
  for (const auto& [column, r] : ratios) w.row({column, fmt(r)});
  w.save(path);
}

void write_sdm_summary(const fs::path& path, const std::vector<SdmSummaryRow>& rows) {
  csv::Writer w({"column", "rho", "p_rho", "direct_significant", "indirect_significant", "aic",
                 "lm_p"});
  for (const auto& r : rows) {
    w.row({r.column, fmt(r.rho), fmt(r.p_rho), r.direct, r.indirect, fmt(r.aic), fmt(r.lm_p)});
  }
  w.save(path);
}

void write_sdm_full(const fs::path& path, const SdmFit& fit) {
  csv::Writer w({"term", "estimate", "se", "p_value"});
  w.row({"rho", fmt(fit.rho), fmt(fit.rho_se), fmt(fit.rho_p_value)});
  for (std::size_t j = 0; j < fit.names.size(); ++j) {
    const auto idx = static_cast<Eigen::Index>(j);
    w.row({fit.names[j], fmt(fit.coefficients[idx]), fmt(fit.se[idx]), fmt(fit.p_value[idx])});
  }
  w.save(path);
}

void write_model_compare(const fs::path& path,
                         const std::vector<std::pair<std::string, ModelComparison>>& rows) {
  csv::Writer w({"column", "aic_sdm", "aic_ols", "delta_aic", "lr_statistic", "preferred"});
  for (const auto& [column, m] : rows) {
    w.row({column, fmt(m.aic_sdm), fmt(m.aic_ols), fmt(m.delta_aic), fmt(m.lr_statistic),
           std::string(to_string(m.preferred))});
  }
  w.save(path);
}

void write_pca(const fs::path& dir, const RegionSet& regions, const PcaResult& pca,
               std::vector<std::string>* written) {
  const auto p = static_cast<std::size_t>(pca.eigenvalues.size());
  std::vector<std::string> pcs;
  for (std::size_t j = 0; j < p; ++j) pcs.push_back("PC" + std::to_string(j + 1));
  auto note = [&](const char* name) {
    if (written) written->emplace_back(name);
  };

  {
    std::vector<std::string> header{"variable"};
    header.insert(header.end(), pcs.begin(), pcs.end());
    csv::Writer w(header);
    for (std::size_t v = 0; v < p; ++v) {
      std::vector<std::string> row{pca.variables[v]};
      for (std::size_t j = 0; j < p; ++j) {
        row.push_back(fmt(pca.loadings(static_cast<Eigen::Index>(v), static_cast<Eigen::Index>(j))));
      }
      w.row(row);
    }
    w.save(dir / "pca_loadings.csv");
    note("pca_loadings.csv");
  }
  {
    std::vector<std::string> header{"region_id"};
    header.insert(header.end(), pcs.begin(), pcs.end());
    csv::Writer w(header);
    for (std::size_t i = 0; i < regions.size(); ++i) {
      std::vector<std::string> row{regions[i].id};
      for (std::size_t j = 0; j < p; ++j) {
        row.push_back(fmt(pca.scores(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j))));
      }
      w.row(row);
    }
    w.save(dir / "pca_scores.csv");
    note("pca_scores.csv");
  }
  {
    csv::Writer w({"component", "eigenvalue", "explained"});
    for (std::size_t j = 0; j < p; ++j) {
      const auto idx = static_cast<Eigen::Index>(j);
      w.row({pcs[j], fmt(pca.eigenvalues[idx]), fmt(pca.explained[idx])});
    }
    w.save(dir / "pca_eigenvalues.csv");
    note("pca_eigenvalues.csv");
  }
  {
    std::vector<std::string> header{"variable"};
    header.insert(header.end(), pca.variables.begin(), pca.variables.end());
    csv::Writer w(header);
    for (std::size_t a = 0; a < p; ++a) {
      std::vector<std::string> row{pca.variables[a]};
      for (std::size_t b = 0; b < p; ++b) {
        row.push_back(fmt(pca.correlation(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b))));
      }
      w.row(row);
    }
    w.save(dir / "chapter_correlations.csv");
    note("chapter_correlations.csv");
  }
}

std::string file_stem(std::string_view column) {
  std::string out;
  for (char c : column) {
    const bool ok = std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '_' || c == '-';
    out += ok ? c : '_';
  }
  return out.empty() ? "_" : out;
}

namespace {

// Re-labels an error with the column being analysed.
Error for_column(const Error& e, const std::string& column) {
  std::string message = e.detail();
  if (!e.message().empty()) message += (message.empty() ? "" : ": ") + e.message();
  return Error(e.code(), column, message);
}

bool can_render(const PipelineConfig& config, const RegionSet& regions) {
  return config.maps && !regions.first_without_geometry();
}

void lisa_outputs(const PipelineConfig& config, const RegionSet& regions,
                  const std::string& column, std::span<const double> values,
                  const SpatialWeights& w, Artifacts& artifacts) {
  LocalMoranOptions opts;
  opts.nsim = config.nsim;
  opts.seed = config.seed;
  opts.alpha = config.alpha;
  opts.tail = config.lisa_tail;
  opts.fdr = config.fdr;
  const auto lisa = local_moran(values, w, opts);
  const auto stem = file_stem(column);

  write_lisa(config.out / ("lisa_" + stem + ".csv"), regions, lisa);
  artifacts.add("lisa_" + stem + ".csv");
  csv::write_text(config.out / ("lisa_" + stem + ".geojson"), lisa_geojson(regions, lisa));
  artifacts.add("lisa_" + stem + ".geojson");
  if (can_render(config, regions)) {
    RenderOptions ro;
    ro.width = config.map_width;
    ro.title = column + " value";
    csv::write_text(config.out / ("value_" + stem + ".svg"), render_choropleth(regions, values, ro));
    artifacts.add("value_" + stem + ".svg");
    ro.title = column + " LISA clusters";
    csv::write_text(config.out / ("lisa_" + stem + ".svg"),
                    render_choropleth(regions, std::span<const LisaLabel>(lisa.labels), ro));
    artifacts.add("lisa_" + stem + ".svg");
  }
}

}  // namespace

Artifacts run_weights_stage(const PipelineConfig& config, const PipelineInputs& inputs,
                            const SpatialWeights& w) {
  Artifacts a;
  fs::create_directories(config.out);
  write_weights_csv(config.out / "weights.csv", w, inputs.regions);
  a.add("weights.csv");
  return a;
}

Artifacts run_moran_stage(const PipelineConfig& config, const PipelineInputs& inputs,
                          const SpatialWeights& w) {
  Artifacts a;
  fs::create_directories(config.out);
  if (inputs.counts) {
    write_population_ratio(config.out / "population_ratio.csv", national_ratios(*inputs.counts));
    a.add("population_ratio.csv");
  }
  std::vector<std::pair<std::string, GlobalMoranResult>> rows;
  for (const auto& c : inputs.outcomes.columns()) {
    try {
      rows.emplace_back(c.name, global_moran_test(c.values, w, config.nsim, config.seed));
    } catch (const Error& e) {
      throw for_column(e, c.name);
    }
  }
  write_moran_global(config.out / "moran_global.csv", rows);
  a.add("moran_global.csv");
  return a;
}

Artifacts run_lisa_stage(const PipelineConfig& config, const PipelineInputs& inputs,
                         const SpatialWeights& w) {
  Artifacts a;
  fs::create_directories(config.out);
  for (const auto& c : inputs.outcomes.columns()) {
    try {
      lisa_outputs(config, inputs.regions, c.name, c.values, w, a);
    } catch (const Error& e) {
      throw for_column(e, c.name);
    }
  }
  return a;
}

Artifacts run_sdm_stage(const PipelineConfig& config, const PipelineInputs& inputs,
                        const SpatialWeights& w) {
  Artifacts a;
  if (inputs.covariates.cols() == 0) {
    throw Error(ErrorCode::ValidationError, "covariates", "the SDM needs covariates");
  }
  fs::create_directories(config.out);
  const LogDetSpatialFilter log_det(w);
  SdmOptions opts;
  opts.log_det = &log_det;
  const auto design = build_design(inputs.covariates.columns(), w, true);

  std::vector<SdmSummaryRow> summary;
  std::vector<std::pair<std::string, ModelComparison>> comparisons;
  for (const auto& c : inputs.outcomes.columns()) {
    try {
      const auto fit = fit_lag_model(c.values, design, w, opts);
      const auto ols = fit_ols(c.values, design);
      const auto lm = lm_residual_test(fit, w, config.nsim, config.seed);
      const auto [direct, indirect] = significant_effects(fit, config.alpha);
      summary.push_back({c.name, fit.rho, fit.rho_p_value, direct, indirect, fit.aic, lm.p_value});
      comparisons.emplace_back(c.name, model_compare(fit, ols));
      const auto name = "sdm_full_" + file_stem(c.name) + ".csv";
      write_sdm_full(config.out / name, fit);
      a.add(name);
    } catch (const Error& e) {
      throw for_column(e, c.name);
    }
  }
  write_sdm_summary(config.out / "sdm_summary.csv", summary);
  a.add("sdm_summary.csv");
  write_model_compare(config.out / "model_compare.csv", comparisons);
  a.add("model_compare.csv");
  return a;
}

Artifacts run_pca_stage(const PipelineConfig& config, const PipelineInputs& inputs,
                        const SpatialWeights& w) {
  Artifacts a;
  fs::create_directories(config.out);
  const auto pca = pca_fit(inputs.outcomes.columns());
  write_pca(config.out, inputs.regions, pca, &a.files);
  const auto pc1 = pca.component_scores(0);
  lisa_outputs(config, inputs.regions, "PC1", pc1, w, a);
  return a;
}

Manifest run_pipeline(const PipelineConfig& config) {
  Manifest manifest;
  manifest.config_hash = config_hash(config);
  manifest.seed = config.seed;
  std::string stage = "config";

  auto cleanup = [&] {
    std::error_code ec;
    for (const auto& f : manifest.artifacts) fs::remove(config.out / f, ec);
    fs::remove(config.out / "manifest.txt", ec);
  };
  auto absorb = [&](Artifacts a) {
    manifest.artifacts.insert(manifest.artifacts.end(), a.files.begin(), a.files.end());
  };

  try {
    validate(config);
    stage = "ingest";
    const auto inputs = load_inputs(config);
    stage = "weights";
    const auto w = build_knn(inputs.regions, config.k);
    absorb(run_weights_stage(config, inputs, w));
    stage = "moran";
    absorb(run_moran_stage(config, inputs, w));
    stage = "lisa";
    absorb(run_lisa_stage(config, inputs, w));
    if (inputs.covariates.cols() > 0) {
      stage = "sdm";
      absorb(run_sdm_stage(config, inputs, w));
    }
    if (inputs.outcomes.cols() >= 2) {
      stage = "pca";
      absorb(run_pca_stage(config, inputs, w));
    }

    stage = "manifest";
    std::string text;
    text += "config_hash=" + manifest.config_hash + "\n";
    text += "seed=" + std::to_string(config.seed) + "\n";
    text += "k=" + std::to_string(config.k) + "\n";
    text += "nsim=" + std::to_string(config.nsim) + "\n";
    text += "alpha=" + fmt(config.alpha) + "\n";
    text += "standardize_covariates=" +
            std::string(config.standardize_covariates ? "true" : "false") + "\n";
    text += "lisa_tail=" + std::string(to_string(config.lisa_tail)) + "\n";
    text += "regions=" + std::to_string(inputs.regions.size()) + "\n";
    text += "outcomes=" + join(inputs.outcomes.names(), ',') + "\n";
    text += "covariates=" + join(inputs.covariates.names(), ',') + "\n";
    for (const auto& f : manifest.artifacts) text += "artifact=" + f + "\n";
    csv::write_text(config.out / "manifest.txt", text);
  } catch (const Error& e) {
    cleanup();
    throw Error(e.code(), e.detail(),
                "stage " + stage + (e.message().empty() ? "" : ": " + e.message()));
  } catch (const std::exception& e) {
    cleanup();
    throw Error(ErrorCode::IoError, stage, e.what());
  }
  return manifest;
}

}  // namespace geodurbin
