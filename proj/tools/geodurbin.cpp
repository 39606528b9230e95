#include <cmath>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "geodurbin/csv.hpp"
#include "geodurbin/error.hpp"
#include "geodurbin/pca.hpp"
#include "geodurbin/pipeline.hpp"
#include "geodurbin/render.hpp"
#include "geodurbin/rng.hpp"
#include "geodurbin/synth.hpp"

namespace fs = std::filesystem;
using namespace geodurbin;

namespace {

struct GlobalFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> nsim;
  std::optional<std::size_t> k;
  std::optional<double> alpha;
  std::optional<std::string> out;
};

struct InputFlags {
  std::string regions, counts, attributes, covariates;
  std::vector<std::string> outcomes, covariate_names;
  std::optional<std::string> tail;
  bool fdr = false;
  bool raw_covariates = false;
  bool no_maps = false;
};

void add_input_flags(CLI::App* cmd, InputFlags& f) {
  cmd->add_option("--regions", f.regions, "regions.csv or .geojson");
  cmd->add_option("--counts", f.counts, "counts.csv (long format)");
  cmd->add_option("--attributes", f.attributes, "attributes.csv (wide format)");
  cmd->add_option("--covariates", f.covariates, "covariates.csv (wide format)");
  cmd->add_option("--outcomes", f.outcomes, "outcome columns")->delimiter(',');
  cmd->add_option("--covariate-names", f.covariate_names, "covariate columns")->delimiter(',');
  cmd->add_option("--tail", f.tail, "LISA tail: greater, two-sided, directed");
  cmd->add_flag("--fdr", f.fdr, "Benjamini-Hochberg adjustment of LISA p-values");
  cmd->add_flag("--raw-covariates", f.raw_covariates, "skip covariate standardization");
  cmd->add_flag("--no-maps", f.no_maps, "skip SVG output");
}

PipelineConfig make_config(const GlobalFlags& g, const InputFlags& f) {
  PipelineConfig c = g.config.empty() ? PipelineConfig{} : load_config(g.config);
  if (!f.regions.empty()) c.regions = f.regions;
  if (!f.counts.empty()) c.counts = fs::path(f.counts);
  if (!f.attributes.empty()) c.attributes = fs::path(f.attributes);
  if (!f.covariates.empty()) c.covariates = fs::path(f.covariates);
  if (!f.outcomes.empty()) c.outcomes = f.outcomes;
  if (!f.covariate_names.empty()) c.covariate_names = f.covariate_names;
  if (f.tail) apply_setting(c, "lisa_tail", *f.tail);
  if (f.fdr) c.fdr = true;
  if (f.raw_covariates) c.standardize_covariates = false;
  if (f.no_maps) c.maps = false;
  if (g.seed) c.seed = *g.seed;
  if (g.nsim) c.nsim = *g.nsim;
  if (g.k) c.k = *g.k;
  if (g.alpha) c.alpha = *g.alpha;
  if (g.out) c.out = *g.out;
  return c;
}

void report(const Artifacts& a, const fs::path& out) {
  for (const auto& f : a.files) std::cout << (out / f).string() << "\n";
}

template <typename Stage>
void run_stage(const GlobalFlags& g, const InputFlags& f, Stage stage) {
  const auto config = make_config(g, f);
  const auto inputs = load_inputs(config);
  const auto w = build_knn(inputs.regions, config.k);
  report(stage(config, inputs, w), config.out);
}

LisaLabel parse_label(const std::string& text) {
  for (auto label : kLisaLegendOrder) {
    if (to_string(label) == text) return label;
  }
  throw Error(ErrorCode::ParseError, text, "unknown LISA label");
}

struct SynthFlags {
  std::size_t n = 76;
  std::string layout = "scatter";
  double rho = 0.5;
  std::vector<double> beta{1.0, -0.5};
  std::vector<double> theta{0.5, 0.25};
  double intercept = 1.0;
  double sigma = 1.0;
  std::size_t outcomes = 3;
  std::size_t chapters = 0;
};

Eigen::VectorXd to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::string join_values(const Eigen::VectorXd& v) {
  std::string s;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (i) s += ',';
    s += csv::format_double(v[i]);
  }
  return s;
}

void run_synth(const GlobalFlags& g, const SynthFlags& s) {
  const std::uint64_t seed = g.seed.value_or(1);
  const std::size_t k = g.k.value_or(7);
  const fs::path out = g.out.value_or("synth");
  if (s.outcomes == 0) throw Error(ErrorCode::InvalidArgument, "outcomes", "need at least one");
  const auto kind = parse_lattice_kind(s.layout);
  const auto regions = gen_lattice(s.n, kind, k, seed);
  const auto w = build_knn(regions, k);

  DgpSpec spec;
  spec.rho = s.rho;
  spec.beta = to_vector(s.beta);
  spec.theta = to_vector(s.theta);
  spec.intercept = s.intercept;
  spec.sigma = s.sigma;

  AttributeTable outcomes(regions.size());
  AttributeTable covariates(regions.size());
  for (std::size_t j = 0; j < s.outcomes; ++j) {
    spec.seed = seed + j;
    const auto sample = gen_sdm(w, spec);
    if (j == 0) {
      spec.covariates = sample.x;
      for (const auto& c : sample.x) covariates.add(c);
    }
    outcomes.add({"y" + std::to_string(j + 1), sample.y, ColumnKind::Raw});
  }

  fs::create_directories(out);
  write_regions_csv(out / "regions.csv", regions);
  write_regions_geojson(out / "regions.geojson", regions);
  write_attributes(out / "attributes.csv", regions, outcomes);
  write_attributes(out / "covariates.csv", regions, covariates);
  std::vector<std::string> files{"regions.csv", "regions.geojson", "attributes.csv",
                                 "covariates.csv"};

  if (s.chapters > 0) {
    // Binomial-style counts whose log-odds follow the first outcome.
    const auto z = zscore(outcomes.columns()[0].values);
    SplitMix64 rng(seed ^ 0x636f756e7473ULL);
    csv::Writer cw({"region_id", "chapter", "count", "total"});
    for (std::size_t i = 0; i < regions.size(); ++i) {
      const auto total = static_cast<std::int64_t>(1000 + rng.below(9000));
      for (std::size_t c = 0; c < s.chapters; ++c) {
        const double logit = -2.0 + 0.5 * z[i] * (c % 2 == 0 ? 1.0 : -1.0) + 0.1 * rng.normal();
        const double p = 1.0 / (1.0 + std::exp(-logit));
        const auto count = static_cast<std::int64_t>(std::llround(p * static_cast<double>(total)));
        cw.row({regions[i].id, "C" + std::to_string(c + 1), std::to_string(count),
                std::to_string(total)});
      }
    }
    cw.save(out / "counts.csv");
    files.emplace_back("counts.csv");
  }

  std::string config = "regions = regions.geojson\n";
  config += s.chapters > 0 ? "counts = counts.csv\n" : "attributes = attributes.csv\n";
  config += "covariates = covariates.csv\n";
  config += "k = " + std::to_string(k) + "\nseed = " + std::to_string(seed) + "\n";
  config += "out = results\n";
  csv::write_text(out / "pipeline.conf", config);
  files.emplace_back("pipeline.conf");

  std::string manifest;
  manifest += "n=" + std::to_string(s.n) + "\n";
  manifest += "layout=" + std::string(to_string(kind)) + "\n";
  manifest += "k=" + std::to_string(k) + "\n";
  manifest += "seed=" + std::to_string(seed) + "\n";
  manifest += "rho=" + csv::format_double(spec.rho) + "\n";
  manifest += "beta=" + join_values(spec.beta) + "\n";
  manifest += "theta=" + join_values(spec.theta) + "\n";
  manifest += "intercept=" + csv::format_double(spec.intercept) + "\n";
  manifest += "sigma=" + csv::format_double(spec.sigma) + "\n";
  manifest += "outcomes=" + std::to_string(s.outcomes) + "\n";
  manifest += "outcome_seeds=" + std::to_string(seed) + ".." +
              std::to_string(seed + s.outcomes - 1) + "\n";
  manifest += "chapters=" + std::to_string(s.chapters) + "\n";
  for (const auto& f : files) manifest += "artifact=" + f + "\n";
  csv::write_text(out / "manifest.txt", manifest);
  for (const auto& f : files) std::cout << (out / f).string() << "\n";
  std::cout << (out / "manifest.txt").string() << "\n";
}

struct RenderFlags {
  std::string regions;
  std::string lisa;
  std::string values;
  std::string column;
  std::string svg;
  std::string title;
  double width = 800.0;
};

void run_render(const GlobalFlags& g, const RenderFlags& r) {
  if (r.regions.empty()) throw Error(ErrorCode::InvalidArgument, "--regions", "required");
  const auto regions = load_regions(r.regions);
  RenderOptions opts;
  opts.width = r.width;
  opts.title = r.title;
  std::string doc;
  std::string stem;
  if (!r.lisa.empty()) {
    const auto table = csv::read(r.lisa);
    const auto id_col = table.column("region_id");
    const auto label_col = table.column("label");
    if (!id_col || !label_col) {
      throw Error(ErrorCode::ParseError, r.lisa, "expected region_id and label columns");
    }
    std::vector<std::optional<LisaLabel>> labels(regions.size());
    for (const auto& row : table.rows) {
      const auto idx = regions.index_of(row[*id_col]);
      if (!idx) throw Error(ErrorCode::UnknownRegion, row[*id_col]);
      labels[*idx] = parse_label(row[*label_col]);
    }
    std::vector<LisaLabel> ordered;
    for (std::size_t i = 0; i < regions.size(); ++i) {
      if (!labels[i]) throw Error(ErrorCode::MissingValue, regions[i].id, "no LISA label");
      ordered.push_back(*labels[i]);
    }
    doc = render_choropleth(regions, std::span<const LisaLabel>(ordered), opts);
    stem = fs::path(r.lisa).stem().string();
  } else if (!r.values.empty()) {
    if (r.column.empty()) throw Error(ErrorCode::InvalidArgument, "--column", "required");
    const auto table = load_attributes(r.values, regions);
    doc = render_choropleth(regions, table.at(r.column).values, opts);
    stem = "value_" + file_stem(r.column);
  } else {
    throw Error(ErrorCode::InvalidArgument, "render", "give --lisa or --values");
  }
  fs::path target = r.svg;
  if (target.empty()) {
    const fs::path out = g.out.value_or(".");
    fs::create_directories(out);
    target = out / (stem + ".svg");
  }
  csv::write_text(target, doc);
  std::cout << target.string() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spatial autocorrelation and spatial Durbin modelling of regional rates"};
  app.require_subcommand(1);
  GlobalFlags g;
  app.add_option("--config", g.config, "key = value config file");
  app.add_option("--seed", g.seed, "random seed");
  app.add_option("--nsim", g.nsim, "permutations (at least 99)");
  app.add_option("--k", g.k, "nearest neighbours");
  app.add_option("--alpha", g.alpha, "significance level");
  app.add_option("--out", g.out, "output directory");

  InputFlags in;
  auto* weights = app.add_subcommand("weights", "write the KNN weights list");
  weights->add_option("--regions", in.regions, "regions.csv or .geojson");
  auto* moran = app.add_subcommand("moran", "global Moran's I with permutation p-values");
  auto* lisa = app.add_subcommand("lisa", "local Moran's I, cluster labels and maps");
  auto* sdm = app.add_subcommand("sdm", "spatial Durbin model against OLS");
  auto* pca = app.add_subcommand("pca", "PCA of outcome columns and LISA on PC1");
  auto* pipeline = app.add_subcommand("pipeline", "run every stage and write a manifest");
  for (auto* cmd : {moran, lisa, sdm, pca, pipeline}) add_input_flags(cmd, in);

  SynthFlags sf;
  auto* synth = app.add_subcommand("synth", "write a synthetic fixture from a known DGP");
  synth->add_option("--n", sf.n, "number of regions");
  synth->add_option("--layout", sf.layout, "ring, grid or scatter");
  synth->add_option("--rho", sf.rho, "spatial autoregressive parameter");
  synth->add_option("--beta", sf.beta, "direct coefficients")->delimiter(',');
  synth->add_option("--theta", sf.theta, "lagged coefficients")->delimiter(',');
  synth->add_option("--intercept", sf.intercept, "intercept");
  synth->add_option("--sigma", sf.sigma, "noise standard deviation");
  synth->add_option("--outcomes", sf.outcomes, "outcome columns y1..yq");
  synth->add_option("--chapters", sf.chapters, "also write counts.csv with this many chapters");

  RenderFlags rf;
  auto* render = app.add_subcommand("render", "render a value or LISA choropleth to SVG");
  render->add_option("--regions", rf.regions, "regions with polygon geometry (.geojson)");
  render->add_option("--lisa", rf.lisa, "lisa_<column>.csv to map");
  render->add_option("--values", rf.values, "attributes.csv holding the value column");
  render->add_option("--column", rf.column, "value column");
  render->add_option("--svg", rf.svg, "output file");
  render->add_option("--title", rf.title, "map title");
  render->add_option("--width", rf.width, "width in px");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*weights) {
      const auto config = make_config(g, in);
      const auto regions = load_regions(config.regions);
      const auto w = build_knn(regions, config.k);
      fs::create_directories(config.out);
      write_weights_csv(config.out / "weights.csv", w, regions);
      std::cout << (config.out / "weights.csv").string() << "\n";
    } else if (*moran) {
      run_stage(g, in, run_moran_stage);
    } else if (*lisa) {
      run_stage(g, in, run_lisa_stage);
    } else if (*sdm) {
      run_stage(g, in, run_sdm_stage);
    } else if (*pca) {
      run_stage(g, in, run_pca_stage);
    } else if (*pipeline) {
      const auto config = make_config(g, in);
      const auto manifest = run_pipeline(config);
      std::cout << "config_hash " << manifest.config_hash << "\n";
      for (const auto& f : manifest.artifacts) std::cout << (config.out / f).string() << "\n";
      std::cout << (config.out / "manifest.txt").string() << "\n";
    } else if (*synth) {
      run_synth(g, sf);
    } else if (*render) {
      run_render(g, rf);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
