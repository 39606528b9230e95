#include <algorithm>
#include <map>
#include <set>

#include <gtest/gtest.h>

#include "geodurbin/csv.hpp"
#include "geodurbin/pipeline.hpp"
#include "geodurbin/synth.hpp"
#include "test_util.hpp"

using namespace geodurbin;
using testutil::read_file;
using testutil::write_file;

namespace {

// Synthetic fixture: regions with polygons, three outcomes, two covariates.
PipelineConfig fixture(const testutil::TempDir& dir) {
  const auto regions = gen_lattice(36, LatticeKind::Grid, 4);
  const auto w = build_knn(regions, 4);
  DgpSpec spec;
  spec.rho = 0.5;
  spec.beta = Eigen::Vector2d(1.0, -1.0);
  spec.theta = Eigen::Vector2d(0.5, 0.0);
  AttributeTable outcomes(36), covariates(36);
  for (std::uint64_t j = 0; j < 3; ++j) {
    spec.seed = 40 + j;
    const auto s = gen_sdm(w, spec);
    if (j == 0) {
      spec.covariates = s.x;
      for (const auto& c : s.x) covariates.add(c);
    }
    outcomes.add({"C" + std::to_string(j + 1), s.y, ColumnKind::Raw});
  }
  write_regions_geojson(dir / "regions.geojson", regions);
  write_attributes(dir / "attributes.csv", regions, outcomes);
  write_attributes(dir / "covariates.csv", regions, covariates);
  write_file(dir / "run.conf",
             "# fixture\nregions = regions.geojson\nattributes = attributes.csv\n"
             "covariates = covariates.csv\nk = 4\nnsim = 99\nseed = 7\nout = out\n");
  return load_config(dir / "run.conf");
}

}  // namespace

TEST(Config, DefaultsAndParsing) {
  const PipelineConfig d;
  EXPECT_EQ(d.k, 7u);
  EXPECT_EQ(d.nsim, 999u);
  EXPECT_EQ(d.alpha, 0.05);
  EXPECT_TRUE(d.standardize_covariates);
  EXPECT_EQ(d.lisa_tail, LisaTail::Directed);

  const auto c = parse_config(
      "regions = r.csv\ncounts = c.csv  # comment\noutcomes = C1, C2\nk=5\nalpha = 0.1\n"
      "standardize_covariates = off\nlisa_tail = two-sided\nfdr = yes\n",
      "/data");
  EXPECT_EQ(c.regions, std::filesystem::path("/data/r.csv"));
  EXPECT_EQ(c.counts, std::filesystem::path("/data/c.csv"));
  EXPECT_EQ(c.outcomes, (std::vector<std::string>{"C1", "C2"}));
  EXPECT_EQ(c.k, 5u);
  EXPECT_EQ(c.alpha, 0.1);
  EXPECT_FALSE(c.standardize_covariates);
  EXPECT_EQ(c.lisa_tail, LisaTail::TwoSided);
  EXPECT_TRUE(c.fdr);
}

TEST(Config, Errors) {
  EXPECT_GD_ERROR_DETAIL(parse_config("colour = red\n"), ErrorCode::ValidationError, "colour");
  EXPECT_GD_ERROR_DETAIL(parse_config("k = many\n"), ErrorCode::ValidationError, "k");
  EXPECT_GD_ERROR(parse_config("just words\n"), ErrorCode::ParseError);
  PipelineConfig c;
  c.regions = "r.csv";
  c.attributes = "a.csv";
  validate(c);
  c.nsim = 98;
  EXPECT_GD_ERROR_DETAIL(validate(c), ErrorCode::ValidationError, "nsim");
  c.nsim = 99;
  c.alpha = 1.0;
  EXPECT_GD_ERROR_DETAIL(validate(c), ErrorCode::ValidationError, "alpha");
  c.alpha = 0.05;
  c.k = 0;
  EXPECT_GD_ERROR_DETAIL(validate(c), ErrorCode::ValidationError, "k");
  c.k = 7;
  c.attributes.reset();
  EXPECT_GD_ERROR(validate(c), ErrorCode::ValidationError);
}

TEST(Config, HashTracksEveryField) {
  PipelineConfig base;
  base.regions = "r.csv";
  const auto h = config_hash(base);
  EXPECT_EQ(h.size(), 16u);
  EXPECT_EQ(h, config_hash(base));
  const std::vector<std::pair<std::string, std::string>> changes{
      {"regions", "s.csv"},     {"counts", "c.csv"},      {"attributes", "a.csv"},
      {"covariates", "x.csv"},  {"outcomes", "C1"},       {"covariate_names", "x1"},
      {"k", "6"},               {"nsim", "199"},          {"seed", "2"},
      {"alpha", "0.01"},        {"standardize_covariates", "false"},
      {"lisa_tail", "greater"}, {"fdr", "true"},          {"maps", "false"},
      {"map_width", "640"},     {"out", "elsewhere"}};
  std::set<std::string> seen{h};
  for (const auto& [key, value] : changes) {
    auto c = base;
    apply_setting(c, key, value);
    const auto changed = config_hash(c);
    EXPECT_NE(changed, h) << key;
    seen.insert(changed);
  }
  EXPECT_EQ(seen.size(), changes.size() + 1);
}

TEST(Tables, SignificantEffectTokens) {
  SdmFit fit;
  fit.p = 3;
  fit.names = {"(Intercept)", "living", "Health", "edu", "lag.living", "lag.Health", "lag.edu"};
  fit.coefficients.resize(7);
  fit.coefficients << 1, 0.5, -0.2, 0.3, 0.1, -0.4, 0.2;
  fit.p_value.resize(7);
  fit.p_value << 0.001, 0.01, 0.02, 0.5, 0.049, 0.03, 0.05;
  const auto [direct, indirect] = significant_effects(fit, 0.05);
  EXPECT_EQ(direct, "Health-;living+");
  EXPECT_EQ(indirect, "Health-;living+");
  fit.durbin = false;
  EXPECT_EQ(significant_effects(fit, 0.05).second, "");
}

TEST(Tables, PopulationRatioAndOrdering) {
  testutil::TempDir dir("pipeline");
  ChapterCounts counts{{"A", "B"}, {"C2", "C1"}, {{10, 5}, {20, 5}}, {100, 100}};
  write_population_ratio(dir / "p.csv", national_ratios(counts));
  EXPECT_EQ(read_file(dir / "p.csv"), "column,ratio\nC2,0.15\nC1,0.05\n");
}

TEST(Tables, FileStem) {
  EXPECT_EQ(file_stem("C1"), "C1");
  EXPECT_EQ(file_stem("a b/c"), "a_b_c");
  EXPECT_EQ(file_stem(""), "_");
}

TEST(Pipeline, SmokeManifestAndDeterminism) {
  testutil::TempDir dir("pipeline");
  auto config = fixture(dir);
  const auto m1 = run_pipeline(config);
  EXPECT_EQ(m1.config_hash, config_hash(config));
  EXPECT_EQ(m1.seed, 7u);
  const auto manifest = read_file(dir / "out/manifest.txt");
  EXPECT_NE(manifest.find("config_hash=" + m1.config_hash), std::string::npos);
  EXPECT_NE(manifest.find("seed=7"), std::string::npos);
  EXPECT_EQ(std::count(m1.artifacts.begin(), m1.artifacts.end(), "weights.csv"), 1);
  for (const char* f : {"moran_global.csv", "lisa_C1.csv", "lisa_C3.geojson", "lisa_C2.svg",
                        "value_C2.svg", "sdm_summary.csv", "sdm_full_C1.csv",
                        "model_compare.csv", "pca_loadings.csv", "pca_scores.csv",
                        "chapter_correlations.csv", "lisa_PC1.csv"}) {
    EXPECT_EQ(std::count(m1.artifacts.begin(), m1.artifacts.end(), f), 1) << f;
  }
  for (const auto& f : m1.artifacts) {
    EXPECT_TRUE(std::filesystem::exists(dir / ("out/" + f))) << f;
    EXPECT_NE(manifest.find("artifact=" + f + "\n"), std::string::npos) << f;
  }
  std::size_t on_disk = 0;
  for ([[maybe_unused]] const auto& e : std::filesystem::directory_iterator(dir / "out")) ++on_disk;
  EXPECT_EQ(on_disk, m1.artifacts.size() + 1);

  const auto moran = csv::read(dir / "out/moran_global.csv");
  ASSERT_EQ(moran.rows.size(), 3u);
  EXPECT_EQ(moran.rows[0][0], "C1");
  EXPECT_EQ(moran.rows[2][0], "C3");

  std::map<std::string, std::string> first;
  for (const auto& f : m1.artifacts) first[f] = read_file(dir / ("out/" + f));
  const auto m2 = run_pipeline(config);
  EXPECT_EQ(m2.artifacts, m1.artifacts);
  for (const auto& f : m2.artifacts) EXPECT_EQ(read_file(dir / ("out/" + f)), first[f]) << f;
}

TEST(Pipeline, MissingColumnFailsBeforeOutput) {
  testutil::TempDir dir("pipeline");
  auto config = fixture(dir);
  config.outcomes = {"C1", "C99"};
  try {
    run_pipeline(config);
    FAIL() << "expected a validation error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ValidationError);
    EXPECT_EQ(e.detail(), "C99");
    EXPECT_NE(std::string(e.what()).find("ingest"), std::string::npos);
  }
  EXPECT_FALSE(std::filesystem::exists(dir / "out/weights.csv"));
}

TEST(Pipeline, StageFailureRemovesPartialOutput) {
  testutil::TempDir dir("pipeline");
  auto config = fixture(dir);
  // A constant outcome passes ingest but breaks the Moran stage.
  const auto regions = load_regions(dir / "regions.geojson");
  AttributeTable flat(regions.size());
  flat.add({"C1", std::vector<double>(regions.size(), 1.0), ColumnKind::Raw});
  write_attributes(dir / "attributes.csv", regions, flat);
  try {
    run_pipeline(config);
    FAIL() << "expected ZeroVariance";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ZeroVariance);
    EXPECT_NE(std::string(e.what()).find("moran"), std::string::npos);
  }
  EXPECT_FALSE(std::filesystem::exists(dir / "out/weights.csv"));
  EXPECT_FALSE(std::filesystem::exists(dir / "out/manifest.txt"));
}

TEST(Pipeline, CountsInputsAndCovariateNames) {
  testutil::TempDir dir("pipeline");
  auto config = fixture(dir);
  const auto regions = load_regions(dir / "regions.geojson");
  std::string counts = "region_id,chapter,count,total\n";
  for (std::size_t i = 0; i < regions.size(); ++i) {
    counts += regions[i].id + ",C1," + std::to_string(10 + i) + ",100\n";
    counts += regions[i].id + ",C2," + std::to_string(40 - i) + ",100\n";
  }
  write_file(dir / "counts.csv", counts);
  config.counts = dir / "counts.csv";
  config.covariates.reset();
  config.attributes = dir / "covariates.csv";
  config.covariate_names = {"x2"};
  config.maps = false;
  const auto inputs = load_inputs(config);
  EXPECT_EQ(inputs.outcomes.names(), (std::vector<std::string>{"C1", "C2"}));
  EXPECT_EQ(inputs.outcomes.at("C1").kind, ColumnKind::Ratio);
  EXPECT_DOUBLE_EQ(inputs.outcomes.at("C1").values[2], 0.12);
  EXPECT_EQ(inputs.covariates.names(), std::vector<std::string>{"x2"});
  EXPECT_EQ(inputs.covariates.at("x2").kind, ColumnKind::ZScored);

  const auto m = run_pipeline(config);
  EXPECT_EQ(std::count(m.artifacts.begin(), m.artifacts.end(), "population_ratio.csv"), 1);
  EXPECT_EQ(std::count_if(m.artifacts.begin(), m.artifacts.end(),
                          [](const std::string& f) { return f.ends_with(".svg"); }),
            0);
  EXPECT_EQ(read_file(dir / "out/population_ratio.csv").substr(0, 13), "column,ratio\n");
}

TEST(Pipeline, UnstandardisedCovariatesPassThrough) {
  testutil::TempDir dir("pipeline");
  auto config = fixture(dir);
  config.standardize_covariates = false;
  const auto inputs = load_inputs(config);
  const auto raw = load_attributes(dir / "covariates.csv", inputs.regions);
  EXPECT_EQ(inputs.covariates.at("x1").values, raw.at("x1").values);
}
