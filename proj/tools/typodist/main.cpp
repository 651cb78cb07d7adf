#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "config.hpp"
#include "typodist/aggregate.hpp"
#include "typodist/confidence.hpp"
#include "typodist/csv.hpp"
#include "typodist/distance.hpp"
#include "typodist/error.hpp"
#include "typodist/evalkit.hpp"
#include "typodist/impute.hpp"
#include "typodist/ingest.hpp"
#include "typodist/tensor_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace typodist;

namespace {

struct Globals {
  std::string data_dir;
  std::string config;
  std::string format = "json";
  std::uint64_t seed = 0;
  CLI::Option* seed_opt = nullptr;
};

struct Selection {
  std::string aggregation;
  std::vector<std::string> sources;
  std::string category;
  std::vector<std::string> features;
};

struct ImputeFlags {
  std::string method;
  std::optional<std::size_t> k;
  std::optional<double> lambda;
  std::optional<std::size_t> rank_cap;
  bool dialect_fill = false;
  std::string external;
};

class Context {
 public:
  Context(const Globals& g) : table_(g.format == "table") {
    if (!g.config.empty()) config_ = cli::load_config(g.config);
    cli::apply_environment(config_);
    if (!g.data_dir.empty()) config_.data_dir = g.data_dir;
    seed_ = g.seed_opt->count() ? g.seed : config_.seed;
  }

  const cli::CliConfig& config() const { return config_; }
  std::uint64_t seed() const { return seed_; }
  bool table() const { return table_; }
  fs::path tensor_dir() const { return config_.data_dir / "tensor"; }

  FeatureTensor load() const {
    if (!tensor_exists(tensor_dir())) {
      throw Error(ErrorCode::InvalidArgument,
                  "no tensor in " + config_.data_dir.string() + " (run `typodist ingest` first)");
    }
    return load_tensor(tensor_dir());
  }

  AggregationMode aggregation(const std::string& flag) const {
    if (flag.empty()) return config_.aggregation;
    if (auto m = parse_aggregation(flag)) return *m;
    throw Error(ErrorCode::InvalidArgument, "unknown aggregation '" + flag + "'");
  }

  void emit(const json& j, const std::string& table) const {
    std::cout << (table_ ? table : j.dump(2) + "\n");
  }

 private:
  cli::CliConfig config_;
  std::uint64_t seed_ = 0;
  bool table_ = false;
};

// "key: value" lines for a JSON object; nested containers are flattened
// with dotted keys.
void flatten(std::ostream& os, const json& j, const std::string& prefix) {
  if (j.is_object()) {
    for (const auto& [k, v] : j.items()) flatten(os, v, prefix.empty() ? k : prefix + "." + k);
  } else if (j.is_array() && !j.empty() && (j.front().is_object() || j.front().is_array())) {
    for (std::size_t i = 0; i < j.size(); ++i) flatten(os, j[i], prefix + "[" + std::to_string(i) + "]");
  } else {
    os << prefix << ": " << (j.is_string() ? j.get<std::string>() : j.dump()) << '\n';
  }
}

std::string kv_table(const json& j) {
  std::ostringstream os;
  flatten(os, j, "");
  return os.str();
}

void add_selection(CLI::App* cmd, Selection& s, bool with_features) {
  cmd->add_option("--aggregation,--mode", s.aggregation, "union or average");
  cmd->add_option("--source", s.sources, "restrict to a source (repeatable)");
  if (with_features) {
    cmd->add_option("--category", s.category, "feature category, e.g. syntactic");
    cmd->add_option("--features", s.features, "explicit feature names")->delimiter(',');
  }
}

void add_impute_flags(CLI::App* cmd, ImputeFlags& f, const char* name) {
  cmd->add_option(name, f.method, "none, mean, knn, softimpute or external");
  cmd->add_option("--k", f.k, "neighbours for knn");
  cmd->add_option("--lambda", f.lambda, "softimpute shrinkage");
  cmd->add_option("--rank-cap", f.rank_cap, "softimpute rank cap");
  cmd->add_flag("--dialect-fill", f.dialect_fill, "fill dialects from their parents first");
  cmd->add_option("--external", f.external, "pre-imputed matrix CSV for the external imputer");
}

FeatureSelector feature_selector(const Selection& s) {
  if (!s.category.empty() && !s.features.empty()) {
    throw Error(ErrorCode::InvalidArgument, "--category and --features are exclusive");
  }
  if (!s.category.empty()) {
    auto cat = parse_category(s.category);
    if (!cat) throw Error(ErrorCode::InvalidArgument, "unknown category '" + s.category + "'");
    return CategoryFeatures{*cat};
  }
  if (!s.features.empty()) return ExplicitFeatures{s.features};
  return AllFeatures{};
}

SourceSelector source_selector(const Selection& s) {
  if (s.sources.empty()) return AllSources{};
  if (s.sources.size() == 1) return OneSource{s.sources.front()};
  return SourceSubset{s.sources};
}

// Owns the matrix an external imputer reads.
struct ResolvedImputer {
  ImputerSpec spec;
  std::optional<AggregatedMatrix> external;
};

void resolve_imputer_flags(const ImputeFlags& f, const Context& ctx, AggregationMode mode,
                           ResolvedImputer& out) {
  ImputerKind kind = ctx.config().imputer;
  if (!f.method.empty()) {
    auto parsed = parse_imputer(f.method);
    if (!parsed) throw Error(ErrorCode::InvalidArgument, "unknown imputer '" + f.method + "'");
    kind = *parsed;
  }
  out.spec.kind = kind;
  out.spec.k = f.k;
  out.spec.lambda = f.lambda;
  out.spec.rank_cap = f.rank_cap;
  if (kind == ImputerKind::External) {
    if (f.external.empty()) throw Error(ErrorCode::InvalidArgument, "--external is required");
    std::ifstream in(f.external);
    if (!in) throw Error(ErrorCode::InvalidArgument, "cannot open " + f.external);
    out.external = read_matrix_csv(in, f.external, mode);
    out.spec.external_name = fs::path(f.external).stem().string();
  }
  out.spec.external = out.external ? &*out.external : nullptr;
}

std::optional<std::vector<std::string>> sources_of(const Selection& s) {
  if (s.sources.empty()) return std::nullopt;
  return s.sources;
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::InvalidArgument, "cannot write " + path.string());
  out << content;
}

void require_file(const std::string& path, const char* what) {
  if (!fs::exists(path)) throw Error(ErrorCode::InvalidArgument, std::string(what) + " " + path + " not found");
}

// ---------------------------------------------------------------------------

struct IngestArgs {
  std::vector<std::string> sources;  // NAME=PATH
  std::string schema;
  std::string rules;
  std::string resolution;
  std::string languages;
  bool overwrite = false;
};

int cmd_ingest(const Context& ctx, const IngestArgs& a) {
  ingest::IngestOptions opts;
  require_file(a.schema, "schema");
  opts.schema = ingest::IngestSchema::load(a.schema);
  if (!a.rules.empty()) {
    opts.rules = ingest::load_rules(a.rules);
  } else if (ctx.config().rules) {
    opts.rules = ingest::load_rules(*ctx.config().rules);
  }
  if (!a.resolution.empty()) {
    opts.resolution = ingest::IdResolutionTable::load(a.resolution);
  } else if (ctx.config().resolution_table) {
    opts.resolution = ingest::IdResolutionTable::load(*ctx.config().resolution_table);
  }
  if (!a.languages.empty()) opts.language_metadata = ingest::load_language_metadata(a.languages);
  opts.write_mode = a.overwrite ? WriteMode::Overwrite : WriteMode::KeepExisting;

  std::vector<ingest::SourceFile> files;
  for (const auto& spec : a.sources) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 == spec.size()) {
      throw Error(ErrorCode::InvalidArgument, "--source expects NAME=PATH, got '" + spec + "'");
    }
    files.push_back({spec.substr(0, eq), spec.substr(eq + 1)});
  }

  FeatureTensor tensor = tensor_exists(ctx.tensor_dir()) ? load_tensor(ctx.tensor_dir()) : FeatureTensor{};
  const auto report = ingest::ingest_sources(tensor, files, opts);
  save_tensor(tensor, ctx.tensor_dir());

  json j = report.to_json();
  j["tensor"] = {{"path", ctx.tensor_dir().string()},
                 {"languages", tensor.languages().size()},
                 {"features", tensor.features().size()},
                 {"sources", tensor.sources()},
                 {"known_cells", tensor.known_cell_count()}};
  ctx.emit(j, kv_table(j));
  return 0;
}

struct MatrixArgs {
  Selection sel;
  ImputeFlags impute;
  std::string output;
  std::string mask;
};

int cmd_aggregate(const Context& ctx, const MatrixArgs& a) {
  const auto tensor = ctx.load();
  const auto mode = ctx.aggregation(a.sel.aggregation);
  const auto matrix = aggregate(tensor, mode, sources_of(a.sel));
  std::ostringstream csv;
  write_matrix_csv(csv, matrix);
  if (a.output.empty()) {
    std::cout << csv.str();
    return 0;
  }
  write_file(a.output, csv.str());
  json j{{"output", a.output},
         {"aggregation", std::string(to_string(mode))},
         {"sources", matrix.sources()},
         {"languages", matrix.rows()},
         {"features", matrix.cols()},
         {"known_cells", matrix.known_count()}};
  ctx.emit(j, kv_table(j));
  return 0;
}

int cmd_impute(const Context& ctx, const MatrixArgs& a) {
  const auto tensor = ctx.load();
  const auto mode = ctx.aggregation(a.sel.aggregation);
  const auto matrix = aggregate(tensor, mode, sources_of(a.sel));
  ResolvedImputer imp;
  resolve_imputer_flags(a.impute, ctx, mode, imp);
  if (imp.spec.kind == ImputerKind::None) imp.spec = ImputerSpec::softimpute();
  const auto result = impute(matrix, tensor.languages(), imp.spec, a.impute.dialect_fill, ctx.seed());

  std::ostringstream values, mask;
  write_imputed_csv(values, mask, result);
  if (!a.mask.empty()) write_file(a.mask, mask.str());
  if (a.output.empty()) {
    std::cout << values.str();
    return 0;
  }
  write_file(a.output, values.str());

  std::size_t imputed = 0;
  for (auto m : result.imputed_mask()) imputed += m;
  json j{{"output", a.output},
         {"aggregation", std::string(to_string(mode))},
         {"method", result.method().describe()},
         {"dialect_fill", a.impute.dialect_fill},
         {"seed", ctx.seed()},
         {"languages", result.rows()},
         {"features", result.cols()},
         {"imputed_cells", imputed},
         {"all_missing_columns", result.all_missing_columns}};
  if (result.method().kind == ImputerKind::SoftImpute) {
    j["softimpute"] = {{"converged", result.softimpute.converged},
                       {"iterations", result.softimpute.iterations}};
  }
  if (!a.mask.empty()) j["mask"] = a.mask;
  ctx.emit(j, kv_table(j));
  return 0;
}

struct PairArgs {
  std::vector<std::string> languages;
  Selection sel;
  ImputeFlags impute;
  std::string metric;
  std::vector<std::string> quality;
};

std::string distance_line(const DistanceResult& r) {
  std::ostringstream os;
  os << r.lang_a << '\t' << r.lang_b << '\t';
  if (r.computable()) {
    os << csv::format_number(r.value().distance) << '\t' << r.value().shared_features << '\t'
       << to_string(r.value().metric) << '\t' << to_string(r.value().aggregation);
  } else {
    os << "not_computable\t" << r.not_computable().reason;
  }
  return os.str() + "\n";
}

int cmd_distance(const Context& ctx, const PairArgs& a) {
  const auto tensor = ctx.load();
  DistanceRequest req;
  req.aggregation = ctx.aggregation(a.sel.aggregation);
  req.metric = ctx.config().metric;
  if (!a.metric.empty()) {
    auto m = parse_metric(a.metric);
    if (!m) throw Error(ErrorCode::InvalidArgument, "unknown metric '" + a.metric + "'");
    req.metric = *m;
  }
  req.features = feature_selector(a.sel);
  req.sources = source_selector(a.sel);
  ResolvedImputer imp;
  resolve_imputer_flags(a.impute, ctx, req.aggregation, imp);
  req.imputer = imp.spec;
  req.dialect_fill = a.impute.dialect_fill;

  DistanceEngine engine(tensor, ctx.seed());
  if (a.languages.size() == 2) {
    req.lang_a = a.languages[0];
    req.lang_b = a.languages[1];
    const auto r = engine.distance(req);
    ctx.emit(r.to_json(), distance_line(r));
    return 0;
  }
  const auto m = engine.matrix(a.languages, req);
  std::string table;
  for (std::size_t i = 0; i < m.languages.size(); ++i) {
    for (std::size_t j = i + 1; j < m.languages.size(); ++j) table += distance_line(m.at(i, j));
  }
  ctx.emit(m.to_json(), table);
  return 0;
}

int cmd_confidence(const Context& ctx, const PairArgs& a) {
  const auto tensor = ctx.load();
  const auto mode = ctx.aggregation(a.sel.aggregation);
  ConfidenceScope scope{feature_selector(a.sel), source_selector(a.sel)};
  ResolvedImputer imp;
  resolve_imputer_flags(a.impute, ctx, mode, imp);
  QualityCache cache;
  for (const auto& q : a.quality) cache.load(q);
  const auto r = confidence_report(a.languages[0], a.languages[1], tensor, scope, imp.spec, mode, cache);
  ctx.emit(r.to_json(), kv_table(r.to_json()));
  return 0;
}

struct QualityArgs {
  Selection sel;
  ImputeFlags impute;
  bool select_k = false;
  std::string output;
};

int cmd_eval_quality(const Context& ctx, const QualityArgs& a) {
  const auto tensor = ctx.load();
  const auto mode = ctx.aggregation(a.sel.aggregation);
  const auto matrix = aggregate(tensor, mode, sources_of(a.sel));
  ResolvedImputer imp;
  resolve_imputer_flags(a.impute, ctx, mode, imp);
  if (imp.spec.kind == ImputerKind::None) {
    throw Error(ErrorCode::InvalidArgument, "eval quality needs --imputer");
  }
  std::optional<KSelection> selection;
  if (a.select_k && imp.spec.kind == ImputerKind::Knn && !imp.spec.k) {
    selection = knn_select_k(matrix, kDefaultKCandidates, 5, ctx.seed());
    imp.spec.k = selection->k;
  }
  const auto report = quality_test(matrix, tensor.languages(), imp.spec, ctx.seed(), a.impute.dialect_fill);
  json j = report.to_json();
  std::string table = report.to_table();
  if (selection) {
    json scores = json::object();
    for (const auto& [k, s] : selection->score) scores[std::to_string(k)] = s;
    j["k_selection"] = {{"k", selection->k}, {"scores", scores}};
    table += "\nselected k: " + std::to_string(selection->k) + "\n";
  }
  if (!a.output.empty()) write_file(a.output, j.dump(2) + "\n");
  ctx.emit(j, table);
  return 0;
}

struct CaseStudyArgs {
  std::string input;
  std::size_t iterations = 10000;
};

int cmd_eval_casestudy(const Context& ctx, const CaseStudyArgs& a) {
  require_file(a.input, "case-study input");
  std::ifstream in(a.input);
  const auto rows = read_case_study(in, a.input);
  const auto result = run_case_study(rows, a.iterations, ctx.seed());
  ctx.emit(result.to_json(), result.to_table());
  return 0;
}

struct CoverageArgs {
  std::string tiers;
};

int cmd_eval_coverage(const Context& ctx, const CoverageArgs& a) {
  const auto tensor = ctx.load();
  std::map<std::string, ResourceTier> tiers;
  if (!a.tiers.empty()) {
    require_file(a.tiers, "tier map");
    std::ifstream in(a.tiers);
    for (const auto& row : csv::read_table(in, a.tiers, {"glottocode", "tier"})) {
      auto tier = parse_tier(row.fields[1]);
      if (!tier) csv::fail(a.tiers, row.line, "unknown tier '" + row.fields[1] + "'");
      tiers[row.fields[0]] = *tier;
    }
  }
  const auto report = coverage_report(tensor, tiers);
  ctx.emit(report.to_json(), report.to_table());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Typological language knowledge base: ingest, aggregate, impute, distances"};
  app.require_subcommand(1);
  app.fallthrough();

  Globals g;
  app.add_option("--data-dir", g.data_dir, "data directory (overrides config and TYPODIST_DATA_DIR)");
  app.add_option("--config", g.config, "JSON config file");
  app.add_option("--format", g.format, "output format")->check(CLI::IsMember({"json", "table"}));
  g.seed_opt = app.add_option("--seed", g.seed, "random seed");

  IngestArgs ingest_args;
  auto* ingest_cmd = app.add_subcommand("ingest", "ingest source CSV files into the tensor");
  ingest_cmd->add_option("--source", ingest_args.sources, "NAME=PATH, header language,feature,value")
      ->required();
  ingest_cmd->add_option("--schema", ingest_args.schema, "feature schema JSON")->required();
  ingest_cmd->add_option("--rules", ingest_args.rules, "inference rules CSV");
  ingest_cmd->add_option("--resolution", ingest_args.resolution, "ISO-to-glottocode table CSV");
  ingest_cmd->add_option("--languages", ingest_args.languages, "language metadata CSV");
  ingest_cmd->add_flag("--overwrite", ingest_args.overwrite, "replace existing cell values");

  MatrixArgs aggregate_args;
  auto* aggregate_cmd = app.add_subcommand("aggregate", "collapse sources into a language x feature matrix");
  add_selection(aggregate_cmd, aggregate_args.sel, false);
  aggregate_cmd->add_option("--output,-o", aggregate_args.output, "matrix CSV (default stdout)");

  MatrixArgs impute_args;
  auto* impute_cmd = app.add_subcommand("impute", "fill missing cells of an aggregated matrix");
  add_selection(impute_cmd, impute_args.sel, false);
  add_impute_flags(impute_cmd, impute_args.impute, "--imputer");
  impute_cmd->add_option("--output,-o", impute_args.output, "imputed matrix CSV (default stdout)");
  impute_cmd->add_option("--mask", impute_args.mask, "0/1 imputed-cell mask CSV");

  PairArgs distance_args;
  auto* distance_cmd = app.add_subcommand("distance", "distance between languages");
  distance_cmd->add_option("languages", distance_args.languages, "glottocodes or ISO codes")
      ->required()
      ->expected(2, -1);
  add_selection(distance_cmd, distance_args.sel, true);
  add_impute_flags(distance_cmd, distance_args.impute, "--impute");
  distance_cmd->add_option("--metric", distance_args.metric, "angular or cosine");

  PairArgs confidence_args;
  auto* confidence_cmd = app.add_subcommand("confidence", "confidence components for a language pair");
  confidence_cmd->add_option("languages", confidence_args.languages, "two languages")
      ->required()
      ->expected(2);
  add_selection(confidence_cmd, confidence_args.sel, true);
  add_impute_flags(confidence_cmd, confidence_args.impute, "--impute");
  confidence_cmd->add_option("--quality", confidence_args.quality, "quality report JSON (repeatable)");

  auto* eval_cmd = app.add_subcommand("eval", "evaluation workflows");
  eval_cmd->require_subcommand(1);

  QualityArgs quality_args;
  auto* quality_cmd = eval_cmd->add_subcommand("quality", "held-out imputation quality test");
  add_selection(quality_cmd, quality_args.sel, false);
  add_impute_flags(quality_cmd, quality_args.impute, "--imputer");
  quality_cmd->add_flag("--select-k", quality_args.select_k, "choose k for knn by 5-fold CV");
  quality_cmd->add_option("--output,-o", quality_args.output, "also write the JSON report here");

  CaseStudyArgs case_args;
  auto* case_cmd = eval_cmd->add_subcommand("casestudy", "rank correlation and Perm-Both test");
  case_cmd->add_option("--input", case_args.input, "CSV pair,dist_a,dist_b,g_d")->required();
  case_cmd->add_option("--iterations", case_args.iterations, "permutation iterations");

  CoverageArgs coverage_args;
  auto* coverage_cmd = eval_cmd->add_subcommand("coverage", "languages per category and tier");
  coverage_cmd->add_option("--tiers", coverage_args.tiers, "CSV glottocode,tier overriding the registry");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    const Context ctx(g);
    if (ingest_cmd->parsed()) return cmd_ingest(ctx, ingest_args);
    if (aggregate_cmd->parsed()) return cmd_aggregate(ctx, aggregate_args);
    if (impute_cmd->parsed()) return cmd_impute(ctx, impute_args);
    if (distance_cmd->parsed()) return cmd_distance(ctx, distance_args);
    if (confidence_cmd->parsed()) return cmd_confidence(ctx, confidence_args);
    if (quality_cmd->parsed()) return cmd_eval_quality(ctx, quality_args);
    if (case_cmd->parsed()) return cmd_eval_casestudy(ctx, case_args);
    if (coverage_cmd->parsed()) return cmd_eval_coverage(ctx, coverage_args);
  } catch (const Error& e) {
    std::cerr << "typodist: " << to_string(e.code()) << ": " << e.what() << '\n';
    return is_input_format_error(e.code()) ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "typodist: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
