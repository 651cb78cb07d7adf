#include "typodist/ingest.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "typodist/csv.hpp"
#include "typodist/error.hpp"

namespace typodist::ingest {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

bool is_alnum(char c) {
  return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9');
}

std::string canonical_body(std::string_view raw) {
  std::string out;
  bool separator = false;
  for (char c : raw) {
    if (is_alnum(c)) {
      if (separator && !out.empty()) out += '_';
      separator = false;
      out += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    } else if (c == ' ' || c == '_' || c == '\t') {
      separator = true;
    }
  }
  return out;
}

std::string trimmed(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return std::string(s);
}

std::optional<long long> parse_int(std::string_view s) {
  long long v = 0;
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size()) return std::nullopt;
  return v;
}

std::optional<double> parse_double(std::string_view s) {
  double v = 0;
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

VariableKind parse_kind(const std::string& text) {
  if (text == "binary") return VariableKind::Binary;
  if (text == "continuous") return VariableKind::Continuous;
  if (text == "nominal") return VariableKind::Nominal;
  if (text == "ordinal") return VariableKind::Ordinal;
  throw Error(ErrorCode::FormatError, "unknown variable kind '" + text + "'");
}

}  // namespace

// ---------------------------------------------------------------------------

std::string canonicalize_feature_name(std::string_view raw, FeatureCategory category) {
  const std::string_view prefix = name_prefix(category);
  std::string_view label = raw;
  if (label.starts_with(prefix)) label.remove_prefix(prefix.size());
  std::string body = canonical_body(label);
  if (body.empty()) {
    throw Error(ErrorCode::InvalidRecord,
                "feature label '" + std::string(raw) + "' has no alphanumeric characters");
  }
  std::string name = std::string(prefix) + body;
  if (name.size() > kMaxFeatureNameLength) name.resize(kMaxFeatureNameLength);
  return name;
}

std::string nominal_feature_name(std::string_view label, std::string_view level,
                                 FeatureCategory category) {
  const std::string suffix = canonical_body(level);
  if (suffix.empty()) {
    throw Error(ErrorCode::InvalidRecord,
                "category '" + std::string(level) + "' has no alphanumeric characters");
  }
  std::string base = canonicalize_feature_name(label, category);
  const std::size_t room = kMaxFeatureNameLength - std::min(kMaxFeatureNameLength, suffix.size() + 1);
  const std::size_t min_base = name_prefix(category).size() + 1;
  if (room >= min_base) {
    if (base.size() > room) base.resize(room);
    return base + "_" + suffix;
  }
  std::string name = base.substr(0, min_base) + "_" + suffix;
  name.resize(kMaxFeatureNameLength);
  return name;
}

std::string FeatureNamer::claim(std::string name, std::string raw_key) {
  auto [it, inserted] = owner_.emplace(name, raw_key);
  if (!inserted && it->second != raw_key) {
    throw Error(ErrorCode::NameCollision, "labels '" + it->second + "' and '" + raw_key +
                                              "' both canonicalize to " + name);
  }
  return name;
}

std::string FeatureNamer::name(std::string_view raw, FeatureCategory category) {
  return claim(canonicalize_feature_name(raw, category), std::string(raw));
}

std::string FeatureNamer::nominal_name(std::string_view label, std::string_view level,
                                       FeatureCategory category) {
  return claim(nominal_feature_name(label, level, category),
               std::string(label) + " = " + std::string(level));
}

// ---------------------------------------------------------------------------

std::vector<std::pair<std::string, double>> binarize_nominal(
    std::string_view label, const std::vector<std::string>& categories, std::string_view observed,
    FeatureCategory category) {
  if (categories.size() < 2) {
    throw Error(ErrorCode::InvalidRecord,
                "nominal feature '" + std::string(label) + "' needs at least two categories");
  }
  if (std::find(categories.begin(), categories.end(), observed) == categories.end()) {
    throw Error(ErrorCode::UnknownCategory, "'" + std::string(observed) +
                                                "' is not a category of '" + std::string(label) + "'");
  }
  std::vector<std::pair<std::string, double>> out;
  out.reserve(categories.size());
  for (const auto& level : categories) {
    out.emplace_back(nominal_feature_name(label, level, category), level == observed ? 1.0 : 0.0);
  }
  return out;
}

std::pair<std::string, double> binarize_ordinal(std::string_view label, int max_level,
                                                int observed, FeatureCategory category) {
  if (observed < 0 || observed > max_level) {
    throw Error(ErrorCode::LevelOutOfRange, "level " + std::to_string(observed) + " of '" +
                                                std::string(label) + "' outside [0, " +
                                                std::to_string(max_level) + "]");
  }
  return {canonicalize_feature_name(label, category), observed > 0 ? 1.0 : 0.0};
}

// ---------------------------------------------------------------------------

void IngestSchema::add(FeatureSchema feature) {
  if (feature.label.empty()) throw Error(ErrorCode::FormatError, "schema entry without label");
  if (feature.kind == VariableKind::Nominal) {
    std::set<std::string> unique(feature.categories.begin(), feature.categories.end());
    if (feature.categories.size() < 2 || unique.size() != feature.categories.size()) {
      throw Error(ErrorCode::FormatError,
                  "nominal feature '" + feature.label + "' needs two or more distinct categories");
    }
  }
  if (feature.kind == VariableKind::Ordinal && feature.max_level < 1) {
    throw Error(ErrorCode::FormatError, "ordinal feature '" + feature.label + "' needs max_level >= 1");
  }
  if (feature.name) validate_feature_name(*feature.name, feature.category);
  const std::string label = feature.label;
  if (!features_.emplace(label, std::move(feature)).second) {
    throw Error(ErrorCode::FormatError, "duplicate schema label '" + label + "'");
  }
}

const FeatureSchema* IngestSchema::find(std::string_view label) const {
  auto it = features_.find(label);
  return it == features_.end() ? nullptr : &it->second;
}

IngestSchema IngestSchema::from_json(const json& j) {
  IngestSchema schema;
  try {
    for (const auto& f : j.at("features")) {
      FeatureSchema fs;
      fs.label = f.at("label").get<std::string>();
      fs.kind = parse_kind(f.at("kind").get<std::string>());
      auto cat = parse_category(f.at("category").get<std::string>());
      if (!cat) throw Error(ErrorCode::FormatError, "unknown category for '" + fs.label + "'");
      fs.category = *cat;
      if (f.contains("categories")) fs.categories = f.at("categories").get<std::vector<std::string>>();
      fs.max_level = f.value("max_level", 0);
      if (f.contains("name") && !f.at("name").is_null()) fs.name = f.at("name").get<std::string>();
      schema.add(std::move(fs));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::FormatError, std::string("malformed ingest schema: ") + e.what());
  }
  return schema;
}

IngestSchema IngestSchema::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::InvalidArgument, "cannot open schema " + path.string());
  try {
    return from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::FormatError, path.string() + ": " + e.what());
  }
}

RawValue parse_raw_value(std::string_view text, const FeatureSchema& schema) {
  const std::string t = trimmed(text);
  if (t.empty() || t == csv::kMissing) return MissingMarker{};
  switch (schema.kind) {
    case VariableKind::Nominal:
      return NominalValue{t};
    case VariableKind::Ordinal: {
      auto v = parse_int(t);
      if (!v) throw Error(ErrorCode::InvalidRecord, "ordinal level '" + t + "' is not an integer");
      if (*v < 0 || *v > schema.max_level) {
        throw Error(ErrorCode::LevelOutOfRange, "level " + t + " of '" + schema.label +
                                                    "' outside [0, " +
                                                    std::to_string(schema.max_level) + "]");
      }
      return OrdinalLevel{static_cast<int>(*v)};
    }
    case VariableKind::Binary: {
      auto v = parse_int(t);
      if (!v || (*v != 0 && *v != 1)) {
        throw Error(ErrorCode::InvalidRecord, "binary value '" + t + "' is not 0 or 1");
      }
      return BinaryValue{static_cast<int>(*v)};
    }
    case VariableKind::Continuous: {
      auto v = parse_double(t);
      if (!v || *v < 0.0 || *v > 1.0) {
        throw Error(ErrorCode::InvalidRecord, "value '" + t + "' is not a number in [0,1]");
      }
      return ContinuousValue{*v};
    }
  }
  return MissingMarker{};
}

std::vector<std::pair<std::string, double>> binarize_record(const RawRecord& record,
                                                            const FeatureSchema& schema,
                                                            FeatureNamer& namer) {
  const auto plain_name = [&] {
    return schema.name ? namer.claim(*schema.name, schema.label)
                       : namer.name(schema.label, schema.category);
  };
  return std::visit(
      [&](const auto& v) -> std::vector<std::pair<std::string, double>> {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, MissingMarker>) {
          return {};
        } else if constexpr (std::is_same_v<T, NominalValue>) {
          auto cells = binarize_nominal(schema.label, schema.categories, v.category, schema.category);
          for (std::size_t i = 0; i < cells.size(); ++i) {
            namer.nominal_name(schema.label, schema.categories[i], schema.category);
          }
          return cells;
        } else if constexpr (std::is_same_v<T, OrdinalLevel>) {
          auto cell = binarize_ordinal(schema.label, schema.max_level, v.level, schema.category);
          cell.first = plain_name();
          return {cell};
        } else if constexpr (std::is_same_v<T, BinaryValue>) {
          return {{plain_name(), static_cast<double>(v.value)}};
        } else {
          return {{plain_name(), v.value}};
        }
      },
      record.value);
}

std::vector<FeatureDescriptor> descriptors_for(const FeatureSchema& schema, FeatureNamer& namer) {
  std::vector<FeatureDescriptor> out;
  if (schema.kind == VariableKind::Nominal) {
    const std::string parent = canonicalize_feature_name(schema.label, schema.category);
    for (const auto& level : schema.categories) {
      out.push_back({namer.nominal_name(schema.label, level, schema.category), schema.category,
                     FeatureOrigin::nominal(parent, level)});
    }
    return out;
  }
  const std::string name = schema.name ? namer.claim(*schema.name, schema.label)
                                        : namer.name(schema.label, schema.category);
  out.push_back({name, schema.category,
                 schema.kind == VariableKind::Ordinal ? FeatureOrigin::ordinal(name)
                                                      : FeatureOrigin::native()});
  return out;
}

// ---------------------------------------------------------------------------

std::vector<InferenceRule> parse_rules(std::istream& in, const std::string& origin) {
  std::vector<InferenceRule> rules;
  const auto rows = csv::read_table(in, origin,
                                    {"from_feature", "to_feature", "direction", "from_value", "to_value"});
  for (const auto& row : rows) {
    InferenceRule r;
    r.from_feature = row.fields[0];
    r.to_feature = row.fields[1];
    const std::string& dir = row.fields[2];
    if (dir == "implies") {
      r.direction = RuleDirection::Implies;
    } else if (dir == "equivalent") {
      r.direction = RuleDirection::Equivalent;
    } else {
      csv::fail(origin, row.line, "direction must be 'implies' or 'equivalent'");
    }
    auto from = csv::parse_unit_value(row.fields[3], origin, row.line);
    auto to = csv::parse_unit_value(row.fields[4], origin, row.line);
    if (!from || !to) csv::fail(origin, row.line, "rule values must be known");
    if (r.from_feature.empty() || r.from_feature == r.to_feature) {
      csv::fail(origin, row.line, "rule must link two distinct features");
    }
    r.from_value = *from;
    r.to_value = *to;
    rules.push_back(std::move(r));
  }
  return rules;
}

std::vector<InferenceRule> load_rules(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::InvalidArgument, "cannot open rules file " + path.string());
  return parse_rules(in, path.string());
}

namespace {

void check_acyclic(const std::vector<InferenceRule>& rules) {
  std::map<std::string, std::vector<std::string>> edges;
  for (const auto& r : rules) {
    if (r.from_feature == r.to_feature) {
      throw Error(ErrorCode::CyclicRules, "rule maps " + r.from_feature + " onto itself");
    }
    if (r.direction == RuleDirection::Implies) edges[r.from_feature].push_back(r.to_feature);
  }
  enum class Mark { Unvisited, Active, Done };
  std::map<std::string, Mark> mark;
  std::function<void(const std::string&)> visit = [&](const std::string& node) {
    auto& m = mark[node];
    if (m == Mark::Done) return;
    if (m == Mark::Active) throw Error(ErrorCode::CyclicRules, "inference rules cycle through " + node);
    m = Mark::Active;
    if (auto it = edges.find(node); it != edges.end()) {
      for (const auto& next : it->second) visit(next);
    }
    mark[node] = Mark::Done;
  };
  for (const auto& [node, _] : edges) visit(node);
}

}  // namespace

InferenceResult apply_inference(const std::vector<InferenceRule>& rules, const Batch& batch) {
  for (const auto& r : rules) {
    if (r.from_feature == r.to_feature) {
      throw Error(ErrorCode::CyclicRules, "rule maps " + r.from_feature + " onto itself");
    }
  }
  check_acyclic(rules);

  InferenceResult result;
  result.batch = batch;
  auto& cells = result.batch.cells;

  using LangFeat = std::pair<std::string, std::string>;
  std::map<LangFeat, std::map<std::string, double>> values;  // (lang, feat) -> source -> value
  std::map<std::string, std::vector<std::string>> home_sources;
  for (const auto& c : cells) {
    values[{c.language, c.feature}].emplace(c.source, c.value);
    auto& homes = home_sources[c.feature];
    if (std::find(homes.begin(), homes.end(), c.source) == homes.end()) homes.push_back(c.source);
  }
  std::set<std::string> languages;
  for (const auto& c : cells) languages.insert(c.language);

  std::set<std::tuple<std::string, std::string, std::string>> conflicted;
  for (bool changed = true; changed;) {
    changed = false;
    // (lang, feat, source) -> proposed value; NaN marks rules that disagree.
    std::map<std::tuple<std::string, std::string, std::string>, double> proposals;
    for (const auto& rule : rules) {
      const auto& targets = home_sources.contains(rule.to_feature) ? home_sources[rule.to_feature]
                                                                   : home_sources[rule.from_feature];
      for (const auto& lang : languages) {
        auto from_it = values.find({lang, rule.from_feature});
        if (from_it == values.end()) continue;
        const bool fires = std::any_of(from_it->second.begin(), from_it->second.end(),
                                       [&](const auto& sv) { return sv.second == rule.from_value; });
        if (!fires) continue;
        const auto to_it = values.find({lang, rule.to_feature});
        for (const auto& src : targets) {
          if (to_it != values.end() && to_it->second.contains(src)) continue;
          auto key = std::make_tuple(lang, rule.to_feature, src);
          auto [it, inserted] = proposals.emplace(key, rule.to_value);
          if (!inserted && it->second != rule.to_value) it->second = std::nan("");
        }
      }
    }
    for (const auto& [key, v] : proposals) {
      const auto& [lang, feat, src] = key;
      if (std::isnan(v)) {
        conflicted.insert(key);
        continue;
      }
      values[{lang, feat}].emplace(src, v);
      auto& homes = home_sources[feat];
      if (std::find(homes.begin(), homes.end(), src) == homes.end()) homes.push_back(src);
      cells.push_back({lang, feat, src, v});
      changed = true;
    }
  }
  result.skipped_conflicts = conflicted.size();

  std::set<std::string> removed;
  for (const auto& r : rules) {
    if (r.direction == RuleDirection::Equivalent) removed.insert(r.from_feature);
  }
  const auto kept_original = static_cast<std::size_t>(
      std::count_if(batch.cells.begin(), batch.cells.end(),
                    [&](const CellWrite& c) { return !removed.contains(c.feature); }));
  std::erase_if(cells, [&](const CellWrite& c) { return removed.contains(c.feature); });
  std::erase_if(result.batch.features,
                [&](const FeatureDescriptor& d) { return removed.contains(d.name); });
  result.inferred_cells = cells.size() - kept_original;
  result.removed_features.assign(removed.begin(), removed.end());
  return result;
}

// ---------------------------------------------------------------------------

bool looks_like_glottocode(std::string_view id) {
  if (id.size() != 8) return false;
  for (std::size_t i = 0; i < 4; ++i) {
    const char c = id[i];
    if (!((c >= 'a' && c <= 'z') || (c >= '0' && c <= '9'))) return false;
  }
  for (std::size_t i = 4; i < 8; ++i) {
    if (id[i] < '0' || id[i] > '9') return false;
  }
  return true;
}

void IdResolutionTable::add(std::string external_id, std::string glottocode, bool retired) {
  if (!looks_like_glottocode(glottocode)) {
    throw Error(ErrorCode::FormatError, "'" + glottocode + "' is not a glottocode");
  }
  auto& target = retired ? retired_ : iso_;
  auto& other = retired ? iso_ : retired_;
  if (other.contains(external_id)) {
    throw Error(ErrorCode::FormatError, "'" + external_id + "' listed as both current and retired");
  }
  auto [it, inserted] = target.emplace(external_id, glottocode);
  if (!inserted && it->second != glottocode) {
    throw Error(ErrorCode::FormatError, "'" + external_id + "' maps to two glottocodes");
  }
}

IdResolutionTable IdResolutionTable::parse(std::istream& in, const std::string& origin) {
  IdResolutionTable table;
  for (const auto& row : csv::read_table(in, origin, {"external_id", "glottocode", "retired_flag"})) {
    const std::string& flag = row.fields[2];
    bool retired = false;
    if (flag == "1" || flag == "true" || flag == "yes") {
      retired = true;
    } else if (!(flag == "0" || flag == "false" || flag == "no" || flag.empty())) {
      csv::fail(origin, row.line, "retired_flag must be 0 or 1");
    }
    try {
      table.add(row.fields[0], row.fields[1], retired);
    } catch (const Error& e) {
      csv::fail(origin, row.line, e.what());
    }
  }
  return table;
}

IdResolutionTable IdResolutionTable::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::InvalidArgument, "cannot open resolution table " + path.string());
  return parse(in, path.string());
}

Resolution resolve_language_detailed(std::string_view external_id, const IdResolutionTable& table) {
  if (looks_like_glottocode(external_id)) return {std::string(external_id), ResolutionRoute::Glottocode};
  if (auto it = table.iso_to_glotto().find(external_id); it != table.iso_to_glotto().end()) {
    return {it->second, ResolutionRoute::Iso};
  }
  if (auto it = table.retired_iso().find(external_id); it != table.retired_iso().end()) {
    return {it->second, ResolutionRoute::RetiredIso};
  }
  throw Error(ErrorCode::UnresolvableId, "cannot resolve language id '" + std::string(external_id) + "'");
}

std::string resolve_language(std::string_view external_id, const IdResolutionTable& table) {
  return resolve_language_detailed(external_id, table).glottocode;
}

// ---------------------------------------------------------------------------

json IngestReport::to_json() const {
  json res = json::array();
  for (const auto& r : resolutions) {
    const char* route = r.route == ResolutionRoute::Iso ? "iso" : r.route == ResolutionRoute::RetiredIso
                                                                      ? "retired_iso"
                                                                      : "glottocode";
    res.push_back({{"source", r.source}, {"line", r.line}, {"external_id", r.external_id},
                   {"glottocode", r.glottocode}, {"route", route}});
  }
  return json{{"rows_read", rows_read},
              {"missing_rows", missing_rows},
              {"cells_written", cells_written},
              {"conflicts", conflicts},
              {"conflict_details", conflict_details},
              {"name_collisions", name_collisions},
              {"inferred_cells", inferred_cells},
              {"languages_added", languages_added},
              {"features_added", features_added},
              {"removed_features", removed_features},
              {"resolutions", res}};
}

std::vector<LanguageRecord> load_language_metadata(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::InvalidArgument, "cannot open language metadata " + path.string());
  const auto origin = path.string();
  std::vector<LanguageRecord> out;
  for (const auto& row : csv::read_table(in, origin, {"glottocode", "iso639_3", "name", "parent", "tier"})) {
    LanguageRecord r;
    r.glottocode = row.fields[0];
    if (r.glottocode.empty()) csv::fail(origin, row.line, "empty glottocode");
    if (!row.fields[1].empty()) r.iso639_3 = row.fields[1];
    r.display_name = row.fields[2].empty() ? r.glottocode : row.fields[2];
    if (!row.fields[3].empty()) r.parent = row.fields[3];
    auto tier = parse_tier(row.fields[4]);
    if (!tier) csv::fail(origin, row.line, "unknown tier '" + row.fields[4] + "'");
    r.resource_tier = *tier;
    out.push_back(std::move(r));
  }
  return out;
}

IngestReport ingest_sources(FeatureTensor& tensor, const std::vector<SourceFile>& files,
                            const IngestOptions& options) {
  IngestReport report;
  FeatureNamer namer;
  Batch batch;

  std::unordered_map<std::string, const LanguageRecord*> metadata;
  for (const auto& r : options.language_metadata) metadata.emplace(r.glottocode, &r);
  std::unordered_set<std::string> batch_langs;
  std::unordered_set<std::string> batch_feats;
  std::function<void(const std::string&)> add_language = [&](const std::string& code) {
    if (tensor.find_language(code) || batch_langs.contains(code)) return;
    batch_langs.insert(code);
    auto it = metadata.find(code);
    LanguageRecord rec = it != metadata.end() ? *it->second : LanguageRecord{code, {}, code, {}, {}};
    if (rec.parent) add_language(*rec.parent);
    batch.languages.push_back(std::move(rec));
    ++report.languages_added;
  };
  // Metadata-only languages (e.g. parents with no data) are registered too.
  for (const auto& r : options.language_metadata) add_language(r.glottocode);

  std::map<std::tuple<std::string, std::string, std::string>, std::pair<double, std::size_t>> seen;
  for (const auto& file : files) {
    std::ifstream in(file.path);
    if (!in) throw Error(ErrorCode::InvalidArgument, "cannot open " + file.path.string());
    const std::string origin = file.path.string();
    for (const auto& row : csv::read_table(in, origin, {"language", "feature", "value"})) {
      ++report.rows_read;
      const FeatureSchema* schema = options.schema.find(row.fields[1]);
      if (!schema) csv::fail(origin, row.line, "feature '" + row.fields[1] + "' is not in the schema");
      RawRecord record{row.fields[0], row.fields[1], {}, file.source_name};
      std::vector<std::pair<std::string, double>> binarized;
      Resolution res;
      try {
        record.value = parse_raw_value(row.fields[2], *schema);
        if (std::holds_alternative<MissingMarker>(record.value)) {
          ++report.missing_rows;
          continue;
        }
        res = resolve_language_detailed(record.external_lang_id, options.resolution);
        binarized = binarize_record(record, *schema, namer);
      } catch (const Error& e) {
        if (e.code() == ErrorCode::NameCollision) ++report.name_collisions;
        throw Error(e.code(), origin + ":" + std::to_string(row.line) + ": " + e.what());
      }
      if (res.route != ResolutionRoute::Glottocode) {
        report.resolutions.push_back({file.source_name, row.line, record.external_lang_id,
                                      res.glottocode, res.route});
      }
      add_language(res.glottocode);
      for (const auto& desc : descriptors_for(*schema, namer)) {
        if (!tensor.find_feature(desc.name) && batch_feats.insert(desc.name).second) {
          batch.features.push_back(desc);
        }
      }
      for (const auto& [name, value] : binarized) {
        auto key = std::make_tuple(res.glottocode, name, file.source_name);
        auto [it, inserted] = seen.emplace(key, std::make_pair(value, row.line));
        if (!inserted) {
          if (it->second.first != value) {
            ++report.conflicts;
            report.conflict_details.push_back(origin + ":" + std::to_string(row.line) + ": " +
                                              res.glottocode + "/" + name + " contradicts line " +
                                              std::to_string(it->second.second) + "; kept first value");
          }
          continue;
        }
        batch.cells.push_back({res.glottocode, name, file.source_name, value});
      }
    }
  }

  // Rule endpoints without data rows still need their descriptors.
  std::map<std::string, FeatureDescriptor> schema_columns;
  for (const auto& [label, schema] : options.schema.features()) {
    for (auto& desc : descriptors_for(schema, namer)) schema_columns.emplace(desc.name, std::move(desc));
  }
  for (const auto& rule : options.rules) {
    for (const auto* name : {&rule.from_feature, &rule.to_feature}) {
      if (tensor.find_feature(*name) || batch_feats.contains(*name)) continue;
      auto it = schema_columns.find(*name);
      if (it == schema_columns.end()) {
        throw Error(ErrorCode::InvalidRecord, "inference rule refers to unknown feature " + *name);
      }
      batch_feats.insert(*name);
      batch.features.push_back(it->second);
    }
  }

  auto inferred = apply_inference(options.rules, batch);
  report.inferred_cells = inferred.inferred_cells;
  report.removed_features = inferred.removed_features;
  report.features_added = inferred.batch.features.size();
  for (const auto& cell : inferred.batch.cells) {
    const auto l = tensor.find_language(cell.language);
    const auto f = tensor.find_feature(cell.feature);
    const auto src = tensor.find_source(cell.source);
    const auto current = l && f && src ? tensor.cell(*l, *f, *src) : CellValue{};
    if (!current || *current != cell.value) ++report.cells_written;
  }
  tensor.extend(inferred.batch, options.write_mode);
  return report;
}

}  // namespace typodist::ingest
