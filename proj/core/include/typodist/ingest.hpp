#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "typodist/kb.hpp"

namespace typodist::ingest {

inline constexpr std::size_t kMaxFeatureNameLength = 64;

// ---------------------------------------------------------------------------
// Feature naming

// Prefix + uppercased label; spaces become underscores, any other
// non-alphanumeric character is dropped, result truncated to 64 characters.
// A label that already carries the category prefix is not prefixed twice.
std::string canonicalize_feature_name(std::string_view raw, FeatureCategory category);

// Name of the one-hot column for `level` of a nominal feature. The level
// suffix always survives truncation.
std::string nominal_feature_name(std::string_view label, std::string_view level,
                                 FeatureCategory category);

// Remembers which raw label produced each canonical name during one ingest
// run and throws NameCollision when two different labels meet.
class FeatureNamer {
 public:
  std::string name(std::string_view raw, FeatureCategory category);
  std::string nominal_name(std::string_view label, std::string_view level,
                           FeatureCategory category);
  // Reserves an explicitly given name for `raw_key`.
  std::string claim(std::string name, std::string raw_key);

 private:
  std::map<std::string, std::string> owner_;  // canonical name -> raw key
};

// ---------------------------------------------------------------------------
// Binarization

std::vector<std::pair<std::string, double>> binarize_nominal(
    std::string_view label, const std::vector<std::string>& categories, std::string_view observed,
    FeatureCategory category);

// Presence indicator: 1 iff observed > 0.
std::pair<std::string, double> binarize_ordinal(std::string_view label, int max_level,
                                                int observed, FeatureCategory category);

// ---------------------------------------------------------------------------
// Ingest schema

enum class VariableKind { Binary, Continuous, Nominal, Ordinal };

struct FeatureSchema {
  std::string label;
  VariableKind kind = VariableKind::Binary;
  FeatureCategory category = FeatureCategory::Syntactic;
  std::vector<std::string> categories;  // Nominal
  int max_level = 0;                    // Ordinal
  std::optional<std::string> name;      // explicit canonical name (Binary/Continuous/Ordinal)
};

class IngestSchema {
 public:
  static IngestSchema from_json(const nlohmann::json& j);
  static IngestSchema load(const std::filesystem::path& path);

  void add(FeatureSchema feature);
  const FeatureSchema* find(std::string_view label) const;
  std::size_t size() const { return features_.size(); }
  const std::map<std::string, FeatureSchema, std::less<>>& features() const { return features_; }

 private:
  std::map<std::string, FeatureSchema, std::less<>> features_;
};

struct MissingMarker {
  bool operator==(const MissingMarker&) const = default;
};
struct NominalValue {
  std::string category;
  bool operator==(const NominalValue&) const = default;
};
struct OrdinalLevel {
  int level = 0;
  bool operator==(const OrdinalLevel&) const = default;
};
struct BinaryValue {
  int value = 0;
  bool operator==(const BinaryValue&) const = default;
};
struct ContinuousValue {
  double value = 0.0;
  bool operator==(const ContinuousValue&) const = default;
};

using RawValue = std::variant<MissingMarker, NominalValue, OrdinalLevel, BinaryValue, ContinuousValue>;

struct RawRecord {
  std::string external_lang_id;
  std::string feature_label;
  RawValue value;
  std::string source_name;
};

// Interprets a raw CSV field according to the declared kind. Throws
// InvalidRecord when the text does not fit the kind.
RawValue parse_raw_value(std::string_view text, const FeatureSchema& schema);

// Binarized (name, value) cells for one record; empty for Missing.
std::vector<std::pair<std::string, double>> binarize_record(const RawRecord& record,
                                                            const FeatureSchema& schema,
                                                            FeatureNamer& namer);

// Descriptors of every column a schema entry can produce.
std::vector<FeatureDescriptor> descriptors_for(const FeatureSchema& schema, FeatureNamer& namer);

// ---------------------------------------------------------------------------
// Redundant-feature inference

enum class RuleDirection { Implies, Equivalent };

struct InferenceRule {
  std::string from_feature;
  std::string to_feature;
  RuleDirection direction = RuleDirection::Implies;
  double from_value = 1.0;
  double to_value = 1.0;
};

std::vector<InferenceRule> load_rules(const std::filesystem::path& path);
std::vector<InferenceRule> parse_rules(std::istream& in, const std::string& origin);

struct InferenceResult {
  Batch batch;
  std::size_t inferred_cells = 0;
  std::size_t skipped_conflicts = 0;
  std::vector<std::string> removed_features;
};

// Fills Missing `to` cells from Known `from` cells until a fixpoint, then
// drops the `from` column of every Equivalent rule. An inferred cell is
// written to each source that already carries the `to` feature (or, if none
// does, to the sources carrying `from`). Throws CyclicRules when the Implies
// edges form a cycle.
InferenceResult apply_inference(const std::vector<InferenceRule>& rules, const Batch& batch);

// ---------------------------------------------------------------------------
// Language identifiers

bool looks_like_glottocode(std::string_view id);

class IdResolutionTable {
 public:
  static IdResolutionTable load(const std::filesystem::path& path);
  static IdResolutionTable parse(std::istream& in, const std::string& origin);

  void add(std::string external_id, std::string glottocode, bool retired);

  const std::map<std::string, std::string, std::less<>>& iso_to_glotto() const { return iso_; }
  const std::map<std::string, std::string, std::less<>>& retired_iso() const { return retired_; }

 private:
  std::map<std::string, std::string, std::less<>> iso_;
  std::map<std::string, std::string, std::less<>> retired_;
};

enum class ResolutionRoute { Glottocode, Iso, RetiredIso };

struct Resolution {
  std::string glottocode;
  ResolutionRoute route = ResolutionRoute::Glottocode;
};

Resolution resolve_language_detailed(std::string_view external_id, const IdResolutionTable& table);
std::string resolve_language(std::string_view external_id, const IdResolutionTable& table);

// ---------------------------------------------------------------------------
// File-level pipeline

struct SourceFile {
  std::string source_name;
  std::filesystem::path path;  // CSV with header `language,feature,value`
};

struct IngestOptions {
  IngestSchema schema;
  std::vector<InferenceRule> rules;
  IdResolutionTable resolution;
  std::vector<LanguageRecord> language_metadata;
  WriteMode write_mode = WriteMode::KeepExisting;
};

struct ResolutionLogEntry {
  std::string source;
  std::size_t line = 0;
  std::string external_id;
  std::string glottocode;
  ResolutionRoute route = ResolutionRoute::Glottocode;
};

struct IngestReport {
  std::size_t rows_read = 0;
  std::size_t missing_rows = 0;
  std::size_t cells_written = 0;  // cells whose stored value changed
  std::size_t conflicts = 0;
  std::size_t name_collisions = 0;
  std::size_t inferred_cells = 0;
  std::size_t languages_added = 0;
  std::size_t features_added = 0;
  std::vector<std::string> removed_features;
  std::vector<ResolutionLogEntry> resolutions;  // non-trivial resolutions only
  std::vector<std::string> conflict_details;

  nlohmann::json to_json() const;
};

// CSV `glottocode,iso639_3,name,parent,tier`.
std::vector<LanguageRecord> load_language_metadata(const std::filesystem::path& path);

// Parses every file, binarizes, applies inference and extends `tensor`.
// The tensor is left untouched when any step throws.
IngestReport ingest_sources(FeatureTensor& tensor, const std::vector<SourceFile>& files,
                            const IngestOptions& options);

}  // namespace typodist::ingest
