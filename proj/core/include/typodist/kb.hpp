#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace typodist {

enum class ResourceTier { HRL, MRL, LRL, Unknown };

enum class FeatureCategory {
  Syntactic,
  Phonological,
  Inventory,
  Morphological,
  Geographic,
  Genetic,
};

inline constexpr std::array<FeatureCategory, 4> kTypologicalCategories = {
    FeatureCategory::Syntactic, FeatureCategory::Phonological,
    FeatureCategory::Inventory, FeatureCategory::Morphological};

inline constexpr std::array<FeatureCategory, 6> kAllCategories = {
    FeatureCategory::Syntactic,     FeatureCategory::Phonological,
    FeatureCategory::Inventory,     FeatureCategory::Morphological,
    FeatureCategory::Geographic,    FeatureCategory::Genetic};

std::string_view to_string(ResourceTier tier);
std::optional<ResourceTier> parse_tier(std::string_view text);

std::string_view to_string(FeatureCategory category);
// Accepts full names ("syntactic"), short names ("syn") and prefixes ("S").
std::optional<FeatureCategory> parse_category(std::string_view text);
// "S_", "P_", "INV_", "M_", "GEO_", "GEN_".
std::string_view name_prefix(FeatureCategory category);
bool is_typological(FeatureCategory category);

struct LanguageRecord {
  std::string glottocode;
  std::optional<std::string> iso639_3;
  std::string display_name;
  std::optional<std::string> parent;
  ResourceTier resource_tier = ResourceTier::Unknown;

  bool operator==(const LanguageRecord&) const = default;
};

struct FeatureOrigin {
  enum class Kind { Native, BinarizedNominal, BinarizedOrdinal };

  Kind kind = Kind::Native;
  std::string parent_feature;  // empty for Native
  std::string level;           // nominal category; empty otherwise

  static FeatureOrigin native() { return {}; }
  static FeatureOrigin nominal(std::string parent, std::string level) {
    return {Kind::BinarizedNominal, std::move(parent), std::move(level)};
  }
  static FeatureOrigin ordinal(std::string parent) {
    return {Kind::BinarizedOrdinal, std::move(parent), {}};
  }

  bool operator==(const FeatureOrigin&) const = default;
};

struct FeatureDescriptor {
  std::string name;
  FeatureCategory category = FeatureCategory::Syntactic;
  FeatureOrigin origin;

  bool operator==(const FeatureDescriptor&) const = default;
};

// Throws InvalidRecord unless `name` carries the prefix of `category` and
// uses only [A-Z0-9_].
void validate_feature_name(std::string_view name, FeatureCategory category);

// Missing is std::nullopt.
using CellValue = std::optional<double>;

// Known value clamped to [0,1]; non-finite input throws InvalidRecord.
double checked_unit_value(double v);

struct SourceStats {
  std::size_t n = 0;
  std::vector<double> values;  // one per source with a Known value, in source order
};

struct CellWrite {
  std::string language;
  std::string feature;
  std::string source;
  double value = 0.0;
};

// A set of cells plus the registry metadata for identifiers the target
// tensor does not know yet. Sources are registered by name on first use.
struct Batch {
  std::vector<LanguageRecord> languages;
  std::vector<FeatureDescriptor> features;
  std::vector<CellWrite> cells;

  bool empty() const { return languages.empty() && features.empty() && cells.empty(); }
};

enum class WriteMode { KeepExisting, Overwrite };

// Sparse store over (language, feature, source). Absent entries are Missing.
// Registries are append-only; indices handed out stay valid for the lifetime
// of the tensor.
class FeatureTensor {
 public:
  FeatureTensor();
  FeatureTensor(const FeatureTensor& other);
  FeatureTensor& operator=(const FeatureTensor& other);
  FeatureTensor(FeatureTensor&&) noexcept = default;
  FeatureTensor& operator=(FeatureTensor&&) noexcept = default;

  const std::vector<LanguageRecord>& languages() const { return languages_; }
  const std::vector<FeatureDescriptor>& features() const { return features_; }
  const std::vector<std::string>& sources() const { return sources_; }

  // Language lookups accept a glottocode or a registered ISO 639-3 alias.
  std::optional<std::size_t> find_language(std::string_view id) const;
  std::optional<std::size_t> find_feature(std::string_view name) const;
  std::optional<std::size_t> find_source(std::string_view name) const;
  std::size_t language_index(std::string_view id) const;
  std::size_t feature_index(std::string_view name) const;
  std::size_t source_index(std::string_view name) const;

  CellValue get_cell(std::string_view lang, std::string_view feat, std::string_view src) const;
  CellValue cell(std::size_t lang, std::size_t feat, std::size_t src) const;

  SourceStats source_stats(std::string_view lang, std::string_view feat) const;
  SourceStats source_stats(std::size_t lang, std::size_t feat) const;

  // Visits Known cells of one (language, feature) in source order.
  template <class Fn>
  void for_each_source_value(std::size_t lang, std::size_t feat, Fn&& fn) const {
    auto it = cells_.lower_bound(CellKey{to_u32(lang), to_u32(feat), 0});
    for (; it != cells_.end() && it->first.lang == lang && it->first.feat == feat; ++it) {
      fn(static_cast<std::size_t>(it->first.src), it->second);
    }
  }

  // Visits every Known cell ordered by (language, feature, source).
  template <class Fn>
  void for_each_cell(Fn&& fn) const {
    for (const auto& [key, value] : cells_) {
      fn(static_cast<std::size_t>(key.lang), static_cast<std::size_t>(key.feat),
         static_cast<std::size_t>(key.src), value);
    }
  }

  std::size_t known_cell_count() const { return cells_.size(); }

  // Registration is idempotent for identical metadata; differing metadata
  // under an existing key throws InvalidRecord.
  std::size_t register_language(const LanguageRecord& record);
  std::size_t register_feature(const FeatureDescriptor& descriptor);
  std::size_t register_source(std::string_view name);

  void set_cell(std::size_t lang, std::size_t feat, std::size_t src, double value,
                WriteMode mode = WriteMode::KeepExisting);

  // All-or-nothing: the batch is validated in full before any write.
  void extend(const Batch& batch, WriteMode mode = WriteMode::KeepExisting);

  // Identity for caches: uid changes on copy, revision on every mutation.
  std::uint64_t uid() const { return uid_; }
  std::uint64_t revision() const { return revision_; }

 private:
  struct CellKey {
    std::uint32_t lang;
    std::uint32_t feat;
    std::uint32_t src;
    auto operator<=>(const CellKey&) const = default;
  };

  static std::uint32_t to_u32(std::size_t i) { return static_cast<std::uint32_t>(i); }
  void check_parent_links() const;

  std::vector<LanguageRecord> languages_;
  std::vector<FeatureDescriptor> features_;
  std::vector<std::string> sources_;
  std::unordered_map<std::string, std::size_t> language_ids_;  // glottocode and ISO alias
  std::unordered_map<std::string, std::size_t> feature_ids_;
  std::unordered_map<std::string, std::size_t> source_ids_;
  std::map<CellKey, double> cells_;
  std::uint64_t uid_;
  std::uint64_t revision_ = 0;
};

FeatureTensor extend_with(FeatureTensor tensor, const Batch& batch,
                          WriteMode mode = WriteMode::KeepExisting);

}  // namespace typodist
