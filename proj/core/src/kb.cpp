#include "typodist/kb.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <set>
#include <unordered_set>

#include "typodist/error.hpp"

namespace typodist {
namespace {

std::uint64_t next_uid() {
  static std::atomic<std::uint64_t> counter{1};
  return counter.fetch_add(1, std::memory_order_relaxed);
}

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

bool has_whitespace(std::string_view s) {
  return std::any_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c) != 0; });
}

void validate_language_record(const LanguageRecord& r) {
  if (r.glottocode.empty() || has_whitespace(r.glottocode)) {
    throw Error(ErrorCode::InvalidRecord, "invalid glottocode '" + r.glottocode + "'");
  }
  if (r.parent && *r.parent == r.glottocode) {
    throw Error(ErrorCode::InvalidRecord, "language " + r.glottocode + " is its own parent");
  }
  if (r.iso639_3 && (r.iso639_3->empty() || has_whitespace(*r.iso639_3))) {
    throw Error(ErrorCode::InvalidRecord, "invalid ISO 639-3 alias for " + r.glottocode);
  }
}

}  // namespace

std::string_view to_string(ResourceTier tier) {
  switch (tier) {
    case ResourceTier::HRL: return "HRL";
    case ResourceTier::MRL: return "MRL";
    case ResourceTier::LRL: return "LRL";
    case ResourceTier::Unknown: return "Unknown";
  }
  return "Unknown";
}

std::optional<ResourceTier> parse_tier(std::string_view text) {
  const std::string t = lower(text);
  if (t == "hrl") return ResourceTier::HRL;
  if (t == "mrl") return ResourceTier::MRL;
  if (t == "lrl") return ResourceTier::LRL;
  if (t == "unknown" || t.empty()) return ResourceTier::Unknown;
  return std::nullopt;
}

std::string_view to_string(FeatureCategory category) {
  switch (category) {
    case FeatureCategory::Syntactic: return "syntactic";
    case FeatureCategory::Phonological: return "phonological";
    case FeatureCategory::Inventory: return "inventory";
    case FeatureCategory::Morphological: return "morphological";
    case FeatureCategory::Geographic: return "geographic";
    case FeatureCategory::Genetic: return "genetic";
  }
  return "syntactic";
}

std::optional<FeatureCategory> parse_category(std::string_view text) {
  const std::string t = lower(text);
  if (t == "syntactic" || t == "syntax" || t == "syn" || t == "s") return FeatureCategory::Syntactic;
  if (t == "phonological" || t == "phonology" || t == "pho" || t == "p")
    return FeatureCategory::Phonological;
  if (t == "inventory" || t == "inv") return FeatureCategory::Inventory;
  if (t == "morphological" || t == "morphology" || t == "mor" || t == "m")
    return FeatureCategory::Morphological;
  if (t == "geographic" || t == "geography" || t == "geo") return FeatureCategory::Geographic;
  if (t == "genetic" || t == "genealogical" || t == "gen") return FeatureCategory::Genetic;
  return std::nullopt;
}

std::string_view name_prefix(FeatureCategory category) {
  switch (category) {
    case FeatureCategory::Syntactic: return "S_";
    case FeatureCategory::Phonological: return "P_";
    case FeatureCategory::Inventory: return "INV_";
    case FeatureCategory::Morphological: return "M_";
    case FeatureCategory::Geographic: return "GEO_";
    case FeatureCategory::Genetic: return "GEN_";
  }
  return "S_";
}

bool is_typological(FeatureCategory category) {
  return std::find(kTypologicalCategories.begin(), kTypologicalCategories.end(), category) !=
         kTypologicalCategories.end();
}

void validate_feature_name(std::string_view name, FeatureCategory category) {
  const auto prefix = name_prefix(category);
  if (!name.starts_with(prefix) || name.size() == prefix.size()) {
    throw Error(ErrorCode::InvalidRecord, "feature '" + std::string(name) +
                                              "' must start with " + std::string(prefix));
  }
  const bool charset_ok = std::all_of(name.begin(), name.end(), [](char c) {
    return (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_';
  });
  if (!charset_ok) {
    throw Error(ErrorCode::InvalidRecord,
                "feature '" + std::string(name) + "' may only contain A-Z, 0-9 and '_'");
  }
}

double checked_unit_value(double v) {
  if (!std::isfinite(v)) {
    throw Error(ErrorCode::InvalidRecord, "cell value must be finite");
  }
  return std::clamp(v, 0.0, 1.0);
}

FeatureTensor::FeatureTensor() : uid_(next_uid()) {}

FeatureTensor::FeatureTensor(const FeatureTensor& other)
    : languages_(other.languages_),
      features_(other.features_),
      sources_(other.sources_),
      language_ids_(other.language_ids_),
      feature_ids_(other.feature_ids_),
      source_ids_(other.source_ids_),
      cells_(other.cells_),
      uid_(next_uid()),
      revision_(other.revision_) {}

FeatureTensor& FeatureTensor::operator=(const FeatureTensor& other) {
  if (this != &other) {
    FeatureTensor copy(other);
    *this = std::move(copy);
  }
  return *this;
}

std::optional<std::size_t> FeatureTensor::find_language(std::string_view id) const {
  auto it = language_ids_.find(std::string(id));
  if (it == language_ids_.end()) return std::nullopt;
  return it->second;
}

std::optional<std::size_t> FeatureTensor::find_feature(std::string_view name) const {
  auto it = feature_ids_.find(std::string(name));
  if (it == feature_ids_.end()) return std::nullopt;
  return it->second;
}

std::optional<std::size_t> FeatureTensor::find_source(std::string_view name) const {
  auto it = source_ids_.find(std::string(name));
  if (it == source_ids_.end()) return std::nullopt;
  return it->second;
}

std::size_t FeatureTensor::language_index(std::string_view id) const {
  if (auto i = find_language(id)) return *i;
  throw Error(ErrorCode::UnknownLanguage, "unknown language '" + std::string(id) + "'");
}

std::size_t FeatureTensor::feature_index(std::string_view name) const {
  if (auto i = find_feature(name)) return *i;
  throw Error(ErrorCode::UnknownFeature, "unknown feature '" + std::string(name) + "'");
}

std::size_t FeatureTensor::source_index(std::string_view name) const {
  if (auto i = find_source(name)) return *i;
  throw Error(ErrorCode::UnknownSource, "unknown source '" + std::string(name) + "'");
}

CellValue FeatureTensor::get_cell(std::string_view lang, std::string_view feat,
                                  std::string_view src) const {
  return cell(language_index(lang), feature_index(feat), source_index(src));
}

CellValue FeatureTensor::cell(std::size_t lang, std::size_t feat, std::size_t src) const {
  auto it = cells_.find(CellKey{to_u32(lang), to_u32(feat), to_u32(src)});
  if (it == cells_.end()) return std::nullopt;
  return it->second;
}

SourceStats FeatureTensor::source_stats(std::string_view lang, std::string_view feat) const {
  return source_stats(language_index(lang), feature_index(feat));
}

SourceStats FeatureTensor::source_stats(std::size_t lang, std::size_t feat) const {
  SourceStats stats;
  for_each_source_value(lang, feat, [&](std::size_t, double v) { stats.values.push_back(v); });
  stats.n = stats.values.size();
  return stats;
}

std::size_t FeatureTensor::register_language(const LanguageRecord& record) {
  validate_language_record(record);
  if (auto it = language_ids_.find(record.glottocode); it != language_ids_.end()) {
    const auto& existing = languages_[it->second];
    if (existing.glottocode != record.glottocode) {
      throw Error(ErrorCode::InvalidRecord,
                  "glottocode " + record.glottocode + " collides with an ISO alias");
    }
    if (existing != record) {
      throw Error(ErrorCode::InvalidRecord,
                  "conflicting metadata for language " + record.glottocode);
    }
    return it->second;
  }
  if (record.iso639_3 && language_ids_.contains(*record.iso639_3)) {
    throw Error(ErrorCode::InvalidRecord, "ISO alias " + *record.iso639_3 + " already in use");
  }
  if (record.parent && !language_ids_.contains(*record.parent)) {
    throw Error(ErrorCode::UnknownLanguage,
                "parent " + *record.parent + " of " + record.glottocode + " is not registered");
  }
  const std::size_t index = languages_.size();
  languages_.push_back(record);
  language_ids_.emplace(record.glottocode, index);
  if (record.iso639_3) language_ids_.emplace(*record.iso639_3, index);
  ++revision_;
  return index;
}

std::size_t FeatureTensor::register_feature(const FeatureDescriptor& descriptor) {
  validate_feature_name(descriptor.name, descriptor.category);
  if (auto it = feature_ids_.find(descriptor.name); it != feature_ids_.end()) {
    if (features_[it->second] != descriptor) {
      throw Error(ErrorCode::InvalidRecord,
                  "conflicting metadata for feature " + descriptor.name);
    }
    return it->second;
  }
  const std::size_t index = features_.size();
  features_.push_back(descriptor);
  feature_ids_.emplace(descriptor.name, index);
  ++revision_;
  return index;
}

std::size_t FeatureTensor::register_source(std::string_view name) {
  if (name.empty()) throw Error(ErrorCode::InvalidRecord, "source name must be non-empty");
  if (auto it = source_ids_.find(std::string(name)); it != source_ids_.end()) return it->second;
  const std::size_t index = sources_.size();
  sources_.emplace_back(name);
  source_ids_.emplace(std::string(name), index);
  ++revision_;
  return index;
}

void FeatureTensor::set_cell(std::size_t lang, std::size_t feat, std::size_t src, double value,
                             WriteMode mode) {
  if (lang >= languages_.size() || feat >= features_.size() || src >= sources_.size()) {
    throw Error(ErrorCode::InvalidArgument, "cell index out of registry bounds");
  }
  value = checked_unit_value(value);
  const CellKey key{to_u32(lang), to_u32(feat), to_u32(src)};
  auto [it, inserted] = cells_.try_emplace(key, value);
  if (!inserted && it->second != value) {
    if (mode != WriteMode::Overwrite) {
      throw Error(ErrorCode::ConflictingWrite,
                  "cell (" + languages_[lang].glottocode + ", " + features_[feat].name + ", " +
                      sources_[src] + ") already holds a different value");
    }
    it->second = value;
  }
  ++revision_;
}

void FeatureTensor::check_parent_links() const {
  for (std::size_t i = 0; i < languages_.size(); ++i) {
    std::unordered_set<std::size_t> seen{i};
    const LanguageRecord* cur = &languages_[i];
    while (cur->parent) {
      const std::size_t p = language_index(*cur->parent);
      if (!seen.insert(p).second) {
        throw Error(ErrorCode::InvalidRecord,
                    "parent chain of " + languages_[i].glottocode + " is cyclic");
      }
      cur = &languages_[p];
    }
  }
}

void FeatureTensor::extend(const Batch& batch, WriteMode mode) {
  // Validation pass: nothing below may throw once writes start.
  std::unordered_map<std::string, const LanguageRecord*> new_langs;
  std::unordered_set<std::string> new_aliases;
  for (const auto& rec : batch.languages) {
    validate_language_record(rec);
    if (auto i = find_language(rec.glottocode)) {
      if (languages_[*i] != rec) {
        throw Error(ErrorCode::InvalidRecord, "conflicting metadata for language " + rec.glottocode);
      }
      continue;
    }
    if (auto [it, ok] = new_langs.emplace(rec.glottocode, &rec); !ok && *it->second != rec) {
      throw Error(ErrorCode::InvalidRecord, "conflicting metadata for language " + rec.glottocode);
    }
    if (rec.iso639_3 && (find_language(*rec.iso639_3) || !new_aliases.insert(*rec.iso639_3).second)) {
      throw Error(ErrorCode::InvalidRecord, "ISO alias " + *rec.iso639_3 + " already in use");
    }
  }
  for (const auto& [code, rec] : new_langs) {
    if (rec->parent && !find_language(*rec->parent) && !new_langs.contains(*rec->parent)) {
      throw Error(ErrorCode::UnknownLanguage,
                  "parent " + *rec->parent + " of " + code + " is not registered");
    }
  }

  std::unordered_map<std::string, const FeatureDescriptor*> new_feats;
  for (const auto& desc : batch.features) {
    validate_feature_name(desc.name, desc.category);
    if (auto i = find_feature(desc.name)) {
      if (features_[*i] != desc) {
        throw Error(ErrorCode::InvalidRecord, "conflicting metadata for feature " + desc.name);
      }
      continue;
    }
    if (auto [it, ok] = new_feats.emplace(desc.name, &desc); !ok && *it->second != desc) {
      throw Error(ErrorCode::InvalidRecord, "conflicting metadata for feature " + desc.name);
    }
  }

  std::map<std::tuple<std::string, std::string, std::string>, double> staged;
  std::vector<std::tuple<std::string, std::string, std::string>> write_order;
  for (const auto& c : batch.cells) {
    if (!find_language(c.language) && !new_langs.contains(c.language)) {
      throw Error(ErrorCode::UnknownLanguage, "unknown language '" + c.language + "'");
    }
    if (!find_feature(c.feature) && !new_feats.contains(c.feature)) {
      throw Error(ErrorCode::UnknownFeature, "unknown feature '" + c.feature + "'");
    }
    if (c.source.empty()) throw Error(ErrorCode::InvalidRecord, "source name must be non-empty");
    const double v = checked_unit_value(c.value);
    // Resolve ISO aliases so duplicates are detected on the primary key.
    std::string lang = c.language;
    if (auto i = find_language(c.language)) lang = languages_[*i].glottocode;
    auto key = std::make_tuple(lang, c.feature, c.source);
    if (auto [it, ok] = staged.emplace(key, v); ok) {
      write_order.push_back(key);
    } else if (it->second != v) {
      throw Error(ErrorCode::ConflictingWrite, "batch writes two values to (" + lang + ", " +
                                                   c.feature + ", " + c.source + ")");
    }
    if (mode == WriteMode::KeepExisting) {
      auto l = find_language(lang);
      auto f = find_feature(c.feature);
      auto s = find_source(c.source);
      if (l && f && s) {
        if (auto existing = cell(*l, *f, *s); existing && *existing != v) {
          throw Error(ErrorCode::ConflictingWrite,
                      "cell (" + lang + ", " + c.feature + ", " + c.source +
                          ") already holds a different value");
        }
      }
    }
  }

  // Parent cycles can only involve new records; check on a scratch registry.
  {
    std::unordered_map<std::string, std::optional<std::string>> parent_of;
    for (const auto& rec : languages_) parent_of[rec.glottocode] = rec.parent;
    for (const auto& [code, rec] : new_langs) parent_of[code] = rec->parent;
    for (const auto& [code, rec] : new_langs) {
      std::set<std::string> seen{code};
      auto p = rec->parent;
      while (p) {
        std::string key = *p;
        if (auto i = find_language(key)) key = languages_[*i].glottocode;
        if (!seen.insert(key).second) {
          throw Error(ErrorCode::InvalidRecord, "parent chain of " + code + " is cyclic");
        }
        p = parent_of[key];
      }
    }
  }

  // Write pass. New languages go in batch order with parents first.
  std::unordered_set<std::string> pending;
  for (const auto& [code, rec] : new_langs) pending.insert(code);
  while (!pending.empty()) {
    for (const auto& rec : batch.languages) {
      if (!pending.contains(rec.glottocode)) continue;
      if (rec.parent && pending.contains(*rec.parent)) continue;
      register_language(rec);
      pending.erase(rec.glottocode);
    }
  }
  for (const auto& desc : batch.features) register_feature(desc);
  for (const auto& key : write_order) {
    const auto& [lang, feat, src] = key;
    set_cell(language_index(lang), feature_index(feat), register_source(src), staged.at(key), mode);
  }
  check_parent_links();
}

FeatureTensor extend_with(FeatureTensor tensor, const Batch& batch, WriteMode mode) {
  tensor.extend(batch, mode);
  return tensor;
}

}  // namespace typodist
