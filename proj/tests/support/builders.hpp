#pragma once

#include <cmath>
#include <cstdio>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "typodist/aggregate.hpp"
#include "typodist/kb.hpp"

namespace typodist::testing {

inline constexpr double NA = std::numeric_limits<double>::quiet_NaN();

inline std::string code(std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "lang%04zu", i);
  return buf;
}

inline FeatureCategory category_of(const std::string& name) {
  for (auto c : kAllCategories) {
    if (name.rfind(name_prefix(c), 0) == 0) return c;
  }
  return FeatureCategory::Syntactic;
}

inline FeatureDescriptor feature(const std::string& name) {
  return {name, category_of(name), FeatureOrigin::native()};
}

inline LanguageRecord language(const std::string& glottocode,
                               std::optional<std::string> parent = std::nullopt,
                               ResourceTier tier = ResourceTier::Unknown) {
  return {glottocode, std::nullopt, glottocode, std::move(parent), tier};
}

// Registers identifiers on first use.
class TensorBuilder {
 public:
  TensorBuilder& lang(const LanguageRecord& r) {
    t_.register_language(r);
    return *this;
  }
  TensorBuilder& feat(const std::string& name) {
    t_.register_feature(feature(name));
    return *this;
  }
  TensorBuilder& source(const std::string& name) {
    t_.register_source(name);
    return *this;
  }
  TensorBuilder& cell(const std::string& l, const std::string& f, const std::string& s, double v) {
    if (!t_.find_language(l)) t_.register_language(language(l));
    if (!t_.find_feature(f)) t_.register_feature(feature(f));
    if (!t_.find_source(s)) t_.register_source(s);
    t_.set_cell(t_.language_index(l), t_.feature_index(f), t_.source_index(s), v);
    return *this;
  }
  FeatureTensor& get() { return t_; }
  FeatureTensor build() const { return t_; }

 private:
  FeatureTensor t_;
};

// Dense fixture: NA marks Missing. Feature names default to S_F<j>.
inline AggregatedMatrix make_matrix(AggregationMode mode, const std::vector<std::vector<double>>& rows,
                                    std::vector<std::string> names = {}) {
  const std::size_t cols = rows.empty() ? 0 : rows.front().size();
  if (names.empty()) {
    for (std::size_t j = 0; j < cols; ++j) names.push_back("S_F" + std::to_string(j));
  }
  std::vector<std::string> langs;
  for (std::size_t i = 0; i < rows.size(); ++i) langs.push_back(code(i));
  std::vector<FeatureDescriptor> feats;
  for (const auto& n : names) feats.push_back(feature(n));
  AggregatedMatrix m(mode, langs, feats, {"SRC"});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      if (!std::isnan(rows[i][j])) m.set(i, j, rows[i][j]);
    }
  }
  return m;
}

}  // namespace typodist::testing
