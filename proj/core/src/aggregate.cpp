#include "typodist/aggregate.hpp"

#include <algorithm>
#include <istream>
#include <ostream>
#include <set>

#include "typodist/csv.hpp"
#include "typodist/error.hpp"

namespace typodist {

std::string_view to_string(AggregationMode mode) {
  return mode == AggregationMode::Union ? "union" : "average";
}

std::optional<AggregationMode> parse_aggregation(std::string_view text) {
  if (text == "union" || text == "max") return AggregationMode::Union;
  if (text == "average" || text == "avg" || text == "mean") return AggregationMode::Average;
  return std::nullopt;
}

AggregatedMatrix::AggregatedMatrix(AggregationMode mode, std::vector<std::string> languages,
                                   std::vector<FeatureDescriptor> features,
                                   std::vector<std::string> sources)
    : mode_(mode),
      languages_(std::move(languages)),
      features_(std::move(features)),
      sources_(std::move(sources)),
      values_(languages_.size() * features_.size(), 0.0),
      known_(languages_.size() * features_.size(), 0) {
  for (std::size_t i = 0; i < languages_.size(); ++i) {
    if (!language_ids_.emplace(languages_[i], i).second) {
      throw Error(ErrorCode::InvalidRecord, "duplicate language " + languages_[i]);
    }
  }
  for (std::size_t j = 0; j < features_.size(); ++j) {
    if (!feature_ids_.emplace(features_[j].name, j).second) {
      throw Error(ErrorCode::InvalidRecord, "duplicate feature " + features_[j].name);
    }
  }
}

std::optional<std::size_t> AggregatedMatrix::find_language(std::string_view glottocode) const {
  auto it = language_ids_.find(glottocode);
  if (it == language_ids_.end()) return std::nullopt;
  return it->second;
}

std::optional<std::size_t> AggregatedMatrix::find_feature(std::string_view name) const {
  auto it = feature_ids_.find(name);
  if (it == feature_ids_.end()) return std::nullopt;
  return it->second;
}

void AggregatedMatrix::set(std::size_t row, std::size_t col, double v) {
  values_[row * cols() + col] = checked_unit_value(v);
  known_[row * cols() + col] = 1;
}

void AggregatedMatrix::clear(std::size_t row, std::size_t col) {
  values_[row * cols() + col] = 0.0;
  known_[row * cols() + col] = 0;
}

std::size_t AggregatedMatrix::known_count() const {
  return static_cast<std::size_t>(std::count(known_.begin(), known_.end(), std::uint8_t{1}));
}

AggregatedMatrix aggregate(const FeatureTensor& tensor, AggregationMode mode,
                           const std::optional<std::vector<std::string>>& sources) {
  std::vector<bool> selected(tensor.sources().size(), !sources.has_value());
  if (sources) {
    if (sources->empty()) throw Error(ErrorCode::EmptySourceSubset, "source subset is empty");
    for (const auto& name : *sources) selected[tensor.source_index(name)] = true;
  }
  std::vector<std::string> used;
  for (std::size_t s = 0; s < selected.size(); ++s) {
    if (selected[s]) used.push_back(tensor.sources()[s]);
  }
  std::vector<std::string> langs;
  langs.reserve(tensor.languages().size());
  for (const auto& r : tensor.languages()) langs.push_back(r.glottocode);

  AggregatedMatrix out(mode, std::move(langs), tensor.features(), std::move(used));
  for (std::size_t l = 0; l < out.rows(); ++l) {
    for (std::size_t f = 0; f < out.cols(); ++f) {
      double acc = 0.0;
      std::size_t n = 0;
      tensor.for_each_source_value(l, f, [&](std::size_t s, double v) {
        if (!selected[s]) return;
        acc = (mode == AggregationMode::Union) ? (n == 0 ? v : std::max(acc, v)) : acc + v;
        ++n;
      });
      if (n == 0) continue;
      out.set(l, f, mode == AggregationMode::Union ? acc : acc / static_cast<double>(n));
    }
  }
  return out;
}

void write_matrix_csv(std::ostream& out, const AggregatedMatrix& matrix) {
  std::vector<std::string> fields{"language"};
  for (const auto& f : matrix.features()) fields.push_back(f.name);
  csv::write_row(out, fields);
  for (std::size_t l = 0; l < matrix.rows(); ++l) {
    fields.assign(1, matrix.languages()[l]);
    for (std::size_t f = 0; f < matrix.cols(); ++f) {
      fields.push_back(matrix.known(l, f) ? csv::format_number(matrix.value(l, f))
                                          : std::string(csv::kMissing));
    }
    csv::write_row(out, fields);
  }
}

AggregatedMatrix read_matrix_csv(std::istream& in, const std::string& origin, AggregationMode mode) {
  csv::Reader reader(in, origin);
  csv::Row header;
  if (!reader.next(header) || header.fields.empty() || header.fields[0] != "language") {
    csv::fail(origin, 1, "expected header starting with 'language'");
  }
  std::vector<FeatureDescriptor> features;
  for (std::size_t j = 1; j < header.fields.size(); ++j) {
    const auto& name = header.fields[j];
    std::optional<FeatureCategory> category;
    for (auto c : kAllCategories) {
      if (name.starts_with(name_prefix(c))) category = c;
    }
    if (!category) csv::fail(origin, header.line, "feature '" + name + "' has no category prefix");
    try {
      validate_feature_name(name, *category);
    } catch (const Error& e) {
      csv::fail(origin, header.line, e.what());
    }
    features.push_back({name, *category, FeatureOrigin::native()});
  }
  std::vector<csv::Row> rows;
  std::vector<std::string> langs;
  csv::Row row;
  while (reader.next(row)) {
    if (row.fields.size() != header.fields.size()) {
      csv::fail(origin, row.line, "expected " + std::to_string(header.fields.size()) + " fields");
    }
    langs.push_back(row.fields[0]);
    rows.push_back(row);
  }
  AggregatedMatrix m;
  try {
    m = AggregatedMatrix(mode, langs, features, {});
  } catch (const Error& e) {
    csv::fail(origin, 1, e.what());
  }
  for (std::size_t l = 0; l < rows.size(); ++l) {
    for (std::size_t f = 0; f < features.size(); ++f) {
      if (auto v = csv::parse_unit_value(rows[l].fields[f + 1], origin, rows[l].line)) m.set(l, f, *v);
    }
  }
  return m;
}

std::shared_ptr<const AggregatedMatrix> AggregationCache::get(
    const FeatureTensor& tensor, AggregationMode mode,
    const std::optional<std::vector<std::string>>& sources) {
  std::vector<std::string> key_sources;
  if (sources) {
    std::set<std::string> unique(sources->begin(), sources->end());
    key_sources.assign(unique.begin(), unique.end());
    if (key_sources.empty()) throw Error(ErrorCode::EmptySourceSubset, "source subset is empty");
  } else {
    key_sources.push_back("\x01*all*");
  }
  std::lock_guard lock(mutex_);
  if (tensor.uid() != tensor_uid_ || tensor.revision() != tensor_revision_) {
    entries_.clear();
    tensor_uid_ = tensor.uid();
    tensor_revision_ = tensor.revision();
  }
  auto key = std::make_pair(mode, key_sources);
  if (auto it = entries_.find(key); it != entries_.end()) return it->second;
  auto matrix = std::make_shared<const AggregatedMatrix>(aggregate(tensor, mode, sources));
  entries_.emplace(key, matrix);
  return matrix;
}

std::size_t AggregationCache::size() const {
  std::lock_guard lock(mutex_);
  return entries_.size();
}

}  // namespace typodist
