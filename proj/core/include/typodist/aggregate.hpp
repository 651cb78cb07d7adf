#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "typodist/kb.hpp"

namespace typodist {

enum class AggregationMode { Union, Average };

std::string_view to_string(AggregationMode mode);
std::optional<AggregationMode> parse_aggregation(std::string_view text);

// Dense language x feature matrix with an explicit Known mask. Row and column
// order follow the tensor registries it was built from.
class AggregatedMatrix {
 public:
  AggregatedMatrix() = default;
  AggregatedMatrix(AggregationMode mode, std::vector<std::string> languages,
                   std::vector<FeatureDescriptor> features, std::vector<std::string> sources);

  AggregationMode mode() const { return mode_; }
  std::size_t rows() const { return languages_.size(); }
  std::size_t cols() const { return features_.size(); }
  const std::vector<std::string>& languages() const { return languages_; }
  const std::vector<FeatureDescriptor>& features() const { return features_; }
  // Sources that contributed, in registry order.
  const std::vector<std::string>& sources() const { return sources_; }

  std::optional<std::size_t> find_language(std::string_view glottocode) const;
  std::optional<std::size_t> find_feature(std::string_view name) const;

  bool known(std::size_t row, std::size_t col) const { return known_[row * cols() + col] != 0; }
  double value(std::size_t row, std::size_t col) const { return values_[row * cols() + col]; }
  CellValue at(std::size_t row, std::size_t col) const {
    return known(row, col) ? CellValue(value(row, col)) : std::nullopt;
  }
  void set(std::size_t row, std::size_t col, double v);
  void clear(std::size_t row, std::size_t col);

  std::size_t known_count() const;

 private:
  AggregationMode mode_ = AggregationMode::Union;
  std::vector<std::string> languages_;
  std::vector<FeatureDescriptor> features_;
  std::vector<std::string> sources_;
  std::map<std::string, std::size_t, std::less<>> language_ids_;
  std::map<std::string, std::size_t, std::less<>> feature_ids_;
  std::vector<double> values_;
  std::vector<std::uint8_t> known_;
};

// Union: max over Known source values. Average: unweighted mean over Known
// source values. Missing iff no selected source is Known. An empty `sources`
// optional selects every registered source; an empty vector is rejected.
AggregatedMatrix aggregate(const FeatureTensor& tensor, AggregationMode mode,
                           const std::optional<std::vector<std::string>>& sources = std::nullopt);

// CSV: header `language,<feature...>`, one row per language, `--` for Missing.
void write_matrix_csv(std::ostream& out, const AggregatedMatrix& matrix);
// Reads a matrix written by write_matrix_csv. Feature categories are taken
// from the name prefixes.
AggregatedMatrix read_matrix_csv(std::istream& in, const std::string& origin, AggregationMode mode);

// Memoizes aggregations per (mode, source subset). Entries are dropped as soon
// as the tensor identity or revision differs from the one they were built on.
class AggregationCache {
 public:
  std::shared_ptr<const AggregatedMatrix> get(
      const FeatureTensor& tensor, AggregationMode mode,
      const std::optional<std::vector<std::string>>& sources = std::nullopt);

  std::size_t size() const;

 private:
  mutable std::mutex mutex_;
  std::uint64_t tensor_uid_ = 0;
  std::uint64_t tensor_revision_ = 0;
  std::map<std::pair<AggregationMode, std::vector<std::string>>,
           std::shared_ptr<const AggregatedMatrix>>
      entries_;
};

}  // namespace typodist
