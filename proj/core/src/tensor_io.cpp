#include "typodist/tensor_io.hpp"

#include <fstream>
#include <set>

#include "typodist/csv.hpp"
#include "typodist/error.hpp"

namespace typodist {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string file_stem_for(std::string_view source, std::set<std::string>& used) {
  std::string stem;
  for (char c : source) {
    const bool ok = (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') ||
                    c == '_' || c == '-' || c == '.';
    stem += ok ? c : '_';
  }
  if (stem.empty() || stem.front() == '.') stem = "source" + stem;
  std::string candidate = stem;
  for (int i = 2; used.contains(candidate) || candidate == "registry"; ++i) {
    candidate = stem + "_" + std::to_string(i);
  }
  used.insert(candidate);
  return candidate + ".csv";
}

const char* origin_kind(FeatureOrigin::Kind kind) {
  switch (kind) {
    case FeatureOrigin::Kind::Native: return "native";
    case FeatureOrigin::Kind::BinarizedNominal: return "nominal";
    case FeatureOrigin::Kind::BinarizedOrdinal: return "ordinal";
  }
  return "native";
}

std::optional<std::string> optional_string(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  auto s = j.at(key).get<std::string>();
  if (s.empty()) return std::nullopt;
  return s;
}

}  // namespace

json to_json(const LanguageRecord& r) {
  return json{{"glottocode", r.glottocode},
              {"iso639_3", r.iso639_3 ? json(*r.iso639_3) : json(nullptr)},
              {"name", r.display_name},
              {"parent", r.parent ? json(*r.parent) : json(nullptr)},
              {"tier", std::string(to_string(r.resource_tier))}};
}

json to_json(const FeatureDescriptor& d) {
  json origin{{"kind", origin_kind(d.origin.kind)}};
  if (d.origin.kind != FeatureOrigin::Kind::Native) origin["parent"] = d.origin.parent_feature;
  if (d.origin.kind == FeatureOrigin::Kind::BinarizedNominal) origin["level"] = d.origin.level;
  return json{{"name", d.name}, {"category", std::string(to_string(d.category))}, {"origin", origin}};
}

LanguageRecord language_from_json(const json& j) {
  try {
    LanguageRecord r;
    r.glottocode = j.at("glottocode").get<std::string>();
    r.iso639_3 = optional_string(j, "iso639_3");
    r.display_name = j.value("name", r.glottocode);
    r.parent = optional_string(j, "parent");
    auto tier = parse_tier(j.value("tier", "Unknown"));
    if (!tier) throw Error(ErrorCode::FormatError, "unknown tier for " + r.glottocode);
    r.resource_tier = *tier;
    return r;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::FormatError, std::string("malformed language record: ") + e.what());
  }
}

FeatureDescriptor feature_from_json(const json& j) {
  try {
    FeatureDescriptor d;
    d.name = j.at("name").get<std::string>();
    auto cat = parse_category(j.at("category").get<std::string>());
    if (!cat) throw Error(ErrorCode::FormatError, "unknown category for feature " + d.name);
    d.category = *cat;
    if (j.contains("origin")) {
      const auto& o = j.at("origin");
      const auto kind = o.at("kind").get<std::string>();
      if (kind == "native") {
        d.origin = FeatureOrigin::native();
      } else if (kind == "nominal") {
        d.origin = FeatureOrigin::nominal(o.at("parent").get<std::string>(),
                                          o.at("level").get<std::string>());
      } else if (kind == "ordinal") {
        d.origin = FeatureOrigin::ordinal(o.at("parent").get<std::string>());
      } else {
        throw Error(ErrorCode::FormatError, "unknown origin kind '" + kind + "'");
      }
    }
    return d;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::FormatError, std::string("malformed feature record: ") + e.what());
  }
}

bool tensor_exists(const fs::path& dir) { return fs::exists(dir / kRegistryFile); }

void save_tensor(const FeatureTensor& tensor, const fs::path& dir) {
  fs::create_directories(dir);
  json registry;
  registry["format"] = "typodist-tensor/1";
  registry["languages"] = json::array();
  for (const auto& r : tensor.languages()) registry["languages"].push_back(to_json(r));
  registry["features"] = json::array();
  for (const auto& d : tensor.features()) registry["features"].push_back(to_json(d));
  registry["sources"] = json::array();

  std::set<std::string> used;
  std::vector<std::ofstream> outs;
  for (const auto& src : tensor.sources()) {
    const auto file = file_stem_for(src, used);
    registry["sources"].push_back(json{{"name", src}, {"file", file}});
    outs.emplace_back(dir / file, std::ios::trunc);
    if (!outs.back()) throw Error(ErrorCode::InvalidArgument, "cannot write " + (dir / file).string());
    csv::write_row(outs.back(), {"language", "feature", "value"});
  }
  tensor.for_each_cell([&](std::size_t l, std::size_t f, std::size_t s, double v) {
    csv::write_row(outs[s], {tensor.languages()[l].glottocode, tensor.features()[f].name,
                             csv::format_number(v)});
  });

  std::ofstream reg(dir / kRegistryFile, std::ios::trunc);
  if (!reg) throw Error(ErrorCode::InvalidArgument, "cannot write " + (dir / kRegistryFile).string());
  reg << registry.dump(2) << '\n';
}

FeatureTensor load_tensor(const fs::path& dir) {
  const auto reg_path = dir / kRegistryFile;
  std::ifstream reg(reg_path);
  if (!reg) throw Error(ErrorCode::InvalidArgument, "no tensor at " + dir.string());
  json registry;
  try {
    registry = json::parse(reg);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::FormatError, reg_path.string() + ": " + e.what());
  }

  FeatureTensor tensor;
  Batch meta;
  for (const auto& j : registry.value("languages", json::array())) {
    meta.languages.push_back(language_from_json(j));
  }
  for (const auto& j : registry.value("features", json::array())) {
    meta.features.push_back(feature_from_json(j));
  }
  tensor.extend(meta);

  for (const auto& j : registry.value("sources", json::array())) {
    const auto name = j.at("name").get<std::string>();
    const auto file = dir / j.at("file").get<std::string>();
    const std::size_t s = tensor.register_source(name);
    std::ifstream in(file);
    if (!in) throw Error(ErrorCode::FormatError, "missing source file " + file.string());
    const auto origin = file.string();
    for (const auto& row : csv::read_table(in, origin, {"language", "feature", "value"})) {
      auto l = tensor.find_language(row.fields[0]);
      if (!l) csv::fail(origin, row.line, "unregistered language '" + row.fields[0] + "'");
      auto f = tensor.find_feature(row.fields[1]);
      if (!f) csv::fail(origin, row.line, "unregistered feature '" + row.fields[1] + "'");
      auto v = csv::parse_unit_value(row.fields[2], origin, row.line);
      if (!v) continue;
      try {
        tensor.set_cell(*l, *f, s, *v);
      } catch (const Error& e) {
        csv::fail(origin, row.line, e.what());
      }
    }
  }
  return tensor;
}

}  // namespace typodist
