#include "shadowlab/fixtures.hpp"

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "shadowlab/errors.hpp"

namespace shadowlab {
namespace {

using nlohmann::json;

double number_at(const json& j, const char* key) {
  if (!j.contains(key) || !j.at(key).is_number()) {
    throw ModelError(std::string("fixture: missing numeric entry \"") + key + "\"");
  }
  return j.at(key).get<double>();
}

Vec vec_from_json(const json& j, const char* key) {
  if (!j.contains(key) || !j.at(key).is_array()) {
    throw ModelError(std::string("fixture: missing array entry \"") + key + "\"");
  }
  const auto& arr = j.at(key);
  Vec v(static_cast<int>(arr.size()));
  for (int i = 0; i < v.size(); ++i) {
    if (!arr[i].is_number()) {
      throw ModelError(std::string("fixture: entry \"") + key + "\" has a non-numeric element");
    }
    v(i) = arr[i].get<double>();
  }
  return v;
}

Mat mat_from_json(const json& j, const char* key) {
  if (!j.contains(key) || !j.at(key).is_array() || j.at(key).empty()) {
    throw ModelError(std::string("fixture: missing matrix entry \"") + key + "\"");
  }
  const auto& rows = j.at(key);
  const auto cols = rows[0].is_array() ? rows[0].size() : 0;
  if (cols == 0) {
    throw ModelError(std::string("fixture: matrix \"") + key + "\" has an empty row");
  }
  Mat m(static_cast<int>(rows.size()), static_cast<int>(cols));
  for (int r = 0; r < m.rows(); ++r) {
    if (!rows[r].is_array() || rows[r].size() != cols) {
      throw ModelError(std::string("fixture: matrix \"") + key + "\" rows have unequal lengths");
    }
    for (int c = 0; c < m.cols(); ++c) {
      m(r, c) = rows[r][c].get<double>();
    }
  }
  return m;
}

HyperbolicPointSpec point_from_json(const json& j, const char* key) {
  if (!j.contains(key) || !j.at(key).is_object()) {
    throw ModelError(std::string("fixture: missing rest point entry \"") + key + "\"");
  }
  const auto& pt = j.at(key);
  HyperbolicPointSpec spec;
  if (pt.contains("stable")) spec.stable = field_from_json(pt.at("stable"));
  if (pt.contains("unstable")) spec.unstable = field_from_json(pt.at("unstable"));
  return spec;
}

json point_to_json(const HyperbolicPointSpec& spec) {
  json pt = json::object();
  pt["stable"] = field_to_json(spec.stable);
  pt["unstable"] = field_to_json(spec.unstable);
  return pt;
}

}  // namespace

Block block_from_json(const json& j) {
  if (!j.is_object() || !j.contains("type") || !j.at("type").is_string()) {
    throw ModelError("fixture: block entry lacks a \"type\" string");
  }
  const std::string type = j.at("type").get<std::string>();
  if (type == "real") return Block::real(number_at(j, "rate"));
  if (type == "spiral") return Block::spiral(number_at(j, "a"), number_at(j, "b"));
  throw ModelError("fixture: unknown block type \"" + type + "\"");
}

json block_to_json(const Block& b) {
  if (b.kind == Block::Kind::Real1D) {
    return json{{"type", "real"}, {"rate", b.rate}};
  }
  return json{{"type", "spiral"}, {"a", b.rate}, {"b", b.spin}};
}

BlockLinearField field_from_json(const json& j) {
  if (!j.is_array()) {
    throw ModelError("fixture: field entry must be an array of blocks");
  }
  std::vector<Block> blocks;
  blocks.reserve(j.size());
  for (const auto& entry : j) blocks.push_back(block_from_json(entry));
  return BlockLinearField(std::move(blocks));
}

json field_to_json(const BlockLinearField& field) {
  json arr = json::array();
  for (const auto& b : field.blocks()) arr.push_back(block_to_json(b));
  return arr;
}

GluedSystemPtr glued_from_json(const json& j) {
  const int n = static_cast<int>(number_at(j, "n"));
  auto q = point_from_json(j, "q");
  auto p = point_from_json(j, "p");
  const Vec a_q = vec_from_json(j, "a_q");
  const double tau = number_at(j, "tau");
  const Mat K = mat_from_json(j, "K");
  const double radius = number_at(j, "chart_radius");
  if (q.stable.dim() + q.unstable.dim() != n || p.stable.dim() + p.unstable.dim() != n) {
    throw ModelError("fixture: declared dimension does not match the block layout");
  }
  return build_glued_system(std::move(q), std::move(p), a_q, tau, K, radius);
}

json glued_to_json(const GluedHeteroclinicSystem& sys) {
  json j = json::object();
  j["n"] = sys.dim();
  j["q"] = point_to_json(sys.q());
  j["p"] = point_to_json(sys.p());
  j["a_q"] = std::vector<double>(sys.a_q().data(), sys.a_q().data() + sys.a_q().size());
  j["tau"] = sys.tau();
  json rows = json::array();
  for (int r = 0; r < sys.K().rows(); ++r) {
    json row = json::array();
    for (int c = 0; c < sys.K().cols(); ++c) row.push_back(sys.K()(r, c));
    rows.push_back(row);
  }
  j["K"] = rows;
  j["chart_radius"] = sys.chart_radius();
  return j;
}

json load_fixture_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ModelError("fixture: cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& err) {
    throw ModelError("fixture: " + path + " is not valid JSON: " + err.what());
  }
  return j;
}

GluedSystemPtr load_glued_system(const std::string& path) {
  return glued_from_json(load_fixture_json(path));
}

BlockLinearField load_field(const std::string& path) {
  const json j = load_fixture_json(path);
  if (!j.contains("field")) {
    throw ModelError("fixture: " + path + " has no \"field\" entry");
  }
  BlockLinearField field = field_from_json(j.at("field"));
  if (j.contains("n") && field.dim() != static_cast<int>(number_at(j, "n"))) {
    throw ModelError("fixture: declared dimension does not match the block layout");
  }
  return field;
}

std::optional<double> fixture_c1(const json& j) {
  if (!j.contains("c1") || !j.at("c1").is_number()) return std::nullopt;
  return j.at("c1").get<double>();
}

}  // namespace shadowlab
