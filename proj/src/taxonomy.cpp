#include "maskscope/taxonomy.h"

#include <fstream>

#include "json.hpp"

namespace maskscope {

void Taxonomy::validate() const {
  if (things.empty() && stuff.empty()) throw ValidationError("taxonomy: no known classes");
  for (std::uint16_t id : things) {
    if (stuff.count(id)) {
      throw ValidationError("taxonomy: class " + std::to_string(id) + " is both thing and stuff");
    }
  }
  if (!is_known(road)) throw ValidationError("taxonomy: road id must be a known class");
  if (is_known(void_id)) throw ValidationError("taxonomy: void id collides with a known class");
  if (is_known(unknown_id)) {
    throw ValidationError("taxonomy: unknown id collides with a known class");
  }
  // Known ids index class-score columns directly, so they must be contiguous.
  const std::size_t z = num_known();
  for (std::size_t id = 0; id < z; ++id) {
    if (!is_known(static_cast<std::uint16_t>(id))) {
      throw ValidationError("taxonomy: known class ids must be exactly 0.." + std::to_string(z - 1));
    }
  }
}

Taxonomy load_taxonomy(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("taxonomy: cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("taxonomy: invalid JSON in " + path + ": " + e.what());
  }
  Taxonomy tax;
  try {
    for (const auto& v : j.at("things")) tax.things.insert(v.get<std::uint16_t>());
    for (const auto& v : j.at("stuff")) tax.stuff.insert(v.get<std::uint16_t>());
    tax.road = j.at("road").get<std::uint16_t>();
    tax.void_id = j.value("void", kVoidLabel);
    tax.unknown_id = j.value("unknown_id", static_cast<std::uint16_t>(tax.num_known()));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("taxonomy: missing or malformed field in " + path + ": " + e.what());
  }
  tax.validate();
  return tax;
}

}  // namespace maskscope
