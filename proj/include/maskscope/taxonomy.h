#pragma once

#include <cstdint>
#include <set>
#include <string>

#include "maskscope/types.h"

namespace maskscope {

// Partition of the known class ids into countable "things" and amorphous
// "stuff", with the road id singled out and sentinels for void and the
// reserved unknown class. Known ids must be exactly 0..Z-1.
struct Taxonomy {
  std::set<std::uint16_t> things;
  std::set<std::uint16_t> stuff;
  std::uint16_t road = 0;
  std::uint16_t void_id = kVoidLabel;
  std::uint16_t unknown_id = 0;

  std::size_t num_known() const { return things.size() + stuff.size(); }
  bool is_thing(std::uint16_t id) const { return things.count(id) > 0; }
  bool is_stuff(std::uint16_t id) const { return stuff.count(id) > 0; }
  bool is_known(std::uint16_t id) const { return is_thing(id) || is_stuff(id); }

  void validate() const;
};

Taxonomy load_taxonomy(const std::string& path);

}  // namespace maskscope
