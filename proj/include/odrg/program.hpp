#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace odrg {

struct DataBlock {
  uint32_t addr = 0;
  std::vector<uint32_t> words;

  bool operator==(const DataBlock&) const = default;
};

struct AddressRange {
  uint32_t begin = 0;
  uint32_t end = 0;  // exclusive

  bool contains(uint32_t a) const { return a >= begin && a < end; }
  bool overlaps(const AddressRange& o) const { return begin < o.end && o.begin < end; }
  bool operator==(const AddressRange&) const = default;
};

// A loadable cluster program: instruction words for the instruction memory
// plus TCDM contents written by the host before boot.
struct ProgramImage {
  std::vector<uint32_t> words;
  uint32_t load_addr = 0;
  uint32_t entry = 0;
  std::vector<DataBlock> data_init;
  std::vector<DataBlock> expected;  // host-side reference for the output region
  std::map<std::string, uint32_t> symbols;

  // Upper bound on participating harts; the host programs the active count
  // as min(max_harts, logical harts of the boot mode).
  uint32_t max_harts = 6;
  // Per-hart runtime stacks. Excluded when final TCDM contents are compared.
  AddressRange stack_region{};

  uint32_t data_words() const {
    uint32_t n = 0;
    for (const auto& b : data_init) n += static_cast<uint32_t>(b.words.size());
    return n;
  }
};

}  // namespace odrg
