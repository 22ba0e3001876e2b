// Walks one chunk through the deletion transform and back, printing every
// intermediate value. Build and run:
//   ./build/demos/transform_walkthrough

#include <cstdio>

#include "bifrost/transform.hpp"

using namespace bifrost;

namespace {

void print_symbols(const char* label, const SymbolString& s) {
  std::printf("%-12s", label);
  for (Symbol v : s) std::printf(" %2u", static_cast<unsigned>(v));
  std::printf("\n");
}

}  // namespace

int main() {
  SymbolString chunk = SymbolString::from_values({4, 1, 10, 11, 8, 6, 1, 9, 14, 15}, 4);
  Bytes seed{0x00, 0x00, 0x00, 0x2a};

  print_symbols("chunk", chunk);

  auto positions = derive_positions(seed, static_cast<std::uint32_t>(chunk.size()), 2);
  std::printf("%-12s %u %u  (seed %s)\n", "deletions", positions[0], positions[1],
              to_hex(seed).c_str());

  auto [piece, deviation] = delete_transform(chunk, seed, 2);
  print_symbols("outsourced", piece.base);
  std::printf("%-12s", "deviation");
  for (Symbol v : deviation.deleted_values) std::printf(" %2u", static_cast<unsigned>(v));
  std::printf("  (%llu plaintext bits)\n",
              static_cast<unsigned long long>(deviation.plain_bits(chunk.width())));

  SymbolString restored = reinsert(piece, deviation, static_cast<std::uint32_t>(chunk.size()));
  print_symbols("restored", restored);
  std::printf("roundtrip %s\n", restored == chunk ? "exact" : "BROKEN");
  return restored == chunk ? 0 : 1;
}
