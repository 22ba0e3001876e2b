#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "bifrost/errors.hpp"
#include "bifrost/symbols.hpp"

namespace bifrost {

/// Number of positions at which two equal-length strings differ.
inline std::uint64_t hamming(const SymbolString& a, const SymbolString& b) {
  if (a.size() != b.size() || a.width() != b.width())
    throw LengthMismatchError("hamming requires equal length and width");
  std::uint64_t d = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i] != b[i]) ++d;
  return d;
}

/// One edit applied to a base string. Positions always refer to the base:
/// ops in a script touch disjoint positions, so application order does not
/// change the result (scripts are stored left-to-right for determinism).
struct EditOp {
  enum class Kind : std::uint8_t { change_value = 0, adjacent_swap = 1 };
  Kind kind = Kind::change_value;
  std::uint32_t pos = 0;
  Symbol value = 0;  // used by change_value only

  friend bool operator==(const EditOp&, const EditOp&) = default;
};

inline SymbolString apply_edits(SymbolString base, std::span<const EditOp> ops) {
  for (const EditOp& op : ops) {
    switch (op.kind) {
      case EditOp::Kind::change_value:
        if (op.pos >= base.size()) throw InvalidArgumentError("change_value position out of range");
        base[op.pos] = op.value;
        break;
      case EditOp::Kind::adjacent_swap:
        if (op.pos + 1 >= base.size()) throw InvalidArgumentError("adjacent_swap position out of range");
        std::swap(base[op.pos], base[op.pos + 1]);
        break;
      default:
        throw InvalidArgumentError("unknown edit op");
    }
  }
  return base;
}

namespace detail {

// Shared recurrence for the swap/change distance. Substitution costs 1;
// transposing positions i-1,i costs 1 and applies when a[i-1]=b[i] and
// a[i]=b[i-1]. Each position is edited at most once, which keeps the
// minimization a linear dynamic program.
//
// Returns nullopt once the distance provably exceeds `limit`.
inline std::optional<std::uint64_t> swap_change_dp(const SymbolString& a, const SymbolString& b,
                                                   std::uint64_t limit,
                                                   std::vector<std::uint64_t>* table) {
  if (a.size() != b.size())
    throw LengthMismatchError("swap_change_distance requires equal lengths");
  const std::size_t n = a.size();
  if (table) table->assign(n + 1, 0);

  std::uint64_t prev2 = 0;  // D[i-2]
  std::uint64_t prev1 = 0;  // D[i-1]
  for (std::size_t i = 1; i <= n; ++i) {
    std::uint64_t d = prev1 + (a[i - 1] != b[i - 1] ? 1 : 0);
    if (i >= 2 && a[i - 1] == b[i - 2] && a[i - 2] == b[i - 1])
      d = std::min(d, prev2 + 1);
    if (table) (*table)[i] = d;
    prev2 = prev1;
    prev1 = d;
    // Later entries never drop below min(D[i-1], D[i-2]).
    if (std::min(prev1, prev2) > limit) return std::nullopt;
  }
  return prev1;
}

}  // namespace detail

/// Minimum number of substitutions and adjacent transpositions turning a
/// into b, each position edited at most once.
inline std::uint64_t swap_change_distance(const SymbolString& a, const SymbolString& b) {
  return *detail::swap_change_dp(a, b, UINT64_MAX, nullptr);
}

/// Cutoff variant used by the dedup matcher: nullopt means "greater than
/// limit", computed without filling in the full table.
inline std::optional<std::uint64_t> swap_change_distance_bounded(const SymbolString& a,
                                                                 const SymbolString& b,
                                                                 std::uint64_t limit) {
  return detail::swap_change_dp(a, b, limit, nullptr);
}

/// Minimal edit script realizing swap_change_distance(a, b), ordered
/// left-to-right by position. Ties prefer substitution over transposition,
/// so the script is unique and deterministic.
inline std::vector<EditOp> swap_change_script(const SymbolString& a, const SymbolString& b) {
  std::vector<std::uint64_t> table;
  detail::swap_change_dp(a, b, UINT64_MAX, &table);

  std::vector<EditOp> ops;
  std::size_t i = a.size();
  while (i > 0) {
    std::uint64_t sub_cost = table[i - 1] + (a[i - 1] != b[i - 1] ? 1 : 0);
    if (sub_cost == table[i]) {
      if (a[i - 1] != b[i - 1])
        ops.push_back({EditOp::Kind::change_value, static_cast<std::uint32_t>(i - 1), b[i - 1]});
      --i;
    } else {
      ops.push_back({EditOp::Kind::adjacent_swap, static_cast<std::uint32_t>(i - 2), 0});
      i -= 2;
    }
  }
  std::reverse(ops.begin(), ops.end());
  return ops;
}

/// Optimal-string-alignment edit distance: insert, delete, substitute and
/// adjacent transposition, unit cost each, no substring edited twice.
/// Lengths may differ.
inline std::uint64_t damerau_levenshtein(const SymbolString& a, const SymbolString& b) {
  const std::size_t m = a.size();
  const std::size_t n = b.size();
  if (m == 0) return n;
  if (n == 0) return m;

  // Three rolling rows of the (m+1) x (n+1) table.
  std::vector<std::uint64_t> row0(n + 1), row1(n + 1), row2(n + 1);
  for (std::size_t j = 0; j <= n; ++j) row1[j] = j;

  for (std::size_t i = 1; i <= m; ++i) {
    row2[0] = i;
    for (std::size_t j = 1; j <= n; ++j) {
      std::uint64_t best = std::min(row1[j] + 1, row2[j - 1] + 1);  // delete / insert
      best = std::min(best, row1[j - 1] + (a[i - 1] != b[j - 1] ? 1 : 0));
      if (i >= 2 && j >= 2 && a[i - 1] == b[j - 2] && a[i - 2] == b[j - 1])
        best = std::min(best, row0[j - 2] + 1);
      row2[j] = best;
    }
    std::swap(row0, row1);
    std::swap(row1, row2);
  }
  return row1[n];
}

}  // namespace bifrost
