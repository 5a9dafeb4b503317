#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "carrm/lottery.hpp"

namespace carrm {

enum class RuleId : std::uint8_t { MMn, MMa, MMx, MAP, SAL, SAL2, REG, REGmed, DIS, DISmed, A1, A2 };

inline constexpr std::size_t kNumRules = 12;

inline constexpr std::array<RuleId, kNumRules> kAllRules = {
    RuleId::MMn, RuleId::MMa, RuleId::MMx,    RuleId::MAP, RuleId::SAL,    RuleId::SAL2,
    RuleId::REG, RuleId::REGmed, RuleId::DIS, RuleId::DISmed, RuleId::A1, RuleId::A2};

constexpr std::size_t index_of(RuleId r) noexcept { return static_cast<std::size_t>(r); }
std::string_view rule_name(RuleId r) noexcept;
std::optional<RuleId> parse_rule(std::string_view name) noexcept;
inline bool is_attention(RuleId r) noexcept { return r == RuleId::A1 || r == RuleId::A2; }

/// An ordered subset of the rule set. Order defines parameter indices.
using Library = std::vector<RuleId>;
Library full_library();

struct RuleOutcome {
  bool active = false;
  bool left = false;

  friend bool operator==(const RuleOutcome&, const RuleOutcome&) = default;
};

using RuleRow = std::array<RuleOutcome, kNumRules>;

/// Any negative epsilon selects the all-active discipline: every rule is
/// active and recommends left only when standard FSD ranks left strictly.
inline constexpr double kAllActive = -1.0;

RuleOutcome evaluate_rule(RuleId rule, const Menu& menu, double epsilon, double big_M);
RuleRow evaluate_rules(const Menu& menu, double epsilon, double big_M);

/// 10 * max|payoff| + 1 over all menus.
double big_m_for(std::span<const Menu> menus);

class RuleMatrix {
 public:
  RuleMatrix() = default;
  RuleMatrix(std::vector<std::string> ids, std::vector<RuleRow> rows, double epsilon, double big_M);

  std::size_t size() const noexcept { return rows_.size(); }
  const std::vector<std::string>& ids() const noexcept { return ids_; }
  const RuleRow& row(std::size_t t) const { return rows_[t]; }
  RuleRow& row(std::size_t t) { return rows_[t]; }
  const RuleOutcome& at(std::size_t t, RuleId r) const { return rows_[t][index_of(r)]; }
  double epsilon() const noexcept { return epsilon_; }
  double big_M() const noexcept { return big_M_; }

  /// Number of menus on which each rule is active.
  std::array<std::size_t, kNumRules> activity_counts() const;

  std::string to_csv() const;
  static RuleMatrix from_csv(std::string_view text, double epsilon, double big_M);

  friend bool operator==(const RuleMatrix&, const RuleMatrix&) = default;

 private:
  std::vector<std::string> ids_;
  std::vector<RuleRow> rows_;
  double epsilon_ = 0.0;
  double big_M_ = 0.0;
};

RuleMatrix build_rule_matrix(std::span<const Menu> menus, double epsilon = 0.0, int threads = 1);

/// Within support-size strata, independently permutes each non-attention
/// rule's (active, left) pairs across menus.
RuleMatrix placebo_permute(const RuleMatrix& matrix, std::span<const Menu> menus, int strata,
                           std::uint64_t seed);

}  // namespace carrm
