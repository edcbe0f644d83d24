#pragma once

#include <compare>
#include <cstdint>
#include <string>
#include <utility>

#include "threatnet/error.hpp"

namespace threatnet {

using Tick = std::int64_t;
using EntityId = std::string;

/// Unordered entity pair stored canonically (first < second).
class EntityPair {
 public:
  EntityPair() = default;
  EntityPair(EntityId a, EntityId b) {
    if (a == b) throw Error(ErrorCode::InvalidArgument, "self-loop pair '" + a + "'");
    if (b < a) std::swap(a, b);
    first_ = std::move(a);
    second_ = std::move(b);
  }

  const EntityId& first() const noexcept { return first_; }
  const EntityId& second() const noexcept { return second_; }

  bool contains(const EntityId& e) const noexcept { return e == first_ || e == second_; }
  const EntityId& other(const EntityId& e) const { return e == first_ ? second_ : first_; }

  std::string label() const { return first_ + "~" + second_; }

  auto operator<=>(const EntityPair&) const = default;
  bool operator==(const EntityPair&) const = default;

 private:
  EntityId first_;
  EntityId second_;
};

}  // namespace threatnet
