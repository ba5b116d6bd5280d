#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>

namespace pcbr {

/// Dense handle for an entity; contiguous 0..|V|-1 within a graph.
struct EntityId {
  std::uint32_t value = 0;

  constexpr EntityId() = default;
  constexpr explicit EntityId(std::uint32_t v) : value(v) {}
  constexpr auto operator<=>(const EntityId&) const = default;
};

/// Dense handle for a relation. Base relations take even ids and their
/// inverses the following odd id, so inversion is `value ^ 1`.
struct RelationId {
  std::uint32_t value = 0;

  constexpr RelationId() = default;
  constexpr explicit RelationId(std::uint32_t v) : value(v) {}
  constexpr auto operator<=>(const RelationId&) const = default;

  [[nodiscard]] constexpr bool is_inverse() const { return (value & 1U) != 0; }
  [[nodiscard]] constexpr RelationId inverse() const { return RelationId{value ^ 1U}; }
};

/// A flat cluster is named by its smallest member entity.
struct ClusterId {
  std::uint32_t value = 0;

  constexpr ClusterId() = default;
  constexpr explicit ClusterId(std::uint32_t v) : value(v) {}
  constexpr auto operator<=>(const ClusterId&) const = default;
};

inline constexpr std::uint32_t kInvalidIndex = std::numeric_limits<std::uint32_t>::max();

struct Triple {
  EntityId head;
  RelationId rel;
  EntityId tail;

  constexpr auto operator<=>(const Triple&) const = default;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& file, std::size_t line, const std::string& what)
      : std::runtime_error(file + ":" + std::to_string(line) + ": " + what), line_(line) {}

  [[nodiscard]] std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class LookupError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

class PreconditionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace pcbr

template <>
struct std::hash<pcbr::EntityId> {
  std::size_t operator()(pcbr::EntityId e) const noexcept { return std::hash<std::uint32_t>{}(e.value); }
};

template <>
struct std::hash<pcbr::RelationId> {
  std::size_t operator()(pcbr::RelationId r) const noexcept { return std::hash<std::uint32_t>{}(r.value); }
};

template <>
struct std::hash<pcbr::ClusterId> {
  std::size_t operator()(pcbr::ClusterId c) const noexcept { return std::hash<std::uint32_t>{}(c.value); }
};
